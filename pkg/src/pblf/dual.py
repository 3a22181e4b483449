"""Forward-mode differentiation with (possibly nested) dual numbers.

A :class:`Dual` carries a value and one directional derivative. Components may
themselves be ``Dual`` instances, which gives higher-order derivatives by
nesting. Nesting is only sound when every input of an inner differentiation is
lifted to the inner level; never mix a bare outer-level dual into an inner
computation (perturbation confusion).
"""

import math


class Dual:
    __slots__ = ("re", "du")

    def __init__(self, re, du=0.0):
        self.re = re
        self.du = du

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"

    def __float__(self):
        return float(real(self))

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.du + other.du)
        return Dual(self.re + other, self.du)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.du - other.du)
        return Dual(self.re - other, self.du)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re)
        return Dual(self.re * other, self.du * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.re / other.re
            return Dual(q, (self.du - q * other.du) / other.re)
        return Dual(self.re / other, self.du / other)

    def __rtruediv__(self, other):
        q = other / self.re
        return Dual(q, -q * self.du / self.re)

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        if n == 2:
            return self * self
        return Dual(self.re**n, n * self.re ** (n - 1) * self.du)

    def __abs__(self):
        return -self if real(self) < 0.0 else self

    # comparisons look only at the underlying real value
    def __lt__(self, other):
        return real(self) < real(other)

    def __le__(self, other):
        return real(self) <= real(other)

    def __gt__(self, other):
        return real(self) > real(other)

    def __ge__(self, other):
        return real(self) >= real(other)


def real(x):
    """Strip every dual level and return the plain float value."""
    while isinstance(x, Dual):
        x = x.re
    return x


def tangent(x):
    """Outermost derivative part of ``x`` (0.0 for plain numbers)."""
    return x.du if isinstance(x, Dual) else 0.0


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.du)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.du)
    return math.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.du)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.re), x.du / x.re)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.re)
        return Dual(s, x.du / (2.0 * s))
    return math.sqrt(x)


def derivative(f, x0):
    """d f / d x at ``x0`` for a scalar function written over duals."""
    return tangent(f(Dual(x0, 1.0)))
