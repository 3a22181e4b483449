"""Experiment configuration, built-in presets and run helpers shared by the CLI.

A configuration is a flat JSON document tagged with ``SCHEMA``. Presets are
ordinary configurations; ``--set key=value`` overrides are applied on top.
"""

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import barrier as bl
from . import verify as vf
from .controller import Controller, ControllerConfig, Coupling, Design, derived_error_bound
from .errors import ConfigError, DomainError, InadmissibleInitialCondition
from .plant import check_assumption1, make_plant, make_reference
from .sim import IntegratorConfig, TrajectoryRecord, simulate_x_space, simulate_z_space, tail_mask

SCHEMA = "pblf.experiment/1"
MODES = ("x-space", "z-space", "both")
K1_MODES = ("direct", "derived")


@dataclass
class ExperimentConfig:
    preset: Optional[str] = None
    design: str = "output-constrained"
    plant: str = "paper-2nd-order"
    reference: str = "benchmark-sine"
    kappa: list = field(default_factory=lambda: [2.0, 2.0])
    barrier_kind: Optional[str] = None
    beta: float = 10.0
    k: list = field(default_factory=lambda: [0.56])
    k1_mode: str = "direct"
    constraint_box: list = field(default_factory=lambda: [0.56, None])
    x0: list = field(default_factory=lambda: [0.25, 1.5])
    z0: Optional[list] = None
    method: str = "RK4"
    h: float = 1e-3
    t_final: float = 30.0
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    stride: int = 1
    mode: str = "x-space"
    coupling: str = "lyapunov"
    schema: str = SCHEMA

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        schema = data.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @property
    def kind(self) -> bl.BarrierKind:
        if self.barrier_kind is not None:
            return bl.BarrierKind.parse(self.barrier_kind)
        if Design.parse(self.design) is Design.SECOND_ORDER_RATIONAL:
            return bl.BarrierKind.RATIONAL_PBLF
        return bl.BarrierKind.LOG_PBLF


PRESETS = {
    "paper-output-constrained": ExperimentConfig(preset="paper-output-constrained"),
    "paper-full-state": ExperimentConfig(
        preset="paper-full-state",
        design="full-state",
        k=[0.56, 2.0],
        constraint_box=[0.56, None],
        h=2.5e-4,
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def _floats(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(None if part.lower() in ("none", "null", "") else float(part))
    return out


def _index_setter(name, idx):
    def setter(cfg, text):
        seq = list(getattr(cfg, name))
        while len(seq) <= idx:
            seq.append(None)
        seq[idx] = float(text)
        setattr(cfg, name, seq)
    return setter


_SETTERS = {
    "x0": lambda c, v: setattr(c, "x0", _floats(v)),
    "z0": lambda c, v: setattr(c, "z0", _floats(v)),
    "kappa": lambda c, v: setattr(c, "kappa", _floats(v)),
    "k": lambda c, v: setattr(c, "k", _floats(v)),
    "constraint_box": lambda c, v: setattr(c, "constraint_box", _floats(v)),
    "kappa1": _index_setter("kappa", 0),
    "kappa2": _index_setter("kappa", 1),
    "k1": _index_setter("k", 0),
    "k2": _index_setter("k", 1),
    "k_x1": _index_setter("constraint_box", 0),
    "k_x2": _index_setter("constraint_box", 1),
    "beta": lambda c, v: setattr(c, "beta", float(v)),
    "h": lambda c, v: setattr(c, "h", float(v)),
    "t_final": lambda c, v: setattr(c, "t_final", float(v)),
    "abs_tol": lambda c, v: setattr(c, "abs_tol", float(v)),
    "rel_tol": lambda c, v: setattr(c, "rel_tol", float(v)),
    "stride": lambda c, v: setattr(c, "stride", int(v)),
}
for _name in ("design", "plant", "reference", "method", "mode", "coupling", "barrier_kind", "k1_mode"):
    _SETTERS[_name] = (lambda n: lambda c, v: setattr(c, n, v))(_name)


def apply_overrides(cfg: ExperimentConfig, items) -> ExperimentConfig:
    """Apply ``key=value`` strings; returns a new config."""
    cfg = copy.deepcopy(cfg)
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        if key not in _SETTERS:
            raise ConfigError(f"unknown override key {key!r}; known: {', '.join(sorted(_SETTERS))}")
        try:
            _SETTERS[key](cfg, value.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return cfg


@dataclass
class Built:
    config: ExperimentConfig
    controller: Controller
    integ: IntegratorConfig


def build(cfg: ExperimentConfig) -> Built:
    """Validate ``cfg`` and construct the controller and integrator settings."""
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    model = make_plant(cfg.plant)
    ref = make_reference(cfg.reference)
    design = Design.parse(cfg.design)
    n = model.n
    if cfg.k1_mode not in K1_MODES:
        raise ConfigError(f"k1_mode must be one of {K1_MODES}, got {cfg.k1_mode!r}")
    ks = list(cfg.k)
    if cfg.k1_mode == "derived":
        if not cfg.constraint_box or cfg.constraint_box[0] is None:
            raise ConfigError("derived k1 needs k_x1 in the constraint box")
        ks[:1] = [derived_error_bound(cfg.constraint_box[0], ref.bound(0))]
    if design is Design.FULL_STATE:
        if len(ks) != n or any(v is None for v in ks):
            raise ConfigError(f"full-state design needs {n} barrier half-widths k")
    else:
        if not ks or ks[0] is None:
            raise ConfigError("k1 is required")
        ks = ks[:1]
    barriers = tuple(bl.BarrierParams(cfg.kind, k, cfg.beta) for k in ks)
    box = list(cfg.constraint_box) + [None] * (n - len(cfg.constraint_box))
    ccfg = ControllerConfig(design, tuple(cfg.kappa), barriers, tuple(box[:n]), Coupling(cfg.coupling))
    if len(cfg.x0) != n or any(v is None or not math.isfinite(v) for v in cfg.x0):
        raise ConfigError(f"x0 needs {n} finite entries")
    if cfg.z0 is not None and len(cfg.z0) != n:
        raise ConfigError(f"z0 needs {n} entries")
    integ = IntegratorConfig(cfg.method, cfg.h, cfg.t_final, cfg.abs_tol, cfg.rel_tol, cfg.stride)
    return Built(cfg, Controller(ccfg, model, ref), integ)


def initial_errors(built: Built) -> list:
    cfg = built.config
    if cfg.z0 is not None:
        return [float(v) for v in cfg.z0]
    try:
        return list(built.controller.errors(cfg.x0, 0.0).z)
    except DomainError as exc:
        raise InadmissibleInitialCondition(str(exc), channel=exc.channel) from exc


def run(built: Built, mode: Optional[str] = None) -> dict:
    """Run the requested simulation(s); returns ``{"x": rec, "z": rec}`` subsets."""
    mode = mode or built.config.mode
    meta = {"experiment": built.config.to_dict()}
    out = {}
    if mode in ("x-space", "both"):
        out["x"] = simulate_x_space(built.controller, built.config.x0, built.integ, metadata=meta)
    if mode in ("z-space", "both"):
        out["z"] = simulate_z_space(built.controller, initial_errors(built), built.integ, metadata=meta)
    return out


def csv_header(n: int) -> list:
    return (
        ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"z{i}" for i in range(1, n + 1)]
        + [f"alpha{i}" for i in range(1, n)] + ["u", "V", "Vdot_analytic"]
    )


def write_csv(rec: TrajectoryRecord, path) -> None:
    """Write the trajectory with 17 significant digits (locale-independent)."""
    cols = np.column_stack([rec.t, rec.x, rec.z, rec.alpha, rec.u, rec.V, rec.vdot_analytic])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(csv_header(rec.n)) + "\n")
        for row in cols.tolist():
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def error_bounds(built: Built, V0: float, z0) -> dict:
    """Invariant-set bounds on each error channel implied by ``V(t) <= V(0)``."""
    c = built.controller
    design = c.config.design
    b1 = c.channels[0]
    if design is Design.FULL_STATE:
        k = [b.k for b in c.channels]
        return {
            "proof-consistent": vf.theorem2_bound(z0, k, b1.beta, vf.PROOF_CONSISTENT),
            "printed": vf.theorem2_bound(z0, k, b1.beta, vf.PRINTED),
        }
    if b1.kind is bl.BarrierKind.LOG_PBLF:
        D1 = vf.theorem1_bound(V0, b1.beta, b1.k)
    else:
        D1 = vf.level_set_bound(b1, V0)
    return {"channel-1": [D1] + [None] * (c.n - 1)}


def verification(built: Built, records: dict, gradient_samples: int = 100) -> vf.VerificationReport:
    """Every applicable check on the given records (``"x"`` and/or ``"z"``)."""
    c = built.controller
    cfg = built.config
    report = vf.VerificationReport()
    report.add(vf.check_reference(check_assumption1(c.ref, cfg.t_final, 3001)))
    params = [bl.BarrierParams(kind, c.channels[0].k, c.channels[0].beta) for kind in bl.BarrierKind]
    report.add(vf.gradient_audit(params, gradient_samples))

    log_rate = not (c.config.design is Design.SECOND_ORDER_RATIONAL or c.config.coupling is Coupling.PRINTED)
    full = c.config.design is Design.FULL_STATE
    for tag, rec in records.items():
        z0 = [float(v) for v in rec.z[0]]
        V0 = float(rec.V[0])
        bounds = error_bounds(built, V0, z0)
        for name, vals in bounds.items():
            report.bounds[f"{tag}-space {name}"] = vals
        key = "proof-consistent" if full else "channel-1"
        checks = [
            vf.check_bounds(rec, bounds[key]),
            vf.check_barrier_invariance(rec, [None if b is None else b.k for b in c.channels]),
            vf.check_constraints(rec, c.config.constraint_box),
            vf.check_vdot(rec, c.config.kappa if log_rate else None),
            vf.check_monotone(rec),
            vf.check_convergence(rec, channels=range(1, c.n + 1) if full else (1,)),
        ]
        if not full:
            checks.append(vf.check_quadratic_bound(rec, V0))
        for chk in checks:
            chk.name = f"{tag}-space {chk.name}"
            report.add(chk)
    if "x" in records and "z" in records:
        report.add(vf.check_cross_simulation(records["x"], records["z"]))
    return report


def tail_error(rec: TrajectoryRecord, ref: TrajectoryRecord, tail_fraction: float = 0.2) -> float:
    """Sup of ``|z1 - z1_ref|`` over the tail window on the shared sample grid."""
    if rec.t.shape != ref.t.shape or not np.allclose(rec.t, ref.t, rtol=0, atol=1e-9):
        raise ValueError("records are not on the same sample grid")
    mask = tail_mask(rec.t, tail_fraction)
    return float(np.max(np.abs(rec.z[mask, 0] - ref.z[mask, 0])))


def stride_for(h: float, spacing: float) -> int:
    """Recording stride that puts samples every ``spacing`` seconds."""
    s = spacing / h
    r = round(s)
    if r < 1 or abs(s - r) > 1e-6 * s:
        raise ConfigError(f"sample spacing {spacing:g} is not a multiple of h={h:g}")
    return int(r)
