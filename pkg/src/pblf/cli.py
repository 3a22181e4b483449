"""Command-line entry point: ``pblf simulate|verify|compare|sweep``.

Exit codes: 0 success, 1 failed verification check, 2 barrier breach or
inadmissible initial condition, 3 configuration error.
"""

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import barrier as bl
from . import experiment as ex
from . import svgplot
from .controller import Design
from .errors import (
    ConfigError,
    ConstraintBreach,
    InadmissibleInitialCondition,
    NonFiniteState,
)
from .sim import metrics


EXIT_OK, EXIT_VERIFY, EXIT_BREACH, EXIT_CONFIG = 0, 1, 2, 3
SWEEP_PARAMS = ("beta", "kappa1", "kappa2", "h")
COMPARE_DEFAULT = "StandardLog,LogPBLF,RationalPBLF"


def _config(args) -> ex.ExperimentConfig:
    if args.config:
        cfg = ex.load_config(args.config)
    else:
        cfg = ex.preset(args.preset or "paper-output-constrained")
    return ex.apply_overrides(cfg, args.set)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("PBLF_OUT") or "pblf-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _summary_text(rec) -> str:
    return "\n".join(f"{k:<20} {v:.10g}" for k, v in metrics(rec).as_dict().items())


def cmd_simulate(args) -> int:
    built = ex.build(_config(args))
    out = _out_dir(args)
    records = ex.run(built)
    primary = records.get("x", records.get("z"))
    ex.write_csv(primary, out / "trajectory.csv")
    if "x" in records and "z" in records:
        ex.write_csv(records["z"], out / "trajectory_z.csv")
    report = ex.verification(built, records)
    k_x1 = built.controller.config.constraint_box[0]
    for name, svg in svgplot.trajectory_figures(primary, k_x1).items():
        svgplot.write(out / name, svg)
    text = f"{_summary_text(primary)}\n\n{report.to_text()}\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    _write_json(out / "report.json", {
        "config": built.config.to_dict(),
        "metrics": metrics(primary).as_dict(),
        **report.to_dict(),
    })
    print(text, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    built = ex.build(_config(args))
    out = _out_dir(args)
    records = ex.run(built, mode="both")
    report = ex.verification(built, records)
    text = report.to_text() + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    _write_json(out / "report.json", {"config": built.config.to_dict(), **report.to_dict()})
    print(text, end="")
    return EXIT_OK if report.passed else EXIT_VERIFY


def _compare_config(cfg, kind):
    cfg = ex.apply_overrides(cfg, [f"barrier_kind={kind.value}"])
    if kind is bl.BarrierKind.RATIONAL_PBLF:
        cfg.design = Design.SECOND_ORDER_RATIONAL.value
    elif Design.parse(cfg.design) is Design.SECOND_ORDER_RATIONAL:
        cfg.design = Design.OUTPUT_CONSTRAINED.value
    return cfg


def cmd_compare(args) -> int:
    kinds = [bl.BarrierKind.parse(k.strip()) for k in args.kinds.split(",") if k.strip()]
    if len(set(kinds)) < 2:
        raise ConfigError("compare needs at least two distinct barrier kinds")
    base = _config(args)
    builts = [ex.build(_compare_config(base, kind)) for kind in kinds]
    out = _out_dir(args)

    rows, u_series, code = [], [], EXIT_OK
    for kind, built in zip(kinds, builts):
        try:
            rec = ex.run(built, mode="x-space")["x"]
        except (ConstraintBreach, InadmissibleInitialCondition, NonFiniteState) as exc:
            rows.append([kind.value, "breach", str(exc), "", "", ""])
            code = EXIT_BREACH
            continue
        s = metrics(rec)
        rows.append([kind.value, "ok", "", format(s.control_effort, ".17g"),
                     format(float(np.max(np.abs(rec.u))), ".17g"), format(s.max_abs_x[0], ".17g")])
        u_series.append((kind.value, rec.t, np.abs(rec.u)))
    with open(out / "compare.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("kind,status,detail,control_effort,max_abs_u,max_abs_x1\n")
        for r in rows:
            fh.write(",".join(str(v).replace(",", ";") for v in r) + "\n")
    if u_series:
        svgplot.write(out / "compare_u.svg", svgplot.line_plot(u_series, "|u| by barrier kind", "t [s]", "|u|"))

    k, beta = base.k[0], base.beta
    params = [bl.BarrierParams(kind, k, beta) for kind in kinds]
    z = np.linspace(-k, k, 403)[1:-1]
    vals = {p.kind.value: [bl.value(p, float(v)) for v in z] for p in params}
    grads = {p.kind.value: [bl.gradient(p, float(v)) for v in z] for p in params}
    with open(out / "barrier_shapes.csv", "w", encoding="ascii", newline="\n") as fh:
        names = [p.kind.value for p in params]
        fh.write(",".join(["z"] + [f"V_{n}" for n in names] + [f"dV_{n}" for n in names]) + "\n")
        for j, zj in enumerate(z):
            row = [zj] + [vals[n][j] for n in names] + [grads[n][j] for n in names]
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    svgplot.write(out / "barrier_shapes.svg",
                  svgplot.line_plot([(n, z, vals[n]) for n in vals], "Barrier value V(z)", "z", "V"))
    svgplot.write(out / "barrier_gradients.svg",
                  svgplot.line_plot([(n, z, grads[n]) for n in grads], "Barrier gradient dV/dz", "z", "dV/dz"))
    with open(out / "compare.csv", encoding="ascii") as fh:
        print(fh.read(), end="")
    return code


def _sweep_one(job):
    """Worker: one swept run; failures are reported in the row, not raised."""
    cfg_dict, param, value, stride = job
    cfg = ex.apply_overrides(ex.ExperimentConfig.from_dict(cfg_dict), [f"{param}={value!r}"])
    if stride is not None:
        cfg.stride = stride
    warnings.simplefilter("ignore")
    try:
        built = ex.build(cfg)
        rec = ex.run(built, mode="x-space")["x"]
    except (ConstraintBreach, InadmissibleInitialCondition, NonFiniteState, ConfigError) as exc:
        return {"status": type(exc).__name__, "detail": str(exc)}, None
    return {"status": "ok", "detail": "", **metrics(rec).as_dict()}, rec.z[:, 0].copy()


def _reference_z1(job):
    cfg_dict, ref_h, stride = job
    cfg = ex.ExperimentConfig.from_dict(cfg_dict)
    cfg.h, cfg.stride = ref_h, stride
    warnings.simplefilter("ignore")
    try:
        rec = ex.run(ex.build(cfg), mode="z-space")["z"]
    except (ConstraintBreach, InadmissibleInitialCondition, NonFiniteState) as exc:
        return str(exc)
    return rec.t.copy(), rec.z[:, 0].copy()


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values {args.values!r}") from exc
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = _config(args)
    for v in values:
        ex.build(ex.apply_overrides(base, [f"{args.param}={v!r}"]))
    out = _out_dir(args)

    strides, ref_job = [None] * len(values), None
    if args.param == "h":
        spacing = max(values)
        strides = [ex.stride_for(v, spacing) for v in values]
        ref_job = (base.to_dict(), args.ref_h, ex.stride_for(args.ref_h, spacing))
    jobs = [(base.to_dict(), args.param, v, s) for v, s in zip(values, strides)]
    workers = max(1, min(args.workers or os.cpu_count() or 1, len(jobs) + (ref_job is not None)))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        ref_future = pool.submit(_reference_z1, ref_job) if ref_job else None
        results = list(pool.map(_sweep_one, jobs))
        ref = ref_future.result() if ref_future else None
    if isinstance(ref, str):
        print(f"reference run failed, tail_error left empty: {ref}", file=sys.stderr)
        ref = (None, None)

    rows = []
    for v, (row, z1) in zip(values, results):
        row = {args.param: v, **row}
        if ref is not None:
            t_ref, z_ref = ref
            if z1 is not None and z_ref is not None and len(z1) == len(z_ref):
                mask = t_ref >= t_ref[-1] - 0.2 * (t_ref[-1] - t_ref[0]) - 1e-9
                row["tail_error"] = float(np.max(np.abs(z1[mask] - z_ref[mask])))
            else:
                row["tail_error"] = None
        rows.append(row)
    cols = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    with open(out / "sweep.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            cells = []
            for c in cols:
                v = r.get(c)
                cells.append("" if v is None else format(v, ".17g") if isinstance(v, float) else str(v).replace(",", ";"))
            fh.write(",".join(cells) + "\n")
    with open(out / "sweep.csv", encoding="ascii") as fh:
        print(fh.read(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pblf", description="p-BLF backstepping experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", help=f"built-in configuration ({', '.join(sorted(ex.PRESETS))})")
        src.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--out", help="output directory (default: $PBLF_OUT or ./pblf-out)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="run one experiment and write CSV, report and figures")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("verify", help="run x- and z-space simulations and every check")
    common(p)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("compare", help="compare barrier kinds on one experiment")
    common(p)
    p.add_argument("--kinds", default=COMPARE_DEFAULT, help=f"comma-separated kinds (default {COMPARE_DEFAULT})")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("sweep", help="sweep one parameter and tabulate metrics")
    common(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--ref-h", type=float, default=1e-5, help="reference step for the h sweep tail error")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConstraintBreach, InadmissibleInitialCondition) as exc:
        print(f"breach: {exc}", file=sys.stderr)
        return EXIT_BREACH
    except NonFiniteState as exc:
        print(f"non-finite state: {exc}", file=sys.stderr)
        return EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())
