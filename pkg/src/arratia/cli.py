"""Command line interface.

Subcommands: density, compare, experiment {converge,duality,coalescence},
validate kernels.  Every flag has a config-file twin (flat key=value, '#'
comments); explicit flags override the file, the ARRATIA_SEED environment
variable is the seed fallback.  Exit codes: 0 clean, 2 when an estimate
carries a tolerance flag or a cross-check fails its budget, 1 on errors.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, plotting
from .errors import ArratiaError
from .harness import CSV_HEADER, RunConfig


def _write_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _density_flag_names() -> list[str]:
    return ["method", "drift", "t", "x", "window", "seed", "workers", "out",
            "tol", "nmax", "samples", "delta", "paths", "dt", "richardson",
            "h", "hv", "umax", "vpad", "dump_field", "U", "spacing", "runs",
            "bins"]


def _add_density_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file with key=value defaults")
    p.add_argument("--method", choices=harness.METHODS)
    p.add_argument("--drift", help="drift spec, e.g. tanh:k=0.5,lam=1")
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--window", help="flow histogram window lo:hi")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--tol", type=float, help="series tail tolerance")
    p.add_argument("--nmax", type=int, help="series term cap")
    p.add_argument("--samples", type=int, help="series MC samples per term")
    p.add_argument("--delta", type=float, help="mc gap for the delta quotient")
    p.add_argument("--paths", type=int, help="mc path count")
    p.add_argument("--dt", type=float, help="mc/flow time step")
    p.add_argument("--richardson", action="store_const", const="1",
                   help="mc two-delta extrapolation")
    p.add_argument("--h", type=float, help="pde step in the killed direction")
    p.add_argument("--hv", type=float, help="pde step along the diagonal")
    p.add_argument("--umax", type=float, help="pde far-field location")
    p.add_argument("--vpad", type=float, help="extra pde window padding")
    p.add_argument("--dump-field", dest="dump_field", help="write pde field CSV")
    p.add_argument("--U", dest="U", type=float, help="flow starter half-width")
    p.add_argument("--spacing", type=float, help="flow starter spacing")
    p.add_argument("--runs", type=int, help="flow ensemble size")
    p.add_argument("--bins", type=int, help="flow histogram bins")


def _merge_config(args: argparse.Namespace, names: list[str]) -> dict:
    kv = {}
    if getattr(args, "config", None):
        kv.update(harness.load_config_file(args.config))
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            kv[name] = str(val)
    return kv


def _cmd_density(args) -> int:
    kv = _merge_config(args, _density_flag_names())
    out = kv.pop("out", None)
    cfg = RunConfig.from_kv(kv)
    res = harness.run_density(cfg)
    _write_lines([CSV_HEADER] + res.csv_lines, out)
    return 2 if res.flagged else 0


def _cmd_compare(args) -> int:
    kv = _merge_config(args, ["drift", "t", "x", "seed", "workers",
                              "methods", "out"])
    methods = [m.strip() for m in kv.get("methods", "oracle,series,pde,mc")
               .split(",") if m.strip()]
    res = harness.compare_methods(
        kv["drift"], float(kv["t"]), float(kv.get("x", 0.0)), methods,
        seed=int(kv.get("seed", harness._env_seed())),
        workers=int(kv.get("workers", 1)))
    lines = [CSV_HEADER] + res.csv_lines + [""] + res.pair_lines
    _write_lines(lines, kv.get("out"))
    if args.plot:
        labels = list(res.estimates)
        plotting.write_dat(args.plot + ".dat",
                           ["method", "estimate", "stat_error", "det_bound"],
                           [(m, e.value, e.stat_error, e.det_bound)
                            for m, e in res.estimates.items()])
        plotting.bar_chart_svg(args.plot + ".svg", labels,
                               [res.estimates[m].value for m in labels],
                               [3 * res.estimates[m].stat_error
                                + res.estimates[m].det_bound for m in labels],
                               title="method comparison", ylabel="density")
    return 2 if res.flagged else 0


def _cmd_converge(args) -> int:
    kv = _merge_config(args, ["drift", "t", "x", "seed", "workers", "mode",
                              "method", "n_list", "n_pass", "out"])
    n_list = [int(n) for n in kv.get("n_list", "1,2,4,8,16").split(",")]
    rep = harness.experiment_converge(
        kv["drift"], kv.get("mode", "linf"), n_list, kv.get("method", "pde"),
        float(kv["t"]), float(kv.get("x", 0.0)),
        seed=int(kv.get("seed", harness._env_seed())),
        workers=int(kv.get("workers", 1)),
        n_pass=int(kv.get("n_pass", 8)))
    _write_lines(rep.csv_lines(), kv.get("out"))
    if args.plot:
        xs = [float(r.n) for r in rep.rows]
        plotting.write_dat(args.plot + ".dat",
                           ["n", "distance", "estimate", "error", "tolerance"],
                           [(r.n, r.distance, r.estimate.value, r.error,
                             r.tolerance) for r in rep.rows])
        plotting.line_chart_svg(
            args.plot + ".svg", xs,
            {"density": [r.estimate.value for r in rep.rows],
             "reference": [rep.reference.value] * len(xs)},
            errors={"density": [3 * r.estimate.stat_error for r in rep.rows]},
            title=f"drift convergence ({rep.mode})", xlabel="n",
            ylabel="density")
    return 0 if rep.passed else 2


def _cmd_duality(args) -> int:
    kv = _merge_config(args, ["drift", "t", "u", "v", "runs", "spacing",
                              "dt", "seed", "out"])
    res = harness.experiment_duality(
        kv["drift"], float(kv["t"]), float(kv["u"]), float(kv["v"]),
        runs=int(kv.get("runs", 20000)),
        spacing=float(kv.get("spacing", 0.02)),
        dt=float(kv.get("dt", 1e-4)),
        seed=int(kv.get("seed", harness._env_seed())))
    diff = abs(res.lhs - res.rhs)
    budget = 3.0 * res.combined_stderr
    lines = ["lhs,lhs_stderr,rhs,rhs_stderr,combined_stderr,diff,ok",
             f"{res.lhs!r},{res.lhs_stderr!r},{res.rhs!r},{res.rhs_stderr!r},"
             f"{res.combined_stderr!r},{diff!r},{int(diff <= budget)}"]
    _write_lines(lines, kv.get("out"))
    return 0 if diff <= budget else 2


def _cmd_coalescence(args) -> int:
    kv = _merge_config(args, ["drift", "t", "gaps", "runs", "dt", "seed",
                              "out"])
    t = float(kv["t"])
    gaps = [float(g) for g in kv.get("gaps", "0.01,0.02,0.05").split(",")]
    fit = harness.experiment_coalescence(
        kv["drift"], t, gaps, runs=int(kv.get("runs", 50000)),
        dt=float(kv.get("dt", 1e-4)),
        seed=int(kv.get("seed", harness._env_seed())))
    lines = ["gap,prob,stderr"]
    lines += [f"{g!r},{p!r},{s!r}"
              for g, p, s in zip(fit.gaps, fit.probs, fit.stderrs)]
    lines += ["slope,intercept,relative_residual",
              f"{fit.slope!r},{fit.intercept!r},{fit.residual!r}"]
    _write_lines(lines, kv.get("out"))
    return 0 if fit.residual < 0.05 and fit.slope > 0 else 2


def _cmd_validate(args) -> int:
    if args.what != "kernels":
        raise ArratiaError(f"unknown validation target {args.what!r}")
    rows = harness.kernel_validation_rows()
    _write_lines(harness.validation_csv(rows), args.out)
    return 0 if all(r[-1] for r in rows) else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="arratia",
        description="density laboratory for coalescing Brownian particles "
                    "with drift")
    sub = ap.add_subparsers(dest="command", required=True)

    p_density = sub.add_parser("density", help="one density estimate")
    _add_density_flags(p_density)
    p_density.set_defaults(func=_cmd_density)

    p_cmp = sub.add_parser("compare", help="cross-method comparison")
    p_cmp.add_argument("--config")
    p_cmp.add_argument("--drift")
    p_cmp.add_argument("--t", type=float)
    p_cmp.add_argument("--x", type=float)
    p_cmp.add_argument("--methods", help="comma separated method list")
    p_cmp.add_argument("--seed", type=int)
    p_cmp.add_argument("--workers", type=int)
    p_cmp.add_argument("--out")
    p_cmp.add_argument("--plot", help="basename for .dat/.svg export")
    p_cmp.set_defaults(func=_cmd_compare)

    p_exp = sub.add_parser("experiment", help="orchestrated experiments")
    exp_sub = p_exp.add_subparsers(dest="experiment", required=True)

    p_conv = exp_sub.add_parser("converge", help="drift-convergence study")
    for name, typ in [("drift", str), ("mode", str), ("method", str),
                      ("n-list", str), ("out", str)]:
        p_conv.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ)
    p_conv.add_argument("--t", type=float)
    p_conv.add_argument("--x", type=float)
    p_conv.add_argument("--seed", type=int)
    p_conv.add_argument("--workers", type=int)
    p_conv.add_argument("--n-pass", dest="n_pass", type=int)
    p_conv.add_argument("--config")
    p_conv.add_argument("--plot")
    p_conv.set_defaults(func=_cmd_converge)

    p_dual = exp_sub.add_parser("duality", help="occupancy vs dual meeting")
    for name in ["drift", "out"]:
        p_dual.add_argument(f"--{name}")
    for name in ["t", "u", "v", "spacing", "dt"]:
        p_dual.add_argument(f"--{name}", type=float)
    p_dual.add_argument("--runs", type=int)
    p_dual.add_argument("--seed", type=int)
    p_dual.add_argument("--config")
    p_dual.set_defaults(func=_cmd_duality)

    p_coal = exp_sub.add_parser("coalescence", help="meeting law vs gap")
    p_coal.add_argument("--drift")
    p_coal.add_argument("--t", type=float)
    p_coal.add_argument("--gaps", help="comma separated gaps")
    p_coal.add_argument("--runs", type=int)
    p_coal.add_argument("--dt", type=float)
    p_coal.add_argument("--seed", type=int)
    p_coal.add_argument("--out")
    p_coal.add_argument("--config")
    p_coal.set_defaults(func=_cmd_coalescence)

    p_val = sub.add_parser("validate", help="invariant suites")
    p_val.add_argument("what", choices=["kernels"])
    p_val.add_argument("--out")
    p_val.set_defaults(func=_cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ArratiaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
