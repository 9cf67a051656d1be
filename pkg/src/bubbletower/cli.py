"""Command line interface: ``bubbletower <command> [options]``.

Every command resolves its parameters (defaults, then ``--config``, then
``--set key=value``), writes its data files into ``--out`` and finishes with
``<command>.manifest.json`` listing the resolved parameters, the argument
vector and a SHA-256 of every output.  ``bubbletower replay MANIFEST``
re-runs a manifest.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.

CSV schemas
  scan.csv        r, lam, F_expansion [, F_quadrature]
  residuals.csv   k, mu, norm_value, argmax_1..argmax_N, predicted_rate, ratio
  lattice.csv     k, normalised_sum, closed_form, rel_diff
  trajectory.csv  r, lam, Fbar, grad_norm
"""

from __future__ import annotations

import os

_threads = os.environ.get("BUBBLETOWER_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .config import ProblemParams, dump_config, load_config, parse_config, validate_assumptions  # noqa: E402
from .persist import (  # noqa: E402
    StudyManifest,
    config_hash,
    load_manifest,
    write_csv,
    write_json,
    write_plot_script,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("bubbletower")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _grid(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value parameter file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one config key (repeatable)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="bubbletower", description=__doc__.split("\n\n")[0],
                 formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__.split("\n\n", 1)[1])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("constants", parents=[common], help="expansion constants and Lambda_0 (JSON)")
    c.add_argument("--plateau", action="store_true", help="also tabulate the interaction plateau")

    c = sub.add_parser("scan", parents=[common], help="F over a grid on the region D (CSV)")
    c.add_argument("--grid", type=_grid, default=(41, 41), help="n_r x n_lambda (default 41x41)")
    c.add_argument("--quadrature", action="store_true", help="also evaluate I(W_r) by quadrature (slow)")

    c = sub.add_parser("critpoint", parents=[common], help="critical point of F in D (JSON)")
    c.add_argument("--objective", choices=("expansion", "quadrature"), default="expansion")
    c.add_argument("--starts", type=int, default=0, help="random interior starts for the invariance study")
    c.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("residuals", parents=[common], help="decay of ||l_k||_** (CSV)")
    c.add_argument("--k", type=_int_list, default=[4, 6, 8, 12, 16], help="comma-separated bubble counts")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-interior", type=int, default=16384)

    c = sub.add_parser("solve", parents=[common], help="Newton solve on the sector grid (N = 5)")
    c.add_argument("--h", type=float, default=0.125, help="core spacing in units of 1/Lambda")
    c.add_argument("--r-max", type=float, default=None, help="truncation radius (default 3(r+1))")
    c.add_argument("--start", choices=("expansion", "quadrature"), default="expansion",
                   help="where (r, Lambda) comes from")
    c.add_argument("--r", type=float, default=None, help="explicit ring radius")
    c.add_argument("--lam", type=float, default=None, help="explicit Lambda")
    c.add_argument("--boundary", choices=("robin", "dirichlet"), default="robin")
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--max-iter", type=int, default=30)
    c.add_argument("--refine-check", action="store_true",
                   help="also solve with 1.25 h and report the change in omega_sup")

    c = sub.add_parser("checks", parents=[common], help="auxiliary inequality checks (JSON per check)")
    c.add_argument("--which", default="laa1,laa2,laa3,convexity",
                   help="comma-separated subset of laa1, laa2, laa3, convexity")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--k", type=_int_list, default=[4, 8, 16], help="bubble counts for laa3")

    c = sub.add_parser("lattice", parents=[common], help="normalised lattice sums and B4 (CSV)")
    c.add_argument("--k", type=_int_list, default=[64, 128, 256, 512, 1024, 2048, 4096])
    c.add_argument("--k-base", type=int, default=4096)

    c = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    c.add_argument("manifest")
    c.add_argument("--out", metavar="DIR", default=None, help="output directory (default: the manifest's)")
    return ap


def resolve_params(args) -> ProblemParams:
    p = load_config(args.config) if args.config else ProblemParams()
    if args.set:
        p = parse_config("\n".join(s.replace("=", " = ", 1) for s in args.set), p)
    return p


# ----------------------------------------------------------------------------
# commands


def cmd_constants(args, p, out, man):
    from .constants import B4_closed_form, compute_constants, interaction_plateau, lambda0

    consts = compute_constants(p)
    doc = {"params": p.to_dict(), "constants": consts.to_dict(), "lambda0": lambda0(p, consts),
           "B4_closed_form": B4_closed_form(p.N)}
    if args.plateau:
        pl = interaction_plateau(p.N)
        doc["interaction_plateau"] = pl
    man.add(write_json(out / "constants.json", doc))


def cmd_scan(args, p, out, man):
    from .constants import F_expansion, compute_constants, lambda0
    from .critical import QuadratureObjective, RegionD

    consts = compute_constants(p)
    reg = RegionD.from_params(p, lambda0(p, consts))
    nr, nl = args.grid
    rs = np.linspace(reg.r_lo, reg.r_hi, nr)
    ls = np.linspace(reg.lam_lo, reg.lam_hi, nl)
    qobj = QuadratureObjective(p) if args.quadrature else None
    rows = []
    for r in rs:
        for lam in ls:
            row = [r, lam, float(F_expansion(p, consts, r, lam))]
            if qobj is not None:
                row.append(qobj.value(r, lam))
            rows.append(row)
    header = ["r", "lam", "F_expansion"] + (["F_quadrature"] if qobj else [])
    man.add(write_csv(out / "scan.csv", header, rows))
    if args.plot:
        man.add(_splot(out / "scan.gp", "scan.csv"))


def _splot(path, data):
    text = "\n".join([
        "# gnuplot script; run with: gnuplot -p " + Path(path).name,
        "set datafile separator ','",
        "set xlabel 'r'",
        "set ylabel 'lam'",
        f"splot '{data}' using 1:2:3 every ::1 with points title 'F_expansion'",
    ]) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")
    return Path(path)


def cmd_critpoint(args, p, out, man):
    from .constants import compute_constants, lambda0
    from .critical import (
        ExpansionObjective,
        QuadratureObjective,
        RegionD,
        alpha_levels,
        boundary_probe,
        find_critical_point,
        flow_invariance_study,
        minmax_value,
    )

    consts = compute_constants(p)
    L0 = lambda0(p, consts)
    reg = RegionD.from_params(p, L0)
    obj = ExpansionObjective(p, consts) if args.objective == "expansion" else QuadratureObjective(p)
    res, flow = find_critical_point(obj, reg)
    a1, a2 = alpha_levels(p, consts)
    doc = {"objective": args.objective, "region": asdict(reg), "lambda0": L0, "mu_r0": p.mu * p.r0,
           "result": res.to_dict(), "flow_status": flow.status,
           "rel_lambda_error": abs(res.lam_star - L0) / L0, "alpha1": a1, "alpha2": a2,
           "boundary_probe": boundary_probe(obj, reg, n=11 if args.objective == "quadrature" else 21)}
    if args.objective == "expansion":
        mm = minmax_value(obj, reg)
        doc["minmax"] = {"c": mm.c, "r": mm.r_saddle, "lam": mm.lam_saddle, "refinement_delta": mm.refinement_delta}
    if args.starts > 0:
        st = flow_invariance_study(obj, reg, args.starts, args.seed, "saddle")
        doc["invariance"] = asdict(st)
    if args.objective == "quadrature":
        doc["energy_evaluations"] = obj.evaluations
    man.add(write_json(out / "critpoint.json", doc))
    man.add(write_csv(out / "trajectory.csv", ["r", "lam", "Fbar", "grad_norm"], flow.trajectory))
    if args.plot:
        man.add(write_plot_script(out / "trajectory.gp", "trajectory.csv", "r", ["lam"], "saddle flow"))


def cmd_residuals(args, p, out, man):
    from .norms import Sampler, lk_decay_study

    study = lk_decay_study(p, args.k, sampler=Sampler(seed=args.seed, n_interior=args.n_interior))
    header = ["k", "mu", "norm_value"] + [f"argmax_{i + 1}" for i in range(p.N)] + ["predicted_rate", "ratio"]
    rows = [[r.k, r.mu, r.norm_value, *r.argmax, r.predicted_rate, r.ratio] for r in study.rows]
    man.add(write_csv(out / "residuals.csv", header, rows))
    man.add(write_json(out / "residuals_fit.json", {"slope": study.slope, "predicted_rate": study.predicted_rate,
                                                     "relative_slope_error": study.relative_slope_error}))
    if args.plot:
        man.add(write_plot_script(out / "residuals.gp", "residuals.csv", "mu", ["norm_value"],
                                  "||l_k||_** against mu", logx=True, logy=True))


def cmd_solve(args, p, out, man):
    from .bubbles import RingConfig
    from .constants import compute_constants, lambda0
    from .critical import QuadratureObjective, RegionD, find_critical_point
    from .solver import (
        SectorGrid,
        dilation_defect,
        kazdan_warner_defect,
        newton_solve,
        write_snapshot,
    )

    if p.N != 5:
        raise ValueError("the grid solver supports N = 5 only")
    consts = compute_constants(p)
    L0 = lambda0(p, consts)
    r, lam = p.mu * p.r0, L0
    if args.start == "quadrature" and (args.r is None or args.lam is None):
        res, _ = find_critical_point(QuadratureObjective(p), RegionD.from_params(p, L0))
        r, lam = res.r_star, res.lam_star
    r = args.r if args.r is not None else r
    lam = args.lam if args.lam is not None else lam
    grid = SectorGrid.build(p.k, r, args.r_max, h=args.h, lam=lam)
    cfg = RingConfig(p.N, p.k, r, lam)
    model = p.curvature()
    sol = newton_solve(grid, cfg, model, p, tol=args.tol, max_iter=args.max_iter, boundary=args.boundary)
    extra = {"kazdan_warner_defect": kazdan_warner_defect(sol, model, p),
             "dilation_defect": dilation_defect(sol, model, p), "r": r, "lam": lam,
             "resolves_core": grid.resolves_core()}
    if args.refine_check and sol.converged:
        coarse = SectorGrid.build(p.k, r, args.r_max, h=1.25 * args.h, lam=lam)
        csol = newton_solve(coarse, cfg, model, p, tol=args.tol, max_iter=args.max_iter, boundary=args.boundary)
        change = abs(sol.omega_sup - csol.omega_sup) / sol.omega_sup if sol.omega_sup > 0 else 0.0
        extra["refinement"] = {"h_coarse": 1.25 * args.h, "omega_sup_coarse": csol.omega_sup,
                               "converged_coarse": csol.converged, "relative_change": change,
                               "consistent": bool(csol.converged and change < 0.2)}
        if not extra["refinement"]["consistent"]:
            log.warning("omega_sup changes by %.0f%% between h and 1.25 h", 100 * change)
    b, j = write_snapshot(out / "solution.bin", sol, extra)
    man.add(b)
    man.add(j)
    if not sol.converged:
        from .solver import SolverError

        raise SolverError(f"Newton did not converge in {args.max_iter} iterations")


def cmd_checks(args, p, out, man):
    from .checks import check_laa1, check_laa2, convexity_sweep, laa3_sweep

    which = [w.strip() for w in args.which.split(",") if w.strip()]
    unknown = set(which) - {"laa1", "laa2", "laa3", "convexity"}
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    if "laa1" in which:
        reports = [check_laa1(a, b, s, N=p.N, seed=args.seed).to_dict()
                   for a, b, s in [(1, 1, 1), (2, 2, 1), (2, 3, 2), (3, 3, 3), (1.5, 2, 0.5)]]
        man.add(write_json(out / "checks_laa1.json",
                           {"cases": reports, "passed": all(r["passed"] for r in reports)}))
    if "laa2" in which:
        sig = [0.5, 1.0, 2.0, p.N - 2.1]
        reports = [check_laa2(s, N=p.N).to_dict() for s in sig]
        man.add(write_json(out / "checks_laa2.json",
                           {"cases": reports, "passed": all(r["passed"] for r in reports)}))
    if "laa3" in which:
        rep = laa3_sweep(p, tuple(args.k))
        man.add(write_json(out / "checks_laa3.json", rep.to_dict()))
    if "convexity" in which:
        rep = convexity_sweep([p.crit_exp - 1.0, 2.0], seed=args.seed)
        man.add(write_json(out / "checks_convexity.json", rep.to_dict()))


def cmd_lattice(args, p, out, man):
    from .constants import B4_closed_form, extrapolate_B4, normalised_lattice_sum

    ref = B4_closed_form(p.N)
    rows = []
    for k in args.k:
        v = normalised_lattice_sum(k, p.N)
        rows.append([k, v, ref, (v - ref) / ref])
    man.add(write_csv(out / "lattice.csv", ["k", "normalised_sum", "closed_form", "rel_diff"], rows))
    ex = extrapolate_B4(p.N, args.k_base)
    man.add(write_json(out / "lattice.json", {"N": p.N, "k_base": args.k_base, "extrapolated": ex.value,
                                              "est_error": ex.est_error, "closed_form": ref,
                                              "rel_diff": (ex.value - ref) / ref}))
    if args.plot:
        man.add(write_plot_script(out / "lattice.gp", "lattice.csv", "k", ["normalised_sum", "closed_form"],
                                  "normalised lattice sum", logx=True))


COMMANDS = {"constants": cmd_constants, "scan": cmd_scan, "critpoint": cmd_critpoint,
            "residuals": cmd_residuals, "solve": cmd_solve, "checks": cmd_checks, "lattice": cmd_lattice}


# ----------------------------------------------------------------------------
# driver


def _numerical_errors():
    from .critical import CriticalPointError
    from .quadrature import QuadratureError
    from .solver import SolverError

    return (QuadratureError, CriticalPointError, SolverError, FloatingPointError, np.linalg.LinAlgError)


def _replay(args) -> int:
    doc = load_manifest(args.manifest)
    argv = list(doc["arguments"])
    out = args.out if args.out is not None else str(Path(args.manifest).resolve().parent)
    if "--out" in argv:
        i = argv.index("--out")
        del argv[i:i + 2]
    return run(argv + ["--out", out])


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"bubbletower: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "replay":
        try:
            return _replay(args)
        except (OSError, KeyError, ValueError) as exc:
            print(f"bubbletower: error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION

    try:
        p = resolve_params(args)
        report = validate_assumptions(p)
        if not report.ok:
            raise ValueError("standing assumptions violated: " + "; ".join(report.failures()))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (OSError, ValueError) as exc:
        print(f"bubbletower: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    cfg_text = dump_config(p)
    man = StudyManifest(args.command, p.to_dict(), argv, config_hash=config_hash(cfg_text))
    try:
        COMMANDS[args.command](args, p, out, man)
    except _numerical_errors() as exc:
        print(f"bubbletower: numerical failure: {exc}", file=sys.stderr)
        man.write(out)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"bubbletower: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    path = man.write(out)
    print(path)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
