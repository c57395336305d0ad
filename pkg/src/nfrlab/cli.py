"""Command line experiment runner.

Every subcommand writes a JSON report (config echo, results, environment,
timings) and, where a table is produced, a CSV file.  Options may also come
from a JSON file given with ``--config``; explicit command line flags win.

Exit status: 0 pass, 1 invariant failure, 2 configuration error,
3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (IntegratorCfg, RegularizationCfg, solve, solve_regularized,
                       state_norm, uniqueness_gap, weak_limit_experiment)
from .lattice import SeqState, TruncatedLattice, random_state
from .model import EQUATIONS, registry
from .nfr import ResonanceRule, ResourceCapError, expand_structure, generation_equation, limit_equation_tail
from .trees import TreeCountError, enumerate_system_trees, enumerate_trees, tree_count
from . import verify

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator: results do not depend on the platform."""
    return np.random.Generator(np.random.Philox(seed))


def _equation(args):
    params = {}
    if args.eq == "fnls":
        params["alpha"] = args.alpha
    return registry(args.eq, **params)


def _lattice(eq, args):
    return TruncatedLattice(eq.d, args.N)


def _initial(eq, lat, args, rng=None):
    if args.zero:
        return SeqState.zeros(lat, eq.components)
    rng = rng or make_rng(args.seed)
    pair = eq.components == 2
    st = random_state(lat, rng, 1.0, s=args.s, decay=args.decay, components=eq.components,
                      conjugate_pair=pair, mean_zero=eq.name == "kdv")
    # normalize the whole state, all components together
    nrm = state_norm(st.data, lat, args.s)
    return st.scale(args.norm / nrm) if nrm > 0 else st


def _integrator(args):
    return IntegratorCfg(args.dt, args.store_every)


def _environment(args) -> dict:
    return {"version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "platform": platform.platform(),
            "threads": args.threads}


def _csv_text(rows) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, results, csv_rows)

def cmd_trees(args):
    if args.eq:
        eq = _equation(args)
        trees = enumerate_system_trees(eq.term_children(), args.component, args.J, args.cap)
        expected = None
    else:
        trees = enumerate_trees(args.p, args.J, args.cap)
        expected = tree_count(args.p, args.J)
    ok = True
    for tr in trees:
        try:
            tr.check()
        except AssertionError:
            ok = False
    if expected is not None:
        ok &= len(trees) == expected
    res = {"count": len(trees), "expected": expected}
    if args.dump:
        res["trees"] = [tr.dump(system=bool(args.eq)) for tr in trees]
    return ok, res, []


def cmd_expand(args):
    eq = _equation(args)
    return True, expand_structure(eq, args.J, args.component, args.cap), []


def cmd_solve(args):
    eq = _equation(args)
    lat = _lattice(eq, args)
    w0 = _initial(eq, lat, args)
    cfg = _integrator(args)
    if args.epsilon > 0:
        traj = solve_regularized(eq, w0, args.T, RegularizationCfg(args.epsilon, args.reg_alpha), cfg)
    else:
        traj = solve(eq, w0, args.T, cfg)
    rows = []
    m0 = state_norm(traj.states[0], lat, 0.0) ** 2
    for i, t in enumerate(traj.times):
        rows.append({"t": float(t), "l2": state_norm(traj.states[i], lat, 0.0),
                     "l2s": state_norm(traj.states[i], lat, args.s)})
    drift = max(abs(r["l2"] ** 2 - m0) for r in rows)
    ok = True
    if eq.name.startswith("cnls") and args.epsilon == 0:
        ok = drift <= args.mass_tol
    if args.trajectory:
        p = Path(args.trajectory)
        if p.suffix == ".bin":
            p.write_bytes(traj.to_binary())
        else:
            p.write_text(traj.to_json())
    return ok, {"massDrift": drift, "samples": len(traj)}, rows


def _trajectory(args, eq, lat):
    w0 = _initial(eq, lat, args)
    return solve(eq, w0, args.T, _integrator(args))


def cmd_residual(args):
    eq = _equation(args)
    lat = _lattice(eq, args)
    rule = ResonanceRule(args.variant, args.M)
    traj = _trajectory(args, eq, lat)
    rows = []
    for J in args.J:
        r = generation_equation(eq, rule, J, traj, quadrature=args.quadrature)
        rows.append({"J": J, "t": r["t"], "residual_l2s": _l2s(r["residual"], lat, args.s),
                     "boundary_norm": _l2s(r["boundary"], lat, args.s),
                     "integral_norm": _l2s(r["integral"], lat, args.s),
                     "quadrature_err": _l2s(r["quad_err"], lat, args.s)})
    base = rows[0]["residual_l2s"] + rows[0]["quadrature_err"]
    ok = all(r["residual_l2s"] <= 10 * base + 1e-14 for r in rows)
    return ok, {"rule": {"variant": args.variant, "M": args.M}}, rows


def _l2s(v, lat, s):
    return float(np.sqrt(np.sum(lat.brackets ** (2 * s) * np.abs(v) ** 2)))


def cmd_limit_tail(args):
    eq = _equation(args)
    lat = _lattice(eq, args)
    rule = ResonanceRule(args.variant, args.M)
    traj = _trajectory(args, eq, lat)
    rows = limit_equation_tail(eq, rule, args.Jmax, traj, s=args.s, quadrature=args.quadrature)
    v = [r["NJ_int"] for r in rows]
    ratios = [v[i + 1] / v[i] if v[i] > 0 else 0.0 for i in range(len(v) - 1)]
    ok = all(r < 1 for r in ratios)
    return ok, {"ratios": ratios}, rows


def cmd_verify_estimate(args):
    rows = []
    if args.kind == "a1":
        eq = _equation(args)
        for N in args.Ns:
            rep = verify.sup_weight_A1(eq, args.s, N, args.component, args.term)
            rows.append({"N": N, "supValue": rep.sup_value, "argmax": " ".join(map(str, rep.argmax))})
        vals = [r["supValue"] for r in rows]
    elif args.kind == "dnls-sums":
        for N in args.Ns:
            rows.append({"N": N, "supValue": verify.dnls_case_sums(args.s, args.sum_kind, args.n, N),
                         "argmax": str(args.n)})
        vals = [r["supValue"] for r in rows]
    else:
        for N in args.Ns:
            z = verify.zakharov_weight_check(args.s, args.l, args.eps, N)
            rows.append({"N": N, "supValue": max(z["C0"], z["C1"], z["C2"]), "C0": z["C0"],
                         "C1": z["C1"], "C2": z["C2"], "argmax": json.dumps(z["worst"])})
        vals = [r["supValue"] for r in rows]
    res = {"growth": verify.growth(vals) if len(vals) > 1 else 0.0}
    if len(vals) > 1:
        res["fittedExponent"] = verify.fit_exponent(args.Ns, vals)
    ok = res["growth"] <= args.max_growth
    return ok, res, rows


def cmd_counting(args):
    if args.what == "circle":
        c = verify.circle_count(args.center, args.mu, args.R)
        c2 = verify.circle_count(args.center, args.mu, args.R, path="grid")
        return c == c2, {"count": c}, [{"mu": args.mu, "R": args.R, "count": c}]
    if args.what == "circle-max":
        rows = verify.max_circle_counts(args.Rs)
        ex = verify.fit_exponent([r["R"] for r in rows], [r["max"] for r in rows])
        return True, {"exponentR": ex, "exponentMu": ex / 2}, rows
    if args.what == "fnls":
        c = verify.fnls_count(args.K, args.mu_star, args.k_star, args.alpha, args.sign)
        return True, {"count": c}, [{"K": args.K, "count": c}]
    if args.what == "fnls-max":
        rows = [verify.fnls_max_count(K, args.alpha, args.sign) for K in args.Ks]
        sc = [r["scaled"] for r in rows]
        spread = max(sc) / min(sc)
        return spread <= 2.0, {"spread": spread}, rows
    r = verify.cnls_block_counts(args.mu, tuple(args.dyads), args.N)
    return True, r, [r]


def cmd_uniqueness(args):
    eq = _equation(args)
    lat = _lattice(eq, args)
    rng = make_rng(args.seed)
    w0 = _initial(eq, lat, args, rng)
    pert = random_state(lat, rng, 1.0, s=args.s, components=eq.components,
                        conjugate_pair=eq.components == 2)
    nrm = state_norm(pert.data, lat, args.s)
    w1 = w0 + pert.scale(args.perturbation / nrm)
    g = uniqueness_gap(eq, w0, w1, args.T, _integrator(args), args.s)
    rows = [{"t": float(t), "ratio": float(r)} for t, r in zip(g["times"], g["ratio"])]
    return g["supRatio"] <= 2.0, {"supRatio": g["supRatio"]}, rows


def cmd_weaklimit(args):
    eq = _equation(args)
    lat = _lattice(eq, args)
    w0 = _initial(eq, lat, args)
    rep = weak_limit_experiment(eq, w0, args.s, args.reg_alpha, args.eps, args.T, _integrator(args))
    return rep["passed"], {"runs": rep["runs"]}, rep["pairs"]


COMMANDS = {
    "trees": cmd_trees, "expand": cmd_expand, "solve": cmd_solve, "residual": cmd_residual,
    "limit-tail": cmd_limit_tail, "verify-estimate": cmd_verify_estimate,
    "counting": cmd_counting, "uniqueness": cmd_uniqueness, "weaklimit": cmd_weaklimit,
}


# ---------------------------------------------------------------------------
# parser

def _common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--out", help="directory for report.json and table.csv (default: stdout)")
    p.add_argument("--seed", type=int, default=0, help="Philox seed (default: 0)")
    p.add_argument("--threads", type=int, default=1, help="thread count recorded in reports (default: 1)")


def _eq_opts(p, default="cnls1d"):
    p.add_argument("--eq", default=default, choices=EQUATIONS, help=f"equation (default: {default})")
    p.add_argument("--alpha", type=float, default=0.75, help="fnls exponent (default: 0.75)")


def _state_opts(p, N=4, T=0.1, dt=1e-3, norm=0.1):
    p.add_argument("--N", type=int, default=N, help=f"lattice radius (default: {N})")
    p.add_argument("--T", type=float, default=T, help=f"final time (default: {T})")
    p.add_argument("--dt", type=float, default=dt, help=f"time step (default: {dt})")
    p.add_argument("--store-every", type=int, default=1, help="sample stride (default: 1)")
    p.add_argument("--norm", type=float, default=norm, help=f"data norm in l^2_s (default: {norm})")
    p.add_argument("--s", type=float, default=0.0, help="Sobolev weight (default: 0)")
    p.add_argument("--decay", type=float, default=2.0, help="random data decay exponent (default: 2)")
    p.add_argument("--zero", action="store_true", help="use the zero state")


def _rule_opts(p):
    p.add_argument("--variant", default="A", choices=("A", "B"), help="resonance rule (default: A)")
    p.add_argument("--M", type=float, default=10.0, help="resonance threshold (default: 10)")
    p.add_argument("--quadrature", default="simpson", choices=("simpson", "filon"),
                   help="time quadrature (default: simpson)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nfrlab", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog="exit status: 0 pass, 1 invariant failure, "
                                        "2 configuration error, 3 resource cap")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trees", help="enumerate ordered trees")
    _common(p)
    p.add_argument("--p", type=int, default=2, help="arity (default: 2)")
    p.add_argument("--J", type=int, default=1, help="node count (default: 1)")
    p.add_argument("--eq", choices=EQUATIONS, help="enumerate system trees of this equation")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--component", type=int, default=0, help="root component (default: 0)")
    p.add_argument("--cap", type=int, default=10 ** 6, help="tree cap (default: 1e6)")
    p.add_argument("--dump", action="store_true", help="include the tree dump")

    p = sub.add_parser("expand", help="symbolic structure of generation J")
    _common(p)
    _eq_opts(p)
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--cap", type=int, default=10 ** 6)

    p = sub.add_parser("solve", help="integrate the truncated system")
    _common(p)
    _eq_opts(p)
    _state_opts(p, N=16, T=1.0)
    p.add_argument("--epsilon", type=float, default=0.0, help="regularization (default: 0)")
    p.add_argument("--reg-alpha", type=float, default=1.0, help="regularization exponent (default: 1)")
    p.add_argument("--mass-tol", type=float, default=1e-8, help="cnls mass drift tolerance (default: 1e-8)")
    p.add_argument("--trajectory", help="write the trajectory (.json or .bin)")

    p = sub.add_parser("residual", help="residuals of the generation-J equations")
    _common(p)
    _eq_opts(p)
    _state_opts(p)
    _rule_opts(p)
    p.add_argument("--J", type=int, nargs="+", default=[1, 2, 3], help="generations (default: 1 2 3)")

    p = sub.add_parser("limit-tail", help="per-generation contributions to the limit equation")
    _common(p)
    _eq_opts(p, "kdv")
    _state_opts(p, N=12, T=1.0, dt=1e-3)
    _rule_opts(p)
    p.add_argument("--Jmax", type=int, default=3)

    p = sub.add_parser("verify-estimate", help="sup-weight and weight-bound sweeps")
    _common(p)
    _eq_opts(p, "dnls")
    p.add_argument("--kind", default="a1", choices=("a1", "dnls-sums", "zakharov"))
    p.add_argument("--s", type=float, default=0.6)
    p.add_argument("--l", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--sum-kind", default="A", choices=("A", "C"))
    p.add_argument("--n", type=int, default=0, help="output frequency for dnls sums (default: 0)")
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--term", type=int, default=0)
    p.add_argument("--Ns", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--max-growth", type=float, default=0.05, help="allowed last-doubling growth (default: 0.05)")

    p = sub.add_parser("counting", help="lattice point counts")
    _common(p)
    p.add_argument("what", choices=("circle", "circle-max", "fnls", "fnls-max", "cnls"))
    p.add_argument("--center", type=int, nargs=2, default=[0, 0])
    p.add_argument("--mu", type=int, default=25)
    p.add_argument("--R", type=float, default=10.0)
    p.add_argument("--Rs", type=float, nargs="+", default=[4, 8, 16, 32, 64, 100])
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--Ks", type=int, nargs="+", default=[50, 100, 200, 500])
    p.add_argument("--mu-star", type=float, default=0.0)
    p.add_argument("--k-star", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--sign", type=int, default=1, choices=(1, -1))
    p.add_argument("--dyads", type=int, nargs=3, default=[1, 1, 1])
    p.add_argument("--N", type=int, default=4)

    p = sub.add_parser("uniqueness", help="difference of two solutions")
    _common(p)
    _eq_opts(p)
    _state_opts(p, N=32, T=0.05, norm=0.5)
    p.add_argument("--perturbation", type=float, default=1e-3)

    p = sub.add_parser("weaklimit", help="regularized solutions as epsilon decreases")
    _common(p)
    _eq_opts(p)
    _state_opts(p, N=16, T=0.1, norm=0.05)
    p.add_argument("--reg-alpha", type=float, default=0.2)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    return ap


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        known = set(vars(args))
        for key in cfg:
            if key.replace("-", "_") not in known:
                raise ConfigError(f"unknown config field {key!r} for {args.command}")
        sub = ap._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = ap.parse_args(argv)
    _validate(args)
    return args


def _validate(args):
    def need(cond, field, msg):
        if not cond:
            raise ConfigError(f"{field}: {msg}")
    for field in ("N", "J", "Jmax", "p", "K"):
        v = getattr(args, field, None)
        if isinstance(v, int):
            need(v >= (2 if field == "p" else 1 if field != "N" else 0), field, "out of range")
    if getattr(args, "J", None) is not None and isinstance(args.J, list):
        need(all(j >= 1 for j in args.J), "J", "generations must be >= 1")
    if getattr(args, "eq", None) == "fnls":
        need(0.5 < args.alpha < 1, "alpha", "fnls needs 1/2 < alpha < 1")
    if hasattr(args, "dt"):
        need(args.dt > 0, "dt", "must be positive")
        need(args.T > 0, "T", "must be positive")
        IntegratorCfg(args.dt, args.store_every).steps(args.T)
    if hasattr(args, "M"):
        need(args.M >= 1, "M", "must be >= 1")
    if hasattr(args, "epsilon"):
        need(0 <= args.epsilon < 1, "epsilon", "must lie in [0, 1)")
    if args.command == "weaklimit":
        need(all(0 < e < 1 for e in args.eps), "eps", "values must lie in (0, 1)")
    need(args.threads >= 1, "threads", "must be >= 1")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse(argv)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        passed, results, rows = COMMANDS[args.command](args)
    except (TreeCountError, ResourceCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - t0
    config = {k: v for k, v in vars(args).items() if k not in ("out",)}
    report = {"command": args.command, "config": config, "passed": bool(passed),
              "results": results, "environment": _environment(args),
              "timings": {"total_s": elapsed}}
    text = json.dumps(_jsonable(report), indent=1)
    table = _csv_text(_jsonable(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        if table:
            (out / "table.csv").write_text(table)
    else:
        print(text)
        if table:
            print(table, end="")
    return EXIT_PASS if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
