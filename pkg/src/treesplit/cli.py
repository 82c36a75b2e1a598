"""Command-line interface for splitting-algorithm analysis.

Subcommands: analyze (measure, span, asymptotic constants), exact (cost
tables and the closed-form cross-check), simulate (tree Monte Carlo),
converge (cost ratios against their asymptotic prediction), study
(lln / clt / psi / variance diagnostics with a pass-fail verdict).

Exit codes: 0 success, 1 a study verdict failed, 2 spec or usage error,
3 span undecidable at the factorization bound, 4 resource bound exceeded,
5 simulation node budget exhausted.

Determinism: all randomness derives from --seed (default 0).  Reruns with
the same arguments produce byte-identical outputs except for the manifest's
created_utc field.  --threads is accepted for interface compatibility and
never influences results.  Output files are written atomically; the
manifest is written last and marks a completed run.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from typing import Iterable

from . import __version__
from . import exact as ex
from . import montecarlo as mc
from . import asymptotics as asy
from .model import (
    SpecError,
    build_measure,
    detect_span,
    load_spec_file,
    moments,
)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_SPEC = 2
EXIT_SPAN = 3
EXIT_RESOURCE = 4
EXIT_BUDGET = 5

# resource ceilings for the exact command (exit 4 above these)
MAX_N_EXACT = 2048
MAX_N_FLOAT = 200_000


# ---------------------------------------------------------------------------
# serialization helpers


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def _dumps(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits and stable key order."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{inner}"{k}": {_dumps(v, indent + 1)}' for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{_dumps(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{out}"'
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj) -> None:
    _write_text(path, _dumps(obj) + "\n")


def _write_csv(path: str, header: list[str], rows: Iterable[list]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow(row)
    os.replace(tmp, path)


def _via_tmp(writer, path: str, *a) -> None:
    """Run a module CSV writer against a temp file, then rename into place."""
    tmp = path + ".tmp"
    writer(*a, tmp)
    os.replace(tmp, path)


def _cell(v) -> str:
    return _fmt_float(v) if isinstance(v, float) else str(v)


def _write_manifest(out_dir: str, command: str, spec_path: str, params: dict,
                    seed: int, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "spec_path": spec_path,
        "params": params,
        "seed": seed,
        "tool_version": __version__,
        "outputs": outputs,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _load(args) -> tuple:
    spec = load_spec_file(args.spec)
    os.makedirs(args.out, exist_ok=True)
    return spec, args.out


def _estimate_json(est: mc.McEstimate) -> dict:
    return {
        "mean": est.mean,
        "stderr": est.stderr,
        "replicas": est.replicas,
        "seed": est.seed,
        "extras": est.extras,
    }


def _rat(f) -> str:
    return f"{f.numerator}/{f.denominator}"


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    spec, out = _load(args)
    if spec.has_sampler():
        print("analyze requires exact rational weights", file=sys.stderr)
        return EXIT_SPEC
    measure = build_measure(spec)
    span = detect_span(measure)
    eg, neg_log, heavy, delta = moments(measure)

    outputs = ["measure.json", "span.json"]
    _write_json(os.path.join(out, "measure.json"), {
        "atoms": [
            {"value": _rat(v), "mass": _rat(m)} for v, m in measure.atoms
        ],
        "expected_branch": _rat(measure.expected_branch),
        "moments": {
            "expected_branch": eg,
            "neg_log": neg_log,
            "heavy": heavy,
            "reciprocal": measure.recip_moment,
            "delta": float(delta),
        },
    })
    _write_json(os.path.join(out, "span.json"), {
        "arithmetic": span.arithmetic,
        "undecidable": span.undecidable,
        "lambda": span.lam if span.arithmetic else None,
        "multipliers": list(span.multipliers) if span.arithmetic else None,
    })
    if span.undecidable:
        print("span undecidable at factor bound; see span.json", file=sys.stderr)
        return EXIT_SPAN

    limit = asy.limit_constant(measure, eg, spec.threshold)
    _write_json(os.path.join(out, "asymptotics.json"), {
        "limit_constant": limit,
        "arithmetic": span.arithmetic,
        "lambda": span.lam if span.arithmetic else None,
    })
    outputs.append("asymptotics.json")
    if span.arithmetic:
        profile = asy.periodic_profile_F(
            measure, eg, spec.threshold, span, grid_size=256
        )
        asy.validate_profile(profile, limit)
        _via_tmp(asy.write_profile_csv, os.path.join(out, "f_profile.csv"), profile)
        outputs.append("f_profile.csv")

    _write_manifest(out, "analyze", args.spec, {}, args.seed, outputs)
    return EXIT_OK


def cmd_exact(args) -> int:
    spec, out = _load(args)
    cap = MAX_N_EXACT if args.mode == "exact" else MAX_N_FLOAT
    if args.n_max > cap:
        print(
            f"n_max {args.n_max} exceeds the {args.mode} mode ceiling {cap}",
            file=sys.stderr,
        )
        return EXIT_RESOURCE
    if spec.has_sampler():
        print("exact costs require exact rational weights", file=sys.stderr)
        return EXIT_SPEC
    table = ex.expected_cost_table(spec, args.n_max, mode=args.mode)
    _via_tmp(ex.write_cost_table_csv, os.path.join(out, "cost_table.csv"), table)
    outputs = ["cost_table.csv"]

    q = spec.constant_degree()
    if q is not None and spec.is_symmetric_qary():
        closed = [
            ex.closed_form_qary(q, spec.threshold, n) for n in range(args.n_max + 1)
        ]
        closed_table = ex.CostTable(spec.threshold, "float64", tuple(closed))
        _via_tmp(
            ex.write_cost_table_csv, os.path.join(out, "cost_closed_form.csv"),
            closed_table,
        )
        dp = table.as_floats()
        _write_csv(
            os.path.join(out, "delta.csv"),
            ["n", "delta"],
            ([n, _cell(abs(closed[n] - dp[n]))] for n in range(args.n_max + 1)),
        )
        outputs += ["cost_closed_form.csv", "delta.csv"]

    _write_manifest(
        out, "exact", args.spec,
        {"n_max": args.n_max, "mode": args.mode}, args.seed, outputs,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec, out = _load(args)
    acc = mc._MeanVar()
    rows = []
    try:
        for cost, depth, full in mc.iter_tree_batches(
            spec, args.n, args.replicas, args.seed, node_budget=args.node_budget
        ):
            acc.add_array(cost.astype(float))
            rows.append((cost, depth, full))
    except mc.SimulationBudgetError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_BUDGET

    est = mc.McEstimate(
        mean=acc.mean,
        stderr=acc.stderr(),
        replicas=args.replicas,
        seed=args.seed,
        extras={"op": "tree", "n": args.n},
    )
    _write_json(os.path.join(out, "sim.json"), _estimate_json(est))

    def tree_rows():
        replica = 0
        for cost, depth, full in rows:
            for c, dep, fl in zip(cost, depth, full):
                yield [replica, int(c), int(dep), int(fl)]
                replica += 1

    _write_csv(
        os.path.join(out, "tree_stats.csv"),
        ["replica", "cost", "max_depth", "full_levels"],
        tree_rows(),
    )
    _write_manifest(
        out, "simulate", args.spec,
        {"n": args.n, "replicas": args.replicas, "node_budget": args.node_budget},
        args.seed, ["sim.json", "tree_stats.csv"],
    )
    return EXIT_OK


def cmd_converge(args) -> int:
    spec, out = _load(args)
    if spec.has_sampler():
        # the predicted column needs the measure, which black-box weights lack
        print("converge requires exact rational weights", file=sys.stderr)
        return EXIT_SPEC
    d = spec.threshold
    measure = build_measure(spec)
    span = detect_span(measure)
    if span.undecidable:
        print("span undecidable at factor bound", file=sys.stderr)
        return EXIT_SPAN

    base = math.exp(span.lam) if span.arithmetic else math.e
    n_set = sorted(
        {
            int(base ** (k + j / args.y_points))
            for k in range(args.k_min, args.k_max + 1)
            for j in range(args.y_points)
        }
    )
    n_set = [n for n in n_set if n >= 1]
    n_hi = n_set[-1]

    if args.source == "exact":
        if n_hi > MAX_N_FLOAT:
            print(f"largest n {n_hi} exceeds the table ceiling {MAX_N_FLOAT}",
                  file=sys.stderr)
            return EXIT_RESOURCE
        table = ex.expected_cost_table(spec, n_hi, mode="float64")
        source = table
    elif args.source == "rep12":
        eg = float(spec.expected_branch)

        def source(n: int) -> float:
            if n < d:
                return 1.0
            return mc.rep12_estimate(measure, eg, d, n, args.replicas, args.seed).mean

    else:

        def source(n: int) -> float:
            return mc.estimate_cost(spec, n, args.replicas, args.seed).mean

    report = asy.convergence_report(spec, measure, span, n_set, source)
    _via_tmp(asy.write_convergence_csv, os.path.join(out, "convergence.csv"), report)
    _write_manifest(
        out, "converge", args.spec,
        {
            "k_min": args.k_min, "k_max": args.k_max,
            "y_points": args.y_points, "source": args.source,
            "replicas": args.replicas,
        },
        args.seed, ["convergence.csv"],
    )
    return EXIT_OK


def _require_qary(spec) -> tuple[int, int] | None:
    q = spec.constant_degree()
    if q is None or not spec.is_symmetric_qary():
        return None
    return q, spec.threshold


def _study_lln(spec, args, out: str) -> tuple[list[str], dict]:
    qd = _require_qary(spec)
    if qd is None:
        raise SpecError("the lln study needs a symmetric constant-degree spec")
    q, d = qd
    levels = [int(s) for s in args.levels.split(",")]
    x_list = [float(q) ** k for k in levels]
    rows = mc.lln_study(q, d, x_list, args.replicas, args.eps, args.seed)
    _write_csv(
        os.path.join(out, "lln.csv"),
        ["x", "exceed_freq", "stderr", "replicas"],
        ([_cell(r.x), _cell(r.exceed_freq), _cell(r.stderr), r.replicas] for r in rows),
    )
    first, last = rows[0], rows[-1]
    two_se = 2.0 * math.hypot(first.stderr, last.stderr)
    verdict = {
        "nonincreasing_within_2se": last.exceed_freq <= first.exceed_freq + two_se,
        "final_below_0.1": last.exceed_freq <= 0.1,
        "first_freq": first.exceed_freq,
        "final_freq": last.exceed_freq,
        "eps": args.eps,
    }
    return ["lln.csv"], verdict


def _study_clt(spec, args, out: str) -> tuple[list[str], dict]:
    qd = _require_qary(spec)
    if qd is None:
        raise SpecError("the clt study needs a symmetric constant-degree spec")
    q, d = qd
    rep = mc.clt_study(q, d, args.y, args.levels_clt, args.replicas, args.seed)
    _write_csv(
        os.path.join(out, "clt.csv"),
        ["x", "replicas", "mean", "variance", "skewness",
         "excess_kurtosis", "f2_value", "variance_ratio"],
        [[_cell(rep.x), rep.replicas, _cell(rep.mean), _cell(rep.variance),
          _cell(rep.skewness), _cell(rep.excess_kurtosis), _cell(rep.f2_value),
          _cell(rep.variance_ratio)]],
    )
    verdict = {
        "skewness_small": abs(rep.skewness) <= 0.15,
        "excess_kurtosis_small": abs(rep.excess_kurtosis) <= 0.3,
        "variance_ratio_near_1": 0.9 <= rep.variance_ratio <= 1.1,
        "skewness": rep.skewness,
        "excess_kurtosis": rep.excess_kurtosis,
        "variance_ratio": rep.variance_ratio,
    }
    return ["clt.csv"], verdict


def _study_psi(spec, args, out: str) -> tuple[list[str], dict]:
    if spec.has_sampler():
        raise SpecError("the psi study needs exact rational weights")
    measure = build_measure(spec)
    span = detect_span(measure)
    config = mc.WalkConfig(measure=measure, x=args.x)
    result = mc.psi_walk(config, args.replicas, args.seed)
    bound = mc.overshoot_bound(measure)
    target = 1.0 / measure.neg_log_moment
    _write_csv(
        os.path.join(out, "psi.csv"),
        ["x", "psi", "psi_stderr", "overshoot", "overshoot_stderr",
         "overshoot_bound", "limit_target", "arithmetic"],
        [[_cell(args.x), _cell(result.psi.mean), _cell(result.psi.stderr),
          _cell(result.overshoot.mean), _cell(result.overshoot.stderr),
          _cell(bound), _cell(target), span.arithmetic]],
    )
    verdict: dict = {
        "overshoot_below_bound": result.overshoot.mean
        <= bound + 4.0 * result.overshoot.stderr,
        "psi": result.psi.mean,
        "overshoot": result.overshoot.mean,
        "overshoot_bound": bound,
    }
    if not span.arithmetic:
        verdict["psi_matches_limit"] = (
            abs(result.psi.mean - target) <= 4.0 * result.psi.stderr
        )
        verdict["limit_target"] = target
    return ["psi.csv"], verdict


def _study_variance(spec, args, out: str) -> tuple[list[str], dict]:
    qd = _require_qary(spec)
    if qd is None:
        raise SpecError("the variance study needs a symmetric constant-degree spec")
    q, d = qd
    grid = [j / args.grid_size for j in range(args.grid_size)]
    rows = []
    all_ok = True
    for x in grid:
        quad = asy.f2_quadrature(q, d, x)
        mc_val, mc_se = asy.f2_montecarlo(q, d, x, args.replicas, args.seed)
        ok = abs(quad - mc_val) <= 3.0 * (mc_se + 1e-9)
        all_ok &= ok
        rows.append([_cell(x), _cell(quad), _cell(mc_val), _cell(mc_se), ok])
    _write_csv(
        os.path.join(out, "variance.csv"),
        ["x", "f2_quadrature", "f2_montecarlo", "mc_stderr", "agree"],
        rows,
    )
    return ["variance.csv"], {"dual_method_agree": all_ok}


_STUDIES = {
    "lln": _study_lln,
    "clt": _study_clt,
    "psi": _study_psi,
    "variance": _study_variance,
}


def cmd_study(args) -> int:
    spec, out = _load(args)
    outputs, verdict = _STUDIES[args.study](spec, args, out)
    _write_json(os.path.join(out, "verdict.json"), {"study": args.study, **verdict})
    outputs.append("verdict.json")
    params = {
        k: v for k, v in vars(args).items()
        if k not in ("spec", "out", "seed", "threads", "func", "study")
    }
    _write_manifest(out, f"study:{args.study}", args.spec, params, args.seed, outputs)
    passed = all(v for k, v in verdict.items() if isinstance(v, bool))
    return EXIT_OK if passed else EXIT_VERDICT


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, help="path to a JSON spec file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="root seed, default 0")
    p.add_argument(
        "--threads", type=int, default=1,
        help="worker hint; affects wall time only, never results",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="treesplit",
        description="Exact, simulated, and asymptotic costs of splitting algorithms.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="measure, span, and asymptotic constants")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("exact", help="expected-cost tables")
    _add_common(p)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--mode", choices=("exact", "float64"), default="exact")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("simulate", help="tree simulation at fixed n")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicas", type=int, required=True)
    p.add_argument("--node-budget", type=int, default=mc.DEFAULT_NODE_BUDGET)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("converge", help="cost ratios against the asymptotic prediction")
    _add_common(p)
    p.add_argument("--k-min", type=int, default=4)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--y-points", type=int, default=4)
    p.add_argument("--source", choices=("exact", "rep12", "tree"), default="exact")
    p.add_argument("--replicas", type=int, default=100_000,
                   help="replicas per n for Monte Carlo sources")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("study", help="statistical diagnostics with a verdict")
    _add_common(p)
    p.add_argument("--study", choices=tuple(_STUDIES), required=True)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--levels", default="6,8,10,12", help="lln: exponents of Q for x")
    p.add_argument("--eps", type=float, default=0.05, help="lln: deviation threshold")
    p.add_argument("--y", type=float, default=1.0, help="clt: x = y * Q^levels")
    p.add_argument("--clt-levels", dest="levels_clt", type=int, default=12)
    p.add_argument("--x", type=float, default=30.0, help="psi: crossing level")
    p.add_argument("--grid-size", type=int, default=4, help="variance: F2 grid points")
    p.set_defaults(func=cmd_study)

    return ap


_DEFAULT_REPLICAS = {"lln": 200, "clt": 2000, "psi": 1_000_000, "variance": 10_000_000}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "study" and args.replicas is None:
        args.replicas = _DEFAULT_REPLICAS[args.study]
    if getattr(args, "threads", 1) < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_SPEC
    if getattr(args, "replicas", 2) is not None and getattr(args, "replicas", 2) < 2:
        print("--replicas must be at least 2", file=sys.stderr)
        return EXIT_SPEC
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except mc.SimulationBudgetError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
