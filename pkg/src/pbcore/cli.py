"""Command line: solve, verify, gen, bench.

Exit codes: 0 ok, 1 input or IO error, 2 NW non-convergence, 3 rounding cap
exhausted, 4 verified alpha above the threshold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .iter_round import (DriverParams, NonConvergence, ParameterError, SolveReport, solve_additive,
                         solve_submodular)
from .model import Instance, InstanceError, _Gadget, dump_instance, load_instance
from .rounding import RoundingCapExceeded
from .verify import (EnumerationTooLarge, ProfileError, gen_lower_bound, min_alpha, probe_min_alpha,
                     random_additive, random_coverage)

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_ROUNDING, EXIT_ABOVE = 0, 1, 2, 3, 4
WORKERS_ENV = "PBCORE_WORKERS"
SEED_ENV = "PBCORE_SEED"
BENCH_COLUMNS = ["seed", "n", "m", "rounds", "nw_iters", "attempts", "wall_time", "min_alpha",
                 "guarantee", "error"]

logger = logging.getLogger("pbcore")


@dataclass
class RunConfig:
    command: str
    instance: str | None = None
    output: str | None = None
    preset: str = "auto"
    overrides: dict = field(default_factory=dict)
    verifier: str = "auto"


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(os.environ.get(SEED_ENV, "0"))


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def driver_params(inst: Instance, preset: str, seed: int, overrides: dict) -> tuple[DriverParams, str]:
    if preset == "auto":
        preset = "additive" if inst.all_additive else "submodular"
    base = DriverParams.additive if preset == "additive" else DriverParams.submodular
    kw = {k: v for k, v in overrides.items() if v is not None}
    params = base(seed=seed, **kw)
    params.check(params.eps if params.eps is not None else inst.epsilon)
    return params, preset


def run_solve(inst: Instance, params: DriverParams, preset: str) -> SolveReport:
    return solve_additive(inst, params) if preset == "additive" else solve_submodular(inst, params)


def verify_mode(inst: Instance, mode: str) -> str | None:
    if mode != "auto":
        return None if mode == "none" else mode
    if all(isinstance(v.oracle, _Gadget) for v in inst.voters) and np.allclose(inst.sizes, 1):
        return "profile"
    return "full" if inst.m <= 20 else None


def verify_committee(inst: Instance, O: np.ndarray, mode: str, strict: bool = False,
                     probes: int = 2000, seed: int = 0) -> dict:
    if mode == "probe":
        alpha, cert = probe_min_alpha(inst, O, probes, seed)
        kind = "lower bound"
    else:
        alpha, cert = min_alpha(inst, O, mode, strict_additament=strict)
        kind = "exact"
    return {"min_alpha": alpha if math.isfinite(alpha) else str(alpha), "mode": mode, "kind": kind,
            "strict_additament": strict, "certificate": cert.to_dict() if cert else None}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    try:
        inst = load_instance(args.inp)
        overrides = {"omega": args.omega, "gamma": args.gamma, "kappa": args.kappa, "eps": args.eps,
                     "profile": args.profile}
        params, preset = driver_params(inst, args.preset, _seed(args), overrides)
    except (OSError, InstanceError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run_solve(inst, params, preset)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except RoundingCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ROUNDING
    mode = verify_mode(inst, args.verify)
    if mode:
        try:
            report.certificate = verify_committee(inst, report.mask, mode)
            if preset == "additive":
                report.certificate["label"] = "empirical (NW-based)"
        except (EnumerationTooLarge, ProfileError) as exc:
            report.certificate = {"error": str(exc)}
    try:
        _emit(report.to_json(with_timestamp=not args.no_timestamp), args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _read_committee(path: str, inst: Instance) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    ids = data.get("committee") if isinstance(data, dict) else data
    if not isinstance(ids, list):
        raise InstanceError("committee file must hold a list of ids or an object with 'committee'")
    O = inst.mask(ids)
    if inst.cost(O) > inst.budget * (1 + 1e-12):
        logger.warning("committee costs %g, above the budget %g", inst.cost(O), inst.budget)
    return O


def cmd_verify(args) -> int:
    try:
        inst = load_instance(args.inp)
        O = _read_committee(args.committee, inst)
    except (OSError, json.JSONDecodeError, InstanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    mode = verify_mode(inst, args.mode) or "full"
    try:
        rep = verify_committee(inst, O, mode, args.strict_additament, args.probes, _seed(args))
    except (EnumerationTooLarge, ProfileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep["threshold"] = args.threshold
    text = json.dumps(rep, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    alpha = float(rep["min_alpha"])
    print(f"min_alpha = {alpha:.9g} ({rep['kind']}, {mode})")
    if rep["certificate"] and not args.out:
        sys.stdout.write(text)
    return EXIT_OK if alpha <= args.threshold else EXIT_ABOVE


def generate(family: str, args) -> Instance:
    seed = _seed(args)
    if family == "lb-submodular":
        kw = {"gadget_size": args.gadget_size}
        if args.z is not None:
            kw["z"] = args.z
        return gen_lower_bound("submodular", budget=args.b, **kw)
    if family == "lb-general":
        if args.alpha_lb is None:
            raise ValueError("lb-general needs --alpha-lb")
        return gen_lower_bound("general", gadget_size=args.gadget_size, budget=args.b, alpha_lb=args.alpha_lb)
    if family == "random-additive":
        return random_additive(args.n, args.m, args.b or 5.0, args.weight_dist, args.sizes, seed)
    if family == "random-coverage":
        return random_coverage(args.n, args.m, args.b or 5.0, args.universe, args.density, args.sizes, seed)
    raise ValueError(f"unknown family {family!r}")


def cmd_gen(args) -> int:
    try:
        inst = generate(args.family, args)
        _emit(dump_instance(inst), args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def bench_row(job: tuple) -> dict:
    family, seed, ns, preset, overrides = job
    row = {"seed": seed, "n": "", "m": "", "rounds": "", "nw_iters": "", "attempts": "", "wall_time": "",
           "min_alpha": "", "guarantee": "", "error": ""}
    try:
        inst = generate(family, argparse.Namespace(seed=seed, **ns))
        params, preset = driver_params(inst, preset, seed, overrides)
        row.update(n=inst.n, m=inst.m)
        t0 = time.perf_counter()
        rep = run_solve(inst, params, preset)
        row.update(rounds=len(rep.rounds), nw_iters=rep.nw_iters, attempts=rep.attempts,
                   guarantee=rep.alpha_guarantee)
        mode = verify_mode(inst, "auto")
        if mode:
            row["min_alpha"] = float(min_alpha(inst, rep.mask, mode)[0])
        row["wall_time"] = time.perf_counter() - t0
    except Exception as exc:  # recorded per row
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_bench(args) -> int:
    seeds = range(args.seed_start, args.seed_start + args.runs)
    ns = {"n": args.n, "m": args.m, "b": args.b, "weight_dist": args.weight_dist, "sizes": args.sizes,
          "universe": args.universe, "density": args.density, "gadget_size": args.gadget_size,
          "z": None, "alpha_lb": args.alpha_lb}
    overrides = {"profile": args.profile}
    jobs = [(args.family, s, ns, args.preset, overrides) for s in seeds]
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(bench_row, jobs))
    else:
        rows = [bench_row(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in BENCH_COLUMNS])
    try:
        _emit(buf.getvalue(), args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if any(not r["error"] for r in rows) else EXIT_INPUT


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _gen_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--weight-dist", default="uniform", choices=["uniform", "exponential", "approval"])
    p.add_argument("--sizes", default="unit", choices=["unit", "random"])
    p.add_argument("--universe", type=int, default=8)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--gadget-size", type=int, default=5)
    p.add_argument("--alpha-lb", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbcore", description="Core-stable committee selection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the iterative rounding driver")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.add_argument("--preset", default="auto", choices=["auto", "submodular", "additive"])
    p.add_argument("--seed", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--profile", choices=["practical", "proof"])
    p.add_argument("--verify", default="auto", choices=["auto", "none", "full", "profile"])
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="minimum alpha of a committee")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--committee", required=True)
    p.add_argument("--mode", default="auto", choices=["auto", "full", "profile", "probe"])
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--strict-additament", action="store_true")
    p.add_argument("--probes", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("family", choices=["lb-general", "lb-submodular", "random-additive", "random-coverage"])
    _gen_args(p)
    p.add_argument("--z", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="sweep seeds and write a CSV summary")
    p.add_argument("--family", default="random-additive",
                   choices=["lb-general", "lb-submodular", "random-additive", "random-coverage"])
    _gen_args(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed-start", type=int, default=0)
    p.add_argument("--preset", default="auto", choices=["auto", "submodular", "additive"])
    p.add_argument("--profile", choices=["practical", "proof"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
