"""Command-line front end.

Subcommands: ``solve``, ``verify``, ``generate`` and ``bench``. Exit codes:
0 success, 2 bad input, 3 solver failure, 4 verification mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import extensions
from .disutility import ProfileMap
from .equilibrium import (EquilibriumCertificate, VerifyReport, from_kkt_general,
                          from_kkt_linear, verify_ceei)
from .errors import InputError, InvalidRange, IterationCapExceeded, ParseError, SolverError
from .instance import (CES, Instance, Linear, Mode, dump_result, linear_instance, load_result,
                       parse_instance, preprocess, serialize_instance)
from .solver import (TRACE_COLUMNS, SolverParams, iteration_bound, solve_kkt_general,
                     solve_kkt_linear)

log = logging.getLogger("choreeq")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


def _setup_logging():
    level = os.environ.get("CHOREEQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_trace(path: str, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_tuple()])
    Path(path).write_text(buf.getvalue())


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one ``solve`` run."""

    command: str
    epsilon: float
    seed: int = 0
    instance: str | None = None
    out: str | None = None
    trace: str | None = None
    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    max_iters: int = 10000

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidRange("--eps must lie in (0, 1)")
        if self.seed < 0:
            raise InvalidRange("--seed must be nonnegative")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        return cls(args.command, args.eps, args.seed, args.instance, args.out, args.trace,
                   args.eps1, args.eps2, args.eps3, args.max_iters)

    def solver_params(self) -> SolverParams:
        return SolverParams(epsilon=self.epsilon, eps1=self.eps1, eps2=self.eps2,
                            eps3=self.eps3, max_iters=self.max_iters)


def _load_weights(path):
    if path is None:
        return None
    try:
        w = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed weights JSON: {exc}") from None
    if isinstance(w, dict):
        w = w.get("weights")
    if not isinstance(w, list):
        raise ParseError("weights file must hold a list (or {\"weights\": [...]})")
    return [float(v) for v in w]


def _certificate_dict(eq: EquilibriumCertificate) -> dict:
    out = {"mode": eq.mode, "passed": eq.passed, "residuals": eq.residuals}
    k = eq.kkt
    if k is not None:
        out.update(a=k.a, d=k.d, gamma=k.gamma, delta=k.delta, iterations=k.iterations,
                   branch=k.branch, bounds=k.bounds)
        out["lambda"] = k.lambda_
    if eq.measured is not None:
        out["measured"] = eq.measured
    return out


def _solve_chores(inst: Instance, params: SolverParams, weights):
    """Solve a chores instance, stripping and restoring zero-cost chores."""
    pre = preprocess(inst)
    core = pre.instance
    if core is None:
        # every chore is free for somebody: zero prices, zero disutility
        x, p = pre.reinsert(np.zeros((inst.n, 0)), np.zeros(0))
        report = VerifyReport(True, 0.0, 0.0, 0.0, params.epsilon)
        return EquilibriumCertificate(x, p, params.epsilon, report, "Trivial")
    if weights is not None:
        eq = extensions.solve_weighted(core, weights, params.epsilon, params)
    elif core.is_linear:
        eq = from_kkt_linear(core, solve_kkt_linear(core, params))
    else:
        pm = ProfileMap.from_instance(core)
        eq = from_kkt_general(pm, solve_kkt_general(pm, params))
    x, p = pre.reinsert(eq.x, eq.p)
    report = verify_ceei(inst, x, p, eq.epsilon, weights=eq.weights)
    return EquilibriumCertificate(x, p, eq.epsilon, report, eq.mode, eq.kkt, eq.weights,
                                  eq.measured)


def _verify_result(inst: Instance, result: dict, eps: float | None):
    x = np.asarray(result["allocation"], dtype=float)
    p = np.asarray(result["prices"], dtype=float)
    eps = float(result["epsilon"]) if eps is None else eps
    category = result.get("category")
    if inst.mode is Mode.MIXED and category == "Positive":
        return extensions.verify_goods_market(inst.matrix(), x, p, eps)
    if inst.mode is Mode.MIXED and category == "Null":
        U = inst.matrix()
        util = (U * x).sum(axis=1)
        worst = float(max(np.abs(util).max(), np.abs(x.sum(axis=0) - 1.0).max()))
        return VerifyReport(worst <= extensions.WITNESS_TOL, 0.0, float(np.abs(util).max()),
                            float(np.abs(x.sum(axis=0) - 1.0).max()), eps)
    target = inst
    if inst.mode is Mode.MIXED:
        target = linear_instance(-inst.matrix(), mode=Mode.MIXED)
    weights = result.get("weights")
    return verify_ceei(target, x, p, eps, weights=weights)


def cmd_solve(args) -> int:
    inst = parse_instance(_read_text(args.instance))
    if args.mode is not None:
        inst = Instance(inst.n, inst.m, inst.disutilities, inst.weights, Mode(args.mode))
    if args.verify_only:
        if args.out is None:
            raise InputError("--verify-only needs --out pointing at an existing result")
        report = _verify_result(inst, load_result(_read_text(args.out)), None)
        _write(None, dump_result({"verify": report.residuals, "passed": report.passed}))
        return EXIT_OK if report.passed else EXIT_VERIFY
    cfg = RunConfig.from_args(args)
    params = cfg.solver_params()
    weights = _load_weights(args.weights)
    if weights is None and inst.weights is not None:
        weights = list(inst.weights)
    result = {}
    try:
        if inst.mode is Mode.MIXED:
            cls, eq = extensions.solve_mixed(inst, params.epsilon, params)
            result["category"] = cls.category.value
        else:
            eq = _solve_chores(inst, params, weights)
    except IterationCapExceeded as exc:
        if cfg.trace:
            write_trace(cfg.trace, exc.trace)
        raise
    result.update(allocation=eq.x, prices=eq.p, epsilon=eq.epsilon,
                  certificate=_certificate_dict(eq))
    if eq.weights is not None:
        result["weights"] = eq.weights
    if cfg.trace and eq.kkt is not None:
        write_trace(cfg.trace, eq.kkt.trace)
        result["trace_file"] = cfg.trace
    _write(cfg.out, dump_result(result))
    if not eq.passed:
        log.error("certificate failed self-verification: %s", eq.residuals)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = parse_instance(_read_text(args.instance))
    report = _verify_result(inst, load_result(_read_text(args.result)), args.eps)
    _write(args.out, dump_result({"verify": report.residuals, "passed": report.passed,
                                  "epsilon": report.epsilon}))
    return EXIT_OK if report.passed else EXIT_VERIFY


def generate_instance(n: int, m: int, kind: str, lo: float, hi: float, seed: int) -> Instance:
    if n < 1 or m < 1:
        raise InvalidRange("n and m must be positive")
    if not (0.0 < lo <= hi) or not np.isfinite(hi):
        raise InvalidRange(f"coefficient range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    C = rng.uniform(lo, hi, size=(n, m))
    if kind == "linear":
        return Instance(n, m, tuple(Linear(tuple(map(float, r))) for r in C))
    if kind == "ces":
        rhos = rng.choice([1.5, 2.0, 3.0], size=n)
        return Instance(n, m, tuple(CES(tuple(map(float, r)), float(rho))
                                    for r, rho in zip(C, rhos)))
    if kind == "mixed":
        signs = rng.choice([-1.0, 1.0], size=(n, m))
        if not np.any(signs < 0):
            signs[rng.integers(n), rng.integers(m)] = -1.0
        U = signs * C
        return Instance(n, m, tuple(Linear(tuple(map(float, r))) for r in U), mode=Mode.MIXED)
    raise InvalidRange(f"unknown kind {kind!r}")


def cmd_generate(args) -> int:
    lo, hi = args.range
    inst = generate_instance(args.n, args.m, args.kind, lo, hi, args.seed)
    _write(args.out, serialize_instance(inst))
    return EXIT_OK


BENCH_COLUMNS = ("instance", "n", "m", "eps", "iters", "bound", "wall_ms", "pass")


def cmd_bench(args) -> int:
    suite = Path(args.suite)
    if not suite.is_dir():
        raise ParseError(f"{suite} is not a directory")
    eps_list = [float(e) for e in args.eps_list.split(",") if e.strip()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    all_ok = True
    for path in sorted(suite.glob("*.json")):
        inst = parse_instance(path.read_text())
        for eps in eps_list:
            params = SolverParams(epsilon=eps, max_iters=args.max_iters)
            t0 = time.perf_counter()
            if inst.is_linear and inst.mode is Mode.CHORES:
                cert = solve_kkt_linear(inst, params)
                eq = from_kkt_linear(inst, cert)
                bound = iteration_bound(inst, eps)
                ok = eq.passed and cert.iterations <= bound
            else:
                eq = _solve_chores(inst, params, None)
                cert, bound = eq.kkt, ""
                ok = eq.passed
            wall = (time.perf_counter() - t0) * 1000.0
            all_ok &= bool(ok)
            w.writerow([path.name, inst.n, inst.m, eps, cert.iterations, bound,
                        f"{wall:.1f}", "pass" if ok else "fail"])
    _write(args.out, buf.getvalue())
    return EXIT_OK if all_ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choreeq",
                                 description="Approximate competitive equilibria for chores.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve an instance and write a certificate")
    s.add_argument("instance")
    s.add_argument("-o", "--out")
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--eps1", type=float)
    s.add_argument("--eps2", type=float)
    s.add_argument("--eps3", type=float)
    s.add_argument("--max-iters", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0, help="accepted for symmetry; solving is deterministic")
    s.add_argument("--trace", metavar="PATH")
    s.add_argument("--weights", metavar="PATH")
    s.add_argument("--mode", choices=["chores", "mixed"])
    s.add_argument("--verify-only", action="store_true",
                   help="verify the result at --out instead of solving")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a result against its instance")
    v.add_argument("instance")
    v.add_argument("result")
    v.add_argument("--eps", type=float, help="tolerance (default: the result's epsilon)")
    v.add_argument("-o", "--out")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--kind", choices=["linear", "ces", "mixed"], default="linear")
    g.add_argument("--range", type=float, nargs=2, default=(1.0, 10.0), metavar=("LO", "HI"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench", help="solve every instance in a directory")
    b.add_argument("suite")
    b.add_argument("--eps-list", default="0.1,0.01")
    b.add_argument("--max-iters", type=int, default=10000)
    b.add_argument("-o", "--out")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SolverError as exc:
        log.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
