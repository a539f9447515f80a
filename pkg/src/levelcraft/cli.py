"""Config-driven experiment runner.

``levelcraft run --config cfg.toml`` picks a problem family and an algorithm
from a TOML file, runs one solve, and writes a machine-readable trace CSV, a
summary JSON, and an optional SVG convergence chart, all atomically.
``sweep`` repeats a run across one parameter's values and tabulates oracle
costs; ``probe-v`` evaluates certified brackets of the value function on an
eta grid. Exit codes: 0 converged, 2 not converged, 1 config/ingest error.
Set LEVELCRAFT_LOG to error, info, or debug to control logging.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - environment dependent
    import tomli as tomllib

from . import apmm as apmm_mod
from .apmm import apmm_solve, constant_schedule, nesterov_schedule, rapmm_solve
from .levelset import LevelConfig, fixed_point_solve, probe_value_function, secant_solve
from .oracle import ConstrainedProblem
from .problems import (IngestError, NpcHyper, gen_lmi, gen_qcqp, gen_socp_kkt,
                       load_npc, make_desk_qcqp, make_npc_blob_problem)
from .plot import render_trace_svg
from .report import SolverReport, write_atomic_text, trace_csv_text

log = logging.getLogger("levelcraft")

PROBLEM_KINDS = ("desk", "qcqp", "socp", "lmi", "npc")
ALGORITHM_KINDS = ("apmm", "pmm", "rapmm", "apl-fixed-point", "apl-secant")
POLICY_KINDS = ("domain", "full", "limited", "averaging")
SWEEP_PARAMS = ("beta", "alpha", "nu", "bundle")


class ConfigError(RuntimeError):
    """The run configuration is invalid; reported before any solve starts."""


@dataclass
class RunConfig:
    problem: dict
    algorithm: dict
    out_dir: str = "runs/out"
    plot: bool = True
    seed: int = 0

    @staticmethod
    def from_file(path: str) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from None
        if "problem" not in raw or "algorithm" not in raw:
            raise ConfigError("config needs [problem] and [algorithm] tables")
        out = raw.get("output", {})
        cfg = RunConfig(problem=dict(raw["problem"]), algorithm=dict(raw["algorithm"]),
                        out_dir=str(out.get("dir", "runs/out")),
                        plot=bool(out.get("plot", True)),
                        seed=int(raw["problem"].get("seed", 0)))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        alg = self.algorithm.get("kind")
        if alg not in ALGORITHM_KINDS:
            raise ConfigError(f"algorithm.kind must be one of {ALGORITHM_KINDS}, got {alg!r}")
        a = self.algorithm
        eps = float(a.get("eps", 1e-3))
        if eps <= 0:
            raise ConfigError("algorithm.eps must be positive")
        bundle = int(a.get("bundle", 5))
        if bundle < 1:
            raise ConfigError("algorithm.bundle must be at least 1")
        policy = a.get("policy", "limited")
        if policy not in POLICY_KINDS:
            raise ConfigError(f"algorithm.policy must be one of {POLICY_KINDS}")
        schedule = a.get("schedule")
        if schedule is not None and schedule not in ("nesterov", "constant"):
            raise ConfigError("algorithm.schedule must be 'nesterov' or 'constant'")
        if alg in ("apl-fixed-point", "apl-secant"):
            try:
                self.level_config()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if alg == "rapmm":
            theta = float(a.get("theta", 0.5))
            if not 0.0 < theta < 1.0:
                raise ConfigError("algorithm.theta must lie in (0, 1)")

    def level_config(self) -> LevelConfig:
        a = self.algorithm
        method = "secant" if a["kind"] == "apl-secant" else "fixed_point"
        max_outer = a.get("max_iters")
        return LevelConfig(alpha=float(a.get("alpha", 1.36)),
                           beta=float(a.get("beta", 0.9 if method == "fixed_point" else 1.0)),
                           nu=float(a.get("nu", 0.9)),
                           eps=float(a.get("eps", 1e-3)),
                           method=method,
                           bundle=int(a.get("bundle", 5)),
                           max_outer=int(max_outer) if max_outer is not None else None)

    def policy(self) -> apmm_mod.LocalizerPolicy:
        name = self.algorithm.get("policy", "limited")
        bundle = int(self.algorithm.get("bundle", 5))
        if name == "limited":
            return apmm_mod.limited_memory(bundle)
        return apmm_mod.LocalizerPolicy(name)


def build_problem(cfg: RunConfig) -> ConstrainedProblem:
    p = cfg.problem
    kind = p["kind"]
    seed = cfg.seed
    if kind == "desk":
        return make_desk_qcqp(scale=float(p.get("scale", 1.0)))
    if kind == "qcqp":
        return gen_qcqp(seed, int(p.get("n", 10)), int(p.get("m", 3)))
    if kind == "socp":
        cones = tuple(int(c) for c in p.get("cones", (20, 20)))
        return gen_socp_kkt(seed, cone_sizes=cones, n_eq=int(p.get("rows", 9)))
    if kind == "lmi":
        return gen_lmi(seed, int(p.get("q", 10)), int(p.get("k", 4)))
    if kind == "npc":
        mode = p.get("mode", "binary")
        if mode not in ("binary", "multiclass"):
            raise ConfigError("problem.mode must be 'binary' or 'multiclass'")
        default_kappa = 0.5 if mode == "binary" else 0.8
        hyper = NpcHyper(kappa=p.get("kappa", default_kappa),
                         r=float(p.get("r", 7.0)),
                         ridge=float(p.get("ridge", 0.01)))
        if "csv" in p:
            return load_npc(str(p["csv"]), mode, hyper, header=bool(p.get("header", False)))
        return make_npc_blob_problem(seed, mode, hyper,
                                     n_per_class=int(p.get("n_per_class", 20)),
                                     d=int(p.get("d", 2)))
    raise ConfigError(f"unknown problem kind {kind!r}")  # pragma: no cover - validated


def _resolve_fstar(cfg: RunConfig, problem: ConstrainedProblem) -> float:
    if "fstar" in cfg.algorithm:
        return float(cfg.algorithm["fstar"])
    if problem.known_fstar is not None:
        return float(problem.known_fstar)
    raise ConfigError("this algorithm needs algorithm.fstar (problem has no known optimal value)")


def solve(cfg: RunConfig, problem: ConstrainedProblem) -> "tuple[np.ndarray, SolverReport]":
    a = cfg.algorithm
    kind = a["kind"]
    eps = float(a.get("eps", 1e-3))
    max_iters = int(a.get("max_iters", 5000))
    if kind in ("apl-fixed-point", "apl-secant") and not problem.domain.is_finite():
        raise ConfigError(f"level-set methods need a bounded domain box; "
                          f"problem kind {cfg.problem.get('kind')!r} has an unbounded one")
    if kind in ("apmm", "pmm", "rapmm"):
        fstar = _resolve_fstar(cfg, problem)
        default_sched = "constant" if kind == "pmm" else "nesterov"
        sched_name = a.get("schedule", default_sched)
        sched = constant_schedule() if sched_name == "constant" else nesterov_schedule()
        if kind == "rapmm":
            return rapmm_solve(problem, fstar, float(a.get("theta", 0.5)), eps,
                               sched=sched, policy=cfg.policy(), inner_max_iters=max_iters)
        return apmm_solve(problem, fstar, eps, sched=sched, policy=cfg.policy(),
                          max_iters=max_iters)
    level_cfg = cfg.level_config()
    if kind == "apl-fixed-point":
        return fixed_point_solve(problem, level_cfg)
    return secant_solve(problem, level_cfg)


def _summary(cfg: RunConfig, report: SolverReport, x) -> dict:
    final = report.final
    return {
        "algorithm": report.algorithm,
        "config": {"problem": cfg.problem, "algorithm": cfg.algorithm, "seed": cfg.seed},
        "status": report.status,
        "iterations": report.iterations,
        "fevals": report.fevals,
        "gevals": report.gevals,
        "qp_solves": final.qp_solves if final else 0,
        "lp_solves": final.lp_solves if final else 0,
        "final": {
            "upper": final.upper if final else None,
            "lower": final.lower if final else None,
            "obj_gap": final.obj_gap if final else None,
            "violation": final.violation if final else None,
        },
        "x": [float(v) for v in np.asarray(x).ravel()],
        "wall_time_s": report.wall_time,
    }


def run(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    x, report = solve(cfg, problem)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_atomic_text(os.path.join(cfg.out_dir, "trace.csv"), trace_csv_text(report.records))
    write_atomic_text(os.path.join(cfg.out_dir, "summary.json"),
                      json.dumps(_summary(cfg, report, x), indent=2, sort_keys=True) + "\n")
    if cfg.plot:
        svg = render_trace_svg(report.records, y_field="upper", x_field="gevals",
                               title=f"{report.algorithm} on {cfg.problem['kind']}")
        write_atomic_text(os.path.join(cfg.out_dir, "trace.svg"), svg)
    final = report.final
    print(f"{report.algorithm}: {report.status} after {report.iterations} iterations, "
          f"{report.gevals} gradient evaluations"
          + (f", final bound {final.upper:.3e}" if final and final.upper is not None else ""))
    return 0 if report.converged else 2


def sweep(cfg: RunConfig, param: str, values: list) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    rows = ["value,status,iterations,fevals,gevals,final_upper"]
    any_error = False
    for value in values:
        sub = RunConfig(problem=dict(cfg.problem), algorithm=dict(cfg.algorithm),
                        out_dir=cfg.out_dir, plot=False, seed=cfg.seed)
        sub.algorithm[param] = int(value) if param == "bundle" else float(value)
        try:
            sub.validate()
            problem = build_problem(sub)
            _, report = solve(sub, problem)
            final = report.final
            upper = "" if final is None or final.upper is None else repr(final.upper)
            rows.append(f"{value},{report.status},{report.iterations},"
                        f"{report.fevals},{report.gevals},{upper}")
            log.info("sweep %s=%s: %s", param, value, report.status)
        except (ConfigError, IngestError, ValueError) as exc:
            any_error = True
            rows.append(f"{value},error,,,,")
            log.error("sweep %s=%s failed: %s", param, value, exc)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"sweep_{param}.csv")
    write_atomic_text(path, "\n".join(rows) + "\n")
    print(f"sweep over {param}: {len(values)} runs -> {path}")
    return 1 if any_error else 0


def probe(cfg: RunConfig, etas: list) -> int:
    problem = build_problem(cfg)
    rel_alpha = float(cfg.algorithm.get("alpha", 1.36))
    floor = float(cfg.algorithm.get("eps", 1e-6))
    brackets = probe_value_function(problem, etas, rel_alpha,
                                    floor=floor, bundle_cap=int(cfg.algorithm.get("bundle", 5)))
    rows = ["eta,lower,upper"]
    for eta, lo, hi in brackets:
        rows.append(f"{eta!r},{lo!r},{hi!r}")
        print(f"V({eta:+.6g}) in [{lo:+.6g}, {hi:+.6g}]")
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_atomic_text(os.path.join(cfg.out_dir, "probe.csv"), "\n".join(rows) + "\n")
    return 0


def _parse_values(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"could not parse values list {text!r}: {exc}") from None


def main(argv: Optional[list] = None) -> int:
    level = os.environ.get("LEVELCRAFT_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")

    parser = argparse.ArgumentParser(prog="levelcraft",
                                     description="parameter-free constrained convex solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_probe = sub.add_parser("probe-v", help="bracket the value function on an eta grid")
    for p in (p_run, p_sweep, p_probe):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="problem seed override")
    p_sweep.add_argument("--param", required=True, help=f"one of {SWEEP_PARAMS}")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_probe.add_argument("--etas", required=True, help="comma-separated level values")

    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "run":
            return run(cfg)
        if args.command == "sweep":
            return sweep(cfg, args.param, _parse_values(args.values))
        return probe(cfg, _parse_values(args.etas))
    except (ConfigError, IngestError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
