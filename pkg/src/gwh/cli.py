"""Command-line front end: config parsing, dispatch, deterministic reports.

Reports are JSON (schema_version 1) or CSV with 17-significant-digit floats,
written atomically.  Runs echo their fully resolved configuration, so every
report reproduces its own run; the worker-thread count is execution
infrastructure and deliberately not echoed (results do not depend on it).

Exit codes: 0 success; 2 validation failure (ParseError/ConfigError); 3
numerical failure (NoRoot/Integrability/Horizon and the other run-time
errors); 4 first-order verification FAIL under --verify.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import control as ctl
from . import extrema as ext
from . import gittins as git
from . import oracle as orc
from . import stopping as stp
from .errors import ConfigError, GwhError, ParseError
from .levy import (
    CompoundPoisson,
    ExponentialDown,
    ExponentialUp,
    LevyModel,
    PointMass,
    TwoSidedExponential,
    ZERO,
    laplace_exponent,
    phi_right_inverse,
    simulate_path,
)
from .mc import MCEstimate, SimConfig
from .payoffs import ConstantFn, ExpFn, LinearFn

SCHEMA_VERSION = 1

_VALIDATION_EXIT = 2
_NUMERICAL_EXIT = 3
_VERIFY_FAIL_EXIT = 4

_MODEL_KEYS = {"drift", "sigma", "jump"}
_JUMP_KEYS = {"kind", "rate", "a", "b", "p", "size"}


# ---------------------------------------------------------------------------
# Model and payoff parsing
# ---------------------------------------------------------------------------


def parse_model_table(table: dict) -> LevyModel:
    unknown = set(table) - _MODEL_KEYS
    if unknown:
        raise ParseError(f"unknown model key(s): {sorted(unknown)}")
    drift = float(table.get("drift", 0.0))
    sigma = float(table.get("sigma", 0.0))
    jumps = None
    if "jump" in table:
        jt = table["jump"]
        if not isinstance(jt, dict):
            raise ParseError("jump must be a table of keys kind/rate/a/b/p/size")
        unknown = set(jt) - _JUMP_KEYS
        if unknown:
            raise ParseError(f"unknown jump key(s): {sorted(unknown)}")
        kind = jt.get("kind")
        if kind is None:
            raise ParseError("jump.kind is required when a jump table is present")
        if "rate" not in jt:
            raise ParseError("jump.rate is required")
        rate = float(jt["rate"])

        def need(key):
            if key not in jt:
                raise ParseError(f"jump.{key} is required for jump.kind = {kind!r}")
            return float(jt[key])

        if kind == "exp_up":
            law = ExponentialUp(need("a"))
        elif kind == "exp_down":
            law = ExponentialDown(need("b"))
        elif kind == "two_sided":
            law = TwoSidedExponential(need("a"), need("b"), need("p"))
        elif kind == "point":
            law = PointMass(need("size"))
        else:
            raise ParseError(f"unknown jump.kind {kind!r}")
        jumps = CompoundPoisson(rate=rate, law=law)
    return LevyModel(drift=drift, sigma=sigma, jumps=jumps)


def load_model(path: str) -> LevyModel:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"model file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed model file {path}: {exc}") from exc
    return parse_model_table(data)


def model_jsonable(model: LevyModel) -> dict:
    out = {"drift": model.drift, "sigma": model.sigma}
    if model.jumps is not None:
        law = model.jumps.law
        jt = {"rate": model.jumps.rate}
        if isinstance(law, ExponentialUp):
            jt.update(kind="exp_up", a=law.a)
        elif isinstance(law, ExponentialDown):
            jt.update(kind="exp_down", b=law.b)
        elif isinstance(law, TwoSidedExponential):
            jt.update(kind="two_sided", a=law.a, b=law.b, p=law.p)
        else:
            jt.update(kind="point", size=law.size)
        out["jump"] = jt
    return out


def parse_payoff(text: str) -> git.PayoffSpec:
    """Payoff grammar: linear:a=..,b=.. | exp:scale=..,coef=..,shift=.. | const:c=.."""
    kind, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            if not _:
                raise ParseError(f"malformed payoff parameter {item!r}")
            params[k.strip()] = float(v)
    if kind == "linear":
        a = params.pop("a", 1.0)
        b = params.pop("b", 0.0)
        fn = LinearFn(a, b)
        direction = "increasing" if a >= 0 else "decreasing"
    elif kind == "exp":
        fn = ExpFn(params.pop("scale", 1.0), params.pop("coef", 1.0), params.pop("shift", 0.0))
        direction = "increasing" if fn.scale * fn.coef >= 0 else "decreasing"
    elif kind == "const":
        fn = ConstantFn(params.pop("c", 0.0))
        direction = "increasing"
    else:
        raise ParseError(f"unknown payoff kind {kind!r}")
    if params:
        raise ParseError(f"unknown payoff parameter(s): {sorted(params)}")
    return git.PayoffSpec(fn, direction)


def parse_cost(text: str) -> tuple[str, dict]:
    kind, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            if not _:
                raise ParseError(f"malformed cost parameter {item!r}")
            params[k.strip()] = float(v)
    if kind != "quadratic":
        raise ParseError(f"unknown cost kind {kind!r} (supported: quadratic)")
    return kind, params


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ParseError(f"grid must be lo:hi:count, got {text!r}") from exc


def parse_cobb(text: str) -> ctl.CobbDouglasSpec:
    params = {}
    for item in text.split(","):
        k, _, v = item.partition("=")
        if not _:
            raise ParseError(f"malformed cobb parameter {item!r}")
        params[k.strip()] = float(v)
    unknown = set(params) - {"C", "alpha", "beta"}
    if unknown:
        raise ParseError(f"unknown cobb parameter(s): {sorted(unknown)}")
    try:
        return ctl.CobbDouglasSpec(
            C=params["C"], alpha=params["alpha"], beta=params["beta"]
        )
    except KeyError as exc:
        raise ParseError(f"cobb requires C, alpha, beta; missing {exc}") from exc


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------

_PROBLEMS = {
    "psi",
    "phi",
    "extrema",
    "kappa",
    "stop",
    "put",
    "follower",
    "invest",
    "esscher-invest",
    "oracle-stop",
    "oracle-follower",
    "compare",
}

_SIM_KEYS = {"reps", "step", "seed", "horizon", "threads"}
_OUTPUT_KEYS = {"path", "format"}


@dataclass(frozen=True)
class RunConfig:
    problem: str
    model: LevyModel
    args: dict
    sim: SimConfig
    out: str | None
    fmt: str
    verify: bool = False

    def echo(self) -> dict:
        sim = {
            "reps": self.sim.reps,
            "step": self.sim.step,
            "seed": self.sim.seed,
            "horizon": self.sim.horizon,
        }
        return {
            "problem": self.problem,
            "model": model_jsonable(self.model),
            "args": dict(sorted(self.args.items())),
            "sim": sim,
            "output": {"path": self.out, "format": self.fmt},
            "verify": self.verify,
        }


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a run-config document.

    Defaults: reps=10000, step=1e-3, seed=0.  Unknown keys are errors; every
    numeric field is validated before dispatch.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed config: {exc}") from exc
    unknown = set(data) - {"problem", "model", "args", "sim", "output", "verify"}
    if unknown:
        raise ParseError(f"unknown config section/key(s): {sorted(unknown)}")
    problem = data.get("problem")
    if problem not in _PROBLEMS:
        raise ParseError(f"problem must be one of {sorted(_PROBLEMS)}, got {problem!r}")
    model_field = data.get("model", {})
    if isinstance(model_field, str):
        model = load_model(model_field)
    else:
        model = parse_model_table(model_field)
    args = dict(data.get("args", {}))

    sim_table = dict(data.get("sim", {}))
    unknown = set(sim_table) - _SIM_KEYS
    if unknown:
        raise ParseError(f"unknown sim key(s): {sorted(unknown)}")
    threads = sim_table.pop("threads", None)
    env_threads = os.environ.get("GWH_THREADS")
    if env_threads is not None:
        threads = int(env_threads)
    sim = SimConfig(
        reps=int(sim_table.get("reps", 10_000)),
        step=float(sim_table.get("step", 1e-3)),
        seed=int(sim_table.get("seed", 0)),
        horizon=(float(sim_table["horizon"]) if "horizon" in sim_table else None),
        threads=(int(threads) if threads is not None else None),
    )

    out_table = dict(data.get("output", {}))
    unknown = set(out_table) - _OUTPUT_KEYS
    if unknown:
        raise ParseError(f"unknown output key(s): {sorted(unknown)}")
    fmt = out_table.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ParseError(f"output.format must be json or csv, got {fmt!r}")

    # Cross-field validation with the offending key named.
    if "r" in args and not (float(args["r"]) > 0):
        raise ParseError(f"args.r violates r > 0 (got {args['r']})")
    return RunConfig(
        problem=problem,
        model=model,
        args=args,
        sim=sim,
        out=out_table.get("path"),
        fmt=fmt,
        verify=bool(data.get("verify", False)),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt_float(x) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, MCEstimate):
        return {"mean": obj.mean, "stderr": obj.stderr, "n": obj.n}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def write_report(payload, out: str | None, fmt: str = "json") -> None:
    """Atomic write (temp file + rename); stdout when no path is given."""
    if fmt == "json":
        body = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    else:
        rows = payload if isinstance(payload, list) else payload.get("rows", [])
        lines = []
        if rows:
            header = list(rows[0].keys())
            lines.append(",".join(header))
            for row in rows:
                lines.append(
                    ",".join(
                        _fmt_float(row[k]) if isinstance(row[k], (int, float, np.floating)) else str(row[k])
                        for k in header
                    )
                )
        body = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(body)
        return
    d = os.path.dirname(os.path.abspath(out)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".gwh-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _payoff_from_args(args: dict) -> git.PayoffSpec:
    if "payoff" not in args:
        raise ParseError("args.payoff is required for this problem")
    return parse_payoff(str(args["payoff"]))


def _follower_spec(args: dict) -> ctl.FollowerCostSpec:
    kind, params = parse_cost(str(args.get("cost", "quadratic:k=1.0")))
    weight = params.pop("k", 1.0)
    if params:
        raise ParseError(f"unknown cost parameter(s): {sorted(params)}")
    return ctl.quadratic_follower(weight=weight, intervention=float(args.get("K", 0.0)))


def _lattice_from_args(args: dict, default_dt: float) -> orc.LatticeSpec:
    grid = parse_grid(str(args.get("lattice", "-6:6:401")))
    return orc.LatticeSpec(
        x_lo=float(grid[0]),
        x_hi=float(grid[-1]),
        nodes=len(grid),
        dt=float(args.get("dt", default_dt)),
    )


def run(config: RunConfig) -> int:
    """Dispatch a validated config; returns the process exit code."""
    args = config.args
    sim = config.sim
    model = config.model
    report: dict = {"schema_version": SCHEMA_VERSION, "config": config.echo()}
    problem = config.problem

    if problem == "psi":
        report["psi"] = laplace_exponent(model, float(args["c"]))
    elif problem == "phi":
        report["phi"] = phi_right_inverse(model, float(args["r"]))
    elif problem == "extrema":
        side = str(args.get("side", "inf"))
        law = (
            ext.infimum_law(model, float(args["r"]), sim=sim)
            if side == "inf"
            else ext.supremum_law(model, float(args["r"]), sim=sim)
        )
        report["law"] = _law_jsonable(law)
        if config.fmt == "csv":
            write_report(_law_rows(law), config.out, "csv")
            return 0
    elif problem == "kappa":
        payoff = _payoff_from_args(args)
        grid = parse_grid(str(args.get("x", "-2:2:81")))
        curve = git.build_curve(
            payoff, model, float(args["r"]), float(grid[0]), float(grid[-1]), len(grid), sim=sim
        )
        rows = [
            {"x": x, "kappa": v, "stderr": s}
            for x, v, s in zip(curve.grid, curve.values, curve.stderrs)
        ]
        write_report(rows, config.out, "csv")
        return 0
    elif problem == "stop":
        payoff = _payoff_from_args(args)
        res = stp.stopping_value(
            payoff, model, float(args["r"]), float(args["c"]), float(args["x"]), sim=sim
        )
        if math.isinf(res.threshold) and res.region == stp.CONTINUE:
            raise NoStopError("kappa stays below c on the curve: never stop")
        report.update(
            value=res.value, threshold=res.threshold, region=res.region
        )
    elif problem == "put":
        res = stp.perpetual_put(
            model, float(args["r"]), float(args["strike"]), float(args["x"]), sim=sim
        )
        report.update(price=res.price, threshold=res.threshold)
    elif problem == "follower":
        report.update(_run_follower(config))
        if config.verify and not report["foc"]["passed"]:
            write_report(report, config.out, config.fmt)
            print("first-order verification FAILED", file=sys.stderr)
            return _VERIFY_FAIL_EXIT
    elif problem == "invest":
        spec = parse_cobb(str(args["cobb"])).invest_spec(float(args.get("K", 1.0)))
        x = float(args.get("x", 0.0))
        report.update(
            L_at_x=ctl.invest_index(spec, model, float(args["r"]), x),
            payoff=ctl.cost_functional(
                spec,
                model,
                ctl.InvestStrategy(lambda z: ctl.invest_index(spec, model, float(args["r"]), z)),
                float(args["r"]),
                sim,
            ),
        )
    elif problem == "esscher-invest":
        model_y = (
            load_model(str(args["model_y"])) if "model_y" in args else ZERO
        )
        red = ctl.esscher_reduce(model, model_y, float(args["r"]), float(args["alpha"]))
        report.update(
            r_tilde=red.r_tilde,
            beta_coef=red.beta_coef,
            z_model=model_jsonable(red.z_model),
        )
    elif problem == "oracle-stop":
        payoff = _payoff_from_args(args)
        res = orc.dp_stopping_oracle(
            payoff.g, model, float(args["r"]), float(args["c"]), _lattice_from_args(args, 1e-3)
        )
        report.update(threshold_x=res.threshold_x, threshold_node=res.threshold_node)
    elif problem == "oracle-follower":
        spec = _follower_spec(args)
        res = orc.dp_follower_oracle(
            spec, model, float(args["r"]), _lattice_from_args(args, 1e-3)
        )
        report.update(boundary_x=res.boundary_x, boundary_node=res.boundary_node)
    elif problem == "compare":
        report.update(_run_compare(config))
    else:  # pragma: no cover - parse_config guards this
        raise ParseError(f"unhandled problem {problem!r}")

    write_report(report, config.out, config.fmt)
    return 0


class NoStopError(GwhError):
    """Degenerate stopping regime: the index never reaches the reward."""


def _law_jsonable(law) -> dict:
    if isinstance(law, ext.ExactExponentialLaw):
        return {"kind": "exact_exponential", "side": law.side, "rate": law.rate}
    if isinstance(law, ext.EmpiricalLaw):
        return {
            "kind": "empirical",
            "side": law.side,
            "step": law.step,
            "n_paths": law.n_paths,
            "samples": law.samples.tolist(),
        }
    return {
        "kind": "scale_function",
        "side": law.side,
        "r": law.table.r,
        "phi": law.table.phi,
        "grid": law.table.grid.tolist(),
        "w": law.table.w_values.tolist(),
    }


def _law_rows(law) -> list[dict]:
    if isinstance(law, ext.EmpiricalLaw):
        return [{"sample": s} for s in law.samples]
    if isinstance(law, ext.ExactExponentialLaw):
        return [{"side": law.side, "rate": law.rate}]
    return [{"x": x, "W": w} for x, w in zip(law.table.grid, law.table.w_values)]


def _run_follower(config: RunConfig) -> dict:
    args, sim, model = config.args, config.sim, config.model
    r = float(args["r"])
    spec = _follower_spec(args)
    x_star = ctl.follower_threshold(spec, model, r)
    strategy = ctl.ThresholdStrategy(x_star)
    cost = ctl.cost_functional(spec, model, strategy, r, sim)
    out = {"threshold": x_star, "cost": cost}
    if config.verify:
        horizon = float(args.get("outer_horizon", 30.0))
        outer_step = float(args.get("outer_step", 0.05))
        start = float(args.get("x", x_star + 1.0))
        outer = simulate_path(model, horizon, outer_step, start=start, seed=sim.seed)
        sg = ctl.subgradient_path(
            spec, model, strategy, r, outer,
            inner_reps=int(args.get("inner_reps", 200)), seed=sim.seed,
        )
        rep = ctl.verify_first_order(sg, strategy(outer), r)
        out["foc"] = {
            "positivity_violation_rate": rep.positivity_violation_rate,
            "flatoff": {"sum": rep.flatoff_sum, "stderr": rep.flatoff_se},
            "snell_min_z": rep.snell_min_z,
            "passed": rep.passed,
        }
    return out


def _run_compare(config: RunConfig) -> dict:
    args, sim, model = config.args, config.sim, config.model
    r = float(args["r"])
    spec = _follower_spec(args)
    x_star = ctl.follower_threshold(spec, model, r)
    base = ctl.ThresholdStrategy(x_star)
    strategies: list[tuple[str, object]] = []
    for name in str(args.get("strategies", "theta_star")).split(","):
        name = name.strip()
        if name == "theta_star":
            strategies.append((name, base))
        elif name.startswith("shift:"):
            strategies.append((name, base.shifted_control(float(name.split(":", 1)[1]))))
        elif name == "zero":
            strategies.append((name, ctl.ZeroStrategy()))
        elif name.startswith("const:"):
            strategies.append((name, ctl.ConstantStrategy(float(name.split(":", 1)[1]))))
        else:
            raise ParseError(f"unknown strategy {name!r}")
    rows = orc.policy_comparison(spec, model, r, strategies, sim=sim)
    return {
        "threshold": x_star,
        "rows": [
            {
                "name": row.name,
                "cost": row.cost.mean,
                "stderr": row.cost.stderr,
                "diff_vs_first": row.diff_vs_first.mean,
                "diff_se": row.diff_vs_first.stderr,
            }
            for row in rows
        ],
    }


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, model: bool = True):
    if model:
        p.add_argument("--model", required=True, help="model TOML file")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gwh", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    specs = {
        "psi": [("--c", float, True)],
        "phi": [("--r", float, True)],
        "extrema": [("--r", float, True), ("--side", str, False)],
        "kappa": [("--r", float, True), ("--payoff", str, True), ("--x", str, False)],
        "stop": [("--r", float, True), ("--payoff", str, True), ("--c", float, True), ("--x", float, True)],
        "put": [("--r", float, True), ("--strike", float, True), ("--x", float, True)],
        "follower": [("--r", float, True), ("--cost", str, False), ("--K", float, False), ("--verify", None, False), ("--x", float, False)],
        "invest": [("--r", float, True), ("--cobb", str, True), ("--K", float, False), ("--x", float, False)],
        "esscher-invest": [("--r", float, True), ("--alpha", float, True), ("--model-y", str, False)],
        "oracle-stop": [("--r", float, True), ("--payoff", str, True), ("--c", float, True), ("--lattice", str, False), ("--dt", float, False)],
        "oracle-follower": [("--r", float, True), ("--cost", str, False), ("--K", float, False), ("--lattice", str, False), ("--dt", float, False)],
        "compare": [("--r", float, True), ("--cost", str, False), ("--K", float, False), ("--strategies", str, False), ("--crn", None, False)],
        "run": [],
    }
    for name, opts in specs.items():
        p = sub.add_parser(name)
        if name == "run":
            p.add_argument("config", help="run-config TOML file")
            continue
        _add_common(p)
        for flag, typ, required in opts:
            if typ is None:
                p.add_argument(flag, action="store_true")
            else:
                p.add_argument(flag, type=typ, required=required)
    return ap


def _config_from_namespace(ns: argparse.Namespace) -> RunConfig:
    args = {}
    for key in ("c", "r", "side", "payoff", "x", "strike", "cost", "K", "cobb",
                "alpha", "strategies", "lattice", "dt"):
        val = getattr(ns, key, None)
        if val is not None:
            args[key] = val
    if getattr(ns, "model_y", None) is not None:
        args["model_y"] = ns.model_y
    threads = ns.threads
    env_threads = os.environ.get("GWH_THREADS")
    if env_threads is not None:
        threads = int(env_threads)
    sim = SimConfig(
        reps=ns.reps, step=ns.step, seed=ns.seed, horizon=ns.horizon,
        threads=threads,
    )
    return RunConfig(
        problem=ns.command,
        model=load_model(ns.model),
        args=args,
        sim=sim,
        out=ns.out,
        fmt=ns.fmt,
        verify=bool(getattr(ns, "verify", False)),
    )


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        if ns.command == "run":
            with open(ns.config, "r") as fh:
                config = parse_config(fh.read())
        else:
            config = _config_from_namespace(ns)
        return run(config)
    except ParseError as exc:
        print(f"gwh: config error: {exc}", file=sys.stderr)
        return _VALIDATION_EXIT
    except ConfigError as exc:
        print(f"gwh: validation error: {exc}", file=sys.stderr)
        return _VALIDATION_EXIT
    except GwhError as exc:
        print(f"gwh: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _NUMERICAL_EXIT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
