"""Command-line driver: one output record per estimator invocation.

Example::

    python3 -m exactsde price --model cir --model-params kappa=0.5,vinf=0.04,eps=0.1 \\
        --x0 0.04 --horizon 1 --payoff identity --paths 1000000 --seed 42 \\
        --variant ordinate --trunc-k 20 --out r.csv

Exit codes: 0 success, 2 invalid configuration, 3 proposal budget exceeded,
4 envelope integrity failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

from .analysis import bias_bound, estimate_pk, variant_cost_report
from .baselines import CIRParams, EulerConfig, fd_greeks, malliavin_euler_greeks
from .drift import BUILDERS, DriftModel, ModelValidationError
from .estimators import (
    EstimatorResult,
    PayoffSpec,
    estimate_cir,
    estimate_delta,
    estimate_gamma,
    estimate_price,
    sample_endpoints,
)
from .randomness import EnvelopeIntegrityError
from .sampler import DEFAULT_BUDGET, BudgetError, PoissonVariant, TruncationPolicy

WORKERS_ENV = "EXACTSDE_WORKERS"
COLUMNS = [
    "command", "model", "payoff", "quantity", "n_paths", "mean", "std_error",
    "accept_rate", "avg_points_revealed", "trunc_k", "wall_seconds", "seed",
]
COMMANDS = ("sample", "price", "delta", "gamma", "pk-sweep", "bias-bound", "bench-variants", "baseline")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str
    model_params: dict[str, float]
    x0: float
    horizon: float
    n_paths: int
    seed: int
    variant: PoissonVariant
    trunc_k: float
    payoff: PayoffSpec
    delta_t: float | None = None
    dx: float | None = None
    method: str = "fd"
    ks: list[float] = field(default_factory=list)
    workers: int = 1
    budget: int = DEFAULT_BUDGET
    out: str | None = None
    fmt: str = "csv"
    timing: bool = False
    dump_skeleton: str | None = None

    @property
    def is_cir(self) -> bool:
        return self.model == "cir"

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.trunc_k)

    def build_model(self) -> DriftModel:
        builder, _ = BUILDERS[self.model]
        p = self.model_params
        return builder(*(p[k] for k in BUILDERS[self.model][1]))


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    return str(v)


def _parse_params(text: str, model: str) -> dict[str, float]:
    if model not in BUILDERS:
        raise ConfigError(f"unknown model {model!r}; choose from {', '.join(BUILDERS)}")
    expected = BUILDERS[model][1]
    out: dict[str, float] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"model parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        k = k.strip().lower()
        if k not in expected:
            raise ConfigError(f"model {model} takes parameters {', '.join(expected)}; got {k!r}")
        try:
            out[k] = float(v)
        except ValueError as exc:
            raise ConfigError(f"parameter {k} is not a number: {v!r}") from exc
    missing = [k for k in expected if k not in out]
    if missing:
        raise ConfigError(f"model {model} is missing parameters {', '.join(missing)}")
    return out


def _parse_k(text: str) -> float:
    if text.strip().lower() in ("exact", "inf"):
        return math.inf
    try:
        k = float(text)
    except ValueError as exc:
        raise ConfigError(f"--trunc-k must be a number or 'exact', got {text!r}") from exc
    if not k >= 0:
        raise ConfigError("--trunc-k must be >= 0")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exactsde", description="Exact SDE simulation and unbiased Greeks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", required=True)
    p.add_argument("--model-params", default="")
    p.add_argument("--x0", type=float, required=True, help="initial value (v0 for cir)")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--payoff", default="identity", help="identity | square | exp-neg | indicator")
    p.add_argument("--threshold", type=float, default=None, help="indicator threshold (default: x0)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default="ordinate", help="time | ordinate")
    p.add_argument("--trunc-k", default="exact")
    p.add_argument("--k", default="0,1,2,100", help="comma-separated levels for pk-sweep")
    p.add_argument("--method", default="fd", choices=("fd", "malliavin"), help="baseline estimator")
    p.add_argument("--delta-t", type=float, default=None, help="Euler step")
    p.add_argument("--dx", type=float, default=None, help="finite-difference bump (dv for cir)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=("csv", "jsonl"))
    p.add_argument("--timing", action="store_true", help="fill wall_seconds (breaks byte-identical output)")
    p.add_argument("--dump-skeleton", default=None, help="sample: write the first path's skeleton as CSV")
    return p


def parse_config(argv: list[str]) -> RunConfig:
    a = build_parser().parse_args(argv)
    model = a.model.strip().lower()
    params = _parse_params(a.model_params, model)
    if a.paths < 2:
        raise ConfigError("--paths must be >= 2")
    workers = a.workers if a.workers is not None else int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ConfigError("--workers must be >= 1")
    try:
        variant = PoissonVariant.parse(a.variant)
        threshold = a.x0 if a.threshold is None else a.threshold
        payoff = PayoffSpec.parse(a.payoff, threshold)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ks = [_parse_k(t) for t in a.k.split(",") if t.strip()]
    return RunConfig(
        command=a.command, model=model, model_params=params, x0=a.x0, horizon=a.horizon,
        n_paths=a.paths, seed=a.seed, variant=variant, trunc_k=_parse_k(a.trunc_k), payoff=payoff,
        delta_t=a.delta_t, dx=a.dx, method=a.method, ks=ks, workers=workers, budget=a.budget,
        out=a.out, fmt=a.format, timing=a.timing, dump_skeleton=a.dump_skeleton,
    )


def _row(cfg: RunConfig, quantity: str, mean: float, se: float, n: int, accept: float,
         revealed: float, k: float, seconds: float) -> dict:
    return {
        "command": cfg.command,
        "model": cfg.model,
        "payoff": cfg.payoff.kind,
        "quantity": quantity,
        "n_paths": n,
        "mean": float(mean),
        "std_error": float(se),
        "accept_rate": float(accept),
        "avg_points_revealed": float(revealed),
        "trunc_k": float(k),
        "wall_seconds": float(seconds) if cfg.timing else "",
        "seed": cfg.seed,
    }


def _result_row(cfg: RunConfig, r: EstimatorResult, seconds: float, quantity: str | None = None) -> dict:
    return _row(cfg, quantity or r.quantity, r.mean, r.std_error, r.n_paths, r.accept_rate,
                r.avg_points_revealed, r.truncation_k, seconds)


def _estimate(cfg: RunConfig, which: str) -> EstimatorResult:
    common = dict(variant=cfg.variant, policy=cfg.policy(), n_paths=cfg.n_paths, seed=cfg.seed,
                  workers=cfg.workers, budget=cfg.budget)
    if cfg.is_cir:
        p = cfg.model_params
        return estimate_cir(p["kappa"], p["vinf"], p["eps"], cfg.x0, cfg.horizon, cfg.payoff, which, **common)
    fn = {"price": estimate_price, "delta": estimate_delta, "gamma": estimate_gamma}[which]
    return fn(cfg.build_model(), cfg.x0, cfg.horizon, cfg.payoff, **common)


def _start_x(cfg: RunConfig) -> float:
    if cfg.is_cir:
        return 2.0 * math.sqrt(cfg.x0) / cfg.model_params["eps"]
    return cfg.x0


def execute(cfg: RunConfig) -> list[dict]:
    """Run the configured command and return its output records."""
    t0 = time.perf_counter()
    rows: list[dict] = []
    if cfg.command in ("price", "delta", "gamma"):
        r = _estimate(cfg, cfg.command)
        rows.append(_result_row(cfg, r, time.perf_counter() - t0))
    elif cfg.command == "sample":
        model = cfg.build_model()
        x = _start_x(cfg)
        ys = sample_endpoints(model, x, cfg.horizon, cfg.n_paths, cfg.seed, cfg.variant, cfg.policy(),
                              cfg.workers, cfg.budget)
        if cfg.is_cir:
            ys = 0.25 * cfg.model_params["eps"] ** 2 * ys**2
        if cfg.dump_skeleton:
            from .randomness import RngStream
            from .sampler import exact_sample

            path = exact_sample(model, x, cfg.horizon, cfg.variant, cfg.policy(), RngStream(cfg.seed, 0), cfg.budget)
            path.skeleton.dump_csv(cfg.dump_skeleton)
        for i, y in enumerate(ys):
            rows.append({"path": i, "value": float(y)})
    elif cfg.command == "pk-sweep":
        model = cfg.build_model()
        x = _start_x(cfg)
        for k in cfg.ks:
            t = time.perf_counter()
            p = estimate_pk(model, x, cfg.horizon, k, cfg.n_paths, cfg.seed, cfg.variant, cfg.workers)
            se = math.sqrt(p * (1.0 - p) / cfg.n_paths)
            rows.append(_row(cfg, "p_K", p, se, cfg.n_paths, p, math.nan, k, time.perf_counter() - t))
    elif cfg.command == "bias-bound":
        model = cfg.build_model()
        k = cfg.trunc_k
        if math.isinf(k):
            raise ConfigError("bias-bound needs a finite --trunc-k")
        rep = bias_bound(model, _start_x(cfg), cfg.horizon, k, cfg.payoff, cfg.n_paths, cfg.seed, cfg.workers)
        dt = time.perf_counter() - t0
        se_p = math.sqrt(rep.p_K_hat * (1 - rep.p_K_hat) / cfg.n_paths)
        quantities = [
            ("p_K", rep.p_K_hat, se_p),
            ("p_inf", rep.p_inf_hat, math.sqrt(rep.p_inf_hat * (1 - rep.p_inf_hat) / cfg.n_paths)),
            ("sup_tail", rep.tail_hat, rep.tail_se),
            ("bound_general", rep.bound_general, math.nan),
            ("bound_bounded", rep.bound_bounded, math.nan),
        ]
        for name, v, se in quantities:
            if rep.heuristic:
                name += "[heuristic]"
            rows.append(_row(cfg, name, v, se, cfg.n_paths, rep.p_K_hat, math.nan, k, dt))
    elif cfg.command == "bench-variants":
        model = cfg.build_model()
        x = _start_x(cfg)
        for c in variant_cost_report(model, x, cfg.horizon, n=cfg.n_paths, seed=cfg.seed,
                                     policy=cfg.policy(), workers=cfg.workers):
            rows.append(_row(cfg, f"points_examined[{c.variant}]", c.mean_points_examined, math.nan,
                             c.n, c.accept_rate, c.mean_reveals, cfg.trunc_k, time.perf_counter() - t0))
    elif cfg.command == "baseline":
        if cfg.delta_t is None:
            raise ConfigError("baseline needs --delta-t")
        euler = EulerConfig(cfg.delta_t)
        if cfg.is_cir:
            p = cfg.model_params
            target = CIRParams(p["kappa"], p["vinf"], p["eps"])
        else:
            target = cfg.build_model()
        if cfg.method == "fd":
            if cfg.dx is None:
                raise ConfigError("baseline --method fd needs --dx")
            results = fd_greeks(target, cfg.x0, cfg.horizon, cfg.payoff, euler, cfg.dx, cfg.n_paths,
                                cfg.seed, cfg.workers)
            names = ["euler_price", "euler_fd_delta", "euler_fd_gamma"]
        else:
            results = malliavin_euler_greeks(target, cfg.x0, cfg.horizon, cfg.payoff, euler, cfg.n_paths,
                                             cfg.seed, cfg.workers)
            names = ["euler_malliavin_delta", "euler_malliavin_gamma"]
        dt = time.perf_counter() - t0
        for name, r in zip(names, results):
            rows.append(_result_row(cfg, r, dt, name))
    return rows


def render(rows: list[dict], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "jsonl":
        for r in rows:
            items = []
            for k, v in r.items():
                if isinstance(v, float):
                    s = _fmt(v)
                    val = s if s not in ("nan", "inf", "-inf") else json.dumps(s)
                else:
                    val = json.dumps(v)
                items.append(f"{json.dumps(k)}: {val}")
            buf.write("{" + ", ".join(items) + "}\n")
        return buf.getvalue()
    cols = list(rows[0].keys()) if rows else COLUMNS
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code else 0
    except (ConfigError, ModelValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = execute(cfg)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EnvelopeIntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, ModelValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = render(rows, cfg.fmt)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())
