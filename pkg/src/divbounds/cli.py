"""Command line front end: ``divbounds {check,bound,simulate,freeboundary,verify}``.

Model constants come from flags, then a JSON config file, then the built-in
reference set. Bounds and simulations are written as CSV with 12 significant
digits; ``check``, ``freeboundary`` and ``verify`` write JSON.

Exit codes: 0 success (a diverging free-boundary series is a result, not a
failure), 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import barrier, constant, freeboundary, montecarlo, series
from .errors import InapplicableError, ParameterError
from .model import ModelParams, is_constant_strategy_optimal, roots

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

PARAM_KEYS = ("mu", "sigma", "delta", "gamma", "xi")
DEFAULT_PARAMS = dict(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=1.0)
DEFAULT_OPTIONS = {
    "bound": dict(mode="constant", t=0.0, x_grid="0:20:1", N=20, q=None, format="csv"),
    "simulate": dict(strategy="constant", t=0.0, x_grid="1:10:1", paths=100_000, dt=1e-3,
                     seed=20240611, format="csv"),
    "freeboundary": dict(order=40, tol=1e-10),
    "check": {},
    "verify": dict(seed=7),
}


@dataclass
class RunConfig:
    command: str
    params: dict
    options: dict = field(default_factory=dict)
    output: str | None = None

    def to_json(self) -> str:
        doc = dict(self.params)
        doc[self.command] = dict(self.options)
        if self.output is not None:
            doc["output"] = self.output
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, command: str, text: str) -> "RunConfig":
        doc = json.loads(text)
        return resolve(command, doc, {}, {}, doc.get("output"))

    def model(self) -> ModelParams:
        return ModelParams(**self.params)


def resolve(command: str, file_doc: dict, param_flags: dict, option_flags: dict,
            output: str | None) -> RunConfig:
    """Merge defaults, config file and flags, later ones winning."""
    params = dict(DEFAULT_PARAMS)
    for key in PARAM_KEYS:
        if key in file_doc:
            params[key] = file_doc[key]
    params.update({k: v for k, v in param_flags.items() if v is not None})
    opts = dict(DEFAULT_OPTIONS[command])
    block = file_doc.get(command, {})
    if not isinstance(block, dict):
        raise ParameterError(command, "config block must be a JSON object")
    unknown = set(block) - set(opts)
    if unknown:
        raise ParameterError(sorted(unknown)[0], f"unknown option for '{command}'")
    opts.update(block)
    opts.update({k: v for k, v in option_flags.items() if v is not None})
    return RunConfig(command, params, opts, output)


def parse_grid(text: str) -> np.ndarray:
    """``LO:HI:STEP`` with ``HI`` included when it lies on the grid; ``LO > HI`` is empty."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ParameterError("x_grid", "expected LO:HI:STEP")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise ParameterError("x_grid", "LO, HI and STEP must be numbers") from None
    if not all(math.isfinite(v) for v in (lo, hi, step)) or step <= 0.0:
        raise ParameterError("x_grid", "STEP must be positive and all parts finite")
    if lo < 0.0:
        raise ParameterError("x_grid", "grid must be nonnegative")
    if lo > hi:
        return np.zeros(0)
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return format(float(value), ".12g")


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def write_rows(header, rows, fmt_kind: str, out) -> None:
    if fmt_kind == "json":
        json.dump([dict(zip(header, r)) for r in rows], out, indent=1)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


# ---------------------------------------------------------------------------
# commands

def cmd_check(params: ModelParams) -> dict:
    report = dict(params=params.to_dict(), capital_delta=params.capital_delta,
                  roots=[dict(n=r.n, eta=r.eta_n, theta=r.theta_n, zeta=r.zeta_n, rho=r.rho_n)
                         for r in (roots(params, n) for n in range(1, 6))])
    try:
        verdict = is_constant_strategy_optimal(params)
        report["threshold"] = verdict.threshold
        report["optimal"] = verdict.optimal
        report["verdict"] = ("constant payout optimal" if verdict.optimal
                             else "not optimal; barrier analysis recommended")
        report["default_barrier"] = barrier.default_barrier(params)
    except InapplicableError as exc:
        report.update(threshold=None, optimal=None, verdict=f"inapplicable: {exc}",
                      default_barrier=None)
    return report


BOUND_HEADER = ("x", "v_value", "bound_above", "bound_below", "bound_approx", "total", "error")


def cmd_bound(params: ModelParams, mode: str, t: float, xs, N: int = 20, q: float | None = None):
    """Rows of :data:`BOUND_HEADER`, one per grid point.

    The constant payout is the barrier at 0, so its whole bound sits in the
    ``bound_above`` column and it carries no approximation error.
    """
    if mode not in ("constant", "barrier"):
        raise ParameterError("mode", "expected 'constant' or 'barrier'")
    trunc = series.DEFAULT_TRUNCATION
    table = None
    if mode == "barrier":
        q = barrier.default_barrier(params) if q is None else q
        table = barrier.build_coefficients(params, barrier.BarrierConfig(q=q, N=N))
    rows = []
    for x in xs:
        x = float(x)
        try:
            if mode == "constant":
                g = constant.goodness_constant(params, trunc, t, x)
                v = series.v_xi(params, trunc, t, x).value
                rows.append((x, v, g.total, 0.0, 0.0, g.total, ""))
            else:
                g = barrier.goodness_barrier(params, table, trunc, t, x)
                v = barrier.v_approx(params, table, t, x)
                rows.append((x, v, g.above, g.below, g.approximation, g.total, ""))
        except (ArithmeticError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            rows.append((x, None, None, None, None, None, f"{type(exc).__name__}: {exc}"))
    return rows


SIM_HEADER = ("t", "x", "mean", "stderr", "closed_form_if_any", "diff_in_se", "bias_budget")


def parse_strategy(text: str, params: ModelParams):
    text = str(text)
    if text == "constant":
        return montecarlo.ConstantRate(params.xi)
    if text == "barrier":
        return montecarlo.Barrier(barrier.default_barrier(params))
    if text.startswith("barrier:"):
        try:
            return montecarlo.Barrier(float(text.split(":", 1)[1]))
        except ValueError:
            raise ParameterError("strategy", "barrier level must be a number") from None
    raise ParameterError("strategy", "expected 'constant', 'barrier' or 'barrier:Q'")


def cmd_simulate(params: ModelParams, strategy, points, sim: montecarlo.SimConfig):
    rows = []
    for t, x in points:
        est = montecarlo.simulate_performance(params, strategy, t, x, sim)
        closed = None
        diff = None
        if isinstance(strategy, montecarlo.ConstantRate) and strategy.c == params.xi:
            closed = series.v_xi(params, series.DEFAULT_TRUNCATION, t, x).value
            gap = est.mean - closed
            diff = gap / est.stderr if est.stderr > 0.0 else (0.0 if gap == 0.0 else math.inf)
        rows.append((t, x, est.mean, est.stderr, closed, diff, est.bias_budget))
    return rows


def cmd_freeboundary(params: ModelParams, K: int, tol: float) -> dict:
    sol = freeboundary.solve_free_boundary(params, K, solver_tol=tol)
    n = sol.solved_orders
    return dict(
        experimental=True, params=params.to_dict(), order=K, converged=sol.converged,
        divergence_order=sol.divergence_order, message=sol.message, solved_orders=n,
        coefficients=dict(J=[_json_float(v) for v in sol.J[1:n + 1]],
                          L=[_json_float(v) for v in sol.L[1:n + 1]],
                          a=[_json_float(v) for v in sol.a[:n]]),
        residuals=[[_json_float(v) for v in row] for row in sol.residuals[:n]],
        max_residual=_json_float(np.max(np.abs(sol.residuals[:n]))) if n else None)


def cmd_verify(seed: int = 7) -> dict:
    from .verification import run_all
    checks = run_all(seed)
    return dict(passed=all(c.passed for c in checks),
                checks=[dict(name=c.name, max_error=c.max_error, tolerance=c.tolerance,
                             passed=c.passed) for c in checks])


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with model constants and per-command blocks")
    common.add_argument("--output", "-o", help="write here instead of stdout")
    for key in PARAM_KEYS:
        common.add_argument(f"--{key}", type=float)

    parser = argparse.ArgumentParser(prog="divbounds",
                                     description="Certified bounds for capped dividend strategies.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="optimality verdict, roots and default barrier")

    b = sub.add_parser("bound", parents=[common], help="goodness bounds over an x grid")
    b.add_argument("--mode", choices=("constant", "barrier"))
    b.add_argument("--t", type=float)
    b.add_argument("--x-grid", dest="x_grid")
    b.add_argument("--N", type=int)
    b.add_argument("--q", type=float)
    b.add_argument("--format", choices=("csv", "json"))

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo performance of a strategy")
    s.add_argument("--strategy")
    s.add_argument("--t", type=float)
    s.add_argument("--x-grid", dest="x_grid")
    s.add_argument("--paths", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--format", choices=("csv", "json"))

    f = sub.add_parser("freeboundary", parents=[common], help="experimental curved-barrier series")
    f.add_argument("--order", type=int)
    f.add_argument("--tol", type=float)

    v = sub.add_parser("verify", parents=[common], help="deterministic invariant suite")
    v.add_argument("--seed", type=int)
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParameterError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError("config", f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParameterError("config", "top level must be a JSON object")
    return doc


def run(cfg: RunConfig, out) -> int:
    params = cfg.model()
    o = cfg.options
    if cfg.command == "check":
        json.dump(cmd_check(params), out, indent=1)
        out.write("\n")
    elif cfg.command == "bound":
        rows = cmd_bound(params, o["mode"], float(o["t"]), parse_grid(o["x_grid"]), int(o["N"]),
                         None if o["q"] is None else float(o["q"]))
        write_rows(BOUND_HEADER, rows, o["format"], out)
    elif cfg.command == "simulate":
        sim = montecarlo.SimConfig(dt=float(o["dt"]), n_paths=int(o["paths"]), seed=int(o["seed"]))
        t = float(o["t"])
        rows = cmd_simulate(params, parse_strategy(o["strategy"], params),
                            [(t, float(x)) for x in parse_grid(o["x_grid"])], sim)
        write_rows(SIM_HEADER, rows, o["format"], out)
    elif cfg.command == "freeboundary":
        json.dump(cmd_freeboundary(params, int(o["order"]), float(o["tol"])), out, indent=1)
        out.write("\n")
    elif cfg.command == "verify":
        report = cmd_verify(int(o["seed"]))
        json.dump(report, out, indent=1)
        out.write("\n")
        return EXIT_OK if report["passed"] else EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    option_keys = set(DEFAULT_OPTIONS[args.command])
    raw = vars(args)
    try:
        cfg = resolve(args.command, _load_config(args.config),
                      {k: raw[k] for k in PARAM_KEYS},
                      {k: raw[k] for k in option_keys if k in raw}, args.output)
        buf = io.StringIO()
        code = run(cfg, buf)
    except (ParameterError, InapplicableError) as exc:
        print(f"divbounds: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, ValueError) as exc:
        print(f"divbounds: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            print(f"divbounds: invalid input: output: {exc.strerror}", file=sys.stderr)
            return EXIT_INVALID
    else:
        sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
