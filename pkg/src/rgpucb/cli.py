"""Command-line front end.

Commands::

    rgpucb run              --config PATH [--seed N] [--jobs N] [--out DIR] [--set key=value ...]
    rgpucb sweep-theta      --config PATH --thetas 0.1,0.5,1 [...]
    rgpucb verify-bounds    [--grid-size 256] [--T 50] [--thetas 0.5,1,8] [--repeats 20] [...]
    rgpucb export-plot-data --run-dir DIR [--out DIR]

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment.  A ``manifest.json`` written by ``run`` is also accepted as a
config, which reproduces that run exactly.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .benchmarks import PROBLEM_NAMES, make_problem
from .errors import InvalidInputError
from .experiment import (
    DEFAULT_LENGTHSCALE_FRACTION,
    ExperimentConfig,
    IterationRecord,
    Method,
    aggregate,
    format_summary,
    prior_function_check,
    run_repeats,
)
from .sampling import RngStream

CLI_METHODS = ("rgp-ucb", "gp-ucb", "ei", "thompson")
CONFIG_KEYS = (
    "problem", "method", "theta", "delta", "a", "b", "r", "iterations",
    "initial_points", "repeats", "lengthscale", "noise_std", "seed",
)
TRACE_HEADER = [
    "problem", "method", "theta", "repeat", "iteration", "best_so_far", "y",
    "beta", "kappa", "sigma_at_choice",
]
AGGREGATE_HEADER = ["problem", "method", "theta", "iteration", "mean_best", "std_best"]
PLOT_HEADER = ["iteration", "mean_best", "std_best"]


class ConfigError(Exception):
    """Invalid configuration; exit code 2."""


class DataError(Exception):
    """Missing or unreadable run output; exit code 1."""


def fmt(value) -> str:
    """Round-trippable text for a CSV cell; empty for ``None``."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


# -- configuration ----------------------------------------------------------------


def read_config(path: Path) -> "OrderedDict[str, tuple[str, str]]":
    """Map each key to ``(raw value, location)`` for error messages."""
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    entries: OrderedDict[str, tuple[str, str]] = OrderedDict()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from None
        conf = doc.get("config", doc) if isinstance(doc, dict) else None
        if not isinstance(conf, dict):
            raise ConfigError(f"{path}: expected a JSON object with a 'config' section")
        for key, value in conf.items():
            raw = ",".join(value) if isinstance(value, list) else ("" if value is None else str(value))
            entries[key] = (raw, f"{path}:config.{key}")
        return entries
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: key '{key}' given twice")
        entries[key] = (value, f"{path}:{lineno}")
    return entries


def apply_overrides(entries, overrides) -> None:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        entries[key] = (value, f"--set {key}")


@dataclass(frozen=True)
class RunSettings:
    problem: str
    methods: tuple
    theta: float
    delta: float
    a: float
    b: float
    r: Optional[float]
    iterations: int
    initial_points: int
    repeats: int
    lengthscale: float
    noise_std: float
    seed: int

    def method(self, name: str, theta: Optional[float] = None) -> Method:
        if name == "rgp-ucb":
            return Method(name, theta=self.theta if theta is None else theta)
        if name == "gp-ucb":
            return Method(name, delta=self.delta, a=self.a, b=self.b, r=self.r)
        return Method(name)

    def experiment(self, name: str, theta: Optional[float] = None) -> ExperimentConfig:
        problem = make_problem(self.problem, self.noise_std)
        return ExperimentConfig(
            problem=problem,
            method=self.method(name, theta),
            iterations=self.iterations,
            initial_points=self.initial_points,
            repeats=self.repeats,
            lengthscale=self.lengthscale,
            noise_std=self.noise_std,
            base_seed=self.seed,
        )

    def echo(self) -> dict:
        """Every resolved setting, in config-key order."""
        out = OrderedDict()
        out["problem"] = self.problem
        out["method"] = list(self.methods)
        for key in CONFIG_KEYS[2:]:
            out[key] = getattr(self, key)
        return out


def _number(entries, key, kind, check, message, default=None):
    if key not in entries or entries[key][0] == "":
        return default
    raw, where = entries[key]
    try:
        value = kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: key '{key}': cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{where}: key '{key}': must be finite, got {raw!r}")
    if not check(value):
        raise ConfigError(f"{where}: key '{key}': {message}, got {raw!r}")
    return value


def build_settings(entries) -> RunSettings:
    for key, (_, where) in entries.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{where}: unknown key '{key}'; valid keys: {', '.join(CONFIG_KEYS)}")
    if "problem" not in entries:
        raise ConfigError("config: missing required key 'problem'")
    name, where = entries["problem"]
    if name.lower() not in PROBLEM_NAMES:
        raise ConfigError(
            f"{where}: key 'problem': unknown problem {name!r}; valid: {', '.join(PROBLEM_NAMES)}"
        )
    name = name.lower()
    raw_methods, where = entries.get("method", ("rgp-ucb", "default"))
    methods = tuple(m.strip().lower() for m in raw_methods.split(",") if m.strip())
    if not methods:
        raise ConfigError(f"{where}: key 'method': no method given")
    for m in methods:
        if m not in CLI_METHODS:
            raise ConfigError(f"{where}: key 'method': unknown method {m!r}; valid: {', '.join(CLI_METHODS)}")

    positive = (lambda v: v > 0, "must be positive")
    at_least_one = (lambda v: v >= 1, "must be >= 1")
    theta = _number(entries, "theta", float, *positive, default=1.0)
    delta = _number(entries, "delta", float, lambda v: 0 < v < 1, "must lie in (0, 1)", default=0.1)
    a = _number(entries, "a", float, *positive, default=1.0)
    b = _number(entries, "b", float, *positive, default=1.0)
    problem = make_problem(name)
    side = float(np.max(problem.bounds[:, 1] - problem.bounds[:, 0]))
    r = _number(entries, "r", float, *positive, default=side)
    d = problem.dimension
    iterations = _number(entries, "iterations", int, *at_least_one, default=40 * d)
    initial = _number(entries, "initial_points", int, *at_least_one, default=3 * d + 1)
    repeats = _number(entries, "repeats", int, *at_least_one, default=10)
    lengthscale = _number(entries, "lengthscale", float, *positive, default=DEFAULT_LENGTHSCALE_FRACTION * problem.diagonal)
    noise = _number(entries, "noise_std", float, lambda v: v >= 0, "must be non-negative",
                    default=problem.noise_std)
    seed = _number(entries, "seed", int, lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer",
                   default=0)
    return RunSettings(name, methods, theta, delta, a, b, r, iterations, initial, repeats,
                   lengthscale, noise, seed)


def load_settings(args) -> RunSettings:
    entries = read_config(Path(args.config))
    apply_overrides(entries, args.set)
    if args.seed is not None:
        entries["seed"] = (str(args.seed), "--seed")
    return build_settings(entries)


# -- outputs ----------------------------------------------------------------------


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def trace_rows(problem: str, method: Method, runs) -> list:
    theta = method.theta if method.name == "rgp-ucb" else None
    rows = []
    for rep, records in enumerate(runs):
        for i, rec in enumerate(records, start=1):
            rows.append(
                [problem, method.name, fmt(theta), rep, i, fmt(rec.best_so_far), fmt(rec.y_t),
                 fmt(rec.beta_t), fmt(rec.kappa_t), fmt(rec.sigma_at_choice)]
                + [fmt(v) for v in rec.x_t]
            )
    return rows


def aggregate_rows(problem: str, method: Method, runs) -> list:
    theta = method.theta if method.name == "rgp-ucb" else None
    agg = aggregate(runs)
    return [
        [problem, method.name, fmt(theta), i, fmt(m), fmt(s)]
        for i, (m, s) in enumerate(zip(agg.mean, agg.std), start=1)
    ]


def execute(settings: RunSettings, methods, jobs: int, theta_override=None):
    """Run every method; return ``[(Method, runs)]`` in method order."""
    results = []
    for name in methods:
        cfg = settings.experiment(name, theta_override)
        results.append((cfg.method, run_repeats(cfg, jobs=jobs)))
    return results


def cmd_run(args) -> int:
    settings = load_settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = execute(settings, settings.methods, args.jobs)
    d = make_problem(settings.problem).dimension
    header = TRACE_HEADER + [f"x{i}" for i in range(d)]
    traces, aggs, summary = [], [], OrderedDict()
    for method, runs in results:
        traces += trace_rows(settings.problem, method, runs)
        aggs += aggregate_rows(settings.problem, method, runs)
        agg = aggregate(runs)
        summary[method.name] = {
            "final_mean": agg.final_mean,
            "final_std": agg.final_std,
            "summary": agg.summary,
        }
    _write_csv(out / "traces.csv", header, traces)
    _write_csv(out / "aggregate.csv", AGGREGATE_HEADER, aggs)
    manifest = OrderedDict(
        tool="rgpucb",
        version=__version__,
        base_seed=settings.seed,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        config=settings.echo(),
        defaults={
            "lhs_design": "jittered within strata",
            "maximizer": "1000*d uniform probes, 10 starts, tol 1e-4*diagonal",
            "thompson_candidates": "min(2048, 512*d) fresh LHS points per iteration",
            "observations": "standardised before each GP fit",
        },
        summary=summary,
    )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for name, s in summary.items():
        print(f"{settings.problem}  {name:10s} {s['summary']}")
    return 0


def parse_thetas(text: Optional[str], flag: str = "--thetas") -> list:
    if text is None or not text.strip():
        raise ConfigError(f"{flag}: at least one theta value is required")
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            v = float(part)
        except ValueError:
            raise ConfigError(f"{flag}: cannot parse {part!r} as a number") from None
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{flag}: theta must be positive, got {part!r}")
        values.append(v)
    return values


def cmd_sweep(args) -> int:
    thetas = parse_thetas(args.thetas)
    settings = load_settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for theta in thetas:
        [(method, runs)] = execute(settings, ["rgp-ucb"], args.jobs, theta_override=theta)
        agg = aggregate(runs)
        rows.append([settings.problem, fmt(theta), fmt(agg.final_mean), fmt(agg.final_std), agg.summary])
        print(f"theta={theta:<6g} {agg.summary}", flush=True)
    _write_csv(out / "sweep.csv", ["problem", "theta", "final_mean", "final_std", "summary"], rows)
    return 0


def cmd_verify(args) -> int:
    thetas = parse_thetas(args.thetas)
    if not 1 <= args.grid_size <= 4096:
        raise ConfigError(f"--grid-size: must be in [1, 4096], got {args.grid_size}")
    if args.T < 2:
        raise ConfigError(f"--T: must be >= 2, got {args.T}")
    if args.repeats < 1:
        raise ConfigError(f"--repeats: must be >= 1, got {args.repeats}")
    if not args.lengthscale > 0:
        raise ConfigError(f"--lengthscale: must be positive, got {args.lengthscale}")
    if not args.noise_std > 0:
        raise ConfigError(f"--noise-std: must be positive, got {args.noise_std}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    reports = []
    for i, theta in enumerate(thetas):
        rep = prior_function_check(
            args.lengthscale, args.grid_size, args.T, theta, args.repeats,
            RngStream.derive(seed, i), noise_std=args.noise_std, dimension=args.grid_dim,
        )
        reports.append(rep.to_dict())
        print(
            f"theta={theta:<6g} empirical BR_T={rep.empirical_bayes_regret:.4g}  "
            f"bound={rep.bound_value:.4g}  holds={rep.empirical_bayes_regret <= rep.bound_value}",
            flush=True,
        )
    doc = OrderedDict(
        tool="rgpucb",
        version=__version__,
        options=dict(grid_size=args.grid_size, grid_dim=args.grid_dim, T=args.T, thetas=thetas,
                     repeats=args.repeats, lengthscale=args.lengthscale,
                     noise_std=args.noise_std, seed=seed),
        reports=reports,
    )
    (out / "bound_report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def read_traces(path: Path):
    """Group best-so-far columns from a trace CSV by (problem, method, theta)."""
    if not path.exists():
        raise DataError(f"{path}: trace file not found")
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[: len(TRACE_HEADER)] != TRACE_HEADER:
                raise DataError(f"{path}: not a trace file (unexpected header)")
            groups: OrderedDict = OrderedDict()
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
                key = (row[0], row[1], row[2])
                rep, it, best = int(row[3]), int(row[4]), float(row[5])
                groups.setdefault(key, OrderedDict()).setdefault(rep, []).append((it, best))
    except (ValueError, UnicodeDecodeError, csv.Error) as err:
        raise DataError(f"{path}: corrupt trace file ({err})") from None
    if not groups:
        raise DataError(f"{path}: trace file has no rows")
    return groups


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    groups = read_traces(run_dir / "traces.csv")
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    for (problem, method, theta), reps in groups.items():
        series = [[best for _, best in sorted(rows)] for rows in reps.values()]
        try:
            agg = aggregate(series)
        except InvalidInputError as err:
            raise DataError(f"{run_dir / 'traces.csv'}: {err}") from None
        label = f"{method}_theta{theta}" if theta else method
        rows = [[i, fmt(m), fmt(s)] for i, (m, s) in enumerate(zip(agg.mean, agg.std), start=1)]
        target = out / f"plot_{problem}_{label}.csv"
        _write_csv(target, PLOT_HEADER, rows)
        print(target)
    return 0


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgpucb", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key-value config or manifest.json")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for repeats")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    common(sub.add_parser("run", help="run every method x repeat"))
    sweep = sub.add_parser("sweep-theta", help="final best per theta for RGP-UCB")
    common(sweep)
    sweep.add_argument("--thetas", help="comma-separated theta values")

    verify = sub.add_parser("verify-bounds", help="regret bound audit on GP-prior functions")
    verify.add_argument("--grid-size", type=int, default=256)
    verify.add_argument("--grid-dim", type=int, choices=(1, 2), default=1)
    verify.add_argument("--T", type=int, default=50)
    verify.add_argument("--thetas", default="0.5,1,8")
    verify.add_argument("--repeats", type=int, default=20)
    verify.add_argument("--lengthscale", type=float, default=0.2)
    verify.add_argument("--noise-std", type=float, default=0.01)
    verify.add_argument("--seed", type=int)
    verify.add_argument("--out", default="out")

    export = sub.add_parser("export-plot-data", help="per-method (iteration, mean, std) CSVs")
    export.add_argument("--run-dir", required=True)
    export.add_argument("--out", help="defaults to the run directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "sweep-theta": cmd_sweep, "verify-bounds": cmd_verify,
                "export-plot-data": cmd_export}
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError(f"--jobs: must be >= 1, got {args.jobs}")
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - top-level reporting
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
