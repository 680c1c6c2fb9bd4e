"""Batch command-line entry point.

Four subcommands: `simulate` runs a simulation study and writes the
metric table, `ingest` turns a raw monthly-panel CSV into a forecast
dataset, `backtest` runs the rolling-window comparison on such a
dataset, and `oracle-check` compares fixed-size solvers against the
enumerated optimum on small instances.

Configuration comes from an INI file (section [run]) plus flag
overrides; every run writes a JSON manifest (config echo, seed, package
versions, input hashes, stage wall times) into the output directory.
All report CSVs are byte-stable for a fixed config and seed. Exit codes:
0 success, 2 invalid configuration, 3 missing input, 4 runtime failure
inside the toolkit.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InputMissingError, VsForecastError
from .fredmd import TARGET_SERIES, build_dataset, parse_fredmd
from .linalg import solve_ols
from .methods import ALL_SOLVERS, SUBSET_SOLVERS, fit_fixed_size
from .rolling import (
    VS_METHODS,
    RollingConfig,
    frequency_table,
    ratio_table,
    report_csv,
    roll_forecast,
)
from .selection import SelectionPlan
from .simulation import (
    FACTOR_METHODS,
    StudyResult,
    fa_vs_vs,
    generate,
    run_study,
    setting1,
    setting2,
    setting3,
    toy,
)
from .smc import SmcConfig

COMMANDS = ("simulate", "ingest", "backtest", "oracle-check")
SETTINGS = ("1", "2", "3", "fa-predictors", "fa-factors", "toy")
STRATEGIES = {"drop": 1, "impute": 2}
SELECTIONS = ("bic", "aic", "kfold", "fcv")
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, fully serializable description of one CLI run."""

    command: str
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    # simulate
    setting: str = "2"
    n_rows: int = 200
    repetitions: int = 20
    solvers: tuple[str, ...] = ("fs", "iht", "htp", "adalasso")
    selection: str = "kfold"
    validation_length: int | None = None
    r_squared: float = 0.8
    particles: int = 1000
    # ingest / backtest
    fredmd: str | None = None
    target: str = "emp"
    horizons: tuple[int, ...] = (12,)
    strategy: str = "drop"
    window: int = 240
    test_start: str = "2015-01"
    test_count: int = 48
    # oracle-check
    n_cols: int = 15
    subset_size: int = 3
    n_seeds: int = 20


def _split_str(raw: str) -> tuple[str, ...]:
    return tuple(token.strip() for token in raw.split(",") if token.strip())


def _split_int(raw: str) -> tuple[int, ...]:
    return tuple(int(token) for token in _split_str(raw))


_PARSERS = {
    "command": str, "seed": int, "out": str, "threads": int,
    "setting": str, "n_rows": int, "repetitions": int,
    "solvers": _split_str, "selection": str, "validation_length": int,
    "r_squared": float, "particles": int,
    "fredmd": str, "target": str, "horizons": _split_int,
    "strategy": str, "window": int, "test_start": str, "test_count": int,
    "n_cols": int, "subset_size": int, "n_seeds": int,
}


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def write_config(config: ExperimentConfig, path) -> None:
    """Save a config as an INI file that read_config restores losslessly."""
    parser = configparser.ConfigParser()
    parser["run"] = {}
    for field in dataclasses.fields(config):
        value = getattr(config, field.name)
        if value is None:
            continue
        parser["run"][field.name] = _format_value(value)
    with open(path, "w", encoding="utf-8") as handle:
        parser.write(handle)


def read_config(path) -> dict:
    """Raw key-value pairs from the [run] section of an INI file."""
    path = Path(path)
    if not path.exists():
        raise InputMissingError(path)
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    if not parser.has_section("run"):
        raise ConfigError("config", f"{path} has no [run] section")
    return dict(parser["run"])


_COMMAND_DEFAULTS = {
    "backtest": {"solvers": ("ar", "fs", "iht", "htp", "adalasso", "fa")},
    "oracle-check": {"solvers": SUBSET_SOLVERS, "n_rows": 60},
}


def merge_config(command: str, file_values: dict,
                 overrides: dict) -> ExperimentConfig:
    """Dataclass defaults, then per-command defaults, then config-file
    values, then explicit flags."""
    values: dict = dict(_COMMAND_DEFAULTS.get(command, {}))
    for source in (file_values, overrides):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in _PARSERS:
                raise ConfigError(key, f"unknown configuration key {key!r}")
            if key == "command":
                continue
            parser = _PARSERS[key]
            try:
                values[key] = parser(raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {key}={raw!r}") from exc
    return ExperimentConfig(command=command, **values)


def validate(config: ExperimentConfig) -> None:
    if config.command not in COMMANDS:
        raise ConfigError("command")
    if config.seed < 0:
        raise ConfigError("seed")
    if config.threads < 1:
        raise ConfigError("threads")
    if config.command == "simulate":
        if config.setting not in SETTINGS:
            raise ConfigError("setting")
        allowed = set(ALL_SOLVERS) | set(FACTOR_METHODS)
        unknown = [s for s in config.solvers if s not in allowed]
        if unknown:
            raise ConfigError("solvers", f"unknown solvers {unknown}")
        if config.selection not in SELECTIONS:
            raise ConfigError("selection")
        if config.selection == "fcv" and config.validation_length is None:
            raise ConfigError("validation_length",
                              "forward CV needs validation_length")
        if config.repetitions < 0:
            raise ConfigError("repetitions")
        if config.n_rows < 20:
            raise ConfigError("n_rows")
    if config.command in ("ingest", "backtest"):
        if config.fredmd is None:
            raise ConfigError("fredmd", "a panel CSV path is required")
        if config.target not in TARGET_SERIES:
            raise ConfigError("target")
        if config.strategy not in STRATEGIES:
            raise ConfigError("strategy")
        if not config.horizons or any(h < 1 for h in config.horizons):
            raise ConfigError("horizons")
    if config.command == "backtest":
        unknown = [s for s in config.solvers
                   if s not in VS_METHODS and s not in ("ar", "fa")]
        if unknown:
            raise ConfigError("solvers", f"unknown methods {unknown}")
        if config.window <= 78:
            raise ConfigError("window")
        if config.test_count < 1:
            raise ConfigError("test_count")
        _parse_month(config.test_start)
    if config.command == "oracle-check":
        unknown = [s for s in config.solvers if s not in SUBSET_SOLVERS]
        if unknown:
            raise ConfigError(
                "solvers", f"{unknown} cannot run at a fixed subset size")
        if config.n_cols < config.subset_size + 1:
            raise ConfigError("n_cols")
        if config.subset_size < 1:
            raise ConfigError("subset_size")
        if config.n_seeds < 1:
            raise ConfigError("n_seeds")
        count = 1
        for i in range(config.subset_size):
            count = count * (config.n_cols - i) // (i + 1)
        if count > 200_000:
            raise ConfigError("n_cols", "enumeration would be too large")
    if config.particles < 10:
        raise ConfigError("particles")


def _parse_month(text: str) -> tuple[int, int]:
    parts = text.split("-")
    if len(parts) != 2:
        raise ConfigError("test_start", f"cannot parse month {text!r}")
    try:
        year, month = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError("test_start", f"cannot parse month {text!r}") from exc
    if not 1 <= month <= 12:
        raise ConfigError("test_start", f"month out of range in {text!r}")
    return year, month


def _month_range(start: tuple[int, int], count: int):
    base = start[0] * 12 + start[1] - 1
    return tuple(((base + i) // 12, (base + i) % 12 + 1) for i in range(count))


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, config: ExperimentConfig, inputs: dict,
                    stages: dict, status: str) -> None:
    manifest = {
        "command": config.command,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "vsforecast": __version__,
        },
        "inputs": inputs,
        "stages": stages,
        "status": status,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _error_record(exc: Exception) -> dict:
    record = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["field"] = exc.field
    if isinstance(exc, InputMissingError):
        record["path"] = exc.path
    return record


def _emit_error(exc: Exception, out_dir: Path | None) -> None:
    record = _error_record(exc)
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if out_dir is not None and out_dir.is_dir():
        with open(out_dir / "error.json", "w", encoding="utf-8") as handle:
            json.dump(record, handle, indent=2, sort_keys=True)
            handle.write("\n")


def _pool_map(threads: int, worker, payloads: list):
    if threads <= 1 or len(payloads) <= 1:
        return [worker(payload) for payload in payloads]
    with ProcessPoolExecutor(max_workers=min(threads, len(payloads))) as pool:
        return list(pool.map(worker, payloads))


def _make_spec(config: ExperimentConfig):
    if config.setting == "1":
        return setting1(config.r_squared, config.n_rows, config.seed)
    if config.setting == "2":
        return setting2(config.n_rows, config.seed)
    if config.setting == "3":
        return setting3(config.n_rows, config.seed)
    if config.setting == "fa-predictors":
        return fa_vs_vs("predictors", config.seed)
    if config.setting == "fa-factors":
        return fa_vs_vs("factors", config.seed)
    return toy(n_rows=config.n_rows, seed=config.seed)


def _selection_plan(config: ExperimentConfig) -> SelectionPlan:
    return SelectionPlan(kind=config.selection,
                         validation_length=config.validation_length,
                         seed=config.seed)


def _study_worker(payload) -> tuple[str, object]:
    spec, solver, repetitions, plan, smc_config = payload
    result = run_study(spec, (solver,), repetitions, plan,
                       smc_config=smc_config)
    return solver, result.summaries[solver]


def _cmd_simulate(config: ExperimentConfig, out_dir: Path) -> None:
    spec = _make_spec(config)
    plan = _selection_plan(config)
    smc_config = SmcConfig(n_particles=config.particles, seed=config.seed)
    payloads = [(spec, solver, config.repetitions, plan, smc_config)
                for solver in config.solvers]
    outcomes = dict(_pool_map(config.threads, _study_worker, payloads))
    result = StudyResult(spec, plan, config.repetitions,
                         {solver: outcomes[solver] for solver in config.solvers})
    stem = f"simulate_{config.setting.replace('-', '_')}"
    (out_dir / f"{stem}.csv").write_text(result.to_csv(), encoding="utf-8")
    (out_dir / f"{stem}.md").write_text(result.markdown() + "\n",
                                        encoding="utf-8")
    print(result.markdown())


def _load_table(config: ExperimentConfig):
    path = Path(config.fredmd)
    if not path.exists():
        raise InputMissingError(path)
    return parse_fredmd(path.read_bytes())


def _dataset_csv(dataset) -> str:
    lines = ["date,y,y_h," + ",".join(dataset.column_names)]
    for i, (year, month) in enumerate(dataset.dates):
        cells = [f"{year}-{month:02d}", repr(float(dataset.y[i])),
                 repr(float(dataset.y_h[i]))]
        cells.extend(repr(float(v)) for v in dataset.x[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _cmd_ingest(config: ExperimentConfig, out_dir: Path) -> None:
    table = _load_table(config)
    strategy = STRATEGIES[config.strategy]
    summary = {}
    for horizon in config.horizons:
        dataset = build_dataset(table, config.target, horizon,
                                strategy=strategy)
        stem = f"dataset_{config.target}_h{horizon}"
        (out_dir / f"{stem}.csv").write_text(_dataset_csv(dataset),
                                             encoding="utf-8")
        summary[str(horizon)] = {
            "months": dataset.n_rows,
            "predictors": dataset.n_predictors,
            "retained": len(dataset.retained),
            "dropped": list(dataset.dropped),
            "flagged_outliers": int(dataset.outlier_mask.sum()),
        }
    with open(out_dir / "ingest_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(json.dumps(summary, sort_keys=True))


def _backtest_worker(payload):
    table, config, horizon = payload
    dataset = build_dataset(table, config.target, horizon,
                            strategy=STRATEGIES[config.strategy])
    rolling = RollingConfig(
        methods=tuple(config.solvers),
        window_size=config.window,
        validation_length=config.validation_length or 48,
        test_months=_month_range(_parse_month(config.test_start),
                                 config.test_count),
        smc_config=SmcConfig(n_particles=config.particles, seed=config.seed),
        seed=config.seed)
    return roll_forecast(dataset, rolling)


def _cmd_backtest(config: ExperimentConfig, out_dir: Path) -> None:
    table = _load_table(config)
    payloads = [(table, config, horizon) for horizon in config.horizons]
    reports = _pool_map(config.threads, _backtest_worker, payloads)
    summary = {}
    for horizon, report in zip(config.horizons, reports):
        stem = f"backtest_{config.target}_h{horizon}"
        (out_dir / f"{stem}.csv").write_text(report_csv(report),
                                             encoding="utf-8")
        (out_dir / f"{stem}_frequency.md").write_text(
            frequency_table(report) + "\n", encoding="utf-8")
        summary[str(horizon)] = {
            "mspe": {m: report.mspe[m] for m in report.mspe},
            "ratio_to_ar": {m: report.ratio_to_ar.get(m, float("nan"))
                            for m in report.mspe},
            "failures": report.failures,
        }
    table_text = ratio_table(reports)
    (out_dir / f"backtest_{config.target}_ratios.md").write_text(
        table_text + "\n", encoding="utf-8")
    with open(out_dir / "backtest_summary.json", "w",
              encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(table_text)


def _oracle_worker(payload):
    seed, config = payload
    spec = toy(n_rows=config.n_rows, n_cols=config.n_cols, seed=seed)
    data = generate(spec)
    problem = data.train
    k = config.subset_size
    best = np.inf
    for support in itertools.combinations(range(problem.n_cols), k):
        sse = solve_ols(problem, support).sse
        if sse < best:
            best = sse
    smc_config = SmcConfig(n_particles=config.particles, seed=seed)
    rows = []
    for solver in config.solvers:
        model = fit_fixed_size(problem, solver, k, seed=seed,
                               smc_config=smc_config)
        matched = model.sse <= best * (1 + 1e-10) + 1e-12
        rows.append((seed, solver, model.sse, best, matched))
    return rows


def _cmd_oracle_check(config: ExperimentConfig, out_dir: Path) -> None:
    children = np.random.SeedSequence(config.seed).spawn(config.n_seeds)
    seeds = [int(child.generate_state(1)[0]) for child in children]
    payloads = [(seed, config) for seed in seeds]
    results = _pool_map(config.threads, _oracle_worker, payloads)
    lines = ["seed,solver,sse,optimum_sse,matched"]
    matches = {solver: 0 for solver in config.solvers}
    for rows in results:
        for seed, solver, sse, best, matched in rows:
            lines.append(f"{seed},{solver},{repr(float(sse))},"
                         f"{repr(float(best))},{int(matched)}")
            matches[solver] += int(matched)
    (out_dir / "oracle_check.csv").write_text("\n".join(lines) + "\n",
                                              encoding="utf-8")
    for solver in config.solvers:
        print(f"{solver}: {matches[solver]}/{config.n_seeds} matched the "
              "enumerated optimum")


_RUNNERS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "backtest": _cmd_backtest,
    "oracle-check": _cmd_oracle_check,
}


def run_command(config: ExperimentConfig) -> int:
    """Validate, write the manifest, dispatch, and report the exit code."""
    out_dir = None
    try:
        validate(config)
    except ConfigError as exc:
        _emit_error(exc, None)
        return EXIT_CONFIG

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {}
    if config.fredmd and Path(config.fredmd).exists():
        inputs[config.fredmd] = _sha256(config.fredmd)
    stages: dict = {}
    _write_manifest(out_dir, config, inputs, stages, "running")
    started = time.perf_counter()
    try:
        _RUNNERS[config.command](config, out_dir)
    except InputMissingError as exc:
        stages[config.command] = time.perf_counter() - started
        _write_manifest(out_dir, config, inputs, stages, "failed")
        _emit_error(exc, out_dir)
        return EXIT_INPUT
    except VsForecastError as exc:
        stages[config.command] = time.perf_counter() - started
        _write_manifest(out_dir, config, inputs, stages, "failed")
        _emit_error(exc, out_dir)
        return EXIT_RUNTIME
    stages[config.command] = time.perf_counter() - started
    _write_manifest(out_dir, config, inputs, stages, "success")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help="INI file with a [run] section")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsforecast",
        description="Subset-selection forecasting experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate",
                                     help="run a simulation study")
    _add_common(simulate)
    simulate.add_argument("--setting", default=None, choices=SETTINGS)
    simulate.add_argument("--solvers", default=None,
                          help="comma-separated method names")
    simulate.add_argument("--T", dest="n_rows", type=int, default=None)
    simulate.add_argument("--reps", dest="repetitions", type=int, default=None)
    simulate.add_argument("--r2", dest="r_squared", type=float, default=None)
    simulate.add_argument("--selection", default=None, choices=SELECTIONS)
    simulate.add_argument("--validation", dest="validation_length",
                          type=int, default=None)
    simulate.add_argument("--particles", type=int, default=None)

    ingest = subparsers.add_parser("ingest",
                                   help="build forecast datasets from a panel CSV")
    _add_common(ingest)
    ingest.add_argument("--fredmd", default=None, help="panel CSV path")
    ingest.add_argument("--target", default=None,
                        choices=tuple(TARGET_SERIES))
    ingest.add_argument("--horizon", dest="horizons", default=None,
                        help="comma-separated horizons")
    ingest.add_argument("--strategy", default=None,
                        choices=tuple(STRATEGIES))

    backtest = subparsers.add_parser("backtest",
                                     help="rolling forecast comparison")
    _add_common(backtest)
    backtest.add_argument("--fredmd", default=None, help="panel CSV path")
    backtest.add_argument("--target", default=None,
                          choices=tuple(TARGET_SERIES))
    backtest.add_argument("--horizon", dest="horizons", default=None,
                          help="comma-separated horizons")
    backtest.add_argument("--strategy", default=None,
                          choices=tuple(STRATEGIES))
    backtest.add_argument("--solvers", default=None,
                          help="comma-separated methods incl. ar and fa")
    backtest.add_argument("--window", type=int, default=None)
    backtest.add_argument("--validation", dest="validation_length",
                          type=int, default=None)
    backtest.add_argument("--test-start", dest="test_start", default=None)
    backtest.add_argument("--test-count", dest="test_count",
                          type=int, default=None)
    backtest.add_argument("--particles", type=int, default=None)

    oracle = subparsers.add_parser(
        "oracle-check", help="compare solvers to the enumerated optimum")
    _add_common(oracle)
    oracle.add_argument("--p", dest="n_cols", type=int, default=None)
    oracle.add_argument("--k", dest="subset_size", type=int, default=None)
    oracle.add_argument("--seeds", dest="n_seeds", type=int, default=None)
    oracle.add_argument("--T", dest="n_rows", type=int, default=None)
    oracle.add_argument("--solvers", default=None,
                        help="comma-separated fixed-size solvers")
    oracle.add_argument("--particles", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    namespace = parser.parse_args(argv)
    overrides = {key: value for key, value in vars(namespace).items()
                 if key not in ("command", "config") and value is not None}
    try:
        file_values = read_config(namespace.config) if namespace.config else {}
        config = merge_config(namespace.command, file_values, overrides)
    except (ConfigError, InputMissingError) as exc:
        _emit_error(exc, None)
        return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_INPUT
    return run_command(config)


if __name__ == "__main__":
    sys.exit(main())
