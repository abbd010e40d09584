"""Config files, hyperparameter grids and reproducible experiment runs.

A config file holds one ``key: value`` pair per line (``#`` starts a
comment). Values are integers, decimals, quoted strings, bare tokens or
bracketed lists ``[a, b, c]``. A list on a tunable key (learning_rate, reg,
d, d_p, n_layers, fusion, batch_size) declares a grid axis; the grid is the
Cartesian product of all axes, ordered with axes sorted by key name and the
rightmost axis varying fastest.

Raw data is preprocessed once; every combination then trains and evaluates
against the same frozen split, with all random streams re-derived from the
config seed, so each combination reproduces independently of the others.
The environment variable ``MMREC_SEED`` overrides the config seed.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import FilterParams, SplitSpec, SPLIT_STRATEGIES, preprocess, read_interactions, save_dataset
from .errors import (
    EmptySplit,
    MissingFeatures,
    ParseError,
    TypeMismatch,
    UnknownKey,
)
from .evaluation import (
    METRICS,
    MetricReport,
    evaluate,
    parse_metric_spec,
    write_metric_report,
)
from .modality import FUSION_METHODS, IMPUTATION_POLICIES, MODALITIES, align_features, fuse, load_feature_matrix
from .models import MODEL_KINDS, build_adjacency, save_checkpoint
from .trainer import OPTIMIZERS, TrainConfig, fit, write_train_log

GRID_KEYS = ("batch_size", "d", "d_p", "fusion", "learning_rate", "n_layers", "reg")

# key -> (type tag, default); None means "must be provided when needed"
_KEY_SPECS: dict[str, tuple[str, object]] = {
    "interactions": ("path", None),
    "k": ("int", 5),
    "split": ("enum:split", "per_user_random"),
    "ratios": ("float3", (0.8, 0.1, 0.1)),
    "seed": ("int", 2024),
    "imputation": ("enum:imputation", "zeros"),
    "standardize": ("bool", False),
    "fusion": ("enum:fusion", "concat"),
    "model": ("enum:model", "mf_bpr"),
    "d": ("int", 64),
    "d_p": ("int", 64),
    "n_layers": ("int", 2),
    "reg": ("float", 0.0),
    "learning_rate": ("float", 0.001),
    "batch_size": ("int", 2048),
    "max_epochs": ("int", 50),
    "patience": ("int", 10),
    "eval_interval": ("int", 1),
    "stop_metric": ("metric", "recall@20"),
    "optimizer": ("enum:optimizer", "adam"),
    "adam_beta1": ("float", 0.9),
    "adam_beta2": ("float", 0.999),
    "adam_eps": ("float", 1e-8),
    "topk": ("intlist", (5, 10, 20, 50)),
    "selection_metric": ("metric", "recall@20"),
    "fail_fast": ("bool", False),
}
for _m in MODALITIES:
    _KEY_SPECS[f"features.{_m}"] = ("pathpair", None)

_ENUMS = {
    "split": SPLIT_STRATEGIES,
    "imputation": IMPUTATION_POLICIES,
    "fusion": FUSION_METHODS,
    "model": MODEL_KINDS,
    "optimizer": OPTIMIZERS,
}


@dataclass
class ExperimentConfig:
    values: dict[str, object]
    grid: dict[str, list]
    base_dir: Path

    def __getitem__(self, key: str):
        return self.values[key]

    def feature_paths(self) -> dict[str, tuple[str, str]]:
        found = {}
        for modality in MODALITIES:
            pair = self.values.get(f"features.{modality}")
            if pair is not None:
                found[modality] = pair
        return found

    def with_combo(self, combo: dict[str, object]) -> "ExperimentConfig":
        merged = dict(self.values)
        merged.update(combo)
        return replace(self, values=merged, grid={})


def _coerce_scalar(key: str, type_tag: str, token: str, base_dir: Path):
    if type_tag == "int":
        try:
            return int(token)
        except ValueError:
            raise TypeMismatch(key, f"expected integer, got {token!r}")
    if type_tag == "float":
        try:
            return float(token)
        except ValueError:
            raise TypeMismatch(key, f"expected number, got {token!r}")
    if type_tag == "bool":
        if token in ("true", "false"):
            return token == "true"
        raise TypeMismatch(key, f"expected true or false, got {token!r}")
    if type_tag == "metric":
        try:
            parse_metric_spec(token)
        except ValueError as exc:
            raise TypeMismatch(key, str(exc))
        return token
    if type_tag == "path":
        return str(base_dir / token) if not os.path.isabs(token) else token
    if type_tag == "pathpair":
        parts = [p.strip() for p in token.split(",")]
        if len(parts) != 2 or not all(parts):
            raise TypeMismatch(key, "expected <matrix_path>,<ids_path>")
        return tuple(
            str(base_dir / p) if not os.path.isabs(p) else p for p in parts
        )
    if type_tag.startswith("enum:"):
        allowed = _ENUMS[type_tag.split(":", 1)[1]]
        if token not in allowed:
            raise TypeMismatch(key, f"expected one of {allowed}, got {token!r}")
        return token
    raise AssertionError(type_tag)


def _unquote(token: str, line_no: int) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] in "\"'" and token[-1] == token[0]:
        return token[1:-1]
    if any(ch.isspace() for ch in token):
        raise ParseError(line_no, f"unquoted value contains whitespace: {token!r}")
    return token


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    """Parse a config file; unknown keys, duplicates and type errors raise."""
    path = Path(path)
    base_dir = path.parent.resolve()
    values: dict[str, object] = {k: default for k, (_, default) in _KEY_SPECS.items()}
    grid: dict[str, list] = {}
    seen: set[str] = set()

    with open(path, encoding="utf-8") as fh:
        for line_no, raw_line in enumerate(fh, start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ParseError(line_no, "expected 'key: value'")
            key, _, value_text = line.partition(":")
            key = key.strip()
            value_text = value_text.strip()
            if key not in _KEY_SPECS:
                raise UnknownKey(key)
            if key in seen:
                raise ParseError(line_no, f"duplicate key {key!r}")
            seen.add(key)
            if not value_text:
                raise ParseError(line_no, f"missing value for {key!r}")
            type_tag, _ = _KEY_SPECS[key]

            if value_text.startswith("["):
                if not value_text.endswith("]"):
                    raise ParseError(line_no, "unterminated list")
                tokens = [t.strip() for t in value_text[1:-1].split(",")]
                if tokens == [""]:
                    tokens = []
                tokens = [_unquote(t, line_no) for t in tokens]
                if type_tag == "float3":
                    if len(tokens) != 3:
                        raise TypeMismatch(key, "expected three ratios")
                    values[key] = tuple(_coerce_scalar(key, "float", t, base_dir) for t in tokens)
                elif type_tag == "intlist":
                    if not tokens:
                        raise TypeMismatch(key, "empty list")
                    values[key] = tuple(_coerce_scalar(key, "int", t, base_dir) for t in tokens)
                elif key in GRID_KEYS:
                    if not tokens:
                        raise TypeMismatch(key, "a grid axis needs at least one value")
                    grid[key] = [_coerce_scalar(key, type_tag, t, base_dir) for t in tokens]
                else:
                    raise TypeMismatch(key, "this key is scalar-only")
            else:
                token = _unquote(value_text, line_no)
                if type_tag == "float3":
                    raise TypeMismatch(key, "expected a bracketed list of three ratios")
                if type_tag == "intlist":
                    raise TypeMismatch(key, "expected a bracketed list of cutoffs")
                values[key] = _coerce_scalar(key, type_tag, token, base_dir)

    env_seed = os.environ.get("MMREC_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise TypeMismatch("seed", f"MMREC_SEED must be an integer, got {env_seed!r}")

    config = ExperimentConfig(values=values, grid=grid, base_dir=base_dir)
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    v = config.values
    if v["k"] < 1:
        raise TypeMismatch("k", "must be >= 1")
    ratios = v["ratios"]
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9 or ratios[0] <= 0:
        raise TypeMismatch("ratios", "must be non-negative, sum to 1, train > 0")
    for key in ("d", "d_p", "batch_size", "patience", "eval_interval"):
        bad = [x for x in config.grid.get(key, [v[key]]) if x < 1]
        if bad:
            raise TypeMismatch(key, "must be >= 1")
    for key in ("learning_rate",):
        if any(x <= 0 for x in config.grid.get(key, [v[key]])):
            raise TypeMismatch(key, "must be positive")
    if any(x < 0 for x in config.grid.get("n_layers", [v["n_layers"]])):
        raise TypeMismatch("n_layers", "must be >= 0")
    if any(x < 0 for x in config.grid.get("reg", [v["reg"]])):
        raise TypeMismatch("reg", "must be >= 0")
    if v["max_epochs"] < 0:
        raise TypeMismatch("max_epochs", "must be >= 0")
    if not 0 <= v["seed"] < 2**64:
        raise TypeMismatch("seed", "must fit in an unsigned 64-bit integer")


def expand_grid(config: ExperimentConfig) -> list[dict[str, object]]:
    """All axis assignments: axes sorted by key name, rightmost fastest;
    a config without axes expands to one empty assignment."""
    if not config.grid:
        return [{}]
    keys = sorted(config.grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(config.grid[k] for k in keys))]


@dataclass
class RunResult:
    combo: dict[str, object]
    valid_report: MetricReport | None
    test_report: MetricReport | None
    best_epoch: int | None
    stop_reason: str | None
    wall_time: float
    error: str | None = None


@dataclass
class SummaryReport:
    grid_keys: list[str]
    cutoffs: tuple[int, ...]
    selection_metric: str
    results: list[RunResult]
    best_index: int


def _prepare_inputs(config: ExperimentConfig):
    """Parse, filter and split the raw data once; load modality tables."""
    if config.values.get("interactions") is None:
        raise TypeMismatch("interactions", "no interactions file configured")
    records = read_interactions(config["interactions"])
    dataset = preprocess(
        records,
        FilterParams(k=config["k"]),
        SplitSpec(strategy=config["split"], ratios=config["ratios"], seed=config["seed"]),
    )
    tables = load_modality_tables(config, dataset.item_map)
    if config["model"] != "mf_bpr" and not tables:
        raise MissingFeatures(f"model {config['model']} needs features.<modality> entries")
    return dataset, tables


def load_modality_tables(config: ExperimentConfig, item_map: dict[str, int]) -> list:
    tables = []
    for modality, (matrix_path, ids_path) in sorted(config.feature_paths().items()):
        fm = load_feature_matrix(matrix_path, ids_path)
        tables.append(
            align_features(
                fm,
                item_map,
                kind=modality,
                policy=config["imputation"],
                standardize=config["standardize"],
            )
        )
    return tables


def _train_config(values: dict[str, object]) -> TrainConfig:
    return TrainConfig(
        learning_rate=values["learning_rate"],
        batch_size=values["batch_size"],
        max_epochs=values["max_epochs"],
        patience=values["patience"],
        eval_interval=values["eval_interval"],
        stop_metric=values["stop_metric"],
        optimizer=values["optimizer"],
        adam_beta1=values["adam_beta1"],
        adam_beta2=values["adam_beta2"],
        adam_eps=values["adam_eps"],
        seed=values["seed"],
    )


def run_single(config: ExperimentConfig, dataset, tables, out_dir: str | None = None):
    """Train and evaluate one concrete (scalar) configuration."""
    v = config.values
    fused = fuse(tables, v["fusion"]) if tables else None
    state, log = fit(
        v["model"],
        dataset,
        _train_config(v),
        d=v["d"],
        d_p=v["d_p"],
        n_layers=v["n_layers"],
        lambda_reg=v["reg"],
        fused=fused,
    )
    adjacency = build_adjacency(dataset.train) if v["model"] == "graph_mm" else None
    cutoffs = v["topk"]
    valid_report = (
        evaluate(state, dataset, "valid", cutoffs, fused, adjacency)
        if dataset.valid.nnz > 0
        else None
    )
    test_report = (
        evaluate(state, dataset, "test", cutoffs, fused, adjacency)
        if dataset.test.nnz > 0
        else None
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(state, os.path.join(out_dir, "checkpoint"))
        write_train_log(log, os.path.join(out_dir, "train_log.tsv"), v["stop_metric"])
        if valid_report is not None:
            write_metric_report(valid_report, os.path.join(out_dir, "valid_report.tsv"))
        if test_report is not None:
            write_metric_report(test_report, os.path.join(out_dir, "test_report.tsv"))
    return state, log, valid_report, test_report


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | os.PathLike | None = None,
    jobs: int = 1,
) -> SummaryReport:
    """Run every grid combination against one frozen split.

    Each combination re-derives all random streams from the config seed, so
    its row is independent of which other combinations run, or in what
    order. Failing combinations are recorded in an error column and skipped
    by the best-row selection, unless ``fail_fast`` is set.
    """
    dataset, tables = _prepare_inputs(config)
    if dataset.valid.nnz == 0:
        raise EmptySplit("grid selection needs a non-empty validation split")
    combos = expand_grid(config)
    sel_name, sel_k = parse_metric_spec(config["selection_metric"])
    if sel_k not in config["topk"]:
        raise TypeMismatch("selection_metric", f"cutoff {sel_k} not in topk {config['topk']}")

    out = None if out_dir is None else os.fspath(out_dir)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        save_dataset(
            dataset,
            SplitSpec(strategy=config["split"], ratios=config["ratios"], seed=config["seed"]),
            os.path.join(out, "dataset"),
        )

    def run_combo(idx: int) -> RunResult:
        combo = combos[idx]
        concrete = config.with_combo(combo)
        combo_dir = None if out is None else os.path.join(out, f"combo_{idx:03d}")
        started = time.perf_counter()
        try:
            _, log, valid_report, test_report = run_single(concrete, dataset, tables, combo_dir)
            return RunResult(
                combo=combo,
                valid_report=valid_report,
                test_report=test_report,
                best_epoch=log.best_epoch,
                stop_reason=log.stop_reason,
                wall_time=time.perf_counter() - started,
            )
        except Exception as exc:
            if config["fail_fast"]:
                raise
            return RunResult(
                combo=combo,
                valid_report=None,
                test_report=None,
                best_epoch=None,
                stop_reason=None,
                wall_time=time.perf_counter() - started,
                error=f"{type(exc).__name__}: {exc}",
            )

    if jobs <= 1:
        results = [run_combo(i) for i in range(len(combos))]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_combo, range(len(combos))))

    best_index = -1
    best_value = -np.inf
    for idx, result in enumerate(results):
        if result.error is None and result.valid_report is not None:
            value = result.valid_report.get(sel_name, sel_k)
            if value > best_value:
                best_value = value
                best_index = idx

    report = SummaryReport(
        grid_keys=sorted(config.grid),
        cutoffs=tuple(config["topk"]),
        selection_metric=config["selection_metric"],
        results=results,
        best_index=best_index,
    )
    if out is not None:
        write_report(report, os.path.join(out, "summary.tsv"))
        _write_timings(report, os.path.join(out, "timings.tsv"))
    return report


def write_report(report: SummaryReport, path: str | os.PathLike) -> None:
    """Summary TSV: grid keys, valid_/test_ metric columns per cutoff,
    best_epoch, wall_time, error, then a final `# best: <row>` line.

    The file is byte-reproducible across identical invocations, so the
    wall_time column is zero-filled; measured seconds are written to the
    timings.tsv sidecar instead.
    """
    def fmt(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    columns = list(report.grid_keys)
    for split in ("valid", "test"):
        for metric in METRICS:
            for k in report.cutoffs:
                columns.append(f"{split}_{metric}@{k}")
    columns += ["best_epoch", "wall_time", "error"]

    lines = ["\t".join(columns)]
    for result in report.results:
        cells = [fmt(result.combo[key]) for key in report.grid_keys]
        for rep in (result.valid_report, result.test_report):
            for metric in METRICS:
                for k in report.cutoffs:
                    cells.append("nan" if rep is None else f"{rep.get(metric, k):.6f}")
        cells.append("-1" if result.best_epoch is None else str(result.best_epoch))
        cells.append("0.000000")
        cells.append("" if result.error is None else result.error.replace("\t", " ").replace("\n", " "))
        lines.append("\t".join(cells))
    lines.append(f"# best: {report.best_index}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_timings(report: SummaryReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("combo\twall_seconds\n")
        for idx, result in enumerate(report.results):
            fh.write(f"{idx}\t{result.wall_time:.6f}\n")
