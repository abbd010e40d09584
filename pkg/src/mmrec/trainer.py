"""Mini-batch BPR training with negative sampling, Adam and early stopping.

An epoch visits every train pair exactly once as a positive, in an order
shuffled per (seed, epoch); each positive is paired with one uniformly
sampled unobserved item. Validation runs every ``eval_interval`` epochs on
the stopping metric; the best-scoring parameters are kept and returned.
The loop is strictly sequential, so two runs with the same config and seed
produce byte-identical logs and checkpoints.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, InteractionSet
from .errors import NoNegativeAvailable, NonFiniteGradient
from .evaluation import MetricReport, evaluate, parse_metric_spec
from .models import (
    ModelState,
    TripleBatch,
    build_adjacency,
    calculate_loss,
    init_params,
)
from .rng import Stream, check_seed, stream

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 2048
    max_epochs: int = 50
    patience: int = 10
    eval_interval: int = 1
    stop_metric: str = "recall@20"
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 2024

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.batch_size, self.patience, self.eval_interval) < 1:
            raise ValueError("batch_size, patience and eval_interval must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("adam parameters out of range")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        parse_metric_spec(self.stop_metric)
        check_seed(self.seed)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, state: ModelState) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(t) for k, t in state.tensors.items()},
            v={k: np.zeros_like(t) for k, t in state.tensors.items()},
        )


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    evaluations: list[tuple[int, MetricReport]] = field(default_factory=list)
    best_epoch: int | None = None
    stop_reason: str = "max_epochs"


def sample_negative(train: InteractionSet, user: int, rng: Stream) -> int:
    """Uniform item outside the user's train row, by rejection sampling."""
    row = train.row(user)
    if len(row) >= train.n_cols:
        raise NoNegativeAvailable(f"user {user} interacts with every item")
    while True:
        candidate = rng.randbelow(train.n_cols)
        pos = np.searchsorted(row, candidate)
        if pos >= len(row) or row[pos] != candidate:
            return candidate


def make_batches(
    train: InteractionSet,
    batch_size: int,
    epoch_index: int,
    seed: int,
) -> list[TripleBatch]:
    """Shuffled positives of one epoch, paired with sampled negatives."""
    users, items = train.pair_arrays()
    rng = stream(seed, "epoch", epoch_index)
    perm = rng.permutation(len(users))
    users, items = users[perm], items[perm]
    negatives = np.fromiter(
        (sample_negative(train, int(u), rng) for u in users),
        dtype=np.int64,
        count=len(users),
    )
    return [
        TripleBatch(users[s:s + batch_size], items[s:s + batch_size], negatives[s:s + batch_size])
        for s in range(0, len(users), batch_size)
    ]


def _check_finite(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for {name} contains NaN or Inf")


def adam_step(
    state: ModelState,
    grads: dict[str, np.ndarray],
    opt: OptimizerState,
    cfg: TrainConfig,
) -> tuple[ModelState, OptimizerState]:
    """One bias-corrected Adam update; tensors without gradients are left
    untouched. Mutates ``state`` and ``opt`` in place and returns them."""
    _check_finite(grads)
    opt.t += 1
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    bias1 = 1.0 - b1**opt.t
    bias2 = 1.0 - b2**opt.t
    for name, theta in state.tensors.items():
        g = grads.get(name)
        if g is None:
            continue
        opt.m[name] = b1 * opt.m[name] + (1.0 - b1) * g
        opt.v[name] = b2 * opt.v[name] + (1.0 - b2) * g * g
        m_hat = opt.m[name] / bias1
        v_hat = opt.v[name] / bias2
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state, opt


def sgd_step(
    state: ModelState,
    grads: dict[str, np.ndarray],
    cfg: TrainConfig,
) -> ModelState:
    _check_finite(grads)
    for name, theta in state.tensors.items():
        g = grads.get(name)
        if g is not None:
            theta -= cfg.learning_rate * g
    return state


def fit(
    kind: str,
    dataset: Dataset,
    cfg: TrainConfig,
    d: int,
    d_p: int | None = None,
    n_layers: int | None = None,
    lambda_reg: float = 0.0,
    fused: np.ndarray | None = None,
) -> tuple[ModelState, TrainLog]:
    """Train one model, returning the best-validation parameters and a log.

    With an empty validation split there is nothing to select on: early
    stopping is disabled, training runs to max_epochs and the final
    parameters are returned.
    """
    if dataset.train.nnz == 0:
        raise ValueError("train split is empty")
    state = init_params(
        kind,
        dataset.n_users,
        dataset.n_items,
        d,
        cfg.seed,
        d_p=d_p,
        d_fused=None if fused is None else fused.shape[1],
        n_layers=n_layers,
        lambda_reg=lambda_reg,
    )
    adjacency = build_adjacency(dataset.train) if kind == "graph_mm" else None
    opt = OptimizerState.zeros(state)
    log = TrainLog()
    stop_name, stop_k = parse_metric_spec(cfg.stop_metric)
    has_validation = dataset.valid.nnz > 0

    best_state: ModelState | None = None
    best_value = -np.inf
    evals_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        batch_losses = []
        for batch in make_batches(dataset.train, cfg.batch_size, epoch - 1, cfg.seed):
            loss, grads = calculate_loss(state, batch, fused, adjacency)
            batch_losses.append(loss)
            if cfg.optimizer == "adam":
                adam_step(state, grads, opt, cfg)
            else:
                sgd_step(state, grads, cfg)
        log.epoch_losses.append(float(np.mean(batch_losses)))

        if has_validation and epoch % cfg.eval_interval == 0:
            report = evaluate(state, dataset, "valid", (stop_k,), fused, adjacency)
            log.evaluations.append((epoch, report))
            value = report.get(stop_name, stop_k)
            if value > best_value:
                best_value = value
                best_state = state.copy()
                log.best_epoch = epoch
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= cfg.patience:
                    log.stop_reason = "early_stop"
                    break

    if best_state is None:
        best_state = state.copy()
    return best_state, log


def write_train_log(log: TrainLog, path: str | os.PathLike, stop_metric: str = "recall@20") -> None:
    """TSV log: `epoch \\t mean_loss` rows interleaved with
    `eval \\t epoch \\t metric \\t value` rows in epoch order."""
    evals = dict((epoch, report) for epoch, report in log.evaluations)
    name, k = parse_metric_spec(stop_metric)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for idx, loss in enumerate(log.epoch_losses, start=1):
            fh.write(f"{idx}\t{loss:.6f}\n")
            if idx in evals:
                fh.write(f"eval\t{idx}\t{name}@{k}\t{evals[idx].get(name, k):.6f}\n")
