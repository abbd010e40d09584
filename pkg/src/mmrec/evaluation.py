"""Full-sort ranking evaluation with Recall, Precision, NDCG and MAP.

Protocol: for every user with ground truth in the target split, score the
whole catalog, mask the user's train items (and only those), take the
top-K by descending score with ties broken by ascending item index, and
average each metric over the evaluated users in user-index order.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import EmptyGroundTruth, EmptySplit
from .models import ModelState, full_sort_predict

METRICS = ("recall", "precision", "ndcg", "map")
DEFAULT_CUTOFFS = (5, 10, 20, 50)
_EVAL_CHUNK = 512


def parse_metric_spec(spec: str) -> tuple[str, int]:
    """Parse 'recall@20' into ('recall', 20)."""
    name, _, k_text = spec.partition("@")
    name = name.strip().lower()
    if name not in METRICS or not k_text.strip().isdigit() or int(k_text) < 1:
        raise ValueError(f"bad metric spec {spec!r}, expected e.g. recall@20")
    return name, int(k_text)


@dataclass
class MetricReport:
    cutoffs: tuple[int, ...]
    values: dict[str, dict[int, float]]
    n_evaluated: int

    def get(self, metric: str, k: int) -> float:
        return self.values[metric][k]


def mask_trained(scores: np.ndarray, train_row: np.ndarray) -> np.ndarray:
    """Copy of a score row with the user's train items set to -inf."""
    masked = np.array(scores, dtype=np.float64)
    masked[np.asarray(train_row, dtype=np.int64)] = -np.inf
    return masked


def top_k(masked_scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the K best non-masked items.

    Descending score; equal scores fall to the lower item index. Stable
    argsort on the negated row gives exactly that order, with masked
    entries pushed to the tail.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-masked_scores, kind="stable")
    n_masked = int(np.isneginf(masked_scores).sum())
    return order[: min(k, len(masked_scores) - n_masked)]


def recall_at_k(topk: np.ndarray, ground_truth: set[int], k: int) -> float:
    if not ground_truth:
        raise EmptyGroundTruth
    hits = sum(1 for i in topk[:k] if int(i) in ground_truth)
    return hits / len(ground_truth)


def precision_at_k(topk: np.ndarray, ground_truth: set[int], k: int) -> float:
    """Hits over K; K stays in the denominator even for short lists."""
    if not ground_truth:
        raise EmptyGroundTruth
    hits = sum(1 for i in topk[:k] if int(i) in ground_truth)
    return hits / k


def ndcg_at_k(topk: np.ndarray, ground_truth: set[int], k: int) -> float:
    if not ground_truth:
        raise EmptyGroundTruth
    dcg = 0.0
    for pos, item in enumerate(topk[:k], start=1):
        if int(item) in ground_truth:
            dcg += 1.0 / math.log2(pos + 1)
    ideal_len = min(len(ground_truth), k)
    idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, ideal_len + 1))
    return dcg / idcg


def map_at_k(topk: np.ndarray, ground_truth: set[int], k: int) -> float:
    """Average precision of one list, normalized by min(|GT|, K); the
    reported MAP is the mean of this over evaluated users."""
    if not ground_truth:
        raise EmptyGroundTruth
    hits = 0
    precision_sum = 0.0
    for pos, item in enumerate(topk[:k], start=1):
        if int(item) in ground_truth:
            hits += 1
            precision_sum += hits / pos
    return precision_sum / min(len(ground_truth), k)


_METRIC_FNS = {
    "recall": recall_at_k,
    "precision": precision_at_k,
    "ndcg": ndcg_at_k,
    "map": map_at_k,
}


def evaluable_users(dataset: Dataset, target: str) -> np.ndarray:
    split = getattr(dataset, target)
    return np.flatnonzero(np.diff(split.indptr) > 0)


def iter_topk_lists(
    state: ModelState,
    dataset: Dataset,
    target: str,
    k: int,
    fused: np.ndarray | None = None,
    adjacency=None,
):
    """Yield (user, top-k item indices, ground-truth set) per evaluable user,
    in user-index order and in fixed-size score chunks."""
    if target not in ("valid", "test"):
        raise ValueError(f"target split must be valid or test, got {target!r}")
    split = getattr(dataset, target)
    users = evaluable_users(dataset, target)
    if users.size == 0:
        raise EmptySplit(f"no user has ground truth in the {target} split")
    for start in range(0, len(users), _EVAL_CHUNK):
        chunk = users[start:start + _EVAL_CHUNK]
        scores = full_sort_predict(state, chunk, fused, adjacency)
        for row, u in enumerate(chunk):
            masked = mask_trained(scores[row], dataset.train.row(u))
            yield int(u), top_k(masked, k), {int(i) for i in split.row(u)}


def evaluate(
    state: ModelState,
    dataset: Dataset,
    target: str,
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS,
    fused: np.ndarray | None = None,
    adjacency=None,
) -> MetricReport:
    """Mean ranking metrics over users with ground truth in ``target``."""
    cutoffs = tuple(sorted(int(k) for k in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    k_max = cutoffs[-1]
    sums = {m: {k: 0.0 for k in cutoffs} for m in METRICS}
    n_evaluated = 0
    for _, topk, gt in iter_topk_lists(state, dataset, target, k_max, fused, adjacency):
        n_evaluated += 1
        for metric, fn in _METRIC_FNS.items():
            for k in cutoffs:
                sums[metric][k] += fn(topk, gt, k)
    values = {m: {k: sums[m][k] / n_evaluated for k in cutoffs} for m in METRICS}
    return MetricReport(cutoffs=cutoffs, values=values, n_evaluated=n_evaluated)


def write_metric_report(report: MetricReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_metric_report(report))


def format_metric_report(report: MetricReport) -> str:
    lines = ["metric\tk\tvalue"]
    for metric in METRICS:
        for k in report.cutoffs:
            lines.append(f"{metric}\t{k}\t{report.get(metric, k):.6f}")
    lines.append(f"n_evaluated\t{report.n_evaluated}")
    return "\n".join(lines) + "\n"
