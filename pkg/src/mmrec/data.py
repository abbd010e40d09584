"""Interaction ingestion, k-core filtering, ID remapping and splitting.

The raw input is a UTF-8 TSV with a header naming at least ``userID`` and
``itemID`` columns; ``rating`` and ``timestamp`` columns are optional. The
pipeline is pure and deterministic: parse -> dedupe -> k-core -> id maps ->
split, ending in a :class:`Dataset` whose train/valid/test splits are stored
CSR-style (row offsets plus sorted column indices).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    EmptyDataset,
    MalformedHeader,
    MalformedLine,
    MissingTimestamps,
)
from .rng import check_seed, stream

SPLIT_STRATEGIES = ("per_user_random", "global_random", "temporal_leave_last")


@dataclass(frozen=True)
class InteractionRecord:
    raw_user_id: str
    raw_item_id: str
    rating: float | None = None
    timestamp: int | None = None


@dataclass(frozen=True)
class FilterParams:
    """Minimum interaction count applied to both users and items."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class SplitSpec:
    strategy: str
    ratios: tuple[float, float, float]
    seed: int

    def __post_init__(self):
        if self.strategy not in SPLIT_STRATEGIES:
            raise ValueError(f"unknown split strategy {self.strategy!r}")
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be three non-negative numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")
        if self.ratios[0] <= 0:
            raise ValueError("train ratio must be positive")
        check_seed(self.seed)


class InteractionSet:
    """Sparse user -> item adjacency: row offsets plus sorted column indices."""

    def __init__(self, n_rows: int, n_cols: int, indptr: np.ndarray, indices: np.ndarray):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], n_rows: int, n_cols: int) -> "InteractionSet":
        arr = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        if arr.size:
            np.add.at(indptr, arr[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        indices = arr[:, 1] if arr.size else np.empty(0, dtype=np.int64)
        return cls(n_rows, n_cols, indptr, indices)

    def row(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def pairs(self) -> Iterator[tuple[int, int]]:
        for u in range(self.n_rows):
            for i in self.row(u):
                yield u, int(i)

    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))
        return rows, self.indices.copy()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, InteractionSet)
            and self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


@dataclass
class Dataset:
    n_users: int
    n_items: int
    user_map: dict[str, int]
    item_map: dict[str, int]
    train: InteractionSet
    valid: InteractionSet
    test: InteractionSet


def parse_interactions(source: Iterable[str]) -> list[InteractionRecord]:
    """Parse a TSV text stream into interaction records, preserving order.

    Raises MalformedHeader if userID or itemID is absent, MalformedLine for
    rows with a wrong field count, empty IDs, or non-numeric rating/timestamp
    fields. Line numbers are 1-based and count the header.
    """
    lines = iter(source)
    try:
        header_line = next(lines)
    except StopIteration:
        raise MalformedHeader("empty input, no header line")
    columns = header_line.rstrip("\r\n").split("\t")
    try:
        user_col = columns.index("userID")
        item_col = columns.index("itemID")
    except ValueError:
        raise MalformedHeader(f"header must name userID and itemID, got {columns}")
    rating_col = columns.index("rating") if "rating" in columns else None
    ts_col = columns.index("timestamp") if "timestamp" in columns else None

    records = []
    for line_no, line in enumerate(lines, start=2):
        if line in ("", "\n"):
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) != len(columns):
            raise MalformedLine(line_no, f"expected {len(columns)} fields, got {len(fields)}")
        user, item = fields[user_col], fields[item_col]
        if not user or not item:
            raise MalformedLine(line_no, "empty user or item ID")
        rating = None
        if rating_col is not None and fields[rating_col] != "":
            try:
                rating = float(fields[rating_col])
            except ValueError:
                raise MalformedLine(line_no, f"bad rating {fields[rating_col]!r}")
            if not math.isfinite(rating):
                raise MalformedLine(line_no, f"non-finite rating {fields[rating_col]!r}")
        timestamp = None
        if ts_col is not None and fields[ts_col] != "":
            try:
                timestamp = int(fields[ts_col])
            except ValueError:
                raise MalformedLine(line_no, f"bad timestamp {fields[ts_col]!r}")
        records.append(InteractionRecord(user, item, rating, timestamp))
    return records


def read_interactions(path: str | os.PathLike) -> list[InteractionRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_interactions(fh)


def dedupe_interactions(records: list[InteractionRecord]) -> list[InteractionRecord]:
    """One record per (user, item) pair, sorted by raw IDs.

    The kept record is the one with the greatest timestamp; missing
    timestamps compare lowest, and ties fall to the later input position.
    """
    best: dict[tuple[str, str], tuple[float, int, InteractionRecord]] = {}
    for pos, rec in enumerate(records):
        ts = -math.inf if rec.timestamp is None else float(rec.timestamp)
        key = (rec.raw_user_id, rec.raw_item_id)
        kept = best.get(key)
        if kept is None or (ts, pos) > kept[:2]:
            best[key] = (ts, pos, rec)
    return [best[key][2] for key in sorted(best)]


def k_core_filter(records: list[InteractionRecord], params: FilterParams) -> list[InteractionRecord]:
    """Largest subset where every user and item keeps >= k interactions.

    Peels under-threshold users and items with a work queue (linear in the
    number of edges); the fixpoint is unique, so the peeling order does not
    matter. May return an empty list.
    """
    k = params.k
    user_items: dict[str, list[str]] = {}
    item_users: dict[str, list[str]] = {}
    for rec in records:
        user_items.setdefault(rec.raw_user_id, []).append(rec.raw_item_id)
        item_users.setdefault(rec.raw_item_id, []).append(rec.raw_user_id)

    user_deg = {u: len(v) for u, v in user_items.items()}
    item_deg = {i: len(v) for i, v in item_users.items()}
    dead_users: set[str] = set()
    dead_items: set[str] = set()
    queue: list[tuple[str, str]] = [("u", u) for u, d in user_deg.items() if d < k]
    queue += [("i", i) for i, d in item_deg.items() if d < k]

    while queue:
        side, node = queue.pop()
        if side == "u":
            if node in dead_users:
                continue
            dead_users.add(node)
            for i in user_items[node]:
                if i in dead_items:
                    continue
                item_deg[i] -= 1
                if item_deg[i] < k:
                    queue.append(("i", i))
        else:
            if node in dead_items:
                continue
            dead_items.add(node)
            for u in item_users[node]:
                if u in dead_users:
                    continue
                user_deg[u] -= 1
                if user_deg[u] < k:
                    queue.append(("u", u))

    return [
        rec
        for rec in records
        if rec.raw_user_id not in dead_users and rec.raw_item_id not in dead_items
    ]


def build_id_maps(records: list[InteractionRecord]) -> tuple[dict[str, int], dict[str, int]]:
    """Dense indices assigned in lexicographic order of the raw ID strings."""
    if not records:
        raise EmptyDataset("no interactions survive filtering")
    users = sorted({rec.raw_user_id for rec in records})
    items = sorted({rec.raw_item_id for rec in records})
    return (
        {u: idx for idx, u in enumerate(users)},
        {i: idx for idx, i in enumerate(items)},
    )


def _split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int]:
    """(n_test, n_valid) under the floor rule with the small-user guard."""
    if n < 3:
        return 0, 0
    _, r_valid, r_test = ratios
    n_test = int(math.floor(r_test * n))
    n_valid = int(math.floor(r_valid * n))
    if r_test > 0:
        n_test = max(1, n_test)
    if r_valid > 0:
        n_valid = max(1, n_valid)
    # never leave a user without a train interaction; shrink valid before test
    if n_test + n_valid >= n:
        n_valid = min(n_valid, max(0, n - 1 - n_test))
        n_test = min(n_test, n - 1 - n_valid)
    return n_test, n_valid


def split(
    records: list[InteractionRecord],
    maps: tuple[dict[str, int], dict[str, int]],
    spec: SplitSpec,
) -> Dataset:
    """Partition filtered interactions into a train/valid/test Dataset."""
    user_map, item_map = maps
    n_users, n_items = len(user_map), len(item_map)

    by_user: list[list[tuple[int, int | None]]] = [[] for _ in range(n_users)]
    for rec in records:
        u = user_map[rec.raw_user_id]
        by_user[u].append((item_map[rec.raw_item_id], rec.timestamp))

    train_pairs: list[tuple[int, int]] = []
    valid_pairs: list[tuple[int, int]] = []
    test_pairs: list[tuple[int, int]] = []

    if spec.strategy == "per_user_random":
        for u in range(n_users):
            items = np.asarray(sorted(i for i, _ in by_user[u]), dtype=np.int64)
            n = len(items)
            n_test, n_valid = _split_counts(n, spec.ratios)
            shuffled = items[stream(spec.seed, "split", u).permutation(n)]
            test_pairs += [(u, int(i)) for i in shuffled[:n_test]]
            valid_pairs += [(u, int(i)) for i in shuffled[n_test:n_test + n_valid]]
            train_pairs += [(u, int(i)) for i in shuffled[n_test + n_valid:]]
    elif spec.strategy == "temporal_leave_last":
        for u in range(n_users):
            if any(ts is None for _, ts in by_user[u]):
                raise MissingTimestamps(f"user index {u} has interactions without timestamps")
            ordered = sorted(by_user[u], key=lambda it: (it[1], it[0]))
            n = len(ordered)
            n_test, n_valid = _split_counts(n, spec.ratios)
            items = [i for i, _ in ordered]
            test_pairs += [(u, i) for i in items[n - n_test:]]
            valid_pairs += [(u, i) for i in items[n - n_test - n_valid:n - n_test]]
            train_pairs += [(u, i) for i in items[:n - n_test - n_valid]]
    else:  # global_random
        pairs = [(user_map[r.raw_user_id], item_map[r.raw_item_id]) for r in records]
        perm = stream(spec.seed, "split").permutation(len(pairs))
        shuffled = [pairs[p] for p in perm]
        n = len(shuffled)
        b_train = int(math.floor(spec.ratios[0] * n))
        b_valid = int(math.floor((spec.ratios[0] + spec.ratios[1]) * n))
        train_pairs = shuffled[:b_train]
        valid_pairs = shuffled[b_train:b_valid]
        test_pairs = shuffled[b_valid:]
        trained_users = {u for u, _ in train_pairs}
        orphans = {u for u in range(n_users) if u not in trained_users}
        if orphans:
            train_pairs += [(u, i) for u, i in valid_pairs + test_pairs if u in orphans]
            valid_pairs = [(u, i) for u, i in valid_pairs if u not in orphans]
            test_pairs = [(u, i) for u, i in test_pairs if u not in orphans]

    return Dataset(
        n_users=n_users,
        n_items=n_items,
        user_map=user_map,
        item_map=item_map,
        train=InteractionSet.from_pairs(train_pairs, n_users, n_items),
        valid=InteractionSet.from_pairs(valid_pairs, n_users, n_items),
        test=InteractionSet.from_pairs(test_pairs, n_users, n_items),
    )


def preprocess(
    records: list[InteractionRecord],
    filter_params: FilterParams,
    spec: SplitSpec,
) -> Dataset:
    """dedupe -> k-core -> id maps -> split, in one call."""
    deduped = dedupe_interactions(records)
    filtered = k_core_filter(deduped, filter_params)
    maps = build_id_maps(filtered)
    return split(filtered, maps, spec)


# ------------------------------------------------------------- persistence

def _write_pairs(iset: InteractionSet, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in iset.pairs():
            fh.write(f"{u}\t{i}\n")


def _read_pairs(path: str, n_rows: int, n_cols: int) -> InteractionSet:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                u, i = line.split("\t")
                pairs.append((int(u), int(i)))
    return InteractionSet.from_pairs(pairs, n_rows, n_cols)


def save_dataset(dataset: Dataset, spec: SplitSpec, out_dir: str | os.PathLike) -> None:
    """Serialize a Dataset to a directory; a pure function of its inputs."""
    os.makedirs(out_dir, exist_ok=True)
    out = os.fspath(out_dir)
    with open(os.path.join(out, "meta"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n_users: {dataset.n_users}\n")
        fh.write(f"n_items: {dataset.n_items}\n")
        fh.write(f"strategy: {spec.strategy}\n")
        fh.write(f"ratios: {','.join(repr(float(r)) for r in spec.ratios)}\n")
        fh.write(f"seed: {spec.seed}\n")
    for name, id_map in (("umap.tsv", dataset.user_map), ("imap.tsv", dataset.item_map)):
        with open(os.path.join(out, name), "w", encoding="utf-8", newline="\n") as fh:
            for raw, dense in sorted(id_map.items(), key=lambda kv: kv[1]):
                fh.write(f"{raw}\t{dense}\n")
    _write_pairs(dataset.train, os.path.join(out, "train.tsv"))
    _write_pairs(dataset.valid, os.path.join(out, "valid.tsv"))
    _write_pairs(dataset.test, os.path.join(out, "test.tsv"))


def load_dataset(in_dir: str | os.PathLike) -> Dataset:
    src = os.fspath(in_dir)
    meta: dict[str, str] = {}
    with open(os.path.join(src, "meta"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                key, _, value = line.partition(":")
                meta[key.strip()] = value.strip()
    n_users, n_items = int(meta["n_users"]), int(meta["n_items"])

    def read_map(name: str) -> dict[str, int]:
        id_map = {}
        with open(os.path.join(src, name), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    raw, dense = line.rstrip("\n").split("\t")
                    id_map[raw] = int(dense)
        return id_map

    return Dataset(
        n_users=n_users,
        n_items=n_items,
        user_map=read_map("umap.tsv"),
        item_map=read_map("imap.tsv"),
        train=_read_pairs(os.path.join(src, "train.tsv"), n_users, n_items),
        valid=_read_pairs(os.path.join(src, "valid.tsv"), n_users, n_items),
        test=_read_pairs(os.path.join(src, "test.tsv"), n_users, n_items),
    )
