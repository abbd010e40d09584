"""Model contract and the three built-in recommenders.

Every model is a named-tensor :class:`ModelState` plus two operations:
``calculate_loss`` (pairwise BPR loss with exact analytic gradients) and
``full_sort_predict`` (scores for every item). Three kinds are provided:

* ``mf_bpr``     score(u, i) = <U_u, V_i>
* ``vbpr_mm``    score(u, i) = <U_u, V_i> + <M_u, P^T f_i> for fused item
                 features f_i and projection P
* ``graph_mm``   LightGCN-style propagation over the symmetric
                 degree-normalized train graph, starting from
                 E0 = [U ; V + f W], final embedding = mean of layers 0..L

All arithmetic is float64; the float32 feature files are widened on load.
Gradients are derived by hand and validated against finite differences in
the test suite, including differentiation through the graph propagation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import InteractionSet
from .errors import (
    EmptyBatch,
    IndexOutOfRange,
    MissingAdjacency,
    MissingFeatures,
)
from .modality import read_matrix, write_matrix
from .rng import stream

MODEL_KINDS = ("mf_bpr", "vbpr_mm", "graph_mm")

EMB_INIT_STD = 0.1


@dataclass
class TripleBatch:
    """(user, positive item, negative item) index triples."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self) -> int:
        return len(self.users)


@dataclass
class ModelState:
    kind: str
    n_users: int
    n_items: int
    d: int
    tensors: dict[str, np.ndarray]
    lambda_reg: float = 0.0
    d_p: int | None = None
    n_layers: int | None = None
    seed: int = 0

    def copy(self) -> "ModelState":
        return ModelState(
            kind=self.kind,
            n_users=self.n_users,
            n_items=self.n_items,
            d=self.d,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            lambda_reg=self.lambda_reg,
            d_p=self.d_p,
            n_layers=self.n_layers,
            seed=self.seed,
        )


def init_params(
    kind: str,
    n_users: int,
    n_items: int,
    d: int,
    seed: int,
    d_p: int | None = None,
    d_fused: int | None = None,
    n_layers: int | None = None,
    lambda_reg: float = 0.0,
) -> ModelState:
    """Draw fresh parameters, deterministically from (seed, tensor name).

    Embeddings are Normal(0, 0.1^2); projection matrices are Xavier-uniform
    with bound sqrt(6 / (fan_in + fan_out)).
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if d <= 0 or n_users <= 0 or n_items <= 0:
        raise ValueError("dimensions and entity counts must be positive")

    def normal(name: str, shape: tuple[int, int]) -> np.ndarray:
        return stream(seed, "init", name).normal(shape, std=EMB_INIT_STD)

    def xavier(name: str, fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        u = stream(seed, "init", name).uniform((fan_in, fan_out))
        return (2.0 * u - 1.0) * bound

    tensors = {
        "user_emb": normal("user_emb", (n_users, d)),
        "item_emb": normal("item_emb", (n_items, d)),
    }
    if kind == "vbpr_mm":
        if d_p is None or d_p <= 0 or d_fused is None or d_fused <= 0:
            raise ValueError("vbpr_mm needs positive d_p and d_fused")
        tensors["user_mod_emb"] = normal("user_mod_emb", (n_users, d_p))
        tensors["proj"] = xavier("proj", d_fused, d_p)
    elif kind == "graph_mm":
        if d_fused is None or d_fused <= 0:
            raise ValueError("graph_mm needs positive d_fused")
        if n_layers is None or n_layers < 0:
            raise ValueError("graph_mm needs n_layers >= 0")
        tensors["mod_proj"] = xavier("mod_proj", d_fused, d)

    return ModelState(
        kind=kind,
        n_users=n_users,
        n_items=n_items,
        d=d,
        tensors=tensors,
        lambda_reg=lambda_reg,
        d_p=d_p,
        n_layers=n_layers if kind == "graph_mm" else None,
        seed=seed,
    )


def build_adjacency(train: InteractionSet) -> sp.csr_matrix:
    """Symmetric degree-normalized bipartite adjacency over user+item nodes.

    Entry (u, n_users + i) = 1 / sqrt(deg_u * deg_i) for each train edge;
    isolated nodes keep an all-zero row (normalization factor 0).
    """
    n_u, n_i = train.n_rows, train.n_cols
    users, items = train.pair_arrays()
    deg = np.zeros(n_u + n_i)
    np.add.at(deg, users, 1.0)
    np.add.at(deg, n_u + items, 1.0)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    weights = inv_sqrt[users] * inv_sqrt[n_u + items]
    rows = np.concatenate([users, n_u + items])
    cols = np.concatenate([n_u + items, users])
    vals = np.concatenate([weights, weights])
    n = n_u + n_i
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def propagate_mean(adjacency: sp.csr_matrix, e0: np.ndarray, n_layers: int) -> np.ndarray:
    """Mean of e0, A e0, ..., A^L e0. The operator is symmetric, so this
    doubles as the adjoint used in the backward pass."""
    acc = e0
    total = e0.copy()
    for _ in range(n_layers):
        acc = adjacency @ acc
        total += acc
    return total / (n_layers + 1)


def _check_inputs(state: ModelState, fused: np.ndarray | None, adjacency) -> None:
    if state.kind in ("vbpr_mm", "graph_mm"):
        if fused is None:
            raise MissingFeatures(f"{state.kind} needs fused item features")
        if fused.shape[0] != state.n_items:
            raise MissingFeatures(
                f"fused features cover {fused.shape[0]} items, dataset has {state.n_items}"
            )
    if state.kind == "graph_mm" and adjacency is None:
        raise MissingAdjacency("graph_mm needs the train adjacency")


def _final_embeddings(state: ModelState, fused: np.ndarray, adjacency) -> np.ndarray:
    e0 = np.vstack([
        state.tensors["user_emb"],
        state.tensors["item_emb"] + fused @ state.tensors["mod_proj"],
    ])
    return propagate_mean(adjacency, e0, state.n_layers)


def score_all(
    state: ModelState,
    fused: np.ndarray | None = None,
    adjacency: sp.csr_matrix | None = None,
) -> np.ndarray:
    """Score matrix for every (user, item) pair, n_users x n_items."""
    _check_inputs(state, fused, adjacency)
    u, v = state.tensors["user_emb"], state.tensors["item_emb"]
    if state.kind == "mf_bpr":
        return u @ v.T
    if state.kind == "vbpr_mm":
        q = fused @ state.tensors["proj"]
        return u @ v.T + state.tensors["user_mod_emb"] @ q.T
    ef = _final_embeddings(state, fused, adjacency)
    return ef[: state.n_users] @ ef[state.n_users:].T


def full_sort_predict(
    state: ModelState,
    users: np.ndarray | list[int],
    fused: np.ndarray | None = None,
    adjacency: sp.csr_matrix | None = None,
) -> np.ndarray:
    """Rows of the full score matrix for the requested users; pure."""
    _check_inputs(state, fused, adjacency)
    users = np.asarray(users, dtype=np.int64)
    if users.size == 0:
        return np.zeros((0, state.n_items))
    if users.min() < 0 or users.max() >= state.n_users:
        raise IndexOutOfRange(f"user indices must lie in [0, {state.n_users})")
    u, v = state.tensors["user_emb"], state.tensors["item_emb"]
    if state.kind == "mf_bpr":
        return u[users] @ v.T
    if state.kind == "vbpr_mm":
        q = fused @ state.tensors["proj"]
        return u[users] @ v.T + state.tensors["user_mod_emb"][users] @ q.T
    ef = _final_embeddings(state, fused, adjacency)
    return ef[users] @ ef[state.n_users:].T


def calculate_loss(
    state: ModelState,
    batch: TripleBatch,
    fused: np.ndarray | None = None,
    adjacency: sp.csr_matrix | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BPR loss over the batch plus analytic gradients.

    loss = mean_t softplus(-(x_ui - x_uj))
         + lambda_reg * mean_t sum of squared norms of the embedding rows
           the triple touches (user_emb[u], item_emb[i], item_emb[j], and
           user_mod_emb[u] for vbpr_mm).

    Projection matrices contribute to scores, and hence receive gradients,
    but are left out of the regularizer: it covers per-row embeddings only.
    """
    if len(batch) == 0:
        raise EmptyBatch("cannot compute a loss over zero triples")
    _check_inputs(state, fused, adjacency)
    users = np.asarray(batch.users, dtype=np.int64)
    pos = np.asarray(batch.pos_items, dtype=np.int64)
    neg = np.asarray(batch.neg_items, dtype=np.int64)
    b = len(users)
    lam = state.lambda_reg
    u_t, v_t = state.tensors["user_emb"], state.tensors["item_emb"]
    grads = {name: np.zeros_like(t) for name, t in state.tensors.items()}

    if state.kind == "graph_mm":
        n_u = state.n_users
        ef = _final_embeddings(state, fused, adjacency)
        s = np.einsum("td,td->t", ef[users], ef[n_u + pos] - ef[n_u + neg])
    elif state.kind == "vbpr_mm":
        p = state.tensors["proj"]
        m_t = state.tensors["user_mod_emb"]
        q_pos = fused[pos] @ p
        q_neg = fused[neg] @ p
        s = np.einsum("td,td->t", u_t[users], v_t[pos] - v_t[neg])
        s += np.einsum("td,td->t", m_t[users], q_pos - q_neg)
    else:
        s = np.einsum("td,td->t", u_t[users], v_t[pos] - v_t[neg])

    rank_loss = float(np.logaddexp(0.0, -s).mean())
    reg_rows = (
        np.einsum("td,td->t", u_t[users], u_t[users])
        + np.einsum("td,td->t", v_t[pos], v_t[pos])
        + np.einsum("td,td->t", v_t[neg], v_t[neg])
    )
    if state.kind == "vbpr_mm":
        m_rows = state.tensors["user_mod_emb"][users]
        reg_rows = reg_rows + np.einsum("td,td->t", m_rows, m_rows)
    loss = rank_loss + lam * float(reg_rows.mean())

    # d loss / d s_t, including the 1/|B| of the mean
    c = (-expit(-s) / b)[:, None]

    if state.kind == "graph_mm":
        g_final = np.zeros_like(ef)
        np.add.at(g_final, users, c * (ef[n_u + pos] - ef[n_u + neg]))
        np.add.at(g_final, n_u + pos, c * ef[users])
        np.add.at(g_final, n_u + neg, -c * ef[users])
        g0 = propagate_mean(adjacency, g_final, state.n_layers)
        grads["user_emb"] += g0[:n_u]
        grads["item_emb"] += g0[n_u:]
        grads["mod_proj"] += fused.T @ g0[n_u:]
    else:
        np.add.at(grads["user_emb"], users, c * (v_t[pos] - v_t[neg]))
        np.add.at(grads["item_emb"], pos, c * u_t[users])
        np.add.at(grads["item_emb"], neg, -c * u_t[users])
        if state.kind == "vbpr_mm":
            np.add.at(grads["user_mod_emb"], users, c * (q_pos - q_neg))
            dq = np.zeros((state.n_items, state.d_p))
            np.add.at(dq, pos, c * m_t[users])
            np.add.at(dq, neg, -c * m_t[users])
            grads["proj"] += fused.T @ dq

    if lam > 0:
        coef = 2.0 * lam / b
        np.add.at(grads["user_emb"], users, coef * u_t[users])
        np.add.at(grads["item_emb"], pos, coef * v_t[pos])
        np.add.at(grads["item_emb"], neg, coef * v_t[neg])
        if state.kind == "vbpr_mm":
            np.add.at(grads["user_mod_emb"], users, coef * m_t[users])

    return loss, grads


# ------------------------------------------------------------- checkpoints

def save_checkpoint(state: ModelState, out_dir: str | os.PathLike) -> None:
    """Write each tensor as an MMF8 file plus a `meta` key-value file."""
    os.makedirs(out_dir, exist_ok=True)
    out = os.fspath(out_dir)
    with open(os.path.join(out, "meta"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"kind: {state.kind}\n")
        fh.write(f"n_users: {state.n_users}\n")
        fh.write(f"n_items: {state.n_items}\n")
        fh.write(f"d: {state.d}\n")
        fh.write(f"d_p: {'' if state.d_p is None else state.d_p}\n")
        fh.write(f"n_layers: {'' if state.n_layers is None else state.n_layers}\n")
        fh.write(f"lambda_reg: {state.lambda_reg!r}\n")
        fh.write(f"seed: {state.seed}\n")
        fh.write(f"tensors: {','.join(sorted(state.tensors))}\n")
    for name, tensor in state.tensors.items():
        write_matrix(os.path.join(out, f"{name}.mmf8"), tensor, magic=b"MMF8")


def load_checkpoint(in_dir: str | os.PathLike) -> ModelState:
    src = os.fspath(in_dir)
    meta: dict[str, str] = {}
    with open(os.path.join(src, "meta"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                key, _, value = line.partition(":")
                meta[key.strip()] = value.strip()
    tensors = {
        name: read_matrix(os.path.join(src, f"{name}.mmf8"), magic=b"MMF8")
        for name in meta["tensors"].split(",")
    }
    return ModelState(
        kind=meta["kind"],
        n_users=int(meta["n_users"]),
        n_items=int(meta["n_items"]),
        d=int(meta["d"]),
        tensors=tensors,
        lambda_reg=float(meta["lambda_reg"]),
        d_p=int(meta["d_p"]) if meta["d_p"] else None,
        n_layers=int(meta["n_layers"]) if meta["n_layers"] else None,
        seed=int(meta["seed"]),
    )
