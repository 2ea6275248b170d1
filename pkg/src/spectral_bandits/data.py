"""Rating ingestion, low-rank completion and per-user reward vectors.

Pipeline: load + filter ratings, split them into three disjoint parts
(model / tuning / graph), factorise each with ALS, build a kNN graph over
the graph part's item factors and read reward vectors off the model part.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from spectral_bandits.graph import knn_graph


class RatingsFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class RatingsTable:
    """Sparse ratings over dense user/item indices.

    ``user_ids[i]`` / ``item_ids[j]`` give the original labels.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_ids: list
    item_ids: list

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def __len__(self):
        return len(self.ratings)

    def subset(self, index):
        index = np.asarray(index)
        return RatingsTable(self.users[index], self.items[index], self.ratings[index],
                            self.user_ids, self.item_ids)


@dataclass
class Factorization:
    U: np.ndarray
    V: np.ndarray
    rank: int
    rmse: float
    loss_history: list = field(default_factory=list)
    rmse_history: list = field(default_factory=list)

    def predict(self):
        return self.U @ self.V.T


def _label_key(label):
    return (0, int(label), label) if label.lstrip("-").isdigit() else (1, 0, label)


def parse_ratings(lines):
    """Parse ``user<TAB>item<TAB>rating`` (or ``::``-separated) lines.

    Returns raw ``(user, item, rating)`` triples; the first rating of a
    duplicated (user, item) pair wins.
    """
    triples = []
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("::") if "::" in line else line.split("\t")
        if len(parts) < 3:
            raise RatingsFormatError(f"expected user, item, rating; got {line!r}", lineno)
        user, item = parts[0].strip(), parts[1].strip()
        try:
            rating = float(parts[2])
        except ValueError:
            raise RatingsFormatError(f"bad rating {parts[2]!r}", lineno) from None
        if not user or not item or not math.isfinite(rating):
            raise RatingsFormatError(f"malformed record {line!r}", lineno)
        if (user, item) in seen:
            continue
        seen.add((user, item))
        triples.append((user, item, rating))
    return triples


def filter_triples(triples, min_item_ratings=0, min_user_ratings=0):
    """Drop sparse items, then sparse users, repeating until nothing changes."""
    kept = list(triples)
    while True:
        item_counts = {}
        for _, i, _ in kept:
            item_counts[i] = item_counts.get(i, 0) + 1
        step = [t for t in kept if item_counts[t[1]] >= min_item_ratings]
        user_counts = {}
        for u, _, _ in step:
            user_counts[u] = user_counts.get(u, 0) + 1
        step = [t for t in step if user_counts[t[0]] >= min_user_ratings]
        if len(step) == len(kept):
            return step
        kept = step


def table_from_triples(triples):
    if not triples:
        raise RatingsFormatError("no ratings left after filtering")
    user_ids = sorted({t[0] for t in triples}, key=_label_key)
    item_ids = sorted({t[1] for t in triples}, key=_label_key)
    uidx = {u: k for k, u in enumerate(user_ids)}
    iidx = {i: k for k, i in enumerate(item_ids)}
    users = np.array([uidx[t[0]] for t in triples], dtype=np.int64)
    items = np.array([iidx[t[1]] for t in triples], dtype=np.int64)
    ratings = np.array([t[2] for t in triples], dtype=np.float64)
    return RatingsTable(users, items, ratings, user_ids, item_ids)


def load_ratings(path, min_item_ratings=0, min_user_ratings=0):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8", errors="replace") as fh:
        triples = parse_ratings(fh)
    return table_from_triples(filter_triples(triples, min_item_ratings, min_user_ratings))


def three_way_split(table, seed=0):
    """Partition ratings uniformly at random into (model, tuning, graph) parts."""
    perm = np.random.default_rng(seed).permutation(len(table))
    parts = np.array_split(perm, 3)
    return tuple(table.subset(np.sort(p)) for p in parts)


def _ridge_rows(n_rows, row_idx, col_idx, values, other, reg):
    rank = other.shape[1]
    out = np.zeros((n_rows, rank))
    order = np.argsort(row_idx, kind="stable")
    row_sorted = row_idx[order]
    bounds = np.searchsorted(row_sorted, np.arange(n_rows + 1))
    eye = reg * np.eye(rank)
    for r in range(n_rows):
        sel = order[bounds[r]:bounds[r + 1]]
        if len(sel) == 0:
            continue
        f = other[col_idx[sel]]
        out[r] = np.linalg.solve(f.T @ f + eye, f.T @ values[sel])
    return out


def _loss(table, U, V, reg):
    pred = np.einsum("ij,ij->i", U[table.users], V[table.items])
    resid = table.ratings - pred
    sse = float(resid @ resid)
    return sse + reg * (float(np.sum(U * U)) + float(np.sum(V * V))), math.sqrt(sse / len(resid))


def als_factorize(table, rank=10, reg=0.1, sweeps=30, seed=0):
    """Alternating ridge regressions on the observed entries.

    Minimises ``sum (r - u.v)^2 + reg (|U|^2 + |V|^2)``; each half-sweep is
    an exact block minimisation so the loss never increases. ``V`` starts
    uniform on ``[-0.5, 0.5] / sqrt(rank)``.
    """
    if not 1 <= rank <= min(table.n_users, table.n_items):
        raise ValueError(f"rank must be in [1, {min(table.n_users, table.n_items)}], got {rank}")
    if reg < 0:
        raise ValueError("reg must be >= 0")
    rng = np.random.default_rng(seed)
    V = rng.uniform(-0.5, 0.5, size=(table.n_items, rank)) / math.sqrt(rank)
    U = np.zeros((table.n_users, rank))
    losses, rmses = [], []
    for _ in range(sweeps):
        U = _ridge_rows(table.n_users, table.users, table.items, table.ratings, V, reg)
        loss, rmse = _loss(table, U, V, reg)
        losses.append(loss)
        rmses.append(rmse)
        V = _ridge_rows(table.n_items, table.items, table.users, table.ratings, U, reg)
        loss, rmse = _loss(table, U, V, reg)
        losses.append(loss)
        rmses.append(rmse)
    _, rmse = _loss(table, U, V, reg)
    return Factorization(U, V, rank, rmse, losses, rmses)


def user_reward_vector(fact, user):
    """Predicted rating of every item for one user."""
    return fact.V @ fact.U[user]


@dataclass
class PipelineResult:
    table: RatingsTable
    graph: object
    users: np.ndarray
    rewards: np.ndarray
    tuning_rewards: np.ndarray
    model_fact: Factorization
    tuning_fact: Factorization
    graph_fact: Factorization


def run_pipeline(table, rank=10, reg=0.1, sweeps=30, k=5, n_users=400, seed=0):
    """Split, factorise the three parts and build the item graph + rewards."""
    model_part, tuning_part, graph_part = three_way_split(table, seed)
    model_fact = als_factorize(model_part, rank, reg, sweeps, seed)
    tuning_fact = als_factorize(tuning_part, rank, reg, sweeps, seed + 1)
    graph_fact = als_factorize(graph_part, rank, reg, sweeps, seed + 2)
    graph = knn_graph(graph_fact.V, k)
    n_pick = min(n_users, table.n_users)
    users = np.sort(np.random.default_rng(seed).choice(table.n_users, n_pick, replace=False))
    rewards = np.stack([user_reward_vector(model_fact, u) for u in users])
    tuning = np.stack([user_reward_vector(tuning_fact, u) for u in users])
    return PipelineResult(table, graph, users, rewards, tuning, model_fact, tuning_fact,
                          graph_fact)


def rewards_to_csv(users, rewards):
    lines = ["user,item,reward"]
    for u, row in zip(np.asarray(users).tolist(), rewards):
        lines += [f"{u},{j},{float(r)!r}" for j, r in enumerate(row.tolist())]
    return "\n".join(lines) + "\n"


def factors_to_csv(factors):
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in factors)


def read_latent_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def read_rewards_csv(path, user):
    """Reward vector of ``user`` from a ``user,item,reward`` CSV."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    items, vals = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "user,item,reward":
            raise RatingsFormatError(f"unexpected header {header!r}", 1)
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise RatingsFormatError(f"expected 3 fields, got {line.strip()!r}", lineno)
            if parts[0] == str(user):
                items.append(int(parts[1]))
                vals.append(float(parts[2]))
    if not items:
        raise RatingsFormatError(f"user {user} not found in {path}")
    f = np.zeros(max(items) + 1)
    f[items] = vals
    return f
