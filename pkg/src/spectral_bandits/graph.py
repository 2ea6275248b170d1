"""Weighted undirected graphs, generators, kNN construction and Laplacian spectra."""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.cluster.hierarchy import DisjointSet

from spectral_bandits._io import atomic_write_text


class GraphError(ValueError):
    """Invalid graph data or generator parameters."""


class GraphFormatError(GraphError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SpectralError(RuntimeError):
    """Eigen-solver failure."""


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph over ``n_nodes`` arms.

    Edges are held in canonical form: ``u < v``, sorted lexicographically, one
    entry per unordered pair, strictly positive weights. The arrays are
    read-only so instances can be shared between concurrent runs.
    """

    n_nodes: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64).ravel()
        v = np.asarray(self.v, dtype=np.int64).ravel()
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if not (len(u) == len(v) == len(w)):
            raise GraphError("edge arrays have different lengths")
        if self.n_nodes < 0:
            raise GraphError("n_nodes must be non-negative")
        if len(u):
            if np.any(u == v):
                i = int(np.flatnonzero(u == v)[0])
                raise GraphError(f"self-loop at node {int(u[i])}")
            if min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= self.n_nodes:
                raise GraphError(f"node index out of range for n_nodes={self.n_nodes}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise GraphError("edge weights must be finite and strictly positive")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                i = int(np.flatnonzero(dup)[0])
                raise GraphError(f"duplicate edge ({int(lo[i])}, {int(hi[i])})")
        for name, arr in (("u", lo), ("v", hi), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, n_nodes, edges):
        """Build from an iterable of ``(u, v)`` or ``(u, v, w)`` tuples."""
        edges = list(edges)
        if not edges:
            return cls(n_nodes, [], [], [])
        u, v, w = [], [], []
        for e in edges:
            u.append(e[0])
            v.append(e[1])
            w.append(e[2] if len(e) > 2 else 1.0)
        return cls(n_nodes, u, v, w)

    @property
    def n_edges(self):
        return len(self.u)

    def edges(self):
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    def degrees(self):
        deg = np.zeros(self.n_nodes)
        np.add.at(deg, self.u, self.w)
        np.add.at(deg, self.v, self.w)
        return deg

    def adjacency(self):
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self.u, self.v] = self.w
        a[self.v, self.u] = self.w
        return a

    def n_components(self):
        """Connected-component count via union-find."""
        ds = DisjointSet(range(self.n_nodes))
        for a, b in zip(self.u.tolist(), self.v.tolist()):
            ds.merge(a, b)
        return ds.n_subsets

    def content_hash(self):
        h = hashlib.sha256(graph_to_text(self).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SpectralBasis:
    """Laplacian eigenpairs (ascending), possibly truncated to the first L.

    Row ``a`` of ``eigenvectors`` is the feature vector of arm ``a``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    reg_lambda: float
    n_components: int
    n_nodes: int = field(default=-1)

    def __post_init__(self):
        if not self.reg_lambda > 0:
            raise ValueError("reg_lambda must be positive")
        vals = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        vecs = np.ascontiguousarray(self.eigenvectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[1] != len(vals):
            raise ValueError("eigenvectors must be N x L with L = len(eigenvalues)")
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)
        if self.n_nodes < 0:
            object.__setattr__(self, "n_nodes", vecs.shape[0])

    @property
    def reg_eigenvalues(self):
        return self.eigenvalues + self.reg_lambda

    @property
    def dim(self):
        return len(self.eigenvalues)

    @property
    def truncated(self):
        return self.dim < self.n_nodes

    @property
    def features(self):
        return self.eigenvectors

    def with_lambda(self, reg_lambda):
        return SpectralBasis(self.eigenvalues, self.eigenvectors, reg_lambda,
                             self.n_components, self.n_nodes)

    def truncate(self, n_keep):
        if not 0 < n_keep <= self.dim:
            raise ValueError(f"truncation size must be in [1, {self.dim}], got {n_keep}")
        return SpectralBasis(self.eigenvalues[:n_keep], self.eigenvectors[:, :n_keep],
                             self.reg_lambda, self.n_components, self.n_nodes)


def build_laplacian(g):
    """Combinatorial Laplacian ``D - W`` as a dense symmetric matrix."""
    lap = -g.adjacency()
    lap[np.diag_indices(g.n_nodes)] = g.degrees()
    return lap


def _components_from_laplacian(lap):
    n = lap.shape[0]
    ds = DisjointSet(range(n))
    rows, cols = np.nonzero(np.triu(lap, 1))
    for a, b in zip(rows.tolist(), cols.tolist()):
        ds.merge(a, b)
    return ds.n_subsets


def eigendecompose(laplacian, reg_lambda, truncate_to=None, n_components=None):
    """Dense symmetric eigendecomposition of a Laplacian.

    Columns are sign-normalised so the largest-magnitude entry (first one on
    ties) is positive. With ``truncate_to`` the L smallest eigenpairs are kept.
    """
    lap = np.asarray(laplacian, dtype=np.float64)
    n = lap.shape[0]
    if lap.ndim != 2 or lap.shape[1] != n:
        raise ValueError("laplacian must be square")
    if truncate_to is not None and not 0 < truncate_to <= n:
        raise ValueError(f"truncate_to must be in [1, {n}], got {truncate_to}")
    try:
        vals, vecs = scipy.linalg.eigh(lap, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SpectralError(f"eigendecomposition of {n}x{n} Laplacian failed: {exc}") from exc
    # clamp round-off below zero; the Laplacian is PSD
    scale = max(1.0, float(vals[-1])) if n else 1.0
    vals = np.where(np.abs(vals) <= 1e-10 * scale, 0.0, vals)
    vals = np.maximum(vals, 0.0)
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    if truncate_to is not None:
        vals, vecs = vals[:truncate_to], vecs[:, :truncate_to]
    if n_components is None:
        n_components = _components_from_laplacian(lap)
    return SpectralBasis(vals, vecs, float(reg_lambda), int(n_components), n)


def spectral_basis(g, reg_lambda, truncate_to=None):
    return eigendecompose(build_laplacian(g), reg_lambda, truncate_to, g.n_components())


# -- generators --------------------------------------------------------------

def _er(n, p, rng):
    if not 0 < p <= 1:
        raise GraphError(f"ER edge probability must be in (0, 1], got {p}")
    iu, iv = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return iu[keep], iv[keep]


def _ba(n, m, k0, rng):
    if not 1 <= m <= k0:
        raise GraphError(f"BA requires 1 <= m <= k0, got m={m}, k0={k0}")
    if k0 > n:
        raise GraphError(f"BA initial core k0={k0} exceeds n_nodes={n}")
    deg = np.zeros(n)
    # +1 only on the initially isolated core so zero-degree targets are reachable
    bias = np.zeros(n)
    bias[:k0] = 1.0
    us, vs = [], []
    for new in range(k0, n):
        weight = deg[:new] + bias[:new]
        targets = rng.choice(new, size=m, replace=False, p=weight / weight.sum())
        for t in sorted(int(t) for t in targets):
            us.append(t)
            vs.append(new)
            deg[t] += 1
            deg[new] += 1
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def lattice_shape(n):
    cols = math.isqrt(n - 1) + 1 if n > 1 else 1
    rows = -(-n // cols)
    return rows, cols


def _lattice(n):
    rows, cols = lattice_shape(n)
    us, vs = [], []
    for i in range(n):
        r, c = divmod(i, cols)
        if c + 1 < cols and i + 1 < n:
            us.append(i)
            vs.append(i + 1)
        if i + cols < n:
            us.append(i)
            vs.append(i + cols)
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def _blocks(n, n_blocks, block_size):
    if n_blocks < 1 or block_size < 1 or n_blocks * block_size != n:
        raise GraphError(
            f"blocks model needs n_nodes = K*M, got n={n}, K={n_blocks}, M={block_size}")
    us, vs = [], []
    for b in range(n_blocks):
        base = b * block_size
        for i in range(block_size):
            for j in range(i + 1, block_size):
                us.append(base + i)
                vs.append(base + j)
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def generate(model, n_nodes, seed=0, *, p=None, m=2, k0=3, n_blocks=None, block_size=None):
    """Generate a unit-weight graph.

    model : "er" (needs ``p``), "ba" (``m``, ``k0``), "lattice" or "blocks"
        (``n_blocks``, ``block_size``). Same seed gives the same edge list.
    """
    if n_nodes < 2:
        raise GraphError("n_nodes must be at least 2")
    rng = np.random.default_rng(seed)
    if model == "er":
        if p is None:
            raise GraphError("ER model requires p")
        u, v = _er(n_nodes, p, rng)
    elif model == "ba":
        u, v = _ba(n_nodes, m, k0, rng)
    elif model == "lattice":
        u, v = _lattice(n_nodes)
    elif model == "blocks":
        if n_blocks is None and block_size is None:
            raise GraphError("blocks model requires n_blocks or block_size")
        if n_blocks is None:
            n_blocks = n_nodes // block_size
        if block_size is None:
            block_size = n_nodes // n_blocks
        u, v = _blocks(n_nodes, n_blocks, block_size)
    else:
        raise GraphError(f"unknown graph model {model!r}")
    return WeightedGraph(n_nodes, u, v, np.ones(len(u)))


def knn_graph(latent, k):
    """Symmetrised k-nearest-neighbour graph over the rows of ``latent``.

    Euclidean distance, self excluded, distance ties broken by lower index,
    union symmetrisation, unit weights.
    """
    x = np.asarray(latent, dtype=np.float64)
    n = x.shape[0]
    if not 0 < k < n:
        raise GraphError(f"k must satisfy 0 < k < {n}, got {k}")
    sq = np.einsum("ij,ij->i", x, x)
    dist = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(dist, 0.0, out=dist)
    idx = np.arange(n)
    pairs = set()
    for i in range(n):
        d = dist[i].copy()
        d[i] = np.inf
        order = np.lexsort((idx, d))[:k]
        for j in order.tolist():
            pairs.add((min(i, j), max(i, j)))
    return WeightedGraph.from_edges(n, sorted(pairs))


# -- file format --------------------------------------------------------------

def graph_to_text(g):
    lines = [str(g.n_nodes)]
    lines += [f"{a} {b} {c!r}" for a, b, c in g.edges()]
    return "\n".join(lines) + "\n"


def save_graph(g, path):
    atomic_write_text(path, graph_to_text(g))


def parse_graph(text):
    n_nodes = None
    edges = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if n_nodes is None:
            if len(parts) != 1:
                raise GraphFormatError("first line must be the node count", lineno)
            try:
                n_nodes = int(parts[0])
            except ValueError:
                raise GraphFormatError(f"bad node count {parts[0]!r}", lineno) from None
            if n_nodes < 0:
                raise GraphFormatError("node count must be non-negative", lineno)
            continue
        if len(parts) != 3:
            raise GraphFormatError(f"expected 'u v w', got {line!r}", lineno)
        try:
            a, b, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise GraphFormatError(f"cannot parse {line!r}", lineno) from None
        if a == b:
            raise GraphFormatError(f"self-loop at node {a}", lineno)
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            raise GraphFormatError(f"node index out of range [0, {n_nodes})", lineno)
        if not (math.isfinite(w) and w > 0):
            raise GraphFormatError(f"weight must be positive, got {w}", lineno)
        key = (min(a, b), max(a, b))
        if key in seen:
            raise GraphFormatError(f"duplicate edge {key}", lineno)
        seen.add(key)
        edges.append((a, b, w))
    if n_nodes is None:
        raise GraphFormatError("empty graph file")
    return WeightedGraph.from_edges(n_nodes, edges)


def load_graph(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="ascii") as fh:
        return parse_graph(fh.read())
