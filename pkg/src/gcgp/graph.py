"""Graph container, adjacency normalization and k-hop feature propagation.

The original graph keeps a sparse (CSR) adjacency; the condensed graph is
small and always dense.  ``normalize_adjacency`` and ``propagate`` accept
either representation and return the same kind they were given.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

MAX_HOPS = 16


@dataclass(frozen=True)
class PropagationConfig:
    k: int = 2
    row_normalize_features: bool = False

    def __post_init__(self):
        if not 0 <= int(self.k) <= MAX_HOPS:
            raise ValidationError(f"hop count k must lie in [0, {MAX_HOPS}], got {self.k}")


@dataclass(frozen=True)
class Graph:
    """An undirected node-classification graph.

    ``adjacency`` is binary and symmetric with an empty diagonal; self loops
    are added during normalization, never stored.
    """

    features: np.ndarray
    adjacency: sp.csr_matrix
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    num_classes: int
    name: str = "graph"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", X)
        A = self.adjacency
        A = sp.csr_matrix(A, dtype=np.float64) if not sp.issparse(A) else A.tocsr().astype(np.float64)
        object.__setattr__(self, "adjacency", A)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        validate_graph(self)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return int(sp.triu(self.adjacency, k=1).nnz)

    def normalized_adjacency(self):
        if "a_hat" not in self._cache:
            self._cache["a_hat"] = normalize_adjacency(self.adjacency)
        return self._cache["a_hat"]

    def propagated(self, k: int, row_normalize: bool = False) -> np.ndarray:
        """``Â^k X`` for the full graph, memoized per (k, row_normalize)."""
        key = ("xhat", int(k), bool(row_normalize))
        if key not in self._cache:
            X = row_normalize_rows(self.features) if row_normalize else self.features
            self._cache[key] = propagate(self.normalized_adjacency(), X, k)
        return self._cache[key]

    def input_features(self, row_normalize: bool = False) -> np.ndarray:
        return row_normalize_rows(self.features) if row_normalize else self.features

    def onehot(self, rows=None) -> np.ndarray:
        y = self.labels if rows is None else self.labels[rows]
        return np.eye(self.num_classes)[y]

    def split(self, name: str) -> np.ndarray:
        if name == "all-labeled":
            return np.concatenate([self.train, self.val])
        if name not in ("train", "val", "test"):
            raise ValidationError(f"unknown split {name!r}")
        return getattr(self, name)


def validate_graph(g: Graph) -> None:
    n, d = g.features.shape if g.features.ndim == 2 else (None, None)
    if n is None:
        raise ValidationError("features must be a 2-d matrix")
    if not np.all(np.isfinite(g.features)):
        raise ValidationError("features contain non-finite values")
    A = g.adjacency
    if A.shape != (n, n):
        raise ValidationError(f"adjacency shape {A.shape} does not match {n} nodes")
    _check_adjacency(A)
    if A.diagonal().any():
        raise ValidationError("adjacency must have an empty diagonal; self loops are added by normalization")
    if g.labels.shape != (n,):
        raise ValidationError(f"expected {n} labels, got {g.labels.shape[0]}")
    if g.num_classes < 1 or g.labels.min(initial=0) < 0 or g.labels.max(initial=0) >= g.num_classes:
        raise ValidationError(f"labels must lie in [0, {g.num_classes})")
    seen = set()
    for name in ("train", "val", "test"):
        idx = getattr(g, name)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValidationError(f"{name} split has indices outside [0, {n})")
        s = set(idx.tolist())
        if len(s) != idx.size:
            raise ValidationError(f"{name} split contains duplicates")
        if seen & s:
            raise ValidationError(f"{name} split overlaps another split")
        seen |= s


def _check_adjacency(A) -> None:
    if sp.issparse(A):
        A = A.tocsr()
        if A.nnz and A.data.min() < 0:
            raise ValidationError("adjacency has negative entries")
        if abs(A - A.T).sum() > 1e-12 * max(1.0, abs(A).sum()):
            raise ValidationError("adjacency is not symmetric")
    else:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"adjacency must be square, got shape {A.shape}")
        if (A < 0).any():
            raise ValidationError("adjacency has negative entries")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
            raise ValidationError("adjacency is not symmetric")


def normalize_adjacency(A):
    """Return ``D^-1/2 (A + I) D^-1/2`` with ``D`` the degrees of ``A + I``.

    Sparse input gives CSR output; dense input gives a dense array.  The
    self loop guarantees every degree is at least 1.
    """
    _check_adjacency(A)
    if sp.issparse(A):
        n = A.shape[0]
        At = (A.tocsr().astype(np.float64) + sp.identity(n, format="csr"))
        deg = np.asarray(At.sum(axis=1)).ravel()
        dinv = sp.diags(1.0 / np.sqrt(deg))
        return (dinv @ At @ dinv).tocsr()
    A = np.asarray(A, dtype=np.float64)
    At = A + np.eye(A.shape[0])
    dinv = 1.0 / np.sqrt(At.sum(axis=1))
    return dinv[:, None] * At * dinv[None, :]


def propagate(A_hat, X, k: int) -> np.ndarray:
    """``Â^k X`` by k successive products; ``Â^k`` is never formed."""
    X = np.asarray(X, dtype=np.float64)
    if k < 0:
        raise ValidationError(f"hop count must be non-negative, got {k}")
    if A_hat.shape[1] != X.shape[0]:
        raise ValidationError(f"cannot propagate {X.shape[0]} feature rows over a {A_hat.shape} adjacency")
    out = X
    for _ in range(int(k)):
        out = A_hat @ out
    return np.asarray(out)


def row_normalize_rows(X: np.ndarray) -> np.ndarray:
    """Scale each row to unit L1 norm; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    s = np.abs(X).sum(axis=1, keepdims=True)
    return np.divide(X, s, out=np.zeros_like(X), where=s > 0)


def induced_subgraph(A, nodes: np.ndarray) -> np.ndarray:
    sub = A[nodes][:, nodes]
    sub = sub.toarray() if sp.issparse(sub) else np.asarray(sub)
    sub = (sub > 0).astype(np.float64)
    np.fill_diagonal(sub, 0.0)
    return sub


def from_edges(edges: np.ndarray, n: int) -> sp.csr_matrix:
    """Symmetric binary CSR adjacency from an ``(E, 2)`` undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValidationError(f"edge endpoints must lie in [0, {n})")
    keep = edges[:, 0] != edges[:, 1]
    e = edges[keep]
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    A = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    A.data[:] = 1.0
    return A


def edge_list(A) -> np.ndarray:
    """Upper-triangle edges of a symmetric adjacency, one row per undirected edge."""
    upper = sp.triu(sp.csr_matrix(A), k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    return np.stack([upper.row[order], upper.col[order]], axis=1).astype(np.int64)


def make_graph(X, edges, labels, train, val, test, num_classes: Optional[int] = None, name="graph") -> Graph:
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    C = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    return Graph(X, from_edges(edges, X.shape[0]), labels, train, val, test, C, name=name)
