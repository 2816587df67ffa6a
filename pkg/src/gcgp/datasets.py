"""Converters from the common public citation-graph formats to a dataset directory.

Two source layouts are understood:

* Planetoid pickles (``ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}``),
  which carry the standard 20-per-class train / 500 val / 1000 test split.
* LINQS raw files (``<name>.content`` and ``<name>.cites``).  These have no
  split, so one is drawn: ``per_class`` training nodes per class, then
  ``num_val`` validation and ``num_test`` test nodes, from a seeded
  permutation.

Nothing is downloaded; point the converter at files you already have.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DatasetError
from .graph import Graph, from_edges


def _load_pickle(p: Path):
    with open(p, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def from_planetoid(raw_dir, name: str) -> Graph:
    raw_dir = Path(raw_dir)
    parts = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        p = raw_dir / f"ind.{name}.{key}"
        if not p.exists():
            raise DatasetError(f"missing Planetoid file {p}")
        parts[key] = _load_pickle(p)
    test_idx = np.loadtxt(raw_dir / f"ind.{name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_idx)
    tx, ty = sp.lil_matrix(parts["tx"]), np.asarray(parts["ty"])
    if name == "citeseer":
        # Some test nodes are isolated and absent from tx; pad them with zeros.
        span = test_sorted[-1] - test_sorted[0] + 1
        tx_full = sp.lil_matrix((span, tx.shape[1]))
        tx_full[test_sorted - test_sorted[0], :] = tx
        ty_full = np.zeros((span, ty.shape[1]))
        ty_full[test_sorted - test_sorted[0], :] = ty
        tx, ty = tx_full, ty_full
    feats = sp.vstack((sp.lil_matrix(parts["allx"]), tx)).tolil()
    feats[test_idx, :] = feats[test_sorted, :]
    onehot = np.vstack((np.asarray(parts["ally"]), ty))
    onehot[test_idx, :] = onehot[test_sorted, :]
    X = np.asarray(feats.todense(), dtype=np.float64)
    n = X.shape[0]
    edges = [(i, j) for i, nbrs in parts["graph"].items() for j in nbrs if i != j and i < n and j < n]
    edges = np.unique(np.sort(np.asarray(edges, dtype=np.int64), axis=1), axis=0)
    labels = onehot.argmax(axis=1)
    n_train = np.asarray(parts["y"]).shape[0]
    train = np.arange(n_train)
    val = np.arange(n_train, n_train + 500)
    return Graph(X, from_edges(edges, n), labels, train, val, test_sorted,
                 onehot.shape[1], name=name)


def from_linqs(content_path, cites_path, name: str = "cora", per_class: int = 20,
               num_val: int = 500, num_test: int = 1000, seed: int = 0) -> Graph:
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids, rows, classes = [], [], []
    class_index: dict = {}
    with open(content_path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            classes.append(class_index.setdefault(parts[-1], len(class_index)))
    # Class ids follow sorted class names so the mapping is file-order independent.
    names = sorted(class_index)
    remap = np.array([names.index(k) for k in sorted(class_index, key=class_index.get)])
    labels = remap[np.asarray(classes)]
    X = np.asarray(rows, dtype=np.float64)
    node = {pid: i for i, pid in enumerate(ids)}
    edges = []
    with open(cites_path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2 or parts[0] not in node or parts[1] not in node:
                continue
            i, j = node[parts[0]], node[parts[1]]
            if i != j:
                edges.append((min(i, j), max(i, j)))
    edges = np.unique(np.asarray(edges, dtype=np.int64), axis=0)
    n, C = X.shape[0], len(names)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train = np.concatenate([perm[labels[perm] == c][:per_class] for c in range(C)])
    rest = np.setdiff1d(perm, train, assume_unique=True)
    rest = perm[np.isin(perm, rest)]
    val, test = rest[:num_val], rest[num_val:num_val + num_test]
    return Graph(X, from_edges(edges, n), labels, np.sort(train), np.sort(val), np.sort(test), C, name=name)
