"""Dataset directories and condensed-graph JSON.

A dataset directory holds::

    features.csv   n rows of d comma-separated reals
    edges.csv      one "src,dst" pair per undirected edge (listed once)
    labels.csv     one integer class per line
    split.json     {"train": [...], "val": [...], "test": [...]}

Any of the CSV files may instead be gzip-compressed with a ``.csv.gz``
suffix.
"""

from __future__ import annotations

import gzip
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .condensed import CondensedGraph
from .errors import DatasetError, ValidationError
from .graph import Graph, edge_list, from_edges
from .relax import RelaxedStructure


def _find(path: Path, stem: str) -> Path:
    for suffix in (".csv", ".csv.gz"):
        p = path / f"{stem}{suffix}"
        if p.exists():
            return p
    raise DatasetError(f"missing {stem}.csv in {path}")


def _open_text(p: Path):
    return gzip.open(p, "rt") if p.suffix == ".gz" else open(p)


def _read_matrix(p: Path, dtype, ncols: Optional[int] = None) -> np.ndarray:
    rows = []
    width = ncols
    with _open_text(p) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            if len(parts) != width:
                raise DatasetError(f"{p.name}:{lineno}: expected {width} columns, got {len(parts)}")
            try:
                rows.append([dtype(v) for v in parts])
            except ValueError as exc:
                raise DatasetError(f"{p.name}:{lineno}: {exc}") from None
    if not rows:
        return np.zeros((0, width or 0), dtype=np.float64 if dtype is float else np.int64)
    return np.asarray(rows, dtype=np.float64 if dtype is float else np.int64)


def _read_features(p: Path) -> np.ndarray:
    try:
        X = np.loadtxt(p, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # loadtxt gives poor messages for ragged rows; redo it line by line.
        return _read_matrix(p, float)
    return X


def load_dataset(path, name: Optional[str] = None) -> Graph:
    path = Path(path)
    if not path.is_dir():
        raise DatasetError(f"dataset directory not found: {path}")
    X = _read_features(_find(path, "features"))
    n = X.shape[0]
    labels = _read_matrix(_find(path, "labels"), int, ncols=1).ravel()
    if labels.size != n:
        raise DatasetError(f"labels.csv has {labels.size} entries, features.csv has {n} rows")
    edges = _read_matrix(_find(path, "edges"), int, ncols=2)
    _check_edge_list(edges, n)
    split_path = path / "split.json"
    if not split_path.exists():
        raise DatasetError(f"missing split.json in {path}")
    split = json.loads(split_path.read_text())
    missing = {"train", "val", "test"} - set(split)
    if missing:
        raise DatasetError(f"split.json lacks {sorted(missing)}")
    meta_path = path / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    C = int(meta.get("num_classes", labels.max() + 1 if labels.size else 1))
    try:
        return Graph(X, from_edges(edges, n), labels, split["train"], split["val"], split["test"], C,
                     name=name or meta.get("name", path.name))
    except ValidationError as exc:
        raise DatasetError(str(exc)) from None


def _check_edge_list(edges: np.ndarray, n: int) -> None:
    if edges.size == 0:
        return
    if edges.min() < 0 or edges.max() >= n:
        raise DatasetError(f"edges.csv references nodes outside [0, {n})")
    if (edges[:, 0] == edges[:, 1]).any():
        raise DatasetError("edges.csv contains self loops")
    key = np.sort(edges, axis=1)
    uniq = np.unique(key, axis=0)
    if uniq.shape[0] != key.shape[0]:
        raise DatasetError("edges.csv lists some undirected edge more than once "
                           "(both directions or a repeat)")


def save_dataset(g: Graph, path, compress: bool = False) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ext = ".csv.gz" if compress else ".csv"

    def write(stem, arr, fmt):
        target = path / f"{stem}{ext}"
        for other in (".csv", ".csv.gz"):
            stale = path / f"{stem}{other}"
            if stale != target and stale.exists():
                stale.unlink()
        np.savetxt(target, arr, fmt=fmt, delimiter=",")

    X = g.features
    integral = np.all(X == np.round(X))
    write("features", X, "%d" if integral else "%.17g")
    write("edges", edge_list(g.adjacency), "%d")
    write("labels", g.labels[:, None], "%d")
    (path / "split.json").write_text(json.dumps(
        {"train": g.train.tolist(), "val": g.val.tolist(), "test": g.test.tolist()}))
    (path / "meta.json").write_text(json.dumps({"name": g.name, "num_classes": g.num_classes}))
    return path


def condensed_to_dict(cg: CondensedGraph, config: Optional[dict] = None) -> dict:
    doc = {
        "X_s": cg.Xs.tolist(),
        "Y_s": cg.Ys.tolist(),
        "A_s_binary": cg.binary_adjacency().astype(int).tolist(),
        "config": config or {},
        "provenance": cg.provenance,
    }
    if cg.learn_structure:
        doc["alpha"] = np.exp(cg.structure.log_alpha).tolist()
        doc["log_alpha"] = cg.structure.log_alpha.tolist()
        doc["tau"] = cg.structure.tau
    return doc


def save_condensed(path, cg: CondensedGraph, config: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(condensed_to_dict(cg, config), indent=1))
    return path


def condensed_from_dict(doc: dict) -> CondensedGraph:
    try:
        Xs = np.asarray(doc["X_s"], dtype=np.float64)
        Ys = np.asarray(doc["Y_s"], dtype=np.float64)
        A = np.asarray(doc["A_s_binary"], dtype=np.float64)
    except KeyError as exc:
        raise ValidationError(f"condensed graph JSON lacks field {exc}") from None
    m = Xs.shape[0]
    if "log_alpha" in doc or "alpha" in doc:
        la = np.asarray(doc["log_alpha"]) if "log_alpha" in doc else np.log(np.asarray(doc["alpha"]))
        rs = RelaxedStructure(la, tau=float(doc.get("tau", 1.0)), learn_structure=True)
        fixed = None
    else:
        rs = RelaxedStructure.disabled(m)
        fixed = A if A.size and A.any() else None
    return CondensedGraph(Xs, Ys, rs, dict(doc.get("provenance", {})), fixed)


def load_condensed(path) -> tuple[CondensedGraph, dict]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"condensed graph file not found: {path}")
    doc = json.loads(path.read_text())
    return condensed_from_dict(doc), doc.get("config", {})
