"""Covariance functions over k-hop propagated node features.

The main kernel is the closed-form covariance of an infinitely wide
one-hidden-layer network with error-function activation (the arcsine
kernel).  With ``s(a, b) = sigma_w2 * feature_scale * <a, b> + beta`` it is

    K(a, b) = 2/pi * asin( 2 s(a,b) / sqrt((1 + 2 s(a,a)) (1 + 2 s(b,b))) )

``beta`` plays the role of the bias variance carried by the augmented
coordinate, so it never needs to be stored as an extra feature column.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .graph import PropagationConfig, normalize_adjacency, propagate, row_normalize_rows

CLAMP = 1.0 - 1e-12
BLOCK_ROWS = 4096


@dataclass(frozen=True)
class KernelConfig:
    k: int = 2
    beta: float = 0.5
    sigma_w2: float = 1.0
    # None means 1/d, resolved against the feature dimension at use time.
    feature_scale: Optional[float] = None
    row_normalize_features: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if not self.sigma_w2 > 0:
            raise ValidationError(f"sigma_w2 must be positive, got {self.sigma_w2}")
        if self.feature_scale is not None and not self.feature_scale > 0:
            raise ValidationError(f"feature_scale must be positive, got {self.feature_scale}")
        PropagationConfig(self.k, self.row_normalize_features)

    def scale(self, d: int) -> float:
        """Combined multiplier ``sigma_w2 * feature_scale`` for inner products."""
        fs = 1.0 / d if self.feature_scale is None else self.feature_scale
        return self.sigma_w2 * fs

    def with_(self, **changes) -> "KernelConfig":
        return replace(self, **changes)


@dataclass
class KernelDiagnostics:
    clamped: int = 0


@dataclass
class GraphView:
    """Features plus an optional dense adjacency; ``None`` means no edges."""

    features: np.ndarray
    adjacency: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)


def _check_finite(*arrays):
    for a in arrays:
        if np.isnan(a).any():
            raise NumericalError("NaN in kernel input", stage="kernel")


def arcsine_from_gram(s, s_aa, s_bb, diag: Optional[KernelDiagnostics] = None) -> np.ndarray:
    """Apply the arcsine map to a precomputed (biased) Gram block."""
    z = 2.0 * s / np.sqrt(np.outer(1.0 + 2.0 * s_aa, 1.0 + 2.0 * s_bb))
    over = np.abs(z) > CLAMP
    if over.any():
        if diag is not None:
            diag.clamped += int(over.sum())
        z = np.clip(z, -CLAMP, CLAMP)
    return (2.0 / np.pi) * np.arcsin(z)


def arcsine_entry(xi, xj, cfg: KernelConfig, diag: Optional[KernelDiagnostics] = None) -> float:
    xi = np.asarray(xi, dtype=np.float64).ravel()
    xj = np.asarray(xj, dtype=np.float64).ravel()
    if xi.shape != xj.shape:
        raise ValidationError(f"feature length mismatch: {xi.size} vs {xj.size}")
    _check_finite(xi, xj)
    c = cfg.scale(xi.size)
    s = np.array([[c * xi @ xj + cfg.beta]])
    sii = np.array([c * xi @ xi + cfg.beta])
    sjj = np.array([c * xj @ xj + cfg.beta])
    return float(arcsine_from_gram(s, sii, sjj, diag)[0, 0])


def arcsine_kernel(Xa, Xb, cfg: KernelConfig, diag: Optional[KernelDiagnostics] = None) -> np.ndarray:
    """Arcsine covariance between the rows of two propagated feature matrices."""
    Xa = np.asarray(Xa, dtype=np.float64)
    Xb = np.asarray(Xb, dtype=np.float64)
    if Xa.shape[1] != Xb.shape[1]:
        raise ValidationError(f"feature dimension mismatch: {Xa.shape[1]} vs {Xb.shape[1]}")
    _check_finite(Xa, Xb)
    c = cfg.scale(Xa.shape[1])
    s_bb = c * np.einsum("ij,ij->i", Xb, Xb) + cfg.beta
    out = np.empty((Xa.shape[0], Xb.shape[0]))
    for lo in range(0, Xa.shape[0], BLOCK_ROWS):
        blk = Xa[lo:lo + BLOCK_ROWS]
        s = c * (blk @ Xb.T) + cfg.beta
        s_aa = c * np.einsum("ij,ij->i", blk, blk) + cfg.beta
        out[lo:lo + BLOCK_ROWS] = arcsine_from_gram(s, s_aa, s_bb, diag)
    return out


def dot_kernel(Xa, Xb, cfg: KernelConfig) -> np.ndarray:
    Xa = np.asarray(Xa, dtype=np.float64)
    Xb = np.asarray(Xb, dtype=np.float64)
    if Xa.shape[1] != Xb.shape[1]:
        raise ValidationError(f"feature dimension mismatch: {Xa.shape[1]} vs {Xb.shape[1]}")
    fs = 1.0 / Xa.shape[1] if cfg.feature_scale is None else cfg.feature_scale
    return fs * (Xa @ Xb.T)


KERNELS = {"arcsine": arcsine_kernel, "dot": lambda Xa, Xb, cfg, diag=None: dot_kernel(Xa, Xb, cfg)}


def propagated_features(g, cfg: KernelConfig, rows=None) -> np.ndarray:
    """``Â^k X`` for a :class:`~gcgp.graph.Graph` or a :class:`GraphView`."""
    if hasattr(g, "propagated"):
        Xh = g.propagated(cfg.k, cfg.row_normalize_features)
    else:
        key = (cfg.k, cfg.row_normalize_features)
        if key not in g._cache:
            X = np.asarray(g.features, dtype=np.float64)
            if cfg.row_normalize_features:
                X = row_normalize_rows(X)
            if g.adjacency is None or cfg.k == 0:
                Xh = X
            else:
                Xh = propagate(normalize_adjacency(np.asarray(g.adjacency, dtype=np.float64)), X, cfg.k)
            g._cache[key] = Xh
        Xh = g._cache[key]
    return Xh if rows is None else Xh[rows]


def cross_covariance(g, gs, cfg: KernelConfig, rows=None, kernel: str = "arcsine",
                     diag: Optional[KernelDiagnostics] = None) -> np.ndarray:
    """K(G, G^S): each graph is propagated with its own adjacency first."""
    if g.features.shape[1] != gs.features.shape[1]:
        raise ValidationError(
            f"feature dimension mismatch: {g.features.shape[1]} vs {gs.features.shape[1]}")
    return KERNELS[kernel](propagated_features(g, cfg, rows), propagated_features(gs, cfg), cfg, diag)


def self_covariance(gs, cfg: KernelConfig, kernel: str = "arcsine",
                    diag: Optional[KernelDiagnostics] = None) -> np.ndarray:
    Xh = propagated_features(gs, cfg)
    K = KERNELS[kernel](Xh, Xh, cfg, diag)
    # Exact symmetry; the blocked products can differ in the last bit.
    return 0.5 * (K + K.T)


def dot_product_kernel(g, gs, cfg: KernelConfig, rows=None) -> np.ndarray:
    return cross_covariance(g, gs, cfg, rows=rows, kernel="dot")
