"""Gaussian-process posterior conditioned on the condensed observations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, lapack, solve_triangular

from .errors import NumericalError, SingularKernelError, ValidationError

log = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_GROWTH = 10.0
JITTER_RETRIES = 3


@dataclass
class PosteriorSolve:
    """Cholesky factor of ``K_ss + beta I`` and the weights ``(K_ss + beta I)^-1 Y_s``."""

    chol: np.ndarray
    weights: np.ndarray
    jitter_used: float = 0.0

    def solve(self, B):
        return cho_solve((self.chol, True), B, check_finite=False)


def _offending_indices(M, count=3):
    # Pivoted Cholesky puts the weakest directions last.
    _, piv, rank, _ = lapack.dpstrf(np.array(M, dtype=np.float64, order="F"), lower=1)
    piv = piv - 1
    tail = piv[rank:] if rank < len(piv) else piv[-1:]
    return tail[:count]


def factorize(K_ss, beta: float):
    """Lower Cholesky factor of ``K_ss + beta I`` with jitter escalation.

    Returns ``(L, jitter)``.  Raises :class:`SingularKernelError` when the
    matrix still fails after ``JITTER_RETRIES`` escalations.
    """
    K_ss = np.asarray(K_ss, dtype=np.float64)
    if K_ss.ndim != 2 or K_ss.shape[0] != K_ss.shape[1]:
        raise ValidationError(f"K_ss must be square, got {K_ss.shape}")
    if not np.all(np.isfinite(K_ss)):
        raise NumericalError("non-finite entries in K_ss", stage="cholesky")
    m = K_ss.shape[0]
    M = K_ss + beta * np.eye(m)
    jitter = 0.0
    for attempt in range(JITTER_RETRIES + 1):
        try:
            L = cholesky(M + jitter * np.eye(m), lower=True, check_finite=False)
            if attempt:
                log.warning("Cholesky needed jitter %.1e", jitter)
            return L, jitter
        except LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * JITTER_GROWTH
    idx = _offending_indices(M)
    raise SingularKernelError(
        f"K_ss + beta*I is not positive definite after jitter up to {jitter / JITTER_GROWTH:.0e}; "
        f"weakest condensed nodes: {idx.tolist()}", indices=idx)


def posterior_solve(K_ss, Y_s, beta: float) -> PosteriorSolve:
    L, jitter = factorize(K_ss, beta)
    W = cho_solve((L, True), np.asarray(Y_s, dtype=np.float64), check_finite=False)
    return PosteriorSolve(L, W, jitter)


def posterior_mean(K_cross, K_ss, Y_s, beta: float, return_solve: bool = False):
    """``K_cross (K_ss + beta I)^-1 Y_s`` via a Cholesky solve."""
    K_cross = np.asarray(K_cross, dtype=np.float64)
    Y_s = np.asarray(Y_s, dtype=np.float64)
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if K_cross.shape[1] != np.shape(K_ss)[0] or Y_s.shape[0] != np.shape(K_ss)[0]:
        raise ValidationError(
            f"shape mismatch: K_cross {K_cross.shape}, K_ss {np.shape(K_ss)}, Y_s {Y_s.shape}")
    ps = posterior_solve(K_ss, Y_s, beta)
    f = K_cross @ ps.weights
    return (f, ps) if return_solve else f


def posterior_cov(K_tt, K_cross, K_ss, beta: float) -> np.ndarray:
    """``K_tt - K_cross (K_ss + beta I)^-1 K_cross^T``; diagnostic use only."""
    K_tt = np.asarray(K_tt, dtype=np.float64)
    K_cross = np.asarray(K_cross, dtype=np.float64)
    if K_cross.shape[1] == 0:
        return K_tt.copy()
    L, _ = factorize(K_ss, beta)
    V = solve_triangular(L, K_cross.T, lower=True, check_finite=False)
    return K_tt - V.T @ V


def condensation_loss(f_bar, Y_onehot) -> float:
    """Squared Frobenius distance between predictions and one-hot targets."""
    f_bar = np.asarray(f_bar, dtype=np.float64)
    Y_onehot = np.asarray(Y_onehot, dtype=np.float64)
    if f_bar.shape != Y_onehot.shape:
        raise ValidationError(f"shape mismatch: {f_bar.shape} vs {Y_onehot.shape}")
    r = f_bar - Y_onehot
    return float(np.sum(r * r))


def predict_labels(f_bar) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(f_bar), axis=1)
