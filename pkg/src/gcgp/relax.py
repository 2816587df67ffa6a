"""Binary-concrete relaxation of the condensed adjacency matrix.

Edge logits live in ``log_alpha`` (m x m).  Only the strict upper triangle
is used: samples are mirrored so the relaxed adjacency is symmetric with a
zero diagonal, which is what the self-looped normalization expects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ValidationError

TAU_START = 1.0
TAU_END = 0.05
_U_EPS = 1e-12


@dataclass
class RelaxedStructure:
    log_alpha: np.ndarray
    tau: float = TAU_START
    learn_structure: bool = True
    seed: Optional[int] = None
    rng: np.random.Generator = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        if self.log_alpha.ndim != 2 or self.log_alpha.shape[0] != self.log_alpha.shape[1]:
            raise ValidationError(f"log_alpha must be square, got {self.log_alpha.shape}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @property
    def m(self) -> int:
        return self.log_alpha.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.log_alpha)

    @classmethod
    def disabled(cls, m: int) -> "RelaxedStructure":
        return cls(np.zeros((m, m)), learn_structure=False)

    @classmethod
    def initial(cls, m: int, rng: np.random.Generator, mean: float, std: float = 0.5, seed=None):
        la = rng.normal(mean, std, size=(m, m))
        la = np.triu(la, 1)
        la = la + la.T
        return cls(la, tau=TAU_START, learn_structure=True, seed=seed, rng=rng)


def concrete_noise(rng: np.random.Generator, m: int, uniform=None) -> np.ndarray:
    """Symmetric logistic noise ``log U - log(1-U)`` with a zero diagonal.

    ``uniform`` forces the draws (a scalar or an m x m array) instead of
    sampling; only its upper triangle is read.
    """
    if uniform is None:
        U = rng.uniform(size=(m, m))
    else:
        U = np.broadcast_to(np.asarray(uniform, dtype=np.float64), (m, m))
    U = np.clip(U, _U_EPS, 1.0 - _U_EPS)
    L = np.log(U) - np.log1p(-U)
    L = np.triu(L, 1)
    return L + L.T


def relaxed_adjacency(log_alpha: np.ndarray, noise: np.ndarray, tau: float) -> np.ndarray:
    """Deterministic part of the reparameterization for fixed noise."""
    if tau <= 0:
        raise ValidationError(f"temperature must be positive, got {tau}")
    A = expit((np.asarray(log_alpha) + noise) / tau)
    A = np.triu(A, 1)
    return A + A.T


def sample_adjacency(rs: RelaxedStructure, uniform=None) -> np.ndarray:
    """Draw a relaxed adjacency in (0, 1) using fresh noise from ``rs.rng``."""
    if not rs.learn_structure:
        raise ValidationError("structure learning is disabled for this condensed graph")
    if rs.tau <= 0:
        raise ValidationError(f"temperature must be positive, got {rs.tau}")
    noise = concrete_noise(rs.rng, rs.m, uniform)
    return relaxed_adjacency(rs.log_alpha, noise, rs.tau)


def limit_probability(alpha):
    """Probability that an entry is 1 in the zero-temperature limit."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha <= 0):
        raise ValidationError("alpha must be positive")
    out = alpha / (1.0 + alpha)
    return float(out) if out.ndim == 0 else out


def discretize(rs_or_log_alpha) -> np.ndarray:
    """Binary adjacency: an edge wherever ``alpha / (1 + alpha) > 0.5``.

    The comparison is strict, so ``alpha == 1`` yields no edge.  Reads the
    upper triangle and mirrors it.
    """
    la = rs_or_log_alpha.log_alpha if isinstance(rs_or_log_alpha, RelaxedStructure) else rs_or_log_alpha
    la = np.asarray(la, dtype=np.float64)
    upper = np.triu(la > 0.0, 1).astype(np.float64)
    return upper + upper.T


def anneal_tau(t: int, total: int, tau_start: float = TAU_START, tau_end: float = TAU_END) -> float:
    """Geometric temperature schedule from ``tau_start`` at t=0 to ``tau_end`` at t=total."""
    if not 0 < tau_end < tau_start:
        raise ValidationError(f"need 0 < tau_end < tau_start, got {tau_end} and {tau_start}")
    if total <= 0:
        return float(tau_start)
    if not 0 <= t <= total:
        raise ValidationError(f"step {t} outside [0, {total}]")
    return float(tau_start * (tau_end / tau_start) ** (t / total))
