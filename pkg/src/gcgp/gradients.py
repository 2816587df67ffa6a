"""Exact gradients of the condensation loss and a finite-difference checker.

The forward pass, for fixed concrete noise ``L`` and temperature ``tau``:

    A_s   = mirror(sigmoid((log_alpha + L) / tau))      (structure learned)
    Xh_s  = (D^-1/2 (A_s + I) D^-1/2)^k X_s               (else Xh_s = X_s)
    K_ts  = kernel(Xh_t, Xh_s),  K_ss = kernel(Xh_s, Xh_s)
    f     = K_ts (K_ss + beta I)^-1 Y_s
    loss  = ||f - Y_t||_F^2

is recorded on a :class:`~gcgp.autodiff.Tape` and differentiated in one
reverse sweep.  Target features ``Xh_t`` are constants (the original graph
is never learned), so they are propagated once up front.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import autodiff as ad
from .condensed import CondensedGraph
from .errors import NumericalError, ValidationError
from .gp import condensation_loss, posterior_mean
from .graph import Graph, normalize_adjacency, propagate
from .kernels import CLAMP, KERNELS, KernelConfig, KernelDiagnostics
from .relax import RelaxedStructure, concrete_noise, relaxed_adjacency


@dataclass
class Targets:
    """Supervised rows of the original graph: propagated features and one-hot labels."""

    features: np.ndarray
    onehot: np.ndarray
    rows: Optional[np.ndarray] = None

    @classmethod
    def from_graph(cls, g: Graph, cfg: KernelConfig, rows) -> "Targets":
        rows = np.asarray(rows, dtype=np.int64)
        return cls(g.propagated(cfg.k, cfg.row_normalize_features)[rows], g.onehot(rows), rows)

    def subset(self, idx) -> "Targets":
        rows = None if self.rows is None else self.rows[idx]
        return Targets(self.features[idx], self.onehot[idx], rows)


@dataclass
class GradientBundle:
    loss: float
    grad_Xs: np.ndarray
    grad_Ys: np.ndarray
    grad_logalpha: np.ndarray
    predictions: np.ndarray = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        return {"Xs": self.grad_Xs, "Ys": self.grad_Ys, "log_alpha": self.grad_logalpha}


# kernel(tape, Xt: const Var, Xs: Var, cfg, clamp_counter) -> (K_ts, K_ss)
TapeKernel = Callable[..., tuple]


def _arcsine_tape(Xt, Xs, cfg: KernelConfig, counter):
    c = cfg.scale(Xt.shape[1])
    tape = Xs.tape
    s_tt = c * np.einsum("ij,ij->i", Xt.value, Xt.value)[:, None] + cfg.beta
    rt = tape.const((1.0 + 2.0 * s_tt) ** -0.5)
    s_ss = (Xs * Xs).sum(axis=1, keepdims=True) * c + cfg.beta
    rs = (s_ss * 2.0 + 1.0) ** -0.5
    s_ts = (Xt @ Xs.T) * c + cfg.beta
    K_ts = ad.asin_clamped((s_ts * 2.0) * rt * rs.T, CLAMP, counter) * (2.0 / np.pi)
    s_sm = (Xs @ Xs.T) * c + cfg.beta
    K_ss = ad.asin_clamped((s_sm * 2.0) * rs * rs.T, CLAMP, counter) * (2.0 / np.pi)
    return K_ts, K_ss


def _dot_tape(Xt, Xs, cfg: KernelConfig, counter):
    fs = 1.0 / Xt.shape[1] if cfg.feature_scale is None else cfg.feature_scale
    return (Xt @ Xs.T) * fs, (Xs @ Xs.T) * fs


TAPE_KERNELS = {"arcsine": _arcsine_tape, "dot": _dot_tape}


def _finite(x: ad.Var, stage: str):
    if not np.all(np.isfinite(x.value)):
        raise NumericalError(f"non-finite values at stage '{stage}'", stage=stage)
    return x


def _structure_tape(tape, la, noise, tau, k, Xs):
    A = ad.triu_mirror(ad.sigmoid((la + noise) * (1.0 / tau)))
    At = A + np.eye(A.shape[0])
    dinv = At.sum(axis=1, keepdims=True) ** -0.5
    A_hat = _finite(dinv * At * dinv.T, "normalization")
    out = Xs
    for _ in range(k):
        out = A_hat @ out
    return _finite(out, "propagation")


def forward_backward(targets: Targets, cg: CondensedGraph, cfg: KernelConfig,
                     noise: Optional[np.ndarray] = None, tau: Optional[float] = None,
                     kernel: Union[str, TapeKernel] = "arcsine") -> GradientBundle:
    """Loss and gradients w.r.t. ``Xs``, ``Ys`` and ``log_alpha`` for fixed noise."""
    learn = cg.learn_structure
    if learn and noise is None:
        raise ValidationError("structure learning needs fixed concrete noise for the pass")
    tau = cg.structure.tau if tau is None else tau
    kfn = TAPE_KERNELS[kernel] if isinstance(kernel, str) else kernel

    tape = ad.Tape()
    Xs = tape.var(cg.Xs, "Xs")
    Ys = tape.var(cg.Ys, "Ys")
    la = tape.var(cg.structure.log_alpha, "log_alpha") if learn else None
    Xh = _structure_tape(tape, la, noise, tau, cfg.k, Xs) if learn else Xs

    counter: list = []
    K_ts, K_ss = kfn(tape.const(targets.features), Xh, cfg, counter)
    _finite(K_ts, "kernel")
    _finite(K_ss, "kernel")
    W, _, jitter = ad.spd_solve(K_ss + cfg.beta * np.eye(cg.m), Ys)
    f = _finite(K_ts @ W, "posterior")
    r = f - targets.onehot
    loss = (r * r).sum()
    tape.backward(loss)

    def grad(v, shape):
        return np.zeros(shape) if v is None or v.grad is None else v.grad

    bundle = GradientBundle(
        loss=float(loss.value),
        grad_Xs=grad(Xs, cg.Xs.shape),
        grad_Ys=grad(Ys, cg.Ys.shape),
        grad_logalpha=grad(la, cg.structure.log_alpha.shape),
        predictions=f.value,
        diagnostics={"clamped": int(sum(counter)), "jitter": float(jitter)},
    )
    for name, g in bundle.as_dict().items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}", stage="backward")
    return bundle


def loss_value(targets: Targets, cg: CondensedGraph, cfg: KernelConfig,
               noise: Optional[np.ndarray] = None, tau: Optional[float] = None,
               kernel: str = "arcsine") -> float:
    """The same loss through the plain (untaped) numpy path."""
    tau = cg.structure.tau if tau is None else tau
    Xs = cg.Xs
    if cg.learn_structure:
        A = relaxed_adjacency(cg.structure.log_alpha, noise, tau)
        Xs = propagate(normalize_adjacency(A), Xs, cfg.k)
    kfn = KERNELS[kernel]
    diag = KernelDiagnostics()
    K_ts = kfn(targets.features, Xs, cfg, diag)
    K_ss = kfn(Xs, Xs, cfg, diag)
    f = posterior_mean(K_ts, K_ss, cg.Ys, cfg.beta)
    return condensation_loss(f, targets.onehot)


@dataclass
class FDReport:
    h: float
    tol: float
    abs_floor: float
    entries: list  # (group, index, analytic, numeric, rel_err, ok)
    max_rel_err: float
    passed: bool

    def summary(self) -> str:
        worst = max(self.entries, key=lambda e: (not e[5], e[4]), default=None)
        where = f" at {worst[0]}{list(worst[1])}" if worst else ""
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: {len(self.entries)} coordinates, max relative error "
                f"{self.max_rel_err:.3e}{where} (tol {self.tol:g}, h {self.h:g})")


def _compare(a: float, b: float, tol: float, floor: float):
    """``(rel_err, ok)``: ok when the relative error is below ``tol`` or the
    absolute difference is below ``floor``."""
    diff = abs(a - b)
    scale = max(abs(a), abs(b))
    rel = diff / scale if scale > 0 else 0.0
    return rel, (rel < tol or diff < floor)


def finite_difference_check(targets: Targets, cg: CondensedGraph, cfg: KernelConfig,
                            h: float = 1e-5, sample=None, noise=None, tau=None,
                            tol: float = 1e-4, abs_floor: float = 1e-7,
                            bundle: Optional[GradientBundle] = None, seed: int = 0,
                            kernel: str = "arcsine") -> FDReport:
    """Compare analytic gradients with central differences of :func:`loss_value`.

    ``sample`` is ``None`` (every coordinate), an int (that many random
    coordinates per parameter group) or an explicit list of
    ``(group, index)`` pairs.  ``bundle`` overrides the analytic gradients,
    which is how the negative-control test injects a corrupted one.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValidationError(f"step h={h} outside [1e-7, 1e-3]")
    if bundle is None:
        bundle = forward_backward(targets, cg, cfg, noise, tau, kernel)
    grads = bundle.as_dict()
    groups = ["Xs", "Ys"] + (["log_alpha"] if cg.learn_structure else [])

    def param(c, group):
        return {"Xs": c.Xs, "Ys": c.Ys, "log_alpha": c.structure.log_alpha}[group]

    if sample is None:
        coords = [(g, idx) for g in groups for idx in np.ndindex(grads[g].shape)]
    elif isinstance(sample, int):
        rng = np.random.default_rng(seed)
        coords = []
        for g in groups:
            shape = grads[g].shape
            flat = rng.choice(int(np.prod(shape)), size=min(sample, int(np.prod(shape))), replace=False)
            coords += [(g, np.unravel_index(i, shape)) for i in sorted(flat)]
    else:
        coords = list(sample)

    entries = []
    work = cg.copy()
    for group, idx in coords:
        idx = tuple(int(i) for i in idx)
        p = param(work, group)
        orig = p[idx]
        p[idx] = orig + h
        up = loss_value(targets, work, cfg, noise, tau, kernel)
        p[idx] = orig - h
        down = loss_value(targets, work, cfg, noise, tau, kernel)
        p[idx] = orig
        numeric = (up - down) / (2.0 * h)
        analytic = float(grads[group][idx])
        rel, ok = _compare(analytic, numeric, tol, abs_floor)
        entries.append((group, idx, analytic, numeric, rel, ok))
    # Coordinates whose gradient is below the floor carry no relative information.
    meaningful = [e[4] for e in entries if max(abs(e[2]), abs(e[3])) >= abs_floor]
    return FDReport(h, tol, abs_floor, entries, max(meaningful, default=0.0), all(e[5] for e in entries))


def random_instance(n=20, m=6, d=8, C=3, learn_structure=True, seed=0, beta=0.5, k=2, tau=0.7):
    """A small random problem for gradient checking.

    Returns ``(targets, cg, cfg, noise, tau)``.
    """
    rng = np.random.default_rng(seed)
    Xt = rng.normal(size=(n, d))
    A = (rng.uniform(size=(n, n)) < 0.2).astype(float)
    A = np.triu(A, 1)
    A = A + A.T
    cfg = KernelConfig(k=k, beta=beta)
    Xt_hat = propagate(normalize_adjacency(A), Xt, k)
    Y = np.eye(C)[rng.integers(0, C, size=n)]
    targets = Targets(Xt_hat, Y, np.arange(n))
    Xs = rng.normal(size=(m, d))
    Ys = np.eye(C)[rng.integers(0, C, size=m)] + 0.1 * rng.normal(size=(m, C))
    if learn_structure:
        rs = RelaxedStructure.initial(m, rng, mean=0.0, std=0.5, seed=seed)
        rs.tau = tau
        noise = concrete_noise(rng, m)
    else:
        rs = RelaxedStructure.disabled(m)
        noise = None
    return targets, CondensedGraph(Xs, Ys, rs), cfg, noise, tau
