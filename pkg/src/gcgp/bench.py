"""Timing benchmark and the Monte-Carlo check of the arcsine kernel."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.special import erf

from .condense import Adam
from .condensed import CondensedGraph
from .gradients import Targets, forward_backward
from .graph import Graph, from_edges
from .kernels import KernelConfig, arcsine_entry
from .relax import RelaxedStructure, concrete_noise


def synthetic_graph(n: int = 5000, d: int = 64, C: int = 4, avg_degree: float = 4.0, seed: int = 0) -> Graph:
    """Random sparse graph with Gaussian class-shifted features; every node is labeled for training."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, C, size=n)
    centers = rng.normal(size=(C, d))
    X = centers[labels] + rng.normal(size=(n, d))
    E = int(n * avg_degree / 2)
    edges = rng.integers(0, n, size=(E, 2))
    idx = np.arange(n)
    return Graph(X, from_edges(edges, n), labels, idx, np.array([], dtype=np.int64),
                 np.array([], dtype=np.int64), C, name=f"synthetic-{n}x{d}")


@dataclass
class TimingReport:
    n: int
    d: int
    k: int
    sizes: list
    step_ms: list
    slope: float
    ratio_last_first: float
    fit_coeffs: dict = field(default_factory=dict)
    within_model: bool = True

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return list(zip(self.sizes, self.step_ms))


def time_step(g: Graph, m: int, cfg: KernelConfig, repeats: int = 7, warmup: int = 3,
              learn_structure: bool = False, seed: int = 0) -> float:
    """Median wall time (seconds) of one optimization step at condensed size ``m``."""
    rng = np.random.default_rng(seed)
    nodes = rng.choice(g.num_nodes, size=m, replace=m > g.num_nodes)
    rs = RelaxedStructure.initial(m, rng, -4.0) if learn_structure else RelaxedStructure.disabled(m)
    cg = CondensedGraph(g.features[nodes].copy(), g.onehot(nodes), rs)
    targets = Targets.from_graph(g, cfg, g.train)
    opt = Adam(0.01)
    params = {"Xs": cg.Xs, "Ys": cg.Ys}
    noise = None
    if learn_structure:
        noise = concrete_noise(rng, m)
    times = []
    for i in range(warmup + repeats):
        t0 = time.perf_counter()
        b = forward_backward(targets, cg, cfg, noise, 0.5)
        opt.step(params, {"Xs": b.grad_Xs, "Ys": b.grad_Ys})
        if i >= warmup:
            times.append(time.perf_counter() - t0)
    return float(np.median(times))


def timing_bench(g: Graph, sizes: Sequence[int], cfg: KernelConfig, repeats: int = 7,
                 tolerance: float = 3.0) -> TimingReport:
    """Per-step cost across condensed sizes, with a log-log slope and a cost-model fit.

    The model ``c0 + c1 m^3 + c2 m n d`` is fitted by non-negative least
    squares; ``within_model`` says every measurement lies within a factor
    ``tolerance`` of the fitted curve.
    """
    sizes = [int(m) for m in sizes]
    secs = [time_step(g, m, cfg, repeats) for m in sizes]
    logm, logt = np.log(sizes), np.log(secs)
    slope = float(np.polyfit(logm, logt, 1)[0]) if len(sizes) > 1 else float("nan")
    n, d = len(g.train), g.num_features
    M = np.array(sizes, dtype=np.float64)
    design = np.stack([np.ones_like(M), M ** 3, M * n * d], axis=1)
    scale = design.max(axis=0)
    coef, _ = nnls(design / scale, np.asarray(secs))
    coef = coef / scale
    fitted = design @ coef
    within = bool(np.all((np.asarray(secs) <= tolerance * fitted) & (np.asarray(secs) >= fitted / tolerance)))
    return TimingReport(n, d, cfg.k, sizes, [1e3 * s for s in secs], slope, secs[-1] / secs[0],
                        {"c0": coef[0], "c_m3": coef[1], "c_mnd": coef[2]}, within)


@dataclass
class OracleReport:
    dims: int
    samples: int
    deviations: list
    max_abs_dev: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs_dev < self.tol


def erf_network_covariance(xi, xj, sigma_w2: float, beta: float, samples: int,
                           rng: np.random.Generator, chunk: int = 200_000) -> float:
    """Monte-Carlo ``E[erf(w.xi + b) erf(w.xj + b)]`` over random hidden units.

    ``w`` has i.i.d. N(0, sigma_w2) entries and the bias ``b`` is N(0, beta).
    """
    X = np.stack([np.asarray(xi, float), np.asarray(xj, float)], axis=1)
    total, done = 0.0, 0
    while done < samples:
        s = min(chunk, samples - done)
        W = rng.normal(0.0, np.sqrt(sigma_w2), size=(s, X.shape[0]))
        b = rng.normal(0.0, np.sqrt(beta), size=(s, 1))
        U = erf(W @ X + b)
        total += float(np.sum(U[:, 0] * U[:, 1]))
        done += s
    return total / samples


def kernel_oracle(dims: int = 5, pairs: int = 50, samples: int = 1_000_000,
                  betas: Sequence[float] = (0.1, 0.5, 1.0), seed: int = 0, tol: float = 3e-3,
                  feature_scale: Optional[float] = 1.0) -> OracleReport:
    """Analytic arcsine value vs. the finite-sample erf-network estimate on random pairs."""
    rng = np.random.default_rng(seed)
    devs = []
    for p in range(pairs):
        beta = float(betas[p % len(betas)])
        cfg = KernelConfig(k=0, beta=beta, feature_scale=feature_scale)
        xi, xj = rng.normal(size=dims), rng.normal(size=dims)
        analytic = arcsine_entry(xi, xj, cfg)
        mc = erf_network_covariance(xi, xj, cfg.scale(dims), beta, samples, rng)
        devs.append({"beta": beta, "analytic": analytic, "monte_carlo": mc, "abs_dev": abs(analytic - mc)})
    return OracleReport(dims, samples, devs, max(d["abs_dev"] for d in devs), tol)
