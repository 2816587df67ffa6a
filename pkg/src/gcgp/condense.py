"""The condensation loop.

Each step samples a relaxed adjacency (when structure is learned), builds
the two covariance blocks, evaluates the posterior-mean loss on the
supervised rows, takes one optimizer step on ``Xs``, ``Ys`` and
``log_alpha``, and lowers the temperature.  After the last step the edge
logits are thresholded into a binary adjacency.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .condensed import CondensedGraph
from .errors import NumericalError, ValidationError
from .gradients import Targets, forward_backward
from .graph import Graph
from .kernels import KernelConfig
from .relax import TAU_END, TAU_START, RelaxedStructure, anneal_tau, concrete_noise

log = logging.getLogger(__name__)


@dataclass
class CondenseConfig:
    per_class: Optional[int] = 20
    m: Optional[int] = None
    k: int = 2
    beta: float = 0.5
    sigma_w2: float = 1.0
    feature_scale: Optional[float] = None
    row_normalize_features: bool = False
    kernel: str = "arcsine"
    learn_structure: bool = False
    learning_rate: float = 0.01
    epochs: int = 1000
    tau_start: float = TAU_START
    tau_end: float = TAU_END
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss_rows: str = "train"
    batch_rows: Optional[int] = None
    init: str = "real"
    freeze_labels: bool = False
    fixed_noise: bool = False
    logalpha_mean: float = -4.0
    logalpha_std: float = 0.5
    early_stop_window: int = 50
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"epochs must be non-negative, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_rows not in ("train", "all-labeled"):
            raise ValidationError(f"loss_rows must be 'train' or 'all-labeled', got {self.loss_rows!r}")
        if self.init not in ("real", "gaussian"):
            raise ValidationError(f"init must be 'real' or 'gaussian', got {self.init!r}")
        if self.kernel not in ("arcsine", "dot"):
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        if self.per_class is None and self.m is None:
            raise ValidationError("set either per_class or m")
        if self.per_class is not None and self.per_class < 1:
            raise ValidationError("per_class must be at least 1")
        if self.m is not None and self.m < 1:
            raise ValidationError("m must be at least 1")
        if not 0 < self.tau_end < self.tau_start:
            raise ValidationError("need 0 < tau_end < tau_start")
        self.kernel_config()

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.k, self.beta, self.sigma_w2, self.feature_scale,
                            self.row_normalize_features)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CondenseReport:
    losses: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    step_seconds: list = field(default_factory=list)
    wall_time: float = 0.0
    steps: int = 0
    stopped_early: bool = False
    clamped: int = 0
    max_jitter: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.b1 + (1 - self.b1) * g
            v = self.v.get(k, 0.0) * self.b2 + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            params[k] -= self.lr * g


def class_counts(g: Graph, cfg: CondenseConfig) -> np.ndarray:
    """Condensed nodes per class: ``per_class`` each, or ``m`` split as evenly as possible."""
    C = g.num_classes
    if cfg.per_class is not None:
        return np.full(C, cfg.per_class, dtype=np.int64)
    base, extra = divmod(cfg.m, C)
    counts = np.full(C, base, dtype=np.int64)
    pool = np.bincount(g.labels[g.train], minlength=C)
    counts[np.argsort(-pool, kind="stable")[:extra]] += 1
    return counts


def stratified_sample(g: Graph, counts, rng: np.random.Generator, pool=None) -> np.ndarray:
    pool = g.train if pool is None else pool
    picked = []
    for c, want in enumerate(counts):
        if want == 0:
            continue
        nodes = pool[g.labels[pool] == c]
        if nodes.size == 0:
            raise ValidationError(f"class {c} has no training nodes to sample from")
        replace = want > nodes.size
        if replace:
            warnings.warn(f"class {c}: {want} condensed nodes requested but only {nodes.size} "
                          f"training nodes; sampling with replacement", stacklevel=3)
        picked.append(rng.choice(nodes, size=want, replace=replace))
    return np.concatenate(picked)


def initialize(g: Graph, cfg: CondenseConfig, seed: Optional[int] = None) -> CondensedGraph:
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    counts = class_counts(g, cfg)
    m = int(counts.sum())
    if m > g.num_nodes:
        raise ValidationError(f"condensed size {m} exceeds graph size {g.num_nodes}")
    X = g.input_features(cfg.row_normalize_features)
    if cfg.init == "real":
        nodes = stratified_sample(g, counts, rng)
        Xs = X[nodes].copy()
        classes = g.labels[nodes]
    else:
        nodes = np.array([], dtype=np.int64)
        classes = np.repeat(np.arange(g.num_classes), counts)
        Xs = rng.normal(X.mean(axis=0), X.std(axis=0) + 1e-12, size=(m, X.shape[1]))
    Ys = np.eye(g.num_classes)[classes]
    if cfg.learn_structure:
        rs = RelaxedStructure.initial(m, rng, cfg.logalpha_mean, cfg.logalpha_std, seed=seed)
        rs.tau = cfg.tau_start
    else:
        rs = RelaxedStructure.disabled(m)
        rs.rng = rng
    prov = {"seed": int(seed), "init": cfg.init, "source_nodes": nodes.tolist()}
    return CondensedGraph(Xs, Ys, rs, prov)


def condense(g: Graph, cfg: CondenseConfig, seed: Optional[int] = None,
             callback=None) -> tuple[CondensedGraph, CondenseReport]:
    """Run the condensation loop and return the finalized graph and its report."""
    cg = initialize(g, cfg, seed)
    kcfg = cfg.kernel_config()
    rng = cg.structure.rng
    report = CondenseReport(config={**cfg.to_dict(), "seed": int(cg.provenance["seed"])})
    rows = g.split(cfg.loss_rows)
    targets = Targets.from_graph(g, kcfg, rows)
    params = {"Xs": cg.Xs, "Ys": cg.Ys}
    if cfg.learn_structure:
        params["log_alpha"] = cg.structure.log_alpha
    opt = (Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
           if cfg.optimizer == "adam" else SGD(cfg.learning_rate))
    frozen_noise = concrete_noise(rng, cg.m) if cfg.learn_structure and cfg.fixed_noise else None

    T = cfg.epochs
    t0 = time.perf_counter()
    for t in range(T):
        ts = time.perf_counter()
        tau = anneal_tau(t, T, cfg.tau_start, cfg.tau_end)
        cg.structure.tau = tau
        noise = None
        if cfg.learn_structure:
            noise = frozen_noise if frozen_noise is not None else concrete_noise(rng, cg.m)
        batch = targets
        if cfg.batch_rows and cfg.batch_rows < len(rows):
            batch = targets.subset(np.sort(rng.choice(len(rows), cfg.batch_rows, replace=False)))
        try:
            b = forward_backward(batch, cg, kcfg, noise, tau, cfg.kernel)
        except NumericalError as exc:
            exc.step = t
            raise NumericalError(f"step {t}: {exc}", stage=exc.stage, step=t) from exc
        if not np.isfinite(b.loss):
            raise NumericalError(f"non-finite loss at step {t}", stage="loss", step=t)
        grads = {"Xs": b.grad_Xs}
        if not cfg.freeze_labels:
            grads["Ys"] = b.grad_Ys
        if cfg.learn_structure:
            grads["log_alpha"] = b.grad_logalpha
        opt.step(params, grads)
        if cfg.learn_structure:
            # the loss reads only the upper triangle; keep the stored logits symmetric
            la = cg.structure.log_alpha
            la[:] = np.triu(la, 1) + np.triu(la, 1).T
        report.losses.append(b.loss)
        report.taus.append(tau)
        report.clamped += b.diagnostics["clamped"]
        report.max_jitter = max(report.max_jitter, b.diagnostics["jitter"])
        report.step_seconds.append(time.perf_counter() - ts)
        report.steps = t + 1
        if callback is not None:
            callback(t, b, cg)
        w = cfg.early_stop_window
        if w and len(report.losses) > w:
            prev = report.losses[-w - 1]
            if abs(prev - b.loss) <= cfg.early_stop_tol * max(abs(prev), 1e-300):
                report.stopped_early = True
                log.info("early stop at step %d", t)
                break
    if T > 0:
        cg.structure.tau = anneal_tau(report.steps, T, cfg.tau_start, cfg.tau_end)
    report.wall_time = time.perf_counter() - t0
    return cg, report
