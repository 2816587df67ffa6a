"""The learnable condensed graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import GraphView
from .relax import RelaxedStructure, discretize


@dataclass
class CondensedGraph:
    Xs: np.ndarray
    Ys: np.ndarray
    structure: RelaxedStructure
    provenance: dict = field(default_factory=dict)
    # Fixed binary adjacency (selection baselines, or after discretization).
    A_binary: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Xs = np.asarray(self.Xs, dtype=np.float64)
        self.Ys = np.asarray(self.Ys, dtype=np.float64)
        if self.Xs.shape[0] != self.Ys.shape[0] or self.structure.m != self.Xs.shape[0]:
            raise ValueError(
                f"inconsistent condensed shapes: Xs {self.Xs.shape}, Ys {self.Ys.shape}, "
                f"structure {self.structure.m}")

    @property
    def m(self) -> int:
        return self.Xs.shape[0]

    @property
    def learn_structure(self) -> bool:
        return self.structure.learn_structure

    def binary_adjacency(self) -> np.ndarray:
        if self.A_binary is not None:
            return self.A_binary
        if self.learn_structure:
            return discretize(self.structure)
        return np.zeros((self.m, self.m))

    def view(self) -> GraphView:
        """Features with the discretized structure, as used for evaluation."""
        A = self.binary_adjacency()
        return GraphView(self.Xs, A if A.any() else None)

    def copy(self) -> "CondensedGraph":
        st = self.structure
        rs = RelaxedStructure(st.log_alpha.copy(), st.tau, st.learn_structure, st.seed, st.rng)
        return CondensedGraph(self.Xs.copy(), self.Ys.copy(), rs, dict(self.provenance),
                              None if self.A_binary is None else self.A_binary.copy())
