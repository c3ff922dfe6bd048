"""Pretty good measurements and guessing probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .qcore import CqState, Povm


@dataclass(frozen=True)
class Ensemble:
    """Weighted states {p_x, rho^x}, with A_x = p_x rho^x and A = sum_x A_x cached."""

    cq: CqState

    def __post_init__(self):
        parts = tuple(p * s.matrix for p, s in zip(self.cq.weights, self.cq.states))
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "average", sum(parts))

    @classmethod
    def from_lists(cls, weights, states) -> "Ensemble":
        states = [s if isinstance(s, qcore.DensityOperator) else qcore.DensityOperator(qcore.as_matrix(s)) for s in states]
        return cls(CqState(tuple(weights), tuple(states)))

    @property
    def weights(self) -> tuple:
        return self.cq.weights

    @property
    def states(self) -> tuple:
        return self.cq.states

    def __len__(self):
        return len(self.cq.weights)


def pgm_elements(parts, average=None) -> list[np.ndarray]:
    """A^{-1/2} A_x A^{-1/2} for each part, without the kernel completion."""
    average = sum(parts) if average is None else average
    s = qcore.mat_inv_sqrt(average)
    return [s @ a @ s for a in parts]


def build_pgm(e: Ensemble, labels=None) -> Povm:
    """E_x = A^{-1/2} A_x A^{-1/2}.

    The kernel of A is handed to the label with the largest prior
    (first one on ties) so the elements sum to the identity.
    """
    elements = pgm_elements(e.parts, e.average)
    residual = np.eye(e.cq.dim) - qcore.support_projector(e.average)
    elements[int(np.argmax(e.weights))] = elements[int(np.argmax(e.weights))] + residual
    return Povm(tuple(elements), labels)


def guess_prob(e: Ensemble, p: Povm, labels=None) -> float:
    """sum_x p_x Tr(E_x rho^x); ``labels[x]`` names the POVM label for ensemble entry x."""
    labels = range(len(e)) if labels is None else labels
    total = 0.0
    for a, lab in zip(e.parts, labels):
        if lab not in p.labels:
            raise KeyError(f"POVM has no outcome labelled {lab!r}")
        total += np.real(np.trace(p.element(lab) @ a))
    return float(total)


def helstrom_opt(p0: float, rho0, p1: float, rho1) -> float:
    diff = p0 * qcore.as_matrix(rho0) - p1 * qcore.as_matrix(rho1)
    return float(0.5 * (1.0 + np.sum(np.abs(np.linalg.eigvalsh(diff)))))


def g_function(x: float, d: int) -> float:
    if d < 2:
        raise ValueError("g needs d >= 2")
    return x * x + (1.0 - x) ** 2 / (d - 1)
