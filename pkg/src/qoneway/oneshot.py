"""One-shot information measures and shared-randomness message compression.

The compression scheme is rejection sampling against a reference
distribution sigma*: both parties read N candidates c_1..c_N ~ sigma* from
the public seed, Alice accepts candidate i with probability
p(c_i|x) / (2^lam sigma*(c_i)) and sends the index of the first accepted
one (0 if none was accepted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qcore

PROB_ATOL = 1e-12


class InfiniteDmaxError(ValueError):
    """The support of rho is not contained in the support of sigma."""


class PlanInconsistencyError(RuntimeError):
    pass


def dmax(rho, sigma) -> float:
    """log2 of the largest eigenvalue of sigma^{-1/2} rho sigma^{-1/2}."""
    r, s = qcore.as_matrix(rho), qcore.as_matrix(sigma)
    if r.shape != s.shape:
        raise qcore.DimensionError("dmax arguments have different dimensions")
    ps = qcore.support_projector(s)
    w, v = np.linalg.eigh(0.5 * (r + qcore.dagger(r)))
    live = v[:, w > qcore.EIG_CUTOFF]
    if live.size and np.max(np.linalg.norm(live - ps @ live, axis=0)) > 1e-8:
        raise InfiniteDmaxError("supp(rho) is not contained in supp(sigma)")
    b = qcore.mat_inv_sqrt(s)
    top = np.linalg.eigvalsh(b @ r @ b).max()
    return float(math.log2(top))


@dataclass(frozen=True, eq=False)
class ClassicalJoint:
    """Joint distribution table p[x, c]."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float, copy=True)
        if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1.0) > PROB_ATOL:
            raise ValueError("joint must be a nonnegative 2-d table summing to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_channel(cls, px, channel) -> "ClassicalJoint":
        px = np.asarray(px, dtype=float)
        ch = np.asarray(channel, dtype=float)
        joint = px[:, None] * ch
        return cls(joint / joint.sum())

    @property
    def px(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def pc(self) -> np.ndarray:
        return self.p.sum(axis=0)

    def conditional(self) -> np.ndarray:
        """p(c|x) for x with p(x) > 0; rows of zero-probability x are left at 0."""
        px = self.px
        cond = np.zeros_like(self.p)
        live = px > 0
        cond[live] = self.p[live] / px[live, None]
        return cond


def imax_classical(j: ClassicalJoint) -> tuple[float, np.ndarray]:
    """Max-information of a classical joint and its optimal reference sigma*.

    For diagonal states D_max(p_XC || p_X x sigma) = max_{x,c} log p(c|x)/sigma(c),
    which is minimised by sigma(c) proportional to max_x p(c|x).
    """
    cond = j.conditional()[j.px > 0]
    peak = cond.max(axis=0)
    total = float(peak.sum())
    return math.log2(total), peak / total


@dataclass(frozen=True, eq=False)
class CompressionPlan:
    lam: float
    sigma: np.ndarray
    cond: np.ndarray  # p(c|x)
    px: np.ndarray
    N: int
    length: int
    eta: float

    @property
    def rejection_probability(self) -> float:
        return max(0.0, 1.0 - 2.0**-self.lam) ** self.N

    @property
    def length_bound(self) -> float:
        return self.lam + math.log2(math.log(1.0 / self.eta)) + 2

    def biases(self) -> np.ndarray:
        """Acceptance probability table b[x, c]."""
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(self.sigma > 0, self.cond / (2.0**self.lam * self.sigma), 0.0)
        return b

    def output_channel(self) -> np.ndarray:
        """Exact law of the decoded c' given x: (1 - r) p(.|x) + r sigma*."""
        r = self.rejection_probability
        return (1.0 - r) * self.cond + r * self.sigma[None, :]

    def exact_tv(self) -> float:
        """TV distance between p(x, c) and p(x) q(c'|x)."""
        diff = self.output_channel() - self.cond
        return float(0.5 * np.sum(self.px[:, None] * np.abs(diff)))


def build_compression_plan(j: ClassicalJoint, eta: float) -> CompressionPlan:
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie strictly between 0 and 1")
    lam, sigma = imax_classical(j)
    n_cand = max(1, math.ceil(2.0**lam * math.log(1.0 / eta)))
    length = math.ceil(math.log2(n_cand + 1))
    plan = CompressionPlan(lam, sigma, j.conditional(), j.px, n_cand, length, eta)
    if np.max(plan.biases()[j.px > 0]) > 1 + PROB_ATOL:
        raise PlanInconsistencyError("acceptance bias exceeds 1")
    return plan


@dataclass(frozen=True, eq=False)
class SharedCandidates:
    """Public randomness: N candidates plus a fallback draw, all from sigma*."""

    candidates: np.ndarray
    fallback: int


def draw_shared(plan: CompressionPlan, rng: np.random.Generator) -> SharedCandidates:
    # reads only the generator: the shared string is independent of x
    draws = rng.choice(len(plan.sigma), size=plan.N + 1, p=plan.sigma)
    return SharedCandidates(draws[:-1], int(draws[-1]))


def encode(plan: CompressionPlan, x: int, shared: SharedCandidates, rng: np.random.Generator) -> str:
    if plan.px[x] <= 0:
        raise ValueError(f"x={x} is outside the support of the joint")
    for i, c in enumerate(shared.candidates, start=1):
        bias = plan.cond[x, c] / (2.0**plan.lam * plan.sigma[c])
        if bias > 1 + PROB_ATOL:
            raise PlanInconsistencyError(f"acceptance bias {bias} exceeds 1")
        if rng.random() < bias:
            return format(i, f"0{plan.length}b")
    return format(0, f"0{plan.length}b")


def decode(plan: CompressionPlan, message: str, shared: SharedCandidates) -> int:
    """Bob's side; sees only the message and the public randomness."""
    i = int(message, 2)
    if i == 0:
        return shared.fallback
    return int(shared.candidates[i - 1])


def run_compression(plan: CompressionPlan, x: int, shared_rng: np.random.Generator, private_rng: np.random.Generator) -> tuple[str, int]:
    shared = draw_shared(plan, shared_rng)
    msg = encode(plan, x, shared, private_rng)
    return msg, decode(plan, msg, shared)


def run_compression_batch(plan: CompressionPlan, xs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised equivalent of :func:`run_compression` for many independent runs.

    Returns (message indices, decoded values).
    """
    xs = np.asarray(xs, dtype=int)
    trials = len(xs)
    ncat = len(plan.sigma)
    cdf = np.cumsum(plan.sigma)
    cdf[-1] = 1.0
    draws = np.minimum(np.searchsorted(cdf, rng.random((trials, plan.N + 1)), side="right"), ncat - 1)
    cands, fallback = draws[:, :-1], draws[:, -1]
    bias = plan.biases()[xs[:, None], cands]
    if np.max(bias, initial=0.0) > 1 + PROB_ATOL:
        raise PlanInconsistencyError("acceptance bias exceeds 1")
    accept = rng.random((trials, plan.N)) < bias
    any_acc = accept.any(axis=1)
    first = np.argmax(accept, axis=1)
    idx = np.where(any_acc, first + 1, 0)
    decoded = np.where(any_acc, cands[np.arange(trials), first], fallback)
    return idx, decoded
