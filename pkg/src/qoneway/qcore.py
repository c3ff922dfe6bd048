"""Dense complex linear algebra and quantum-state primitives.

Matrices are plain ``numpy`` arrays marked read-only; the state/measurement
containers validate on construction and never mutate afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# single validation knob shared by every module
ATOL = 1e-9
# eigenvalues below this are treated as exact zeros ("support" cutoff)
EIG_CUTOFF = 1e-10


class InvalidOperatorError(ValueError):
    """Raised when a matrix violates the invariants of its declared role."""


class DimensionError(ValueError):
    pass


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def is_hermitian(m: np.ndarray, atol: float = ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - dagger(m)), initial=0.0) <= atol


def _hermitian_part(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m):
        raise InvalidOperatorError(f"{what} is not Hermitian within {ATOL}")
    return 0.5 * (m + dagger(m))


def is_psd(m: np.ndarray, atol: float = ATOL) -> bool:
    if not is_hermitian(m, atol):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (m + dagger(m))).min(initial=0.0) >= -atol)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def proj(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, np.conj(v))


def support_projector(m: np.ndarray, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Orthogonal projector onto the span of eigenvectors with eigenvalue > cutoff."""
    w, v = np.linalg.eigh(_hermitian_part(m))
    keep = w > cutoff
    vs = v[:, keep]
    return vs @ dagger(vs)


def projector_rank(m: np.ndarray, cutoff: float = EIG_CUTOFF) -> int:
    w = np.linalg.eigvalsh(_hermitian_part(m))
    return int(np.sum(w > cutoff))


def mat_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD matrix (negative noise clipped to 0)."""
    w, v = np.linalg.eigh(_hermitian_part(m))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def mat_inv_sqrt(m: np.ndarray, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues at or below ``cutoff`` are treated as zero, so
    ``B @ m @ B`` is the projector onto ``supp(m)``.
    """
    w, v = np.linalg.eigh(_hermitian_part(m, "mat_inv_sqrt input"))
    if w.min(initial=0.0) < -ATOL:
        raise InvalidOperatorError("mat_inv_sqrt input is not positive semidefinite")
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ dagger(v)


def loewner_leq(a: np.ndarray, b: np.ndarray, atol: float = ATOL) -> bool:
    """True when ``b - a`` is PSD within ``atol``."""
    diff = np.asarray(b, dtype=complex) - np.asarray(a, dtype=complex)
    diff = 0.5 * (diff + dagger(diff))
    return bool(np.linalg.eigvalsh(diff).min(initial=0.0) >= -atol)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(np.asarray(self.amplitudes).reshape(-1))
        if abs(np.vdot(amps, amps).real - 1.0) > ATOL:
            raise InvalidOperatorError("pure state is not normalised")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> "DensityOperator":
        return DensityOperator(proj(self.amplitudes))

    def __eq__(self, other):
        return isinstance(other, PureState) and np.array_equal(self.amplitudes, other.amplitudes)

    @classmethod
    def from_unnormalised(cls, v) -> "PureState":
        v = np.asarray(v, dtype=complex).reshape(-1)
        return cls(v / np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density operator must be square, got shape {m.shape}")
        if not is_hermitian(m):
            raise InvalidOperatorError("density operator is not Hermitian")
        m = 0.5 * (m + dagger(m))
        if np.linalg.eigvalsh(m).min() < -ATOL:
            raise InvalidOperatorError("density operator has a negative eigenvalue")
        if abs(np.trace(m).real - 1.0) > ATOL:
            raise InvalidOperatorError("density operator does not have unit trace")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __eq__(self, other):
        return isinstance(other, DensityOperator) and np.array_equal(self.matrix, other.matrix)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True, eq=False)
class Povm:
    """Labelled measurement; ``elements[i]`` belongs to ``labels[i]``."""

    elements: tuple
    labels: tuple = None

    def __post_init__(self):
        elems = tuple(_frozen(_hermitian_part(e, "POVM element")) for e in self.elements)
        if not elems:
            raise InvalidOperatorError("POVM needs at least one element")
        dim = elems[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for e in elems:
            if e.shape != (dim, dim):
                raise DimensionError("POVM elements have mismatched shapes")
            if np.linalg.eigvalsh(e).min() < -ATOL:
                raise InvalidOperatorError("POVM element is not positive semidefinite")
            total += e
        if np.linalg.norm(total - np.eye(dim)) > ATOL:
            raise InvalidOperatorError("POVM elements do not sum to the identity")
        labels = tuple(range(len(elems))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(elems) or len(set(labels)) != len(labels):
            raise InvalidOperatorError("POVM labels must be distinct, one per element")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self):
        return len(self.elements)

    def element(self, label) -> np.ndarray:
        return self.elements[self.labels.index(label)]

    def probabilities(self, state) -> np.ndarray:
        rho = as_matrix(state)
        if rho.shape[0] != self.dim:
            raise DimensionError("state and POVM dimensions differ")
        return np.array([np.real(np.trace(e @ rho)) for e in self.elements])

    def is_projective(self, atol: float = ATOL) -> bool:
        return all(np.allclose(e @ e, e, atol=atol) for e in self.elements)

    def __eq__(self, other):
        return (
            isinstance(other, Povm)
            and self.labels == other.labels
            and all(np.array_equal(a, b) for a, b in zip(self.elements, other.elements))
        )

    @classmethod
    def computational(cls, dim: int) -> "Povm":
        return cls(tuple(proj(ket(i, dim)) for i in range(dim)))


@dataclass(frozen=True)
class CqState:
    """Classical-quantum state sum_x p_x |x><x| (x) rho^x."""

    weights: tuple
    states: tuple

    def __post_init__(self):
        w = tuple(float(p) for p in self.weights)
        if len(w) != len(self.states):
            raise DimensionError("one weight per conditional state required")
        if min(w) < 0 or abs(sum(w) - 1.0) > ATOL:
            raise InvalidOperatorError("cq-state weights must form a probability vector")
        dims = {s.dim for s in self.states}
        if len(dims) != 1:
            raise DimensionError("conditional states must share a dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def average(self) -> np.ndarray:
        return sum(p * s.matrix for p, s in zip(self.weights, self.states))


def as_matrix(state) -> np.ndarray:
    if isinstance(state, DensityOperator):
        return state.matrix
    if isinstance(state, PureState):
        return proj(state.amplitudes)
    return np.asarray(state, dtype=complex)


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"cannot compare states of shapes {ma.shape} and {mb.shape}")
    diff = ma - mb
    w = np.linalg.eigvalsh(0.5 * (diff + dagger(diff)))
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def partial_trace(state, dims: Sequence[int], trace_out: int) -> DensityOperator | np.ndarray:
    """Trace out factor ``trace_out`` (0 or 1) of a bipartite operator on ``dims``.

    Density operators come back as :class:`DensityOperator`; raw arrays as arrays.
    """
    m = as_matrix(state)
    da, db = dims
    if m.shape != (da * db, da * db):
        raise DimensionError(f"operator of shape {m.shape} does not factor as {da}x{db}")
    t = m.reshape(da, db, da, db)
    if trace_out == 1:
        red = np.einsum("ajbj->ab", t)
    elif trace_out == 0:
        red = np.einsum("iaib->ab", t)
    else:
        raise ValueError("trace_out must be 0 or 1")
    if isinstance(state, (DensityOperator, PureState)):
        return DensityOperator(red)
    return red


def canonical_purification(rho: DensityOperator) -> PureState:
    """(sqrt(rho) (x) I) sum_i |i>|i>, a pure state on dim**2."""
    root = mat_sqrt(rho.matrix)
    # row-major vec of root gives sum_ij root[i,j] |i>|j>
    vec = root.reshape(-1)
    return PureState(vec / np.linalg.norm(vec))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState.from_unnormalised(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ dagger(g)
    return DensityOperator(m / np.trace(m).real)


def random_povm(dim: int, outcomes: int, rng: np.random.Generator) -> Povm:
    raw = []
    for _ in range(outcomes):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        raw.append(g @ dagger(g))
    s = mat_inv_sqrt(sum(raw))
    return Povm(tuple(s @ r @ s for r in raw))


def complete_isometry(v: np.ndarray) -> np.ndarray:
    """Extend an isometry (orthonormal columns) to a square unitary."""
    rows, cols = v.shape
    # complement of the column span from the SVD of the residual projector
    resid = np.eye(rows) - v @ dagger(v)
    u, s, _ = np.linalg.svd(resid)
    extra = u[:, : rows - cols]
    return np.hstack([v, extra])


@dataclass(frozen=True)
class NaimarkDilation:
    """Projective measurement on system (x) ancilla.

    The ancilla (dimension = number of outcomes) is the second tensor
    factor and starts in |0>.
    """

    projective: Povm
    unitary: np.ndarray
    system_dim: int
    ancilla_dim: int

    def embed(self, state) -> np.ndarray:
        return np.kron(as_matrix(state), proj(ket(0, self.ancilla_dim)))

    def embed_pure(self, amplitudes: np.ndarray) -> np.ndarray:
        return np.kron(np.asarray(amplitudes).reshape(-1), ket(0, self.ancilla_dim))


def naimark_dilate(p: Povm) -> NaimarkDilation:
    d, t = p.dim, len(p)
    # V|psi> = sum_i sqrt(E_i)|psi> (x) |i>
    v = np.zeros((d * t, d), dtype=complex)
    for i, e in enumerate(p.elements):
        v[i::t, :] = mat_sqrt(e)
    cols0 = [j * t for j in range(d)]  # basis vectors |j>|0>
    others = [k for k in range(d * t) if k % t != 0]
    u_partial = complete_isometry(v)
    u = np.zeros((d * t, d * t), dtype=complex)
    u[:, cols0] = u_partial[:, :d]
    u[:, others] = u_partial[:, d:]
    projectors = []
    for i in range(t):
        pi = np.kron(np.eye(d), proj(ket(i, t)))
        projectors.append(dagger(u) @ pi @ u)
    return NaimarkDilation(Povm(tuple(projectors), p.labels), _frozen(u), d, t)


def measure(state, p: Povm, rng: np.random.Generator):
    """Sample an outcome label with probability Tr(E_i rho)."""
    probs = p.probabilities(state)
    if abs(probs.sum() - 1.0) > 1e-6:
        raise InvalidOperatorError("outcome probabilities do not sum to 1")
    probs = np.clip(probs, 0.0, None)
    idx = rng.choice(len(probs), p=probs / probs.sum())
    return p.labels[idx]


# -- serialisation -------------------------------------------------------------

def matrix_to_dict(m: np.ndarray) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "entries": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def matrix_from_dict(d: dict) -> np.ndarray:
    rows, cols = int(d["rows"]), int(d["cols"])
    entries = d["entries"]
    if len(entries) != rows * cols:
        raise DimensionError(f"expected {rows * cols} entries, got {len(entries)}")
    flat = np.array([complex(float(re), float(im)) for re, im in entries], dtype=complex)
    return flat.reshape(rows, cols)


def dumps_matrix(m: np.ndarray) -> str:
    # json writes the shortest repr, which round-trips doubles exactly
    return json.dumps(matrix_to_dict(m))


def loads_matrix(s: str) -> np.ndarray:
    return matrix_from_dict(json.loads(s))
