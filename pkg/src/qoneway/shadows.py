"""Exact few-qubit classical shadows over the full stabilizer-state table.

Sampling a uniformly random Clifford and measuring in the computational
basis yields stabilizer state s with probability <s|rho|s> * 2^n / count,
because the stabilizer states form a 1-design.  We sample that
distribution directly from an enumerated table.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qcore

MAX_QUBITS = 4
GROUPS_PER_LOG = 8  # K = ceil(8 ln(1/delta))
GROUP_SIZE_FACTOR = 32  # per-group size ceil(32 ||A||_F^2 / eps^2)


class UnsupportedSizeError(ValueError):
    pass


def stabilizer_count(n: int) -> int:
    return 2**n * math.prod(2**i + 1 for i in range(1, n + 1))


def _clifford_generators(n: int) -> list[np.ndarray]:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.diag([1, 1j])
    gates = []
    for q in range(n):
        for g in (h, s):
            ops = [np.eye(2)] * n
            ops[q] = g
            full = ops[0]
            for o in ops[1:]:
                full = np.kron(full, o)
            gates.append(full)
    dim = 2**n
    for c in range(n):
        for t in range(n):
            if c == t:
                continue
            perm = np.zeros((dim, dim), dtype=complex)
            for b in range(dim):
                bits = [(b >> (n - 1 - k)) & 1 for k in range(n)]
                if bits[c]:
                    bits[t] ^= 1
                out = int("".join(map(str, bits)), 2)
                perm[out, b] = 1
            gates.append(perm)
    return gates


def _canonical_rows(states: np.ndarray) -> np.ndarray:
    """Remove global phase: first non-negligible amplitude made real positive."""
    first = np.argmax(np.abs(states) > 1e-9, axis=1)
    lead = states[np.arange(len(states)), first]
    return states * (np.abs(lead) / lead)[:, None]


def _keys(states: np.ndarray) -> list[bytes]:
    # amplitudes are (0, +-1, +-i) / sqrt(2^k); 6 decimals separates them safely
    r = np.round(np.concatenate([states.real, states.imag], axis=1), 6) + 0.0
    return [row.tobytes() for row in r]


@dataclass(frozen=True, eq=False)
class StabilizerStateTable:
    n: int
    states: np.ndarray  # (count, 2^n), canonical phase, sorted by canonical bytes
    checksum: str

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return 2**self.n

    def index_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.count)))

    def expectations(self, a: np.ndarray) -> np.ndarray:
        """<s|A|s> for every table state."""
        a = np.asarray(a, dtype=complex)
        return np.real(np.einsum("si,ij,sj->s", np.conj(self.states), a, self.states))

    def index_of(self, amplitudes: np.ndarray) -> int:
        overlaps = np.abs(np.conj(self.states) @ np.asarray(amplitudes, dtype=complex))
        i = int(np.argmax(overlaps))
        if overlaps[i] < 1 - 1e-9:
            raise KeyError("not a stabilizer state of this table")
        return i


@lru_cache(maxsize=None)
def enumerate_stabilizer_states(n: int) -> StabilizerStateTable:
    """All n-qubit stabilizer states via closure of {H, S, CNOT} acting on |0..0>."""
    if not 1 <= n <= MAX_QUBITS:
        raise UnsupportedSizeError(f"stabilizer enumeration supports 1 <= n <= {MAX_QUBITS}")
    gates = _clifford_generators(n)
    start = np.zeros((1, 2**n), dtype=complex)
    start[0, 0] = 1.0
    seen = {}
    frontier = start
    for key, row in zip(_keys(frontier), frontier):
        seen[key] = row
    while len(frontier):
        nxt = []
        for g in gates:
            cand = _canonical_rows(frontier @ g.T)
            for key, row in zip(_keys(cand), cand):
                if key not in seen:
                    seen[key] = row
                    nxt.append(row)
        frontier = np.array(nxt) if nxt else np.zeros((0, 2**n))
    keys = sorted(seen)
    states = np.array([seen[k] for k in keys])
    states.setflags(write=False)
    digest = hashlib.sha256(b"".join(keys)).hexdigest()
    if len(states) != stabilizer_count(n):
        raise RuntimeError(f"enumeration found {len(states)} states, expected {stabilizer_count(n)}")
    return StabilizerStateTable(n, states, digest)


def _n_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim or not 1 <= n <= MAX_QUBITS:
        raise UnsupportedSizeError(f"dimension {dim} is not 2^n with 1 <= n <= {MAX_QUBITS}")
    return n


def snapshot_distribution(state, table: StabilizerStateTable | None = None) -> np.ndarray:
    """Pr(s) = <s|rho|s> 2^n / count."""
    rho = qcore.as_matrix(state)
    table = table or enumerate_stabilizer_states(_n_qubits(rho.shape[0]))
    probs = table.expectations(rho) * table.dim / table.count
    if abs(probs.sum() - 1.0) > 1e-8:
        raise RuntimeError("snapshot distribution is not normalised")
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


@dataclass(frozen=True, eq=False)
class ShadowSample:
    n: int
    indices: np.ndarray
    checksum: str = ""

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, copy=True)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def T(self) -> int:
        return len(self.indices)

    def __eq__(self, other):
        return isinstance(other, ShadowSample) and self.n == other.n and np.array_equal(self.indices, other.indices)


def sample_shadow(state, T: int, rng: np.random.Generator, table: StabilizerStateTable | None = None) -> ShadowSample:
    rho = qcore.as_matrix(state)
    table = table or enumerate_stabilizer_states(_n_qubits(rho.shape[0]))
    probs = snapshot_distribution(rho, table)
    idx = rng.choice(table.count, size=T, p=probs)
    return ShadowSample(table.n, idx, table.checksum)


def snapshot_values(a: np.ndarray, table: StabilizerStateTable) -> np.ndarray:
    """d'(A, s) = (2^n + 1) <s|A|s> - Tr A for every table index."""
    a = np.asarray(a, dtype=complex)
    if not qcore.is_hermitian(a):
        raise qcore.InvalidOperatorError("observable must be Hermitian")
    tr = np.trace(a)
    if abs(tr.imag) > 1e-9:
        raise qcore.InvalidOperatorError("trace of observable has an imaginary part")
    return (table.dim + 1) * table.expectations(a) - tr.real


def snapshot_estimate(a: np.ndarray, s: int, table: StabilizerStateTable) -> float:
    a = np.asarray(a, dtype=complex)
    if a.shape != (table.dim, table.dim):
        raise qcore.DimensionError("observable and table dimensions differ")
    if not qcore.is_hermitian(a):
        raise qcore.InvalidOperatorError("observable must be Hermitian")
    v = table.states[s]
    val = (table.dim + 1) * np.vdot(v, a @ v) - np.trace(a)
    if abs(val.imag) > 1e-9:
        raise qcore.InvalidOperatorError("snapshot estimate has an imaginary residue")
    return float(val.real)


def median_of_means(values, K: int) -> float:
    """Lower median of K group means; a trailing remainder is dropped."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("median_of_means needs at least one value")
    if K < 1:
        raise ValueError("K must be positive")
    size = vals.size // K
    if size == 0:
        raise ValueError(f"cannot form {K} groups from {vals.size} values")
    means = np.sort(vals[: size * K].reshape(K, size).mean(axis=1))
    return float(means[(K - 1) // 2])


def batch_median_of_means(values: np.ndarray, K: int) -> np.ndarray:
    """Row-wise :func:`median_of_means` for a (trials, T) array."""
    trials, T = values.shape
    size = T // K
    means = np.sort(values[:, : size * K].reshape(trials, K, size).mean(axis=2), axis=1)
    return means[:, (K - 1) // 2]


def shadow_budget(frob_sq: float, eps: float, delta: float) -> tuple[int, int]:
    """(K groups, group size) for accuracy eps with failure probability delta."""
    K = math.ceil(GROUPS_PER_LOG * math.log(1.0 / delta))
    size = math.ceil(GROUP_SIZE_FACTOR * frob_sq / eps**2)
    return K, size


def shadow_estimate(a: np.ndarray, sample: ShadowSample, K: int, table: StabilizerStateTable | None = None) -> float:
    table = table or enumerate_stabilizer_states(sample.n)
    if sample.checksum and sample.checksum != table.checksum:
        raise ValueError("shadow sample was drawn against a different stabilizer table")
    return median_of_means(snapshot_values(a, table)[sample.indices], K)


def exact_moments(a: np.ndarray, state, table: StabilizerStateTable | None = None) -> tuple[float, float]:
    """Exact mean and variance of d'(A, s) under the snapshot distribution."""
    rho = qcore.as_matrix(state)
    table = table or enumerate_stabilizer_states(_n_qubits(rho.shape[0]))
    probs = snapshot_distribution(rho, table)
    vals = snapshot_values(a, table)
    mean = float(probs @ vals)
    return mean, float(probs @ (vals - mean) ** 2)


# -- shadow files -----------------------------------------------------------------

def shadow_to_dict(sample: ShadowSample) -> dict:
    return {"n": sample.n, "T": sample.T, "checksum": sample.checksum, "indices": sample.indices.tolist()}


def shadow_from_dict(data: dict) -> ShadowSample:
    sample = ShadowSample(int(data["n"]), data["indices"], data["checksum"])
    if sample.T != int(data["T"]):
        raise ValueError("shadow file length does not match its header")
    table = enumerate_stabilizer_states(sample.n)
    if sample.checksum != table.checksum:
        raise ValueError("shadow file checksum does not match the local stabilizer table")
    if sample.T and (sample.indices.min() < 0 or sample.indices.max() >= table.count):
        raise ValueError("shadow file contains an out-of-range index")
    return sample


def dumps_shadow(sample: ShadowSample) -> str:
    return json.dumps(shadow_to_dict(sample))


def loads_shadow(text: str) -> ShadowSample:
    return shadow_from_dict(json.loads(text))
