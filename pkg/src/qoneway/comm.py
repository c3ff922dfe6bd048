"""Tasks, one-way protocols and their error evaluation."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from . import qcore
from .qcore import DensityOperator, Povm, PureState

BOTTOM = -1
DIST_ATOL = 1e-12


class ProtocolError(ValueError):
    pass


class UnsupportedExactError(ProtocolError):
    """Exact evaluation requested for a protocol whose randomness cannot be enumerated."""


class GenerationFailedError(RuntimeError):
    def __init__(self, msg: str, best_error: float):
        super().__init__(msg)
        self.best_error = best_error


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PartialFunction:
    """f: X x Y -> {0..d-1} or bottom, stored as an integer table (bottom = -1)."""

    table: np.ndarray
    d: int

    def __post_init__(self):
        t = np.array(self.table, dtype=int, copy=True)
        if t.ndim != 2:
            raise ValueError("table must be 2-dimensional")
        if np.any((t < BOTTOM) | (t >= self.d)):
            raise ValueError("table entries must be z-labels in [0, d) or -1 for bottom")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def nx(self) -> int:
        return self.table.shape[0]

    @property
    def ny(self) -> int:
        return self.table.shape[1]

    def __call__(self, x: int, y: int) -> int:
        return int(self.table[x, y])

    def preimage(self, y: int, z: int) -> list[int]:
        """S^y_z: inputs x with f(x, y) = z."""
        return [int(x) for x in np.flatnonzero(self.table[:, y] == z)]

    def __eq__(self, other):
        return isinstance(other, PartialFunction) and self.d == other.d and np.array_equal(self.table, other.table)

    @classmethod
    def equality(cls, n: int) -> "PartialFunction":
        size = 2**n
        return cls(np.eye(size, dtype=int), 2)


@dataclass(frozen=True, eq=False)
class InputDistribution:
    weights: np.ndarray
    product: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 2 or np.any(w < 0) or abs(w.sum() - 1.0) > DIST_ATOL:
            raise ValueError("weights must be a nonnegative 2-d table summing to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.product and np.max(np.abs(w - np.outer(self.mu_x, self.mu_y))) > DIST_ATOL:
            raise ValueError("distribution flagged as product does not factorise")

    @property
    def mu_x(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def mu_y(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def is_product(self) -> bool:
        return bool(np.max(np.abs(self.weights - np.outer(self.mu_x, self.mu_y))) <= DIST_ATOL)

    def check_support(self, f: PartialFunction) -> None:
        if self.weights.shape != f.table.shape:
            raise ValueError("distribution and function have different alphabets")
        if np.any(self.weights[f.table == BOTTOM] > 0):
            raise ValueError("distribution places weight on an undefined cell")

    @classmethod
    def from_marginals(cls, mu_x, mu_y) -> "InputDistribution":
        mx = np.asarray(mu_x, dtype=float)
        my = np.asarray(mu_y, dtype=float)
        w = np.outer(mx / mx.sum(), my / my.sum())
        return cls(w / w.sum(), product=True)

    @classmethod
    def uniform_on(cls, f: PartialFunction) -> "InputDistribution":
        w = (f.table != BOTTOM).astype(float)
        return cls(w / w.sum(), product=False)

    def __eq__(self, other):
        return isinstance(other, InputDistribution) and np.array_equal(self.weights, other.weights)


# -- protocols --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantumOneWayProtocol:
    """Alice sends register D; Bob measures Q = D (x) B with a POVM picked by y.

    Without entanglement ``encoders`` holds one PureState or DensityOperator
    per x on D and ``dim_b == 1``.  With entanglement ``shared`` is a pure
    state on A (x) B and ``encoders[x]`` an isometry A -> A' (x) D given as a
    ``(dim_a_out * dim_d, dim_a)`` matrix.
    """

    encoders: tuple
    decoders: tuple
    dim_d: int
    d: int
    shared: PureState | None = None
    dim_a: int = 1
    dim_a_out: int = 1
    dim_b: int = 1
    purified: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "encoders", tuple(self.encoders))
        object.__setattr__(self, "decoders", tuple(self.decoders))
        qdim = self.dim_d * self.dim_b
        for dec in self.decoders:
            if dec.dim != qdim:
                raise ProtocolError(f"decoder acts on dim {dec.dim}, expected {qdim}")
            if tuple(dec.labels) != tuple(range(self.d)):
                raise ProtocolError("decoder outcome labels must be exactly 0..d-1")
        if self.shared is not None:
            if self.shared.dim != self.dim_a * self.dim_b:
                raise ProtocolError("shared state does not live on A (x) B")
            for u in self.encoders:
                u = np.asarray(u)
                if u.shape != (self.dim_a_out * self.dim_d, self.dim_a):
                    raise ProtocolError(f"encoder shape {u.shape} is not A -> A'D")
                if np.linalg.norm(qcore.dagger(u) @ u - np.eye(self.dim_a)) > qcore.ATOL:
                    raise ProtocolError("encoder is not an isometry")
        else:
            if self.dim_b != 1:
                raise ProtocolError("dim_b > 1 requires a shared entangled state")
            for e in self.encoders:
                if e.dim != self.dim_d:
                    raise ProtocolError("encoder state is not on register D")

    @property
    def entangled(self) -> bool:
        return self.shared is not None

    @property
    def nx(self) -> int:
        return len(self.encoders)

    @property
    def ny(self) -> int:
        return len(self.decoders)

    @property
    def message_qubits(self) -> float:
        return math.log2(self.dim_d)

    @property
    def q_dim(self) -> int:
        return self.dim_d * self.dim_b

    def message_state(self, x: int) -> np.ndarray:
        """Density matrix on Q = D (x) B after Alice's encoding of x."""
        if self.shared is None:
            return qcore.as_matrix(self.encoders[x])
        u = np.asarray(self.encoders[x])
        full = np.kron(u, np.eye(self.dim_b)) @ self.shared.amplitudes
        # registers now ordered A' (x) D (x) B; trace out A'
        t = full.reshape(self.dim_a_out, self.q_dim)
        return t.T @ np.conj(t)

    def message_states(self) -> list[np.ndarray]:
        return [self.message_state(x) for x in range(self.nx)]

    def pure_message(self, x: int) -> np.ndarray | None:
        e = self.encoders[x]
        if self.shared is None and isinstance(e, PureState):
            return e.amplitudes
        return None

    def output_distribution(self, x: int, y: int) -> np.ndarray:
        return self.decoders[y].probabilities(self.message_state(x))

    def output_table(self) -> np.ndarray:
        """probs[x, y, z] = Pr(Bob outputs z | x, y)."""
        out = np.zeros((self.nx, self.ny, self.d))
        for x in range(self.nx):
            rho = self.message_state(x)
            for y, dec in enumerate(self.decoders):
                out[x, y] = np.clip(dec.probabilities(rho), 0.0, 1.0)
        return out


@dataclass(frozen=True)
class SharedRandomness:
    """Public randomness: a sampler plus, when finite, an explicit support."""

    sampler: Callable[[np.random.Generator], Any]
    support: tuple | None = None  # ((r, prob), ...)

    def enumerate(self):
        if self.support is None:
            raise UnsupportedExactError("shared randomness is not enumerable")
        return self.support


NO_RANDOMNESS = SharedRandomness(lambda rng: None, support=((None, 1.0),))


class ClassicalOneWayProtocol:
    """Public-coin one-way protocol: message m(x, r, private), output o(m, r, y).

    ``message`` may take Alice's private generator; messages are bit strings.
    """

    def __init__(
        self,
        shared: SharedRandomness,
        message: Callable[..., str],
        output: Callable[[str, Any, int], int],
        max_length: int,
        private_random: bool = False,
        metadata: dict | None = None,
    ):
        self.shared = shared
        self._message = message
        self._output = output
        self.max_length = int(max_length)
        self.private_random = private_random
        self.metadata = dict(metadata or {})

    def message(self, x: int, r, rng: np.random.Generator | None = None) -> str:
        m = self._message(x, r, rng) if self.private_random else self._message(x, r)
        if len(m) > self.max_length:
            raise ProtocolError(f"message of {len(m)} bits exceeds declared {self.max_length}")
        return m

    def output(self, m: str, r, y: int) -> int:
        return int(self._output(m, r, y))

    def run(self, x: int, y: int, rng: np.random.Generator) -> int:
        r = self.shared.sampler(rng)
        return self.output(self.message(x, r, rng), r, y)

    def run_batch(self, xs: np.ndarray, ys: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.run(int(x), int(y), rng) for x, y in zip(xs, ys)], dtype=int)


class ErrorEstimate(NamedTuple):
    value: float
    stderr: float = 0.0
    trials: int = 0

    def __float__(self):
        return float(self.value)


def _check_alphabets(p, f: PartialFunction, dist: InputDistribution):
    dist.check_support(f)
    if isinstance(p, QuantumOneWayProtocol):
        if (p.nx, p.ny, p.d) != (f.nx, f.ny, f.d):
            raise ProtocolError("protocol and function alphabets differ")


def _exact_output_table(p, f: PartialFunction) -> np.ndarray:
    if isinstance(p, QuantumOneWayProtocol):
        return p.output_table()
    support = p.shared.enumerate()
    out = np.zeros((f.nx, f.ny, f.d))
    for x in range(f.nx):
        for r, pr in support:
            if p.private_random:
                raise UnsupportedExactError("private randomness is not enumerable")
            m = p.message(x, r)
            for y in range(f.ny):
                out[x, y, p.output(m, r, y)] += pr
    return out


def cell_errors(table: np.ndarray, f: PartialFunction) -> np.ndarray:
    """err[x, y] = Pr(output != f(x,y)); zero on undefined cells."""
    err = np.zeros(f.table.shape)
    for x, y in itertools.product(range(f.nx), range(f.ny)):
        z = f(x, y)
        if z != BOTTOM:
            err[x, y] = 1.0 - table[x, y, z]
    return np.clip(err, 0.0, 1.0)


def _aggregate(err: np.ndarray, dist: InputDistribution, mode: str) -> float:
    if mode == "average":
        return float(np.sum(dist.weights * err))
    if mode == "worst-case-y":
        return float(np.max(dist.mu_x @ err))
    raise ValueError(f"unknown mode {mode!r}")


def eval_err(
    p,
    f: PartialFunction,
    dist: InputDistribution,
    mode: str = "average",
    method: str = "exact",
    trials: int = 0,
    rng: np.random.Generator | None = None,
) -> ErrorEstimate:
    """Distributional error of a protocol.

    ``mode`` is ``"average"`` (over mu) or ``"worst-case-y"`` (max over y,
    x drawn from mu_X).  ``method="monte-carlo"`` needs ``trials`` and ``rng``;
    the reported standard error is sqrt(p(1-p)/trials) (for worst-case-y that
    of the maximising column).
    """
    _check_alphabets(p, f, dist)
    if method == "exact":
        err = cell_errors(_exact_output_table(p, f), f)
        return ErrorEstimate(_aggregate(err, dist, mode))
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    if trials <= 0 or rng is None:
        raise ValueError("monte-carlo evaluation needs trials > 0 and an rng")

    def simulate(xs, ys):
        if isinstance(p, QuantumOneWayProtocol):
            table = p.output_table()
            cdf = np.cumsum(table[xs, ys], axis=1)
            u = rng.random(len(xs))[:, None]
            return np.minimum((u > cdf).sum(axis=1), f.d - 1)
        return p.run_batch(xs, ys, rng)

    if mode == "average":
        flat = dist.weights.reshape(-1)
        cells = rng.choice(flat.size, size=trials, p=flat / flat.sum())
        xs, ys = np.divmod(cells, f.ny)
        wrong = simulate(xs, ys) != f.table[xs, ys]
        phat = float(np.mean(wrong))
        return ErrorEstimate(phat, math.sqrt(phat * (1 - phat) / trials), trials)
    if mode == "worst-case-y":
        mx = dist.mu_x
        best = None
        for y in range(f.ny):
            xs = rng.choice(f.nx, size=trials, p=mx / mx.sum())
            ys = np.full(trials, y)
            defined = f.table[xs, ys] != BOTTOM
            wrong = (simulate(xs, ys) != f.table[xs, ys]) & defined
            phat = float(np.mean(wrong))
            if best is None or phat > best.value:
                best = ErrorEstimate(phat, math.sqrt(phat * (1 - phat) / trials), trials)
        return best
    raise ValueError(f"unknown mode {mode!r}")


def column_sparsity(f: PartialFunction) -> int:
    if f.d != 2:
        raise ValueError("column sparsity is only defined for binary outputs")
    zeros = np.sum(f.table == 0, axis=0)
    ones = np.sum(f.table == 1, axis=0)
    return int(np.max(np.minimum(zeros, ones)))


# -- builtin protocols ---------------------------------------------------------------

def _hamming_distance_min(codewords: np.ndarray) -> int:
    best = codewords.shape[1]
    for i in range(len(codewords)):
        diff = np.sum(codewords[i] != codewords[i + 1 :], axis=1)
        if diff.size:
            best = min(best, int(diff.min()))
    return best


def find_linear_code(n: int, m: int, min_distance: int, attempts: int = 2000, seed: int = 0) -> np.ndarray:
    """Codewords (2^n x m) of a binary linear [m, n] code with distance >= min_distance.

    Tries the systematic-plus-parity family first, then seeded random generators.
    """
    if min_distance > m - n + 1:  # Singleton bound
        raise ConfigurationError(f"no [{m},{n}] code has distance {min_distance}")
    msgs = np.array(list(itertools.product([0, 1], repeat=n)), dtype=int)
    rng = np.random.default_rng(seed)
    candidates = []
    if m > n:
        parity = np.ones((n, m - n), dtype=int)
        candidates.append(np.hstack([np.eye(n, dtype=int), parity]))
    for _ in range(attempts):
        candidates.append(rng.integers(0, 2, size=(n, m)))
    for gen in candidates:
        words = msgs @ gen % 2
        if len({w.tobytes() for w in words}) < len(words):
            continue
        if _hamming_distance_min(words) >= min_distance:
            return words
    raise ConfigurationError(f"no [{m},{n},{min_distance}] code found in {attempts} attempts")


def fingerprint_states(codewords: np.ndarray) -> list[PureState]:
    """(1/sqrt m) sum_i |i>|c_i(x)>, index layout 2*i + bit."""
    count, m = codewords.shape
    states = []
    for word in codewords:
        v = np.zeros(2 * m, dtype=complex)
        v[2 * np.arange(m) + word] = 1.0 / math.sqrt(m)
        states.append(PureState(v))
    return states


def make_fingerprint_protocol(n: int, code_length: int | None = None, min_rel_distance: float = 0.25) -> QuantumOneWayProtocol:
    """Quantum fingerprinting for EQUALITY on n-bit strings.

    Label 1 means "equal" (Bob's projector onto his own fingerprint accepted).
    ``code_length`` must be a power of two so the message is a whole number
    of qubits; it defaults to the smallest power of two above ``n``.
    """
    if not 1 <= n <= 12:
        raise ConfigurationError("fingerprinting supports 1 <= n <= 12")
    m = code_length or 2 ** math.ceil(math.log2(n + 1))
    if m & (m - 1):
        raise ConfigurationError("code length must be a power of two")
    dist = math.ceil(min_rel_distance * m - 1e-12)
    words = find_linear_code(n, m, max(dist, 1))
    states = fingerprint_states(words)
    dim = 2 * m
    decoders = []
    for phi in states:
        acc = qcore.proj(phi.amplitudes)
        decoders.append(Povm((np.eye(dim) - acc, acc), (0, 1)))
    achieved = _hamming_distance_min(words) / m
    meta = {
        "kind": "fingerprint",
        "n": n,
        "code_length": m,
        "relative_distance": achieved,
        "worst_case_error": (1 - achieved) ** 2,
    }
    return QuantumOneWayProtocol(tuple(states), tuple(decoders), dim_d=dim, d=2, metadata=meta)


def _labelled_projective_decoder(basis: np.ndarray, scores: np.ndarray, d: int) -> Povm:
    """Assign each basis vector to the label with the highest score."""
    dim = basis.shape[0]
    elements = [np.zeros((dim, dim), dtype=complex) for _ in range(d)]
    for k in range(dim):
        elements[int(np.argmax(scores[k]))] += qcore.proj(basis[:, k])
    return Povm(tuple(elements), tuple(range(d)))


def make_random_protocol(
    f: PartialFunction,
    dim_d: int,
    target_eps: float,
    rng: np.random.Generator,
    dist: InputDistribution | None = None,
    entangled: bool = False,
    dim_a_out: int = 2,
    dim_b: int = 2,
    mode: str = "average",
    budget: int = 500,
) -> QuantumOneWayProtocol:
    """Random protocol with exact error at most ``target_eps``.

    Encoders are Haar-random pure states (or Haar-random unitaries on
    A = A' (x) D acting on a random shared state).  Each decoder is a Haar-random
    orthonormal basis of Q whose vectors are labelled by the z carrying the
    largest mu-weighted overlap, i.e. a projective measurement.  Draws are
    repeated until the exact error meets the target.
    """
    if dim_d < 2:
        raise ConfigurationError("message dimension must be at least 2")
    dist = dist or InputDistribution.uniform_on(f)
    best = math.inf
    for attempt in range(budget):
        if entangled:
            dim_a = dim_a_out * dim_d
            shared = qcore.random_pure_state(dim_a * dim_b, rng)
            encoders = tuple(qcore.random_unitary(dim_a, rng) for _ in range(f.nx))
            kwargs = dict(shared=shared, dim_a=dim_a, dim_a_out=dim_a_out, dim_b=dim_b)
            shell = QuantumOneWayProtocol(encoders, (), dim_d=dim_d, d=f.d, **kwargs)
        else:
            encoders = tuple(qcore.random_pure_state(dim_d, rng) for _ in range(f.nx))
            kwargs = {}
            shell = QuantumOneWayProtocol(encoders, (), dim_d=dim_d, d=f.d)
        rhos = shell.message_states()
        qdim = shell.q_dim
        decoders = []
        for y in range(f.ny):
            basis = qcore.random_unitary(qdim, rng)
            scores = np.zeros((qdim, f.d))
            for x in range(f.nx):
                z = f(x, y)
                if z == BOTTOM:
                    continue
                w = dist.weights[x, y] + 1e-3 * dist.mu_x[x]
                overlaps = np.real(np.einsum("ik,ij,jk->k", np.conj(basis), rhos[x], basis))
                scores[:, z] += w * overlaps
            decoders.append(_labelled_projective_decoder(basis, scores, f.d))
        qp = QuantumOneWayProtocol(encoders, tuple(decoders), dim_d=dim_d, d=f.d, **kwargs)
        err = eval_err(qp, f, dist, mode=mode).value
        best = min(best, err)
        if err <= target_eps:
            meta = {"kind": "random", "achieved_error": err, "attempts": attempt + 1, "entangled": entangled}
            return QuantumOneWayProtocol(encoders, tuple(decoders), dim_d=dim_d, d=f.d, metadata=meta, **kwargs)
    raise GenerationFailedError(f"no protocol with error <= {target_eps} after {budget} draws", best)


def random_task(nx: int, ny: int, d: int, rng: np.random.Generator, product: bool = True, bottom_rate: float = 0.5):
    """Random partial function with a distribution supported on its defined cells.

    A product distribution leaves a few rows/columns at zero weight and only
    those may hold bottom cells; the non-product variant puts bottoms anywhere
    and renormalises a random joint over the defined cells.
    """
    table = rng.integers(0, d, size=(nx, ny))
    if product:
        mx = rng.random(nx) * (rng.random(nx) > 0.2)
        my = rng.random(ny) * (rng.random(ny) > 0.2)
        mx[rng.integers(nx)] += 0.5
        my[rng.integers(ny)] += 0.5
        dead = (mx[:, None] == 0) | (my[None, :] == 0)
        table[dead & (rng.random((nx, ny)) < bottom_rate)] = BOTTOM
        return PartialFunction(table, d), InputDistribution.from_marginals(mx, my)
    holes = rng.random((nx, ny)) < bottom_rate * 0.3
    holes[0, 0] = False
    table[holes] = BOTTOM
    w = rng.random((nx, ny)) * ~holes
    return PartialFunction(table, d), InputDistribution(w / w.sum())


# -- file formats ---------------------------------------------------------------------

def task_to_dict(f: PartialFunction, dist: InputDistribution | None = None) -> dict:
    out = {
        "nx": f.nx,
        "ny": f.ny,
        "d": f.d,
        "table": f.table.tolist(),
    }
    if dist is not None:
        out["weights"] = dist.weights.tolist()
        out["product"] = bool(dist.product)
    return out


def task_from_dict(data: dict) -> tuple[PartialFunction, InputDistribution | None]:
    table = np.array(data["table"], dtype=int)
    if table.shape != (int(data["nx"]), int(data["ny"])):
        raise ValueError("table shape disagrees with nx, ny")
    f = PartialFunction(table, int(data["d"]))
    dist = None
    if "weights" in data:
        dist = InputDistribution(np.array(data["weights"], dtype=float), product=bool(data.get("product", False)))
        dist.check_support(f)
    return f, dist


def protocol_to_dict(qp: QuantumOneWayProtocol) -> dict:
    if qp.shared is None:
        enc = []
        for e in qp.encoders:
            if isinstance(e, PureState):
                enc.append({"pure": qcore.matrix_to_dict(e.amplitudes.reshape(-1, 1))})
            else:
                enc.append({"density": qcore.matrix_to_dict(e.matrix)})
    else:
        enc = [{"isometry": qcore.matrix_to_dict(u)} for u in qp.encoders]
    return {
        "dim_d": qp.dim_d,
        "d": qp.d,
        "dim_a": qp.dim_a,
        "dim_a_out": qp.dim_a_out,
        "dim_b": qp.dim_b,
        "purified": qp.purified,
        "shared": None if qp.shared is None else qcore.matrix_to_dict(qp.shared.amplitudes.reshape(-1, 1)),
        "encoders": enc,
        "decoders": [[qcore.matrix_to_dict(e) for e in dec.elements] for dec in qp.decoders],
        "metadata": qp.metadata,
    }


def protocol_from_dict(data: dict) -> QuantumOneWayProtocol:
    encoders = []
    for e in data["encoders"]:
        if "pure" in e:
            encoders.append(PureState(qcore.matrix_from_dict(e["pure"]).reshape(-1)))
        elif "density" in e:
            encoders.append(DensityOperator(qcore.matrix_from_dict(e["density"])))
        else:
            encoders.append(qcore.matrix_from_dict(e["isometry"]))
    decoders = tuple(
        Povm(tuple(qcore.matrix_from_dict(m) for m in dec), tuple(range(int(data["d"])))) for dec in data["decoders"]
    )
    shared = data.get("shared")
    return QuantumOneWayProtocol(
        tuple(encoders),
        decoders,
        dim_d=int(data["dim_d"]),
        d=int(data["d"]),
        shared=None if shared is None else PureState(qcore.matrix_from_dict(shared).reshape(-1)),
        dim_a=int(data.get("dim_a", 1)),
        dim_a_out=int(data.get("dim_a_out", 1)),
        dim_b=int(data.get("dim_b", 1)),
        purified=bool(data.get("purified", False)),
        metadata=dict(data.get("metadata", {})),
    )


def save_json(path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
