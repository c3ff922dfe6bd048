"""Quantum-to-classical conversion of one-way protocols.

Two pipelines:

* product inputs: Alice measures her message with the pretty good
  measurement for X, compresses the outcome with shared randomness, and Bob
  answers f(c', y);
* general inputs, binary f: Alice sends a classical shadow of her (pure)
  message and Bob estimates the weight of his message on a low-rank
  projector, thresholding at 1/2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import comm, oneshot, pgm, qcore, shadows
from .comm import BOTTOM, ClassicalOneWayProtocol, InputDistribution, PartialFunction, QuantumOneWayProtocol, SharedRandomness


class PreconditionError(ValueError):
    pass


class VacuousBoundWarning(UserWarning):
    pass


@dataclass
class BoundCheck:
    name: str
    bound: float
    measured: float
    tolerance: float
    passed: bool

    @classmethod
    def leq(cls, name: str, measured: float, bound: float, tolerance: float = 0.0) -> "BoundCheck":
        return cls(name, float(bound), float(measured), float(tolerance), bool(measured <= bound + tolerance))


def _answer_table(channel: np.ndarray, f: PartialFunction) -> np.ndarray:
    """probs[x, y, z] when Bob answers f(c, y) (bottom -> 0) for c ~ channel[x]."""
    answers = np.where(f.table == BOTTOM, 0, f.table)  # answers[c, y]
    out = np.zeros((f.nx, f.ny, f.d))
    for z in range(f.d):
        out[:, :, z] = channel @ (answers == z)
    return out


def _aggregate_errors(table: np.ndarray, f: PartialFunction, dist: InputDistribution, mode: str) -> float:
    err = comm.cell_errors(table, f)
    if mode == "average":
        return float(np.sum(dist.weights * err))
    return float(np.max(dist.mu_x @ err))


# -- product distributions -------------------------------------------------------------

class CompressedPgmProtocol(ClassicalOneWayProtocol):
    """Alice: PGM outcome c ~ p(.|x), compressed; Bob: f(c', y)."""

    def __init__(self, plan: oneshot.CompressionPlan, f: PartialFunction, metadata=None):
        self.plan = plan
        self.f = f
        super().__init__(
            SharedRandomness(lambda rng: oneshot.draw_shared(plan, rng)),
            lambda x, r, rng: oneshot.encode(plan, x, r, rng),
            self._answer,
            max_length=plan.length,
            private_random=True,
            metadata=metadata,
        )

    def _answer(self, m, r, y):
        z = self.f(oneshot.decode(self.plan, m, r), y)
        return 0 if z == BOTTOM else z

    def run_batch(self, xs, ys, rng):
        _, decoded = oneshot.run_compression_batch(self.plan, xs, rng)
        z = self.f.table[decoded, np.asarray(ys, dtype=int)]
        return np.where(z == BOTTOM, 0, z)


@dataclass
class Theorem1Report:
    mode: str
    entangled: bool
    eps: float
    eta: float
    d: int
    message_qubits: float
    imax_budget: float
    imax_measured: float
    pgm_stage_error: float
    final_error_analytic: float
    final_error: float
    final_error_stderr: float
    trials: int
    bound: float
    message_length: int
    length_bound: float
    candidates: int
    vacuous: bool
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Theorem1Report":
        data = dict(data)
        data["checks"] = [BoundCheck(**c) for c in data.get("checks", [])]
        return cls(**data)


def theorem1_bound(eps: float, d: int, eta: float) -> float:
    return 2 * eps - d * eps**2 / (d - 1) + eta


def pgm_channel(qp: QuantumOneWayProtocol, mu_x: np.ndarray) -> np.ndarray:
    """p(c|x) = Tr(E^pgm_c rho^x_Q) for the X-guessing PGM of {mu_X(x), rho^x_Q}."""
    rhos = qp.message_states()
    ens = pgm.Ensemble.from_lists(mu_x / mu_x.sum(), rhos)
    meas = pgm.build_pgm(ens)
    return np.clip(np.array([meas.probabilities(r) for r in rhos]), 0.0, 1.0)


def theorem1_convert(
    qp: QuantumOneWayProtocol,
    f: PartialFunction,
    dist: InputDistribution,
    eta: float,
    mode: str = "average",
    trials: int = 0,
    rng: np.random.Generator | None = None,
    sigmas: float = 4.0,
) -> tuple[CompressedPgmProtocol, Theorem1Report]:
    """Convert a (possibly entanglement-assisted) protocol under a product distribution.

    The measured error is Monte Carlo over ``trials`` runs of the literal
    compressed protocol when ``trials > 0``; the analytic error of the
    compressed channel is always reported.  The bound check allows
    ``sigmas`` standard errors.
    """
    if not dist.is_product():
        raise PreconditionError("the PGM conversion needs a product input distribution")
    dist.check_support(f)
    eps = comm.eval_err(qp, f, dist, mode=mode).value
    d = f.d
    vacuous = eps > 1 - 1 / d + 1e-12
    if vacuous:
        warnings.warn(f"protocol error {eps:.4f} exceeds 1 - 1/d; the bound is vacuous", VacuousBoundWarning)
    mu_x = dist.mu_x
    channel = pgm_channel(qp, mu_x)
    joint = oneshot.ClassicalJoint.from_channel(mu_x, channel)
    plan = oneshot.build_compression_plan(joint, eta)
    a = qp.message_qubits
    budget = 2 * a if qp.entangled else a

    pgm_err = _aggregate_errors(_answer_table(channel, f), f, dist, mode)
    analytic = _aggregate_errors(_answer_table(plan.output_channel(), f), f, dist, mode)
    protocol = CompressedPgmProtocol(plan, f, metadata={"pipeline": "theorem1", "mode": mode})
    if trials > 0:
        if rng is None:
            raise ValueError("monte-carlo evaluation needs an rng")
        est = comm.eval_err(protocol, f, dist, mode=mode, method="monte-carlo", trials=trials, rng=rng)
    else:
        est = comm.ErrorEstimate(analytic, 0.0, 0)

    bound = theorem1_bound(eps, d, eta)
    length_bound = budget + math.ceil(math.log2(math.log(1 / eta))) + 2
    checks = [
        BoundCheck.leq("final error <= 2eps - d eps^2/(d-1) + eta", est.value, bound, sigmas * est.stderr),
        BoundCheck.leq("analytic final error <= bound", analytic, bound, 1e-12),
        BoundCheck.leq("pgm-stage error <= 1 - g(1 - eps)", pgm_err, 1 - pgm.g_function(1 - eps, d), 1e-9),
        BoundCheck.leq("I_max(X:C) <= budget", plan.lam, budget, 1e-9),
        BoundCheck.leq("message length <= budget + ceil(log2 ln 1/eta) + 2", plan.length, length_bound),
    ]
    report = Theorem1Report(
        mode=mode,
        entangled=qp.entangled,
        eps=eps,
        eta=eta,
        d=d,
        message_qubits=a,
        imax_budget=budget,
        imax_measured=plan.lam,
        pgm_stage_error=pgm_err,
        final_error_analytic=analytic,
        final_error=est.value,
        final_error_stderr=est.stderr,
        trials=est.trials,
        bound=bound,
        message_length=plan.length,
        length_bound=length_bound,
        candidates=plan.N,
        vacuous=vacuous,
        checks=checks,
    )
    return protocol, report


def pgm_split_check(qp: QuantumOneWayProtocol, f: PartialFunction, dist: InputDistribution) -> float:
    """max over y, z of || E^{pgm,y}_z - sum_{x in S^y_z} E^pgm_x ||_F.

    Both sides use the bare A^{-1/2} A_part A^{-1/2} elements.  Columns with
    mu_Y(y) = 0 are skipped: their classes need not cover supp(mu_X).
    """
    if not dist.is_product():
        raise PreconditionError("splitting identity is stated for product distributions")
    mu_x = dist.mu_x
    rhos = qp.message_states()
    parts_x = [w * r for w, r in zip(mu_x, rhos)]
    avg = sum(parts_x)
    e_x = pgm.pgm_elements(parts_x, avg)
    worst = 0.0
    for y in range(f.ny):
        if dist.mu_y[y] <= 0:
            continue
        classes = [f.preimage(y, z) for z in range(f.d)]
        classes = [c for c in classes if c]
        parts_z = [sum(parts_x[x] for x in c) for c in classes]
        e_z = pgm.pgm_elements(parts_z, sum(parts_z))
        for cls, ez in zip(classes, e_z):
            dev = np.linalg.norm(ez - sum(e_x[x] for x in cls))
            worst = max(worst, float(dev))
    return worst


# -- general distributions via classical shadows -------------------------------------

@dataclass(frozen=True, eq=False)
class PureProtocolView:
    """Pure messages on n qubits with projective binary decoders (E0, E1) per y."""

    states: np.ndarray  # (nx, 2^n)
    decoders: tuple  # ((E0, E1), ...)
    n: int
    purified: bool
    dilated: bool
    padded: bool


def prepare_pure_protocol(qp: QuantumOneWayProtocol) -> PureProtocolView:
    """Bring a protocol to pure messages and projective decoders.

    Mixed messages are replaced by their canonical purification (decoders act
    as E (x) I); non-projective decoders are Naimark-dilated with a |0>
    ancilla appended to every message; finally the register is zero-padded
    to a power of two.
    """
    if qp.entangled:
        raise PreconditionError("the shadow conversion takes protocols without shared entanglement")
    if qp.d != 2:
        raise PreconditionError("the shadow conversion needs binary outputs")
    pure = [qp.pure_message(x) for x in range(qp.nx)]
    purified = any(v is None for v in pure)
    decs = [tuple(dec.elements) for dec in qp.decoders]
    if purified:
        states = [qcore.canonical_purification(qcore.DensityOperator(qp.message_state(x))).amplitudes for x in range(qp.nx)]
        eye = np.eye(qp.dim_d)
        decs = [tuple(np.kron(e, eye) for e in dec) for dec in decs]
    else:
        states = [np.asarray(v) for v in pure]
    dilated = False
    if not all(qcore.Povm(dec, (0, 1)).is_projective() for dec in decs):
        dilated = True
        new_decs = []
        for dec in decs:
            dil = qcore.naimark_dilate(qcore.Povm(dec, (0, 1)))
            new_decs.append(tuple(dil.projective.elements))
        states = [np.kron(v, qcore.ket(0, 2)) for v in states]
        decs = new_decs
    dim = len(states[0])
    n = max(1, math.ceil(math.log2(dim)))
    padded = 2**n != dim
    if padded:
        pad = 2**n - dim
        states = [np.concatenate([v, np.zeros(pad)]) for v in states]
        decs = [
            (
                np.block([[e0, np.zeros((dim, pad))], [np.zeros((pad, dim)), np.eye(pad)]]),
                np.block([[e1, np.zeros((dim, pad))], [np.zeros((pad, dim)), np.zeros((pad, pad))]]),
            )
            for e0, e1 in decs
        ]
    if n > shadows.MAX_QUBITS:
        raise shadows.UnsupportedSizeError(f"message register has {n} qubits; at most {shadows.MAX_QUBITS} supported")
    return PureProtocolView(np.array(states, dtype=complex), tuple(decs), n, purified, dilated, padded)


@dataclass(frozen=True)
class TildeProjectors:
    projectors: tuple  # per y: (tilde E0, tilde E1)
    ranks: tuple  # per y: (rank0, rank1)


def build_tilde_projectors(view: PureProtocolView, f: PartialFunction) -> TildeProjectors:
    """Projectors onto span{E^y_b |psi^x> : x in S^y_b} with their stated properties checked."""
    projectors, ranks = [], []
    for y, dec in enumerate(view.decoders):
        pair, rk = [], []
        for b in (0, 1):
            members = f.preimage(y, b)
            e = dec[b]
            dim = e.shape[0]
            if members:
                vecs = np.array([e @ view.states[x] for x in members]).T
                gram = vecs @ qcore.dagger(vecs)
                tilde = qcore.support_projector(gram)
            else:
                tilde = np.zeros((dim, dim), dtype=complex)
            rank = int(round(np.real(np.trace(tilde))))
            if not qcore.loewner_leq(tilde, e):
                raise AssertionError(f"tilde projector for y={y}, b={b} is not below E^y_b")
            for x in members:
                psi = view.states[x]
                if abs(np.vdot(psi, tilde @ psi) - np.vdot(psi, e @ psi)) > qcore.ATOL:
                    raise AssertionError(f"tilde projector changes acceptance of x={x}, y={y}")
            if abs(np.linalg.norm(tilde) ** 2 - rank) > 1e-8 or rank > len(members):
                raise AssertionError(f"rank bound violated for y={y}, b={b}")
            pair.append(tilde)
            rk.append(rank)
        projectors.append(tuple(pair))
        ranks.append(tuple(rk))
    return TildeProjectors(tuple(projectors), tuple(ranks))


def choose_b(f: PartialFunction) -> list[int]:
    """b_y = the smaller preimage class (ties -> 0)."""
    out = []
    for y in range(f.ny):
        s0, s1 = len(f.preimage(y, 0)), len(f.preimage(y, 1))
        out.append(0 if s0 <= s1 else 1)
    return out


def _sample_categorical(cdf: np.ndarray, shape, rng: np.random.Generator) -> np.ndarray:
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return np.minimum(idx, len(cdf) - 1)


class ShadowProtocol(ClassicalOneWayProtocol):
    """Alice sends T snapshot indices; Bob thresholds a median-of-means estimate.

    With ``snapshot_plan`` set each snapshot is sent through the one-shot
    compression scheme instead of verbatim.
    """

    def __init__(self, snap_probs, values, b, groups, group_size, table, snapshot_plan=None, metadata=None):
        self.snap_probs = snap_probs  # [x, s]
        self.values = values  # [y, s] = d'(tilde E^y_{b_y}, s)
        self.b = np.asarray(b)
        self.groups = groups
        self.group_size = group_size
        self.T = groups * group_size
        self.table = table
        self.snapshot_plan = snapshot_plan
        bits = table.index_bits()
        if snapshot_plan is None:
            shared = comm.NO_RANDOMNESS
            max_len = self.T * bits
        else:
            shared = SharedRandomness(
                lambda rng: [oneshot.draw_shared(snapshot_plan, rng) for _ in range(self.T)]
            )
            max_len = self.T * snapshot_plan.length
        super().__init__(shared, self._send, self._receive, max_length=max_len, private_random=True, metadata=metadata)

    def _send(self, x, r, rng):
        if self.snapshot_plan is None:
            idx = rng.choice(self.table.count, size=self.T, p=self.snap_probs[x])
            bits = self.table.index_bits()
            return "".join(format(int(i), f"0{bits}b") for i in idx)
        # each slot simulates the channel x -> snapshot through rejection sampling
        return "".join(oneshot.encode(self.snapshot_plan, x, cand, rng) for cand in r)

    def _receive(self, m, r, y):
        if self.snapshot_plan is None:
            bits = self.table.index_bits()
            idx = [int(m[i : i + bits], 2) for i in range(0, len(m), bits)]
        else:
            ell = self.snapshot_plan.length
            idx = [oneshot.decode(self.snapshot_plan, m[k * ell : (k + 1) * ell], r[k]) for k in range(self.T)]
        est = shadows.median_of_means(self.values[y][np.asarray(idx)], self.groups)
        return self.decide(est, y)

    def decide(self, est, y):
        b = self.b[y]
        return np.where(np.asarray(est) >= 0.5, b, 1 - b)

    def decoded_probs(self) -> np.ndarray:
        """Exact law of the snapshot index Bob ends up reading, per x."""
        if self.snapshot_plan is None:
            return self.snap_probs
        r = self.snapshot_plan.rejection_probability
        return (1 - r) * self.snap_probs + r * self.snapshot_plan.sigma[None, :]

    def run_batch(self, xs, ys, rng, chunk: int = 64):
        """Batched runs drawing Bob's snapshot indices from their exact law."""
        xs = np.asarray(xs, dtype=int)
        ys = np.asarray(ys, dtype=int)
        out = np.empty(len(xs), dtype=int)
        probs = self.decoded_probs()
        for x in np.unique(xs):
            cdf = np.cumsum(probs[x])
            cdf[-1] = 1.0
            where = np.flatnonzero(xs == x)
            for start in range(0, len(where), chunk):
                sel = where[start : start + chunk]
                idx = _sample_categorical(cdf, (len(sel), self.T), rng)
                vals = self.values[ys[sel][:, None], idx]
                est = shadows.batch_median_of_means(vals, self.groups)
                out[sel] = self.decide(est, ys[sel])
        return out


@dataclass
class Theorem2Report:
    compression: str
    eps: float
    eps_declared: float | None
    eta: float
    column_sparsity: int
    K: int
    ranks: list
    b: list
    n_qubits: int
    purified: bool
    dilated: bool
    groups: int
    group_size: int
    T: int
    good_mass: float
    p1_error: float | None
    p1_stderr: float | None
    final_error: float | None
    final_stderr: float | None
    trials: int
    message_length: int
    length_bound: float
    imax_snapshot: float
    information_bound: float
    snapshot_candidates: int | None
    complexity_stated: float
    complexity_in_proof: float
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Theorem2Report":
        data = dict(data)
        data["checks"] = [BoundCheck(**c) for c in data.get("checks", [])]
        return cls(**data)


def _snapshot_budget(K: int, eta: float) -> tuple[int, int]:
    return shadows.shadow_budget(max(K, 1), eta, eta)


def theorem2_convert(
    qp: QuantumOneWayProtocol,
    f: PartialFunction,
    dist: InputDistribution,
    eta: float,
    compression: str = "none",
    trials: int = 0,
    rng: np.random.Generator | None = None,
    eps_declared: float | None = None,
    group_size: int | None = None,
    sigmas: float = 3.0,
) -> tuple[ShadowProtocol, Theorem2Report]:
    """Convert a protocol for binary f under an arbitrary distribution via classical shadows.

    ``compression`` is ``"none"`` (snapshot indices sent verbatim, length
    bound only) or ``"per-snapshot"`` (every snapshot goes through the
    one-shot compression with budget eta / (2T)).  ``group_size`` overrides
    the per-group snapshot count (the number of groups stays ceil(8 ln 1/eta)).
    """
    if compression not in ("none", "per-snapshot"):
        raise ValueError(f"unknown compression mode {compression!r}")
    if f.d != 2:
        raise PreconditionError("the shadow conversion needs binary f")
    dist.check_support(f)
    eps = comm.eval_err(qp, f, dist).value
    for e in (eps, eps_declared):
        if e is not None and not e / eta + eta < 0.5:
            raise PreconditionError(f"eps/eta + eta < 0.5 fails for eps={e}, eta={eta}")

    view = prepare_pure_protocol(qp)
    tildes = build_tilde_projectors(view, f)
    K = max(min(r) for r in tildes.ranks)
    cs = comm.column_sparsity(f)
    b = choose_b(f)
    table = shadows.enumerate_stabilizer_states(view.n)
    values = np.array([shadows.snapshot_values(tildes.projectors[y][b[y]], table) for y in range(f.ny)])
    snap = np.array([shadows.snapshot_distribution(qcore.proj(v), table) for v in view.states])
    groups, size = _snapshot_budget(K, eta)
    if group_size is not None:
        size = int(group_size)
    T = groups * size

    # Markov: inputs on which the quantum protocol errs at most eps/eta
    err = comm.cell_errors(qp.output_table(), f)
    good_mass = float(np.sum(dist.weights[err <= eps / eta + 1e-15]))

    snap_joint = oneshot.ClassicalJoint.from_channel(dist.mu_x, snap)
    imax_snap, _ = oneshot.imax_classical(snap_joint)
    meta = {"pipeline": "theorem2"}
    p1 = ShadowProtocol(snap, values, b, groups, size, table, metadata=meta)
    plan = None
    final = None
    if compression == "per-snapshot":
        plan = oneshot.build_compression_plan(snap_joint, eta / (2 * T))
        final = ShadowProtocol(snap, values, b, groups, size, table, snapshot_plan=plan, metadata=meta)

    if trials > 0:
        if rng is None:
            raise ValueError("monte-carlo evaluation needs an rng")
        p1_est = comm.eval_err(p1, f, dist, method="monte-carlo", trials=trials, rng=rng)
        final_est = (
            comm.eval_err(final, f, dist, method="monte-carlo", trials=trials, rng=rng) if final is not None else None
        )
    else:
        p1_est, final_est = None, None

    a = view.n
    index_bits = table.index_bits()
    if plan is None:
        length = T * index_bits
        length_bound = T * (2 * a * a + 3 * a)
    else:
        length = T * plan.length
        length_bound = T * (imax_snap + math.log2(math.log(2 * T / eta)) + 2)
    checks = [
        BoundCheck.leq("K <= CS(f)", K, cs),
        BoundCheck.leq("eps/eta + eta < 0.5", eps / eta + eta, 0.5 - 1e-15),
        BoundCheck("good-set mass >= 1 - eta", 1 - eta, good_mass, 1e-12, good_mass >= 1 - eta - 1e-12),
        BoundCheck.leq("snapshot index bits <= 2n^2 + 3n", index_bits, 2 * a * a + 3 * a),
        BoundCheck.leq("I_max(X:S) <= T a", T * imax_snap, T * a, 1e-9),
        BoundCheck.leq("message length <= mode bound", length, length_bound),
    ]
    if trials > 0:
        checks.append(BoundCheck.leq("P1 error <= 2 eta", p1_est.value, 2 * eta, sigmas * p1_est.stderr))
        if final_est is not None:
            checks.append(BoundCheck.leq("final error <= 3 eta", final_est.value, 3 * eta, sigmas * final_est.stderr))
    report = Theorem2Report(
        compression=compression,
        eps=eps,
        eps_declared=eps_declared,
        eta=eta,
        column_sparsity=cs,
        K=K,
        ranks=[list(r) for r in tildes.ranks],
        b=list(b),
        n_qubits=a,
        purified=view.purified,
        dilated=view.dilated,
        groups=groups,
        group_size=size,
        T=T,
        good_mass=good_mass,
        p1_error=None if p1_est is None else p1_est.value,
        p1_stderr=None if p1_est is None else p1_est.stderr,
        final_error=None if final_est is None else final_est.value,
        final_stderr=None if final_est is None else final_est.stderr,
        trials=trials,
        message_length=length,
        length_bound=length_bound,
        imax_snapshot=imax_snap,
        information_bound=T * a,
        snapshot_candidates=None if plan is None else plan.N,
        complexity_stated=cs * a / eta**3,
        complexity_in_proof=K / eta**2 * math.log(1 / eta),
        checks=checks,
    )
    return (final or p1), report
