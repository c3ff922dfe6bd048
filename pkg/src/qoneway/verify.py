"""Seeded invariant suites behind ``qoneway verify``.

Each suite returns rows of (suite, check, measured, tolerance, passed) where
``measured`` is the worst value seen over the suite's random draws.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import comm, convert, oneshot, pgm, qcore, shadows

SUITES = ("qcore", "pgm", "shadows", "oneshot", "convert")


@dataclass
class CheckRow:
    suite: str
    check: str
    measured: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _row(suite, check, measured, tolerance, passed=None) -> CheckRow:
    measured = float(measured)
    ok = measured <= tolerance if passed is None else passed
    return CheckRow(suite, check, measured, float(tolerance), bool(ok))


def suite_qcore(seed: int = 0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    inv_dev = tri = pur = nai = 0.0
    sym = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 6))
        g = rng.standard_normal((dim, dim - 1)) + 1j * rng.standard_normal((dim, dim - 1))
        m = g @ qcore.dagger(g)
        b = qcore.mat_inv_sqrt(m)
        inv_dev = max(inv_dev, np.linalg.norm(b @ m @ b - qcore.support_projector(m)))
        a, bb, c = (qcore.random_density(dim, rng) for _ in range(3))
        sym = max(sym, abs(qcore.trace_distance(a, bb) - qcore.trace_distance(bb, a)))
        tri = max(tri, qcore.trace_distance(a, c) - qcore.trace_distance(a, bb) - qcore.trace_distance(bb, c))
        psi = qcore.canonical_purification(a)
        pur = max(pur, np.linalg.norm(qcore.partial_trace(psi, (dim, dim), 1).matrix - a.matrix))
        povm = qcore.random_povm(dim, int(rng.integers(2, 4)), rng)
        dil = qcore.naimark_dilate(povm)
        nai = max(nai, np.max(np.abs(dil.projective.probabilities(dil.embed(a)) - povm.probabilities(a))))
    return [
        _row("qcore", "mat_inv_sqrt B m B = support projector", inv_dev, 1e-8),
        _row("qcore", "trace distance symmetry", sym, 1e-12),
        _row("qcore", "trace distance triangle inequality", tri, 1e-9),
        _row("qcore", "partial trace of canonical purification", pur, 1e-8),
        _row("qcore", "Naimark dilation preserves probabilities", nai, 1e-9),
    ]


def suite_pgm(seed: int = 0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    worst_opt = worst_multi = worst_sum = -math.inf
    for _ in range(200):
        dim = int(rng.integers(2, 4))
        p0 = float(rng.uniform(0.05, 0.95))
        r0, r1 = qcore.random_density(dim, rng), qcore.random_density(dim, rng)
        ens = pgm.Ensemble.from_lists((p0, 1 - p0), (r0, r1))
        meas = pgm.build_pgm(ens)
        worst_opt = max(worst_opt, pgm.g_function(pgm.helstrom_opt(p0, r0, 1 - p0, r1), 2) - pgm.guess_prob(ens, meas))
        worst_sum = max(worst_sum, np.linalg.norm(sum(meas.elements) - np.eye(dim)))
    for _ in range(50):
        k, dim = int(rng.integers(3, 5)), int(rng.integers(2, 4))
        w = rng.dirichlet(np.ones(k))
        ens = pgm.Ensemble.from_lists(w, [qcore.random_density(dim, rng, rank=1) for _ in range(k)])
        p_pgm = pgm.guess_prob(ens, pgm.build_pgm(ens))
        other = pgm.guess_prob(ens, qcore.random_povm(dim, k, rng))
        if other >= 1 / k:
            worst_multi = max(worst_multi, pgm.g_function(other, k) - p_pgm)
    return [
        _row("pgm", "g(p_opt) <= p_pgm", worst_opt, 1e-9),
        _row("pgm", "g(p_M) <= p_pgm for d > 2", max(worst_multi, 0.0) if worst_multi > -math.inf else 0.0, 1e-9),
        _row("pgm", "PGM completeness", worst_sum, 1e-9),
    ]


def suite_shadows(seed: int = 0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    design = 0.0
    for n in (1, 2, 3):
        tab = shadows.enumerate_stabilizer_states(n)
        frame = tab.states.T @ np.conj(tab.states)
        design = max(design, np.linalg.norm(frame - tab.count / tab.dim * np.eye(tab.dim)))
    bias = var_excess = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 3))
        dim = 2**n
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        a = 0.5 * (g + qcore.dagger(g))
        psi = qcore.random_pure_state(dim, rng)
        mean, var = shadows.exact_moments(a, psi)
        bias = max(bias, abs(mean - np.real(np.vdot(psi.amplitudes, a @ psi.amplitudes))))
        var_excess = max(var_excess, var - 4 * np.linalg.norm(a) ** 2)
    bits = max(shadows.enumerate_stabilizer_states(n).index_bits() - (2 * n * n + 3 * n) for n in (1, 2, 3, 4))
    return [
        _row("shadows", "1-design frame deviation", design, 1e-8),
        _row("shadows", "exact unbiasedness max deviation", bias, 1e-8),
        _row("shadows", "variance minus 4||A||_F^2", var_excess, 0.0),
        _row("shadows", "index bits minus (2n^2 + 3n)", bits, 0.0),
    ]


def _random_joint(rng, nx=None, nc=None) -> oneshot.ClassicalJoint:
    nx = nx or int(rng.integers(2, 6))
    nc = nc or int(rng.integers(2, 6))
    p = rng.random((nx, nc)) ** 3
    return oneshot.ClassicalJoint(p / p.sum())


def suite_oneshot(seed: int = 0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    mono = dim_bound = rej = length = 0.0
    for _ in range(50):
        j = _random_joint(rng)
        lam, _ = oneshot.imax_classical(j)
        stoch = rng.random((j.p.shape[1], int(rng.integers(2, 6))))
        stoch /= stoch.sum(axis=1, keepdims=True)
        post = oneshot.ClassicalJoint(j.p @ stoch)
        mono = max(mono, oneshot.imax_classical(post)[0] - lam)
        dim_bound = max(dim_bound, lam - math.log2(j.p.shape[1]))
        plan = oneshot.build_compression_plan(j, 0.05)
        rej = max(rej, plan.rejection_probability - 0.05)
        length = max(length, plan.length - plan.length_bound)
    return [
        _row("oneshot", "I_max monotone under post-processing", mono, 1e-9),
        _row("oneshot", "I_max <= log2 |C|", dim_bound, 1e-9),
        _row("oneshot", "rejection probability minus eta", rej, 0.0),
        _row("oneshot", "message length minus its bound", length, 0.0),
    ]


def suite_convert(seed: int = 0) -> list[CheckRow]:
    root = np.random.SeedSequence(seed)
    split = 0.0
    slack = -math.inf
    for ss in root.spawn(4):
        rng = np.random.default_rng(ss)
        d = int(rng.integers(2, 4))
        f, dist = comm.random_task(int(rng.integers(3, 7)), int(rng.integers(2, 6)), d, rng)
        qp = comm.make_random_protocol(f, 4, 1 - 1 / d, rng, dist=dist, mode="worst-case-y")
        split = max(split, convert.pgm_split_check(qp, f, dist))
        for mode in ("average", "worst-case-y"):
            _, rep = convert.theorem1_convert(qp, f, dist, 0.05, mode=mode)
            slack = max(slack, rep.final_error_analytic - rep.bound)
    return [
        _row("convert", "PGM splitting identity deviation", split, 1e-8),
        _row("convert", "analytic final error minus bound", slack, 0.0),
    ]


def run_suite(name: str, seed: int = 0) -> list[CheckRow]:
    if name == "all":
        rows = []
        for s in SUITES:
            rows.extend(run_suite(s, seed))
        return rows
    try:
        fn = globals()[f"suite_{name}"]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}") from None
    return fn(seed)
