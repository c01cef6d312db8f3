"""Measurement sampling and the perp-hit test against full mixing.

If the stream state is fully mixed, every basis vector is observed with
probability ``1/2^N``. If it is supported in a subspace ``F_S``, vectors
orthogonal to ``F_S`` are never observed. Counting outcomes in ``F_S``'s
complement therefore gives a one-sided binomial test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Collection, Sequence

import numpy as np

from . import engine
from .qlin import TOL, DensityMatrix, Subspace, complement

CLIP = 1e-12

PERP = "perp"
IN_FS = "in-F_S"
SUPPORT = "support"

__all__ = [
    "MeasurementBasis",
    "Decision",
    "TestResult",
    "Discrimination",
    "BoundVacuousWarning",
    "outcome_probabilities",
    "sample_outcomes",
    "find_distinguishing_basis",
    "binom_lower_tail",
    "perp_hit_test",
    "theory_discrimination",
]


class BoundVacuousWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    vectors: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.complex128)
        n = vecs.shape[0]
        if vecs.ndim != 2 or vecs.shape != (n, n):
            raise ValueError("basis must be a square matrix of column vectors")
        if np.max(np.abs(vecs.conj().T @ vecs - np.eye(n))) > TOL:
            raise ValueError("basis columns are not orthonormal")
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} basis vectors")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def canonical(cls, n_qubits: int) -> "MeasurementBasis":
        n = 2**n_qubits
        labels = [format(k, f"0{n_qubits}b") for k in range(n)]
        return cls(np.eye(n), labels)

    def indices(self, labels: Collection[str]) -> np.ndarray:
        wanted = set(labels)
        return np.array([k for k, lab in enumerate(self.labels) if lab in wanted], dtype=np.int64)


class Decision(str, Enum):
    COLLAPSE_REJECTED = "collapse_rejected"
    COLLAPSE_NOT_REJECTED = "collapse_not_rejected"


@dataclass(frozen=True)
class TestResult:
    n_samples: int
    perp_hits: int
    p_value_under_copenhagen: float
    decision: Decision
    alpha: float
    p0: float

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.decision is Decision.COLLAPSE_REJECTED


def outcome_probabilities(rho: DensityMatrix, basis: MeasurementBasis) -> np.ndarray:
    """Born probabilities ``<b_k|rho|b_k>``, dust below 1e-12 clipped to zero."""
    if rho.dim != basis.dim:
        raise ValueError(f"rho has dim {rho.dim}, basis has dim {basis.dim}")
    b = basis.vectors
    p = np.einsum("ak,ab,bk->k", b.conj(), rho.matrix, b).real
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"outcome probabilities sum to {total!r}; rho looks corrupted")
    p = np.where(p < CLIP, 0.0, p)
    return p / p.sum()


def sample_outcomes(rho: DensityMatrix, basis: MeasurementBasis, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. outcome indices from the Born distribution."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = outcome_probabilities(rho, basis)
    rng = np.random.default_rng(seed)
    return rng.choice(basis.dim, size=n, p=p)


def find_distinguishing_basis(rho: DensityMatrix, fs: Subspace | None = None) -> MeasurementBasis:
    """Basis in which ``rho``'s outcome statistics stand out from uniform.

    With ``fs``, the basis is ``fs`` followed by its complement, labelled
    ``"in-F_S"`` and ``"perp"``. Without it, the eigenbasis of ``rho`` is
    returned in descending eigenvalue order (the same as the eigenbasis of
    ``rho - I/n``); numerically-null directions are labelled ``"perp"`` and
    the rest ``"support"``.
    """
    if fs is not None:
        if fs.parent_dim != rho.dim:
            raise ValueError("F_S and rho live in different spaces")
        perp = complement(fs)
        vecs = np.column_stack([fs.basis, perp.basis])
        labels = [IN_FS] * fs.dim + [PERP] * perp.dim
        return MeasurementBasis(vecs, labels)
    w, v = np.linalg.eigh(rho.matrix)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    cut = TOL * max(w[0], 0.0)
    labels = [SUPPORT if x > cut else PERP for x in w]
    return MeasurementBasis(v, labels)


def binom_lower_tail(k: int, n: int, p: float) -> float:
    """``P(X <= k)`` for ``X ~ Binomial(n, p)`` by direct summation of the pmf.

    Terms are accumulated in log space, so tails far below the smallest
    normal double are returned as 0.0 rather than overflowing intermediates.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    log_p, log_q = math.log(p), math.log1p(-p)
    lg_n1 = math.lgamma(n + 1)
    logs = np.array(
        [lg_n1 - math.lgamma(i + 1) - math.lgamma(n - i + 1) + i * log_p + (n - i) * log_q
         for i in range(k + 1)]
    )
    top = logs.max()
    return float(min(1.0, math.exp(top) * np.exp(logs - top).sum()))


def perp_hit_test(
    samples: Sequence[int],
    basis: MeasurementBasis,
    perp_labels: Collection[str],
    alpha: float,
) -> TestResult:
    """One-sided test of the fully-mixed hypothesis.

    Under full mixing the number of hits on ``perp_labels`` is
    ``Binomial(n, |perp| / dim)``. Few hits are evidence against collapse,
    so the p-value is the lower tail at the observed count.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    samples = np.asarray(samples, dtype=np.int64)
    n = samples.size
    if n == 0:
        raise ValueError("no samples")
    perp_labels = set(perp_labels)
    if not perp_labels:
        raise ValueError("perp_labels must be non-empty")
    missing = perp_labels - set(basis.labels)
    if missing:
        raise ValueError(f"labels not in basis: {sorted(missing)}")
    if samples.min() < 0 or samples.max() >= basis.dim:
        raise ValueError("sample index out of range")
    perp_idx = basis.indices(perp_labels)
    is_perp = np.zeros(basis.dim, dtype=bool)
    is_perp[perp_idx] = True
    hits = int(is_perp[samples].sum())
    p0 = perp_idx.size / basis.dim
    p_value = binom_lower_tail(hits, n, p0)
    decision = Decision.COLLAPSE_REJECTED if p_value < alpha else Decision.COLLAPSE_NOT_REJECTED
    return TestResult(n, hits, p_value, decision, alpha, p0)


@dataclass(eq=False)
class Discrimination:
    everett: TestResult
    copenhagen: TestResult
    basis: MeasurementBasis
    fs_dim: int
    bound_vacuous: bool
    everett_report: engine.RunReport = field(repr=False)
    copenhagen_report: engine.RunReport = field(repr=False)
    everett_samples: np.ndarray = field(repr=False)
    copenhagen_samples: np.ndarray = field(repr=False)

    @property
    def discriminating(self) -> bool:
        return self.everett.rejected and not self.copenhagen.rejected


def _untestable(n: int, alpha: float) -> TestResult:
    return TestResult(n, 0, 1.0, Decision.COLLAPSE_NOT_REJECTED, alpha, 0.0)


def theory_discrimination(sc: engine.Scenario, n: int, alpha: float, seed: int) -> Discrimination:
    """Sample both theories in the ``F_S``-adapted basis and test each.

    ``sc.theory`` is ignored; both theories are run on the same observer.
    The Everett and Copenhagen samplers draw from independent child seeds
    of ``seed``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    base = dict(N=sc.N, m=sc.m, observer=sc.observer, seed=sc.seed)
    ev = engine.run_everett(engine.Scenario(theory=engine.Theory.EVERETT, **base))
    cp = engine.run_copenhagen(engine.Scenario(theory=engine.Theory.COPENHAGEN, **base))
    u = engine.obs.build(sc.observer, sc.N)
    fs = engine.compute_F_S(u)
    vacuous = not sc.bound_nonvacuous
    if vacuous:
        warnings.warn(
            f"bound vacuous: 2^N = {2 ** sc.N} <= D^2 = {sc.dim_D ** 2}",
            BoundVacuousWarning,
            stacklevel=2,
        )
    if fs.dim < fs.parent_dim:
        basis = find_distinguishing_basis(ev.rho_S, fs)
    else:
        basis = find_distinguishing_basis(ev.rho_S)

    seq_ev, seq_cp = np.random.SeedSequence(seed).spawn(2)
    ev_samples = sample_outcomes(ev.rho_S, basis, n, seq_ev)
    cp_samples = sample_outcomes(cp.rho_S, basis, n, seq_cp)
    if PERP in basis.labels:
        ev_test = perp_hit_test(ev_samples, basis, {PERP}, alpha)
        cp_test = perp_hit_test(cp_samples, basis, {PERP}, alpha)
    else:
        ev_test = cp_test = _untestable(n, alpha)
    return Discrimination(
        everett=ev_test,
        copenhagen=cp_test,
        basis=basis,
        fs_dim=fs.dim,
        bound_vacuous=vacuous,
        everett_report=ev,
        copenhagen_report=cp,
        everett_samples=ev_samples,
        copenhagen_samples=cp_samples,
    )
