"""Run the stream-measurement experiment under both theories.

Everett mode is exact unitary evolution. Because stream ``i`` is never
touched again once the observer has moved on, its reduced state is fixed at
that moment, so only the ``(stream, observer)`` pair needs to be carried:

    joint_i = U (|+><+|^N (x) sigma_O) U^dag
    rho_i   = Tr_O joint_i
    sigma_O <- Tr_S joint_i

:func:`run_full_joint` evolves the whole ``m``-stream pure state instead and
serves as the reference for small instances.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import observer as obs
from .qlin import (
    TOL,
    DensityMatrix,
    StateVector,
    Subspace,
    complement,
    numerical_rank,
    plus_state,
    reduce_pure,
    schmidt,
    span_subspace,
    trace_distance,
)

DEFAULT_MAX_DIM = 4096
MAX_DIM_ENV = "EVERETT_LAB_MAX_DIM"

__all__ = [
    "Theory",
    "Scenario",
    "RunReport",
    "SupportCertificate",
    "SizeGuardError",
    "InvariantViolation",
    "max_dim",
    "check_size",
    "stream_isometry",
    "run_everett",
    "run_copenhagen",
    "run",
    "run_full_joint",
    "compute_F_S",
    "certify_support_bound",
]


class Theory(str, Enum):
    EVERETT = "everett"
    COPENHAGEN = "copenhagen"


class SizeGuardError(ValueError):
    """Joint stream-observer dimension exceeds the configured limit."""


class InvariantViolation(RuntimeError):
    """A result contradicts a theorem the simulation must satisfy."""


def max_dim() -> int:
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{MAX_DIM_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{MAX_DIM_ENV} must be positive")
    return value


def check_size(n_qubits: int, dim_D: int) -> None:
    limit = max_dim()
    joint = 2**n_qubits * dim_D
    if joint > limit:
        raise SizeGuardError(
            f"joint dimension 2^{n_qubits}*{dim_D} = {joint} exceeds the limit {limit} "
            f"(set {MAX_DIM_ENV} to override)"
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    N: int
    m: int
    observer: obs.ObserverSpec
    theory: Theory = Theory.EVERETT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theory", Theory(self.theory))
        if self.N < 1 or self.m < 1:
            raise ValueError("N and m must be positive")

    @property
    def dim_D(self) -> int:
        return self.observer.dim_D

    @property
    def bound_nonvacuous(self) -> bool:
        """True when ``2^N > D^2``, i.e. the support bound forbids full mixing."""
        return 2**self.N > self.dim_D**2


@dataclass(eq=False)
class RunReport:
    theory: Theory
    N: int
    m: int
    dim_D: int
    rho_S: DensityMatrix
    per_stream_ranks: list[int]
    rank_rho_S: int
    fs_dim: int | None
    eigenvalues: np.ndarray
    trace_distance_to_mixed: float
    per_stream: list[DensityMatrix] = field(default_factory=list, repr=False)
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def bound_nonvacuous(self) -> bool:
        return 2**self.N > self.dim_D**2


@dataclass(frozen=True)
class SupportCertificate:
    max_perp_expectation: float
    rank_rho_S: int
    fs_dim: int
    dim_D: int
    bound_holds: bool

    @property
    def support_ok(self) -> bool:
        return self.max_perp_expectation < TOL


def stream_isometry(u: obs.InteractionUnitary) -> np.ndarray:
    """``U (|+>^N (x) .)`` as a tensor ``K[s, o, j]``.

    ``s`` indexes the stream, ``o`` the observer after the interaction and
    ``j`` the observer basis state before it.
    """
    ns, d = u.stream_dim, u.dim_D
    plus = plus_state(u.stream_qubits).amplitudes
    # columns of U restricted to inputs |+>^N (x) |j>
    cols = u.matrix.reshape(ns * d, ns, d)
    k = np.einsum("xsj,s->xj", cols, plus)
    return k.reshape(ns, d, d)


def _summarize(theory, sc_like, rho_S, per_stream, fs_dim, samples=None) -> RunReport:
    n, m, d = sc_like
    mixed = np.eye(rho_S.dim) / rho_S.dim
    return RunReport(
        theory=Theory(theory),
        N=n,
        m=m,
        dim_D=d,
        rho_S=rho_S,
        per_stream_ranks=[numerical_rank(r) for r in per_stream],
        rank_rho_S=numerical_rank(rho_S),
        fs_dim=fs_dim,
        eigenvalues=rho_S.eigenvalues(),
        trace_distance_to_mixed=trace_distance(rho_S, mixed),
        per_stream=list(per_stream),
        samples=samples,
    )


def run_everett(
    sc: Scenario,
    unitary: obs.InteractionUnitary | None = None,
    initial_state: StateVector | None = None,
) -> RunReport:
    """Exact no-collapse evolution through ``sc.m`` streams.

    ``unitary`` and ``initial_state`` override the ones derived from
    ``sc.observer``; use them for clocked or hand-built interactions, whose
    observer factor may be larger than ``sc.observer.dim_D``.

    Raises :class:`InvariantViolation` if ``rank(rho_S) > D^2``.
    """
    if sc.theory is not Theory.EVERETT:
        raise ValueError("run_everett needs an everett scenario")
    d = unitary.dim_D if unitary is not None else sc.dim_D
    check_size(sc.N, d)
    u = unitary if unitary is not None else obs.build(sc.observer, sc.N)
    phi0 = initial_state if initial_state is not None else sc.observer.initial_state
    if phi0.dim != u.dim_D:
        raise ValueError(f"initial observer state has dim {phi0.dim}, interaction expects {u.dim_D}")

    k = stream_isometry(u)
    sigma = np.outer(phi0.amplitudes, phi0.amplitudes.conj())
    per_stream = []
    for _ in range(sc.m):
        # joint[s, o, s', o'] = K[s, o, j] sigma[j, j'] conj(K[s', o', j'])
        ks = np.einsum("soj,jk->sok", k, sigma)
        rho_i = np.einsum("sok,tok->st", ks, k.conj())
        sigma = np.einsum("sok,spk->op", ks, k.conj())
        per_stream.append(DensityMatrix(rho_i, (u.stream_dim,)))
        sigma = 0.5 * (sigma + sigma.conj().T)

    rho_S = DensityMatrix(sum(r.matrix for r in per_stream) / sc.m, (u.stream_dim,))
    fs = compute_F_S(u)
    report = _summarize(Theory.EVERETT, (sc.N, sc.m, u.dim_D), rho_S, per_stream, fs.dim)
    if report.rank_rho_S > u.dim_D**2:
        raise InvariantViolation(
            f"rank(rho_S) = {report.rank_rho_S} exceeds D^2 = {u.dim_D ** 2}"
        )
    return report


def run_copenhagen(sc: Scenario) -> RunReport:
    """Collapse model: every qubit independently lands on 0 or 1 with probability 1/2.

    ``rho_S`` is the exact ``I / 2^N``; ``samples`` holds ``m x N`` seeded
    collapse outcomes for empirical checks.
    """
    if sc.theory is not Theory.COPENHAGEN:
        raise ValueError("run_copenhagen needs a copenhagen scenario")
    n = 2**sc.N
    rho_S = DensityMatrix.maximally_mixed((n,))
    rng = np.random.default_rng(sc.seed)
    bits = rng.integers(0, 2, size=(sc.m, sc.N), dtype=np.int8)
    report = RunReport(
        theory=Theory.COPENHAGEN,
        N=sc.N,
        m=sc.m,
        dim_D=sc.dim_D,
        rho_S=rho_S,
        per_stream_ranks=[n] * sc.m,
        rank_rho_S=n,
        fs_dim=None,
        eigenvalues=np.full(n, 1.0 / n),
        trace_distance_to_mixed=0.0,
        per_stream=[rho_S] * sc.m,
        samples=bits,
    )
    return report


def run(sc: Scenario) -> RunReport:
    if sc.theory is Theory.EVERETT:
        return run_everett(sc)
    return run_copenhagen(sc)


def run_full_joint(
    u: obs.InteractionUnitary | list[obs.InteractionUnitary],
    m: int,
    initial_state: StateVector,
) -> list[DensityMatrix]:
    """Reference path: evolve the full ``m``-stream pure state.

    ``u`` may be a single interaction or one per stream (time-dependent).
    Returns the reduced state of every stream. Memory grows as
    ``2^(mN) * D``; meant for small cross-checks only.
    """
    us = list(u) if isinstance(u, (list, tuple)) else [u] * m
    if len(us) != m:
        raise ValueError("need one interaction per stream")
    ns, d = us[0].stream_dim, us[0].dim_D
    plus = plus_state(us[0].stream_qubits).amplitudes
    psi = initial_state.amplitudes
    for _ in range(m):
        psi = np.kron(plus, psi)
    # layout: (stream_m, ..., stream_1, observer) after the prepends above,
    # so reverse to (stream_1, ..., stream_m, observer)
    tensor = psi.reshape((ns,) * m + (d,))
    tensor = tensor.transpose(tuple(reversed(range(m))) + (m,))
    for i, ui in enumerate(us):
        op = ui.matrix.reshape(ns, d, ns, d)
        # contract U over (stream_i, observer)
        tensor = np.tensordot(op, tensor, axes=([2, 3], [i, m]))
        # result axes: (s_i', o', remaining streams in order...)
        rest = [j for j in range(m) if j != i]
        order = [0] * (m + 1)
        order[i] = 0
        for pos, j in enumerate(rest):
            order[j] = 2 + pos
        order[m] = 1
        tensor = tensor.transpose(order)
    state = StateVector(tensor.ravel(), (ns,) * m + (d,))
    return [reduce_pure(state, [i]) for i in range(m)]


def compute_F_S(u: obs.InteractionUnitary, tol: float = TOL) -> Subspace:
    """Span of the left Schmidt vectors of ``U(|+>^N (x) |e_i>)`` over all ``i``.

    Any no-collapse ``rho_S`` produced with this interaction, from any
    initial observer state, is supported in the result.
    """
    k = stream_isometry(u)
    ns, d = u.stream_dim, u.dim_D
    vectors = []
    for i in range(d):
        psi = StateVector(k[:, :, i].ravel(), (ns, d))
        dec = schmidt(psi, 1)
        keep = dec.coefficients > tol
        vectors.extend(dec.left_vectors[:, keep].T)
    return span_subspace(vectors, tol)


def certify_support_bound(report: RunReport, fs: Subspace) -> SupportCertificate:
    """Check that ``rho_S`` vanishes on the complement of ``fs``."""
    if fs.parent_dim != report.rho_S.dim:
        raise ValueError(
            f"F_S lives in dimension {fs.parent_dim}, rho_S in {report.rho_S.dim}"
        )
    perp = complement(fs)
    if perp.dim:
        diag = np.einsum("ak,ab,bk->k", perp.basis.conj(), report.rho_S.matrix, perp.basis).real
        max_perp = float(diag.max())
    else:
        max_perp = 0.0
    bound = report.rank_rho_S <= fs.dim <= report.dim_D**2
    return SupportCertificate(
        max_perp_expectation=max_perp,
        rank_rho_S=report.rank_rho_S,
        fs_dim=fs.dim,
        dim_D=report.dim_D,
        bound_holds=bool(bound),
    )
