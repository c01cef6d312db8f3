"""Dense complex linear algebra for small multipartite Hilbert spaces.

Factor ordering is big-endian: the leftmost factor carries the most
significant index, so ``|abc>`` has ``a`` as the first qubit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

TOL = 1e-10

__all__ = [
    "TOL",
    "StateVector",
    "DensityMatrix",
    "UnitaryOperator",
    "SchmidtDecomposition",
    "Subspace",
    "kron",
    "kron_all",
    "ket",
    "plus_state",
    "pure_density",
    "partial_trace",
    "reduce_pure",
    "schmidt",
    "numerical_rank",
    "span_subspace",
    "complement",
    "extend_to_basis",
    "random_unitary",
    "trace_distance",
    "fidelity",
]


def _dims(factor_dims: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in factor_dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"factor_dims must be non-empty positive integers, got {dims}")
    return dims


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state over a tensor product of factors."""

    amplitudes: np.ndarray
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        amps = _freeze(np.ravel(self.amplitudes))
        dims = _dims(self.factor_dims)
        if int(np.prod(dims)) != amps.size:
            raise ValueError(f"factor_dims {dims} do not match length {amps.size}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "factor_dims", dims)

    @classmethod
    def from_unnormalized(cls, amplitudes, factor_dims) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, factor_dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def inner(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace operator."""

    matrix: np.ndarray
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.complex128)
        dims = _dims(self.factor_dims)
        n = int(np.prod(dims))
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} does not match factor_dims {dims}")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        # symmetrize away the last ulp of non-Hermiticity
        mat = 0.5 * (mat + mat.conj().T)
        if np.linalg.eigvalsh(mat)[0] < -TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _freeze(mat))
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def expectation(self, vec) -> float:
        """``<v|rho|v> / <v|v>``; dividing out the norm keeps rounding in
        ``v``'s amplitudes from leaking into the result."""
        v = vec.amplitudes if isinstance(vec, StateVector) else np.asarray(vec, dtype=np.complex128)
        return float(np.vdot(v, self.matrix @ v).real / np.vdot(v, v).real)

    @classmethod
    def maximally_mixed(cls, factor_dims) -> "DensityMatrix":
        dims = _dims(factor_dims)
        n = int(np.prod(dims))
        return cls(np.eye(n) / n, dims)


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    matrix: np.ndarray
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        mat = _freeze(self.matrix)
        dims = _dims(self.factor_dims)
        n = int(np.prod(dims))
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} does not match factor_dims {dims}")
        err = np.max(np.abs(mat.conj().T @ mat - np.eye(n)))
        if err > TOL:
            raise ValueError(f"operator is not unitary (max |U^dag U - I| = {err:.3g})")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, psi: StateVector) -> StateVector:
        if psi.dim != self.dim:
            raise ValueError(f"dimension mismatch: {psi.dim} vs {self.dim}")
        out = self.matrix @ psi.amplitudes
        return StateVector(out / np.linalg.norm(out), psi.factor_dims)

    def conjugate(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.dim != self.dim:
            raise ValueError(f"dimension mismatch: {rho.dim} vs {self.dim}")
        return DensityMatrix(self.matrix @ rho.matrix @ self.matrix.conj().T, rho.factor_dims)


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """``psi = sum_k coefficients[k] * left[:, k] (x) right[:, k]``."""

    coefficients: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def rank(self, tol: float = TOL) -> int:
        if self.coefficients.size == 0:
            return 0
        return int(np.count_nonzero(self.coefficients > tol * self.coefficients[0]))

    def reconstruct(self) -> np.ndarray:
        scaled = self.left_vectors * self.coefficients
        return np.einsum("ak,bk->ab", scaled, self.right_vectors).ravel()


@dataclass(frozen=True, eq=False)
class Subspace:
    """Orthonormal columns spanning a subspace of a ``parent_dim`` space."""

    basis: np.ndarray
    parent_dim: int

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.complex128).reshape(int(self.parent_dim), -1)
        k = basis.shape[1]
        if k > self.parent_dim:
            raise ValueError("more basis vectors than the parent dimension")
        if k and np.max(np.abs(basis.conj().T @ basis - np.eye(k))) > TOL:
            raise ValueError("subspace basis is not orthonormal")
        object.__setattr__(self, "basis", _freeze(basis))
        object.__setattr__(self, "parent_dim", int(self.parent_dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def contains(self, vec, tol: float = TOL) -> bool:
        v = vec.amplitudes if isinstance(vec, StateVector) else np.asarray(vec)
        resid = v - self.basis @ (self.basis.conj().T @ v)
        return bool(np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(v)))


Operand = Union[StateVector, DensityMatrix, UnitaryOperator]


def kron(a: Operand, b: Operand) -> Operand:
    """Tensor product ``a (x) b``; factor_dims are concatenated.

    Both operands must be of the same kind (two states, two density
    matrices or two unitaries).
    """
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    dims = a.factor_dims + b.factor_dims
    if isinstance(a, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), dims)
    return type(a)(np.kron(a.matrix, b.matrix), dims)


def ket(bits: str | int, factor_dims: Sequence[int] | None = None) -> StateVector:
    """Computational basis state.

    ``ket("01")`` is the two-qubit ``|01>``; ``ket(3, (2, 4))`` is basis
    index 3 of a ``2 x 4`` space.
    """
    if isinstance(bits, str):
        dims = tuple(factor_dims) if factor_dims is not None else (2,) * len(bits)
        index = int(bits, 2) if bits else 0
    else:
        if factor_dims is None:
            raise ValueError("factor_dims required for an integer index")
        dims = tuple(factor_dims)
        index = int(bits)
    n = int(np.prod(dims))
    amps = np.zeros(n, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(amps, dims)


def plus_state(n_qubits: int) -> StateVector:
    """``(|0> + |1>)^n / sqrt(2^n)``."""
    n = 2**n_qubits
    return StateVector(np.full(n, 1 / np.sqrt(n)), (2,) * n_qubits)


def pure_density(psi: StateVector) -> DensityMatrix:
    return DensityMatrix(np.outer(psi.amplitudes, psi.amplitudes.conj()), psi.factor_dims)


def _check_keep(keep, n_factors: int) -> list[int]:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one factor")
    bad = [k for k in keep if not 0 <= k < n_factors]
    if bad:
        raise ValueError(f"invalid factor index {bad[0]} for {n_factors} factors")
    return keep


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every factor not listed in ``keep``.

    Kept factors stay in their original relative order.
    """
    dims = rho.factor_dims
    keep = _check_keep(keep, len(dims))
    traced = [k for k in range(len(dims)) if k not in keep]
    dk = int(np.prod([dims[k] for k in keep]))
    dt = int(np.prod([dims[k] for k in traced])) if traced else 1
    n = len(dims)
    tensor = rho.matrix.reshape(dims + dims)
    perm = keep + traced + [n + k for k in keep] + [n + k for k in traced]
    tensor = tensor.transpose(perm).reshape(dk, dt, dk, dt)
    out = np.einsum("ajbj->ab", tensor)
    return DensityMatrix(out, tuple(dims[k] for k in keep))


def reduce_pure(psi: StateVector, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix of a pure state without forming ``|psi><psi|``."""
    dims = psi.factor_dims
    keep = _check_keep(keep, len(dims))
    traced = [k for k in range(len(dims)) if k not in keep]
    dk = int(np.prod([dims[k] for k in keep]))
    mat = psi.amplitudes.reshape(dims).transpose(keep + traced).reshape(dk, -1)
    return DensityMatrix(mat @ mat.conj().T, tuple(dims[k] for k in keep))


def schmidt(psi: StateVector, cut: int) -> SchmidtDecomposition:
    """Schmidt decomposition across the bipartition ``factors[:cut] | factors[cut:]``.

    Computed from the SVD of the amplitudes reshaped to ``dim_A x dim_B``.
    Within a degenerate block of coefficients any orthonormal basis is a
    valid answer, so callers should compare spans rather than vectors.
    """
    dims = psi.factor_dims
    if not 0 < cut < len(dims):
        raise ValueError(f"cut must lie strictly inside 1..{len(dims) - 1}, got {cut}")
    dim_a = int(np.prod(dims[:cut]))
    mat = psi.amplitudes.reshape(dim_a, -1)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    return SchmidtDecomposition(s, u, vh.T)


def numerical_rank(rho: DensityMatrix | np.ndarray, tol: float = TOL) -> int:
    """Number of eigenvalues above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w = np.linalg.eigvalsh(mat)
    top = w[-1]
    if top <= 0:
        return 0
    return int(np.count_nonzero(w > tol * top))


def _as_column(vec) -> np.ndarray:
    return vec.amplitudes if isinstance(vec, StateVector) else np.asarray(vec, dtype=np.complex128)


def span_subspace(vectors: Sequence, tol: float = TOL) -> Subspace:
    """Orthonormal basis for the span of ``vectors``.

    Singular directions below ``tol`` relative to the largest are dropped.
    """
    if len(vectors) == 0:
        raise ValueError("cannot span an empty list of vectors")
    cols = np.column_stack([_as_column(v) for v in vectors])
    parent = cols.shape[0]
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return Subspace(np.zeros((parent, 0)), parent)
    k = int(np.count_nonzero(s > tol * s[0]))
    return Subspace(u[:, :k], parent)


def _gram_schmidt_extend(basis: np.ndarray, candidates: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    # classical Gram-Schmidt with one re-orthogonalization pass
    cols = [basis[:, k] for k in range(basis.shape[1])]
    q = basis.copy()
    target = basis.shape[0]
    for j in range(candidates.shape[1]):
        if len(cols) == target:
            break
        v = candidates[:, j].astype(np.complex128)
        for _ in range(2):
            if q.shape[1]:
                v = v - q @ (q.conj().T @ v)
        norm = np.linalg.norm(v)
        if norm > tol:
            v = v / norm
            cols.append(v)
            q = np.column_stack(cols)
    return q if cols else np.zeros((target, 0), dtype=np.complex128)


def extend_to_basis(basis: np.ndarray, candidates: np.ndarray | None = None) -> np.ndarray:
    """Complete orthonormal columns to a square unitary matrix.

    Candidates default to the canonical basis, taken in order.
    """
    basis = np.asarray(basis, dtype=np.complex128)
    n = basis.shape[0]
    if candidates is None:
        candidates = np.eye(n, dtype=np.complex128)
    full = _gram_schmidt_extend(basis, candidates)
    if full.shape[1] != n:
        raise ValueError("candidates do not span the parent space")
    return full


def complement(sub: Subspace) -> Subspace:
    """Orthogonal complement of ``sub`` within its parent space."""
    full = extend_to_basis(sub.basis)
    return Subspace(full[:, sub.dim:], sub.parent_dim)


def random_unitary(dim: int, seed: int | np.random.Generator | None = None) -> UnitaryOperator:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix.

    The phases of ``R``'s diagonal are moved into ``Q`` so that the result is
    Haar distributed rather than biased by the QR sign convention.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return UnitaryOperator(q, (dim,))


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """``0.5 * ||a - b||_1``."""
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    diff = ma - mb
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def fidelity(psi: StateVector, phi: StateVector) -> float:
    return abs(psi.inner(phi)) ** 2


def kron_all(items: Sequence[Operand]) -> Operand:
    return reduce(kron, items)
