"""Observer interaction unitaries on ``H_S (x) H_O``.

Every builder returns an :class:`InteractionUnitary` whose operator has
factor_dims ``(2**N, D)``: the whole N-qubit stream is one factor and the
observer (including any clock register) is the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .qlin import StateVector, UnitaryOperator, extend_to_basis, ket, plus_state, random_unitary

__all__ = [
    "ObserverKind",
    "ObserverSpec",
    "InteractionUnitary",
    "toy_a_states",
    "toy_b_states",
    "make_toy_unitary",
    "make_recording_observer",
    "make_clocked_unitary",
    "build",
]


class ObserverKind(str, Enum):
    TOY = "toy"
    RECORDING = "recording"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class InteractionUnitary:
    u: UnitaryOperator
    stream_qubits: int

    def __post_init__(self):
        if self.u.factor_dims[0] != 2**self.stream_qubits or len(self.u.factor_dims) != 2:
            raise ValueError(
                f"expected factor_dims (2**{self.stream_qubits}, D), got {self.u.factor_dims}"
            )

    @property
    def dim_D(self) -> int:
        return self.u.factor_dims[1]

    @property
    def stream_dim(self) -> int:
        return self.u.factor_dims[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.u.matrix


@dataclass(frozen=True, eq=False)
class ObserverSpec:
    """Observer configuration.

    ``memory_qubits`` is ``log2(dim_D)`` and is filled in automatically when
    ``dim_D`` is a power of two. ``initial_state`` defaults to the first
    basis state of ``H_O``.
    """

    kind: ObserverKind
    dim_D: int
    seed: int = 0
    memory_qubits: int | None = None
    initial_state: StateVector | None = field(default=None)

    def __post_init__(self):
        kind = ObserverKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.dim_D < 1:
            raise ValueError("dim_D must be at least 1")
        d = int(self.dim_D)
        is_pow2 = d & (d - 1) == 0
        if self.memory_qubits is None and is_pow2:
            object.__setattr__(self, "memory_qubits", d.bit_length() - 1)
        elif self.memory_qubits is not None and 2**self.memory_qubits != d:
            raise ValueError(f"memory_qubits={self.memory_qubits} inconsistent with dim_D={d}")
        if kind is ObserverKind.RECORDING and not is_pow2:
            raise ValueError("recording observer needs dim_D to be a power of two")
        if self.initial_state is None:
            object.__setattr__(self, "initial_state", ket(0, (d,)))
        elif self.initial_state.dim != d:
            raise ValueError("initial_state must live in the observer space")


# A-states and B-states of the three-qubit toy example.
_A = np.array(
    [
        [1, 1, 1, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 1],
        [1, -1, 1, -1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, -1, 1, -1],
    ],
    dtype=np.complex128,
) / 2.0
_B = np.array(
    [
        [1, 0, -1, 0, 0, 0, 0, 0],
        [0, 1, 0, -1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, -1, 0],
        [0, 0, 0, 0, 0, 1, 0, -1],
    ],
    dtype=np.complex128,
) / np.sqrt(2.0)


def toy_a_states() -> list[StateVector]:
    """``|A_1>, ..., |A_4>`` as three-qubit states."""
    return [StateVector(row, (2, 2, 2)) for row in _A]


def toy_b_states() -> list[StateVector]:
    """``|B_1>, ..., |B_4>``; each is ``|a>|->|c>``."""
    return [StateVector(row, (2, 2, 2)) for row in _B]


def make_toy_unitary(completion_seed: int | None = None) -> InteractionUnitary:
    """The N=3, D=2 toy interaction.

    On the two inputs ``|+++>|psi_k>`` it acts as

        |+++>|psi_0>  ->  (|A_1>|psi_0> + |A_2>|psi_1>) / sqrt(2)
        |+++>|psi_1>  ->  (|A_3>|psi_0> + |A_4>|psi_1>) / sqrt(2)

    with ``psi_k`` the observer's computational basis. Elsewhere the
    operator is only fixed up to a unitary on the complement; by default
    both sides are completed by Gram-Schmidt over the canonical basis.
    Passing ``completion_seed`` rotates the completion by a random unitary,
    which must not change anything observable for the stream input.
    """
    plus = plus_state(3).amplitudes
    e0, e1 = np.eye(2)
    inputs = np.column_stack([np.kron(plus, e0), np.kron(plus, e1)])
    outputs = np.column_stack(
        [
            (np.kron(_A[0], e0) + np.kron(_A[1], e1)) / np.sqrt(2),
            (np.kron(_A[2], e0) + np.kron(_A[3], e1)) / np.sqrt(2),
        ]
    )
    v = extend_to_basis(inputs)
    w = extend_to_basis(outputs)
    if completion_seed is not None:
        rot = np.eye(16, dtype=np.complex128)
        rot[2:, 2:] = random_unitary(14, completion_seed).matrix
        w = w @ rot
    return InteractionUnitary(UnitaryOperator(w @ v.conj().T, (8, 2)), 3)


def make_recording_observer(n_qubits: int, memory_qubits: int) -> InteractionUnitary:
    """CNOT every stream qubit ``k`` into memory slot ``k % memory_qubits``.

    The product of CNOTs is the permutation ``|s>|r> -> |s>|r ^ f(s)>``,
    where ``f`` XOR-folds the stream bits into the register. With
    ``memory_qubits >= n_qubits`` each qubit lands in its own slot.
    """
    if n_qubits < 1 or memory_qubits < 1:
        raise ValueError("n_qubits and memory_qubits must be positive")
    ns, nm = 2**n_qubits, 2**memory_qubits
    s = np.arange(ns)
    fold = np.zeros(ns, dtype=np.int64)
    for k in range(n_qubits):
        bit = (s >> (n_qubits - 1 - k)) & 1
        slot = k % memory_qubits
        fold ^= bit << (memory_qubits - 1 - slot)
    mat = np.zeros((ns * nm, ns * nm), dtype=np.complex128)
    for r in range(nm):
        src = s * nm + r
        dst = s * nm + (r ^ fold)
        mat[dst, src] = 1.0
    return InteractionUnitary(UnitaryOperator(mat, (ns, nm)), n_qubits)


def make_clocked_unitary(us: Sequence[InteractionUnitary], m: int | None = None) -> InteractionUnitary:
    """Fold a time-dependent sequence ``U(1..m)`` into one constant unitary.

    The returned operator acts on ``H_S (x) (H_O (x) H_clock)`` with a clock
    of ``2**ceil(log2 m)`` levels. It applies ``U(c+1)`` controlled on clock
    value ``c`` and then advances the clock by one (mod its size). Slots past
    ``m`` hold the identity.
    """
    us = list(us)
    if m is None:
        m = len(us)
    if m < 1 or len(us) != m:
        raise ValueError(f"expected {m} interaction unitaries, got {len(us)}")
    dims = us[0].u.factor_dims
    if any(x.u.factor_dims != dims for x in us):
        raise ValueError("all interaction unitaries must share factor dims")
    n_qubits = us[0].stream_qubits
    n_clock = 1 << max(0, math.ceil(math.log2(m)))
    dim_so = int(np.prod(dims))
    ns, d = dims

    # ordering (stream, observer, clock): clock is the least significant index
    controlled = np.zeros((dim_so * n_clock,) * 2, dtype=np.complex128)
    for c in range(n_clock):
        block = us[c].matrix if c < m else np.eye(dim_so)
        proj = np.zeros((n_clock, n_clock))
        proj[c, c] = 1.0
        controlled += np.kron(block, proj)
    shift = np.roll(np.eye(n_clock), 1, axis=0)
    increment = np.kron(np.eye(dim_so), shift)
    return InteractionUnitary(UnitaryOperator(increment @ controlled, (ns, d * n_clock)), n_qubits)


def build(spec: ObserverSpec, n_qubits: int) -> InteractionUnitary:
    if n_qubits < 1:
        raise ValueError("n_qubits must be positive")
    if spec.kind is ObserverKind.TOY:
        if n_qubits != 3 or spec.dim_D != 2:
            raise ValueError("toy observer requires N=3 and D=2")
        return make_toy_unitary()
    if spec.kind is ObserverKind.RECORDING:
        return make_recording_observer(n_qubits, spec.memory_qubits)
    ns = 2**n_qubits
    u = random_unitary(ns * spec.dim_D, spec.seed)
    return InteractionUnitary(UnitaryOperator(u.matrix, (ns, spec.dim_D)), n_qubits)
