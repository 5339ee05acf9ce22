"""Exact statevector kernel for small qubit registers.

The register keeps every qubit under an opaque label (``"q_p1"``, ``"R_A.rm_1"``
and so on).  Qubit 0 is the most significant bit of a basis index, so the
amplitude of ``|q0 q1 ... q(n-1)>`` sits at ``int("q0q1...", 2)``.

Bell-state measurement convention: ``CNOT(a -> b)``, ``H(a)``, then measure
``a`` and ``b`` in the computational basis.  The two bits ``(m_a, m_b)`` map to
the correction ``X**m_b`` followed by ``Z**m_a`` on the far qubit, which
turns every outcome back into ``|Phi+>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Sequence

import numpy as np

MAX_QUBITS = 12
NORM_TOL = 1e-12

_SQ2 = 1 / np.sqrt(2)
GATES_1Q = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) * _SQ2
PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) * _SQ2
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) * _SQ2
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) * _SQ2
BELL_STATES = {"phi+": PHI_PLUS, "phi-": PHI_MINUS, "psi+": PSI_PLUS, "psi-": PSI_MINUS}
W_STATE = np.zeros(8, dtype=complex)
W_STATE[[1, 2, 4]] = 1 / np.sqrt(3)


class KernelError(ValueError):
    """Invalid register operation (range, duplicate target, bad precondition)."""


@dataclass(frozen=True)
class BellOutcome:
    """Two classical bits from a Bell-state measurement."""

    phase: int  # measured on the control qubit; selects Z
    parity: int  # measured on the target qubit; selects X

    @property
    def bits(self) -> tuple[int, int]:
        return (self.phase, self.parity)

    @property
    def correction(self) -> tuple[str, ...]:
        """Gates to apply on the far qubit, in order."""
        gates = []
        if self.parity:
            gates.append("X")
        if self.phase:
            gates.append("Z")
        return tuple(gates)

    def __str__(self) -> str:
        return f"{self.phase}{self.parity}"


class Conversion(Enum):
    TWO_EPR = "two_epr"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class ConversionResult:
    branch: Conversion
    probability: float


class StateRegister:
    """Pure state of up to ``MAX_QUBITS`` labelled qubits."""

    def __init__(self, labels: Sequence[Hashable], cap: int = MAX_QUBITS):
        labels = list(labels)
        if not 1 <= len(labels) <= cap:
            raise KernelError(f"qubit count {len(labels)} outside [1, {cap}]")
        if len(set(labels)) != len(labels):
            raise KernelError("duplicate qubit labels")
        self.cap = cap
        self.labels: list[Hashable] = labels
        self._psi = np.zeros([2] * len(labels), dtype=complex)
        self._psi[(0,) * len(labels)] = 1.0

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._psi.reshape(-1).copy()

    def norm(self) -> float:
        return float(np.vdot(self._psi, self._psi).real)

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KernelError(f"unknown qubit {label!r}") from None

    def _axes(self, targets: Iterable[Hashable]) -> list[int]:
        axes = [self.index(t) for t in targets]
        if len(set(axes)) != len(axes):
            raise KernelError(f"duplicate targets {list(targets)!r}")
        return axes

    # -- growth / shrink ---------------------------------------------------

    def add_qubit(self, label: Hashable) -> None:
        """Append a fresh ``|0>`` qubit."""
        if self.n >= self.cap:
            raise KernelError(f"register full ({self.cap} qubits)")
        if label in self.labels:
            raise KernelError(f"duplicate qubit label {label!r}")
        fresh = np.zeros(2, dtype=complex)
        fresh[0] = 1.0
        self._psi = np.multiply.outer(self._psi, fresh)
        self.labels.append(label)

    def release(self, label: Hashable) -> int:
        """Drop a qubit that sits in a definite basis state; return that bit."""
        ax = self.index(label)
        if self.n == 1:
            raise KernelError("cannot release the last qubit")
        p1 = self.probability(label, 1)
        if min(p1, 1 - p1) > 1e-12:
            raise KernelError(f"qubit {label!r} is not in a basis state")
        bit = int(p1 > 0.5)
        sub = np.take(self._psi, bit, axis=ax)
        self._psi = sub / np.sqrt(np.vdot(sub, sub).real)
        del self.labels[ax]
        return bit

    # -- gates and measurement ---------------------------------------------

    def apply(self, gate: str, *targets: Hashable) -> "StateRegister":
        gate = gate.upper()
        if gate in GATES_1Q:
            if len(targets) != 1:
                raise KernelError(f"{gate} takes one target")
            (ax,) = self._axes(targets)
            self._psi = np.moveaxis(
                np.tensordot(GATES_1Q[gate], self._psi, axes=([1], [ax])), 0, ax
            )
        elif gate in ("CNOT", "CX"):
            if len(targets) != 2:
                raise KernelError("CNOT takes (control, target)")
            c, t = self._axes(targets)
            idx = [slice(None)] * self.n
            idx[c] = 1
            sub = self._psi[tuple(idx)]
            t_sub = t if t < c else t - 1
            self._psi[tuple(idx)] = np.flip(sub, axis=t_sub).copy()
        else:
            raise KernelError(f"unknown gate {gate!r}")
        return self

    def probability(self, label: Hashable, value: int) -> float:
        ax = self.index(label)
        sub = np.take(self._psi, value, axis=ax)
        return float(np.vdot(sub, sub).real)

    def project(self, label: Hashable, value: int) -> float:
        """Collapse ``label`` onto ``value``; return the prior probability."""
        ax = self.index(label)
        p = self.probability(label, value)
        if p <= 0.0:
            raise KernelError(f"outcome {value} on {label!r} has zero probability")
        idx = [slice(None)] * self.n
        idx[ax] = 1 - value
        self._psi[tuple(idx)] = 0.0
        self._psi /= np.sqrt(p)
        return p

    def measure(self, label: Hashable, rng: np.random.Generator) -> int:
        p1 = self.probability(label, 1)
        bit = int(rng.random() < p1)
        self.project(label, bit)
        return bit

    # -- inspection ----------------------------------------------------------

    def reduced(self, qubits: Sequence[Hashable]) -> np.ndarray:
        """Density matrix of ``qubits`` (in the given order)."""
        axes = self._axes(qubits)
        rest = [a for a in range(self.n) if a not in axes]
        psi = np.transpose(self._psi, axes + rest).reshape(2 ** len(axes), -1)
        return psi @ psi.conj().T

    def in_ground_state(self, qubits: Sequence[Hashable]) -> bool:
        return abs(self.reduced(qubits)[0, 0].real - 1.0) < 1e-12

    def copy(self) -> "StateRegister":
        other = StateRegister.__new__(StateRegister)
        other.cap = self.cap
        other.labels = list(self.labels)
        other._psi = self._psi.copy()
        return other


# ---------------------------------------------------------------------------
# functional surface


def alloc_register(n: int, labels: Sequence[Hashable] | None = None,
                   cap: int = MAX_QUBITS) -> StateRegister:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= cap:
        raise KernelError(f"qubit count must be in [1, {cap}], got {n!r}")
    if labels is None:
        labels = list(range(n))
    elif len(labels) != n:
        raise KernelError("labels length does not match n")
    return StateRegister(labels, cap=cap)


def apply_gate(reg: StateRegister, gate: str, *targets: Hashable) -> StateRegister:
    return reg.apply(gate, *targets)


def _embed(reg: StateRegister, qubits: Sequence[Hashable], state: np.ndarray) -> None:
    if not reg.in_ground_state(qubits):
        raise KernelError(f"qubits {list(qubits)!r} are not in |0...0>")
    axes = reg._axes(qubits)
    rest = [a for a in range(reg.n) if a not in axes]
    perm = axes + rest
    psi = np.transpose(reg._psi, perm)
    others = psi[(0,) * len(axes)]
    new = np.multiply.outer(state.reshape([2] * len(axes)), others)
    reg._psi = np.transpose(new, np.argsort(perm))


def prepare_w_state(reg: StateRegister, q1: Hashable, q2: Hashable, q3: Hashable) -> StateRegister:
    """(|001> + |010> + |100>)/sqrt(3) on (q1, q2, q3)."""
    _embed(reg, (q1, q2, q3), W_STATE)
    return reg


def prepare_bell(reg: StateRegister, q1: Hashable, q2: Hashable, variant: str = "phi+") -> StateRegister:
    if variant not in BELL_STATES:
        raise KernelError(f"unknown Bell variant {variant!r}")
    _embed(reg, (q1, q2), BELL_STATES[variant])
    return reg


def bell_measure(reg: StateRegister, q1: Hashable, q2: Hashable,
                 rng: np.random.Generator) -> BellOutcome:
    reg.apply("CNOT", q1, q2)
    reg.apply("H", q1)
    phase = reg.measure(q1, rng)
    parity = reg.measure(q2, rng)
    return BellOutcome(phase, parity)


def conversion_probabilities(reg: StateRegister, w_qubits: Sequence[Hashable],
                             repeater_atom: Hashable) -> dict[Conversion, float]:
    """Branch weights of the W-to-EPR conversion, read off the amplitudes."""
    trial = reg.copy()
    p1 = w_qubits[0]
    trial.apply("H", repeater_atom).apply("CNOT", repeater_atom, p1)
    trial.apply("CNOT", repeater_atom, p1)
    p_res = trial.probability(p1, 1)
    return {Conversion.TWO_EPR: 1.0 - p_res, Conversion.RESIDUAL: p_res}


def convert_w_to_epr(reg: StateRegister, w_qubits: Sequence[Hashable], repeater_atom: Hashable,
                     rng: np.random.Generator | None = None,
                     branch: Conversion | None = None) -> ConversionResult:
    """Turn ``|W>_(p1,p2,a_lc)`` plus a fresh repeater atom into EPR pairs.

    After ``H(atom)`` and ``CNOT(atom -> p1)`` the state is
    ``sqrt(2/3) |Phi+>_(atom,p1) |Psi+>_(p2,a_lc) + sqrt(1/3) |Psi+>_(atom,p1) |00>``.
    A non-destructive parity check on ``(atom, p1)`` picks the branch.  On
    ``TWO_EPR`` the ``Psi+`` half is rotated to ``Phi+`` with ``X`` on ``a_lc``
    so both pairs leave as ``|Phi+>``.  ``branch`` forces the outcome
    (post-selection) instead of sampling.
    """
    if len(w_qubits) != 3:
        raise KernelError("w_qubits must be (p1, p2, a_lc)")
    p1, p2, a_lc = w_qubits
    if not reg.in_ground_state([repeater_atom]):
        raise KernelError("repeater atom must start in |0>")
    if fidelity(reg, list(w_qubits), W_STATE) < 1 - 1e-9:
        raise KernelError("w_qubits do not hold |W>")
    reg.apply("H", repeater_atom).apply("CNOT", repeater_atom, p1)
    # parity of (atom, p1): copy onto p1, read p1, undo
    reg.apply("CNOT", repeater_atom, p1)
    if branch is None:
        if rng is None:
            raise KernelError("rng required unless branch is forced")
        p_res = reg.probability(p1, 1)
        bit = int(rng.random() < p_res)
    else:
        bit = 1 if branch is Conversion.RESIDUAL else 0
    prob = reg.project(p1, bit)
    reg.apply("CNOT", repeater_atom, p1)
    if bit == 0:
        reg.apply("X", a_lc)
        return ConversionResult(Conversion.TWO_EPR, prob)
    return ConversionResult(Conversion.RESIDUAL, prob)


def _correct(reg: StateRegister, outcome: BellOutcome, qubit: Hashable) -> None:
    for g in outcome.correction:
        reg.apply(g, qubit)


def entanglement_swap(reg: StateRegister, left_pair: Sequence[Hashable],
                      right_pair: Sequence[Hashable],
                      rng: np.random.Generator) -> tuple[tuple[Hashable, Hashable], BellOutcome]:
    """BSM on the two middle qubits; correct the right-hand outer qubit.

    For ``|Phi+>`` inputs the outer qubits end in ``|Phi+>``.
    """
    a, b = left_pair
    c, d = right_pair
    if len({a, b, c, d}) != 4:
        raise KernelError("pairs must be disjoint")
    outcome = bell_measure(reg, b, c, rng)
    _correct(reg, outcome, d)
    return (a, d), outcome


def teleport(reg: StateRegister, payload: Hashable, epr_pair: Sequence[Hashable],
             rng: np.random.Generator, check: bool = True) -> tuple[Hashable, BellOutcome]:
    """Send ``payload`` over ``epr_pair = (near, far)``; return the far qubit."""
    near, far = epr_pair
    if check and fidelity(reg, [near, far], PHI_PLUS) < 1 - 1e-9:
        raise KernelError("teleportation pair is not |Phi+>")
    outcome = bell_measure(reg, payload, near, rng)
    _correct(reg, outcome, far)
    return far, outcome


def fidelity(reg: StateRegister, qubits: Sequence[Hashable], target_state: np.ndarray) -> float:
    """``<t| rho |t>`` for the reduced state of ``qubits``."""
    target = np.asarray(target_state, dtype=complex).reshape(-1)
    if target.size != 2 ** len(qubits):
        raise KernelError(
            f"target dimension {target.size} does not match {len(qubits)} qubits")
    rho = reg.reduced(qubits)
    val = np.vdot(target, rho @ target).real / np.vdot(target, target).real
    return float(min(1.0, max(0.0, val)))


def bell_fidelities(reg: StateRegister, q1: Hashable, q2: Hashable) -> dict[str, float]:
    return {name: fidelity(reg, [q1, q2], vec) for name, vec in BELL_STATES.items()}


def random_qubit(rng: np.random.Generator) -> np.ndarray:
    """Haar-random single-qubit state vector."""
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def load_qubit(reg: StateRegister, label: Hashable, state: np.ndarray) -> None:
    """Place an arbitrary single-qubit state on a ``|0>`` qubit."""
    _embed(reg, (label,), np.asarray(state, dtype=complex))
