"""Exact pure-state quantum engine.

Registers are labelled qubits; the label at position 0 is the most
significant bit of the basis-state index.  All operations return new
``StateVector`` objects and leave their inputs untouched.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

STATE_TOL = 1e-10
OP_TOL = 1e-12

_SQ2 = 1.0 / np.sqrt(2.0)


class InvariantViolation(RuntimeError):
    """Raised when an internal numerical invariant is broken."""


class Basis(str, Enum):
    Z = "Z"
    X = "X"
    Y = "Y"

    @property
    def eigenvectors(self) -> np.ndarray:
        """Columns are the +1 and -1 eigenvectors."""
        return _EIGVECS[self]


_EIGVECS = {
    Basis.Z: np.array([[1, 0], [0, 1]], dtype=complex),
    Basis.X: np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    Basis.Y: np.array([[1, 1], [1j, -1j]], dtype=complex) * _SQ2,
}
# rows project onto the eigenvectors: component_k = <e_k|psi>
_PROJ_ROWS = {b: v.conj().T.copy() for b, v in _EIGVECS.items()}

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class Outcome(IntEnum):
    """Measurement result; the bit value is the enum value."""

    PLUS = 0
    MINUS = 1

    @property
    def bit(self) -> int:
        return int(self)

    @property
    def eigenvalue(self) -> int:
        return 1 - 2 * int(self)

    @classmethod
    def from_eigenvalue(cls, value: int) -> "Outcome":
        if value not in (1, -1):
            raise ValueError(f"eigenvalue must be +1 or -1, got {value}")
        return cls((1 - value) // 2)


def party_labels(M: int) -> tuple[str, ...]:
    """Conferee labels A, B, C, ... in conferee order."""
    if M > len(string.ascii_uppercase):
        raise ValueError(f"at most 26 labelled parties, got {M}")
    return tuple(string.ascii_uppercase[:M])


@dataclass(frozen=True, eq=False)
class StateVector:
    labels: tuple[str, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        if amps.size != 2 ** len(labels):
            raise ValueError(
                f"{len(labels)} labels need {2 ** len(labels)} amplitudes, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        # NaN/Inf amplitudes propagate into the norm
        if not abs(norm - 1.0) <= STATE_TOL:
            raise InvariantViolation(f"state norm {norm!r} deviates from 1")

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown qubit label {label!r}; have {self.labels}") from None

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self) -> str:
        nz = np.flatnonzero(np.abs(self.amplitudes) > 1e-12)
        terms = ", ".join(
            f"|{i:0{self.n_qubits}b}>: {self.amplitudes[i]:.4g}" for i in nz[:8]
        )
        more = " ..." if nz.size > 8 else ""
        return f"StateVector({''.join(self.labels)}; {terms}{more})"


def _from_tensor(labels, tensor) -> StateVector:
    return StateVector(tuple(labels), np.ascontiguousarray(tensor).reshape(-1))


def basis_state(labels: Sequence[str], bits: Sequence[int]) -> StateVector:
    """Computational basis state |bits> over ``labels``."""
    if len(labels) != len(bits):
        raise ValueError("labels and bits differ in length")
    index = 0
    for b in bits:
        index = (index << 1) | (int(b) & 1)
    amps = np.zeros(2 ** len(labels), dtype=complex)
    amps[index] = 1.0
    return StateVector(tuple(labels), amps)


def product_state(labels: Sequence[str], vectors: Sequence[np.ndarray]) -> StateVector:
    amps = np.ones(1, dtype=complex)
    for v in vectors:
        v = np.asarray(v, dtype=complex)
        amps = np.kron(amps, v / np.linalg.norm(v))
    return StateVector(tuple(labels), amps)


def make_ghz(M: int, labels: Sequence[str] | None = None) -> StateVector:
    """(|0...0> + |1...1>)/sqrt(2) over ``M`` qubits."""
    if M < 1:
        raise ValueError(f"GHZ state needs at least one party, got M={M}")
    labels = party_labels(M) if labels is None else tuple(labels)
    if len(labels) != M:
        raise ValueError("label count does not match M")
    amps = np.zeros(2**M, dtype=complex)
    amps[0] = amps[-1] = _SQ2
    return StateVector(labels, amps)


def attach_qubit(state: StateVector, label: str, bit: int) -> StateVector:
    """Append a fresh qubit prepared in |bit> as the least significant position."""
    if label in state.labels:
        raise ValueError(f"label {label!r} already present")
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    amps = np.zeros((state.amplitudes.size, 2), dtype=complex)
    amps[:, bit] = state.amplitudes
    return StateVector(state.labels + (label,), amps.reshape(-1))


@lru_cache(maxsize=None)
def _cnot_permutation(n: int, c: int, t: int) -> np.ndarray:
    idx = np.arange(2**n)
    cbit, tbit = 1 << (n - 1 - c), 1 << (n - 1 - t)
    return np.where(idx & cbit, idx ^ tbit, idx)


def apply_cnot(state: StateVector, control: str, target: str) -> StateVector:
    if control == target:
        raise ValueError("control and target must differ")
    c, t = state.axis(control), state.axis(target)
    perm = _cnot_permutation(state.n_qubits, c, t)
    return StateVector(state.labels, state.amplitudes[perm])


def _split(state: StateVector, label: str) -> np.ndarray:
    """View of the amplitudes as (left, qubit, right) around ``label``."""
    ax = state.axis(label)
    return state.amplitudes.reshape(2**ax, 2, -1)


def apply_single(state: StateVector, label: str, op: np.ndarray) -> StateVector:
    """Apply a 2x2 unitary to one qubit."""
    return StateVector(state.labels, np.matmul(op, _split(state, label)))


def apply_pauli(state: StateVector, label: str, pauli: str) -> StateVector:
    if pauli == "I":
        return state
    return apply_single(state, label, PAULI[pauli])


def outcome_probabilities(state: StateVector, label: str, basis: Basis) -> np.ndarray:
    """Born probabilities (p_plus, p_minus) for measuring ``label`` in ``basis``."""
    comps = np.matmul(_PROJ_ROWS[Basis(basis)], _split(state, label))
    return np.sum(np.abs(comps) ** 2, axis=(0, 2))


def collapse(state: StateVector, label: str, basis: Basis, outcome: int) -> tuple[float, StateVector]:
    """Project ``label`` onto the given eigenvector.

    Returns the Born probability of that outcome and the renormalised
    post-measurement state (the measured qubit stays in the register).
    """
    basis = Basis(basis)
    comps = np.matmul(_PROJ_ROWS[basis], _split(state, label))
    branch = comps[:, outcome, :]
    prob = float(np.sum(np.abs(branch) ** 2))
    if prob <= 0.0:
        raise ValueError(f"outcome {outcome} has zero probability")
    vec = basis.eigenvectors[:, outcome]
    post = vec[None, :, None] * (branch / np.sqrt(prob))[:, None, :]
    return prob, StateVector(state.labels, post)


def measure_qubit(
    state: StateVector, label: str, basis: Basis, rng: np.random.Generator
) -> tuple[Outcome, StateVector]:
    """Projective measurement with Born sampling.

    The returned state keeps the measured qubit, collapsed onto the observed
    eigenvector; use :func:`discard_qubit` to drop it.
    """
    probs = outcome_probabilities(state, label, basis)
    total = probs[0] + probs[1]
    if abs(total - 1.0) > STATE_TOL:
        raise InvariantViolation(f"Born probabilities sum to {total!r}")
    outcome = 0 if rng.random() < probs[0] / total else 1
    _, post = collapse(state, label, basis, outcome)
    return Outcome(outcome), post


def discard_qubit(state: StateVector, label: str) -> StateVector:
    """Remove a qubit that is in a product state with the rest of the register.

    Raises ``InvariantViolation`` if the qubit is still entangled.
    """
    ax = state.axis(label)
    mat = _split(state, label).transpose(1, 0, 2).reshape(2, -1)
    norms = np.sum(np.abs(mat) ** 2, axis=1)
    k = int(np.argmax(norms))
    rest = mat[k] / np.sqrt(norms[k])
    # product check: mat must equal outer(v, rest)
    v = mat @ rest.conj()
    if np.max(np.abs(mat - np.outer(v, rest))) > 1e-9:
        raise InvariantViolation(f"qubit {label!r} is entangled; cannot discard")
    labels = state.labels[:ax] + state.labels[ax + 1 :]
    return StateVector(labels, rest)


def measure_and_discard(
    state: StateVector, label: str, basis: Basis, rng: np.random.Generator
) -> tuple[Outcome, StateVector]:
    outcome, post = measure_qubit(state, label, basis, rng)
    return outcome, discard_qubit(post, label)


def reduced_density(state: StateVector, label: str) -> np.ndarray:
    """2x2 reduced density matrix of one qubit."""
    mat = _split(state, label).transpose(1, 0, 2).reshape(2, -1)
    return mat @ mat.conj().T


def reduced_density_many(state: StateVector, keep: Sequence[str]) -> np.ndarray:
    """Reduced density matrix over ``keep`` (in the given order)."""
    axes = [state.axis(l) for l in keep]
    rest = [i for i in range(state.n_qubits) if i not in axes]
    mat = np.transpose(state.tensor(), axes + rest).reshape(2 ** len(keep), -1)
    return mat @ mat.conj().T


def reorder(state: StateVector, labels: Sequence[str]) -> StateVector:
    labels = tuple(labels)
    if sorted(labels) != sorted(state.labels):
        raise ValueError(f"label sets differ: {labels} vs {state.labels}")
    if labels == state.labels:
        return state
    perm = [state.axis(l) for l in labels]
    return _from_tensor(labels, np.transpose(state.tensor(), perm))


def fidelity(state: StateVector, reference: StateVector) -> float:
    """|<reference|state>|^2; label order may differ between the two."""
    if set(state.labels) != set(reference.labels):
        raise ValueError(
            f"fidelity needs identical label sets: {state.labels} vs {reference.labels}"
        )
    ref = reorder(reference, state.labels)
    return float(abs(np.vdot(ref.amplitudes, state.amplitudes)) ** 2)


def expectation(state: StateVector, paulis: dict[str, str]) -> float:
    """<psi| P |psi> for a tensor product of Pauli operators keyed by label."""
    phi = state
    for label, p in paulis.items():
        phi = apply_pauli(phi, label, p)
    val = np.vdot(state.amplitudes, phi.amplitudes)
    if abs(val.imag) > 1e-9:
        raise InvariantViolation(f"Pauli expectation has imaginary part {val.imag}")
    return float(val.real)


def measurement_distribution(
    state: StateVector, program: Iterable[tuple]
) -> dict[tuple[int, ...], float]:
    """Exact joint distribution of every measurement in ``program``.

    ``program`` is a sequence of steps applied in order:
    ``("measure", label, basis)`` or ``("pauli", label, "X"|"Y"|"Z")``.
    The result maps the tuple of measurement bits (in program order) to its
    probability; zero-probability branches are omitted.
    """
    program = list(program)
    out: dict[tuple[int, ...], float] = {}

    def walk(psi: StateVector, step: int, bits: tuple, weight: float):
        if weight < 1e-300:
            return
        if step == len(program):
            out[bits] = out.get(bits, 0.0) + weight
            return
        kind, label, arg = program[step]
        if kind == "pauli":
            walk(apply_pauli(psi, label, arg), step + 1, bits, weight)
        elif kind == "measure":
            probs = outcome_probabilities(psi, label, arg)
            for k in (0, 1):
                if probs[k] > 1e-15:
                    _, post = collapse(psi, label, arg, k)
                    walk(post, step + 1, bits + (k,), weight * float(probs[k]))
        else:
            raise ValueError(f"unknown program step {kind!r}")

    walk(state, 0, (), 1.0)
    return out


def born_enumeration(state: StateVector, bases: dict[str, Basis]) -> dict[tuple[int, ...], float]:
    """Joint distribution of measuring the listed qubits, by direct enumeration.

    Computes |<e_k1 ... e_kn|psi>|^2 from the full tensor-product projector,
    independently of the sequential collapse path.  Unlisted qubits are
    summed over.  Outcome tuples follow the order of ``bases``.
    """
    labels = list(bases)
    rest = [l for l in state.labels if l not in bases]
    ordered = reorder(state, labels + rest).amplitudes.reshape(2 ** len(labels), -1)
    out = {}
    for idx in range(2 ** len(labels)):
        bits = tuple((idx >> (len(labels) - 1 - i)) & 1 for i in range(len(labels)))
        proj = np.ones(1, dtype=complex)
        for l, b in zip(labels, bits):
            proj = np.kron(proj, Basis(bases[l]).eigenvectors[:, b])
        comp = proj.conj() @ ordered
        out[bits] = float(np.sum(np.abs(comp) ** 2))
    return out
