"""Eavesdropper strategies and what they learn or disturb."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .qcore import Basis, Outcome, StateVector, measure_qubit

TRAVELING_LABEL = "T"


class AttackKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    TRAVELING_MEASURE_Z = "traveling_measure_z"


RANDOM_ZX = "RandomZX"
_IR_BASES = ("Z", "X", "Y", RANDOM_ZX)


@dataclass(frozen=True)
class AttackStrategy:
    """One eavesdropping strategy bound to a single directed link.

    ``target`` is an ordered ``(from, to)`` pair of party ids.  ``None``
    means the first link the protocol uses (``(0, 1)``).
    """

    kind: AttackKind = AttackKind.NONE
    basis: str | None = None
    target: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.kind is AttackKind.INTERCEPT_RESEND:
            if self.basis not in _IR_BASES:
                raise ValueError(f"intercept-resend basis must be one of {_IR_BASES}, got {self.basis!r}")
        elif self.basis is not None and self.kind is AttackKind.NONE:
            raise ValueError("no-attack strategy takes no basis")
        if self.target is not None:
            object.__setattr__(self, "target", tuple(int(x) for x in self.target))

    @classmethod
    def none(cls) -> "AttackStrategy":
        return cls()

    @classmethod
    def intercept_resend(cls, basis: str, target=None) -> "AttackStrategy":
        return cls(AttackKind.INTERCEPT_RESEND, basis, target)

    @classmethod
    def traveling_measure_z(cls, target=None) -> "AttackStrategy":
        return cls(AttackKind.TRAVELING_MEASURE_Z, None, target)

    @property
    def active(self) -> bool:
        return self.kind is not AttackKind.NONE

    @property
    def link(self) -> tuple[int, int]:
        return self.target if self.target is not None else (0, 1)

    def applies_to(self, src: int, dst: int, label: str) -> bool:
        if not self.active or (src, dst) != self.link:
            return False
        if self.kind is AttackKind.TRAVELING_MEASURE_Z:
            return label == TRAVELING_LABEL
        return True

    def draw_basis(self, rng: np.random.Generator) -> Basis:
        if self.kind is AttackKind.TRAVELING_MEASURE_Z:
            return Basis.Z
        if self.basis == RANDOM_ZX:
            return Basis.Z if rng.random() < 0.5 else Basis.X
        return Basis(self.basis)


@dataclass(frozen=True)
class EveEvent:
    event_id: int
    basis: Basis
    outcome: Outcome
    truth: int | None = None


@dataclass
class EveRecord:
    """Append-only log of Eve's measurements."""

    _events: list[EveEvent] = field(default_factory=list)

    def append(self, event: EveEvent) -> None:
        self._events.append(event)

    def extend(self, events: Iterable[EveEvent]) -> None:
        self._events.extend(events)

    @property
    def events(self) -> tuple[EveEvent, ...]:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def bits(self) -> np.ndarray:
        return np.array([e.outcome.bit for e in self._events], dtype=np.int8)

    def truth(self) -> np.ndarray:
        return np.array([-1 if e.truth is None else e.truth for e in self._events], dtype=np.int8)


def attack_intercept_resend(
    state: StateVector, label: str, basis: Basis, rng: np.random.Generator, event_id: int = 0
) -> tuple[EveEvent, StateVector]:
    """Measure the in-flight qubit in Eve's basis and resend the collapsed qubit."""
    outcome, post = measure_qubit(state, label, Basis(basis), rng)
    return EveEvent(event_id, Basis(basis), outcome), post


def attack_traveling_measure(
    state: StateVector, rng: np.random.Generator, label: str = TRAVELING_LABEL, event_id: int = 0
) -> tuple[EveEvent, StateVector]:
    if label not in state.labels:
        raise KeyError(f"no traveling qubit {label!r} in flight")
    return attack_intercept_resend(state, label, Basis.Z, rng, event_id)


def mutual_information(eve_bits: Sequence[int], truth_bits: Sequence[int]) -> float:
    """Plug-in estimate of I(Eve; truth) in bits from paired samples."""
    x = np.asarray(eve_bits, dtype=np.int64).reshape(-1)
    y = np.asarray(truth_bits, dtype=np.int64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("eve and truth samples must be paired")
    if x.size == 0:
        return 0.0
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= x.size
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (px @ py)[nz])))


def record_mutual_information(record: EveRecord) -> float:
    """MI over the events that carry a ground-truth bit."""
    bits, truth = record.bits(), record.truth()
    keep = truth >= 0
    return mutual_information(bits[keep], truth[keep])


# --- exact density-matrix oracle -------------------------------------------

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_PROJ = {
    "Z": [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)],
    "X": [0.5 * np.array([[1, 1], [1, 1]], dtype=complex), 0.5 * np.array([[1, -1], [-1, 1]], dtype=complex)],
    "Y": [0.5 * np.array([[1, -1j], [1j, 1]], dtype=complex), 0.5 * np.array([[1, 1j], [-1j, 1]], dtype=complex)],
}


def _embed(op: np.ndarray, pos: int, M: int) -> np.ndarray:
    ops = [np.eye(2, dtype=complex)] * M
    ops[pos] = op
    return reduce(np.kron, ops)


def ghz_density(M: int) -> np.ndarray:
    v = np.zeros(2**M, dtype=complex)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return np.outer(v, v.conj())


def attacked_ghz_density(strategy: AttackStrategy, M: int) -> np.ndarray:
    """Density matrix of GHZ_M after the strategy acts on the target particle.

    Built directly from projector sums; independent of the state-vector path.
    """
    rho = ghz_density(M)
    if not strategy.active:
        return rho
    if strategy.kind is not AttackKind.INTERCEPT_RESEND:
        raise ValueError(f"no GHZ-link signature for {strategy.kind.value}")
    pos = strategy.link[1]
    if not 0 <= pos < M:
        raise ValueError(f"target party {pos} outside 0..{M - 1}")
    mix = {"Z": 0.5, "X": 0.5} if strategy.basis == RANDOM_ZX else {strategy.basis: 1.0}
    out = np.zeros_like(rho)
    for b, w in mix.items():
        for P in _PROJ[b]:
            E = _embed(P, pos, M)
            out += w * E @ rho @ E
    return out


def expected_attack_signature(strategy: AttackStrategy, M: int) -> tuple[float, float]:
    """Exact (qber_z, qber_x_parity) for one attacked GHZ_M system.

    qber_z is the probability that an all-Z measurement does not give M equal
    bits; qber_x_parity is the probability that the all-X eigenvalue product
    is -1.
    """
    if M > 6:
        raise ValueError("signature oracle supports M <= 6")
    if strategy.kind is AttackKind.TRAVELING_MEASURE_Z:
        raise ValueError("traveling-qubit attack has no GHZ-link signature")
    rho = attacked_ghz_density(strategy, M)
    diag = np.real(np.diag(rho))
    qber_z = 1.0 - diag[0] - diag[-1]
    xx = reduce(np.kron, [_PAULI["X"]] * M)
    exp_x = float(np.real(np.trace(rho @ xx)))
    qber_x = (1.0 - exp_x) / 2.0
    return float(np.clip(qber_z, 0, 1)), float(np.clip(qber_x, 0, 1))
