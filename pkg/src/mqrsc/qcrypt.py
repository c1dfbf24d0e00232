"""Conferencing with a reusable quantum key of shared GHZ systems.

The sender CNOTs its key qubit onto a traveling qubit T carrying one message
bit.  T hops along the conferee chain; each middle conferee copies the bit
onto a fresh ancilla (CNOT key->ancilla, CNOT T->ancilla) and measures the
ancilla, and the last conferee undoes the encryption with its own key qubit
and measures T.  The key system is left in its original GHZ state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .adversary import TRAVELING_LABEL, AttackStrategy, EveEvent, EveRecord
from .channel import ClassicalBus, Network, detect, transmit_qubit
from .qcore import (
    Basis,
    StateVector,
    apply_cnot,
    attach_qubit,
    fidelity,
    make_ghz,
    measure_and_discard,
    party_labels,
)

ANCILLA_LABEL = "b"
DEFAULT_PARITY_THRESHOLD = 0.02


class SystemStatus(str, Enum):
    FRESH = "fresh"
    IN_USE = "in_use"
    CHECKED_CONSUMED = "checked_consumed"
    COMPROMISED = "compromised"


@dataclass
class QuantumKeySystem:
    index: int
    state: StateVector
    status: SystemStatus = SystemStatus.FRESH

    @property
    def M(self) -> int:
        return sum(1 for l in self.state.labels if l not in (TRAVELING_LABEL, ANCILLA_LABEL))

    def ghz_fidelity(self) -> float:
        return fidelity(self.state, make_ghz(self.M, self.state.labels))


@dataclass
class QuantumKey:
    systems: list[QuantumKeySystem]
    M: int
    original_length: int = 0

    def __post_init__(self):
        if not self.original_length:
            self.original_length = len(self.systems)

    def usable(self) -> list[QuantumKeySystem]:
        return [s for s in self.systems if s.status is SystemStatus.FRESH]

    @property
    def usable_length(self) -> int:
        return len(self.usable())

    @classmethod
    def ideal(cls, M: int, N: int) -> "QuantumKey":
        return cls([QuantumKeySystem(j, make_ghz(M)) for j in range(N)], M)


@dataclass(frozen=True)
class CheckRecord:
    index: int
    other_bases: tuple[Basis, ...]
    preparer_basis: Basis
    outcomes: tuple[int, ...]
    expected_parity: int
    observed_parity: int

    @property
    def passed(self) -> bool:
        return self.expected_parity == self.observed_parity


@dataclass(frozen=True)
class CheckReport:
    records: tuple[CheckRecord, ...]
    threshold: float = DEFAULT_PARITY_THRESHOLD

    @property
    def n_checks(self) -> int:
        return len(self.records)

    @property
    def parity_errors(self) -> int:
        return sum(not r.passed for r in self.records)

    @property
    def error_rate(self) -> float | None:
        return self.parity_errors / self.n_checks if self.records else None

    @property
    def aborted(self) -> bool:
        rate = self.error_rate
        return rate is not None and rate > self.threshold


def choose_check_bases(other_bases: Sequence[Basis]) -> tuple[Basis, int]:
    """Preparer's basis and the expected eigenvalue product.

    The preparer picks X when the others used Y an even number of times and
    Y otherwise, so the total Y count 2k is even and the product is (-1)**k.
    """
    others = [Basis(b) for b in other_bases]
    if any(b not in (Basis.X, Basis.Y) for b in others):
        raise ValueError("check bases must be X or Y")
    n_y = sum(b is Basis.Y for b in others)
    preparer = Basis.X if n_y % 2 == 0 else Basis.Y
    total_y = n_y + (preparer is Basis.Y)
    return preparer, (-1) ** (total_y // 2)


def check_system(
    system: QuantumKeySystem,
    rng: np.random.Generator,
    network: Network | None = None,
    bus: ClassicalBus | None = None,
) -> CheckRecord | None:
    """X/Y parity check on one key system; the system is consumed.

    Returns ``None`` when a detector stays silent (the check is void).
    """
    state = system.state
    labels = state.labels[: system.M]
    M = len(labels)
    system.status = SystemStatus.CHECKED_CONSUMED
    if network is not None and not all(detect(network.detector(l), rng) for l in range(M)):
        return None
    others = tuple(Basis.Y if rng.random() < 0.5 else Basis.X for _ in range(1, M))
    preparer, expected = choose_check_bases(others)
    outcomes = [0] * M
    for l in range(1, M):
        o, state = measure_and_discard(state, labels[l], others[l - 1], rng)
        outcomes[l] = o.bit
        if bus is not None:
            bus.broadcast(l, ("check", system.index, others[l - 1].value, o.bit))
    o, state = measure_and_discard(state, labels[0], preparer, rng)
    outcomes[0] = o.bit
    observed = (-1) ** (sum(outcomes) % 2)
    system.state = state
    return CheckRecord(system.index, others, preparer, tuple(outcomes), expected, observed)


def establish_quantum_key(
    M: int,
    N: int,
    check_fraction: float,
    network: Network,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    threshold: float = DEFAULT_PARITY_THRESHOLD,
    bus: ClassicalBus | None = None,
    eve: EveRecord | None = None,
) -> tuple[QuantumKey, CheckReport]:
    """Party 0 prepares N GHZ_M systems and sends particle l to party l.

    Systems with a lost particle are dropped.  Each delivered system is
    checked independently with probability ``check_fraction``; the rest form
    the key.  On abort every key system is marked compromised.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0.0 <= check_fraction < 1.0:
        raise ValueError(f"check_fraction must be in [0, 1), got {check_fraction!r}")
    labels = party_labels(M)
    systems: list[QuantumKeySystem] = []
    records = []
    for j in range(N):
        state = make_ghz(M, labels)
        delivered = True
        for l in range(1, M):
            tx = transmit_qubit(state, labels[l], network.link(0, l), attack, rng, j)
            if not tx.delivered:
                delivered = False
                break
            state = tx.state
            if tx.eve is not None and eve is not None:
                eve.append(tx.eve)
        if not delivered:
            continue
        system = QuantumKeySystem(j, state)
        if rng.random() < check_fraction:
            rec = check_system(system, rng, network, bus)
            if rec is not None:
                records.append(rec)
            continue
        systems.append(system)
    report = CheckReport(tuple(records), threshold)
    if report.aborted:
        for s in systems:
            s.status = SystemStatus.COMPROMISED
    return QuantumKey(systems, M, N), report


def encrypt_bit(system: QuantumKeySystem, m: int, key_label: str | None = None) -> QuantumKeySystem:
    """Attach T in |m> and CNOT the sender's key qubit onto it."""
    if system.status is not SystemStatus.FRESH:
        raise ValueError(f"key system {system.index} is {system.status.value}, not fresh")
    if TRAVELING_LABEL in system.state.labels:
        raise ValueError(f"key system {system.index} already has a traveling qubit in flight")
    key_label = system.state.labels[0] if key_label is None else key_label
    state = attach_qubit(system.state, TRAVELING_LABEL, int(m))
    system.state = apply_cnot(state, key_label, TRAVELING_LABEL)
    system.status = SystemStatus.IN_USE
    return system


def intermediate_decrypt(
    system: QuantumKeySystem, key_label: str, rng: np.random.Generator
) -> tuple[int, QuantumKeySystem]:
    """Copy the plaintext bit onto an ancilla and read it in Z; T stays in flight."""
    if TRAVELING_LABEL not in system.state.labels:
        raise KeyError(f"key system {system.index} has no traveling qubit")
    state = attach_qubit(system.state, ANCILLA_LABEL, 0)
    state = apply_cnot(state, key_label, ANCILLA_LABEL)
    state = apply_cnot(state, TRAVELING_LABEL, ANCILLA_LABEL)
    outcome, system.state = measure_and_discard(state, ANCILLA_LABEL, Basis.Z, rng)
    return outcome.bit, system


def final_decrypt(
    system: QuantumKeySystem, key_label: str, rng: np.random.Generator
) -> tuple[int, QuantumKeySystem]:
    """Undo the encryption with the last key qubit and measure T in Z."""
    if TRAVELING_LABEL not in system.state.labels:
        raise KeyError(f"key system {system.index} has no traveling qubit")
    state = apply_cnot(system.state, key_label, TRAVELING_LABEL)
    outcome, system.state = measure_and_discard(state, TRAVELING_LABEL, Basis.Z, rng)
    system.status = SystemStatus.FRESH
    return outcome.bit, system


def conferee_chain(sender: int, M: int) -> list[int]:
    return [sender] + [p for p in range(M) if p != sender]


@dataclass
class MessageRoundReport:
    recovered: dict[int, list[int | None]]
    systems_used: list[int]
    flagged: list[int]
    attempts: int
    exhausted: bool
    eve: EveRecord = field(default_factory=EveRecord)
    attacked_systems: list[int] = field(default_factory=list)

    def accuracy(self, message: Sequence[int]) -> float:
        total = ok = 0
        for bits in self.recovered.values():
            for got, want in zip(bits, message):
                total += 1
                ok += got == want
        return ok / total if total else 1.0


def run_message_round(
    key: QuantumKey,
    sender: int,
    message: Sequence[int],
    network: Network,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    bus: ClassicalBus | None = None,
) -> MessageRoundReport:
    """Send ``message`` bit by bit along the chain sender -> others in party order.

    A traveling qubit lost on any hop flags its key system compromised and the
    bit is resent on the next fresh system.  If the key runs out mid-message,
    the remaining positions stay ``None``.
    """
    message = [int(b) for b in message]
    usable = key.usable()
    if len(usable) < len(message):
        raise ValueError(f"key has {len(usable)} usable systems, message needs {len(message)}")
    M = key.M
    labels = party_labels(M)
    chain = conferee_chain(sender, M)
    recovered: dict[int, list[int | None]] = {p: [None] * len(message) for p in chain[1:]}
    report = MessageRoundReport(recovered, [], [], 0, False)
    pool = iter(usable)
    for pos, m in enumerate(message):
        while True:
            system = next(pool, None)
            if system is None:
                report.exhausted = True
                return report
            report.attempts += 1
            report.systems_used.append(system.index)
            encrypt_bit(system, m, labels[sender])
            arrived = True
            for hop, (a, b) in enumerate(zip(chain, chain[1:])):
                tx = transmit_qubit(system.state, TRAVELING_LABEL, network.link(a, b), attack, rng, system.index)
                if not tx.delivered:
                    arrived = False
                    break
                system.state = tx.state
                if tx.eve is not None:
                    report.eve.append(EveEvent(system.index, tx.eve.basis, tx.eve.outcome, m))
                    report.attacked_systems.append(system.index)
                if hop + 1 < len(chain) - 1:
                    bit, _ = intermediate_decrypt(system, labels[b], rng)
                else:
                    bit, _ = final_decrypt(system, labels[b], rng)
                recovered[b][pos] = bit
            if arrived:
                break
            system.status = SystemStatus.COMPROMISED
            report.flagged.append(system.index)
            if bus is not None:
                bus.broadcast(sender, ("lost", system.index, pos))
    return report


def reuse_check(
    key: QuantumKey,
    fraction: float,
    rng: np.random.Generator,
    threshold: float = DEFAULT_PARITY_THRESHOLD,
    network: Network | None = None,
    bus: ClassicalBus | None = None,
) -> tuple[CheckReport, QuantumKey]:
    """Consume ceil(fraction * usable) random key systems in X/Y parity checks."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"check fraction must be in (0, 1], got {fraction!r}")
    usable = key.usable()
    k = min(len(usable), math.ceil(fraction * len(usable)))
    picks = rng.choice(len(usable), size=k, replace=False) if k else []
    records = []
    for i in sorted(picks):
        rec = check_system(usable[i], rng, network, bus)
        if rec is not None:
            records.append(rec)
    report = CheckReport(tuple(records), threshold)
    if report.aborted:
        for s in key.usable():
            s.status = SystemStatus.COMPROMISED
    return report, key
