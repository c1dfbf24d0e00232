"""Lossy, noisy quantum links and an authenticated public broadcast bus."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .adversary import AttackStrategy, EveEvent, attack_intercept_resend
from .qcore import StateVector, apply_pauli

PAULI_ERRORS = ("X", "Y", "Z")


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class LinkConfig:
    src: int
    dst: int
    p_t: float = 1.0
    q_depol: float = 0.0

    def __post_init__(self):
        _check_prob(f"link ({self.src},{self.dst}) p_t", self.p_t)
        _check_prob(f"link ({self.src},{self.dst}) q_depol", self.q_depol)


@dataclass(frozen=True)
class DetectorConfig:
    party: int
    p_d: float = 1.0

    def __post_init__(self):
        _check_prob(f"detector {self.party} p_d", self.p_d)


@dataclass(frozen=True)
class Network:
    """Per-link and per-detector parameters; unlisted entries use the defaults."""

    links: dict[tuple[int, int], LinkConfig] = field(default_factory=dict)
    detectors: dict[int, DetectorConfig] = field(default_factory=dict)
    default_p_t: float = 1.0
    default_q_depol: float = 0.0
    default_p_d: float = 1.0

    @classmethod
    def ideal(cls) -> "Network":
        return cls()

    @classmethod
    def build(
        cls,
        links: Iterable[LinkConfig] = (),
        detectors: Iterable[DetectorConfig] = (),
        **defaults,
    ) -> "Network":
        return cls(
            links={(l.src, l.dst): l for l in links},
            detectors={d.party: d for d in detectors},
            **defaults,
        )

    def link(self, src: int, dst: int) -> LinkConfig:
        found = self.links.get((src, dst))
        if found is not None:
            return found
        return LinkConfig(src, dst, self.default_p_t, self.default_q_depol)

    def detector(self, party: int) -> DetectorConfig:
        found = self.detectors.get(party)
        if found is not None:
            return found
        return DetectorConfig(party, self.default_p_d)


@dataclass(frozen=True)
class Transmission:
    delivered: bool
    state: StateVector | None
    eve: EveEvent | None = None
    pauli: str | None = None


def transmit_qubit(
    state: StateVector,
    label: str,
    link: LinkConfig,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    event_id: int = 0,
) -> Transmission:
    """Send one qubit of a joint state across ``link``.

    Order: loss, then the adversary (if it targets this link), then a
    depolarizing kick (uniform X, Y or Z with probability ``q_depol``).
    """
    state.axis(label)
    if rng.random() >= link.p_t:
        return Transmission(False, None)
    eve = None
    if attack is not None and attack.applies_to(link.src, link.dst, label):
        eve, state = attack_intercept_resend(state, label, attack.draw_basis(rng), rng, event_id)
    pauli = None
    if link.q_depol > 0 and rng.random() < link.q_depol:
        pauli = PAULI_ERRORS[int(rng.integers(3))]
        state = apply_pauli(state, label, pauli)
    return Transmission(True, state, eve, pauli)


def detect(detector: DetectorConfig, rng: np.random.Generator) -> bool:
    """True when the detector fires."""
    return bool(rng.random() < detector.p_d)


@dataclass(frozen=True)
class BusMessage:
    sender: int
    round_id: int
    payload: Any


class ClassicalBus:
    """Append-only public channel; every party reads the same log."""

    def __init__(self):
        self._log: list[BusMessage] = []

    def broadcast(self, sender: int, payload: Any, round_id: int = 0) -> "ClassicalBus":
        self._log.append(BusMessage(sender, round_id, payload))
        return self

    @property
    def log(self) -> tuple[BusMessage, ...]:
        return tuple(self._log)

    def replay(self, party: int | None = None) -> tuple[BusMessage, ...]:
        """The log as seen by ``party``; identical for everyone."""
        return self.log

    def __len__(self) -> int:
        return len(self._log)


def broadcast(bus: ClassicalBus, sender: int, payload: Any, round_id: int = 0) -> ClassicalBus:
    return bus.broadcast(sender, payload, round_id)
