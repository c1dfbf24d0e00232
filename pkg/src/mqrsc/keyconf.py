"""GHZ key agreement with biased Z/X bases, followed by one-time-pad conferencing.

Every conferee measures its GHZ particle in Z with probability ``1 - p`` and in
X with probability ``p``.  Rounds where everyone used Z give identical key
bits; rounds where everyone used X have eigenvalue product +1 and are used as
eavesdropping samples together with an equally sized random subset of the
all-Z rounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .adversary import RANDOM_ZX, AttackKind, AttackStrategy, EveEvent, EveRecord
from .channel import ClassicalBus, Network, detect, transmit_qubit
from .qcore import Basis, Outcome, make_ghz, measure_qubit, measurement_distribution, party_labels

DEFAULT_ABORT_THRESHOLD = 0.02

FLAG_OK, FLAG_LOST, FLAG_SILENT = 0, 1, 2
_BASIS_CODE = {Basis.Z: 0, Basis.X: 1, Basis.Y: 2}
_CODE_BASIS = (Basis.Z, Basis.X, Basis.Y)


class RoundClass(IntEnum):
    DISCARDED_LOSS = 0
    DISCARDED_BASIS_MISMATCH = 1
    KEPT_Z = 2
    KEPT_X_SAMPLE = 3
    KEPT_Z_SAMPLE = 4


class KeyExhausted(ValueError):
    """Not enough one-time-pad key for the requested traffic."""


def basis_probability(r: float, M: int) -> float:
    """X-basis probability p with p**M == r/2."""
    if not 0.0 <= r <= 2.0:
        raise ValueError(f"sample ratio r must be in [0, 2], got {r!r}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return (r / 2.0) ** (1.0 / M)


def predicted_raw_key_rate(
    r: float, M: int, p_t: Sequence[float] = (), p_d: Sequence[float] = ()
) -> float:
    """(1 - (r/2)**(1/M))**M times the product of all link and detector probabilities."""
    for name, values in (("p_t", p_t), ("p_d", p_d)):
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} entries must be in [0, 1], got {v!r}")
    p = basis_probability(r, M)
    return (1.0 - p) ** M * math.prod(p_t) * math.prod(p_d)


@dataclass(frozen=True)
class Scheme1Config:
    M: int = 3
    rounds: int = 10_000
    sample_ratio: float = 0.054
    abort_threshold_z: float = DEFAULT_ABORT_THRESHOLD
    abort_threshold_x: float = DEFAULT_ABORT_THRESHOLD

    def __post_init__(self):
        if self.M < 3:
            raise ValueError(f"scheme 1 needs M >= 3 conferees, got {self.M}")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        basis_probability(self.sample_ratio, self.M)

    @property
    def p(self) -> float:
        return basis_probability(self.sample_ratio, self.M)

    def predicted_rate(self, network: Network) -> float:
        p_t = [network.link(0, l).p_t for l in range(1, self.M)]
        p_d = [network.detector(l).p_d for l in range(self.M)]
        return predicted_raw_key_rate(self.sample_ratio, self.M, p_t, p_d)


@dataclass(frozen=True)
class RoundRecord:
    round_id: int
    bases: tuple[Basis, ...]
    outcomes: tuple[Outcome | None, ...]
    flags: tuple[int, ...]
    classification: RoundClass
    eve: EveEvent | None = None


def classify(bases: Sequence[Basis], flags: Sequence[int]) -> RoundClass:
    if any(flags):
        return RoundClass.DISCARDED_LOSS
    first = bases[0]
    if any(b != first for b in bases):
        return RoundClass.DISCARDED_BASIS_MISMATCH
    return RoundClass.KEPT_Z if first == Basis.Z else RoundClass.KEPT_X_SAMPLE


def run_distribution_round(
    config: Scheme1Config,
    network: Network,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    round_id: int = 0,
    bus: ClassicalBus | None = None,
) -> RoundRecord:
    """One round, simulated step by step on the state vector.

    Party 0 prepares GHZ_M and sends particle l to party l.  If any particle
    is lost or any detector stays silent, the whole round is discarded and
    nobody records an outcome.
    """
    M, p = config.M, config.p
    labels = party_labels(M)
    state = make_ghz(M, labels)
    flags = [FLAG_OK] * M
    eve = None
    for l in range(1, M):
        tx = transmit_qubit(state, labels[l], network.link(0, l), attack, rng, round_id)
        if not tx.delivered:
            flags[l] = FLAG_LOST
            continue
        state = tx.state
        if tx.eve is not None:
            eve = tx.eve
    bases = tuple(Basis.X if rng.random() < p else Basis.Z for _ in range(M))
    for l in range(M):
        if not detect(network.detector(l), rng) and flags[l] == FLAG_OK:
            flags[l] = FLAG_SILENT
    outcomes: list[Outcome | None] = [None] * M
    if not any(flags):
        for l in range(M):
            outcomes[l], state = measure_qubit(state, labels[l], bases[l], rng)
    if bus is not None:
        for l in range(M):
            bus.broadcast(l, ("basis", bases[l].value, flags[l]), round_id)
    return RoundRecord(round_id, bases, tuple(outcomes), tuple(flags), classify(bases, flags), eve)


@dataclass
class RoundBatch:
    """Column-wise record of many rounds.

    ``bases``: 0 = Z, 1 = X.  ``bits``: -1 where no outcome was recorded.
    ``eve_bases``: -1 where Eve did not measure, else 0/1/2 for Z/X/Y.
    """

    bases: np.ndarray
    bits: np.ndarray
    flags: np.ndarray
    classification: np.ndarray
    eve_bases: np.ndarray
    eve_bits: np.ndarray

    @property
    def n(self) -> int:
        return int(self.bases.shape[0])

    @property
    def M(self) -> int:
        return int(self.bases.shape[1])

    def count(self, cls: RoundClass) -> int:
        return int(np.count_nonzero(self.classification == cls))

    @classmethod
    def from_records(cls, records: Sequence[RoundRecord]) -> "RoundBatch":
        M = len(records[0].bases) if records else 0
        n = len(records)
        bases = np.zeros((n, M), dtype=np.int8)
        bits = np.full((n, M), -1, dtype=np.int8)
        flags = np.zeros((n, M), dtype=np.int8)
        klass = np.zeros(n, dtype=np.int8)
        eve_b = np.full(n, -1, dtype=np.int8)
        eve_o = np.full(n, -1, dtype=np.int8)
        for i, rec in enumerate(records):
            bases[i] = [_BASIS_CODE[b] for b in rec.bases]
            bits[i] = [-1 if o is None else o.bit for o in rec.outcomes]
            flags[i] = rec.flags
            klass[i] = rec.classification
            if rec.eve is not None:
                eve_b[i] = _BASIS_CODE[rec.eve.basis]
                eve_o[i] = rec.eve.outcome.bit
        return cls(bases, bits, flags, klass, eve_b, eve_o)

    def records(self) -> list[RoundRecord]:
        out = []
        for i in range(self.n):
            eve = None
            if self.eve_bases[i] >= 0:
                eve = EveEvent(i, _CODE_BASIS[self.eve_bases[i]], Outcome(int(self.eve_bits[i])))
            out.append(
                RoundRecord(
                    i,
                    tuple(_CODE_BASIS[b] for b in self.bases[i]),
                    tuple(None if b < 0 else Outcome(int(b)) for b in self.bits[i]),
                    tuple(int(f) for f in self.flags[i]),
                    RoundClass(int(self.classification[i])),
                    eve,
                )
            )
        return out


@lru_cache(maxsize=4096)
def _round_distribution(
    M: int, bases: tuple[int, ...], paulis: tuple[int, ...], eve_pos: int, eve_basis: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact outcome table for one signature of a delivered round.

    Columns of the outcome table are (Eve's bit, if any, then the M party bits).
    """
    labels = party_labels(M)
    program: list[tuple] = []
    for l in range(1, M):
        if l == eve_pos:
            program.append(("measure", labels[l], _CODE_BASIS[eve_basis]))
        if paulis[l - 1]:
            program.append(("pauli", labels[l], "IXYZ"[paulis[l - 1]]))
    program += [("measure", labels[l], _CODE_BASIS[bases[l]]) for l in range(M)]
    dist = measurement_distribution(make_ghz(M, labels), program)
    keys = sorted(dist)
    table = np.array(keys, dtype=np.int8)
    probs = np.array([dist[k] for k in keys])
    # drop floating-point dust so impossible outcomes are never drawn
    probs[probs < 1e-14] = 0.0
    probs /= probs.sum()
    return table, probs


def run_distribution_rounds(
    config: Scheme1Config,
    network: Network,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
    n: int | None = None,
) -> RoundBatch:
    """Many rounds at once.

    Classical randomness (loss, detection, basis choice, noise, Eve's basis)
    is drawn per round; each delivered round's outcomes are then sampled
    from the exact joint Born distribution the state-vector engine computes
    for that round's signature.  Statistically identical to repeating
    :func:`run_distribution_round`.
    """
    n = config.rounds if n is None else n
    M, p = config.M, config.p
    links = [network.link(0, l) for l in range(1, M)]
    p_t = np.array([lk.p_t for lk in links])
    q = np.array([lk.q_depol for lk in links])
    p_d = np.array([network.detector(l).p_d for l in range(M)])

    lost = rng.random((n, M - 1)) >= p_t
    silent = rng.random((n, M)) >= p_d
    bases = (rng.random((n, M)) < p).astype(np.int8)
    kicks = rng.random((n, M - 1)) < q
    paulis = np.where(kicks, rng.integers(1, 4, size=(n, M - 1)), 0).astype(np.int8)

    eve_pos = 0
    eve_basis = np.full(n, -1, dtype=np.int8)
    if (
        attack is not None
        and attack.kind is AttackKind.INTERCEPT_RESEND
        and attack.link[0] == 0
        and 1 <= attack.link[1] < M
    ):
        eve_pos = attack.link[1]
        if attack.basis == RANDOM_ZX:
            eve_basis[:] = rng.integers(0, 2, size=n)
        else:
            eve_basis[:] = _BASIS_CODE[Basis(attack.basis)]
        # Eve only sees particles that survive to her
        eve_basis[lost[:, eve_pos - 1]] = -1

    flags = np.zeros((n, M), dtype=np.int8)
    flags[:, 1:][lost] = FLAG_LOST
    flags[(flags == FLAG_OK) & silent] = FLAG_SILENT
    discarded = np.any(flags != FLAG_OK, axis=1)

    klass = np.full(n, RoundClass.DISCARDED_BASIS_MISMATCH, dtype=np.int8)
    klass[np.all(bases == 0, axis=1)] = RoundClass.KEPT_Z
    klass[np.all(bases == 1, axis=1)] = RoundClass.KEPT_X_SAMPLE
    klass[discarded] = RoundClass.DISCARDED_LOSS

    bits = np.full((n, M), -1, dtype=np.int8)
    eve_bits = np.full(n, -1, dtype=np.int8)
    eve_measured = eve_basis.copy()
    eve_measured[discarded] = -1  # Eve's outcome on a discarded round is never sampled

    live = np.flatnonzero(~discarded)
    if live.size:
        code = np.zeros(live.size, dtype=np.int64)
        for l in range(M):
            code |= bases[live, l].astype(np.int64) << l
        shift = M
        for l in range(M - 1):
            code |= paulis[live, l].astype(np.int64) << (shift + 2 * l)
        shift += 2 * (M - 1)
        code |= (eve_basis[live].astype(np.int64) + 1) << shift
        uniq, inverse = np.unique(code, return_inverse=True)
        for u_idx, u in enumerate(uniq):
            rows = live[inverse == u_idx]
            b = tuple(int((u >> l) & 1) for l in range(M))
            pz = tuple(int((u >> (M + 2 * l)) & 3) for l in range(M - 1))
            eb = int(u >> shift) - 1
            table, probs = _round_distribution(M, b, pz, eve_pos if eb >= 0 else 0, max(eb, 0))
            draws = table[rng.choice(len(probs), size=rows.size, p=probs)]
            if eb >= 0:
                eve_bits[rows] = draws[:, 0]
                draws = draws[:, 1:]
            bits[rows] = draws
    return RoundBatch(bases, bits, flags, klass, eve_measured, eve_bits)


@dataclass
class SiftedKeySet:
    keys: np.ndarray  # (M, L) per-party key bits
    key_rounds: np.ndarray
    z_sample_rounds: np.ndarray

    @property
    def length(self) -> int:
        return int(self.keys.shape[1])


@dataclass
class SamplePartition:
    x_rounds: np.ndarray
    z_rounds: np.ndarray
    x_bits: np.ndarray
    z_bits: np.ndarray
    classification: np.ndarray


def sift_and_sample(batch: RoundBatch, rng: np.random.Generator) -> tuple[SiftedKeySet, SamplePartition]:
    """Split kept rounds into X samples, Z samples and key rounds.

    All all-X rounds are samples; a uniformly drawn subset of the all-Z
    rounds, as large as the X sample (clipped), is sampled too.
    """
    klass = batch.classification.copy()
    x_rounds = np.flatnonzero(klass == RoundClass.KEPT_X_SAMPLE)
    z_all = np.flatnonzero(klass == RoundClass.KEPT_Z)
    k = min(x_rounds.size, z_all.size)
    chosen = np.sort(rng.choice(z_all.size, size=k, replace=False)) if k else np.array([], dtype=np.int64)
    z_rounds = z_all[chosen]
    klass[z_rounds] = RoundClass.KEPT_Z_SAMPLE
    key_rounds = np.flatnonzero(klass == RoundClass.KEPT_Z)
    sifted = SiftedKeySet(batch.bits[key_rounds].T.copy(), key_rounds, z_rounds)
    partition = SamplePartition(x_rounds, z_rounds, batch.bits[x_rounds], batch.bits[z_rounds], klass)
    return sifted, partition


@dataclass(frozen=True)
class ErrorReport:
    """Sample error rates; a rate is ``None`` when its sample class is empty."""

    qber_z: float | None
    qber_x: float | None
    n_z_samples: int
    n_x_samples: int
    z_errors: int
    x_errors: int


def estimate_errors(partition: SamplePartition) -> ErrorReport:
    zb, xb = partition.z_bits, partition.x_bits
    z_err = int(np.count_nonzero(np.any(zb != zb[:, :1], axis=1))) if zb.size else 0
    # eigenvalue product is -1 exactly when an odd number of bits are 1
    x_err = int(np.count_nonzero(xb.sum(axis=1) % 2)) if xb.size else 0
    nz, nx = len(zb), len(xb)
    return ErrorReport(z_err / nz if nz else None, x_err / nx if nx else None, nz, nx, z_err, x_err)


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: str = ""

    @property
    def aborted(self) -> bool:
        return not self.accepted


def accept_or_abort(report: ErrorReport, config: Scheme1Config) -> Decision:
    if report.qber_x is None:
        return Decision(False, "no X-basis samples")
    if report.qber_z is None:
        return Decision(False, "no Z-basis samples")
    if report.qber_z > config.abort_threshold_z:
        return Decision(False, f"qber_z {report.qber_z:.4f} > {config.abort_threshold_z}")
    if report.qber_x > config.abort_threshold_x:
        return Decision(False, f"qber_x {report.qber_x:.4f} > {config.abort_threshold_x}")
    return Decision(True)


def distill_raw_key(sifted: SiftedKeySet) -> list[np.ndarray]:
    """Per-party raw keys.  No reconciliation: noisy runs may leave mismatches."""
    return [row.astype(np.uint8) for row in sifted.keys]


def key_mismatches(keys: Sequence[np.ndarray]) -> int:
    """Positions where the parties' raw keys disagree."""
    if not keys or keys[0].size == 0:
        return 0
    stacked = np.vstack(keys)
    return int(np.count_nonzero(np.any(stacked != stacked[:1], axis=0)))


@dataclass
class KeyAgreementResult:
    batch: RoundBatch
    sifted: SiftedKeySet
    partition: SamplePartition
    report: ErrorReport
    decision: Decision
    keys: list[np.ndarray]
    eve: EveRecord = field(default_factory=EveRecord)


def run_key_agreement(
    config: Scheme1Config,
    network: Network,
    attack: AttackStrategy | None,
    rng: np.random.Generator,
) -> KeyAgreementResult:
    """Distribution, sifting, sampling, error estimation and distillation.

    Eve's record pairs each of Eve's outcomes on a key round with party 0's key bit.
    Keys are empty when the run aborts.
    """
    batch = run_distribution_rounds(config, network, attack, rng)
    sifted, partition = sift_and_sample(batch, rng)
    report = estimate_errors(partition)
    decision = accept_or_abort(report, config)
    keys = distill_raw_key(sifted) if decision.accepted else [np.zeros(0, np.uint8)] * config.M
    eve = EveRecord()
    for pos, r in enumerate(sifted.key_rounds):
        if batch.eve_bases[r] >= 0:
            eve.append(
                EveEvent(int(r), _CODE_BASIS[batch.eve_bases[r]], Outcome(int(batch.eve_bits[r])),
                         int(sifted.keys[0, pos]))
            )
    return KeyAgreementResult(batch, sifted, partition, report, decision, keys, eve)


# --- one-time pad conferencing ---------------------------------------------


def otp_encrypt(message: Sequence[int], key: Sequence[int]) -> np.ndarray:
    m = np.asarray(message, dtype=np.uint8)
    k = np.asarray(key, dtype=np.uint8)
    if k.size < m.size:
        raise KeyExhausted(f"message needs {m.size} key bits, only {k.size} available")
    return m ^ k[: m.size]


otp_decrypt = otp_encrypt


def allocate_segments(lengths: Mapping[int, int], key_length: int, start: int = 0) -> dict[int, tuple[int, int]]:
    """Contiguous, disjoint key segments per sender, in party-id order."""
    segments = {}
    pos = start
    for sender in sorted(lengths):
        segments[sender] = (pos, pos + int(lengths[sender]))
        pos += int(lengths[sender])
    if pos > key_length:
        raise KeyExhausted(f"conference needs {pos} key bits, only {key_length} available")
    return segments


def _check_segments(segments: Mapping[int, tuple[int, int]], key_length: int) -> None:
    spans = sorted(segments.values())
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1:
            raise ValueError(f"key segments overlap: {(a0, a1)} and {(b0, b1)}")
    for a, b in spans:
        if a < 0 or b < a:
            raise ValueError(f"bad key segment {(a, b)}")
        if b > key_length:
            raise KeyExhausted(f"segment {(a, b)} runs past key length {key_length}")


@dataclass
class ConferenceResult:
    recovered: dict[int, dict[int, np.ndarray]]
    ciphertexts: dict[int, np.ndarray]
    segments: dict[int, tuple[int, int]]
    consumed: int
    bus: ClassicalBus


def run_secret_conference(
    keys: Sequence[np.ndarray],
    messages: Mapping[int, Sequence[int]],
    segments: Mapping[int, tuple[int, int]] | None = None,
    bus: ClassicalBus | None = None,
) -> ConferenceResult:
    """Every sender broadcasts its one-time-padded message; every other party decrypts.

    ``keys[i]`` is party i's copy of the shared key.  Key sufficiency and
    segment disjointness are checked before anything is broadcast.
    """
    key_len = min(len(k) for k in keys)
    msgs = {s: np.asarray(m, dtype=np.uint8) for s, m in messages.items()}
    if segments is None:
        segments = allocate_segments({s: m.size for s, m in msgs.items()}, key_len)
    else:
        segments = dict(segments)
        for s, m in msgs.items():
            a, b = segments[s]
            if b - a < m.size:
                raise KeyExhausted(f"segment for sender {s} holds {b - a} bits, message has {m.size}")
    _check_segments(segments, key_len)
    bus = ClassicalBus() if bus is None else bus

    ciphertexts = {}
    for s in sorted(msgs):
        a, b = segments[s]
        ciphertexts[s] = otp_encrypt(msgs[s], keys[s][a:b])
        bus.broadcast(s, ("ciphertext", ciphertexts[s].tobytes()))
    recovered: dict[int, dict[int, np.ndarray]] = {r: {} for r in range(len(keys))}
    for s, c in ciphertexts.items():
        a, _ = segments[s]
        for r in range(len(keys)):
            if r != s:
                recovered[r][s] = otp_decrypt(c, keys[r][a : a + c.size])
    consumed = sum(m.size for m in msgs.values())
    return ConferenceResult(recovered, ciphertexts, segments, consumed, bus)
