"""Scenario files, seeded Monte Carlo trials, reports and the exhaustive oracle."""
from __future__ import annotations

import csv
import io
import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adversary import (
    RANDOM_ZX,
    AttackStrategy,
    EveRecord,
    attacked_ghz_density,
    expected_attack_signature,
    mutual_information,
    record_mutual_information,
)
from .channel import DetectorConfig, LinkConfig, Network
from .keyconf import (
    KeyExhausted,
    RoundClass,
    Scheme1Config,
    key_mismatches,
    run_key_agreement,
    run_secret_conference,
)
from .qcore import Basis, born_enumeration, make_ghz, measurement_distribution, party_labels
from .qcrypt import (
    QuantumKeySystem,
    encrypt_bit,
    establish_quantum_key,
    reuse_check,
    run_message_round,
)

CSV_COLUMNS = (
    "trial", "scheme", "M", "rounds", "kept_z", "kept_x_samples", "z_samples",
    "raw_key_len", "empirical_rate", "predicted_rate", "qber_z", "qber_x",
    "min_key_fidelity", "bit_accuracy", "eve_mi",
)  # fmt: skip

MODES = ("keygen", "conference", "qkey")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment.  ``rounds`` is the round count (scheme 1) or key length N (scheme 2)."""

    scheme: int
    M: int
    seed: int
    trials: int = 1
    mode: str = "keygen"
    rounds: int = 10_000
    sample_ratio: float = 0.054
    check_fraction: float = 0.2
    reuse_fraction: float = 0.1
    message_bits: int | None = None
    sender: int = 0
    abort_threshold_z: float = 0.02
    abort_threshold_x: float = 0.02
    network: Network = field(default_factory=Network)
    attack: AttackStrategy = field(default_factory=AttackStrategy)
    sweep: Mapping[str, tuple] | None = None

    def scheme1(self) -> Scheme1Config:
        return Scheme1Config(
            self.M, self.rounds, self.sample_ratio, self.abort_threshold_z, self.abort_threshold_x
        )


_TOP_KEYS = {
    "scheme", "M", "seed", "trials", "mode", "rounds", "sample_ratio", "check_fraction",
    "reuse_fraction", "message_bits", "sender", "abort_threshold_z", "abort_threshold_x",
    "p_t", "q_depol", "p_d", "links", "detectors", "attack", "sweep",
}  # fmt: skip
_LINK_KEYS = {"from", "to", "p_t", "q_depol"}
_DET_KEYS = {"party", "p_d"}
_ATTACK_KEYS = {"kind", "basis", "target"}
_SWEEP_KEYS = {"M", "sample_ratio", "p_t", "p_d"}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_scenario(data: Mapping[str, Any]) -> ScenarioConfig:
    """Validate a decoded scenario table; every problem is reported with its field path."""
    errs: list[str] = []

    def prob(path, v):
        if not _is_num(v) or not 0.0 <= v <= 1.0:
            errs.append(f"{path}: must be a probability in [0, 1], got {v!r}")

    for k in sorted(set(data) - _TOP_KEYS):
        errs.append(f"{k}: unknown key")
    if "seed" not in data:
        errs.append("seed: missing (a master seed is mandatory)")
    elif not _is_int(data["seed"]) or data["seed"] < 0:
        errs.append(f"seed: must be a non-negative integer, got {data['seed']!r}")
    scheme = data.get("scheme", 1)
    if scheme not in (1, 2):
        errs.append(f"scheme: must be 1 or 2, got {scheme!r}")
    M = data.get("M", 3)
    if not _is_int(M) or not 3 <= M <= 20:
        errs.append(f"M: must be an integer in [3, 20], got {M!r}")
        M = 3
    for key, lo in (("trials", 1), ("rounds", 1)):
        if key in data and (not _is_int(data[key]) or data[key] < lo):
            errs.append(f"{key}: must be an integer >= {lo}, got {data[key]!r}")
    mode = data.get("mode", "keygen" if scheme == 1 else "qkey")
    if mode not in MODES:
        errs.append(f"mode: must be one of {MODES}, got {mode!r}")
    if "sample_ratio" in data:
        r = data["sample_ratio"]
        if not _is_num(r) or not 0.0 <= r <= 2.0:
            errs.append(f"sample_ratio: must be in [0, 2], got {r!r}")
    for key in ("reuse_fraction", "abort_threshold_z", "abort_threshold_x", "p_t", "q_depol", "p_d"):
        if key in data:
            prob(key, data[key])
    if "reuse_fraction" in data and data["reuse_fraction"] == 0:
        errs.append("reuse_fraction: must be > 0")
    if "check_fraction" in data:
        cf = data["check_fraction"]
        if not _is_num(cf) or not 0.0 <= cf < 1.0:
            errs.append(f"check_fraction: must be in [0, 1), got {cf!r}")
    if "message_bits" in data and (not _is_int(data["message_bits"]) or data["message_bits"] < 0):
        errs.append(f"message_bits: must be a non-negative integer, got {data['message_bits']!r}")
    sender = data.get("sender", 0)
    if not _is_int(sender) or not 0 <= sender < M:
        errs.append(f"sender: must be a party id in [0, {M}), got {sender!r}")

    links = []
    for i, raw in enumerate(data.get("links", [])):
        path = f"links[{i}]"
        if not isinstance(raw, Mapping):
            errs.append(f"{path}: must be a table")
            continue
        for k in sorted(set(raw) - _LINK_KEYS):
            errs.append(f"{path}.{k}: unknown key")
        ok = True
        for end in ("from", "to"):
            v = raw.get(end)
            if not _is_int(v) or not 0 <= v < M:
                errs.append(f"{path}.{end}: must be a party id in [0, {M}), got {v!r}")
                ok = False
        for k in ("p_t", "q_depol"):
            if k in raw:
                before = len(errs)
                prob(f"{path}.{k}", raw[k])
                ok = ok and len(errs) == before
        if ok:
            try:
                links.append(LinkConfig(raw["from"], raw["to"], raw.get("p_t", data.get("p_t", 1.0)),
                                        raw.get("q_depol", data.get("q_depol", 0.0))))
            except ValueError as exc:
                errs.append(f"{path}: {exc}")
    detectors = []
    for i, raw in enumerate(data.get("detectors", [])):
        path = f"detectors[{i}]"
        if not isinstance(raw, Mapping):
            errs.append(f"{path}: must be a table")
            continue
        for k in sorted(set(raw) - _DET_KEYS):
            errs.append(f"{path}.{k}: unknown key")
        party = raw.get("party")
        if not _is_int(party) or not 0 <= party < M:
            errs.append(f"{path}.party: must be a party id in [0, {M}), got {party!r}")
            continue
        if "p_d" in raw:
            before = len(errs)
            prob(f"{path}.p_d", raw["p_d"])
            if len(errs) != before:
                continue
        try:
            detectors.append(DetectorConfig(party, raw.get("p_d", data.get("p_d", 1.0))))
        except ValueError as exc:
            errs.append(f"{path}: {exc}")

    attack = AttackStrategy()
    if "attack" in data:
        raw = data["attack"]
        for k in sorted(set(raw) - _ATTACK_KEYS):
            errs.append(f"attack.{k}: unknown key")
        try:
            target = raw.get("target")
            if target is not None:
                if len(target) != 2 or not all(_is_int(t) and 0 <= t < M for t in target):
                    raise ValueError(f"target must be a pair of party ids, got {target!r}")
            attack = AttackStrategy(raw.get("kind", "none"), raw.get("basis"), target)
        except (ValueError, TypeError) as exc:
            errs.append(f"attack: {exc}")

    sweep = None
    if "sweep" in data:
        raw = data["sweep"]
        for k in sorted(set(raw) - _SWEEP_KEYS):
            errs.append(f"sweep.{k}: unknown key")
        sweep = {}
        for k in sorted(_SWEEP_KEYS & set(raw)):
            vals = raw[k]
            if not isinstance(vals, list) or not vals:
                errs.append(f"sweep.{k}: must be a non-empty list")
                continue
            sweep[k] = tuple(vals)

    if errs:
        raise ConfigError(errs)

    net_defaults = {
        "default_p_t": data.get("p_t", 1.0),
        "default_q_depol": data.get("q_depol", 0.0),
        "default_p_d": data.get("p_d", 1.0),
    }
    kwargs = {k: data[k] for k in (
        "trials", "rounds", "sample_ratio", "check_fraction", "reuse_fraction", "message_bits",
        "abort_threshold_z", "abort_threshold_x",
    ) if k in data}  # fmt: skip
    return ScenarioConfig(
        scheme=scheme, M=M, seed=data["seed"], mode=mode, sender=sender,
        network=Network.build(links, detectors, **net_defaults), attack=attack, sweep=sweep,
        **kwargs,
    )  # fmt: skip


def load_scenario(path: str | Path, overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    """Read a TOML scenario file.  ``overrides`` replace top-level keys before validation."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: parse error: {exc}"]) from exc
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return parse_scenario(data)


# --- trials -----------------------------------------------------------------


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Per-trial seed: numpy's SeedSequence hash of (master seed, spawn key = trial index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(trial,))


@dataclass(frozen=True)
class TrialStats:
    trial: int
    scheme: int
    M: int
    rounds: int
    kept_z: int | None = None
    kept_x_samples: int | None = None
    z_samples: int | None = None
    raw_key_len: int | None = None
    empirical_rate: float | None = None
    predicted_rate: float | None = None
    qber_z: float | None = None
    qber_x: float | None = None
    min_key_fidelity: float | None = None
    bit_accuracy: float | None = None
    eve_mi: float | None = None
    # pooled counts for aggregation
    z_errors: int = 0
    x_errors: int = 0
    n_z_checks: int = 0
    n_x_checks: int = 0
    bits_total: int = 0
    bits_correct: int = 0
    rate_hits: int = 0
    rate_trials: int = 0
    aborted: bool = False
    abort_reason: str = ""
    key_mismatches: int = 0

    def row(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def _run_keygen(cfg: ScenarioConfig, trial: int, rng: np.random.Generator) -> tuple[TrialStats, Any]:
    s1 = cfg.scheme1()
    res = run_key_agreement(s1, cfg.network, cfg.attack, rng)
    b, rep = res.batch, res.report
    kept_z = b.count(RoundClass.KEPT_Z)
    stats = TrialStats(
        trial=trial, scheme=1, M=cfg.M, rounds=b.n,
        kept_z=kept_z, kept_x_samples=rep.n_x_samples, z_samples=rep.n_z_samples,
        raw_key_len=res.sifted.length,
        empirical_rate=kept_z / b.n if b.n else None,
        predicted_rate=s1.predicted_rate(cfg.network),
        qber_z=rep.qber_z, qber_x=rep.qber_x,
        eve_mi=record_mutual_information(res.eve),
        z_errors=rep.z_errors, x_errors=rep.x_errors,
        n_z_checks=rep.n_z_samples, n_x_checks=rep.n_x_samples,
        rate_hits=kept_z, rate_trials=b.n,
        aborted=res.decision.aborted, abort_reason=res.decision.reason,
        key_mismatches=key_mismatches(res.keys),
    )  # fmt: skip
    return stats, res


def _run_conference(cfg: ScenarioConfig, trial: int, rng: np.random.Generator) -> TrialStats:
    stats, res = _run_keygen(cfg, trial, rng)
    if stats.aborted:
        return stats
    n_bits = 8 if cfg.message_bits is None else cfg.message_bits
    messages = {s: rng.integers(0, 2, n_bits, dtype=np.uint8) for s in range(cfg.M)}
    try:
        conf = run_secret_conference(res.keys, messages)
    except KeyExhausted as exc:
        return replace(stats, aborted=True, abort_reason=str(exc))
    total = correct = 0
    for r, by_sender in conf.recovered.items():
        for s, bits in by_sender.items():
            total += bits.size
            correct += int(np.count_nonzero(bits == messages[s]))
    plain = np.concatenate([messages[s] for s in sorted(messages)])
    cipher = np.concatenate([conf.ciphertexts[s] for s in sorted(messages)])
    return replace(
        stats,
        bit_accuracy=correct / total if total else None,
        bits_total=total, bits_correct=correct,
        eve_mi=mutual_information(cipher, plain),
    )  # fmt: skip


def _run_qkey(cfg: ScenarioConfig, trial: int, rng: np.random.Generator) -> TrialStats:
    eve = EveRecord()
    key, est = establish_quantum_key(
        cfg.M, cfg.rounds, cfg.check_fraction, cfg.network, cfg.attack, rng,
        threshold=cfg.abort_threshold_x, eve=eve,
    )  # fmt: skip
    delivered = len(key.systems)
    star = [cfg.network.link(0, l).p_t for l in range(1, cfg.M)]
    base = dict(
        trial=trial, scheme=2, M=cfg.M, rounds=cfg.rounds,
        empirical_rate=delivered / cfg.rounds,
        predicted_rate=(1.0 - cfg.check_fraction) * math.prod(star),
        rate_hits=delivered, rate_trials=cfg.rounds,
    )  # fmt: skip
    if est.aborted:
        return TrialStats(
            **base, kept_x_samples=est.n_checks, raw_key_len=key.usable_length,
            qber_x=est.error_rate, x_errors=est.parity_errors, n_x_checks=est.n_checks,
            aborted=True, abort_reason=f"parity error rate {est.error_rate:.4f} > {est.threshold}",
        )  # fmt: skip
    n_bits = key.usable_length if cfg.message_bits is None else min(cfg.message_bits, key.usable_length)
    message = rng.integers(0, 2, n_bits)
    rnd = run_message_round(key, cfg.sender, message, cfg.network, cfg.attack, rng)
    total = sum(len(v) for v in rnd.recovered.values())
    correct = sum(
        int(got == want) for bits in rnd.recovered.values() for got, want in zip(bits, message)
    )
    used = {s.index: s for s in key.systems}
    fids = [used[i].ghz_fidelity() for i in set(rnd.systems_used) if i not in set(rnd.flagged)]
    reuse, key = reuse_check(key, cfg.reuse_fraction, rng, cfg.abort_threshold_x)
    n_checks = est.n_checks + reuse.n_checks
    errors = est.parity_errors + reuse.parity_errors
    return TrialStats(
        **base,
        kept_x_samples=n_checks, raw_key_len=key.usable_length,
        qber_x=errors / n_checks if n_checks else None,
        min_key_fidelity=min(fids) if fids else None,
        bit_accuracy=correct / total if total else None,
        eve_mi=record_mutual_information(rnd.eve),
        x_errors=errors, n_x_checks=n_checks, bits_total=total, bits_correct=correct,
        aborted=reuse.aborted,
        abort_reason="reuse check parity errors above threshold" if reuse.aborted else "",
    )  # fmt: skip


def run_trial(cfg: ScenarioConfig, trial: int) -> TrialStats:
    rng = np.random.default_rng(trial_seed(cfg.seed, trial))
    if cfg.scheme == 2:
        return _run_qkey(cfg, trial, rng)
    if cfg.mode == "conference":
        return _run_conference(cfg, trial, rng)
    return _run_keygen(cfg, trial, rng)[0]


def _run_trial_args(args):
    return run_trial(*args)


@dataclass(frozen=True)
class RunStats:
    trials: tuple[TrialStats, ...]
    aggregate: dict[str, Any]

    @property
    def all_aborted(self) -> bool:
        return all(t.aborted for t in self.trials)

    def rate_ci(self, z: float = 3.0) -> tuple[float, float]:
        """Normal-approximation binomial interval around the predicted rate."""
        n = self.aggregate["_rate_trials"]
        p = self.aggregate["predicted_rate"]
        half = z * math.sqrt(p * (1 - p) / n) if n and p is not None else float("nan")
        return p - half, p + half

    def rate_z_score(self) -> float:
        n = self.aggregate["_rate_trials"]
        p = self.aggregate["predicted_rate"]
        emp = self.aggregate["empirical_rate"]
        sigma = math.sqrt(p * (1 - p) / n)
        if sigma == 0:
            return 0.0 if emp == p else math.inf
        return (emp - p) / sigma


def _opt_min(values):
    vals = [v for v in values if v is not None]
    return min(vals) if vals else None


def aggregate(trials) -> dict[str, Any]:
    """Pool per-trial results.  Uses integer sums, min and fsum, so input order is irrelevant."""
    ts = sorted(trials, key=lambda t: t.trial)
    if not ts:
        raise ValueError("nothing to aggregate")

    def total(name):
        vals = [getattr(t, name) for t in ts]
        return None if any(v is None for v in vals) else sum(vals)

    def ratio(num, den):
        return num / den if den else None

    rate_hits = sum(t.rate_hits for t in ts)
    rate_trials = sum(t.rate_trials for t in ts)
    preds = [t.predicted_rate for t in ts]
    mis = [t.eve_mi for t in ts if t.eve_mi is not None]
    return {
        "trial": "aggregate",
        "scheme": ts[0].scheme,
        "M": ts[0].M,
        "rounds": sum(t.rounds for t in ts),
        "kept_z": total("kept_z"),
        "kept_x_samples": total("kept_x_samples"),
        "z_samples": total("z_samples"),
        "raw_key_len": total("raw_key_len"),
        "empirical_rate": ratio(rate_hits, rate_trials),
        "predicted_rate": preds[0] if all(p == preds[0] for p in preds) else math.fsum(preds) / len(preds),
        "qber_z": ratio(sum(t.z_errors for t in ts), sum(t.n_z_checks for t in ts)),
        "qber_x": ratio(sum(t.x_errors for t in ts), sum(t.n_x_checks for t in ts)),
        "min_key_fidelity": _opt_min(t.min_key_fidelity for t in ts),
        "bit_accuracy": ratio(sum(t.bits_correct for t in ts), sum(t.bits_total for t in ts)),
        "eve_mi": math.fsum(mis) / len(mis) if mis else None,
        "_rate_trials": rate_trials,
        "_aborted": sum(t.aborted for t in ts),
    }


def run_trials(cfg: ScenarioConfig, workers: int = 1) -> RunStats:
    """Run ``cfg.trials`` independent trials; results do not depend on ``workers``."""
    jobs = [(cfg, i) for i in range(cfg.trials)]
    if workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial_args, jobs))
    else:
        results = [run_trial(*j) for j in jobs]
    results.sort(key=lambda t: t.trial)
    return RunStats(tuple(results), aggregate(results))


# --- reports ----------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _report_rows(stats: RunStats) -> list[dict[str, Any]]:
    rows = [t.row() for t in stats.trials]
    if len(stats.trials) > 1:
        rows.append({c: stats.aggregate[c] for c in CSV_COLUMNS})
    return rows


def render_csv(stats: RunStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in _report_rows(stats):
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def render_text(stats: RunStats) -> str:
    lines = []
    for row in _report_rows(stats):
        lines.append(f"[trial {row['trial']}]")
        lines += [f"{c} = {_fmt(row[c])}" for c in CSV_COLUMNS if c != "trial"]
        lines.append("")
    agg = stats.aggregate
    lines.append("[summary]")
    lines.append(f"trials = {len(stats.trials)}")
    lines.append(f"aborted_trials = {agg['_aborted']}")
    if agg["predicted_rate"] is not None and agg["_rate_trials"]:
        lo, hi = stats.rate_ci()
        lines.append(f"predicted_rate_3sigma = [{lo!r}, {hi!r}]")
        lines.append(f"rate_z_score = {stats.rate_z_score()!r}")
    reasons = sorted({t.abort_reason for t in stats.trials if t.aborted})
    for r in reasons:
        lines.append(f"abort_reason = {r}")
    return "\n".join(lines) + "\n"


def emit_report(stats: RunStats, fmt: str = "csv", path: str | Path | None = None) -> str:
    """Render the stats as CSV or structured text; write to ``path`` if given."""
    if fmt == "csv":
        text = render_csv(stats)
    elif fmt == "text":
        text = render_text(stats)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_cell(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_report(path: str | Path) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# --- sweep ------------------------------------------------------------------

DEFAULT_SWEEP = {
    "M": (3, 4, 5),
    "sample_ratio": (0.054, 0.25, 0.5),
    "p_t": (1.0, 0.9),
    "p_d": (1.0, 0.8),
}
SWEEP_COLUMNS = ("cell", "M", "sample_ratio", "p_t", "p_d", "rounds", "kept_z",
                 "empirical_rate", "predicted_rate", "z_score", "within_3sigma")  # fmt: skip


@dataclass(frozen=True)
class SweepCell:
    index: int
    M: int
    sample_ratio: float
    p_t: float
    p_d: float
    stats: RunStats

    @property
    def z_score(self) -> float:
        return self.stats.rate_z_score()

    @property
    def within_3sigma(self) -> bool:
        return abs(self.z_score) <= 3.0


def run_sweep(cfg: ScenarioConfig, workers: int = 1) -> list[SweepCell]:
    """Scheme-1 grid over M, r, uniform p_t and uniform p_d."""
    grid = dict(DEFAULT_SWEEP)
    if cfg.sweep:
        grid.update(cfg.sweep)
    cells = []
    combos = itertools.product(grid["M"], grid["sample_ratio"], grid["p_t"], grid["p_d"])
    for i, (M, r, pt, pd) in enumerate(combos):
        net = replace(Network(), default_p_t=pt, default_p_d=pd,
                      default_q_depol=cfg.network.default_q_depol)
        cell_cfg = replace(cfg, scheme=1, mode="keygen", M=M, sample_ratio=r, network=net,
                           seed=cfg.seed + i)  # fmt: skip
        cells.append(SweepCell(i, M, r, pt, pd, run_trials(cell_cfg, workers)))
    return cells


def render_sweep_csv(cells: list[SweepCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for c in cells:
        a = c.stats.aggregate
        w.writerow([_fmt(v) for v in (
            c.index, c.M, c.sample_ratio, c.p_t, c.p_d, a["_rate_trials"], a["kept_z"],
            a["empirical_rate"], a["predicted_rate"], c.z_score, c.within_3sigma,
        )])  # fmt: skip
    return buf.getvalue()


# --- exhaustive oracle ------------------------------------------------------


@dataclass
class OracleReport:
    checks: list[tuple[str, float]] = field(default_factory=list)

    def add(self, name: str, deviation: float) -> None:
        self.checks.append((name, float(deviation)))

    @property
    def max_deviation(self) -> float:
        return max((d for _, d in self.checks), default=0.0)

    def render(self) -> str:
        lines = [f"{name}: max deviation {dev:.3e}" for name, dev in self.checks]
        lines.append(f"overall max deviation {self.max_deviation:.3e} over {len(self.checks)} checks")
        return "\n".join(lines) + "\n"


def _dist_deviation(a: Mapping, b: Mapping) -> float:
    keys = set(a) | set(b)
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


_PROJ = {
    b: [np.outer(b.eigenvectors[:, k], b.eigenvectors[:, k].conj()) for k in (0, 1)]
    for b in Basis
}


def _density_distribution(rho: np.ndarray, pattern) -> dict[tuple[int, ...], float]:
    out = {}
    for bits in itertools.product((0, 1), repeat=len(pattern)):
        proj = np.ones((1, 1), dtype=complex)
        for b, k in zip(pattern, bits):
            proj = np.kron(proj, _PROJ[b][k])
        out[bits] = float(np.real(np.trace(rho @ proj)))
    return out


def _engine_attack_distribution(strategy: AttackStrategy, M: int, pattern) -> dict:
    """Engine path: branch over Eve's measurement, then marginalise that bit out."""
    labels = party_labels(M)
    eve_bases = {"Z": ["Z"], "X": ["X"], "Y": ["Y"], RANDOM_ZX: ["Z", "X"]}[strategy.basis]
    target = labels[strategy.link[1]]
    out: dict[tuple[int, ...], float] = {}
    for eb in eve_bases:
        program = [("measure", target, Basis(eb))]
        program += [("measure", l, b) for l, b in zip(labels, pattern)]
        for bits, p in measurement_distribution(make_ghz(M, labels), program).items():
            out[bits[1:]] = out.get(bits[1:], 0.0) + p / len(eve_bases)
    return out


def _signature_from(dist_z: Mapping, dist_x: Mapping, M: int) -> tuple[float, float]:
    same = dist_z.get((0,) * M, 0.0) + dist_z.get((1,) * M, 0.0)
    odd = sum(p for bits, p in dist_x.items() if sum(bits) % 2)
    return 1.0 - same, odd


def oracle_tables(max_M: int = 4) -> OracleReport:
    """Compare engine distributions with direct enumeration for every pattern up to ``max_M``."""
    if max_M > 4:
        raise ValueError("oracle tables are limited to M <= 4")
    report = OracleReport()
    for M in range(1, max_M + 1):
        labels = party_labels(M)
        ghz = make_ghz(M, labels)
        dev = 0.0
        for pattern in itertools.product(tuple(Basis), repeat=M):
            engine = measurement_distribution(ghz, [("measure", l, b) for l, b in zip(labels, pattern)])
            direct = born_enumeration(ghz, dict(zip(labels, pattern)))
            dev = max(dev, _dist_deviation(engine, direct))
        report.add(f"GHZ_{M} all Z/X/Y patterns", dev)

    strategies = [AttackStrategy.intercept_resend(b, (0, 1)) for b in ("Z", "X", "Y", RANDOM_ZX)]
    for M in range(2, max_M + 1):
        for strat in strategies:
            rho = attacked_ghz_density(strat, M)
            dev = 0.0
            for pattern in itertools.product(tuple(Basis), repeat=M):
                engine = _engine_attack_distribution(strat, M, pattern)
                dev = max(dev, _dist_deviation(engine, _density_distribution(rho, pattern)))
            report.add(f"GHZ_{M} intercept-resend {strat.basis}", dev)
            sig_engine = _signature_from(
                _engine_attack_distribution(strat, M, (Basis.Z,) * M),
                _engine_attack_distribution(strat, M, (Basis.X,) * M),
                M,
            )
            sig_oracle = expected_attack_signature(strat, M)
            report.add(
                f"GHZ_{M} signature {strat.basis}",
                max(abs(a - b) for a, b in zip(sig_engine, sig_oracle)),
            )

    s = 1 / math.sqrt(2)
    for m, idx in ((0, (0b0000, 0b1111)), (1, (0b0001, 0b1110))):
        system = encrypt_bit(QuantumKeySystem(0, make_ghz(3)), m)
        expected = np.zeros(16, dtype=complex)
        expected[list(idx)] = s
        report.add(f"encrypted GHZ_3 amplitudes, m={m}", np.max(np.abs(system.state.amplitudes - expected)))
    return report
