"""End-to-end acceptance criteria; each test records one PASS/FAIL summary line."""
import itertools
import math
import time

import numpy as np
import pytest

from mqrsc.adversary import RANDOM_ZX, AttackStrategy, expected_attack_signature, mutual_information
from mqrsc.channel import DetectorConfig, LinkConfig, Network
from mqrsc.cli import main
from mqrsc.harness import oracle_tables, parse_scenario, run_trials
from mqrsc.keyconf import (
    RoundClass,
    Scheme1Config,
    estimate_errors,
    run_distribution_rounds,
    sift_and_sample,
)
from mqrsc.qcore import expectation, make_ghz, reduced_density
from mqrsc.qcrypt import QuantumKey, QuantumKeySystem, encrypt_bit, reuse_check, run_message_round

import oracles

pytestmark = pytest.mark.slow


def binomial_z(k, n, p):
    return (k / n - p) / math.sqrt(p * (1 - p) / n)


def test_c01_rate_formula_m3(criterion):
    cfg = parse_scenario(
        {"scheme": 1, "M": 3, "seed": 20070101, "trials": 10, "rounds": 100_000, "sample_ratio": 0.054}
    )
    t0 = time.perf_counter()
    stats = run_trials(cfg)
    elapsed = time.perf_counter() - t0
    agg = stats.aggregate
    z = binomial_z(agg["kept_z"], agg["_rate_trials"], 0.343)
    ok = abs(z) <= 3 and elapsed < 60 and agg["predicted_rate"] == pytest.approx(0.343, abs=1e-12)
    criterion("C1 rate formula M=3", ok, f"empirical={agg['empirical_rate']:.6f} z={z:+.2f} t={elapsed:.1f}s")
    assert ok


def test_c02_rate_formula_m5_lossy(criterion):
    # Stated target 0.03614 assumes p=0.3; r=0.054 at M=5 gives p=(0.027)**(1/5)~0.486.
    M = 5
    links = [LinkConfig(0, l, p_t=0.9) for l in range(1, M)]
    dets = [DetectorConfig(l, p_d=0.8) for l in range(M)]
    net = Network.build(links, dets)
    cfg = Scheme1Config(M=M, rounds=100_000, sample_ratio=0.054)
    t0 = time.perf_counter()
    batch = run_distribution_rounds(cfg, net, None, np.random.default_rng(5))
    elapsed = time.perf_counter() - t0
    target = (1 - 0.3) ** 5 * 0.9**4 * 0.8**5
    k = batch.count(RoundClass.KEPT_Z)
    z = binomial_z(k, batch.n, target)
    ok = abs(z) <= 3 and elapsed < 120
    criterion(
        "C2 rate formula M=5 lossy",
        ok,
        f"empirical={k / batch.n:.6f} target={target:.5f} formula(r=0.054)={cfg.predicted_rate(net):.6f} z={z:+.1f}",
    )
    assert ok


def test_c03_correlation_identities(criterion):
    details, ok = [], True
    for M in (3, 4, 5):
        cfg = Scheme1Config(M=M, rounds=100_000, sample_ratio=0.054)
        b = run_distribution_rounds(cfg, Network.ideal(), None, np.random.default_rng(300 + M))
        z_rows = b.bits[b.classification == RoundClass.KEPT_Z]
        x_rows = b.bits[b.classification == RoundClass.KEPT_X_SAMPLE]
        z_bad = int(np.any(z_rows != z_rows[:, :1], axis=1).sum())
        x_bad = int((x_rows.sum(axis=1) % 2).sum())
        ok &= z_bad == 0 and x_bad == 0 and len(z_rows) > 0 and len(x_rows) > 0
        details.append(f"M={M}:{z_bad}/{len(z_rows)},{x_bad}/{len(x_rows)}")
    criterion("C3 correlation identities", ok, " ".join(details))
    assert ok


def test_c04_stabilizer_checks(criterion):
    worst, count = 0.0, 0
    for M in range(2, 7):
        ghz = make_ghz(M)
        for pattern in itertools.product("XY", repeat=M):
            n_y = pattern.count("Y")
            if n_y % 2:
                continue
            want = (-1) ** (n_y // 2)
            got = expectation(ghz, dict(zip(ghz.labels, pattern)))
            ref = oracles.stabilizer_expectation(M, pattern)
            worst = max(worst, abs(got - want), abs(ref - want))
            count += 1
    ok = worst <= 1e-12
    criterion("C4 X/Y stabilizer parity", ok, f"{count} patterns, max dev {worst:.1e}")
    assert ok


def test_c05_scheme2_round_trip(criterion):
    details, ok = [], True
    for M in (3, 5):
        rng = np.random.default_rng(500 + M)
        key = QuantumKey.ideal(M, 100)
        correct = total = 0
        min_fid = 1.0
        for sender in itertools.islice(itertools.cycle(range(M)), 100):
            msg = rng.integers(0, 2, 100)
            rep = run_message_round(key, sender, msg, Network.ideal(), None, rng)
            for bits in rep.recovered.values():
                correct += sum(int(a == b) for a, b in zip(bits, msg))
                total += len(msg)
            min_fid = min(min_fid, min(s.ghz_fidelity() for s in key.systems))
        ok &= correct == total and min_fid >= 1 - 1e-9
        details.append(f"M={M}: {correct}/{total} fid>={min_fid:.12f}")
    criterion("C5 scheme 2 round trip", ok, "; ".join(details))
    assert ok


def test_c06_ciphertext_indistinguishable(criterion):
    worst = 0.0
    for M in range(2, 7):
        for m in (0, 1):
            rho = reduced_density(encrypt_bit(QuantumKeySystem(0, make_ghz(M)), m).state, "T")
            worst = max(worst, float(np.max(np.abs(rho - np.eye(2) / 2))))
    ok = worst <= 1e-10
    criterion("C6 traveling qubit maximally mixed", ok, f"max dev {worst:.1e}")
    assert ok


def test_c07_attack_signatures(criterion):
    details, ok = [], True
    cfg = Scheme1Config(M=3, rounds=100_000, sample_ratio=0.25)
    for i, basis in enumerate(("Z", "X", RANDOM_ZX)):
        attack = AttackStrategy.intercept_resend(basis)
        rng = np.random.default_rng(700 + i)
        b = run_distribution_rounds(cfg, Network.ideal(), attack, rng)
        rep = estimate_errors(sift_and_sample(b, rng)[1])
        oz, ox = expected_attack_signature(attack, 3)
        ok &= rep.n_x_samples >= 10_000 and rep.n_z_samples >= 10_000
        ok &= abs(rep.qber_z - oz) <= 0.02 and abs(rep.qber_x - ox) <= 0.02
        if oz < 1e-12:
            ok &= rep.qber_z == 0.0
        if ox < 1e-12:
            ok &= rep.qber_x == 0.0
        details.append(f"{basis}: ({rep.qber_z:.3f},{rep.qber_x:.3f}) oracle ({oz:.3f},{ox:.3f})")
    criterion("C7 attack signatures", ok, "; ".join(details))
    assert ok


def test_c08_no_leakage(criterion):
    rng = np.random.default_rng(800)
    n = 100_000
    key = QuantumKey.ideal(3, n)
    msg = rng.integers(0, 2, n)
    rep = run_message_round(key, 0, msg, Network.ideal(), AttackStrategy.traveling_measure_z((0, 1)), rng)
    mi = mutual_information(rep.eve.bits(), rep.eve.truth())
    acc = rep.accuracy(msg)
    fids = np.array([key.systems[i].ghz_fidelity() for i in rep.attacked_systems])
    ok = mi <= 0.01 and acc == 1.0 and len(fids) == n and np.all(np.abs(fids - 0.5) <= 0.02)
    criterion("C8 no leakage", ok, f"MI={mi:.2e} accuracy={acc} fidelity in [{fids.min():.4f},{fids.max():.4f}]")
    assert ok


def test_c09_key_shrinkage(criterion):
    rng = np.random.default_rng(900)
    _, key = reuse_check(QuantumKey.ideal(3, 100), 0.1, rng)
    reps = 2000
    fails = 0
    for _ in range(reps):
        k = QuantumKey.ideal(3, 1)
        run_message_round(k, 0, [int(rng.integers(2))], Network.ideal(), AttackStrategy.traveling_measure_z((0, 1)), rng)
        report, _ = reuse_check(k, 1.0, rng)
        fails += report.parity_errors
    rate = fails / reps
    ok = key.usable_length == 90 and abs(rate - 0.5) <= 0.05
    criterion("C9 key shrinkage", ok, f"usable={key.usable_length} attacked fail rate={rate:.3f}")
    assert ok


def test_c10_oracle_equivalence(criterion, capsys):
    rep = oracle_tables(4)
    code = main(["oracle"])
    capsys.readouterr()
    ok = rep.max_deviation < 1e-12 and code == 0
    criterion("C10 oracle equivalence", ok, f"{len(rep.checks)} checks, max dev {rep.max_deviation:.1e}")
    assert ok


def test_c11_reproducible_csv(criterion, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("scheme = 1\nM = 4\nseed = 1111\ntrials = 3\nrounds = 20000\nsample_ratio = 0.1\np_t = 0.95\n")
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        main(["keygen", "--config", str(cfg), "--out", str(out)])
    a, b = (o.read_bytes() for o in outs)
    ok = a == b and len(a) > 0
    criterion("C11 byte-identical CSV", ok, f"{len(a)} bytes")
    assert ok
