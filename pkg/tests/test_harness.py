import math
import random

import pytest

from mqrsc.adversary import AttackKind
from mqrsc.cli import main
from mqrsc.harness import (
    CSV_COLUMNS,
    ConfigError,
    aggregate,
    emit_report,
    load_scenario,
    oracle_tables,
    parse_scenario,
    read_report,
    render_csv,
    render_sweep_csv,
    run_sweep,
    run_trial,
    run_trials,
    trial_seed,
)

MINIMAL = "scheme = 1\nM = 3\nseed = 1\n"


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def small(**kw):
    data = {"scheme": 1, "M": 3, "seed": 42, "rounds": 2000, "sample_ratio": 0.25}
    data.update(kw)
    return parse_scenario(data)


class TestConfig:
    def test_minimal(self, tmp_path):
        cfg = load_scenario(write(tmp_path, MINIMAL))
        assert (cfg.scheme, cfg.M, cfg.seed, cfg.trials) == (1, 3, 1, 1)
        assert cfg.network.link(0, 1).p_t == 1.0
        assert cfg.attack.kind is AttackKind.NONE

    def test_bad_link_probability_names_the_link(self, tmp_path):
        text = MINIMAL + "[[links]]\nfrom = 0\nto = 2\np_t = 1.5\n"
        with pytest.raises(ConfigError) as exc:
            load_scenario(write(tmp_path, text))
        assert any(e.startswith("links[0].p_t") for e in exc.value.errors)

    def test_missing_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_scenario({"scheme": 1, "M": 3})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="colour: unknown key"):
            parse_scenario({"scheme": 1, "M": 3, "seed": 0, "colour": "red"})

    @pytest.mark.parametrize(
        "extra", [{"M": 2}, {"scheme": 3}, {"trials": 0}, {"p_d": -1}, {"attack": {"kind": "laser"}}]
    )
    def test_invalid_values(self, extra):
        with pytest.raises(ConfigError):
            parse_scenario({"scheme": 1, "M": 3, "seed": 0, **extra})

    def test_attack_table(self):
        cfg = parse_scenario(
            {"scheme": 1, "M": 4, "seed": 0, "attack": {"kind": "intercept_resend", "basis": "X", "target": [0, 2]}}
        )
        assert cfg.attack.basis == "X" and cfg.attack.link == (0, 2)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "missing.toml")

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="parse error"):
            load_scenario(write(tmp_path, "scheme = = 1"))

    def test_overrides(self, tmp_path):
        cfg = load_scenario(write(tmp_path, MINIMAL), {"seed": 9, "trials": None})
        assert cfg.seed == 9 and cfg.trials == 1


class TestDeterminism:
    def test_trial_seed_distinct(self):
        states = {tuple(trial_seed(7, t).generate_state(2)) for t in range(50)}
        assert len(states) == 50

    def test_same_seed_same_csv(self):
        cfg = small(trials=3)
        assert render_csv(run_trials(cfg)) == render_csv(run_trials(cfg))

    def test_different_seed_differs(self):
        assert render_csv(run_trials(small(trials=2))) != render_csv(run_trials(small(trials=2, seed=43)))

    def test_workers_do_not_change_results(self):
        cfg = small(trials=4)
        assert render_csv(run_trials(cfg, workers=1)) == render_csv(run_trials(cfg, workers=2))

    def test_trial_independent_of_others(self):
        cfg = small(trials=5)
        assert run_trials(cfg).trials[3] == run_trial(cfg, 3)

    def test_aggregate_order_invariant(self):
        trials = list(run_trials(small(trials=6)).trials)
        ref = aggregate(trials)
        for seed in range(5):
            random.Random(seed).shuffle(trials)
            assert aggregate(trials) == ref


class TestReport:
    def test_single_trial_single_row(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_report(run_trials(small()), "csv", path)
        rows = read_report(path)
        assert len(rows) == 1 and list(rows[0]) == list(CSV_COLUMNS)

    def test_aggregate_row(self, tmp_path):
        stats = run_trials(small(trials=100, rounds=200))
        path = tmp_path / "out.csv"
        emit_report(stats, "csv", path)
        rows = read_report(path)
        assert len(rows) == 101
        assert rows[-1]["trial"] == "aggregate"
        assert rows[-1]["kept_z"] == sum(r["kept_z"] for r in rows[:-1])

    def test_round_trip(self, tmp_path):
        stats = run_trials(small(trials=3))
        path = tmp_path / "out.csv"
        emit_report(stats, "csv", path)
        for row, t in zip(read_report(path), stats.trials):
            for c in CSV_COLUMNS:
                want = getattr(t, c)
                if isinstance(want, float):
                    assert math.isclose(row[c], want, abs_tol=1e-12)
                else:
                    assert row[c] == want

    def test_text(self):
        text = emit_report(run_trials(small(trials=2)), "text")
        assert "[trial aggregate]" in text and "[summary]" in text and "rate_z_score" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(run_trials(small()), "xml")


class TestModes:
    def test_keygen_rate(self):
        t = run_trial(small(rounds=50_000), 0)
        assert not t.aborted and t.key_mismatches == 0
        assert abs(t.empirical_rate - t.predicted_rate) < 3 * math.sqrt(t.predicted_rate / 50_000)

    def test_attack_aborts(self):
        stats = run_trials(small(trials=2, rounds=20_000, attack={"kind": "intercept_resend", "basis": "Z"}))
        assert stats.all_aborted
        assert stats.aggregate["qber_x"] == pytest.approx(0.5, abs=0.05)

    def test_conference(self):
        t = run_trial(small(mode="conference", rounds=5000, sample_ratio=0.054), 0)
        assert t.bit_accuracy == 1.0 and t.bits_total == 3 * 2 * 8

    def test_qkey(self):
        t = run_trial(parse_scenario({"scheme": 2, "mode": "qkey", "M": 3, "seed": 1, "rounds": 200}), 0)
        assert t.bit_accuracy == 1.0 and t.min_key_fidelity == pytest.approx(1.0)
        assert t.qber_x == 0.0


class TestSweep:
    def test_small_grid(self):
        cfg = parse_scenario(
            {"scheme": 1, "M": 3, "seed": 3, "rounds": 20_000,
             "sweep": {"M": [3, 4], "sample_ratio": [0.25], "p_t": [1.0, 0.9], "p_d": [0.8]}}
        )  # fmt: skip
        cells = run_sweep(cfg)
        assert len(cells) == 4
        assert all(c.within_3sigma for c in cells)
        assert render_sweep_csv(cells).count("\n") == 5


class TestOracle:
    def test_tables(self):
        rep = oracle_tables(3)
        assert rep.checks
        assert rep.max_deviation < 1e-12


class TestCli:
    def test_keygen(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL + "rounds = 2000\nsample_ratio = 0.25\n")
        assert main(["keygen", "--config", str(cfg)]) == 0
        assert capsys.readouterr().out.startswith(",".join(CSV_COLUMNS))

    def test_out_file_and_seed(self, tmp_path):
        cfg = write(tmp_path, MINIMAL + "rounds = 2000\nsample_ratio = 0.25\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["keygen", "--config", str(cfg), "--seed", "5", "--trials", "2", "--out", str(a)])
        main(["keygen", "--config", str(cfg), "--seed", "5", "--trials", "2", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert len(read_report(a)) == 3

    def test_config_error(self, tmp_path, capsys):
        cfg = write(tmp_path, "scheme = 1\nM = 3\n")
        assert main(["keygen", "--config", str(cfg)]) == 1
        assert "seed" in capsys.readouterr().err

    def test_missing_config(self):
        assert main(["qkey"]) == 1

    def test_all_aborted(self, tmp_path):
        text = MINIMAL + 'rounds = 20000\nsample_ratio = 0.25\n[attack]\nkind = "intercept_resend"\nbasis = "Z"\n'
        assert main(["keygen", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o.csv")]) == 2

    def test_qkey_text(self, tmp_path, capsys):
        cfg = write(tmp_path, "M = 3\nseed = 2\nrounds = 100\n")
        assert main(["qkey", "--config", str(cfg), "--format", "text"]) == 0
        assert "bit_accuracy = 1.0" in capsys.readouterr().out

    def test_oracle(self, capsys):
        assert main(["oracle"]) == 0
        assert "overall max deviation" in capsys.readouterr().out

    def test_sweep(self, tmp_path, capsys):
        text = MINIMAL + "rounds = 5000\n[sweep]\nM = [3]\nsample_ratio = [0.25]\np_t = [1.0]\np_d = [1.0]\n"
        assert main(["sweep", "--config", str(write(tmp_path, text))]) == 0
        assert capsys.readouterr().out.startswith("cell,")
