import csv
import io
import json
import math
import re

import numpy as np
import pytest

from conftest import crandn
from stftpr.core import ValidationError, make_window
from stftpr.harness import cli
from stftpr.harness.experiment import (
    Cell,
    CellSummary,
    ExperimentConfig,
    ExperimentTable,
    MetricError,
    add_noise,
    nmse,
    run_experiment,
    run_trial,
    trial_seed,
)
from stftpr.harness.io import (
    CSV_HEADER,
    dump_config,
    export_results,
    parse_config,
    read_measurements,
    read_signal,
    table_to_csv,
    write_measurements,
    write_signal,
)
from stftpr.harness.presets import noise_sweep_config, stride_sweep_config
from stftpr.gespar import power_spectrum_problem
from stftpr.stft import build_measurement_operator, magnitude_sq, stft_forward

INF = math.inf


def small_config(**kw):
    base = dict(N=16, W=4, L_values=(2,), K_values=(8,), k_range=(1, 2), trials_per_cell=2,
                methods=("STFT-GESPAR", "GLA"), gespar_max_swaps=200, altproj_restarts=2,
                altproj_max_iterations=30, record_wall_time=False)
    base.update(kw)
    return ExperimentConfig(**base)


class TestNmse:
    def test_examples(self, rng):
        t = crandn(rng, 10)
        assert nmse(t, t) == 0
        assert nmse(-t, t) < 1e-15
        assert nmse(np.exp(1.3j) * t, t) < 1e-15
        assert nmse(np.zeros(10), t) == pytest.approx(1.0)

    def test_brute_force_phase(self, rng):
        e, t = crandn(rng, 6), crandn(rng, 6)
        thetas = np.linspace(0, 2 * np.pi, 20001)
        brute = min(np.sum(np.abs(np.exp(1j * th) * e - t) ** 2) for th in thetas) / np.sum(np.abs(t) ** 2)
        assert nmse(e, t) == pytest.approx(brute, rel=1e-6)

    def test_zero_truth(self):
        with pytest.raises(MetricError):
            nmse(np.ones(3), np.zeros(3))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            nmse(np.ones(3), np.ones(4))


class TestNoise:
    def setup_method(self):
        w = make_window("square", 16, 256)
        x = np.random.default_rng(1).standard_normal(256)
        self.y = magnitude_sq(stft_forward(x, w, 4, 64))

    def test_inf_unchanged(self):
        np.testing.assert_array_equal(add_noise(self.y, INF, 0).y, self.y.y)

    def test_empirical_snr(self):
        assert self.y.y.size >= 4096
        n = add_noise(self.y, 20.0, 3).y - self.y.y
        snr = 10 * np.log10(np.sum(self.y.y ** 2) / np.sum(n ** 2))
        assert abs(snr - 20.0) < 0.5

    def test_deterministic(self):
        np.testing.assert_array_equal(add_noise(self.y, 10.0, 7).y, add_noise(self.y, 10.0, 7).y)
        assert add_noise(self.y, 10.0, 7).noise_snr_db == 10.0


class TestTrials:
    def test_direct_exact(self):
        cfg = ExperimentConfig(N=7, W=3, L_values=(1,), K_values=(7,), k_range=(3,),
                               methods=("DIRECT",), trials_per_cell=1)
        r = run_trial(Cell(3, 1, 7, INF), "DIRECT", cfg)
        assert r.success and r.nmse < 1e-8 and r.diagnostic == ""

    def test_gespar_k_zero(self):
        cfg = small_config(k_range=(0,))
        r = run_trial(Cell(0, 2, 8, INF), "STFT-GESPAR", cfg)
        assert r.success and r.nmse == 0

    def test_errors_become_failed_trials(self):
        # DIRECT needs L = 1; the geometry error is captured
        cfg = small_config(methods=("DIRECT",))
        r = run_trial(Cell(2, 2, 8, INF), "DIRECT", cfg)
        assert not r.success and math.isinf(r.nmse) and "Error" in r.diagnostic

    def test_success_matches_threshold(self):
        cfg = small_config()
        for m in cfg.methods:
            r = run_trial(Cell(2, 2, 8, INF), m, cfg, trial=1)
            assert r.success == (r.nmse < cfg.success_nmse_threshold)

    def test_methods_share_instance(self):
        cfg = small_config()
        a = run_trial(Cell(2, 2, 8, INF), "STFT-GESPAR", cfg)
        b = run_trial(Cell(2, 2, 8, INF), "GLA", cfg)
        assert a.seed == b.seed == trial_seed(cfg.rng_seed, Cell(2, 2, 8, INF), 0)

    def test_measurement_parity(self):
        # PS-GESPAR sees as many power-spectrum samples as the STFT cell has entries
        w = make_window("square", 16, 64)
        D = np.eye(64)
        for L, P in {2: 512, 4: 256, 8: 128, 16: 64}.items():
            stft_op = build_measurement_operator(w, L, 16, D)
            assert stft_op.P == P == power_spectrum_problem(D, stft_op.geometry.P).P

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            run_trial(Cell(1, 2, 8, INF), "HIO", small_config())


class TestExperiment:
    def test_single_cell_identity(self):
        cfg = small_config(k_range=(2,), trials_per_cell=1, methods=("STFT-GESPAR",))
        table = run_experiment(cfg)
        assert len(table.rows) == 1 and len(table.trials) == 1
        row, t = table.rows[0], table.trials[0]
        assert row.trials == 1 and row.success_rate == float(t.success)
        assert row.mean_nmse == row.median_nmse == t.nmse

    def test_aggregation(self):
        table = run_experiment(small_config())
        assert len(table.rows) == 2 * 2
        for r in table.rows:
            assert r.trials == 2 and 0 <= r.success_rate <= 1
        assert table.lookup("GLA", 2, 2, 8).method == "GLA"

    def test_workers_do_not_change_table(self):
        cfg = small_config()
        a = table_to_csv(run_experiment(cfg))
        b = table_to_csv(run_experiment(ExperimentConfig(**{**cfg.__dict__, "workers": 2})))
        assert a == b

    def test_pure_function_of_config(self):
        cfg = small_config()
        assert table_to_csv(run_experiment(cfg)) == table_to_csv(run_experiment(cfg))
        other = small_config(rng_seed=1)
        assert table_to_csv(run_experiment(other)) != table_to_csv(run_experiment(cfg))

    def test_progress_callback(self):
        seen = []
        run_experiment(small_config(k_range=(1,)), lambda d, t: seen.append((d, t)))
        assert seen[-1] == (4, 4) and len(seen) == 4

    @pytest.mark.parametrize("kw", [dict(trials_per_cell=0), dict(methods=("X",)), dict(L_values=(0,)),
                                    dict(noise_target="x"), dict(workers=0), dict(W=99),
                                    dict(altproj_restarts=0), dict(k_range=(-1,))])
    def test_validation(self, kw):
        with pytest.raises(ValidationError):
            small_config(**kw)

    def test_presets(self):
        f2 = stride_sweep_config(trials=50)
        assert (f2.N, f2.W, f2.K_values, f2.L_values) == (64, 16, (16,), (2, 4, 8, 16))
        assert (f2.gespar_tau, f2.gespar_max_swaps, f2.altproj_restarts, f2.altproj_max_iterations) \
            == (1e-4, 50000, 50, 1000)
        f3 = noise_sweep_config()
        assert (f3.N, f3.W, f3.L_values, f3.K_values, f3.snr_db_values) == \
            (32, 16, (1,), (2, 4, 8, 16, 32), (5.0, 15.0, 25.0, 35.0))


def fake_table(Ls=(2, 4, 8, 16), ks=(2, 3, 4), methods=("STFT-GESPAR", "GLA")):
    rows = tuple(CellSummary(m, Cell(k, L, 16, INF), 5, 1.0 / k, 0.1 * k, 0.05 * k, 1.25)
                 for m in methods for L in Ls for k in ks)
    return ExperimentTable(rows, small_config(), ())


class TestExport:
    def test_one_row_csv(self, tmp_path):
        t = fake_table(Ls=(2,), ks=(3,), methods=("GLA",))
        p = tmp_path / "r.csv"
        export_results(t, "csv", p)
        lines = p.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert lines[0] == "method,k,L,K,snr_db,trials,success_rate,mean_nmse,median_nmse,mean_wall_ms"
        assert len(lines) == 2
        assert next(csv.DictReader(io.StringIO(p.read_text())))["snr_db"] == "inf"

    def test_byte_identical(self, tmp_path):
        t = fake_table()
        export_results(t, "csv", tmp_path / "a.csv")
        export_results(t, "csv", tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_svg_panels(self, tmp_path):
        p = tmp_path / "r.svg"
        export_results(fake_table(), "svg-lineplot", p)
        text = p.read_text()
        assert text.count('<g class="panel"') == 4
        assert text.count("<polyline") == 4 * 2

    def test_svg_nmse_log(self, tmp_path):
        rows = tuple(CellSummary("STFT-GESPAR", Cell(k, 1, K, s), 3, 0.5, 10.0 ** -k, 0.0, 0.0)
                     for s in (5.0, 15.0) for K in (8, 16) for k in (2, 3))
        text = export_results(ExperimentTable(rows, small_config(), ()), "svg-lineplot",
                              tmp_path / "n.svg")[0].read_text()
        assert text.count('<g class="panel"') == 2 and "SNR 5 dB" in text

    def test_errors(self, tmp_path):
        with pytest.raises(ValidationError):
            export_results(ExperimentTable((), small_config(), ()), "csv", tmp_path / "x.csv")
        with pytest.raises(ValidationError):
            export_results(fake_table(), "png", tmp_path / "x.png")
        with pytest.raises(OSError):
            export_results(fake_table(), "csv", tmp_path / "missing" / "x.csv")


class TestConfigFile:
    def test_parse(self):
        cfg = parse_config("""
            # sweep
            N = 32
            W = 16
            L_values = 1
            K_values = 2, 4 8
            k_range = 2..5
            snr_db_values = 5, inf
            methods = STFT-GESPAR
            record_wall_time = false
            trials_per_cell = 3   # few
        """.replace("            ", ""))
        assert cfg.K_values == (2, 4, 8) and cfg.k_range == (2, 3, 4, 5)
        assert cfg.snr_db_values == (5.0, INF) and cfg.methods == ("STFT-GESPAR",)
        assert cfg.record_wall_time is False and cfg.trials_per_cell == 3

    def test_round_trip(self):
        cfg = noise_sweep_config(trials=7)
        assert parse_config(dump_config(cfg)) == cfg

    @pytest.mark.parametrize("text", ["N = 32\ntrails_per_cell = 3\n", "N = abc\n",
                                      "[x]\nN = 3\n", "record_wall_time = maybe\n"])
    def test_errors(self, text):
        with pytest.raises(ValidationError):
            parse_config(text)


class TestFiles:
    def test_measurements_round_trip(self, tmp_path, rng):
        w = make_window("square", 4, 12)
        y = magnitude_sq(stft_forward(crandn(rng, 12), w, 3, 6))
        write_measurements(tmp_path / "m.txt", y)
        back = read_measurements(tmp_path / "m.txt")
        np.testing.assert_array_equal(back.y, y.y)
        assert back.geometry.key == y.geometry.key
        assert (tmp_path / "m.txt").read_text().splitlines()[0] == "12 4 3 6 4"

    @pytest.mark.parametrize("body", ["", "12 4 3 6\n", "12 4 3 6 4\n1 2 3\n", "12 4 3 6 2\n" + "1 " * 6 + "\n" + "1 " * 6,
                                      "12 4 3 6 1\n1 2 x 4 5 6\n"])
    def test_bad_measurement_files(self, tmp_path, body):
        (tmp_path / "m.txt").write_text(body)
        with pytest.raises(ValidationError):
            read_measurements(tmp_path / "m.txt")

    def test_signal_round_trip(self, tmp_path, rng):
        x = crandn(rng, 9)
        write_signal(tmp_path / "s.txt", x)
        np.testing.assert_array_equal(read_signal(tmp_path / "s.txt").values, x)

    def test_real_signal_file(self, tmp_path):
        (tmp_path / "s.txt").write_text("1\n2\n3\n")
        np.testing.assert_array_equal(read_signal(tmp_path / "s.txt").values, [1, 2, 3])


class TestCli:
    def meas(self, tmp_path, N=7, W=3, L=1, K=7, seed=0):
        x = np.random.default_rng(seed).uniform(0.5, 2, N) * np.exp(1j * np.arange(N))
        p = tmp_path / "m.txt"
        write_measurements(p, magnitude_sq(stft_forward(x, make_window("square", W, N), L, K)))
        return p, x

    def test_recover_direct(self, tmp_path):
        p, x = self.meas(tmp_path)
        assert cli.main(["recover", str(p), "--method", "DIRECT", "--out", str(tmp_path / "x.txt")]) == 0
        est = read_signal(tmp_path / "x.txt").values
        assert nmse(est, x) < 1e-12

    @pytest.mark.parametrize("method", ["GLA", "PCGP"])
    def test_recover_altproj(self, tmp_path, method, capsys):
        p, _ = self.meas(tmp_path)
        assert cli.main(["recover", str(p), "--method", method, "--restarts", "2",
                         "--iterations", "20"]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 7

    def test_recover_gespar(self, tmp_path, capsys):
        x = np.zeros(16)
        x[[3, 5]] = [1.0, -0.7]  # closer than W: no sign ambiguity
        p = tmp_path / "m.txt"
        write_measurements(p, magnitude_sq(stft_forward(x, make_window("square", 4, 16), 2, 8)))
        assert cli.main(["recover", str(p), "--k", "2", "--seed", "1"]) == 0
        est = np.loadtxt(io.StringIO(capsys.readouterr().out))[:, 0]
        assert nmse(est, x) < 1e-8

    def test_recover_invalid(self, tmp_path):
        p, _ = self.meas(tmp_path)
        assert cli.main(["recover", str(p)]) == 1  # GESPAR without --k
        assert cli.main(["recover", str(p), "--L", "2", "--method", "DIRECT"]) == 1
        assert cli.main(["recover", str(tmp_path / "nope.txt"), "--method", "DIRECT"]) == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["recover", str(p), "--method", "HIO"])
        assert exc.value.code == 1

    def test_recover_runtime_failure(self, tmp_path):
        # conditions fail (gcd(64, 16) > 1): the solver refuses, exit 2
        p, _ = self.meas(tmp_path, N=64, W=16, L=1, K=16)
        assert cli.main(["recover", str(p), "--method", "DIRECT"]) == 2

    def test_experiment(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(dump_config(small_config(k_range=(1,), trials_per_cell=1)))
        assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
        lines = (tmp_path / "o" / "results.csv").read_text().splitlines()
        assert len(lines) == 3 and (tmp_path / "o" / "results.svg").exists()

    def test_experiment_bad_config(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("bogus = 1\n")
        assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_ambiguity_shift(self, tmp_path):
        assert cli.main(["ambiguity", "--N", "64", "--W", "16", "--L", "4", "--out", str(tmp_path)]) == 0
        cert = json.loads((tmp_path / "certificate.json").read_text())
        u, v = read_signal(tmp_path / "u.txt").values, read_signal(tmp_path / "v.txt").values
        w = make_window("square", 16, 64)
        yu, yv = (magnitude_sq(stft_forward(s, w, 4, 16)).y for s in (u, v))
        assert np.max(np.abs(yu - yv)) <= 1e-12 * yu.max() and cert

    def test_ambiguity_separated(self, tmp_path):
        assert cli.main(["ambiguity", "--kind", "separated", "--N", "16", "--W", "3", "--support1", "0", "2",
                         "--support2", "6", "8", "--out", str(tmp_path)]) == 0

    def test_ambiguity_invalid(self, tmp_path):
        assert cli.main(["ambiguity", "--N", "64", "--W", "15", "--L", "4", "--out", str(tmp_path)]) != 0

    def test_check_conditions(self, capsys):
        assert cli.main(["check-conditions", "--N", "7", "--W", "3", "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["all_hold"] is True
        assert cli.main(["check-conditions", "--N", "64", "--W", "16"]) == 0
        out = capsys.readouterr().out
        assert re.search(r"\(i\).*False", out)
        assert cli.main(["check-conditions", "--N", "8", "--W", "9"]) == 1

    def test_info(self, capsys):
        assert cli.main(["info"]) == 0
        assert "backend" in capsys.readouterr().out

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 1
