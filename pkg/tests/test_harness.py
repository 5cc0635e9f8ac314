import math
import subprocess
import sys

import numpy as np
import pytest

from lrmt.errors import ConfigError, InvalidInputError
from lrmt.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    ExperimentRecord,
    default_config,
    fit_power_law,
    format_records,
    load_config,
    read_records,
    run_ablation,
    run_curriculum,
    run_family,
    run_iter_sweep,
    run_rip_check,
    run_sample_sweep,
    run_transfer,
    write_records,
)


def _tiny_cfg(**kw):
    base = dict(
        family="iter_sweep", d=6, k=2, t_count=5, kappa=2.0, noise_sigma=0.2,
        n_values=(40,), methods=("tpgd",), seeds=(0,),
        overrides={"k1": 10},
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestFitPowerLaw:
    def test_exact_inverse_law(self):
        pts = [(x, 5.0 / x) for x in (1.0, 2.0, 4.0, 8.0)]
        fit = fit_power_law(pts)
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_exact_square_law(self):
        pts = [(x, 2.0 * x**2) for x in (1.0, 3.0, 9.0)]
        assert fit_power_law(pts).slope == pytest.approx(2.0, abs=1e-12)

    def test_perturbed_law(self):
        gen = np.random.default_rng(0)
        pts = [(x, (1.0 / x) * (1 + gen.uniform(-0.01, 0.01))) for x in np.geomspace(1, 100, 12)]
        assert -1.05 < fit_power_law(pts).slope < -0.95

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            fit_power_law([(1.0, 1.0), (2.0, 0.5)])
        with pytest.raises(InvalidInputError):
            fit_power_law([(1.0, 1.0), (2.0, 0.5), (3.0, -0.1)])


class TestCsv:
    def test_round_trip(self, tmp_path):
        records = run_iter_sweep(_tiny_cfg())
        path = tmp_path / "out.csv"
        write_records(path, records)
        back = read_records(path)
        assert len(back) == len(records)
        ordered = sorted(records, key=lambda r: (r.family, r.method, r.seed, r.n, r.iteration))
        for a, b in zip(ordered, back):
            for col in ("family", "method", "seed", "d", "k", "t_count", "n", "iteration", "diverged"):
                assert getattr(a, col) == getattr(b, col)
            for col in ("train_loss", "estimation_error", "balance_gap", "dist_to_target", "wall_ms"):
                va, vb = getattr(a, col), getattr(b, col)
                assert va == vb or (math.isnan(va) and math.isnan(vb))

    def test_header_pinned(self):
        assert ",".join(CSV_COLUMNS) == (
            "family,method,seed,d,k,T,N,iteration,train_loss,estimation_error,"
            "balance_gap,dist_to_target,wall_ms,diverged"
        )

    def test_byte_determinism(self):
        a = format_records(run_iter_sweep(_tiny_cfg()))
        b = format_records(run_iter_sweep(_tiny_cfg()))
        assert a == b
        assert a.endswith("\n") and "\r" not in a

    def test_wall_ms_zero_without_timings(self):
        recs = run_iter_sweep(_tiny_cfg())
        assert all(r.wall_ms == 0.0 for r in recs)
        timed = run_iter_sweep(_tiny_cfg(timings=True))
        assert any(r.wall_ms > 0.0 for r in timed)


class TestIterSweep:
    def test_row_counting_including_init(self):
        recs = run_iter_sweep(_tiny_cfg())
        tpgd_rows = [r for r in recs if r.method == "tpgd"]
        assert len(tpgd_rows) == 11  # budget 10 + initialization
        assert sorted(r.iteration for r in tpgd_rows) == list(range(11))

    def test_theory_rows_flat_and_seedless(self):
        recs = run_iter_sweep(_tiny_cfg(seeds=(0, 1)))
        theory = [r for r in recs if r.method == "theory"]
        assert theory and all(r.seed == -1 for r in theory)
        assert len({r.estimation_error for r in theory}) == 1

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            run_iter_sweep(_tiny_cfg(methods=("tpgd", "sgd")))


class TestSampleSweep:
    def test_final_row_counting(self):
        cfg = _tiny_cfg(
            family="sample_sweep", n_values=(20, 30, 40), seeds=(0, 1, 2),
            methods=("tpgd", "gd_loss1"),
        )
        recs = run_sample_sweep(cfg)
        finals = [r for r in recs if r.method != "theory"]
        assert len(finals) == 18
        assert len([r for r in recs if r.method == "theory"]) == 3

    def test_theory_inverse_in_n(self):
        cfg = _tiny_cfg(family="sample_sweep", n_values=(20, 40), seeds=(0,))
        recs = run_sample_sweep(cfg)
        th = sorted(
            [r for r in recs if r.method == "theory"], key=lambda r: r.n
        )
        assert th[0].estimation_error == pytest.approx(2 * th[1].estimation_error, rel=1e-9)


class TestAblation:
    def test_arms_and_shared_prefix(self):
        cfg = _tiny_cfg(family="ablation")
        recs = run_ablation(cfg)
        arms = {r.method for r in recs}
        assert arms == {"tpgd", "phase1_only", "phase2_only"}
        t = {r.iteration: r for r in recs if r.method == "tpgd"}
        p1 = {r.iteration: r for r in recs if r.method == "phase1_only"}
        for it in range(5 + 1):  # k1 // 2 = 5
            assert t[it].train_loss == p1[it].train_loss
            assert t[it].estimation_error == p1[it].estimation_error


class TestTransferFamily:
    def test_zero_noise_zero_risk_from_target_start(self):
        cfg = ExperimentConfig(
            family="transfer", d=5, k=2, t_count=4, noise_sigma=0.0,
            k2_values=(60,), seeds=(0,), w0_mode="target",
        )
        recs = run_transfer(cfg)
        assert recs and all(r.estimation_error <= 1e-12 for r in recs)

    def test_risk_trace_shape(self):
        cfg = ExperimentConfig(
            family="transfer", d=5, k=2, t_count=4, noise_sigma=0.3,
            k2_values=(100,), seeds=(0, 1), checkpoint_count=10,
        )
        recs = run_transfer(cfg)
        for seed in (0, 1):
            rows = [r for r in recs if r.seed == seed]
            assert rows[-1].iteration == 99
            assert all(r.n == 100 for r in rows)


class TestCurriculumFamily:
    def test_single_level_matches_tpgd(self):
        cfg = ExperimentConfig(
            family="curriculum", d=8, k=2, level_t_counts=(6,),
            level_noise_sigmas=(0.2,), n_values=(50,), seeds=(0,),
            overrides={"eta1": 0.1, "eta2": 0.05, "k1": 400},
        )
        recs = run_curriculum(cfg)
        cur = [r for r in recs if r.method == "curriculum" and r.iteration == 0][0]
        pool = [r for r in recs if r.method == "pooled" and r.iteration == 0][0]
        assert cur.estimation_error == pytest.approx(pool.estimation_error, rel=1e-12)

    def test_level_rows_present(self):
        cfg = ExperimentConfig(
            family="curriculum", d=8, k=2, level_t_counts=(6, 6),
            level_noise_sigmas=(0.1, 0.3), n_values=(60,), seeds=(0,),
            overrides={"eta1": 0.1, "eta2": 0.05, "k1": 400},
        )
        recs = run_curriculum(cfg)
        for method in ("curriculum", "pooled"):
            its = sorted(r.iteration for r in recs if r.method == method)
            assert its == [0, 1, 2]


class TestRipFamily:
    def test_delta_nonnegative(self):
        cfg = ExperimentConfig(
            family="rip_check", d=10, k=2, t_count=3, noise_sigma=0.0,
            n_values=(50, 100), seeds=(0, 1), probes=20,
        )
        recs = run_rip_check(cfg)
        assert len(recs) == 4
        assert all(r.estimation_error >= 0 for r in recs)


class TestConfig:
    def test_defaults_per_family(self):
        assert default_config("sample_sweep").n_values == (250, 500, 1000, 2000)
        assert default_config("rip_check").d == 50
        assert len(default_config("curriculum").seeds) == 10

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(family="nope").validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(family="iter_sweep", seeds=()).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(family="iter_sweep", k=5, t_count=3).validate()

    def test_file_and_cli_precedence(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[iter_sweep]\nd = 12\nk = 2\nt_count = 9\nseeds = 3, 4\n"
            "n_values = 64\neta1 = 0.25\n"
        )
        cfg = load_config("iter_sweep", str(path), {"d": 10, "seeds": (7,)})
        assert cfg.d == 10  # CLI wins
        assert cfg.t_count == 9  # file wins over default
        assert cfg.seeds == (7,)
        assert cfg.overrides["eta1"] == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[iter_sweep]\nwat = 1\n")
        with pytest.raises(ConfigError):
            load_config("iter_sweep", str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("iter_sweep", "/nonexistent/exp.ini")


class TestCli:
    def _run(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "lrmt.cli", *args], capture_output=True, text=True
        )

    def test_gen_round_trip(self, tmp_path):
        out = tmp_path / "data.lrmt"
        proc = self._run("gen", "--out", str(out), "--d", "6", "--k", "2", "--t", "4",
                         "--n", "12", "--seed", "3")
        assert proc.returncode == 0, proc.stderr
        from lrmt.synth import load_dataset

        data, k = load_dataset(out)
        assert data.x.shape == (4, 6, 12) and k == 2

    def test_run_and_fit(self, tmp_path):
        proc = self._run(
            "run", "sample_sweep", "--d", "6", "--k", "2", "--t", "5",
            "--n-values", "20,40,80", "--seed", "0,1", "--methods", "tpgd",
            "--budget", "10", "--out", str(tmp_path),
        )
        assert proc.returncode == 0, proc.stderr
        csv_path = tmp_path / "sample_sweep.csv"
        assert csv_path.exists()
        fit = self._run("fit", "--csv", str(csv_path), "--x", "N",
                        "--y", "estimation_error", "--method", "tpgd")
        assert fit.returncode == 0, fit.stderr
        assert "slope=" in fit.stdout

    def test_config_error_exit_code(self, tmp_path):
        proc = self._run("run", "iter_sweep", "--config", str(tmp_path / "missing.ini"))
        assert proc.returncode == 2

    def test_divergence_exit_code(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[iter_sweep]\nd = 4\nk = 1\nt_count = 3\nn_values = 10\nseeds = 0\n"
            "methods = gd_loss2\nk1 = 10\neta1 = 1000.0\nspectrum = 1.0\n"
        )
        proc = self._run("run", "iter_sweep", "--config", str(path),
                         "--out", str(tmp_path))
        assert proc.returncode == 3
        rows = read_records(tmp_path / "iter_sweep.csv")
        assert any(r.diverged for r in rows)

    def test_run_family_dispatch(self):
        cfg = _tiny_cfg()
        assert run_family(cfg)
