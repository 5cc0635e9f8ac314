import math

import numpy as np
import pytest

from lrmt.errors import InsufficientDataError, InvalidInputError
from lrmt.rng import SeededRng
from lrmt.synth import make_ground_truth, sample_target_stream
from lrmt.transfer import (
    DecaySchedule,
    default_eta0,
    excess_risk,
    make_decay_schedule,
    plugin_eta0,
    sgd_transfer,
    step_size,
)


class TestSchedule:
    def test_block_length_formula(self):
        sched = make_decay_schedule(0.1, 110, h=10)
        assert sched.k2_prime == 21  # floor(100 / ln 100)

    def test_default_warmup(self):
        sched = make_decay_schedule(0.1, 100)
        assert sched.h == 10

    def test_hand_values(self):
        sched = make_decay_schedule(0.1, 110, h=10)
        assert step_size(0, sched) == pytest.approx(0.1)
        assert step_size(31, sched) == pytest.approx(0.1)  # tau = K2' + h
        assert step_size(32, sched) == pytest.approx(0.05)  # l = floor(22/21) = 1

    def test_non_increasing_and_exact_halving(self):
        sched = make_decay_schedule(0.2, 300, h=20)
        values = [step_size(tau, sched) for tau in range(300)]
        for a, b in zip(values, values[1:]):
            assert b <= a
            if b < a:
                assert b == a / 2  # only exact halvings
        assert all(v == 0.2 for v in values[: sched.k2_prime + sched.h + 1])

    def test_log_base_config(self):
        nat = make_decay_schedule(0.1, 110, h=10)
        base2 = make_decay_schedule(0.1, 110, h=10, log_base=2.0)
        assert base2.k2_prime == math.floor(100 / math.log2(100))
        assert base2.k2_prime < nat.k2_prime

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            make_decay_schedule(0.1, 11, h=10)  # k2 - h < 2
        with pytest.raises(InvalidInputError):
            make_decay_schedule(0.0, 100, h=10)
        with pytest.raises(InvalidInputError):
            DecaySchedule(eta0=0.1, h=5, k2=4, k2_prime=1)
        sched = make_decay_schedule(0.1, 100, h=10)
        with pytest.raises(InvalidInputError):
            step_size(-1, sched)
        with pytest.raises(InvalidInputError):
            step_size(100, sched)


class TestSgdTransfer:
    def test_fixed_point_at_truth(self):
        gt = make_ground_truth(6, 2, 4, [2.0, 1.0], 0.0, SeededRng(0))
        w_target = np.array([0.4, -0.2])
        stream = sample_target_stream(gt, w_target, np.eye(6), 200, SeededRng(0, 1))
        sched = make_decay_schedule(0.05, 150)
        res = sgd_transfer(gt.b_star, stream, sched, w_target)
        assert np.allclose(res.w_final, w_target, atol=1e-12)
        assert res.samples_consumed == 149

    def test_hand_single_update(self):
        # d = k = 1, B = 1, sample (x=1, y=1), w0 = 0, eta = 0.5 -> w = 0.5
        sched = DecaySchedule(eta0=0.5, h=0, k2=2, k2_prime=1)
        res = sgd_transfer(np.array([[1.0]]), [(np.array([1.0]), 1.0)], sched, [0.0])
        assert res.w_final[0] == pytest.approx(0.5)
        assert res.samples_consumed == 1

    def test_stream_exhaustion(self):
        sched = make_decay_schedule(0.1, 50)
        gt = make_ground_truth(4, 2, 3, [2.0, 1.0], 0.1, SeededRng(1))
        stream = sample_target_stream(gt, np.zeros(2), np.eye(4), 10, SeededRng(1, 1))
        with pytest.raises(InsufficientDataError):
            sgd_transfer(gt.b_star, stream, sched, np.zeros(2))

    def test_deterministic(self):
        gt = make_ground_truth(5, 2, 4, [2.0, 1.0], 0.4, SeededRng(2))
        sched = make_decay_schedule(0.02, 120)
        runs = []
        for _ in range(2):
            stream = sample_target_stream(gt, np.ones(2), np.eye(5), 119, SeededRng(2, 7))
            runs.append(sgd_transfer(gt.b_star, stream, sched, np.zeros(2)).w_final)
        assert np.array_equal(runs[0], runs[1])

    def test_checkpoints_traced(self):
        gt = make_ground_truth(5, 2, 4, [2.0, 1.0], 0.2, SeededRng(3))
        w_target = SeededRng(3, 2).unit_vector(2)
        sched = make_decay_schedule(0.02, 100)
        stream = sample_target_stream(gt, w_target, np.eye(5), 99, SeededRng(3, 1))
        res = sgd_transfer(
            gt.b_star, stream, sched, np.zeros(2), checkpoints=(25, 50, 75),
            risk_fn=lambda w: excess_risk(gt.b_star, w, gt, w_target, np.eye(5)),
        )
        assert [it for it, _ in res.excess_risk_trace] == [25, 50, 75, 99]
        assert all(r >= 0 for _, r in res.excess_risk_trace)


class TestExcessRisk:
    def test_zero_at_match(self):
        gt = make_ground_truth(5, 2, 4, [2.0, 1.0], 0.3, SeededRng(4))
        w = np.array([0.7, -0.1])
        assert excess_risk(gt.b_star, w, gt, w, np.eye(5)) <= 1e-15

    def test_unit_deviation(self):
        gt = make_ground_truth(3, 2, 2, [2.0, 1.0], 0.0, SeededRng(5))
        # choose w so that B w - B* w* = e1: solve in the column span
        w_target = np.zeros(2)
        b_hat = np.eye(3)[:, :2]
        w = np.array([1.0, 0.0])
        assert excess_risk(b_hat, w, gt, w_target, np.eye(3)) == pytest.approx(0.5)

    def test_monte_carlo_oracle(self):
        gt = make_ground_truth(4, 2, 3, [2.0, 1.0], 0.0, SeededRng(6))
        gen = np.random.default_rng(0)
        w = gen.normal(size=2)
        w_target = gen.normal(size=2)
        h = np.diag([2.0, 1.0, 0.5, 1.5])
        exact = excess_risk(gt.b_star, w, gt, w_target, h)
        delta = gt.b_star @ w - gt.b_star @ w_target
        xs = gen.normal(size=(1_000_000, 4)) * np.sqrt(np.diag(h))
        samples = 0.5 * (xs @ delta) ** 2
        se = samples.std(ddof=1) / np.sqrt(len(samples))
        assert abs(samples.mean() - exact) <= 3 * se

    def test_non_psd_rejected(self):
        gt = make_ground_truth(3, 2, 2, [2.0, 1.0], 0.0, SeededRng(7))
        h = np.eye(3)
        h[2, 2] = -0.5
        with pytest.raises(InvalidInputError):
            excess_risk(gt.b_star, np.zeros(2), gt, np.zeros(2), h)


class TestEta0:
    def test_known_covariance(self):
        gt = make_ground_truth(5, 2, 4, [2.0, 1.0], 0.0, SeededRng(8))
        eta = default_eta0(gt.b_star, np.eye(5))
        # tr(B*^T B*) = 2 + 1 = 3 under the balanced construction
        assert eta == pytest.approx(1.0 / (2 * 3 * 3.0), rel=1e-10)

    def test_plugin_close_to_exact(self):
        gt = make_ground_truth(5, 2, 4, [2.0, 1.0], 0.0, SeededRng(9))
        xs = SeededRng(9, 3).normal(4000, 5)
        exact = default_eta0(gt.b_star, np.eye(5))
        assert plugin_eta0(gt.b_star, xs) == pytest.approx(exact, rel=0.2)
