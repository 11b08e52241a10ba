"""Tests for the perturbation optimizer, losses, and built-in detector."""

import numpy as np
import pytest

from rfnns.attacks import AttackSpec, AttackSuite
from rfnns.decoder import CapacityProfile, build_decoder, forward
from rfnns.rspg import (
    BuiltInDetector,
    LossConfig,
    Schedule,
    ce_loss,
    mse_loss,
    objective,
    optimize_perturbation,
)
from rfnns.texture import BlockGrid, BlockMask


def _setup(mask_pattern=None):
    """Tiny 16x16 cover / 4x4 secret problem for fast optimizer tests."""
    rng = np.random.default_rng(0)
    cover = 0.25 + 0.5 * rng.random((16, 16, 3))
    secret = rng.random((4, 4, 3))
    selected = np.ones((2, 2), dtype=bool) if mask_pattern is None \
        else np.asarray(mask_pattern, dtype=bool)
    selected.setflags(write=False)
    mask = BlockMask(grid=BlockGrid(block_size=8, rows=2, cols=2),
                     selected=selected)
    dec = build_decoder(3, CapacityProfile("tiny", 16, 4, 8))
    return cover, secret, mask, dec


class TestLosses:
    def test_mse_loss(self):
        a = np.array([0.0, 1.0, 0.5])
        b = np.array([0.0, 0.0, 0.5])
        assert mse_loss(a, b) == pytest.approx(1.0 / 3.0)
        with pytest.raises(ValueError):
            mse_loss(a, np.zeros(2))

    def test_ce_loss(self):
        logits = np.array([2.0, -1.0])
        assert ce_loss(logits, 0) == pytest.approx(
            float(np.log(1 + np.exp(-3.0))))
        assert ce_loss(logits, 1) == pytest.approx(
            float(np.log(1 + np.exp(3.0))))
        with pytest.raises(ValueError):
            ce_loss(logits, 2)

    def test_objective_adaptive_head(self):
        cfg = LossConfig(alpha=1.0, beta=0.5, gamma=0.0, Y=0.001)
        # below Y the head is the constant Y itself
        assert objective(0.0005, 0.1, 0.2, 0.0, cfg) == pytest.approx(
            0.001 + 0.5 * 0.1 + 0.5 * 0.2)
        # above Y it is alpha * l1
        assert objective(0.01, 0.1, 0.2, 0.0, cfg) == pytest.approx(
            0.01 + 0.5 * 0.1 + 0.5 * 0.2)

    def test_objective_disables_attack_term_when_beta_large(self):
        cfg = LossConfig(beta=3.0, gamma=0.0)
        # (1 - beta) < 0 would reward attack damage; l3 must be dropped
        assert objective(0.01, 0.1, 99.0, 0.0, cfg) == pytest.approx(
            0.01 + 3.0 * 0.1)

    def test_for_mode(self):
        assert LossConfig.for_mode(robust=False).beta == 3.0
        suite = AttackSuite(specs=(AttackSpec("contrast", 0.7),))
        assert LossConfig.for_mode(robust=True, suite=suite).beta == 0.5
        with pytest.raises(ValueError):
            LossConfig.for_mode(robust=True)


class TestSchedule:
    def test_lr_halving(self):
        s = Schedule(iterations=1500, lr0=0.1, halving_period=500)
        assert s.lr(0) == pytest.approx(0.1)
        assert s.lr(499) == pytest.approx(0.1)
        assert s.lr(500) == pytest.approx(0.05)
        assert s.lr(1000) == pytest.approx(0.025)
        assert s.lr(1499) == pytest.approx(0.025)

    def test_default_lr0(self):
        assert Schedule().lr0 == pytest.approx(10.0 ** -1.25)


class TestBuiltInDetector:
    def test_flat_image_reads_normal(self):
        logits, _ = BuiltInDetector().classify(np.full((32, 32, 3), 0.5))
        assert logits[1] > logits[0]

    def test_noisy_image_reads_stego(self):
        rng = np.random.default_rng(1)
        img = np.clip(0.5 + 0.2 * rng.standard_normal((32, 32, 3)), 0, 1)
        logits, _ = BuiltInDetector().classify(img)
        assert logits[0] > logits[1]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        img = rng.random((12, 12, 3))
        det = BuiltInDetector()
        logits, grad = det.classify(img)
        dl = np.array([1.0, -0.5])
        g = grad(dl)
        eps = 1e-6
        for idx in [(0, 0, 0), (6, 6, 1), (11, 11, 2)]:
            ip = img.copy()
            ip[idx] += eps
            im = img.copy()
            im[idx] -= eps
            lp, _ = det.classify(ip)
            lm, _ = det.classify(im)
            fd = float(np.dot(dl, (lp - lm)) / (2 * eps))
            assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-10)


class TestOptimizer:
    def test_delta_constraints(self):
        cover, secret, mask, dec = _setup([[True, False], [False, True]])
        cfg = LossConfig(mu=0.05, gamma=0.0)
        delta, trace = optimize_perturbation(
            cover, secret, mask, dec, cfg, Schedule(iterations=25))
        assert len(trace) == 25
        assert np.max(np.abs(delta)) <= 0.05 + 1e-15
        off = ~mask.pixel_mask()
        assert np.all(delta[off] == 0.0)

    def test_loss_decreases(self):
        cover, secret, mask, dec = _setup()
        _, trace = optimize_perturbation(
            cover, secret, mask, dec, LossConfig(gamma=0.0),
            Schedule(iterations=60))
        assert min(t[2] for t in trace) < trace[0][2]

    def test_deterministic(self):
        cover, secret, mask, dec = _setup()
        cfg = LossConfig(gamma=0.0)
        d1, t1 = optimize_perturbation(cover, secret, mask, dec, cfg,
                                       Schedule(iterations=20))
        d2, t2 = optimize_perturbation(cover, secret, mask, dec, cfg,
                                       Schedule(iterations=20))
        assert np.array_equal(d1, d2)
        assert t1 == t2

    def test_best_snapshot_reproduces_trace_minimum(self):
        cover, secret, mask, dec = _setup()
        delta, trace = optimize_perturbation(
            cover, secret, mask, dec, LossConfig(gamma=0.0),
            Schedule(iterations=40))
        best = min(t[2] + t[3] for t in trace)
        pix3 = mask.pixel_mask()[:, :, None].astype(np.float64)
        x = np.floor(np.clip(cover + delta, 0, 1) * 255.0 + 0.5) / 255.0
        qcover = np.floor(cover * 255.0 + 0.5) / 255.0
        rec, _ = forward(dec, (x - qcover) * pix3)
        assert mse_loss(rec, secret) == pytest.approx(best, abs=1e-12)

    def test_worst_case_pick_tracks_harshest_attack(self):
        # with an {identity, noise} suite, round-robin hits the identity
        # attack on even iterations (L3 == L2 exactly, same decoder input);
        # worst-case picking must always report the noisier loss instead
        cover, secret, mask, dec = _setup()
        suite = AttackSuite((AttackSpec("identity"),
                             AttackSpec("gaussian_noise", 0.01, noise_seed=5)))
        rr = LossConfig(beta=0.5, gamma=0.0, robust=True, suite=suite)
        _, t_rr = optimize_perturbation(cover, secret, mask, dec, rr,
                                        Schedule(iterations=8))
        assert all(row[3] == row[2] for row in t_rr[::2])
        worst = LossConfig(beta=0.5, gamma=0.0, robust=True, suite=suite,
                           attack_pick="worst")
        _, t_w = optimize_perturbation(cover, secret, mask, dec, worst,
                                       Schedule(iterations=8))
        assert all(row[3] > row[2] for row in t_w)

    def test_invalid_attack_pick_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(attack_pick="random")

    def test_empty_mask_raises(self):
        cover, secret, mask, dec = _setup([[False, False], [False, False]])
        with pytest.raises(ValueError):
            optimize_perturbation(cover, secret, mask, dec,
                                  LossConfig(gamma=0.0), Schedule(iterations=5))

    def test_robust_mode_requires_suite(self):
        cover, secret, mask, dec = _setup()
        with pytest.raises(ValueError):
            optimize_perturbation(cover, secret, mask, dec,
                                  LossConfig(robust=True, beta=0.5),
                                  Schedule(iterations=5))

    def test_robust_mode_populates_attack_loss(self):
        cover, secret, mask, dec = _setup()
        suite = AttackSuite(specs=(AttackSpec("contrast", 0.7),
                                   AttackSpec("gaussian_noise", 0.01, 1)))
        cfg = LossConfig(beta=0.5, gamma=0.0, robust=True, suite=suite)
        _, trace = optimize_perturbation(cover, secret, mask, dec, cfg,
                                         Schedule(iterations=10))
        assert all(t[3] > 0.0 for t in trace)

    def test_steganalysis_starts_late(self):
        cover, secret, mask, dec = _setup()
        sched = Schedule(iterations=12, steganalysis_start=8)
        _, trace = optimize_perturbation(cover, secret, mask, dec,
                                         LossConfig(gamma=1e-5), sched)
        assert all(t[4] == 0.0 for t in trace if t[0] < 8)
        assert any(t[4] != 0.0 for t in trace if t[0] >= 8)

    def test_on_iteration_callback(self):
        cover, secret, mask, dec = _setup()
        seen = []
        optimize_perturbation(
            cover, secret, mask, dec, LossConfig(gamma=0.0),
            Schedule(iterations=7),
            on_iteration=lambda t, state: seen.append(t))
        assert seen == list(range(7))
