"""Robust steganographic perturbation generation.

Projected gradient descent over a bounded, mask-supported perturbation.  Four
loss terms: perturbation magnitude (L1), clean recovery (L2), recovery after
a simulated channel attack (L3), and steganalyzer feedback (L4), combined by
an adaptive objective that switches the L1 term off (replacing it with the
constant Y) once the perturbation is visually negligible.

8-bit quantization is simulated inside the loop with a straight-through
gradient, because stego images transit as 8-bit PNG and sub-quantum
perturbation components would otherwise be destroyed after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import signal

from .attacks import AttackSuite, apply_surrogate
from .decoder import FixedDecoder, forward, input_gradient
from .keyed_rand import derive_stream
from .texture import BlockMask


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 3.0
    gamma: float = 1e-5
    Y: float = 0.001
    mu: float = 0.2
    robust: bool = False
    suite: Optional[AttackSuite] = None
    # "round_robin" cycles through the suite (one attack per iteration);
    # "worst" evaluates every attack each iteration and descends the one
    # with the highest recovery loss (minimax over the suite)
    attack_pick: str = "round_robin"

    def __post_init__(self):
        if self.attack_pick not in ("round_robin", "worst"):
            raise ValueError(
                f"unknown attack_pick {self.attack_pick!r}")

    @staticmethod
    def for_mode(robust: bool, suite: Optional[AttackSuite] = None,
                 gamma: float = 1e-5,
                 attack_pick: str = "round_robin") -> "LossConfig":
        """Paper defaults: beta=3 with the attack term off, 0.5 with it on."""
        if robust and suite is None:
            raise ValueError("robust mode requires an attack suite")
        return LossConfig(beta=0.5 if robust else 3.0, gamma=gamma,
                          robust=robust, suite=suite,
                          attack_pick=attack_pick)


@dataclass(frozen=True)
class Schedule:
    iterations: int = 1500
    lr0: float = 10.0**-1.25
    halving_period: int = 500
    steganalysis_start: int = 1400

    def lr(self, t: int) -> float:
        return self.lr0 * 2.0 ** (-(t // self.halving_period))


@dataclass
class OptimizationState:
    delta: np.ndarray
    iteration: int
    best_delta: np.ndarray
    best_objective: float
    loss_trace: list  # rows (t, L1, L2, L3, L4, L, lr)


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, trace: list):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.trace = trace


def mse_loss(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    d = a - b
    return float(np.mean(d * d))


def ce_loss(logits: np.ndarray, y: int) -> float:
    """Two-class cross-entropy with log-sum-exp stabilization."""
    if y not in (0, 1):
        raise ValueError("class index must be 0 or 1")
    return float(np.logaddexp(logits[0], logits[1]) - logits[y])


def _ce_grad(logits: np.ndarray, y: int) -> np.ndarray:
    m = max(logits[0], logits[1])
    e = np.exp(np.asarray(logits) - m)
    p = e / e.sum()
    p[y] -= 1.0
    return p


def objective(l1: float, l2: float, l3: float, l4: float,
              cfg: LossConfig) -> float:
    """Adaptive total loss; the L1 term collapses to the constant Y once the
    perturbation is small enough to be visually negligible."""
    if cfg.beta > 1.0:
        l3 = 0.0  # (1 - beta) would be negative; attack term is off here
    head = cfg.Y if l1 < cfg.Y else cfg.alpha * l1
    return head + cfg.beta * l2 + (1.0 - cfg.beta) * l3 + cfg.gamma * l4


# KV 5x5 high-pass kernel, the classic steganalytic residual filter
_KV = np.array([
    [-1, 2, -2, 2, -1],
    [2, -6, 8, -6, 2],
    [-2, 8, -12, 8, -2],
    [2, -6, 8, -6, 2],
    [-1, 2, -2, 2, -1]], dtype=np.float64) / 12.0

_DET_A = 50.0
_DET_B = -0.5


class BuiltInDetector:
    """Differentiable residual-energy steganalyzer.

    logit 0 = "stego", logit 1 = "normal"; flat images score as normal,
    dense high-frequency perturbations push logit 0 up.
    """

    def classify(self, img: np.ndarray) -> tuple[np.ndarray, Callable]:
        residuals = [signal.correlate2d(img[:, :, c], _KV, mode="valid")
                     for c in range(img.shape[2])]
        n = sum(r.size for r in residuals)
        m = sum(float(np.sum(r * r)) for r in residuals) / n
        logit0 = _DET_A * m + _DET_B
        logits = np.array([logit0, -logit0])

        def grad(dlogits: np.ndarray) -> np.ndarray:
            scale = _DET_A * (dlogits[0] - dlogits[1]) * 2.0 / n
            gimg = np.zeros_like(img)
            for c, r in enumerate(residuals):
                gimg[:, :, c] = signal.convolve2d(scale * r, _KV, mode="full")
            return gimg

        return logits, grad


def _quantize_st(x: np.ndarray) -> np.ndarray:
    return np.floor(x * 255.0 + 0.5) / 255.0


def optimize_perturbation(
    cover: np.ndarray,
    secret: np.ndarray,
    mask: BlockMask,
    dec: FixedDecoder,
    cfg: LossConfig,
    sched: Schedule,
    plugin=None,
    on_iteration: Optional[Callable[[int, OptimizationState], None]] = None,
) -> tuple[np.ndarray, list]:
    """Optimize the bounded perturbation; returns (best delta, loss trace).

    The returned delta minimizes L2 + L3 over all iterates (recovery quality
    decides the snapshot, so late steganalysis feedback cannot degrade the
    payload), satisfies max|delta| <= mu, and is zero off-mask.
    """
    pix = mask.pixel_mask()
    if not pix.any():
        raise ValueError("empty block mask: no embedding region selected")
    pix3 = pix[:, :, None].astype(np.float64)
    n_mask = float(pix3.sum() * cover.shape[2])

    if cfg.robust and cfg.suite is None:
        raise ValueError("robust mode requires an attack suite")
    if plugin is None and cfg.gamma > 0:
        plugin = BuiltInDetector()

    # the receiver diffs the stego against the quantized cover, so the
    # decoder branches must use the same base for bit-exact symmetry
    qcover = _quantize_st(cover)

    # a zero perturbation quantizes onto the cover exactly, leaving the
    # decoder with a constant input whose instance-norm statistics are
    # degenerate and whose gradient cannot break the symmetry; start from a
    # keyed sub-quantum dither instead (invisible after quantization bounds)
    init = derive_stream(dec.weight_key, "rspg/init")
    delta = ((init.uniform(cover.size).reshape(cover.shape) - 0.5)
             / 255.0) * pix3
    state = OptimizationState(delta=delta, iteration=0, best_delta=delta.copy(),
                              best_objective=math.inf, loss_trace=[])

    for t in range(sched.iterations):
        pre = cover + delta
        st_clamp = ((pre > -0.1) & (pre < 1.1)).astype(np.float64)
        x_tilde = _quantize_st(np.clip(pre, 0.0, 1.0))

        # clean recovery branch
        d_clean = (x_tilde - qcover) * pix3
        s_clean, tape_c = forward(dec, d_clean)
        l2 = mse_loss(s_clean, secret)
        g2 = input_gradient(dec, tape_c,
                            2.0 * (s_clean - secret) / secret.size) * pix3

        # attacked recovery branch
        l3 = 0.0
        g3 = None
        if cfg.robust and cfg.beta <= 1.0:
            if cfg.attack_pick == "worst":
                specs = cfg.suite.specs
            else:
                specs = (cfg.suite.pick(t),)
            l3, att_back, s_att, tape_a = -1.0, None, None, None
            for spec in specs:
                x_s, back_s = apply_surrogate(spec, x_tilde)
                s_s, tape_s = forward(dec, (x_s - qcover) * pix3)
                l3_s = mse_loss(s_s, secret)
                if l3_s > l3:
                    l3, att_back, s_att, tape_a = l3_s, back_s, s_s, tape_s
            g3 = att_back(
                input_gradient(dec, tape_a,
                               2.0 * (s_att - secret) / secret.size) * pix3)

        # steganalyzer feedback branch
        l4 = 0.0
        g4 = None
        if plugin is not None and cfg.gamma > 0 and t >= sched.steganalysis_start:
            logits, det_grad = plugin.classify(x_tilde)
            l4 = ce_loss(logits, y=1)
            g4 = det_grad(_ce_grad(logits, y=1))

        l1 = float(np.sum(delta * delta) / n_mask)
        total = objective(l1, l2, l3, l4, cfg)

        lr = sched.lr(t)
        state.loss_trace.append((t, l1, l2, l3, l4, total, lr))
        if not math.isfinite(total):
            raise NonFiniteLossError(t, state.loss_trace)

        # branches that flow through x_tilde see the straight-through clamp;
        # the L1 term acts on delta directly
        grad = cfg.beta * g2
        if g3 is not None:
            grad = grad + (1.0 - cfg.beta) * g3
        if g4 is not None:
            grad = grad + cfg.gamma * g4
        grad = grad * st_clamp
        if l1 >= cfg.Y:
            grad = grad + cfg.alpha * 2.0 * delta / n_mask
        grad = grad * pix3

        quality = l2 + l3
        if quality < state.best_objective:
            state.best_objective = quality
            state.best_delta = delta.copy()

        delta = np.clip(delta - lr * grad, -cfg.mu, cfg.mu) * pix3
        state.delta = delta
        state.iteration = t
        if on_iteration is not None:
            on_iteration(t, state)

    return state.best_delta, state.loss_trace
