"""Two-phase gradient descent and the comparison solvers.

All solvers share one descent engine so that, given the same seed and step
size, their common prefixes are bit-identical (the two-phase run's first half
IS the plain data-term descent).  The engine records scalar metrics at every
iterate, keeps factor snapshots over a trailing window for tail averaging,
and either raises or flags on divergence.

Hyper-parameter defaults follow the theoretical prescriptions: the warm-start
step scales as 1/(kappa^5 sigma_1), the regularized-phase step as 1/sigma_1,
and the iteration budget as 1/(eta_1 sigma_k); the experiment scalings
(1.1x on the former, 0.1x of the latter's theoretical value) are the defaults
used throughout the harness.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DivergenceError, InvalidInputError
from .linalg import procrustes_distance
from .objectives import FactorPair, balance_gap
from .rng import SeededRng
from .synth import GroundTruth, MultiTaskDataset

ALPHA_FLOOR_SCALE = 1e-8


@dataclass(frozen=True)
class HyperParams:
    """Initialization scale, the two step sizes, and the iteration budget."""

    alpha_tilde: float
    eta1: float
    eta2: float
    k1: int
    failure_prob: float = 0.05
    scale_eta1: float = 1.1
    scale_eta2: float = 0.1

    def __post_init__(self):
        if self.alpha_tilde <= 0 or self.eta1 <= 0 or self.eta2 <= 0:
            raise InvalidInputError("alpha_tilde, eta1, eta2 must be positive")
        if self.k1 < 2 or self.k1 % 2 != 0:
            raise InvalidInputError(f"k1 must be even and >= 2, got {self.k1}")
        if not (0 < self.failure_prob < 1):
            raise InvalidInputError(f"failure_prob must be in (0,1), got {self.failure_prob}")


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    loss_phase1: float
    loss_phase2: float
    balance_gap: float
    estimation_error: float
    dist_to_target: float
    wall_ms: float


@dataclass
class SolveResult:
    """Final factors plus the per-iteration metric trace (length = steps + 1)."""

    final: FactorPair
    trajectory: list[TrajectoryPoint]
    snapshots: list[tuple[int, FactorPair]] = field(default_factory=list)
    diverged: bool = False
    diverged_at: int | None = None


def theoretical_hyperparams(
    sigma1: float,
    sigmak: float,
    d: int,
    k: int,
    t_count: int,
    failure_prob: float = 0.05,
    *,
    c_k: float = 20.0,
    c1: float = 1.0,
    scale_eta1: float = 1.1,
    scale_eta2: float = 0.1,
    overrides: dict | None = None,
) -> HyperParams:
    """Derive step sizes, iteration budget, and init scale from the spectrum.

    ``c_k`` is the leading constant in the iteration budget (the theory gives
    only a proportionality) and ``c1`` the constant in the init-scale exponent.
    The init scale is floored at 1e-8 * sqrt(sigma1): the theoretical value
    underflows already for moderate condition numbers, and the analysis only
    needs it small.  ``overrides`` entries pass through untouched.
    """
    if sigmak <= 0 or sigma1 < sigmak:
        raise InvalidInputError(f"need sigma1 >= sigmak > 0, got {sigma1}, {sigmak}")
    overrides = dict(overrides or {})
    kappa = sigma1 / sigmak

    eta1 = overrides.pop("eta1", scale_eta1 / (kappa**5 * sigma1))
    eta2 = overrides.pop("eta2", scale_eta2 / sigma1)
    if "k1" in overrides:
        k1 = int(overrides.pop("k1"))
    else:
        k1 = math.ceil(c_k / (eta1 * sigmak))
        k1 = max(2, k1 + (k1 % 2))
    if "alpha_tilde" in overrides:
        alpha = float(overrides.pop("alpha_tilde"))
    else:
        base = float(max(d + t_count, k))
        denom = k**5 * base ** (2.0 + c1 * kappa / 2.0)
        raw = (sigma1 / denom) * (failure_prob / kappa**2) ** (c1 * kappa)
        alpha = max(raw, ALPHA_FLOOR_SCALE * math.sqrt(sigma1))
    if overrides:
        raise InvalidInputError(f"unknown hyper-parameter overrides: {sorted(overrides)}")
    return HyperParams(
        alpha_tilde=alpha,
        eta1=eta1,
        eta2=eta2,
        k1=k1,
        failure_prob=failure_prob,
        scale_eta1=scale_eta1,
        scale_eta2=scale_eta2,
    )


def hyperparams_for(gt: GroundTruth, failure_prob: float = 0.05, **kwargs) -> HyperParams:
    """Prescriptions evaluated on a ground truth's planted spectrum."""
    return theoretical_hyperparams(
        gt.sigma1, gt.sigmak, gt.d, gt.k, gt.t_count, failure_prob, **kwargs
    )


def init_factors(d: int, k: int, t_count: int, alpha_tilde: float, rng: SeededRng) -> FactorPair:
    """Small random start: B0 entries ~ alpha N(0, 1/d), W0 a third of that."""
    if alpha_tilde <= 0:
        raise InvalidInputError(f"alpha_tilde must be positive, got {alpha_tilde}")
    std = 1.0 / math.sqrt(d)
    b0 = alpha_tilde * rng.normal(d, k, std)
    w0 = (alpha_tilde / 3.0) * rng.normal(k, t_count, std)
    return FactorPair(b=b0, w=w0)


def estimation_error(fp: FactorPair, gt: GroundTruth) -> float:
    """(1/T) ||B W - B* W*||_F^2, the average per-task parameter error."""
    diff = fp.b @ fp.w - gt.signal
    return float(np.sum(diff * diff)) / gt.t_count


def dist_to_target(fp: FactorPair, gt: GroundTruth) -> float:
    """Gauge-invariant distance of stacked (B; W^T) to the stacked targets (F; G)."""
    z = np.vstack([fp.b, fp.w.T])
    j = np.vstack([gt.f_target, gt.g_target])
    return procrustes_distance(z, j)


def _metrics(b, w, sse, n, gt):
    with np.errstate(all="ignore"):
        l1 = sse / (2.0 * n)
        gap = balance_gap(FactorPair(b, w)) if np.all(np.isfinite(b)) and np.all(
            np.isfinite(w)
        ) else np.full((b.shape[1],) * 2, np.nan)
        gap_norm = float(np.sqrt(np.sum(gap * gap)))
        l2 = l1 + 0.125 * gap_norm**2
        diff = b @ w - gt.signal
        err = float(np.sum(diff * diff)) / gt.t_count
        if np.all(np.isfinite(b)) and np.all(np.isfinite(w)):
            try:
                dist = procrustes_distance(
                    np.vstack([b, w.T]), np.vstack([gt.f_target, gt.g_target])
                )
            except np.linalg.LinAlgError:
                dist = float("nan")
        else:
            dist = float("nan")
    return l1, l2, gap_norm, err, dist


class _Descent:
    """Shared gradient-descent loop with metric tracing and tail snapshots."""

    def __init__(
        self,
        data: MultiTaskDataset,
        gt: GroundTruth,
        init: FactorPair,
        total_steps: int,
        snapshot_fraction: float,
        raise_on_divergence: bool,
    ):
        self.data = data
        self.gt = gt
        self.b = init.b.copy()
        self.w = init.w.copy()
        self.n = float(data.n_per_task)
        self.total_steps = total_steps
        self.raise_on_divergence = raise_on_divergence
        self.trajectory: list[TrajectoryPoint] = []
        self.snapshots: list[tuple[int, FactorPair]] = []
        total_points = total_steps + 1
        if not (0 < snapshot_fraction <= 1):
            raise InvalidInputError(f"snapshot_fraction must be in (0,1], got {snapshot_fraction}")
        self.snapshot_from = total_points - math.ceil(snapshot_fraction * total_points)
        self.diverged = False
        self.diverged_at: int | None = None
        self.iteration = 0

    def _record(self, sse: float, wall_ms: float) -> None:
        l1, l2, gap, err, dist = _metrics(self.b, self.w, sse, self.n, self.gt)
        self.trajectory.append(
            TrajectoryPoint(
                iteration=self.iteration,
                loss_phase1=l1,
                loss_phase2=l2,
                balance_gap=gap,
                estimation_error=err,
                dist_to_target=dist,
                wall_ms=wall_ms,
            )
        )
        if self.iteration >= self.snapshot_from:
            self.snapshots.append((self.iteration, FactorPair(self.b.copy(), self.w.copy())))

    def run_phase(self, steps: int, eta: float, grad_fn, perturb=None) -> bool:
        """Take ``steps`` updates; returns False if the run diverged."""
        for _ in range(steps):
            t0 = time.perf_counter()
            gb, gw, sse = grad_fn(self.b, self.w)
            wall_ms = (time.perf_counter() - t0) * 1e3
            self._record(sse, wall_ms)
            if perturb is not None:
                gb, gw = perturb(self.iteration, gb, gw)
            self.b = self.b - eta * gb
            self.w = self.w - eta * gw
            self.iteration += 1
            if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.w))):
                if self.raise_on_divergence:
                    raise DivergenceError(
                        self.iteration,
                        f"non-finite factor entries at iteration {self.iteration}",
                    )
                self.diverged = True
                self.diverged_at = self.iteration
                self._record(float("nan"), 0.0)
                return False
        return True

    def finish(self) -> SolveResult:
        if not self.diverged:
            sse = kernels.phase1_sse(self.data.x, self.data.y, self.b, self.w)
            self._record(sse, 0.0)
        return SolveResult(
            final=FactorPair(self.b.copy(), self.w.copy()),
            trajectory=self.trajectory,
            snapshots=self.snapshots,
            diverged=self.diverged,
            diverged_at=self.diverged_at,
        )


def _phase1_grad_fn(data: MultiTaskDataset):
    n = float(data.n_per_task)

    def fn(b, w):
        gb, gw, sse = kernels.phase1_grad(data.x, data.y, b, w)
        return gb / n, gw / n, sse

    return fn


def _phase2_grad_fn(data: MultiTaskDataset, reg_scale: float = 0.5):
    # reg_scale 0.5 gives the exact gradient of the 1/8 penalty; 2.0 the 1/2 one.
    n = float(data.n_per_task)

    def fn(b, w):
        gb, gw, sse = kernels.phase1_grad(data.x, data.y, b, w)
        gap = b.T @ b - w @ w.T
        return gb / n + reg_scale * b @ gap, gw / n - reg_scale * gap @ w, sse

    return fn


def tpgd(
    data: MultiTaskDataset,
    gt: GroundTruth,
    hp: HyperParams,
    rng: SeededRng,
    *,
    init: FactorPair | None = None,
    snapshot_fraction: float = 0.25,
    raise_on_divergence: bool = True,
) -> SolveResult:
    """Two-phase descent: K1/2 data-term steps, then K1/2 regularized steps.

    ``gt`` is used for evaluation metrics only, never for updates.
    """
    if init is None:
        init = init_factors(data.d, gt.k, data.t_count, hp.alpha_tilde, rng)
    run = _Descent(data, gt, init, hp.k1, snapshot_fraction, raise_on_divergence)
    half = hp.k1 // 2
    if run.run_phase(half, hp.eta1, _phase1_grad_fn(data)):
        run.run_phase(hp.k1 - half, hp.eta2, _phase2_grad_fn(data))
    return run.finish()


def _plain_gd(
    data,
    gt,
    grad_fn,
    eta,
    iters,
    init,
    rng,
    alpha_tilde,
    snapshot_fraction,
    raise_on_divergence,
    perturb=None,
) -> SolveResult:
    if init is None:
        if rng is None or alpha_tilde is None:
            raise InvalidInputError("provide either init or (rng, alpha_tilde)")
        init = init_factors(data.d, gt.k, data.t_count, alpha_tilde, rng)
    run = _Descent(data, gt, init, iters, snapshot_fraction, raise_on_divergence)
    run.run_phase(iters, eta, grad_fn, perturb=perturb)
    return run.finish()


def gd_loss1(
    data: MultiTaskDataset,
    gt: GroundTruth,
    eta: float,
    iters: int,
    init: FactorPair | None = None,
    rng: SeededRng | None = None,
    *,
    alpha_tilde: float | None = None,
    snapshot_fraction: float = 0.25,
    raise_on_divergence: bool = True,
) -> SolveResult:
    """Constant-step gradient descent on the unregularized data term."""
    return _plain_gd(
        data, gt, _phase1_grad_fn(data), eta, iters, init, rng, alpha_tilde,
        snapshot_fraction, raise_on_divergence,
    )


def gd_loss2(
    data: MultiTaskDataset,
    gt: GroundTruth,
    eta: float,
    iters: int,
    init: FactorPair | None = None,
    rng: SeededRng | None = None,
    *,
    alpha_tilde: float | None = None,
    snapshot_fraction: float = 0.25,
    raise_on_divergence: bool = True,
) -> SolveResult:
    """Constant-step gradient descent on the 1/2-penalized comparison objective."""
    return _plain_gd(
        data, gt, _phase2_grad_fn(data, reg_scale=2.0), eta, iters, init, rng, alpha_tilde,
        snapshot_fraction, raise_on_divergence,
    )


def phase2_only(
    data: MultiTaskDataset,
    gt: GroundTruth,
    eta: float,
    iters: int,
    init: FactorPair | None = None,
    rng: SeededRng | None = None,
    *,
    alpha_tilde: float | None = None,
    snapshot_fraction: float = 0.25,
    raise_on_divergence: bool = True,
) -> SolveResult:
    """Regularized (1/8-penalty) descent from a raw random start: the ablation arm."""
    return _plain_gd(
        data, gt, _phase2_grad_fn(data), eta, iters, init, rng, alpha_tilde,
        snapshot_fraction, raise_on_divergence,
    )


@dataclass(frozen=True)
class NoiseSchedule:
    """Multiplicative decay of the injected-gradient noise level."""

    initial_std: float
    decay: float = 0.995

    def __post_init__(self):
        if self.initial_std < 0:
            raise InvalidInputError(f"initial_std must be >= 0, got {self.initial_std}")
        if not (0 < self.decay <= 1):
            raise InvalidInputError(f"decay must be in (0, 1], got {self.decay}")

    @classmethod
    def default_for(cls, eta: float) -> "NoiseSchedule":
        return cls(initial_std=0.1 * eta, decay=0.995)


def nsgd(
    data: MultiTaskDataset,
    gt: GroundTruth,
    eta: float,
    iters: int,
    noise_schedule: NoiseSchedule | None = None,
    init: FactorPair | None = None,
    rng: SeededRng | None = None,
    *,
    noise_rng: SeededRng | None = None,
    alpha_tilde: float | None = None,
    snapshot_fraction: float = 0.25,
    raise_on_divergence: bool = True,
) -> SolveResult:
    """Noise-scheduled descent on the 1/2-penalized objective.

    At iteration i the exact gradient is perturbed by i.i.d. Gaussian noise
    with standard deviation initial_std * decay^i.  The cited method's exact
    schedule is not published alongside it; this multiplicative reconstruction
    is the documented default.
    """
    if noise_schedule is None:
        noise_schedule = NoiseSchedule.default_for(eta)
    if noise_rng is None:
        if rng is None:
            raise InvalidInputError("nsgd needs a noise rng")
        noise_rng = rng.substream(rng.stream + 1000)
    gen = noise_rng.generator

    def perturb(iteration, gb, gw):
        std = noise_schedule.initial_std * noise_schedule.decay**iteration
        if std == 0.0:
            return gb, gw
        return gb + gen.normal(0.0, std, gb.shape), gw + gen.normal(0.0, std, gw.shape)

    return _plain_gd(
        data, gt, _phase2_grad_fn(data, reg_scale=2.0), eta, iters, init, rng, alpha_tilde,
        snapshot_fraction, raise_on_divergence, perturb=perturb,
    )


def tail_average(result: SolveResult, fraction: float) -> FactorPair:
    """Entrywise mean of the factors over the trailing ``fraction`` of iterates."""
    if not (0 < fraction <= 1):
        raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
    length = len(result.trajectory)
    window = math.ceil(fraction * length)
    wanted = {p.iteration for p in result.trajectory[length - window :]}
    held = {it for it, _ in result.snapshots}
    if not wanted <= held:
        raise InvalidInputError(
            f"snapshots cover iterations {sorted(held)[:1]}..{sorted(held)[-1:]} "
            f"but the tail window needs {window} iterates; "
            "rerun the solver with a larger snapshot_fraction"
        )
    picked = [fp for it, fp in result.snapshots if it in wanted]
    b = np.mean([fp.b for fp in picked], axis=0)
    w = np.mean([fp.w for fp in picked], axis=0)
    return FactorPair(b=b, w=w)
