"""Easy-to-difficult curriculum over task groups with increasing noise.

Level 1 is learned with the full two-phase solver.  Every later level reuses
the learned representation: its task matrix is warm-started by per-task least
squares on a sample prefix, then refined jointly with B by regularized
descent on the remaining samples.  The pooled comparison trains once on the
concatenation of all levels' tasks (the same sampled data), so curriculum
vs pooled comparisons are paired per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTaskError, InvalidInputError
from .linalg import as_matrix, operator_norm, qr_orthonormal, gaussian_matrix
from .objectives import FactorPair
from .rng import SeededRng
from .solvers import (
    HyperParams,
    SolveResult,
    _Descent,
    _phase2_grad_fn,
    estimation_error,
    tpgd,
)
from .synth import GroundTruth, MultiTaskDataset, ground_truth_from_factors, sample_tasks


@dataclass(frozen=True)
class CurriculumLevel:
    """One task group: its dataset, planted truth, and refinement settings.

    ``n_warm`` samples per task feed the least-squares warm start; the
    remaining ``n_per_task - n_warm`` drive the refinement phase.
    """

    level_index: int
    t_count: int
    noise_sigma: float
    gt: GroundTruth
    dataset: MultiTaskDataset
    n_warm: int
    phase2_iters: int
    eta2: float | None = None  # None: 0.1 / sigma_1 estimated from the warm start

    def __post_init__(self):
        if not (0 < self.n_warm <= self.dataset.n_per_task):
            raise InvalidInputError(
                f"level {self.level_index}: n_warm={self.n_warm} outside "
                f"(0, {self.dataset.n_per_task}]"
            )


@dataclass
class CurriculumResult:
    b_hat: np.ndarray
    level_results: list[SolveResult]
    level_errors: list[float]
    aggregate_error: float


def default_n_warm(n_per_task: int, k: int) -> int:
    """Enough samples for a well-conditioned k x k normal system, no more."""
    return int(min(n_per_task // 2, max(4 * k, 50)))


def make_curriculum(
    d: int,
    k: int,
    t_counts,
    sigma_star,
    noise_sigmas,
    n_per_task: int,
    rng: SeededRng,
    n_warm: int | None = None,
    phase2_iters: int | None = None,
    hp: HyperParams | None = None,
) -> list[CurriculumLevel]:
    """Plant one shared representation and per-level task matrices.

    All levels share B*; each level gets its own orthonormal task frame so
    every level's planted product carries the same spectrum.  Noise levels
    must be non-decreasing.
    """
    t_counts = list(t_counts)
    noise_sigmas = [float(s) for s in noise_sigmas]
    if len(t_counts) != len(noise_sigmas) or not t_counts:
        raise InvalidInputError("t_counts and noise_sigmas must be equal-length, non-empty")
    if any(b < a for a, b in zip(noise_sigmas, noise_sigmas[1:])):
        raise InvalidInputError(f"noise levels must be non-decreasing, got {noise_sigmas}")
    sigma_star = np.asarray(sigma_star, dtype=np.float64)
    root = np.sqrt(sigma_star)
    u_star = qr_orthonormal(gaussian_matrix(d, k, 1.0, rng))
    b_star = u_star * root
    if n_warm is None:
        n_warm = default_n_warm(n_per_task, k)
    if phase2_iters is None:
        phase2_iters = hp.k1 // 2 if hp is not None else 200
    levels = []
    for j, (t_j, sig_j) in enumerate(zip(t_counts, noise_sigmas), start=1):
        v_j = qr_orthonormal(gaussian_matrix(t_j, k, 1.0, rng))
        w_j = root[:, None] * v_j.T
        gt_j = ground_truth_from_factors(b_star, w_j, sig_j)
        data_j = sample_tasks(gt_j, n_per_task, rng)
        levels.append(
            CurriculumLevel(
                level_index=j,
                t_count=t_j,
                noise_sigma=sig_j,
                gt=gt_j,
                dataset=data_j,
                n_warm=n_warm,
                phase2_iters=phase2_iters,
            )
        )
    return levels


def ls_warm_start(b_hat, level: CurriculumLevel) -> np.ndarray:
    """Per-task least squares through the frozen representation.

    Solves the k x k normal equations on each task's first ``n_warm`` samples;
    a singular system names the offending task.
    """
    b_hat = as_matrix(b_hat, "b_hat")
    k = b_hat.shape[1]
    nw = level.n_warm
    if nw < k:
        raise InvalidInputError(f"n_warm={nw} < k={k}: normal system cannot be full rank")
    w0 = np.empty((k, level.t_count))
    for t in range(level.t_count):
        xt = level.dataset.x[t, :, :nw]
        yt = level.dataset.y[t, :nw]
        a = b_hat.T @ xt  # k x n_warm
        gram = a @ a.T
        rhs = a @ yt
        try:
            sol = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            raise DegenerateTaskError(t, f"singular normal matrix for task {t}") from None
        if not np.all(np.isfinite(sol)):
            raise DegenerateTaskError(t, f"singular normal matrix for task {t}")
        w0[:, t] = sol
    return w0


def _refinement_dataset(level: CurriculumLevel) -> MultiTaskDataset:
    nw = level.n_warm
    n_rest = level.dataset.n_per_task - nw
    if n_rest < 1:
        raise InvalidInputError(
            f"level {level.level_index}: no samples left for refinement (n_warm={nw})"
        )
    return MultiTaskDataset(
        x=level.dataset.x[:, :, nw:],
        y=level.dataset.y[:, nw:],
        n_per_task=n_rest,
        noise_sigma=level.noise_sigma,
    )


def refine_level(
    b_hat,
    w0,
    level: CurriculumLevel,
    *,
    freeze_b: bool = False,
    snapshot_fraction: float = 0.25,
) -> SolveResult:
    """Regularized descent from (b_hat, w0) on the level's refinement samples."""
    data = _refinement_dataset(level)
    init = FactorPair(np.array(b_hat, dtype=np.float64), np.array(w0, dtype=np.float64))
    eta2 = level.eta2
    if eta2 is None:
        sigma1_hat = operator_norm(init.b @ init.w)
        eta2 = 0.1 / max(sigma1_hat, 1e-12)
    run = _Descent(data, level.gt, init, level.phase2_iters, snapshot_fraction, True)
    grad_fn = _phase2_grad_fn(data)
    if freeze_b:
        inner = grad_fn

        def grad_fn(b, w):  # noqa: F811 - frozen-B variant of the same gradient
            gb, gw, sse = inner(b, w)
            return np.zeros_like(gb), gw, sse

    run.run_phase(level.phase2_iters, eta2, grad_fn)
    return run.finish()


def curriculum_run(
    levels: list[CurriculumLevel],
    hp: HyperParams,
    rng: SeededRng,
    *,
    freeze_b: bool = True,
) -> CurriculumResult:
    """Level 1 by full two-phase descent, later levels by warm start + refinement.

    Each later level emits only its task matrix, paired with the level-1
    representation, so by default B stays frozen during refinement: letting a
    noisier level rewrite the representation it is evaluated with measurably
    hurts both that level and the aggregate.  ``freeze_b=False`` restores the
    joint update for comparison.
    """
    _check_levels(levels)
    first = levels[0]
    res1 = tpgd(first.dataset, first.gt, hp, rng)
    b_hat = res1.final.b
    level_results = [res1]
    level_errors = [estimation_error(res1.final, first.gt)]
    for level in levels[1:]:
        w0 = ls_warm_start(b_hat, level)
        res_j = refine_level(b_hat, w0, level, freeze_b=freeze_b)
        level_results.append(res_j)
        level_errors.append(estimation_error(res_j.final, level.gt))
    return CurriculumResult(
        b_hat=b_hat,
        level_results=level_results,
        level_errors=level_errors,
        aggregate_error=_aggregate(levels, level_errors),
    )


def pooled_run(
    levels: list[CurriculumLevel],
    hp: HyperParams,
    rng: SeededRng,
) -> tuple[SolveResult, CurriculumResult]:
    """Train once on all levels' tasks jointly (same data as the curriculum)."""
    _check_levels(levels)
    n = levels[0].dataset.n_per_task
    if any(lv.dataset.n_per_task != n for lv in levels):
        raise InvalidInputError("pooled training requires equal per-task sample counts")
    x = np.concatenate([lv.dataset.x for lv in levels], axis=0)
    y = np.concatenate([lv.dataset.y for lv in levels], axis=0)
    w_star = np.concatenate([lv.gt.w_star for lv in levels], axis=1)
    gt_all = ground_truth_from_factors(levels[0].gt.b_star, w_star, max(lv.noise_sigma for lv in levels))
    data_all = MultiTaskDataset(x=x, y=y, n_per_task=n, noise_sigma=gt_all.noise_sigma)
    res = tpgd(data_all, gt_all, hp, rng)
    level_errors = []
    offset = 0
    for lv in levels:
        fp_j = FactorPair(res.final.b, res.final.w[:, offset : offset + lv.t_count])
        level_errors.append(estimation_error(fp_j, lv.gt))
        offset += lv.t_count
    summary = CurriculumResult(
        b_hat=res.final.b,
        level_results=[res],
        level_errors=level_errors,
        aggregate_error=_aggregate(levels, level_errors),
    )
    return res, summary


def _check_levels(levels: list[CurriculumLevel]) -> None:
    if not levels:
        raise InvalidInputError("need at least one curriculum level")
    sigmas = [lv.noise_sigma for lv in levels]
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise InvalidInputError(f"levels must be sorted by non-decreasing noise, got {sigmas}")


def _aggregate(levels: list[CurriculumLevel], level_errors: list[float]) -> float:
    total_t = sum(lv.t_count for lv in levels)
    return float(sum(err * lv.t_count for err, lv in zip(level_errors, levels)) / total_t)
