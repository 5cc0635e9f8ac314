"""Objective functions and their analytic gradients.

Three objectives share one data term, the per-task least squares

    L1(B, W) = (1/2N) sum_t ||y_t - X_t^T B w_t||^2,

and differ in how they penalize factor imbalance ||B^T B - W W^T||_F^2:
coefficient 0 (phase-1 loss), 1/8 (the regularized phase-2 loss), or 1/2
(the comparison objective).  Gradients are exact: the 1/8 penalty carries
the 1/2 factor in its gradient, so the regularized descent step is literal
gradient descent on the penalized loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .synth import MultiTaskDataset


@dataclass(frozen=True)
class FactorPair:
    """Optimization state shared by all solvers: B (d x k), W (k x T)."""

    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if self.b.ndim != 2 or self.w.ndim != 2 or self.b.shape[1] != self.w.shape[0]:
            raise InvalidInputError(
                f"inconsistent factor shapes {self.b.shape} and {self.w.shape}"
            )

    @property
    def k(self) -> int:
        return int(self.b.shape[1])

    def copy(self) -> "FactorPair":
        return FactorPair(self.b.copy(), self.w.copy())


@dataclass(frozen=True)
class GradPair:
    gb: np.ndarray
    gw: np.ndarray


def _check_shapes(fp: FactorPair, data: MultiTaskDataset) -> None:
    if fp.b.shape[0] != data.d or fp.w.shape[1] != data.t_count:
        raise InvalidInputError(
            f"factors ({fp.b.shape}, {fp.w.shape}) do not match "
            f"dataset (d={data.d}, T={data.t_count})"
        )


def loss_phase1(fp: FactorPair, data: MultiTaskDataset) -> float:
    _check_shapes(fp, data)
    return kernels.phase1_sse(data.x, data.y, fp.b, fp.w) / (2.0 * data.n_per_task)


def grad_phase1(fp: FactorPair, data: MultiTaskDataset) -> GradPair:
    _check_shapes(fp, data)
    gb, gw, _ = kernels.phase1_grad(data.x, data.y, fp.b, fp.w)
    n = float(data.n_per_task)
    return GradPair(gb=gb / n, gw=gw / n)


def balance_gap(fp: FactorPair) -> np.ndarray:
    """B^T B - W W^T (k x k)."""
    return fp.b.T @ fp.b - fp.w @ fp.w.T


def balance_regularizer(fp: FactorPair) -> float:
    """(1/8) ||B^T B - W W^T||_F^2."""
    gap = balance_gap(fp)
    return 0.125 * float(np.sum(gap * gap))


def grad_balance(fp: FactorPair) -> GradPair:
    gap = balance_gap(fp)
    return GradPair(gb=0.5 * fp.b @ gap, gw=-0.5 * gap @ fp.w)


def loss_phase2(fp: FactorPair, data: MultiTaskDataset) -> float:
    return loss_phase1(fp, data) + balance_regularizer(fp)


def grad_phase2(fp: FactorPair, data: MultiTaskDataset) -> GradPair:
    g1 = grad_phase1(fp, data)
    gr = grad_balance(fp)
    return GradPair(gb=g1.gb + gr.gb, gw=g1.gw + gr.gw)


def loss_tripuraneni(fp: FactorPair, data: MultiTaskDataset) -> float:
    """Data term plus (1/2) ||B^T B - W W^T||_F^2 (the comparison objective)."""
    return loss_phase1(fp, data) + 4.0 * balance_regularizer(fp)


def grad_tripuraneni(fp: FactorPair, data: MultiTaskDataset) -> GradPair:
    g1 = grad_phase1(fp, data)
    gap = balance_gap(fp)
    return GradPair(gb=g1.gb + 2.0 * fp.b @ gap, gw=g1.gw - 2.0 * gap @ fp.w)
