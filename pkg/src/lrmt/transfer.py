"""Online SGD on a frozen representation with warm-up plus geometric step decay.

The target-task weight is learned one fresh sample at a time: the step size
stays at eta0 through a warm-up window, then halves every K2' iterations,
where K2' = floor((K2 - h) / log(K2 - h)).  The exact population excess risk
under the Gaussian model is available in closed form, so risk traces carry no
Monte-Carlo error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .linalg import as_matrix
from .synth import GroundTruth, _psd_sqrt


@dataclass(frozen=True)
class DecaySchedule:
    """Constant-then-halving step sizes over a K2-iteration budget."""

    eta0: float
    h: int
    k2: int
    k2_prime: int

    def __post_init__(self):
        if self.eta0 <= 0:
            raise InvalidInputError(f"eta0 must be positive, got {self.eta0}")
        if not (self.k2 > self.h >= 0):
            raise InvalidInputError(f"need k2 > h >= 0, got k2={self.k2}, h={self.h}")
        if self.k2_prime < 1:
            raise InvalidInputError(f"k2_prime must be >= 1, got {self.k2_prime}")


def make_decay_schedule(
    eta0: float, k2: int, h: int | None = None, log_base: float = math.e
) -> DecaySchedule:
    """Build the schedule; h defaults to a 10% warm-up of the budget.

    The logarithm in the decay-block length is natural by default (the
    convention of the asymptotic analysis) and configurable via ``log_base``.
    """
    if h is None:
        h = math.ceil(0.1 * k2)
    if k2 - h < 2:
        raise InvalidInputError(f"need k2 - h >= 2, got k2={k2}, h={h}")
    k2_prime = math.floor((k2 - h) / (math.log(k2 - h) / math.log(log_base)))
    return DecaySchedule(eta0=eta0, h=h, k2=k2, k2_prime=k2_prime)


def step_size(tau: int, sched: DecaySchedule) -> float:
    """Step size at iteration tau: eta0 while tau <= K2' + h, else eta0 / 2^l
    with l = floor((tau - h) / K2')."""
    if not (0 <= tau < sched.k2):
        raise InvalidInputError(f"tau must be in [0, {sched.k2}), got {tau}")
    if tau <= sched.k2_prime + sched.h:
        return sched.eta0
    level = (tau - sched.h) // sched.k2_prime
    return sched.eta0 / float(2**level)


def default_eta0(b_hat, h_cov, alpha: float = 3.0) -> float:
    """eta0 = 1 / (2 alpha tr(B^T H B)), the stability bound for the known covariance."""
    b_hat = as_matrix(b_hat, "b_hat")
    h_cov = as_matrix(h_cov, "h_cov")
    trace = float(np.trace(b_hat.T @ h_cov @ b_hat))
    if trace <= 0:
        raise InvalidInputError("tr(B^T H B) must be positive")
    return 1.0 / (2.0 * alpha * trace)


def plugin_eta0(b_hat, covariates, alpha: float = 3.0) -> float:
    """Plug-in variant of :func:`default_eta0` when H is unknown: the trace is
    estimated from held-out covariates (rows of ``covariates``)."""
    b_hat = as_matrix(b_hat, "b_hat")
    xs = as_matrix(covariates, "covariates")
    proj = xs @ b_hat
    trace = float(np.mean(np.sum(proj * proj, axis=1)))
    if trace <= 0:
        raise InvalidInputError("estimated tr(B^T H B) must be positive")
    return 1.0 / (2.0 * alpha * trace)


@dataclass
class TransferResult:
    w_final: np.ndarray
    excess_risk_trace: list[tuple[int, float]]
    samples_consumed: int


def sgd_transfer(
    b_hat,
    stream: Iterable[tuple[np.ndarray, float]],
    sched: DecaySchedule,
    w0,
    checkpoints: Iterable[int] = (),
    risk_fn: Callable[[np.ndarray], float] | None = None,
) -> TransferResult:
    """Run K2 - 1 online updates w <- w - eta_tau (<x, B w> - y) B^T x.

    Each stream element is consumed exactly once.  ``risk_fn``, when given,
    is evaluated on the current iterate at every checkpoint iteration (the
    final iterate is always traced).
    """
    b_hat = as_matrix(b_hat, "b_hat")
    w = np.array(w0, dtype=np.float64).copy()
    if w.shape != (b_hat.shape[1],):
        raise InvalidInputError(f"w0 must have length {b_hat.shape[1]}")
    marks = set(int(c) for c in checkpoints)
    trace: list[tuple[int, float]] = []
    it: Iterator[tuple[np.ndarray, float]] = iter(stream)
    consumed = 0
    for tau in range(sched.k2 - 1):
        try:
            x, y = next(it)
        except StopIteration:
            raise InsufficientDataError(
                f"stream exhausted after {consumed} samples; need {sched.k2 - 1}"
            ) from None
        consumed += 1
        eta = step_size(tau, sched)
        bx = b_hat.T @ x
        w = w - eta * (float(bx @ w) - y) * bx
        if risk_fn is not None and (tau + 1) in marks:
            trace.append((tau + 1, risk_fn(w)))
    if risk_fn is not None and (not trace or trace[-1][0] != sched.k2 - 1):
        trace.append((sched.k2 - 1, risk_fn(w)))
    return TransferResult(w_final=w, excess_risk_trace=trace, samples_consumed=consumed)


def excess_risk(b_hat, w, gt: GroundTruth, w_target, h_cov) -> float:
    """Exact population risk gap (1/2) (B w - B* w*)^T H (B w - B* w*).

    The additive-noise halves of the two risks cancel, so this is the full
    excess risk of the predictor (B_hat, w) on the target task.
    """
    b_hat = as_matrix(b_hat, "b_hat")
    w = np.asarray(w, dtype=np.float64)
    w_target = np.asarray(w_target, dtype=np.float64)
    half = _psd_sqrt(h_cov)
    delta = b_hat @ w - gt.b_star @ w_target
    hd = half.T @ delta
    return 0.5 * float(hd @ hd)
