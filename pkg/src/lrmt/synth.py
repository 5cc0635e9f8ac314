"""Synthetic ground truths, multi-task datasets, and isometry diagnostics.

The planted model is a balanced rank-k factorization: U* and V* are random
orthonormal frames, ``B* = U* sqrt(S)`` and ``W* = sqrt(S) V*^T`` for a
prescribed descending spectrum S.  Built this way the estimation targets
``F = U* sqrt(S)`` and ``G = V* sqrt(S)`` coincide with (B*, W*^T) exactly,
so subspace-distance metrics have a zero to converge to.

Covariates are sampled with i.i.d. N(0,1) entries and the 1/N normalization
lives in the loss and in the isometry check (which divides ||X^T v||^2 by N),
making E[||X^T v||^2 / N] = ||v||^2 exact.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, gaussian_matrix, qr_orthonormal, svd
from .rng import SeededRng


@dataclass(frozen=True)
class GroundTruth:
    """Planted model: factors, their balanced SVD targets, and the noise level."""

    d: int
    k: int
    t_count: int
    b_star: np.ndarray  # d x k
    w_star: np.ndarray  # k x T
    u_star: np.ndarray  # d x k, first k left singular vectors of B* W*
    v_star: np.ndarray  # T x k
    sigma_star: np.ndarray  # top-k singular values, descending
    f_target: np.ndarray  # d x k, U* sqrt(S)
    g_target: np.ndarray  # T x k, V* sqrt(S)
    noise_sigma: float

    @property
    def kappa(self) -> float:
        return float(self.sigma_star[0] / self.sigma_star[-1])

    @property
    def sigma1(self) -> float:
        return float(self.sigma_star[0])

    @property
    def sigmak(self) -> float:
        return float(self.sigma_star[-1])

    @property
    def signal(self) -> np.ndarray:
        """The d x T product B* W* (one regression vector per column)."""
        return self.b_star @ self.w_star


@dataclass(frozen=True)
class MultiTaskDataset:
    """T tasks with shared per-task sample count N.

    ``x`` stacks the covariate matrices as (T, d, N); ``y`` is (T, N).
    """

    x: np.ndarray
    y: np.ndarray
    n_per_task: int
    noise_sigma: float

    @property
    def t_count(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])


def linear_spectrum(k: int, kappa: float, sigma_k: float = 1.0) -> np.ndarray:
    """Default experiment spectrum: linearly spaced from kappa*sigma_k down to sigma_k."""
    if kappa < 1 or sigma_k <= 0:
        raise InvalidInputError(f"need kappa >= 1 and sigma_k > 0, got {kappa}, {sigma_k}")
    return np.linspace(kappa * sigma_k, sigma_k, k)


def ground_truth_from_factors(b_star, w_star, noise_sigma: float) -> GroundTruth:
    """Derive the SVD targets for given factors (used by mixing and pooling)."""
    b_star = as_matrix(b_star, "b_star")
    w_star = as_matrix(w_star, "w_star")
    if noise_sigma < 0:
        raise InvalidInputError(f"noise_sigma must be >= 0, got {noise_sigma}")
    d, k = b_star.shape
    t_count = w_star.shape[1]
    u, s, v = svd(b_star @ w_star)
    sig = s[:k].copy()
    if sig[-1] <= 0:
        raise InvalidInputError("planted product is rank-deficient")
    root = np.sqrt(sig)
    return GroundTruth(
        d=d,
        k=k,
        t_count=t_count,
        b_star=b_star,
        w_star=w_star,
        u_star=u[:, :k].copy(),
        v_star=v[:, :k].copy(),
        sigma_star=sig,
        f_target=u[:, :k] * root,
        g_target=v[:, :k] * root,
        noise_sigma=float(noise_sigma),
    )


def make_ground_truth(
    d: int,
    k: int,
    t_count: int,
    sigma_star,
    noise_sigma: float,
    rng: SeededRng,
    mix_factors: bool = False,
) -> GroundTruth:
    """Plant a balanced ground truth with the prescribed singular spectrum.

    Requires k <= t_count; t_count > d is allowed but warned about, since the
    error bounds extend to max{d, T} outside the high-dimensional regime.
    With ``mix_factors`` the returned (B*, W*) are gauged by a random
    invertible k x k matrix, leaving B* W* and the targets F, G unchanged -
    useful for checking that metrics respect the factorization's gauge freedom.
    """
    sigma_star = np.asarray(sigma_star, dtype=np.float64)
    if sigma_star.shape != (k,):
        raise InvalidInputError(f"sigma_star must have length k={k}")
    if np.any(sigma_star <= 0) or np.any(np.diff(sigma_star) > 0):
        raise InvalidInputError("sigma_star must be positive and non-increasing")
    if not (k <= t_count):
        raise InvalidInputError(f"need k <= t_count, got k={k}, T={t_count}")
    if t_count > d:
        warnings.warn(
            f"t_count={t_count} exceeds d={d}; outside the high-dimensional regime",
            stacklevel=2,
        )
    if noise_sigma < 0:
        raise InvalidInputError(f"noise_sigma must be >= 0, got {noise_sigma}")

    u_star = qr_orthonormal(gaussian_matrix(d, k, 1.0, rng))
    v_star = qr_orthonormal(gaussian_matrix(t_count, k, 1.0, rng))
    root = np.sqrt(sigma_star)
    b_star = u_star * root
    w_star = root[:, None] * v_star.T
    if mix_factors:
        p = _well_conditioned_mixing(k, rng)
        b_star = b_star @ p
        w_star = np.linalg.solve(p, w_star)
        return ground_truth_from_factors(b_star, w_star, noise_sigma)
    return GroundTruth(
        d=d,
        k=k,
        t_count=t_count,
        b_star=b_star,
        w_star=w_star,
        u_star=u_star,
        v_star=v_star,
        sigma_star=sigma_star.copy(),
        f_target=b_star.copy(),
        g_target=w_star.T.copy(),
        noise_sigma=float(noise_sigma),
    )


def _well_conditioned_mixing(k: int, rng: SeededRng, max_cond: float = 100.0) -> np.ndarray:
    for _ in range(64):
        p = rng.normal(k, k)
        if np.linalg.cond(p) <= max_cond:
            return p
    raise InvalidInputError("failed to draw a well-conditioned mixing matrix")


def sample_tasks(gt: GroundTruth, n_per_task: int, rng: SeededRng) -> MultiTaskDataset:
    """Draw the per-task design matrices and noisy responses."""
    if n_per_task < 1:
        raise InvalidInputError(f"n_per_task must be >= 1, got {n_per_task}")
    t_count, d = gt.t_count, gt.d
    x = rng.generator.normal(size=(t_count, d, n_per_task))
    signal = gt.signal  # d x T
    y = np.einsum("tdn,dt->tn", x, signal, optimize=True)
    if gt.noise_sigma > 0:
        y = y + rng.generator.normal(0.0, gt.noise_sigma, size=y.shape)
    return MultiTaskDataset(x=x, y=y, n_per_task=int(n_per_task), noise_sigma=gt.noise_sigma)


def estimate_rip_delta(dataset: MultiTaskDataset, probes: int, rng: SeededRng) -> float:
    """Empirical lower bound on the restricted-isometry constant.

    Probes random unit vectors v and returns the worst two-sided deviation
    max_{t, v} | ||X_t^T v||^2 / N - 1 |.  Monotone non-decreasing in the
    probe count for a fixed probe prefix sequence.
    """
    if probes < 1:
        raise InvalidInputError(f"probes must be >= 1, got {probes}")
    n = dataset.n_per_task
    d = dataset.d
    worst = 0.0
    for _ in range(probes):
        v = rng.unit_vector(d)
        proj = np.einsum("tdn,d->tn", dataset.x, v, optimize=True)
        dev = np.abs(np.sum(proj * proj, axis=1) / n - 1.0)
        worst = max(worst, float(dev.max()))
    return worst


def _psd_sqrt(h_cov: np.ndarray) -> np.ndarray:
    h_cov = as_matrix(h_cov, "h_cov")
    if h_cov.shape[0] != h_cov.shape[1]:
        raise InvalidInputError(f"h_cov must be square, got {h_cov.shape}")
    if not np.allclose(h_cov, h_cov.T, atol=1e-10):
        raise InvalidInputError("h_cov must be symmetric")
    evals, evecs = np.linalg.eigh(h_cov)
    tol = 1e-10 * max(float(evals[-1]), 1.0)
    if evals[0] < -tol:
        raise InvalidInputError(f"h_cov is not PSD (min eigenvalue {evals[0]:.3e})")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def sample_target_stream(
    gt: GroundTruth,
    w_target,
    h_cov,
    count: int,
    rng: SeededRng,
) -> Iterator[tuple[np.ndarray, float]]:
    """Online sampler for a held-out task: x ~ N(0, H), y = <x, B* w_target> + noise.

    Gaussian covariates keep the fourth-moment condition used by the transfer
    analysis with constant 3.
    """
    w_target = np.asarray(w_target, dtype=np.float64)
    if w_target.shape != (gt.k,):
        raise InvalidInputError(f"w_target must have length k={gt.k}")
    half = _psd_sqrt(h_cov)
    if half.shape[0] != gt.d:
        raise InvalidInputError(f"h_cov must be {gt.d}x{gt.d}, got {half.shape}")
    v_target = gt.b_star @ w_target
    gen = rng.generator
    for _ in range(count):
        x = half @ gen.normal(size=gt.d)
        y = float(x @ v_target)
        if gt.noise_sigma > 0:
            y += float(gen.normal(0.0, gt.noise_sigma))
        yield x, y


_MAGIC = b"LRMT"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIId")


def save_dataset(path, dataset: MultiTaskDataset, k: int) -> None:
    """Write the flat binary container (header + per-task X then y, float64 LE)."""
    t_count, d, n = dataset.x.shape
    header = _HEADER.pack(_MAGIC, _VERSION, d, k, t_count, n, dataset.noise_sigma)
    with open(path, "wb") as fh:
        fh.write(header)
        for t in range(t_count):
            fh.write(np.ascontiguousarray(dataset.x[t], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(dataset.y[t], dtype="<f8").tobytes())


def load_dataset(path) -> tuple[MultiTaskDataset, int]:
    """Read a container written by :func:`save_dataset`; returns (dataset, k)."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise InvalidInputError(f"{path}: truncated header")
        magic, version, d, k, t_count, n, noise_sigma = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise InvalidInputError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise InvalidInputError(f"{path}: unsupported version {version}")
        x = np.empty((t_count, d, n))
        y = np.empty((t_count, n))
        for t in range(t_count):
            x[t] = np.frombuffer(fh.read(8 * d * n), dtype="<f8").reshape(d, n)
            y[t] = np.frombuffer(fh.read(8 * n), dtype="<f8")
    return MultiTaskDataset(x=x, y=y, n_per_task=n, noise_sigma=noise_sigma), k
