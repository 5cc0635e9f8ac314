"""Shared test oracles: brute-force references kept independent of the library."""

import numpy as np

from lrmt.objectives import FactorPair
from lrmt.synth import MultiTaskDataset


def naive_phase1_loss(b, w, data: MultiTaskDataset) -> float:
    """Per-task python-loop evaluation of the data term."""
    total = 0.0
    for t in range(data.t_count):
        pred = data.x[t].T @ (b @ w[:, t])
        r = data.y[t] - pred
        total += float(r @ r)
    return total / (2.0 * data.n_per_task)


def central_diff_grad(loss_fn, b, w, step=1e-6):
    """Entrywise central finite differences of loss_fn(FactorPair(b, w))."""
    gb = np.zeros_like(b)
    for idx in np.ndindex(b.shape):
        bp, bm = b.copy(), b.copy()
        bp[idx] += step
        bm[idx] -= step
        gb[idx] = (loss_fn(FactorPair(bp, w)) - loss_fn(FactorPair(bm, w))) / (2 * step)
    gw = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += step
        wm[idx] -= step
        gw[idx] = (loss_fn(FactorPair(b, wp)) - loss_fn(FactorPair(b, wm))) / (2 * step)
    return gb, gw


def rel_err(got, want) -> float:
    scale = max(float(np.linalg.norm(want)), 1e-12)
    return float(np.linalg.norm(np.asarray(got) - np.asarray(want))) / scale


def random_instance(rng, d, k, t_count, n, noise=0.0):
    """A small random dataset + factors, independent of the synth module."""
    x = rng.normal(size=(t_count, d, n))
    b_true = rng.normal(size=(d, k))
    w_true = rng.normal(size=(k, t_count))
    y = np.einsum("tdn,dt->tn", x, b_true @ w_true)
    if noise > 0:
        y = y + rng.normal(0.0, noise, size=y.shape)
    data = MultiTaskDataset(x=x, y=y, n_per_task=n, noise_sigma=noise)
    return data, b_true, w_true


def grid_procrustes_2x2(u, v, points=10_000) -> float:
    """Brute-force min over a dense grid of 2x2 rotations and reflections."""
    best = np.inf
    half = points // 2
    for theta in np.linspace(0.0, 2 * np.pi, half, endpoint=False):
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        refl = np.array([[c, s], [s, -c]])
        best = min(best,
                   float(np.linalg.norm(u - v @ rot)),
                   float(np.linalg.norm(u - v @ refl)))
    return best
