"""Hot numeric kernels: per-task residual, loss, and gradient accumulation.

The multi-task data term touches every covariate (T x d x N) once per solver
iteration, which dominates runtime for every solver in the package.  The
kernels here come in two interchangeable flavours:

* a numba ``@njit`` task loop (default when numba imports cleanly), and
* a pure-numpy einsum path.

Set ``LRMT_NO_NUMBA=1`` in the environment to force the numpy path.  Both
implement the same accumulation in the same task order (t = 0..T-1), so a
given backend is bit-reproducible run to run; see ``benchmarks/kernel_bench.py``
for a side-by-side timing and agreement check.

Conventions: ``x`` is (T, d, N) with covariates as columns of each X_t,
``y`` is (T, N), ``b`` is (d, k), ``w`` is (k, T).  Kernels return raw sums;
the 1/N and 1/2N loss scalings live in :mod:`lrmt.objectives`.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("LRMT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


def _sse_loops(x, y, b, wt):
    t_count = x.shape[0]
    sse = 0.0
    for t in range(t_count):
        bw = np.dot(b, wt[t])
        r = np.dot(bw, x[t]) - y[t]
        sse += np.dot(r, r)
    return sse


def _grad_loops(x, y, b, wt):
    t_count, d, _ = x.shape
    k = b.shape[1]
    gb = np.zeros((d, k))
    gwt = np.zeros((t_count, k))
    sse = 0.0
    for t in range(t_count):
        bw = np.dot(b, wt[t])
        r = np.dot(bw, x[t]) - y[t]
        sse += np.dot(r, r)
        xr = np.dot(x[t], r)
        for i in range(d):
            for j in range(k):
                gb[i, j] += xr[i] * wt[t, j]
        gwt[t] = np.dot(xr, b)
    return gb, gwt, sse


def _sse_numpy(x, y, b, wt):
    p = b @ wt.T
    r = np.einsum("tdn,dt->tn", x, p, optimize=True) - y
    return float(np.dot(r.ravel(), r.ravel()))


def _grad_numpy(x, y, b, wt):
    p = b @ wt.T
    r = np.einsum("tdn,dt->tn", x, p, optimize=True) - y
    sse = float(np.dot(r.ravel(), r.ravel()))
    xr = np.einsum("tdn,tn->td", x, r, optimize=True)
    gb = xr.T @ wt
    gwt = xr @ b
    return gb, gwt, sse


_sse_numba = None
_grad_numba = None
if not _FORCE_NUMPY:
    try:
        from numba import njit

        _sse_numba = njit(cache=True)(_sse_loops)
        _grad_numba = njit(cache=True)(_grad_loops)
    except ImportError:
        pass


def active_backend() -> str:
    """Name of the kernel backend in use: ``"numba"`` or ``"numpy"``."""
    return "numba" if _grad_numba is not None else "numpy"


def _prep(x, y, b, w):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    wt = np.ascontiguousarray(np.asarray(w, dtype=np.float64).T)
    return x, y, b, wt


def phase1_sse(x, y, b, w) -> float:
    """Sum over tasks of ||X_t^T B w_t - y_t||^2."""
    x, y, b, wt = _prep(x, y, b, w)
    if _sse_numba is not None:
        return float(_sse_numba(x, y, b, wt))
    return _sse_numpy(x, y, b, wt)


def phase1_grad(x, y, b, w) -> tuple[np.ndarray, np.ndarray, float]:
    """Unnormalized data-term gradient sums and the residual SSE.

    Returns ``(gb, gw, sse)`` with ``gb = sum_t X_t r_t w_t^T`` (d x k),
    ``gw`` columns ``B^T X_t r_t`` (k x T), and ``r_t = X_t^T B w_t - y_t``.
    """
    x, y, b, wt = _prep(x, y, b, w)
    if _grad_numba is not None:
        gb, gwt, sse = _grad_numba(x, y, b, wt)
    else:
        gb, gwt, sse = _grad_numpy(x, y, b, wt)
    return gb, gwt.T, float(sse)
