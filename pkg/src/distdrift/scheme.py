"""Coupled Brownian paths, the Euler-Maruyama scheme and strong-error statistics.

Every Brownian path is a pure function of ``(seed, path_index)``: a Philox
counter-based stream keyed by that pair supplies one uniform per fine step,
mapped to a Gaussian by the inverse normal CDF. Coarser levels are block sums
of the fine increments, so all resolutions share the same path.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .drift import LinearDrift


def _is_pow2(n: int) -> bool:
    return n >= 1 and not n & (n - 1)


def _uniforms(seed: int, path_index: int, count: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(count)
    # top 53 bits, centred in their cell: strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def gaussian_increments(seed: int, path_indices, T: float, n_fine: int) -> np.ndarray:
    """Fine Brownian increments, one row per path index."""
    if not _is_pow2(n_fine):
        raise ValueError(f"n_fine must be a power of two, got {n_fine}")
    scale = math.sqrt(T / n_fine)
    idx = list(path_indices)
    out = np.empty((len(idx), n_fine))
    for r, i in enumerate(idx):
        out[r] = ndtri(_uniforms(seed, int(i), n_fine)) * scale
    return out


def coarsen(increments: np.ndarray, n: int) -> np.ndarray:
    """Block sums of consecutive fine increments, added left to right."""
    n_fine = increments.shape[-1]
    if n < 1 or n_fine % n:
        raise ValueError(f"n={n} does not divide n_fine={n_fine}")
    r = n_fine // n
    blocks = increments.reshape(increments.shape[:-1] + (n, r))
    acc = blocks[..., 0].copy()
    for i in range(1, r):
        acc += blocks[..., i]
    return acc


def brownian_values(increments: np.ndarray) -> np.ndarray:
    """W at the grid times, starting from W_0 = 0."""
    w = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    np.cumsum(increments, axis=-1, out=w[..., 1:])
    return w


@dataclass(frozen=True)
class BrownianPath:
    T: float
    n_fine: int
    increments: np.ndarray
    seed: int
    path_index: int

    def coarse_increments(self, n: int) -> np.ndarray:
        return coarsen(self.increments, n)

    def values(self, n: int | None = None) -> np.ndarray:
        return brownian_values(self.coarse_increments(n or self.n_fine))


def generate_path(seed: int, path_index: int, T: float = 1.0, n_fine: int = 2**13) -> BrownianPath:
    inc = gaussian_increments(seed, [path_index], T, n_fine)[0]
    return BrownianPath(T=T, n_fine=n_fine, increments=inc, seed=seed, path_index=path_index)


@dataclass(frozen=True)
class SchemePath:
    n: int
    m: int
    T: float
    values: np.ndarray
    drift_eval_count: int

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


def euler_paths(drift, dW: np.ndarray, T: float, x0: float = 0.0) -> np.ndarray:
    """Euler-Maruyama for dX = b(t, X) dt + dW over a batch of paths.

    ``dW`` has shape (paths, n). The path is stored as x0 + D_k + W_k with D
    the accumulated drift, which is the usual recursion rearranged; zero drift
    therefore reproduces x0 + W_k bit for bit.
    """
    dW = np.atleast_2d(dW)
    paths, n = dW.shape
    h = T / n
    W = brownian_values(dW)
    X = np.empty((paths, n + 1))
    D = np.zeros(paths)
    X[:, 0] = (x0 + D) + W[:, 0]
    for k in range(n):
        D = D + drift(k * h, X[:, k]) * h
        X[:, k + 1] = (x0 + D) + W[:, k + 1]
    return X


def exact_linear_paths(drift: LinearDrift, dW: np.ndarray, T: float, x0: float = 0.0) -> np.ndarray:
    """Exact solution of dX = (s X + c) dt + dW driven by the piecewise-linear interpolant of W."""
    dW = np.atleast_2d(dW)
    paths, n = dW.shape
    h = T / n
    s, c = drift.slope, drift.offset
    e = math.exp(s * h)
    gain = math.expm1(s * h) / (s * h) if s != 0 else 1.0
    X = np.empty((paths, n + 1))
    X[:, 0] = x0
    for k in range(n):
        X[:, k + 1] = e * X[:, k] + gain * (c * h + dW[:, k])
    return X


def euler_maruyama(drift, w: BrownianPath, n: int, x0: float = 0.0) -> SchemePath:
    if w.n_fine % n:
        raise ValueError(f"n={n} does not divide n_fine={w.n_fine}")
    vals = euler_paths(drift, w.coarse_increments(n)[None, :], w.T, x0)[0]
    return SchemePath(n=n, m=getattr(drift, "m", 0), T=w.T, values=vals, drift_eval_count=n)


def reference_solution(bm_ref, w: BrownianPath, x0: float = 0.0) -> SchemePath:
    """Fine-grid Euler path under the same Brownian path; proxy for the exact solution."""
    return euler_maruyama(bm_ref, w, w.n_fine, x0)


@dataclass(frozen=True)
class PathError:
    sup: np.ndarray  # per path sup_k |diff|
    sup_p: np.ndarray  # per path sup_k |diff|^p
    pointwise: np.ndarray  # |diff| at the coarse times, (paths, n+1)


def measure_error(ref, approx, p: float = 2.0) -> PathError:
    """Compare at the coarse grid times. Accepts SchemePaths or (paths, n+1) arrays."""
    r = ref.values if isinstance(ref, SchemePath) else np.asarray(ref)
    a = approx.values if isinstance(approx, SchemePath) else np.asarray(approx)
    r, a = np.atleast_2d(r), np.atleast_2d(a)
    n_ref, n = r.shape[-1] - 1, a.shape[-1] - 1
    if n < 1 or n_ref % n:
        raise ValueError(f"grid with {n} steps is not a subgrid of {n_ref} steps")
    diff = np.abs(r[:, :: n_ref // n] - a)
    s = diff.max(axis=1)
    return PathError(sup=s, sup_p=s**p, pointwise=diff)


@dataclass(frozen=True)
class ErrorStats:
    n: int
    m: int
    num_paths: int
    l1_sup: float
    lp_sup: float
    p: float
    std_error: float
    sup_pointwise_l1: float

    CSV_COLUMNS = ("n", "m", "num_paths", "l1_sup", "lp_sup", "p", "sup_pointwise_l1", "std_error")

    def row(self):
        return [self.n, self.m, self.num_paths, repr(self.l1_sup), repr(self.lp_sup), repr(self.p),
                repr(self.sup_pointwise_l1), repr(self.std_error)]


def summarize(n: int, m: int, sups: np.ndarray, pointwise_sum: np.ndarray, p: float) -> ErrorStats:
    N = len(sups)
    return ErrorStats(
        n=n, m=m, num_paths=N,
        l1_sup=float(np.mean(sups)),
        lp_sup=float(np.mean(sups**p) ** (1 / p)),
        p=p,
        std_error=float(np.std(sups, ddof=1) / math.sqrt(N)) if N > 1 else 0.0,
        sup_pointwise_l1=float(np.max(pointwise_sum / N)),
    )


def transformed_paths(zp, dW: np.ndarray, T: float, y0: float, method: str = "euler"):
    """Scheme for dY = lam u(t, psi(t, Y)) dt + (1 + u_x(t, psi(t, Y))) dW.

    ``method="milstein"`` adds the correction 1/2 sigma sigma_y (dW^2 - h); with
    sigma(t, y) = 1 + u_x(t, psi(t, y)) and psi_y = 1 / (1 + u_x) this is
    1/2 u_xx(t, psi(t, Y)) (dW^2 - h). Returns (Y, psi(t_k, Y_k)), both (paths, n+1).
    """
    if method not in ("euler", "milstein"):
        raise ValueError(f"unknown method {method!r}")
    dW = np.atleast_2d(dW)
    paths, n = dW.shape
    h = T / n
    Y = np.empty((paths, n + 1))
    X = np.empty((paths, n + 1))
    Y[:, 0] = y0
    for k in range(n):
        t = k * h
        x = zp.psi(t, Y[:, k])
        X[:, k] = x
        dw = dW[:, k]
        Y[:, k + 1] = Y[:, k] + zp.lam * zp.u(t, x) * h + (1 + zp.u_x(t, x)) * dw
        if method == "milstein":
            Y[:, k + 1] += 0.5 * zp.u_xx(t, x) * (dw * dw - h)
    X[:, n] = zp.psi(T, Y[:, n])
    return Y, X


def simulate_transformed(zp, w: BrownianPath, n: int, y0: float, method: str = "euler") -> SchemePath:
    Y, _ = transformed_paths(zp, w.coarse_increments(n)[None, :], w.T, y0, method)
    return SchemePath(n=n, m=0, T=w.T, values=Y[0], drift_eval_count=n)


# -- ensembles ---------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleJob:
    master_seed: int
    T: float
    n_fine: int
    x0: float
    p: float
    reference: object  # drift callable; LinearDrift means exact solution
    levels: tuple  # ((n, drift), ...)


def _run_batch(job: EnsembleJob, indices: np.ndarray):
    dW = gaussian_increments(job.master_seed, indices, job.T, job.n_fine)
    if isinstance(job.reference, LinearDrift):
        ref = exact_linear_paths(job.reference, dW, job.T, job.x0)
    else:
        ref = euler_paths(job.reference, dW, job.T, job.x0)
    out = []
    for n, drift in job.levels:
        approx = euler_paths(drift, coarsen(dW, n), job.T, job.x0)
        err = measure_error(ref, approx, job.p)
        out.append((err.sup, err.pointwise.sum(axis=0)))
    return out


def _run_batch_star(args):
    return _run_batch(*args)


def run_ensemble(job: EnsembleJob, num_paths: int, batch_size: int = 500,
                 workers: int | None = None) -> list[ErrorStats]:
    """Error statistics of each level against the shared reference.

    Paths are split into fixed batches of ``batch_size`` consecutive indices;
    per-path results land in index-addressed slots and batch partial sums are
    reduced in batch order, so the output does not depend on ``workers``.
    """
    for n, _ in job.levels:
        if job.n_fine % n:
            raise ValueError(f"n={n} does not divide n_fine={job.n_fine}")
    batches = [np.arange(s, min(s + batch_size, num_paths)) for s in range(0, num_paths, batch_size)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch_star, [(job, b) for b in batches]))
    else:
        results = [_run_batch(job, b) for b in batches]
    stats = []
    for li, (n, drift) in enumerate(job.levels):
        sups = np.empty(num_paths)
        pw = np.zeros(n + 1)
        for b, res in zip(batches, results):
            sups[b] = res[li][0]
            pw = pw + res[li][1]
        stats.append(summarize(n, getattr(drift, "m", 0), sups, pw, job.p))
    return stats


def write_ensemble_csv(path, stats: list[ErrorStats], wall_times: list[float] | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = list(ErrorStats.CSV_COLUMNS) + (["wall_time_s"] if wall_times is not None else [])
        w.writerow(cols)
        for i, s in enumerate(stats):
            row = s.row()
            if wall_times is not None:
                row.append(f"{wall_times[i]:.3f}")
            w.writerow(row)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
