"""Backward Kolmogorov equation in mild form and the Zvonkin transform.

The mild equation

    u(t) = int_t^T P_{s-t}(u_x(s) b(s)) ds - int_t^T P_{s-t}(lam u(s) - b(s)) ds

is solved in the equivalent form u(t) = int_t^T e^{-lam(s-t)} P_{s-t}(u_x b + b)(s) ds
by Picard iteration. Each mode decays at rate a = lam + xi^2/2 between time
nodes; the forcing is interpolated linearly in time and integrated exactly
against the exponential, so spatially constant problems are solved exactly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .besov import GridFunction, SpectralGrid, resample
from .drift import MollifiedDrift, oversampled_table, time_factor

log = logging.getLogger(__name__)

MAX_ITER = 200
SMALLNESS_TARGET = 0.45
LAMBDA_CAP = 2.0**20


class NonConvergence(RuntimeError):
    pass


def _phi1(z):
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 1 - zs / 2 + zs**2 / 6 - zs**3 / 24 + zs**4 / 120
    zb = z[~small]
    out[~small] = -np.expm1(-zb) / zb
    return out


def _phi2(z):
    # int_0^1 s e^{-z s} ds
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 0.5 - zs / 3 + zs**2 / 8 - zs**3 / 30 + zs**4 / 144
    zb = z[~small]
    out[~small] = (1 - np.exp(-zb) * (1 + zb)) / zb**2
    return out


@dataclass
class MildSolution:
    lam: float
    T: float
    grid: SpectralGrid
    times: np.ndarray
    coefficients: np.ndarray = field(repr=False)  # (M+1, N/2+1) half spectra of u
    sup_ux: float
    picard_residual: float
    iterations: int
    history: list = field(default_factory=list, repr=False)
    lambda_trace: list = field(default_factory=list, repr=False)  # (lambda, sup_ux) from tune_lambda

    @property
    def M(self) -> int:
        return len(self.times) - 1

    @property
    def u(self) -> np.ndarray:
        return np.fft.irfft(self.coefficients, n=self.grid.num_points, axis=1, norm="forward")

    @property
    def u_x(self) -> np.ndarray:
        c = self.coefficients * (1j * self.grid.xi)[None, :]
        c[:, -1] = 0.0
        return np.fft.irfft(c, n=self.grid.num_points, axis=1, norm="forward")

    def u_at(self, i: int) -> GridFunction:
        return GridFunction(self.grid, coefficients=self.coefficients[i])

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "sup_distance", "residual"])
            for it, dist, res in self.history:
                w.writerow([it, repr(dist), repr(res)])


class _MildMap:
    """Discrete mild map on a fixed time grid; shared by the solver and the residual check."""

    def __init__(self, bm: MollifiedDrift, lam: float, T: float, M: int, grid: SpectralGrid):
        self.grid = grid
        self.lam = lam
        self.times = np.linspace(0.0, T, M + 1)
        h = T / M
        profile = resample(bm.space_profile, grid) if grid != bm.grid else bm.space_profile
        g = time_factor(bm.spec.time_modulation, self.times)
        n = grid.num_points
        self.n_pad = 2 * n
        pad = oversampled_table(profile, 2)[:-1]
        self.b_pad = g[:, None] * pad[None, :]
        self.b_coef = g[:, None] * profile.coefficients[None, :]
        a = lam + 0.5 * grid.xi**2
        z = a * h
        self.decay = np.exp(-z)
        self.w1 = h * _phi2(z)
        self.w0 = h * _phi1(z) - self.w1
        self.ik = 1j * grid.xi
        self.ik[-1] = 0.0

    def forcing(self, coef: np.ndarray) -> np.ndarray:
        """Half spectra of u_x b + b at every node, products formed on a 2x padded grid."""
        n = self.grid.num_points
        k = n // 2 + 1
        c = np.zeros((coef.shape[0], self.n_pad // 2 + 1), dtype=complex)
        c[:, :k] = coef * self.ik[None, :]
        ux_pad = np.fft.irfft(c, n=self.n_pad, axis=1, norm="forward")
        prod = np.fft.rfft(ux_pad * self.b_pad, axis=1, norm="forward")[:, :k]
        prod[:, -1] = 0.0
        return prod + self.b_coef

    def apply(self, coef: np.ndarray) -> np.ndarray:
        G = self.forcing(coef)
        out = np.zeros_like(coef)
        for i in range(len(self.times) - 2, -1, -1):
            out[i] = self.decay * out[i + 1] + self.w0 * G[i] + self.w1 * G[i + 1]
        return out

    def sup_distance(self, a: np.ndarray, b: np.ndarray) -> float:
        d = np.fft.irfft(a - b, n=self.grid.num_points, axis=1, norm="forward")
        return float(np.max(np.abs(d)))


def _pde_grid(bm: MollifiedDrift, num_points: int | None) -> SpectralGrid:
    if num_points is None or num_points == bm.grid.num_points:
        return bm.grid
    return SpectralGrid(bm.grid.period_length, num_points)


def solve_mild(bm: MollifiedDrift, lam: float, T: float = 1.0, M: int = 64, tol: float = 1e-8,
               num_points: int | None = None, max_iter: int = MAX_ITER) -> MildSolution:
    """Picard iteration for the mild Kolmogorov equation with drift b^m.

    Stops when successive iterates differ by less than ``tol`` in sup norm.
    ``num_points`` optionally solves on a coarser grid (spectral truncation of b^m).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if M < 8:
        raise ValueError("need at least 8 time nodes")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    grid = _pde_grid(bm, num_points)
    mild = _MildMap(bm, lam, T, M, grid)
    coef = np.zeros((M + 1, grid.num_points // 2 + 1), dtype=complex)
    history = []
    prev = None
    for it in range(1, max_iter + 1):
        new = mild.apply(coef)
        dist = mild.sup_distance(new, coef)
        est = dist if prev in (None, 0.0) else dist * min(dist / prev, 1.0)
        history.append((it, dist, est))
        coef, prev = new, dist
        if dist < tol:
            break
    else:
        raise NonConvergence(f"Picard iteration did not converge in {max_iter} steps "
                             f"(lambda={lam}, last distance {dist:.3e})")
    residual = mild.sup_distance(mild.apply(coef), coef)
    coef[-1] = 0.0
    sol = MildSolution(lam=lam, T=T, grid=grid, times=mild.times, coefficients=coef,
                       sup_ux=0.0, picard_residual=residual, iterations=it, history=history)
    sol.sup_ux = _sup_ux(sol)
    log.debug("mild solve lam=%g: %d iterations, residual %.2e, sup|u_x| %.4f", lam, it, residual, sol.sup_ux)
    return sol


def _sup_ux(sol: MildSolution, factor: int = 8) -> float:
    """Upper envelope of |u_x|: oversampled samples and the secant slopes between them."""
    tab, ux = _tables(sol, factor)
    dx = 2 * sol.grid.period_length / (tab.shape[1] - 1)
    secant = np.max(np.abs(np.diff(tab, axis=1))) / dx
    return float(max(secant, np.max(np.abs(ux))))


def _tables(sol: MildSolution, factor: int):
    n = sol.grid.num_points
    u_tab, ux_tab = [], []
    for i in range(sol.M + 1):
        f = GridFunction(sol.grid, coefficients=sol.coefficients[i])
        u_tab.append(oversampled_table(f, factor))
        ux_tab.append(oversampled_table(f.derivative(), factor))
    assert len(u_tab[0]) == n * factor + 1
    return np.array(u_tab), np.array(ux_tab)


def tune_lambda(bm: MollifiedDrift, T: float = 1.0, M: int = 64, tol: float = 1e-8,
                num_points: int | None = None, target: float = SMALLNESS_TARGET,
                start: float = 1.0) -> MildSolution:
    """Geometric search lam = start, 2 start, 4 start, ... until sup|u_x| < target."""
    lam = start
    trace = []
    while lam <= LAMBDA_CAP:
        try:
            sol = solve_mild(bm, lam, T, M, tol, num_points)
        except NonConvergence:
            trace.append((lam, math.inf))  # too small a lambda for Picard to contract
        else:
            trace.append((lam, sol.sup_ux))
            if sol.sup_ux < target:
                sol.lambda_trace = trace
                return sol
        lam *= 2
    raise NonConvergence(f"no lambda up to {LAMBDA_CAP:g} achieved sup|u_x| < {target}")


class ZvonkinPair:
    """phi(t, x) = x + u(t, x) and its inverse psi, on interpolation tables.

    Space: linear interpolation on an oversampled periodic table. Time:
    linear interpolation between the solver's nodes.
    """

    def __init__(self, mild: MildSolution, factor: int = 8):
        self.mild = mild
        self.factor = factor
        self.u_tab, self.ux_tab = _tables(mild, factor)
        self._uxx_tab = None
        self.L = mild.grid.period_length
        self.n_tab = self.u_tab.shape[1] - 1
        self.dx = 2 * self.L / self.n_tab
        self.h = mild.T / mild.M
        slope = np.max(np.abs(np.diff(self.u_tab, axis=1))) / self.dx
        self.sup_ux = float(max(slope, np.max(np.abs(self.ux_tab))))
        self.sup_u = float(np.max(np.abs(self.u_tab)))
        self.lip_lower = 1.0 - self.sup_ux
        self.lip_upper = 1.0 + self.sup_ux
        if self.lip_lower <= 0.5:
            raise ValueError(f"sup|u_x| = {self.sup_ux:.3f} is not below 1/2; tune lambda first")

    @property
    def lam(self) -> float:
        return self.mild.lam

    def _interp(self, tab, t, x):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.mild.T)
        x = np.asarray(x, dtype=float)
        s = t / self.h
        i = np.minimum(np.floor(s).astype(np.intp), self.mild.M - 1)
        wt = s - i
        q = np.mod(x + self.L, 2 * self.L) / self.dx
        k = np.minimum(np.floor(q).astype(np.intp), self.n_tab - 1)
        wx = q - k
        lo = tab[i, k] * (1 - wx) + tab[i, k + 1] * wx
        hi = tab[i + 1, k] * (1 - wx) + tab[i + 1, k + 1] * wx
        return lo * (1 - wt) + hi * wt

    def u(self, t, x):
        return self._interp(self.u_tab, t, x)

    def u_x(self, t, x):
        return self._interp(self.ux_tab, t, x)

    def u_xx(self, t, x):
        if self._uxx_tab is None:
            self._uxx_tab = np.array([oversampled_table(self.mild.u_at(i).derivative(2), self.factor)
                                      for i in range(self.mild.M + 1)])
        return self._interp(self._uxx_tab, t, x)

    def phi(self, t, x):
        return np.asarray(x, dtype=float) + self.u(t, x)

    def psi(self, t, y, bracket: float = 1e-13):
        """Solve phi(t, x) = y: bisection down to ``bracket``, then one secant step."""
        y = np.asarray(y, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
        lo = y - self.sup_u - 1e-12
        hi = y + self.sup_u + 1e-12
        width = 2 * self.sup_u + 2e-12
        for _ in range(math.ceil(math.log2(width / bracket))):
            mid = 0.5 * (lo + hi)
            left = self.phi(t, mid) > y
            hi = np.where(left, mid, hi)
            lo = np.where(left, lo, mid)
        f_lo = self.phi(t, lo) - y
        f_hi = self.phi(t, hi) - y
        denom = f_hi - f_lo
        ok = denom > 0
        return np.where(ok, lo - f_lo * (hi - lo) / np.where(ok, denom, 1.0), lo)


def zvonkin_pair(mild: MildSolution, factor: int = 8) -> ZvonkinPair:
    return ZvonkinPair(mild, factor)


def phi(zp: ZvonkinPair, t, x):
    return zp.phi(t, x)


def psi(zp: ZvonkinPair, t, y):
    return zp.psi(t, y)
