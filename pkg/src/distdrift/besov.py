"""Periodic spectral grids, Littlewood-Paley blocks and Hoelder-Zygmund norms.

Functions live on the circle [-L, L) sampled at N equispaced points. Fourier
coefficients are stored as a half spectrum (``numpy.fft.rfft`` with forward
normalisation), so real-valuedness holds by construction.

The heat semigroup is ``P_t = exp(t/2 d^2/dx^2)``, i.e. convolution with a
Gaussian of variance ``t``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

GAMMA_RANGE = (-2.0, 3.0)

# dyadic window profile: chi = 1 on [0, 3/4], 0 on [1, inf)
_CHI_INNER = 0.75
_CHI_OUTER = 1.0


@dataclass(frozen=True)
class SpectralGrid:
    period_length: float = 5 * math.pi
    num_points: int = 2**14

    def __post_init__(self):
        n = self.num_points
        if n < 64 or n & (n - 1):
            raise ValueError(f"num_points must be a power of two >= 64, got {n}")
        if not self.period_length > 0:
            raise ValueError("period_length must be positive")
        if self.max_block < 0:
            raise ValueError("grid too coarse: no fully resolved dyadic block")

    @property
    def L(self) -> float:
        return self.period_length

    @property
    def dx(self) -> float:
        return 2 * self.period_length / self.num_points

    @property
    def nyquist(self) -> float:
        return math.pi * self.num_points / (2 * self.period_length)

    @property
    def max_block(self) -> int:
        # largest j with 2^(j+1) strictly below the Nyquist frequency
        j = math.floor(math.log2(self.nyquist)) - 1
        while 2.0 ** (j + 1) >= self.nyquist:
            j -= 1
        return j

    @property
    def resolved_limit(self) -> float:
        """Frequencies up to this value are covered exactly by the partition."""
        return _CHI_INNER * 2.0 ** (self.max_block + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return -self.period_length + self.dx * np.arange(self.num_points)

    @cached_property
    def xi(self) -> np.ndarray:
        """Non-negative angular frequencies of the half spectrum."""
        return np.pi / self.period_length * np.arange(self.num_points // 2 + 1)

    def frequency_index(self, xi: float) -> int:
        """Index k with xi_k == xi; raises if xi is not a grid frequency."""
        k = xi * self.period_length / math.pi
        kr = round(k)
        if abs(k - kr) > 1e-9 or not 0 <= kr <= self.num_points // 2:
            raise ValueError(f"frequency {xi} is not representable on this grid")
        return int(kr)

    def wrap(self, x):
        """Reduce x into [-L, L)."""
        p = 2 * self.period_length
        return np.mod(np.asarray(x, dtype=float) + self.period_length, p) - self.period_length


class GridFunction:
    """Real function (or distribution) sampled on a ``SpectralGrid``.

    Either representation may be given; the other is computed on first access
    and cached. Instances are treated as immutable.
    """

    def __init__(self, grid: SpectralGrid, values=None, coefficients=None):
        if values is None and coefficients is None:
            raise ValueError("need values or coefficients")
        self.grid = grid
        self._values = None
        self._coefficients = None
        if values is not None:
            v = np.asarray(values, dtype=float)
            if v.shape != (grid.num_points,):
                raise ValueError(f"expected {grid.num_points} samples, got {v.shape}")
            self._values = v
        if coefficients is not None:
            c = np.asarray(coefficients, dtype=complex)
            if c.shape != (grid.num_points // 2 + 1,):
                raise ValueError("coefficient array has wrong length")
            self._coefficients = c

    @classmethod
    def from_callable(cls, grid: SpectralGrid, f) -> "GridFunction":
        return cls(grid, values=f(grid.x))

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "GridFunction":
        return cls(grid, values=np.zeros(grid.num_points))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = np.fft.irfft(self._coefficients, n=self.grid.num_points, norm="forward")
        return self._values

    @property
    def coefficients(self) -> np.ndarray:
        if self._coefficients is None:
            self._coefficients = np.fft.rfft(self._values, norm="forward")
        return self._coefficients

    def synchronize(self) -> "GridFunction":
        self.values, self.coefficients  # noqa: B018
        return self

    def with_coefficients(self, c) -> "GridFunction":
        return GridFunction(self.grid, coefficients=c)

    def derivative(self, order: int = 1) -> "GridFunction":
        c = self.coefficients * (1j * self.grid.xi) ** order
        if self.grid.num_points % 2 == 0 and order % 2:
            c[-1] = 0.0
        return self.with_coefficients(c)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, values=self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, values=self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, values=c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return -1.0 * self

    def __repr__(self):
        return f"GridFunction(N={self.grid.num_points}, L={self.grid.period_length:g}, sup={self.sup():.4g})"


def _check_same_grid(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise ValueError("functions live on different grids")


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def chi(r):
    """Low-pass profile: 1 on [0, 3/4], 0 beyond 1, smooth in between."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - _smooth_step((r - _CHI_INNER) / (_CHI_OUTER - _CHI_INNER))


@dataclass(frozen=True)
class DyadicPartition:
    """Littlewood-Paley windows w_{-1}, w_0, ..., w_J on the grid frequencies.

    w_{-1} = chi(xi) and w_j = chi(xi / 2^(j+1)) - chi(xi / 2^j), so w_j is
    supported in (3/4 2^j, 2^(j+1)) and equals one on [2^j, 3/2 2^j].
    """

    grid: SpectralGrid
    blocks: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xi = self.grid.xi
        rows = [chi(xi)]
        for j in range(self.grid.max_block + 1):
            rows.append(chi(xi / 2.0 ** (j + 1)) - chi(xi / 2.0**j))
        object.__setattr__(self, "blocks", np.array(rows))

    @property
    def indices(self) -> range:
        return range(-1, self.grid.max_block + 1)

    def weight(self, j: int) -> np.ndarray:
        self._check_index(j)
        return self.blocks[j + 1]

    def resolved_mask(self) -> np.ndarray:
        return self.grid.xi <= self.grid.resolved_limit

    def _check_index(self, j: int):
        if not -1 <= j <= self.grid.max_block:
            raise IndexError(f"block index {j} outside [-1, {self.grid.max_block}]")


_PARTITIONS: dict[SpectralGrid, DyadicPartition] = {}


def partition(grid: SpectralGrid) -> DyadicPartition:
    if grid not in _PARTITIONS:
        _PARTITIONS[grid] = DyadicPartition(grid)
    return _PARTITIONS[grid]


def lp_block(f: GridFunction, j: int) -> GridFunction:
    """j-th Littlewood-Paley block of f."""
    w = partition(f.grid).weight(j)
    return f.with_coefficients(w * f.coefficients)


def block_sups(f: GridFunction) -> np.ndarray:
    """sup-norms of all blocks j = -1..max_block (index 0 is j = -1)."""
    part = partition(f.grid)
    spec = part.blocks * f.coefficients[None, :]
    blocks = np.fft.irfft(spec, n=f.grid.num_points, axis=1, norm="forward")
    return np.max(np.abs(blocks), axis=1)


def _check_gamma(gamma: float):
    lo, hi = GAMMA_RANGE
    if not lo <= gamma <= hi:
        raise ValueError(f"gamma={gamma} outside supported range [{lo}, {hi}]")


def besov_norm(f: GridFunction, gamma: float) -> float:
    """sup_j 2^(j gamma) ||block_j f||_inf over the resolved blocks."""
    _check_gamma(gamma)
    js = np.arange(-1, f.grid.max_block + 1)
    return float(np.max(2.0 ** (js * gamma) * block_sups(f)))


def block_table(f: GridFunction, gamma: float) -> list[tuple[int, float, float]]:
    _check_gamma(gamma)
    sups = block_sups(f)
    return [(j, float(s), float(2.0 ** (j * gamma) * s)) for j, s in zip(range(-1, f.grid.max_block + 1), sups)]


def write_block_table(path, f: GridFunction, gamma: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "block_sup", "weighted"])
        for row in block_table(f, gamma):
            w.writerow([row[0], repr(row[1]), repr(row[2])])


def _pair_seminorm(values: np.ndarray, dx: float, exponent: float) -> float:
    n = len(values)
    best = 0.0
    max_shift = min(int(math.ceil(1.0 / dx)) - 1, n // 2)
    for s in range(1, max_shift + 1):
        d = s * dx
        if d >= 1.0:
            break
        diff = np.max(np.abs(values - np.roll(values, s)))
        best = max(best, diff / d**exponent)
    return best


def holder_norm(f: GridFunction, gamma: float) -> float:
    """Classical Hoelder norm for gamma in (0,1) or (1,2).

    The supremum over 0 < |x-y| < 1 is taken over grid pairs, which gives a
    lower bound for the continuum value.
    """
    if 0 < gamma < 1:
        return f.sup() + _pair_seminorm(f.values, f.grid.dx, gamma)
    if 1 < gamma < 2:
        df = f.derivative()
        return f.sup() + df.sup() + _pair_seminorm(df.values, f.grid.dx, gamma - 1)
    raise ValueError(f"holder_norm needs gamma in (0,1) or (1,2), got {gamma}")


def heat_semigroup(f: GridFunction, t: float) -> GridFunction:
    if t < 0:
        raise ValueError("heat semigroup needs t >= 0")
    if t == 0:
        return f
    return f.with_coefficients(f.coefficients * np.exp(-0.5 * t * f.grid.xi**2))


def check_bernstein(f: GridFunction, gamma: float) -> float:
    """Ratio ||f'||_gamma / ||f||_(gamma+1); 0 for the zero function."""
    den = besov_norm(f, gamma + 1)
    if den == 0:
        return 0.0
    return besov_norm(f.derivative(), gamma) / den


@dataclass
class SchauderReport:
    t_values: np.ndarray
    smoothing_norms: np.ndarray
    continuity_norms: np.ndarray
    smoothing_slope: float
    continuity_slope: float


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if len(x) < 3:
        raise ValueError("slope fit needs at least 3 points")
    return float(np.polyfit(x, y, 1)[0])


def check_schauder(f: GridFunction, gamma: float, theta: float,
                   t_values: Iterable[float] | None = None, T: float = 1.0) -> SchauderReport:
    """Fit t-slopes of ||P_t f||_(gamma+2 theta) and ||P_t f - f||_(gamma - 2 theta).

    ``gamma`` is the regularity of f. The smoothing estimate predicts a slope
    no steeper than -theta for the first curve; the time-continuity estimate
    predicts a slope of about +theta for the second.
    """
    if t_values is None:
        t_values = T * 2.0 ** -np.arange(14, -1, -1)
    t = np.asarray(list(t_values), dtype=float)
    if len(t) < 3:
        raise ValueError("Schauder fit needs at least 3 t-samples")
    if np.any(t <= 0) or np.any(t > T):
        raise ValueError("t-samples must lie in (0, T]")
    if not np.any(f.coefficients):
        raise ValueError("Schauder check needs a nonzero function")
    hi = gamma + 2 * theta
    lo = gamma - 2 * theta
    smooth = np.array([besov_norm(heat_semigroup(f, s), hi) for s in t])
    cont = np.array([besov_norm(heat_semigroup(f, s) - f, lo) for s in t])
    return SchauderReport(t, smooth, cont, loglog_slope(t, smooth), loglog_slope(t, cont))


def resample(f: GridFunction, grid: SpectralGrid) -> GridFunction:
    """Trigonometric interpolant of f on another grid with the same period.

    Modes above the target Nyquist frequency are dropped.
    """
    if grid.period_length != f.grid.period_length:
        raise ValueError("resampling needs equal periods")
    k = grid.num_points // 2 + 1
    c = np.zeros(k, dtype=complex)
    n = min(k, len(f.coefficients))
    c[:n] = f.coefficients[:n]
    if grid.num_points < f.grid.num_points:
        c[-1] = 0.0
    elif grid.num_points > f.grid.num_points and f.grid.num_points % 2 == 0:
        c[n - 1] *= 0.5
    return GridFunction(grid, coefficients=c)
