"""Drift fields, their heat-semigroup mollification and coefficient bounds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .besov import GridFunction, SpectralGrid, block_sups, heat_semigroup

KINDS = ("smooth_benchmark", "holder_function", "distributional_derivative")
PROFILES = ("ou", "ou_linear", "sin", "zero", "constant")
MODULATIONS = ("constant", "sqrt_ramp")
RAMP_OFFSET = 0.01
INTERP_TOL = 1e-6
MAX_TABLE_POINTS = 2**22


@dataclass(frozen=True)
class DriftSpec:
    kind: str = "smooth_benchmark"
    beta: float = 0.25
    seed: int = 0
    amplitude: float = 1.0
    time_modulation: str = "constant"
    profile: str = "ou"
    holder_exponent: float = 0.6
    beta_hat: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.time_modulation not in MODULATIONS:
            raise ValueError(f"unknown time modulation {self.time_modulation!r}")
        if self.kind == "smooth_benchmark" and self.profile not in PROFILES:
            raise ValueError(f"unknown smooth profile {self.profile!r}")
        if self.kind == "distributional_derivative":
            if not 0 < self.beta < 0.5:
                raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
            if not self.beta < self.effective_beta_hat < 0.5:
                raise ValueError("beta_hat must lie in (beta, 1/2)")
        if self.kind == "holder_function" and not 0 < self.holder_exponent < 1:
            raise ValueError("holder_exponent must lie in (0, 1)")

    @property
    def effective_beta_hat(self) -> float:
        return self.beta + 0.05 if self.beta_hat is None else self.beta_hat


def time_factor(modulation: str, t):
    t = np.asarray(t, dtype=float)
    if modulation == "constant":
        return np.ones_like(t)
    if modulation == "sqrt_ramp":
        return np.sqrt(t + RAMP_OFFSET)
    raise ValueError(f"unknown time modulation {modulation!r}")


def _phases(seed: int, count: int) -> np.ndarray:
    return np.random.default_rng([seed, 0xD1F7]).uniform(0, 2 * np.pi, count)


def _lacunary(grid: SpectralGrid, exponents: np.ndarray, phases: np.ndarray, derivative: bool) -> np.ndarray:
    x = grid.x
    out = np.zeros_like(x)
    for j, (a, ph) in enumerate(zip(exponents, phases)):
        freq = 2.0**j
        grid.frequency_index(freq)
        out += a * (np.cos(freq * x + ph) if derivative else np.sin(freq * x + ph))
    return out


def build_drift(spec: DriftSpec, grid: SpectralGrid) -> GridFunction:
    """Raw spatial profile of the drift (a distribution for the derivative kind).

    Lacunary constructions place one cosine/sine at each dyadic frequency 2^j,
    j = 0..max_block, so block j carries exactly one mode.
    """
    a = spec.amplitude
    js = np.arange(grid.max_block + 1)
    if spec.kind == "smooth_benchmark":
        x = grid.x
        if spec.profile == "ou":
            # -x + O(x^3) near the origin, periodic on the grid
            k = math.pi / grid.period_length
            vals = -a * np.sin(k * x) / k
        elif spec.profile == "ou_linear":
            raise ValueError("the linear OU drift is not periodic; use LinearDrift")
        elif spec.profile == "sin":
            grid.frequency_index(1.0)
            vals = a * np.sin(x)
        elif spec.profile == "zero":
            vals = np.zeros_like(x)
        else:
            vals = np.full_like(x, a)
        return GridFunction(grid, values=vals)
    phases = _phases(spec.seed, len(js))
    if spec.kind == "holder_function":
        amps = a * 2.0 ** (-js * spec.holder_exponent)
        return GridFunction(grid, values=_lacunary(grid, amps, phases, derivative=False))
    # b = F' with F = sum 2^{-j(1-beta)} sin(2^j x + phase_j)
    amps = a * 2.0 ** (-js * (1 - spec.beta)) * 2.0**js
    return GridFunction(grid, values=_lacunary(grid, amps, phases, derivative=True))


def block_amplitudes(f: GridFunction) -> list[tuple[int, float]]:
    sups = block_sups(f)
    return list(zip(range(-1, f.grid.max_block + 1), (float(s) for s in sups)))


def block_decay_slope(f: GridFunction, j_min: int = 0) -> float:
    """Least-squares slope of log2(block sup) against j over the nonzero blocks."""
    rows = [(j, s) for j, s in block_amplitudes(f) if j >= j_min and s > 0]
    js, ss = np.array(rows).T
    return float(np.polyfit(js, np.log2(ss), 1)[0])


@dataclass(frozen=True)
class DriftBounds:
    sup_norm: float
    lip_norm: float
    time_seminorm: float
    p: float
    A_m: float
    B_m: float
    C_m: float
    D_m: float

    @classmethod
    def from_norms(cls, sup_norm: float, lip_norm: float, time_seminorm: float, p: float = 2.0) -> "DriftBounds":
        return cls(
            sup_norm=sup_norm,
            lip_norm=lip_norm,
            time_seminorm=time_seminorm,
            p=p,
            A_m=sup_norm * (1 + lip_norm),
            B_m=lip_norm + time_seminorm,
            C_m=sup_norm**p * (lip_norm**p + 1),
            D_m=lip_norm**p + time_seminorm**p,
        )


@dataclass(frozen=True, eq=False)
class MollifiedDrift:
    """b^m(t, x) = g(t) * (P_{1/m} b)(x), evaluated by linear interpolation."""

    spec: DriftSpec
    m: int
    space_profile: GridFunction
    table: np.ndarray = field(repr=False)
    T: float = 1.0
    bounds: DriftBounds | None = None

    @property
    def grid(self) -> SpectralGrid:
        return self.space_profile.grid

    @property
    def table_dx(self) -> float:
        return 2 * self.grid.period_length / (len(self.table) - 1)

    def profile_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _interp_periodic(self.table, self.grid.period_length, x)

    def time_factor(self, t):
        return time_factor(self.spec.time_modulation, t)

    def __call__(self, t, x):
        return self.time_factor(t) * self.profile_at(x)

    def with_spec(self, **changes) -> "MollifiedDrift":
        return replace(self, spec=replace(self.spec, **changes))


def _interp_periodic(table: np.ndarray, L: float, x: np.ndarray) -> np.ndarray:
    """Linear interpolation on a closed periodic table (last entry == first)."""
    n = len(table) - 1
    s = np.mod(x + L, 2 * L) * (n / (2 * L))
    i = np.floor(s).astype(np.intp)
    i = np.minimum(i, n - 1)
    w = s - i
    return table[i] * (1.0 - w) + table[i + 1] * w


def oversampled_table(f: GridFunction, factor: int) -> np.ndarray:
    """Samples of the trigonometric interpolant of f on a factor-times finer grid, closed periodically."""
    n = f.grid.num_points
    big = n * factor
    c = np.zeros(big // 2 + 1, dtype=complex)
    c[: n // 2 + 1] = f.coefficients
    if n % 2 == 0:
        c[n // 2] *= 0.5 if factor > 1 else 1.0
    vals = np.fft.irfft(c, n=big, norm="forward")
    return np.append(vals, vals[0])


def table_factor(f: GridFunction, tol: float = INTERP_TOL, minimum: int = 8) -> int:
    """Smallest power-of-two oversampling keeping the linear-interpolation error below tol * sup|f|.

    Uses the bound dx^2 / 8 * sup|f''|.
    """
    sup = f.sup()
    if sup == 0:
        return minimum
    curv = f.derivative(2).sup()
    factor = minimum
    n = f.grid.num_points
    while (f.grid.dx / factor) ** 2 / 8 * curv > tol * sup and n * factor < MAX_TABLE_POINTS:
        factor *= 2
    return factor


def mollify(spec: DriftSpec, m: int, grid: SpectralGrid, T: float = 1.0,
            raw: GridFunction | None = None, p: float = 2.0, time_grid: int = 101) -> MollifiedDrift:
    """Heat-semigroup mollification b^m = P_{1/m} b of the drift described by ``spec``."""
    if m < 1:
        raise ValueError(f"mollification parameter must be >= 1, got {m}")
    if raw is None:
        raw = build_drift(spec, grid)
    profile = heat_semigroup(raw, 1.0 / m)
    profile = GridFunction(grid, values=profile.values.copy(), coefficients=profile.coefficients)
    table = oversampled_table(profile, table_factor(profile))
    bm = MollifiedDrift(spec=spec, m=int(m), space_profile=profile, table=table, T=T)
    object.__setattr__(bm, "bounds", compute_bounds(bm, p=p, time_grid=time_grid))
    return bm


def evaluate(bm: MollifiedDrift, t, x):
    return bm(t, x)


def _time_seminorm(modulation: str, T: float, samples: int) -> float:
    t = np.linspace(0.0, T, samples)
    g = time_factor(modulation, t)
    dt = np.abs(t[:, None] - t[None, :])
    dg = np.abs(g[:, None] - g[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dt > 0, dg / np.sqrt(dt), 0.0)
    return float(q.max())


def compute_bounds(bm: MollifiedDrift, p: float = 2.0, time_grid: int = 101) -> DriftBounds:
    """Norms of b^m and the A_m, B_m (p = 1 error) and C_m, D_m (L^p error) coefficients."""
    if time_grid < 2:
        raise ValueError("time grid needs at least 2 samples")
    t = np.linspace(0.0, bm.T, time_grid)
    gmax = float(np.max(np.abs(time_factor(bm.spec.time_modulation, t))))
    prof = bm.space_profile
    factor = max(8, (len(bm.table) - 1) // prof.grid.num_points)
    sup_profile = float(np.max(np.abs(oversampled_table(prof, factor))))
    lip_profile = float(np.max(np.abs(oversampled_table(prof.derivative(), factor))))
    seminorm = sup_profile * _time_seminorm(bm.spec.time_modulation, bm.T, time_grid)
    return DriftBounds.from_norms(gmax * sup_profile, gmax * lip_profile, seminorm, p)


def write_profile(path, f: GridFunction):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(f.grid.x, f.values):
            w.writerow([repr(float(x)), repr(float(v))])


def write_block_amplitudes(path, f: GridFunction):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "amplitude"])
        for j, a in block_amplitudes(f):
            w.writerow([j, repr(a)])


class LinearDrift:
    """Exact linear drift b(t, x) = slope * x + offset (unbounded, not periodic).

    The heat semigroup fixes affine functions, so this drift is its own
    mollification. Used for the Ornstein-Uhlenbeck benchmark.
    """

    def __init__(self, slope: float = -1.0, offset: float = 0.0):
        self.slope = slope
        self.offset = offset
        self.m = 0

    def __call__(self, t, x):
        return self.slope * np.asarray(x, dtype=float) + self.offset


class ConstantDrift:
    def __init__(self, value: float):
        self.value = value
        self.m = 0

    def __call__(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)
