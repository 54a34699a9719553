"""Yamada-Watanabe smooth approximation of |x|.

psi(z) = 1 / (z log delta) on [kappa/delta, kappa] (zero elsewhere) and
phi(x) = int_0^|x| int_0^y psi(z) dz dy, which has the closed forms used below.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class YWParams:
    delta: float
    kappa: float
    quad_points: int = 2000

    def __post_init__(self):
        if not self.delta > 1:
            raise ValueError(f"delta must exceed 1, got {self.delta}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")


@dataclass(frozen=True)
class YWPair:
    params: YWParams
    normalizer: float
    grid: np.ndarray = field(repr=False)
    phi_table: np.ndarray = field(repr=False)
    dphi_table: np.ndarray = field(repr=False)
    d2phi_table: np.ndarray = field(repr=False)

    @property
    def lower(self) -> float:
        return self.params.kappa / self.params.delta

    @property
    def kappa(self) -> float:
        return self.params.kappa

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.lower) & (z <= self.kappa)
        return np.where(inside, self.normalizer / np.where(inside, z, 1.0), 0.0)

    def dphi(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        inner = self.normalizer * np.log(np.clip(a, self.lower, self.kappa) / self.lower)
        return np.sign(x) * np.where(a >= self.kappa, 1.0, inner)

    def d2phi(self, x):
        return self.psi(np.abs(np.asarray(x, dtype=float)))

    def phi(self, x):
        a = np.abs(np.asarray(x, dtype=float))
        lo, k, c = self.lower, self.kappa, self.normalizer
        y = np.clip(a, lo, k)
        middle = c * (y * np.log(y / lo) - y + lo)
        return middle + np.maximum(a - k, 0.0)


def build_yw(params: YWParams) -> YWPair:
    c = 1.0 / math.log(params.delta)
    z = np.concatenate([[0.0], np.geomspace(params.kappa * 1e-6, 2 * params.kappa, params.quad_points)])
    pair = YWPair(params, c, z, np.empty(0), np.empty(0), np.empty(0))
    return YWPair(params, c, z, pair.phi(z), pair.dphi(z), pair.d2phi(z))


def psi_mass(pair: YWPair) -> float:
    """Integral of psi over its support by adaptive quadrature."""
    val, _ = integrate.quad(lambda z: pair.psi(z), pair.lower, pair.kappa, epsabs=1e-14, epsrel=1e-13)
    return val


def phi_by_quadrature(pair: YWPair, x: float) -> float:
    """Nested-quadrature value of phi(x), independent of the closed form."""
    a = abs(x)
    lo, k = pair.lower, pair.kappa

    def inner(y):
        if y <= lo:
            return 0.0
        return integrate.quad(lambda z: pair.psi(z), lo, min(y, k), epsabs=1e-14, epsrel=1e-13)[0]

    pts = [p for p in (lo, k) if p < a]
    return integrate.quad(inner, 0.0, a, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


@dataclass
class PropertyReport:
    defect_a: float  # max of |x| - kappa - phi(x); <= 0 required
    defect_b: float  # max of |phi'(x)| - 1; <= 0 required
    defect_b_sign: float  # max of -|phi'(x)|
    defect_c: float  # max of phi'' - 2/(|x| log delta) 1_[kappa/delta, kappa]
    defect_c_identity: float  # max |phi''(x) - psi(|x|)|
    mass_defect: float
    tol: float

    @property
    def ok(self) -> bool:
        return max(self.defect_a, self.defect_b, self.defect_b_sign, self.defect_c,
                   self.defect_c_identity, self.mass_defect) < self.tol

    def lines(self) -> list[str]:
        return [
            f"A |x| <= kappa + phi(x): max defect {self.defect_a:.3e}",
            f"B 0 <= |phi'| <= 1: max defect {max(self.defect_b, self.defect_b_sign):.3e}",
            f"C phi'' = psi(|x|) <= 2/(|x| log delta): max defect {max(self.defect_c, self.defect_c_identity):.3e}",
            f"mass int psi = 1: defect {self.mass_defect:.3e}",
        ]


def check_phi_properties(pair: YWPair, grid=None, tol: float = 1e-8) -> PropertyReport:
    k = pair.kappa
    if grid is None:
        grid = np.linspace(-2 * k, 2 * k, 10_001)
    x = np.asarray(grid, dtype=float)
    a = np.abs(x)
    phi = pair.phi(x)
    d1 = pair.dphi(x)
    d2 = pair.d2phi(x)
    nz = a > 0
    ind = (a >= pair.lower) & (a <= k)
    bound = np.where(nz & ind, 2.0 / (np.where(nz, a, 1.0) * math.log(pair.params.delta)), 0.0)
    return PropertyReport(
        defect_a=float(np.max(a - k - phi)),
        defect_b=float(np.max(np.abs(d1) - 1)),
        defect_b_sign=float(np.max(-np.abs(d1))),
        defect_c=float(np.max((d2 - bound)[nz])),
        defect_c_identity=float(np.max(np.abs(d2 - pair.psi(a)))),
        mass_defect=abs(psi_mass(pair) - 1.0),
        tol=tol,
    )


def write_table(path, pair: YWPair, x=None):
    if x is None:
        x = np.linspace(-2 * pair.kappa, 2 * pair.kappa, 2001)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "phi", "dphi", "d2phi"])
        for xi, a, b, c in zip(x, pair.phi(x), pair.dphi(x), pair.d2phi(x)):
            w.writerow([repr(float(xi)), repr(float(a)), repr(float(b)), repr(float(c))])
