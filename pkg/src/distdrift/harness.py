"""Rate formulas, the m(n) = n^eta balancing and rate studies over n-sweeps."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .besov import SpectralGrid
from .drift import DriftSpec, LinearDrift, build_drift, mollify
from .scheme import EnsembleJob, ErrorStats, run_ensemble

log = logging.getLogger(__name__)


def rate_r(beta: float, epsilon: float) -> float:
    """(1/2 - beta - eps)^2 / (1 + beta + eps + 2 (1/2 - beta - eps)^2)."""
    if not 0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    if not 0 < epsilon < 0.5 - beta:
        raise ValueError(f"epsilon must lie in (0, 1/2 - beta), got {epsilon}")
    q = 0.5 - beta - epsilon
    return q * q / (1 + beta + epsilon + 2 * q * q)


def eta_opt(beta_hat: float, epsilon: float) -> float:
    """Mollification exponent eta in m(n) = n^eta."""
    if not 0 < beta_hat < 0.5:
        raise ValueError(f"beta_hat must lie in (0, 1/2), got {beta_hat}")
    if not 0 < epsilon <= 0.5 - beta_hat:
        raise ValueError(f"epsilon must lie in (0, 1/2 - beta_hat], got {epsilon}")
    q = 0.5 - beta_hat - epsilon
    return 1.0 / (2 * ((epsilon + beta_hat + 1) / 2 + q * q))


def balance_residual(eta: float, beta: float, beta_hat: float, epsilon: float) -> float:
    """Stability exponent minus numerical exponent, with alpha = 1 - beta_hat - epsilon."""
    s = 2 * (1 - beta_hat - epsilon) - 1
    stability = -eta * (beta_hat - beta) / 2 * s * s
    numerical = (eta * (epsilon + beta_hat + 1) / 2 - 0.5) * s
    return stability - numerical


def balanced_beta(beta_hat: float, epsilon: float) -> float:
    """The beta for which ``eta_opt`` zeroes ``balance_residual`` (beta_hat - beta = 1/2 - beta_hat - eps)."""
    return 2 * beta_hat + epsilon - 0.5


@dataclass(frozen=True)
class RateParams:
    beta: float
    beta_hat: float
    epsilon: float
    p: float = 2.0

    def __post_init__(self):
        if not 0 < self.beta < self.beta_hat < 0.5:
            raise ValueError("need 0 < beta < beta_hat < 1/2")
        if not 0 < self.epsilon < 0.5 - self.beta:
            raise ValueError("need 0 < epsilon < 1/2 - beta")
        if not (self.p == 1 or self.p >= 2):
            raise ValueError("p must be 1 or at least 2")
        if not 0.5 < self.alpha:
            raise ValueError("alpha = 1 - beta_hat - epsilon must exceed 1/2")

    @property
    def alpha(self) -> float:
        return 1 - self.beta_hat - self.epsilon

    @property
    def eta(self) -> float:
        return eta_opt(self.beta_hat, self.epsilon)


def theoretical_rates(rp: RateParams) -> tuple[float, float]:
    """(L^p-sup rate r/p, L^1-sup rate r (1/2 - beta - eps)) as positive exponents of 1/n."""
    r = rate_r(rp.beta, rp.epsilon)
    return r / rp.p, r * (0.5 - rp.beta - rp.epsilon)


def m_of_n(n: int, eta: float) -> int:
    return max(1, int(round(n**eta)))


@dataclass
class SlopeFit:
    slope: float
    r2: float
    used: int
    degenerate: bool = False


def fit_loglog(ns, errors, std_errors=None, noise_cut: float = 0.25) -> SlopeFit:
    """OLS of log2(error) on log2(n).

    The largest-n point is dropped when its standard error exceeds
    ``noise_cut`` times its value. Fewer than two positive points, or errors
    at round-off level, give a degenerate fit with NaN slope.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = np.ones(len(ns), bool)
    if std_errors is not None and len(ns) > 3:
        last = int(np.argmax(ns))
        if errors[last] > 0 and std_errors[last] > noise_cut * errors[last]:
            keep[last] = False
    keep &= errors > 1e-12
    if keep.sum() < 2:
        return SlopeFit(math.nan, math.nan, int(keep.sum()), degenerate=True)
    x, y = np.log2(ns[keep]), np.log2(errors[keep])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return SlopeFit(float(slope), float(r2), int(keep.sum()))


@dataclass
class StudyConfig:
    drift: DriftSpec
    rate: RateParams | None
    n_list: tuple = tuple(2**k for k in range(4, 10))
    n_fine: int = 2**13
    m_ref: int | None = None
    m_fixed: int | None = None
    paths: int = 10_000
    x0: float = 0.0
    T: float = 1.0
    master_seed: int = 0
    L: float = 5 * math.pi
    num_points: int = 2**14
    batch_size: int = 500
    workers: int | None = None


@dataclass
class RateReport:
    theory_rate: float  # L^1-sup exponent r (1/2 - beta - eps); NaN when not applicable
    theory_lp_rate: float
    rate_r: float
    eta: float
    sweep: list = field(default_factory=list)  # ErrorStats per n
    fitted_slope: float = math.nan
    fit_r2: float = math.nan
    degenerate: bool = False
    m_ref: int = 0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "m", "l1_sup", "lp_sup", "std_error", "theory_l1", "theory_lp"])
            for s in self.sweep:
                w.writerow([s.n, s.m, repr(s.l1_sup), repr(s.lp_sup), repr(s.std_error),
                            repr(_theory_curve(s.n, self.theory_rate)), repr(_theory_curve(s.n, self.theory_lp_rate))])

    def summary(self) -> str:
        return (f"fitted_slope={self.fitted_slope:.6f} fit_r2={self.fit_r2:.6f} "
                f"eta={self.eta:.6f} rate_r={self.rate_r:.6f}")


def _theory_curve(n: int, rate: float) -> float:
    return n ** -rate if math.isfinite(rate) else math.nan


def _is_linear_ou(spec: DriftSpec) -> bool:
    return spec.kind == "smooth_benchmark" and spec.profile == "ou_linear"


def run_rate_study(cfg: StudyConfig) -> RateReport:
    """Sweep n, simulate each level against a shared fine reference, fit the L^1-sup slope."""
    ns = sorted(cfg.n_list)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_list must be strictly increasing")
    if cfg.n_fine < 8 * ns[-1]:
        raise ValueError(f"reference resolution n_fine={cfg.n_fine} must be at least 8 * max n = {8 * ns[-1]}")
    if cfg.rate is not None:
        eta = cfg.rate.eta
        lp_rate, l1_rate = theoretical_rates(cfg.rate)
        r = rate_r(cfg.rate.beta, cfg.rate.epsilon)
    else:
        eta, lp_rate, l1_rate, r = math.nan, math.nan, math.nan, math.nan

    if _is_linear_ou(cfg.drift):
        ou = LinearDrift(-cfg.drift.amplitude)
        levels = tuple((n, ou) for n in ns)
        reference, m_ref = ou, 0
    else:
        grid = SpectralGrid(cfg.L, cfg.num_points)
        raw = build_drift(cfg.drift, grid)
        if cfg.m_fixed is not None:
            ms = [cfg.m_fixed] * len(ns)
        elif cfg.rate is not None:
            ms = [m_of_n(n, eta) for n in ns]
        else:
            raise ValueError("need either rate parameters (for m = n^eta) or a fixed m")
        m_ref = cfg.m_ref or 1 << math.ceil(math.log2(4 * max(ms)))
        if m_ref < 4 * max(ms) and cfg.m_fixed is None:
            raise ValueError(f"m_ref={m_ref} must be at least 4 * max m = {4 * max(ms)}")
        cache = {}
        for m in set(ms) | {m_ref}:
            cache[m] = mollify(cfg.drift, m, grid, T=cfg.T, raw=raw)
        levels = tuple((n, cache[m]) for n, m in zip(ns, ms))
        reference = cache[m_ref]
    job = EnsembleJob(master_seed=cfg.master_seed, T=cfg.T, n_fine=cfg.n_fine, x0=cfg.x0,
                      p=cfg.rate.p if cfg.rate else 2.0, reference=reference, levels=levels)
    stats: list[ErrorStats] = run_ensemble(job, cfg.paths, cfg.batch_size, cfg.workers)
    fit = fit_loglog([s.n for s in stats], [s.l1_sup for s in stats], [s.std_error for s in stats])
    log.info("rate study: slope %.4f (r2 %.4f), theory L1 rate %.4f", fit.slope, fit.r2, l1_rate)
    return RateReport(theory_rate=l1_rate, theory_lp_rate=lp_rate, rate_r=r, eta=eta, sweep=stats,
                      fitted_slope=fit.slope, fit_r2=fit.r2, degenerate=fit.degenerate, m_ref=m_ref)


def monotone_decreasing(values, slack: float = 0.10) -> bool:
    """Each value is at most (1 + slack) times its predecessor."""
    v = list(values)
    return all(b <= a * (1 + slack) for a, b in zip(v, v[1:]))
