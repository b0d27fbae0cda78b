"""Goodness of fit: quantile residuals, normality tests, simulated envelopes.

For a continuous response the quantile-residual map is deterministic:
r_i = Phi^{-1}(F(y_i)) with F the fitted log-EVBS cdf, standard normal when
the model is correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import shapiro as _scipy_shapiro

from .distributions import GevParams, LogEvbsParams, gev_cdf, logevbs_sample
from .kernels import OptimOptions, RngState
from .regression import FitResult, RegressionData, fit_mle

_CDF_CLAMP = 1e-15


@dataclass
class ResidualSet:
    r: np.ndarray
    clamped: int = 0  # count of cdf values pushed off exact 0/1

    @property
    def sorted(self) -> np.ndarray:
        return np.sort(self.r)

    def __len__(self) -> int:
        return self.r.size


def quantile_residuals(fit: FitResult, data: RegressionData) -> ResidualSet:
    if not fit.converged:
        raise ValueError("quantile residuals require a converged fit")
    theta = fit.theta_hat
    eta = data.X @ theta.beta
    xi2 = (2.0 / theta.alpha) * np.sinh(0.5 * (data.y - eta))
    gamma = 0.0 if fit.gamma_zero_mode else theta.gamma
    u = gev_cdf(xi2, GevParams(0.0, 1.0, gamma))
    clamped = int(np.sum((u < _CDF_CLAMP) | (u > 1.0 - _CDF_CLAMP)))
    u = np.clip(u, _CDF_CLAMP, 1.0 - _CDF_CLAMP)
    return ResidualSet(ndtri(u), clamped=clamped)


def kolmogorov_pvalue(lam: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov tail probability Q(lam) = 2 sum (-1)^{k-1} e^{-2 k^2 lam^2}."""
    if lam <= 0:
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(max(total, 0.0), 1.0)


def ks_normal_test(res: ResidualSet) -> Tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic against the standard normal,
    p-value from the asymptotic series at sqrt(n) * D."""
    r = res.sorted
    n = r.size
    if n < 8:
        raise ValueError("KS test needs at least 8 residuals")
    cdf = ndtr(r)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    return d, kolmogorov_pvalue(math.sqrt(n) * d)


def shapiro_wilk(res: ResidualSet) -> Tuple[float, float]:
    """Shapiro-Wilk W and p-value (Royston's approximation)."""
    n = len(res)
    if not 8 <= n <= 5000:
        raise ValueError("Shapiro-Wilk supported for 8 <= n <= 5000")
    stat, p = _scipy_shapiro(res.r)
    return float(stat), float(p)


def _plotting_quantile(sorted_col: np.ndarray, prob: float) -> float:
    """Order-statistic quantile at position (m + 1) * prob, clamped to the
    sample range; linear interpolation between adjacent order statistics."""
    m = sorted_col.size
    pos = prob * (m + 1)
    if pos <= 1.0:
        return float(sorted_col[0])
    if pos >= m:
        return float(sorted_col[-1])
    lo = int(math.floor(pos))
    frac = pos - lo
    return float((1.0 - frac) * sorted_col[lo - 1] + frac * sorted_col[lo])


@dataclass
class EnvelopeBands:
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    n_sim: int
    level: float
    diverged: int = 0


def envelope(fit: FitResult, data: RegressionData, n_sim: int, level: float,
             rng: RngState) -> EnvelopeBands:
    """Simulated envelope for the sorted quantile residuals.

    Simulates ``n_sim`` datasets from the fitted model, refits each one
    (starting from theta_hat), and takes pointwise quantiles of the sorted
    residuals across simulations.
    """
    if n_sim < 19:
        raise ValueError("envelope needs at least 19 simulations")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    theta = fit.theta_hat
    eta = data.X @ theta.beta
    err = LogEvbsParams(theta.alpha, 0.0, 0.0 if fit.gamma_zero_mode else theta.gamma)
    rows = []
    diverged = 0
    opts = OptimOptions(max_iterations=300, gradient_tolerance=1e-5)
    for s in range(n_sim):
        sub = rng.substream(s + 1)
        ysim = eta + logevbs_sample(data.n, err, sub)
        simdata = RegressionData(ysim, data.X, data.labels)
        try:
            refit = fit_mle(simdata, init=theta if not fit.gamma_zero_mode else None,
                            options=opts)
        except Exception:
            diverged += 1
            continue
        if not refit.converged:
            diverged += 1
            continue
        rows.append(quantile_residuals(refit, simdata).sorted)
    if diverged > 0.05 * n_sim:
        raise RuntimeError(
            f"{diverged}/{n_sim} envelope refits diverged (limit is 5%)"
        )
    sims = np.vstack(rows)
    lo_p, hi_p = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    cols = [np.sort(sims[:, j]) for j in range(data.n)]
    lower = np.array([_plotting_quantile(c, lo_p) for c in cols])
    median = np.array([_plotting_quantile(c, 0.5) for c in cols])
    upper = np.array([_plotting_quantile(c, hi_p) for c in cols])
    return EnvelopeBands(lower, median, upper, n_sim=n_sim, level=level,
                         diverged=diverged)
