"""Local influence diagnostics for the fitted regression model.

For a perturbation vector omega with null point omega0, the machinery is built
on two matrices evaluated at the MLE: the log-likelihood Hessian Ldd and the
cross-derivative matrix Delta[i, j] = d^2 l(theta | omega) / d theta_i d omega_j.
The influence surface's normal curvature along a unit direction l is
C_l = -2 l' (Delta' Ldd^{-1} Delta) l, its conformal rescaling
B_l = -l' (Delta' Ldd^{-1} Delta) l / sqrt(tr[(Delta' Ldd^{-1} Delta)^2])
lies in [0, 1], and the spectrum of F = Delta' (-Ldd)^{-1} Delta drives the
eigenvalue report: normalized eigenvalues, q-influential directions, and
per-observation aggregate contributions against the benchmark b(q).

Three perturbation schemes are supported: case weighting (omega0 = 1),
additive response shift y_i + omega_i * s_y (omega0 = 0), and an additive
shift on one continuous covariate column (omega0 = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .kernels import OptimOptions, SpdSolveError, maximize, solve_spd, sym_eigen
from .regression import (
    FitResult,
    RegressionData,
    ThetaParams,
    _cores,
    _fit_gamma_zero,
    _vector_feasible,
    fit_mle,
    hessian,
    is_feasible,
    loglik,
    score,
)
from .distributions import GAMMA_SWITCH


@dataclass(frozen=True)
class CaseWeights:
    """Per-observation weights on the likelihood contributions; null = ones."""


@dataclass(frozen=True)
class ResponsePerturbation:
    """y_i -> y_i + omega_i * s_y; defaults s_y to the sample sd of y."""

    s_y: Optional[float] = None

    def scale(self, data: RegressionData) -> float:
        s = self.s_y if self.s_y is not None else float(np.std(data.y, ddof=1))
        if not s > 0:
            raise ValueError("response scale factor must be positive")
        return s


@dataclass(frozen=True)
class CovariatePerturbation:
    """x_it -> x_it + omega_i * s_x on one non-intercept column t."""

    column: int
    s_x: Optional[float] = None

    def scale(self, data: RegressionData) -> float:
        if not 1 <= self.column < data.p:
            raise ValueError("covariate perturbation needs a non-intercept column")
        s = (self.s_x if self.s_x is not None
             else float(np.std(data.X[:, self.column], ddof=1)))
        if not s > 0:
            raise ValueError("covariate scale factor must be positive")
        return s


PerturbationScheme = Union[CaseWeights, ResponsePerturbation, CovariatePerturbation]


@dataclass
class DeltaMatrix:
    entries: np.ndarray           # (p+2) x n, or (p+1) x n in gamma = 0 mode
    scheme: PerturbationScheme
    omega0: np.ndarray
    gamma_zero: bool


@dataclass
class InfluenceReport:
    normalized_eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    q: int
    k: int
    contributions: np.ndarray     # aggregate contribution B_j(q) per observation
    benchmark: float              # b(q)
    flagged: Tuple[int, ...]      # 1-based observation numbers with B_j >= b(q)


@dataclass
class DeletionImpact:
    index: int                    # 1-based observation number that was dropped
    refit: FitResult
    rate_of_change: np.ndarray    # percent change per parameter
    parameter_names: Tuple[str, ...]


def _fit_theta_and_mode(fit: FitResult):
    if fit.gamma_zero_mode:
        return fit.theta_hat, True
    return fit.theta_hat, False


def _check_fit_usable(fit: FitResult):
    if not fit.converged:
        raise ValueError("influence analysis requires a converged fit")
    if not fit.hessian_neg_definite or fit.observed_info_inverse is None:
        raise ValueError(
            "influence analysis requires a negative-definite Hessian at the MLE"
        )


def delta_matrix(scheme: PerturbationScheme, fit: FitResult,
                 data: RegressionData) -> DeltaMatrix:
    """Cross-derivative matrix of the perturbed log-likelihood at (theta_hat,
    omega0). Rows follow the parameter order (beta..., alpha[, gamma])."""
    _check_fit_usable(fit)
    theta, gz = _fit_theta_and_mode(fit)
    c = _cores(theta, data, order=2)
    X = data.X
    n = data.n

    if isinstance(scheme, CaseWeights):
        # column j is the per-case score of observation j
        rows = [X.T * c["g1"], c["g2"][None, :]]
        if not gz:
            rows.append(c["g3"][None, :])
        omega0 = np.ones(n)
    elif isinstance(scheme, ResponsePerturbation):
        s_y = scheme.scale(data)
        rows = [X.T * (-s_y * c["h11"]), (-s_y * c["h12"])[None, :]]
        if not gz:
            rows.append((-s_y * c["h13"])[None, :])
        omega0 = np.zeros(n)
    elif isinstance(scheme, CovariatePerturbation):
        s_x = scheme.scale(data)
        t = scheme.column
        bt = theta.beta[t]
        common = s_x * bt
        beta_block = X.T * (common * c["h11"])
        beta_block[t, :] += s_x * c["g1"]  # the perturbed design enters the
        # beta_t score directly, adding the per-case score factor on row t
        rows = [beta_block, (common * c["h12"])[None, :]]
        if not gz:
            rows.append((common * c["h13"])[None, :])
        omega0 = np.zeros(n)
    else:
        raise TypeError(f"unknown perturbation scheme: {scheme!r}")

    return DeltaMatrix(np.vstack(rows), scheme, omega0, gz)


def _hessian_at_fit(fit: FitResult, data: RegressionData) -> np.ndarray:
    theta, gz = _fit_theta_and_mode(fit)
    return hessian(theta, data, gamma_zero=gz)


def curvature_matrix(delta: DeltaMatrix, hess: np.ndarray) -> np.ndarray:
    """F = Delta' (-Ldd)^{-1} Delta, the PSD kernel of all curvatures."""
    sol = solve_spd(-hess, delta.entries)
    f = delta.entries.T @ sol
    return 0.5 * (f + f.T)


def _check_unit(l: np.ndarray, n: int) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    if l.shape != (n,):
        raise ValueError("direction has wrong length")
    if abs(np.linalg.norm(l) - 1.0) > 1e-10:
        raise ValueError("direction must have unit Euclidean norm")
    return l


def curvature_normal(delta: DeltaMatrix, hess: np.ndarray, l: np.ndarray) -> float:
    """Normal curvature C_l = -2 l' Delta' Ldd^{-1} Delta l (nonnegative at a
    proper maximum)."""
    l = _check_unit(l, delta.entries.shape[1])
    v = delta.entries @ l
    return float(2.0 * v @ solve_spd(-hess, v))


def curvature_conformal(delta: DeltaMatrix, hess: np.ndarray, l: np.ndarray) -> float:
    """Conformal normal curvature, in [0, 1]; invariant under the rescaling
    (Delta, Ldd) -> (sqrt(c) Delta, c Ldd)."""
    l = _check_unit(l, delta.entries.shape[1])
    f = curvature_matrix(delta, hess)
    denom = float(np.sqrt(np.sum(f * f)))
    if denom <= 0.0:
        raise ValueError("degenerate perturbation: tr[(Delta' Ldd^-1 Delta)^2] = 0")
    return float(l @ f @ l) / denom


def default_q(lambda_star: np.ndarray, n: int) -> int:
    """Largest integer q in [1, sqrt(n)) with at least one q-influential
    direction (falls back to 1 when even q=1 flags nothing)."""
    top = float(lambda_star[0]) if len(lambda_star) else 0.0
    q = int(math.floor(top * math.sqrt(n)))
    limit = int(math.ceil(math.sqrt(n))) - 1
    return max(1, min(q, limit))


def influence_report(delta: DeltaMatrix, hess: np.ndarray,
                     q: Optional[int] = None) -> InfluenceReport:
    """Eigenvalue analysis of the curvature kernel.

    Normalized eigenvalues lambda* (unit sum of squares), the count k of
    q-influential directions (lambda* >= q/sqrt(n)), aggregate contributions
    B_j(q) = sum_{i<=k} lambda*_i v_{ji}^2, and the benchmark
    b(q) = (1/n) sum_{i<=k} lambda*_i. Flagged observations are reported with
    1-based numbers.
    """
    n = delta.entries.shape[1]
    f = curvature_matrix(delta, hess)
    lam, vecs = sym_eigen(f)
    norm = float(np.sqrt(np.sum(lam * lam)))
    if norm <= 0.0:
        raise ValueError("degenerate perturbation: zero curvature spectrum")
    lam_star = lam / norm
    if q is None:
        q = default_q(lam_star, n)
    if not 1 <= q < math.sqrt(n):
        raise ValueError(f"q must satisfy 1 <= q < sqrt(n) = {math.sqrt(n):.3f}")
    threshold = q / math.sqrt(n)
    k = int(np.sum(lam_star >= threshold))
    contrib = (vecs[:, :k] ** 2) @ lam_star[:k] if k else np.zeros(n)
    benchmark = float(np.sum(lam_star[:k])) / n
    flagged = tuple(int(j) + 1 for j in np.nonzero(contrib >= benchmark)[0]) if k else ()
    return InfluenceReport(
        normalized_eigenvalues=lam_star,
        eigenvectors=vecs,
        q=int(q),
        k=k,
        contributions=contrib,
        benchmark=benchmark,
        flagged=flagged,
    )


def _newton_refine(grad, hess_fn, x0, feasible, tol=1e-7, max_iter=80):
    """Score-equation Newton solver with a gradient-norm line search.

    Near a maximum the objective changes by less than float noise, so step
    acceptance is judged on the gradient norm alone (monotone decrease),
    which stays meaningful down to machine precision.
    """
    x = np.asarray(x0, dtype=float).copy()
    g = grad(x)
    gn = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if gn < tol:
            return x, True
        try:
            d = solve_spd(-hess_fn(x), g)
        except SpdSolveError:
            return x, False
        t = 1.0
        moved = False
        while t >= 1e-12:
            cand = x + t * d
            if feasible(cand):
                gc = grad(cand)
                gcn = float(np.max(np.abs(gc)))
                if np.all(np.isfinite(gc)) and gcn < gn:
                    x, g, gn = cand, gc, gcn
                    moved = True
                    break
            t *= 0.5
        if not moved:
            return x, gn < 10 * tol
    return x, gn < tol


def _perturbed_refit(fit: FitResult, data: RegressionData, omega: np.ndarray,
                     scheme: PerturbationScheme) -> ThetaParams:
    """MLE under the perturbed model, started from the unperturbed MLE.

    Full Newton steps with the analytic Hessian: the start point is already
    excellent and the displacement needs the stationary point located to high
    accuracy (its value is second-order insensitive to the residual gradient).
    """
    theta0, gz = _fit_theta_and_mode(fit)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (data.n,):
        raise ValueError("omega has wrong length")

    weights = None
    pdata = data
    if isinstance(scheme, CaseWeights):
        weights = omega
    elif isinstance(scheme, ResponsePerturbation):
        pdata = RegressionData(data.y + omega * scheme.scale(data), data.X, data.labels)
    elif isinstance(scheme, CovariatePerturbation):
        X = data.X.copy()
        X[:, scheme.column] = X[:, scheme.column] + omega * scheme.scale(data)
        pdata = RegressionData(data.y, X, data.labels)
    else:
        raise TypeError(f"unknown perturbation scheme: {scheme!r}")

    if gz:
        def grad(v):
            return score(ThetaParams(v[:-1], v[-1], 0.0), pdata,
                         weights=weights, gamma_zero=True)

        def hess_fn(v):
            return hessian(ThetaParams(v[:-1], v[-1], 0.0), pdata,
                           weights=weights, gamma_zero=True)

        def feas(v):
            return 1e-8 < v[-1] <= 2.0

        v0 = np.concatenate([theta0.beta, [theta0.alpha]])
        x, ok = _newton_refine(grad, hess_fn, v0, feas)
        if not ok:
            raise RuntimeError(f"perturbed refit diverged for omega={omega!r}")
        return ThetaParams(x[:-1], float(x[-1]), 0.0)

    def grad(v):
        return score(ThetaParams.from_vector(v), pdata, weights=weights)

    def hess_fn(v):
        return hessian(ThetaParams.from_vector(v), pdata, weights=weights)

    def feas(v):
        return _vector_feasible(v, pdata)

    x, ok = _newton_refine(grad, hess_fn, theta0.as_vector(), feas)
    if not ok:
        raise RuntimeError(f"perturbed refit diverged for omega={omega!r}")
    return ThetaParams.from_vector(x)


def likelihood_displacement(fit: FitResult, data: RegressionData,
                            omega: np.ndarray,
                            scheme: PerturbationScheme) -> float:
    """g(omega) = 2 [l(theta_hat) - l(theta_hat_omega)], both terms under the
    unperturbed likelihood; nonnegative since theta_hat maximizes it."""
    _check_fit_usable(fit)
    theta_w = _perturbed_refit(fit, data, omega, scheme)
    return 2.0 * (fit.loglik - loglik(theta_w, data))


def deletion_impact(data: RegressionData, fit: FitResult, index: int) -> DeletionImpact:
    """Refit without observation ``index`` (1-based) and report the percent
    rate of change of every parameter estimate."""
    if not 1 <= index <= data.n:
        raise ValueError(f"observation number out of range: {index}")
    if data.n - 1 <= data.p:
        raise ValueError("too few observations would remain after deletion")
    reduced = data.drop(index - 1)
    if fit.gamma_zero_mode:
        refit = _fit_gamma_zero(reduced, fit.theta_hat,
                                OptimOptions(max_iterations=400, gradient_tolerance=1e-7))
    else:
        refit = fit_mle(reduced, init=fit.theta_hat)
    if not refit.converged:
        raise RuntimeError(f"refit after deleting observation {index} diverged")
    base = fit.theta_vector()
    new = refit.theta_vector()[: base.size]
    rate = (new - base) / np.abs(base) * 100.0
    names = tuple(f"beta{j}" for j in range(data.p)) + (("alpha",) if fit.gamma_zero_mode
                                                        else ("alpha", "gamma"))
    return DeletionImpact(index=int(index), refit=refit,
                          rate_of_change=rate, parameter_names=names)
