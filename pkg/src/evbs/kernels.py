"""Numerical foundations: quasi-Newton maximization, symmetric eigensolver,
SPD solves, finite-difference derivatives, and reproducible random streams.

Everything here is pure given its inputs; no module-level mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class KernelError(Exception):
    """Base class for numeric-kernel failures."""


class OptimizationError(KernelError):
    """Non-finite objective or gradient at an accepted iterate."""


class SpdSolveError(KernelError):
    """Factorization hit a non-positive pivot; carries the pivot index."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} = {value:.3e} "
            "(Hessian is not negative definite at this point?)"
        )


@dataclass(frozen=True)
class OptimOptions:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8   # inf-norm of the gradient
    step_tolerance: float = 1e-12      # relative inf-norm of the accepted step
    contraction: float = 0.5           # backtracking ratio, in (0, 1)
    sufficient_decrease: float = 1e-4  # Armijo constant
    max_backtracks: int = 60

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.gradient_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.contraction < 1.0:
            raise ValueError("contraction must lie in (0, 1)")


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    grad_norm: float
    message: str = ""


def maximize(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    feasible: Optional[Callable[[np.ndarray], bool]] = None,
    options: Optional[OptimOptions] = None,
) -> OptimResult:
    """Maximize a smooth function with BFGS and a backtracking Armijo search.

    ``feasible`` describes an open region: trial points outside it (or where
    the objective is non-finite) are treated as overshoots and the step is
    shortened. Non-finite values at an *accepted* point abort loudly.
    """
    opts = options or OptimOptions()
    x = np.asarray(start, dtype=float).copy()
    if feasible is not None and not feasible(x):
        raise OptimizationError("start point is infeasible")

    # Work on phi = -objective so the update algebra below is the textbook one.
    def phi(p):
        return -objective(p)

    def gphi(p):
        return -np.asarray(gradient(p), dtype=float)

    f = phi(x)
    if not np.isfinite(f):
        raise OptimizationError("objective is non-finite at the start point")
    g = gphi(x)
    if not np.all(np.isfinite(g)):
        raise OptimizationError("gradient is non-finite at the start point")

    n = x.size
    hinv = np.eye(n)
    iterations = 0
    converged = False
    message = "iteration cap reached"

    def backtrack(xc, fc_base, d, slope):
        t = 1.0
        for _ in range(opts.max_backtracks):
            cand = xc + t * d
            if feasible is None or feasible(cand):
                fc = phi(cand)
                if np.isfinite(fc) and fc <= fc_base + opts.sufficient_decrease * t * slope:
                    return cand, fc, t
            t *= opts.contraction
        return None

    stalls = 0
    for iterations in range(1, opts.max_iterations + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < opts.gradient_tolerance:
            converged = True
            message = "gradient tolerance reached"
            break

        d = -hinv @ g
        steepest = False
        if d @ g >= 0.0:  # curvature approximation went bad
            hinv = np.eye(n)
            d = -g
            steepest = True

        hit = backtrack(x, f, d, float(d @ g))
        if hit is None and not steepest:
            # BFGS direction unusable (often a feasibility boundary):
            # discard curvature and retry along the gradient
            hinv = np.eye(n)
            d = -g
            steepest = True
            hit = backtrack(x, f, d, float(d @ g))
        if hit is None:
            message = "line search failed to find an acceptable step"
            break
        cand, fc, t = hit

        tiny = np.max(np.abs(t * d)) < opts.step_tolerance * (1.0 + np.max(np.abs(x)))
        if tiny:
            stalls += 1
            if steepest or stalls >= 3:
                x, f = cand, fc
                g = gphi(x)
                converged = float(np.max(np.abs(g))) < opts.gradient_tolerance
                message = "step tolerance reached"
                break
            # tiny quasi-Newton step with a large gradient: restart curvature
            hinv = np.eye(n)
        else:
            stalls = 0

        gnew = gphi(cand)
        if not np.all(np.isfinite(gnew)):
            raise OptimizationError("gradient is non-finite at an accepted point")

        s = t * d
        yv = gnew - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            hy = hinv @ yv
            # BFGS inverse update (Sherman-Morrison form)
            hinv = (
                hinv
                + np.outer(s, s) * (rho + rho * rho * float(yv @ hy))
                - rho * (np.outer(hy, s) + np.outer(s, hy))
            )
        x, f, g = cand, fc, gnew

    gnorm = float(np.max(np.abs(g)))
    if not converged:
        converged = gnorm < opts.gradient_tolerance
        if converged:
            message = "gradient tolerance reached"
    return OptimResult(x=x, value=-f, converged=converged,
                       iterations=iterations, grad_norm=gnorm, message=message)


def newton_refine(grad, hess_fn, x0, feasible=None, tol: float = 1e-7,
                  max_iter: int = 80):
    """Polish a near-stationary point of a concave objective by full Newton
    steps on the score equation.

    Step acceptance is judged on the gradient inf-norm (monotone decrease),
    not on objective values: near a maximum the objective moves by less than
    float noise while the analytic gradient stays meaningful to machine
    precision. Newton's affine invariance also makes this immune to badly
    scaled parameterizations. Returns ``(x, converged)``; bails out cleanly
    when the negated Hessian stops being positive definite.
    """
    x = np.asarray(x0, dtype=float).copy()
    g = np.asarray(grad(x), dtype=float)
    gn = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if gn < tol:
            return x, True
        try:
            d = solve_spd(-np.asarray(hess_fn(x), dtype=float), g)
        except SpdSolveError:
            return x, False
        t = 1.0
        moved = False
        while t >= 1e-12:
            cand = x + t * d
            if feasible is None or feasible(cand):
                gc = np.asarray(grad(cand), dtype=float)
                gcn = float(np.max(np.abs(gc)))
                if np.all(np.isfinite(gc)) and gcn < gn:
                    x, g, gn = cand, gc, gcn
                    moved = True
                    break
            t *= 0.5
        if not moved:
            return x, gn < tol
    return x, gn < tol


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sym_eigen(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted by
    descending absolute value and eigenvectors as the matching orthonormal
    columns. Each eigenvector's largest-magnitude coordinate is made positive
    so repeated runs produce identical output.
    """
    a = _check_symmetric(m)
    n = a.shape[0]
    v = np.eye(n)
    fro = max(np.linalg.norm(a), 1.0)

    for _ in range(max_sweeps):
        off_sq = np.sum(a * a) - np.sum(np.diag(a) ** 2)
        off = np.sqrt(max(off_sq, 0.0))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) if tau != 0 else 1.0
                t = t / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise KernelError("Jacobi sweeps did not converge")

    lam = np.diag(a).copy()
    order = np.argsort(-np.abs(lam), kind="stable")
    lam = lam[order]
    v = v[:, order]
    for j in range(n):
        k = int(np.argmax(np.abs(v[:, j])))
        if v[k, j] < 0:
            v[:, j] = -v[:, j]
    return lam, v


def solve_spd(m: np.ndarray, rhs: np.ndarray, pivot_tol: float = 1e-12) -> np.ndarray:
    """Solve m x = rhs for symmetric positive definite m via Cholesky.

    Raises :class:`SpdSolveError` naming the first pivot that falls below
    ``pivot_tol`` relative to the largest diagonal entry.
    """
    a = _check_symmetric(m)
    n = a.shape[0]
    b = np.asarray(rhs, dtype=float)
    vector_rhs = b.ndim == 1
    if vector_rhs:
        b = b[:, None]
    if b.shape[0] != n:
        raise ValueError("rhs has incompatible shape")

    scale = max(float(np.max(np.abs(np.diag(a)))), 1e-300)
    low = np.zeros((n, n))
    for k in range(n):
        d = a[k, k] - low[k, :k] @ low[k, :k]
        if d <= pivot_tol * scale:
            raise SpdSolveError(k, float(d))
        low[k, k] = np.sqrt(d)
        if k + 1 < n:
            low[k + 1:, k] = (a[k + 1:, k] - low[k + 1:, :k] @ low[k, :k]) / low[k, k]

    y = np.zeros_like(b)
    for k in range(n):
        y[k] = (b[k] - low[k, :k] @ y[:k]) / low[k, k]
    x = np.zeros_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (y[k] - low[k + 1:, k] @ x[k + 1:]) / low[k, k]
    return x[:, 0] if vector_rhs else x


def spd_inverse(m: np.ndarray, pivot_tol: float = 1e-12) -> np.ndarray:
    inv = solve_spd(m, np.eye(np.asarray(m).shape[0]), pivot_tol=pivot_tol)
    return 0.5 * (inv + inv.T)


def fd_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float = 1e-6,
    feasible: Optional[Callable[[np.ndarray], bool]] = None,
):
    """Central-difference gradient with per-coordinate step h*max(1, |x_i|).

    Coordinates whose central stencil leaves the feasible region fall back to
    a one-sided difference; the returned mask flags them.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    grad = np.zeros(n)
    onesided = np.zeros(n, dtype=bool)
    f0 = None
    for i in range(n):
        hi = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        ok_p = feasible is None or feasible(xp)
        ok_m = feasible is None or feasible(xm)
        if ok_p and ok_m:
            grad[i] = (f(xp) - f(xm)) / (2.0 * hi)
        elif ok_p or ok_m:
            if f0 is None:
                f0 = f(x)
            side = xp if ok_p else xm
            grad[i] = (f(side) - f0) / (hi if ok_p else -hi)
            onesided[i] = True
        else:
            raise KernelError(f"finite-difference stencil infeasible on both sides (coordinate {i})")
    return grad, onesided


def fd_jacobian(
    f: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    h: float = 1e-6,
    feasible: Optional[Callable[[np.ndarray], bool]] = None,
):
    """Jacobian of a vector function by the same stencil as :func:`fd_gradient`.

    Returns ``(J, onesided)`` with ``J[i, j] = d f_i / d x_j``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    onesided = np.zeros(n, dtype=bool)
    f0 = None
    for j in range(n):
        hj = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        ok_p = feasible is None or feasible(xp)
        ok_m = feasible is None or feasible(xm)
        if ok_p and ok_m:
            cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * hj))
        elif ok_p or ok_m:
            if f0 is None:
                f0 = np.asarray(f(x))
            side = xp if ok_p else xm
            cols.append((np.asarray(f(side)) - f0) / (hj if ok_p else -hj))
            onesided[j] = True
        else:
            raise KernelError(f"finite-difference stencil infeasible on both sides (coordinate {j})")
    return np.column_stack(cols), onesided


class RngState:
    """Reproducible random stream: a fixed counter-based generator (Philox)
    keyed by a 64-bit seed. The same seed yields a bit-identical stream on
    every platform; uniforms are derived from the integer path only.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def uniform_open(self, n: int) -> np.ndarray:
        """n uniforms on the open interval (0, 1), integer path: k / 2**53
        with k drawn uniformly from {1, ..., 2**53 - 1}."""
        k = self._gen.integers(1, 1 << 53, size=int(n), dtype=np.int64)
        return k / float(1 << 53)

    def substream(self, index: int) -> "RngState":
        """Independent stream for a worker/replica: seed XOR index."""
        return RngState(self.seed ^ int(index))

    def shuffle_choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), order-stable given the stream."""
        return self._gen.permutation(n)[:k]
