"""Closed-form FIR parameter estimation with condition-capped ridge.

The least-squares and ridge solutions are computed by Cholesky
factorization of the Gram matrix.  The ridge weight is not tuned by
cross-validation; it is the smallest value that caps the Gram matrix
condition number at ``c_lim``:

    rho = 0                                   if kappa <= c_lim
    rho = (l_max - l_min * c_lim)/(c_lim - 1) otherwise

which lands the regularized condition number exactly on ``c_lim``.
Eigenvalue extremes come from a cyclic Jacobi sweep; on positive
(semi-)definite matrices Jacobi resolves small eigenvalues to high
relative accuracy, which the rho rule needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import RegressionMatrices
from .errors import ConfigError, DataError, NumericalError

DEFAULT_C_LIM = 1.0e6

# Relative floor below which a Gram eigenvalue is treated as exactly zero
# (rank deficiency).  Treating a tiny positive estimate as zero can only
# enlarge rho, which keeps the condition-number cap on the safe side.
_RANK_TOL = 1.0e-12


@dataclass(frozen=True)
class EigenExtremes:
    """Largest and smallest eigenvalues of a symmetric PSD matrix."""

    lambda_max: float
    lambda_min: float


@dataclass(frozen=True)
class RidgeSolution:
    """Ridge estimate with the regularization bookkeeping that produced it."""

    theta: np.ndarray
    sigma2: float
    rho: float
    kappa_before: float
    kappa_after: float
    c_lim: float

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        theta.flags.writeable = False


def cholesky_factor(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L' = a; fails on non-positive pivots."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DataError(f"matrix must be square, got shape {a.shape}")
    scale = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    tol = n * np.finfo(float).eps * scale
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= tol:
            raise NumericalError(
                f"non-positive pivot {pivot:.3e} at column {j}; matrix is not "
                "positive definite within tolerance"
            )
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for symmetric positive-definite a via Cholesky."""
    lower = cholesky_factor(a)
    b = np.asarray(b, dtype=float)
    n = lower.shape[0]
    z = np.zeros(n)
    for i in range(n):  # forward substitution
        z[i] = (b[i] - lower[i, :i] @ z[:i]) / lower[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):  # back substitution
        x[i] = (z[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def jacobi_eigenvalues(a: np.ndarray, off_tol: float = 1.0e-14, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius norm falls below
    ``off_tol`` times the matrix norm.  Returns eigenvalues ascending.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DataError(f"matrix must be square, got shape {a.shape}")
    norm = math.sqrt(float((a * a).sum()))
    asym = float(np.max(np.abs(a - a.T))) if n else 0.0
    if asym > 1.0e-10 * max(norm, 1.0e-300):
        raise DataError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    if n == 1:
        return a[0, :1].copy()
    if norm == 0.0:
        return np.zeros(n)
    a = 0.5 * (a + a.T)
    skip = 1.0e-300
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float((np.triu(a, 1) ** 2).sum()))
        if off <= off_tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
    else:
        raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    return np.sort(np.diag(a))


def eigen_extremes(gram: np.ndarray) -> EigenExtremes:
    """Extreme eigenvalues of a symmetric PSD matrix.

    Round-off can push the smallest eigenvalue of a PSD matrix slightly
    negative; such values are floored at zero.  A clearly negative
    eigenvalue means the input was not PSD.
    """
    eigs = jacobi_eigenvalues(gram)
    l_min, l_max = float(eigs[0]), float(eigs[-1])
    if l_min < 0.0:
        if l_min < -1.0e-8 * max(l_max, 1.0e-300):
            raise NumericalError(
                f"matrix is not positive semidefinite (lambda_min={l_min:.3e})"
            )
        l_min = 0.0
    return EigenExtremes(lambda_max=l_max, lambda_min=l_min)


def select_rho(ext: EigenExtremes, c_lim: float) -> float:
    """Smallest ridge weight capping the Gram condition number at c_lim.

    A lambda_min at or below the rank tolerance is treated as exactly
    zero (condition number infinite), which keeps the cap safe when the
    eigensolver reports a tiny value for a singular matrix.
    """
    if c_lim <= 1.0:
        raise ConfigError(f"c_lim must exceed 1, got {c_lim}")
    l_max = ext.lambda_max
    l_min = ext.lambda_min
    if l_max <= 0.0:
        return 0.0  # zero matrix: nothing to regularize
    if l_min <= _RANK_TOL * l_max:
        l_min = 0.0
    kappa = math.inf if l_min == 0.0 else l_max / l_min
    if kappa <= c_lim:
        return 0.0
    return (l_max - l_min * c_lim) / (c_lim - 1.0)


def ridge_solve(m: RegressionMatrices, rho: float) -> np.ndarray:
    """Solve the ridge normal equations (Phi'Phi + rho I) theta = Phi'y."""
    gram = m.phi.T @ m.phi
    if rho != 0.0:
        gram = gram + rho * np.eye(gram.shape[0])
    return solve_spd(gram, m.phi.T @ m.y)


def mle_fit(m: RegressionMatrices) -> np.ndarray:
    """Unregularized least-squares estimate of the FIR parameters."""
    try:
        return ridge_solve(m, 0.0)
    except NumericalError as e:
        raise NumericalError(
            f"gram matrix is ill-conditioned ({e}); use ridge_fit"
        ) from e


def estimate_variance(m: RegressionMatrices, theta: np.ndarray) -> float:
    """Residual variance, normalized by the regression degrees of freedom."""
    dof = m.n_rows - m.n_params
    if dof <= 0:
        raise DataError(
            f"insufficient data for variance estimate: {m.n_rows} rows, "
            f"{m.n_params} parameters"
        )
    r = m.y - m.phi @ np.asarray(theta, dtype=float)
    return float(r @ r) / dof


def ridge_fit(m: RegressionMatrices, c_lim: float = DEFAULT_C_LIM) -> RidgeSolution:
    """Ridge estimate with rho chosen by the condition-number rule."""
    if m.n_rows <= 0:
        raise DataError("regression needs at least one row")
    gram = m.phi.T @ m.phi
    ext = eigen_extremes(gram)
    rho = select_rho(ext, c_lim)
    theta = ridge_solve(m, rho)
    sigma2 = estimate_variance(m, theta)
    if ext.lambda_max <= 0.0:
        kappa_before = math.inf
        kappa_after = math.inf
    else:
        l_min = ext.lambda_min
        if l_min <= _RANK_TOL * ext.lambda_max:
            l_min = 0.0
        kappa_before = math.inf if l_min == 0.0 else ext.lambda_max / l_min
        kappa_after = (ext.lambda_max + rho) / (l_min + rho) if (l_min + rho) > 0 else math.inf
    return RidgeSolution(
        theta=theta,
        sigma2=sigma2,
        rho=rho,
        kappa_before=kappa_before,
        kappa_after=kappa_after,
        c_lim=c_lim,
    )
