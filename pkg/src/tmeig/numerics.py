"""Dense linear algebra, quadrature and Gaussian densities shared by the
rest of the package."""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DecompositionError, InsufficientSamplesError

LOG_2PI = float(np.log(2.0 * np.pi))


class EigenPair(NamedTuple):
    """Eigenvalues in descending order and matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def _potrf(a):
    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    return factor, int(info)


def cholesky(a, jitter=True):
    """Lower Cholesky factor of a symmetric matrix.

    On failure a single diagonal jitter of ``1e-12 * trace / n`` is added
    and the factorization retried. Raises :class:`DecompositionError`
    naming the failing pivot if that also fails.
    """
    a = symmetrize(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DecompositionError("matrix has non-finite entries")
    factor, info = _potrf(a)
    if info == 0:
        return factor
    if jitter:
        n = a.shape[0]
        eps = 1e-12 * max(np.trace(a), 0.0) / n
        if eps > 0:
            factor, info2 = _potrf(a + eps * np.eye(n))
            if info2 == 0:
                return factor
            info = info2
    raise DecompositionError(
        f"matrix is not positive definite: failing pivot {info}", pivot=info
    )


def logdet_spd(a):
    """log det of a symmetric positive definite matrix via Cholesky."""
    chol = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def sqrtm_psd(a):
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    w, q = np.linalg.eigh(symmetrize(a))
    w = np.clip(w, 0.0, None)
    return symmetrize((q * np.sqrt(w)) @ q.T)


def sample_covariance(samples):
    """Unbiased (L - 1 normalized) covariance of the rows of ``samples``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {x.shape[0]}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    return symmetrize(cov)


def _sign_fix(vectors):
    # first entry of non-negligible size in each column made positive
    v = vectors.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    return v


def generalized_eigendecomposition(a, b) -> EigenPair:
    """Solve ``A v = lam B v`` for symmetric A and SPD B.

    Reduces to a standard symmetric problem through the Cholesky factor of
    B. Returns values in descending order with ``V^T B V = I``.
    """
    a = symmetrize(a)
    b = symmetrize(b)
    if a.shape != b.shape:
        raise ValueError(f"pencil shapes differ: {a.shape} vs {b.shape}")
    chol = cholesky(b)
    tmp = solve_triangular(chol, a, lower=True)
    c = solve_triangular(chol, tmp.T, lower=True)
    w, q = np.linalg.eigh(symmetrize(c))
    order = np.argsort(w)[::-1]
    w, q = w[order], q[:, order]
    v = solve_triangular(chol.T, q, lower=False)
    return EigenPair(w, _sign_fix(v))


def symmetric_eigendecomposition(a) -> EigenPair:
    """Eigenpairs of a symmetric matrix in descending order."""
    w, q = np.linalg.eigh(symmetrize(a))
    order = np.argsort(w)[::-1]
    return EigenPair(w[order], _sign_fix(q[:, order]))


@lru_cache(maxsize=64)
def _legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    if int(order) != order or order < 1:
        raise ValueError(f"quadrature order must be a positive integer, got {order!r}")
    if a > b:
        raise ValueError(f"interval is reversed: [{a}, {b}]")
    x, w = _legendre(int(order))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


@lru_cache(maxsize=128)
def _cached_factor(buf, n):
    cov = np.frombuffer(buf, dtype=float).reshape(n, n)
    chol = cholesky(cov)
    chol.setflags(write=False)
    return chol, 2.0 * float(np.sum(np.log(np.diag(chol))))


def gaussian_logpdf(z, mean, cov):
    """log N(z; mean, cov); ``z`` may be a single point or rows of points."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = cov.shape[0]
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    zz = np.atleast_2d(z.reshape(1, -1) if single else z)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (n,))
    if zz.shape[1] != n:
        raise ValueError(f"point dimension {zz.shape[1]} does not match covariance {n}")
    chol, logdet = _cached_factor(np.ascontiguousarray(symmetrize(cov)).tobytes(), n)
    white = solve_triangular(chol, (zz - mean).T, lower=True)
    out = -0.5 * np.sum(white**2, axis=0) - 0.5 * (n * LOG_2PI + logdet)
    return float(out[0]) if single else out


def standard_normal_logpdf(z):
    """Row-wise log density of the standard normal; 1-D input is one point."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return float(-0.5 * (z @ z) - 0.5 * z.size * LOG_2PI)
    return -0.5 * np.sum(z**2, axis=1) - 0.5 * z.shape[1] * LOG_2PI


def quadratic_form_moments(cov_x, cov_form):
    """Mean and variance of ``(X - mu)^T cov_form^{-1} (X - mu)`` for
    ``X ~ N(mu, cov_x)``.

    The quadratic form is a weighted sum of independent chi-square(1)
    variables with weights given by the generalized eigenvalues of the
    pencil ``(cov_x, cov_form)``, so the variance is ``2 * sum(lam**2)``.
    """
    cov_x = np.atleast_2d(np.asarray(cov_x, dtype=float))
    cov_form = np.atleast_2d(np.asarray(cov_form, dtype=float))
    if cov_x.shape != cov_form.shape:
        raise ValueError(f"dimension mismatch: {cov_x.shape} vs {cov_form.shape}")
    lam = generalized_eigendecomposition(cov_x, cov_form).values
    return float(np.sum(lam)), float(2.0 * np.sum(lam**2))
