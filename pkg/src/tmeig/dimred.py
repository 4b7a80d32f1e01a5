"""Linear dimension reduction for EIG estimation.

CMI bases come from gradient diagnostics of the forward model and minimize
an upper bound on the mutual information lost by projecting; PCA and CCA are
the covariance-only baselines.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DecompositionError
from .estimators import EigEstimate, _fmt, allocate
from .models import (
    JointSampleSet,
    LinearGaussianModel,
    closed_form_eig,
    gaussian_mutual_information,
    sample_joint,
)
from .numerics import (
    cholesky,
    gaussian_logpdf,
    sample_covariance,
    sqrtm_psd,
    symmetric_eigendecomposition,
    symmetrize,
)
from .seeding import derive_seed, make_rng
from .training import fit_block_map
from .transport import MultiIndexSet

METHODS = ("CMI", "PCA", "CCA")
DIMRED_HEADER = ("method", "r", "s", "replicate", "seed", "value", "exact_projected", "bound")

# relative eigenvalue floor below which a covariance direction counts as null
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class DiagnosticPair:
    """Whitened diagnostic matrices for parameters (``H_x``) and data (``H_y``).

    ``H_x_raw`` is the unwhitened expected Fisher term ``E[J^T Se^-1 J]``,
    kept so CMI bases never need an inverse square root of the prior
    covariance.
    """

    H_x: np.ndarray
    H_y: np.ndarray
    n_mc: int
    H_x_raw: np.ndarray
    prior_sqrt: np.ndarray
    noise_sqrt: np.ndarray


def diagnostic_matrices(model, n_mc=500, seed=0):
    """Prior average of the whitened gradient outer products.

    Models with a constant Jacobian get the exact single-term value.
    """
    if not getattr(model, "has_gradient", False):
        raise CapabilityError("diagnostic matrices need forward-model gradients")
    W = sqrtm_psd(model.prior_cov)
    Se = model.noise_cov
    Se_sqrt = sqrtm_psd(Se)
    Se_isqrt = np.linalg.inv(Se_sqrt)
    Se_inv = Se_isqrt @ Se_isqrt
    if isinstance(model, LinearGaussianModel):
        J = model.jacobian()[None]
        n_used = 1
    else:
        x = model.sample_prior(int(n_mc), make_rng(seed, "diagnostics"))
        J = np.asarray(model.jacobian(x))
        n_used = int(n_mc)
    raw = symmetrize(np.einsum("lji,jk,lkm->im", J, Se_inv, J) / J.shape[0])
    HY = np.einsum("lij,jk,lmk->im", J, model.prior_cov, J) / J.shape[0]
    return DiagnosticPair(
        H_x=symmetrize(W @ raw @ W),
        H_y=symmetrize(Se_isqrt @ HY @ Se_isqrt),
        n_mc=n_used,
        H_x_raw=raw,
        prior_sqrt=W,
        noise_sqrt=Se_sqrt,
    )


@dataclass(frozen=True)
class ProjectionBasis:
    method: str
    U: np.ndarray
    V: np.ndarray
    lam_x: np.ndarray
    lam_y: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown reduction method {self.method!r}")

    @property
    def n_x(self):
        return self.U.shape[0]

    @property
    def n_y(self):
        return self.V.shape[0]

    def reduced(self, r, s):
        _check_rs(self, r, s)
        return self.U[:, :r], self.V[:, :s]


def _check_rs(basis, r, s):
    if not (1 <= r <= basis.n_x and 1 <= s <= basis.n_y):
        raise ValueError(f"(r, s)=({r}, {s}) outside [1, {basis.n_x}] x [1, {basis.n_y}]")


def _pinv_sqrt(cov):
    """Rank-truncated inverse square root of a PSD matrix."""
    vals, vecs = np.linalg.eigh(symmetrize(cov))
    keep = vals > _RANK_TOL * max(vals.max(), 0.0)
    if not np.any(keep):
        raise DecompositionError("covariance has no positive eigenvalues")
    inv = np.where(keep, 1.0 / np.sqrt(np.where(keep, vals, 1.0)), 0.0)
    return (vecs * inv) @ vecs.T


def cmi_basis(pair: DiagnosticPair):
    """Leading eigenvectors of the whitened diagnostics mapped back to the
    original coordinates, normalized so ``U^T Sx U = I`` and ``V^T Se V = I``."""
    ex = symmetric_eigendecomposition(pair.H_x)
    ey = symmetric_eigendecomposition(pair.H_y)
    lam_x = np.clip(ex.values, 0.0, None)
    lam_y = np.clip(ey.values, 0.0, None)
    # u = Sx^{-1/2} u~ without forming the inverse: H~ u~ = lam u~ gives
    # Sx^{-1/2} u~ = H_raw W u~ / lam. Null directions fall back to a pseudo-inverse.
    tol = _RANK_TOL * max(lam_x.max(), 1e-300)
    W_pinv = _pinv_sqrt(pair.prior_sqrt @ pair.prior_sqrt)
    U = np.empty_like(ex.vectors)
    for i in range(U.shape[1]):
        ut = ex.vectors[:, i]
        if lam_x[i] > tol:
            U[:, i] = pair.H_x_raw @ (pair.prior_sqrt @ ut) / lam_x[i]
        else:
            U[:, i] = W_pinv @ ut
    V = np.linalg.solve(pair.noise_sqrt, ey.vectors)
    return ProjectionBasis("CMI", U, V, lam_x, lam_y)


def pca_basis(cov_x, cov_y):
    ex = symmetric_eigendecomposition(cov_x)
    ey = symmetric_eigendecomposition(cov_y)
    return ProjectionBasis("PCA", ex.vectors, ey.vectors, ex.values, ey.values)


def cca_basis(cov_x, cov_xy, cov_y):
    """Canonical directions: ``Sxy Sy^-1 Syx u = rho Sx u`` and
    ``Syx Sx^-1 Sxy v = rho Sy v``.

    A singular ``Sx`` is whitened with its rank-truncated pseudo-inverse
    square root, ``Sy`` must be nonsingular.
    """
    try:
        cholesky(cov_y, jitter=False)
    except DecompositionError as exc:
        raise DecompositionError(f"CCA needs a nonsingular data covariance: {exc}") from exc
    Wx = _pinv_sqrt(cov_x)
    Wy = _pinv_sqrt(cov_y)
    P, d, Qt = np.linalg.svd(Wx @ cov_xy @ Wy)
    rho_x = np.zeros(cov_x.shape[0])
    rho_x[: d.size] = d**2
    rho_y = np.zeros(cov_y.shape[0])
    rho_y[: d.size] = d**2
    U = Wx @ P
    V = Wy @ Qt.T
    # directions with no covariance (pseudo-inverse null space) get unit scale
    for i in range(U.shape[1]):
        if not np.any(U[:, i]):
            U[:, i] = P[:, i]
    return ProjectionBasis("CCA", _sign_cols(U), _sign_cols(V), rho_x, rho_y)


def _sign_cols(A):
    A = A.copy()
    for j in range(A.shape[1]):
        nz = np.flatnonzero(np.abs(A[:, j]) > 1e-14 * np.abs(A[:, j]).max(initial=0.0))
        if nz.size and A[nz[0], j] < 0:
            A[:, j] = -A[:, j]
    return A


def reduction_basis(method, *, pair=None, cov_x=None, cov_xy=None, cov_y=None, model=None):
    """Dispatch to the CMI, PCA or CCA construction.

    A linear-Gaussian ``model`` supplies exact covariances for PCA and CCA.
    """
    if model is not None and isinstance(model, LinearGaussianModel):
        cov_x = model.prior_cov if cov_x is None else cov_x
        cov_xy = model.cross_cov if cov_xy is None else cov_xy
        cov_y = model.data_cov if cov_y is None else cov_y
    if method == "CMI":
        if pair is None:
            if model is None:
                raise ValueError("CMI needs diagnostic matrices or a model")
            pair = diagnostic_matrices(model)
        return cmi_basis(pair)
    if method == "PCA":
        if cov_x is None or cov_y is None:
            raise ValueError("PCA needs the parameter and data covariances")
        return pca_basis(cov_x, cov_y)
    if method == "CCA":
        if cov_x is None or cov_xy is None or cov_y is None:
            raise ValueError("CCA needs all joint covariance blocks")
        return cca_basis(cov_x, cov_xy, cov_y)
    raise ValueError(f"unknown reduction method {method!r}")


def empirical_covariances(x, y):
    z = sample_covariance(np.hstack([x, y]))
    n = x.shape[1]
    return z[:n, :n], z[:n, n:], z[n:, n:]


def project(samples: JointSampleSet, basis: ProjectionBasis, r, s):
    U, V = basis.reduced(r, s)
    return JointSampleSet(samples.X @ U, samples.Y @ V, samples.seed, samples.n_train)


def _trace_outside(H, B):
    if B.shape[1] == 0:
        return float(np.trace(H))
    Q, _ = np.linalg.qr(B)
    return float(np.trace(H) - np.trace(Q.T @ H @ Q))


def truncation_bound(pair: DiagnosticPair, basis: ProjectionBasis, r, s):
    """Diagnostic mass outside the retained whitened subspaces.

    For CMI bases this is the sum of the discarded eigenvalues. The
    log-Sobolev constant is not included, so the value ranks truncations
    rather than bounding the loss in nats.
    """
    if not (0 <= r <= basis.n_x and 0 <= s <= basis.n_y):
        raise ValueError(f"(r, s)=({r}, {s}) out of range")
    if basis.method == "CMI":
        return float(np.sum(basis.lam_x[r:]) + np.sum(basis.lam_y[s:]))
    bx = _trace_outside(pair.H_x, pair.prior_sqrt @ basis.U[:, :r])
    by = _trace_outside(pair.H_y, pair.noise_sqrt @ basis.V[:, :s])
    return max(bx, 0.0) + max(by, 0.0)


def gaussian_eig(*, x=None, y=None, cov_x=None, cov_xy=None, cov_y=None, basis=None, r=None, s=None):
    """MI of the (projected) pair treated as jointly Gaussian.

    Pass samples ``x, y`` for the empirical version or covariance blocks
    for the exact one.
    """
    if x is not None:
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        if basis is not None:
            U, V = basis.reduced(r, s)
            x, y = x @ U, y @ V
        if x.shape[0] < x.shape[1] + y.shape[1] + 2:
            raise ValueError("too few samples for the projected covariance")
        cov_x, cov_xy, cov_y = empirical_covariances(x, y)
    elif basis is not None:
        U, V = basis.reduced(r, s)
        cov_x, cov_xy, cov_y = U.T @ cov_x @ U, U.T @ cov_xy @ V, V.T @ cov_y @ V
    return gaussian_mutual_information(cov_x, cov_xy, cov_y)


def projected_eig_pos(model, basis, r, s, L, p, seed, degree=1, opts=None, data=None):
    """Project, split, train ``pi(x_r | y_s)`` and average
    ``log pi^(x_r | y_s) - log pi(x_r)`` with the exact projected prior."""
    if not getattr(model, "has_prior_density", False):
        raise CapabilityError("projected posterior estimator needs the prior")
    U, V = basis.reduced(r, s)
    n_tr = max(len(MultiIndexSet.total_degree(r + s, degree)) + 1, 2)
    M, N = allocate(L, p, n_tr)
    if data is None:
        data = sample_joint(model, L, seed)
    data = project(data.with_split(N), basis, r, s)
    x_tr, y_tr = data.train
    x_ev, y_ev = data.eval
    bmap, _ = fit_block_map(y_tr, x_tr, degree, opts, ordering="Y-then-X", blocks=("trail",))
    post = bmap.trail.logpdf(np.hstack([y_ev, x_ev]))
    prior_mean = np.asarray(model.prior_mean, dtype=float) @ U
    prior = gaussian_logpdf(x_ev, prior_mean, symmetrize(U.T @ model.prior_cov @ U))
    value = float(np.mean(post - prior))
    return EigEstimate("pos", value, int(L), M, N, seed, None, p)


# -- grid ----------------------------------------------------------------


class DimredTable:
    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def __len__(self):
        return len(self.rows)

    def values(self, method, r, s):
        return np.array(
            [
                row["value"]
                for row in self.rows
                if row["method"] == method and row["r"] == r and row["s"] == s
                and np.isfinite(row["value"])
            ]
        )

    def summary(self, method, r, s):
        v = self.values(method, r, s)
        se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
        return float(v.mean()) if v.size else float("nan"), se

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIMRED_HEADER)
            for row in self.rows:
                w.writerow([_fmt(row[k]) for k in DIMRED_HEADER])

    def aggregates_json(self):
        out = {}
        for row in self.rows:
            key = (row["method"], row["r"], row["s"])
            if key in out:
                continue
            mean, se = self.summary(*key)
            n_ok = self.values(*key).size
            n_all = sum(
                1 for q in self.rows if (q["method"], q["r"], q["s"]) == key
            )
            out[key] = dict(
                mean=mean,
                se=se,
                exact_projected=row["exact_projected"],
                bound=row["bound"],
                n_ok=n_ok,
                n_failed=n_all - n_ok,
            )
        return {f"{m},{r},{s}": v for (m, r, s), v in out.items()}


def _dimred_cell(model, bases, bounds, exacts, r, s, rep, base_seed, L, p, degree):
    seed = derive_seed(base_seed, "dimred", r, s, rep)
    rows = []
    data = sample_joint(model, L, seed)
    for method, basis in bases.items():
        try:
            value = projected_eig_pos(model, basis, r, s, L, p, seed, degree, data=data).value
            error = ""
        except Exception as exc:  # record and continue
            value, error = float("nan"), f"{type(exc).__name__}: {exc}"
        rows.append(
            dict(
                method=method,
                r=r,
                s=s,
                replicate=rep,
                seed=seed,
                value=value,
                exact_projected=exacts.get((method, r, s)),
                bound=bounds[(method, r, s)],
                error=error,
            )
        )
    return rows


def _run(args):
    return _dimred_cell(*args)


def dimred_grid(
    model,
    methods,
    rs_grid,
    replicates,
    L,
    p,
    base_seed=0,
    *,
    degree=1,
    n_mc=500,
    workers=1,
    pilot=None,
):
    """Projected ``pos`` estimates for every method and ``(r, s)``.

    All methods share the joint samples of a replicate. PCA and CCA use
    exact covariances for linear-Gaussian models and ``pilot`` empirical
    samples (``(x, y)``, drawn if absent) otherwise.
    """
    pair = diagnostic_matrices(model, n_mc, derive_seed(base_seed, "diagnostics"))
    covs = {}
    if not isinstance(model, LinearGaussianModel):
        if pilot is None:
            pilot = model.sample(10_000, make_rng(base_seed, "pilot"))
        cx, cxy, cy = empirical_covariances(*pilot)
        covs = dict(cov_x=cx, cov_xy=cxy, cov_y=cy)
    bases = {m: reduction_basis(m, pair=pair, model=model, **covs) for m in methods}
    bounds, exacts = {}, {}
    for m, b in bases.items():
        for r, s in rs_grid:
            bounds[(m, r, s)] = truncation_bound(pair, b, r, s)
            if isinstance(model, LinearGaussianModel):
                U, V = b.reduced(r, s)
                exacts[(m, r, s)] = closed_form_eig(model, U, V)
    cells = [
        (model, bases, bounds, exacts, r, s, rep, base_seed, L, p, degree)
        for r, s in rs_grid
        for rep in range(replicates)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run, cells))
    else:
        results = [_run(c) for c in cells]
    return DimredTable([row for rows in results for row in rows])
