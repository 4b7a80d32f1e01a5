"""Maximum-likelihood fitting of monotone map components."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, UnderdeterminedError
from .seeding import make_rng
from .transport import (
    BlockTriangularMap,
    MonotoneComponent,
    MultiIndexSet,
    TriangularMap,
    softplus_inv,
)

log = logging.getLogger(__name__)


@dataclass
class FitOptions:
    gtol: float = 1e-8
    max_iter: int = 500
    init: str = "affine"  # "affine" least-squares warm start, or "zero"
    quad_order: int = 32


@dataclass
class FitReport:
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    initial_objective: float
    message: str = ""
    cv_scores: dict = field(default_factory=dict)
    degree: int | None = None

    def to_dict(self):
        return asdict(self)


def empirical_objective(comp: MonotoneComponent, samples):
    """Mean over samples of ``0.5 S(z)^2 - log d_k S(z)`` and its gradient
    with respect to the coefficients."""
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    if z.shape[0] < 1:
        raise ValueError("need at least one sample")
    value, grad = comp.features(z).objective(comp.coeffs)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError("map objective is not finite")
    return value, grad


def observed_fisher(comp: MonotoneComponent, samples):
    """Average negative Hessian, in the coefficients, of the per-sample
    log-pullback contribution of this component."""
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    return comp.features(z).hessian(comp.coeffs)


def _affine_warm_start(idx: MultiIndexSet, z):
    """Coefficients making the component the Gaussian (least-squares) KR
    component restricted to whichever affine terms the set contains."""
    ind = idx.indices
    k = ind.shape[1]
    total = ind.sum(axis=1)
    c = np.zeros(len(idx))
    slope = np.flatnonzero((total == 1) & (ind[:, -1] == 1))
    if slope.size == 0:
        return c
    const = np.flatnonzero(total == 0)
    lin = [
        (j, int(np.flatnonzero((total == 1) & (ind[:, j] == 1))[0]))
        for j in range(k - 1)
        if np.any((total == 1) & (ind[:, j] == 1))
    ]
    cols = [np.ones(z.shape[0])] if const.size else []
    cols += [z[:, j] for j, _ in lin]
    target = z[:, -1]
    if cols:
        design = np.column_stack(cols)
        beta, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = target - design @ beta
    else:
        beta = np.zeros(0)
        resid = target
    sd = float(np.sqrt(np.mean(resid**2)))
    if not np.isfinite(sd) or sd <= 1e-12:
        return c
    c[slope[0]] = softplus_inv(1.0 / sd)
    pos = 0
    if const.size:
        c[const[0]] = -beta[0] / sd
        pos = 1
    for i, (_, col) in enumerate(lin):
        c[col] = -beta[pos + i] / sd
    return c


def fit_component(index_set: MultiIndexSet, samples, opts: FitOptions | None = None):
    """Minimize the empirical KL objective over the coefficients.

    Returns the fitted component and a :class:`FitReport`. Hitting the
    iteration cap is reported, not raised.
    """
    opts = opts or FitOptions()
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    if z.shape[1] != index_set.dim:
        raise ValueError(f"samples have {z.shape[1]} columns, index set expects {index_set.dim}")
    if z.shape[0] <= len(index_set):
        raise UnderdeterminedError(
            f"{z.shape[0]} samples do not determine {len(index_set)} coefficients"
        )
    if opts.init == "affine":
        c0 = _affine_warm_start(index_set, z)
    elif opts.init == "zero":
        c0 = np.zeros(len(index_set))
    else:
        raise ValueError(f"unknown initialization {opts.init!r}")
    comp = MonotoneComponent(index_set, c0, quad_order=opts.quad_order)
    feats = comp.features(z)

    def fun(c):
        value, grad = feats.objective(c)
        if not np.isfinite(value):
            raise NumericalError("map objective is not finite")
        return value, grad

    f0, g0 = fun(c0)
    if np.max(np.abs(g0)) < opts.gtol:
        report = FitReport(f0, float(np.max(np.abs(g0))), 0, True, f0, "initial point optimal")
        return comp, report
    res = minimize(
        fun,
        c0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": opts.max_iter, "gtol": opts.gtol, "ftol": 1e-15, "maxcor": 20},
    )
    c, fval = res.x, float(res.fun)
    if fval > f0:
        c, fval = c0, f0
    _, grad = fun(c)
    gnorm = float(np.max(np.abs(grad)))
    converged = gnorm < opts.gtol
    if not converged:
        log.debug("component fit stopped at |grad|=%.2e: %s", gnorm, res.message)
    report = FitReport(fval, gnorm, int(res.nit), converged, f0, str(res.message))
    return comp.with_coeffs(c), report


def _standardization(samples):
    shift = samples.mean(axis=0)
    scale = samples.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return shift, scale


def _index_sets(spec, start, stop):
    if isinstance(spec, (int, np.integer)):
        return [MultiIndexSet.total_degree(k + 1, int(spec)) for k in range(start, stop)]
    sets = list(spec)
    if len(sets) != stop - start:
        raise ValueError(f"expected {stop - start} index sets, got {len(sets)}")
    return sets


def fit_triangular_map(
    samples,
    spec=1,
    opts: FitOptions | None = None,
    *,
    start=0,
    standardize=True,
    shift=None,
    scale=None,
    workers=1,
):
    """Fit components ``start..n-1`` of a triangular map to ``samples``.

    ``spec`` is a total degree or one :class:`MultiIndexSet` per fitted
    component. Components are independent problems and may be fitted in
    parallel. Returns the map and the list of per-component reports.
    """
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    n = z.shape[1]
    sets = _index_sets(spec, start, n)
    if shift is None or scale is None:
        shift, scale = _standardization(z) if standardize else (np.zeros(n), np.ones(n))
    zh = (z - shift) / scale

    def one(i):
        k = start + i + 1
        try:
            return fit_component(sets[i], zh[:, :k], opts)
        except (UnderdeterminedError, NumericalError) as exc:
            raise type(exc)(f"component {k - 1}: {exc}") from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(len(sets))))
    else:
        results = [one(i) for i in range(len(sets))]
    comps = [r[0] for r in results]
    reports = [r[1] for r in results]
    return TriangularMap(comps, shift, scale, offset=start), reports


def fit_block_map(lead, trail, spec=1, opts=None, *, ordering="Y-then-X", blocks=("lead", "trail")):
    """Fit a two-block map on samples ``(lead, trail)``.

    ``spec`` is a total degree applied to every component. ``blocks``
    selects which of the two blocks to train; the standardization is
    shared so the blocks compose into one joint map.
    """
    lead = np.atleast_2d(np.asarray(lead, dtype=float))
    trail = np.atleast_2d(np.asarray(trail, dtype=float))
    z = np.hstack([lead, trail])
    shift, scale = _standardization(z)
    n_lead = lead.shape[1]
    lead_map = trail_map = None
    reports = {}
    if "lead" in blocks:
        lead_map, reports["lead"] = fit_triangular_map(
            lead, spec, opts, shift=shift[:n_lead], scale=scale[:n_lead]
        )
    if "trail" in blocks:
        trail_map, reports["trail"] = fit_triangular_map(
            z, spec, opts, start=n_lead, shift=shift, scale=scale
        )
    bmap = BlockTriangularMap(ordering, n_lead, trail.shape[1], lead_map, trail_map)
    return bmap, reports


def select_degree_cv(samples, degrees, folds=5, *, start=0, seed=0, opts=None):
    """Pick the total degree with the lowest mean held-out negative
    log-likelihood (of components ``start..n-1``). Ties go to the smaller
    degree. Degrees whose largest basis would be underdetermined on a
    training fold are skipped with a warning.

    Returns ``(degree, {degree: mean held-out score})``.
    """
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    degrees = sorted(int(d) for d in degrees)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(degrees) == 1:
        return degrees[0], {}
    n, dim = z.shape
    perm = make_rng(seed, "cv-folds").permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds
    n_train_min = n - int(np.ceil(n / folds))
    scores = {}
    for deg in degrees:
        largest = len(MultiIndexSet.total_degree(dim, deg))
        if n_train_min <= largest:
            warnings.warn(f"skipping degree {deg}: {largest} basis functions, {n_train_min} samples")
            continue
        fold_scores = []
        for f in range(folds):
            train, test = z[fold_of != f], z[fold_of == f]
            tmap, _ = fit_triangular_map(train, deg, opts, start=start)
            fold_scores.append(-float(np.mean(tmap.logpdf(test))))
        scores[deg] = float(np.mean(fold_scores))
    if not scores:
        raise UnderdeterminedError("no candidate degree can be fitted with these samples")
    best = min(scores, key=lambda d: (scores[d], d))
    return best, scores
