"""Transport-map EIG estimators, the nested Monte Carlo baseline, sample
allocation and convergence sweeps."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .density import DensityEstimate
from .errors import CapabilityError
from .models import LinearGaussianModel, closed_form_eig, sample_joint
from .seeding import derive_seed, make_rng
from .training import FitOptions, fit_block_map
from .transport import MultiIndexSet

TRANSPORT_KINDS = ("m", "pos", "lik", "pr")
ESTIMATE_KINDS = TRANSPORT_KINDS + ("nmc", "gaussian")
SWEEP_HEADER = ("kind", "p", "L", "M", "N", "replicate", "seed", "value", "exact", "error")

# blocks of S (Y-then-X) and U (X-then-Y) each estimator needs
_NEEDS = {
    "m": {"S": {"lead"}},
    "pos": {"S": {"trail"}},
    "lik": {"S": {"lead"}, "U": {"trail"}},
    "pr": {"S": {"trail"}, "U": {"lead"}},
}


@dataclass
class EigEstimate:
    kind: str
    value: float
    L: int
    M: int
    N: int
    seed: int | None = None
    exact: float | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATE_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    @property
    def error(self):
        return None if self.exact is None else self.value - self.exact


def allocate(L, p, min_train=1):
    """Split ``L`` samples into ``M`` evaluation and ``N`` training samples
    with ``M / N = L**p`` (rounded half up), keeping ``N >= min_train``."""
    L = int(L)
    if p < 0:
        raise ValueError(f"allocation exponent must be non-negative, got {p}")
    if L < min_train + 1:
        raise ValueError(f"L={L} leaves no evaluation sample with min_train={min_train}")
    M = int(math.floor(L / (L ** (-p) + 1.0) + 0.5))
    M = min(max(M, 1), L)
    N = L - M
    if N < min_train:
        N = min_train
        M = L - N
    return M, N


def min_train_size(n_x, n_y, kinds, degree=1):
    """Smallest training size for which every needed component is overdetermined."""
    dims = set()
    for kind in kinds:
        for ordering, blocks in _NEEDS[kind].items():
            lead = n_y if ordering == "S" else n_x
            if "trail" in blocks:
                dims.add(n_x + n_y)
            if "lead" in blocks:
                dims.add(lead)
    return max(len(MultiIndexSet.total_degree(d, degree)) for d in dims) + 1


@dataclass
class TransportDensities:
    """Trained maps: ``S`` orders (Y, X) and ``U`` orders (X, Y)."""

    S: object = None
    U: object = None

    def density(self, kind):
        lookup = {
            "marginal-Y": ("S", "lead"),
            "conditional-X-given-Y": ("S", "trail"),
            "marginal-X": ("U", "lead"),
            "conditional-Y-given-X": ("U", "trail"),
        }
        name, block = lookup[kind]
        bmap = getattr(self, name)
        if bmap is None or getattr(bmap, block) is None:
            raise CapabilityError(f"no trained map provides the {kind} density")
        return DensityEstimate(kind, bmap)


def train_densities(x, y, kinds, degree=1, opts: FitOptions | None = None):
    """Fit the map blocks needed by the requested estimator kinds."""
    need = {"S": set(), "U": set()}
    for kind in kinds:
        if kind not in _NEEDS:
            raise ValueError(f"{kind!r} is not a transport estimator")
        for name, blocks in _NEEDS[kind].items():
            need[name] |= blocks
    out = TransportDensities()
    if need["S"]:
        out.S, _ = fit_block_map(y, x, degree, opts, ordering="Y-then-X", blocks=need["S"])
    if need["U"]:
        out.U, _ = fit_block_map(x, y, degree, opts, ordering="X-then-Y", blocks=need["U"])
    return out


def eig_terms(kind, densities: TransportDensities, model, x, y):
    """Per-sample log-ratios whose mean is the ``kind`` estimator."""
    if kind == "m":
        if not getattr(model, "has_likelihood", False):
            raise CapabilityError("estimator 'm' needs an exact likelihood")
        return model.log_likelihood(y, x) - densities.density("marginal-Y").logpdf(y)
    if kind == "pos":
        if not getattr(model, "has_prior_density", False):
            raise CapabilityError("estimator 'pos' needs an exact prior density")
        post = densities.density("conditional-X-given-Y").logpdf(x, given=y)
        return post - model.prior_logpdf(x)
    if kind == "lik":
        lik = densities.density("conditional-Y-given-X").logpdf(y, given=x)
        return lik - densities.density("marginal-Y").logpdf(y)
    if kind == "pr":
        post = densities.density("conditional-X-given-Y").logpdf(x, given=y)
        return post - densities.density("marginal-X").logpdf(x)
    raise ValueError(f"{kind!r} is not a transport estimator")


def estimate_eig(kind, densities, model, x, y, **meta):
    """Outer Monte Carlo average of the ``kind`` log-ratio over ``(x, y)``.

    ``meta`` fills the bookkeeping fields of :class:`EigEstimate`.
    """
    terms = eig_terms(kind, densities, model, np.atleast_2d(x), np.atleast_2d(y))
    value = float(np.mean(terms))
    if not np.isfinite(value):
        raise FloatingPointError(f"estimator {kind} produced a non-finite value")
    M = terms.shape[0]
    return EigEstimate(
        kind,
        value,
        meta.get("L", M),
        M,
        meta.get("N", 0),
        meta.get("seed"),
        meta.get("exact"),
        meta.get("p"),
    )


def transport_eig(model, kinds, L, p, seed, degree=1, opts=None, exact=None, min_train=None):
    """Sample, split, train and evaluate: one replicate of every requested kind
    on a shared joint sample set."""
    kinds = tuple(kinds)
    if min_train is None:
        min_train = min_train_size(model.n_x, model.n_y, kinds, degree)
    M, N = allocate(L, p, min_train)
    data = sample_joint(model, L, seed, n_train=N)
    x_tr, y_tr = data.train
    x_ev, y_ev = data.eval
    dens = train_densities(x_tr, y_tr, kinds, degree, opts)
    meta = {"L": L, "N": N, "seed": seed, "exact": exact, "p": p}
    return {k: estimate_eig(k, dens, model, x_ev, y_ev, **meta) for k in kinds}


def nmc_eig(model, L, seed, n_inner=None, chunk=2**20, exact=None):
    """Nested Monte Carlo EIG with ``N_in = round(L**(1/3))`` fresh prior
    draws per outer sample and ``N_out = L // N_in`` outer samples."""
    if not getattr(model, "has_likelihood", False):
        raise CapabilityError("nested Monte Carlo needs an exact likelihood")
    n_in = int(n_inner) if n_inner else max(1, int(math.floor(L ** (1.0 / 3.0) + 0.5)))
    n_out = int(L) // n_in
    if n_out < 1:
        raise ValueError(f"L={L} is too small for {n_in} inner samples")
    rng = make_rng(seed, "nmc")
    x, y = model.sample(n_out, rng)
    num = model.log_likelihood(y, x)
    den = np.empty(n_out)
    step = max(1, chunk // n_in)
    for lo in range(0, n_out, step):
        hi = min(n_out, lo + step)
        den[lo:hi] = nmc_log_evidence(model, y[lo:hi], n_in, rng)
    value = float(np.mean(num - den))
    return EigEstimate("nmc", value, int(L), n_out, n_in, seed, exact)


def nmc_log_evidence(model, y, n_inner, rng):
    """``log((1/n) sum_j pi(y | x_j))`` with ``x_j`` fresh prior draws per row."""
    y = np.atleast_2d(y)
    xs = model.sample_prior(y.shape[0] * n_inner, rng)
    ll = model.log_likelihood(np.repeat(y, n_inner, axis=0), xs).reshape(y.shape[0], n_inner)
    return logsumexp(ll, axis=1) - np.log(n_inner)


# -- sweeps ----------------------------------------------------------------


def fit_loglog_slope(L, mse):
    """Least-squares slope of ``log mse`` against ``log L`` and its standard error."""
    L = np.asarray(L, dtype=float)
    mse = np.asarray(mse, dtype=float)
    if L.size != mse.size:
        raise ValueError("L and mse must have the same length")
    if np.unique(L).size < 3:
        raise ValueError("need at least 3 distinct L values")
    if np.any(mse <= 0) or np.any(L <= 0):
        raise ValueError("L and mse must be positive")
    x, yv = np.log(L), np.log(mse)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (yv - yv.mean()) / sxx)
    resid = yv - yv.mean() - slope * xc
    dof = x.size - 2
    se = float(np.sqrt((resid @ resid) / dof / sxx)) if dof > 0 else 0.0
    return slope, se


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class SweepTable:
    """Rows of a convergence study and their per-group statistics."""

    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def __len__(self):
        return len(self.rows)

    def add(self, **row):
        self.rows.append({k: row.get(k) for k in SWEEP_HEADER})

    def values(self, kind, p, L):
        return np.array(
            [
                r["value"]
                for r in self.rows
                if r["kind"] == kind and _same_p(r["p"], p) and r["L"] == L and not r["error"]
            ],
            dtype=float,
        )

    def groups(self):
        keys = []
        for r in self.rows:
            key = (r["kind"], r["p"], r["L"])
            if key not in keys:
                keys.append(key)
        return keys

    def aggregate(self):
        out = {}
        for kind, p, L in self.groups():
            rows = [
                r for r in self.rows if r["kind"] == kind and _same_p(r["p"], p) and r["L"] == L
            ]
            ok = [r for r in rows if not r["error"]]
            stats = {"n_ok": len(ok), "n_failed": len(rows) - len(ok)}
            v = np.array([r["value"] for r in ok], dtype=float)
            if v.size:
                stats.update(
                    mean=float(v.mean()),
                    variance=float(np.mean((v - v.mean()) ** 2)),
                    se_mean=float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0,
                    degenerate=v.size < 2,
                )
            if v.size and ok[0]["exact"] is not None:
                exact = float(ok[0]["exact"])
                stats.update(
                    bias=float(v.mean() - exact),
                    mse=float(np.mean((v - exact) ** 2)),
                    se_mse=float(np.std((v - exact) ** 2, ddof=1) / np.sqrt(v.size))
                    if v.size > 1
                    else 0.0,
                )
            out[(kind, p, L)] = stats
        return out

    def slope(self, kind, p):
        agg = self.aggregate()
        pts = sorted(
            (L, s["mse"]) for (k, pp, L), s in agg.items() if k == kind and _same_p(pp, p)
        )
        return fit_loglog_slope([a for a, _ in pts], [b for _, b in pts])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for r in self.rows:
                w.writerow([_fmt(r[k]) for k in SWEEP_HEADER])

    def aggregates_json(self):
        return {
            f"{kind},{_fmt(p)},{L}": stats for (kind, p, L), stats in self.aggregate().items()
        }

    def write_aggregates(self, path):
        with open(path, "w") as fh:
            json.dump(self.aggregates_json(), fh, indent=1, sort_keys=True)


def _same_p(a, b):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) < 1e-12


def transport_cell(model, kinds, p, L, rep, base_seed, degree, exact, opts=None):
    seed = derive_seed(base_seed, "transport", p, L, rep)
    try:
        est = transport_eig(model, kinds, L, p, seed, degree, opts, exact)
        return [
            _row(k, p, L, e.M, e.N, rep, seed, e.value, exact, "") for k, e in est.items()
        ]
    except Exception as exc:  # record and continue
        msg = f"{type(exc).__name__}: {exc}"
        return [_row(k, p, L, None, None, rep, seed, float("nan"), exact, msg) for k in kinds]


def nmc_cell(model, L, rep, base_seed, exact):
    seed = derive_seed(base_seed, "nmc", L, rep)
    try:
        e = nmc_eig(model, L, seed, exact=exact)
        return [_row("nmc", None, L, e.M, e.N, rep, seed, e.value, exact, "")]
    except Exception as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return [_row("nmc", None, L, None, None, rep, seed, float("nan"), exact, msg)]


def _row(kind, p, L, M, N, rep, seed, value, exact, error):
    return dict(
        kind=kind, p=p, L=L, M=M, N=N, replicate=rep, seed=seed, value=value, exact=exact, error=error
    )


def _run_cell(args):
    fn, a = args
    return fn(*a)


def convergence_sweep(
    model,
    kinds,
    exponents,
    L_grid,
    replicates,
    base_seed=0,
    *,
    degree=1,
    nmc=False,
    exact=None,
    workers=1,
    opts=None,
):
    """Bias/variance/MSE study of the transport estimators (and optionally NMC).

    Every ``(p, L, replicate)`` cell draws its own joint sample set from a
    seed derived from ``base_seed`` and trains once for all ``kinds``.
    """
    if exact is None and isinstance(model, LinearGaussianModel):
        exact = closed_form_eig(model)
    kinds = tuple(k for k in kinds if k != "nmc")
    cells = []
    if kinds:
        for p in exponents:
            for L in L_grid:
                for rep in range(replicates):
                    cells.append(
                        (transport_cell, (model, kinds, p, L, rep, base_seed, degree, exact, opts))
                    )
    if nmc:
        for L in L_grid:
            for rep in range(replicates):
                cells.append((nmc_cell, (model, L, rep, base_seed, exact)))
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, cells, chunksize=4))
    else:
        results = [_run_cell(c) for c in cells]
    table = SweepTable()
    for rows in results:
        table.rows.extend(rows)
    return table


def estimate_to_dict(e: EigEstimate):
    return asdict(e)
