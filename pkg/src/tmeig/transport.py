"""Monotone triangular transport maps built from rectified Hermite expansions.

A component ``S^k`` on ``R^k`` is obtained from an unconstrained function
``f(z) = sum_a c_a psi_a(z)`` by

    S^k(z) = f(z_{<k}, 0) + int_0^{z_k} g(d_k f(z_{<k}, t)) dt,

with ``g`` the softplus, so ``d_k S^k = g(d_k f) > 0`` everywhere. The
``psi_a`` are tensor products of probabilists' Hermite polynomials scaled
to unit norm under N(0, 1).

Because every basis function factors into a prefix part and a univariate
polynomial in the last coordinate, ``d_k f(z_{<k}, t)`` is, for fixed
prefix, a polynomial in ``t`` whose coefficients are linear in ``c``.
:class:`ComponentFeatures` caches everything that depends only on the
sample points, so objective and gradient evaluations are cheap.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DivergenceError
from .numerics import gauss_legendre, standard_normal_logpdf

MAP_FORMAT_VERSION = 1
DEFAULT_QUAD_ORDER = 32
IDENTITY_SLOPE_COEFF = float(np.log(np.e - 1.0))  # softplus^{-1}(1)


# -- rectifier -----------------------------------------------------------


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    return np.log(np.expm1(y))


def _log_softplus(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    low = x < -30.0
    out[low] = x[low]
    out[~low] = np.log(softplus(x[~low]))
    return out


def _log_softplus_d1(x):
    # d/dx log g(x) = sigmoid(x) / g(x)
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    hi = x >= -30.0
    out[hi] = expit(x[hi]) / softplus(x[hi])
    return out


def _log_softplus_d2(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    hi = x >= -30.0
    s = expit(x[hi])
    g = softplus(x[hi])
    out[hi] = (s * (1.0 - s) * g - s * s) / (g * g)
    return out


# -- Hermite basis -------------------------------------------------------


def hermite_table(z, max_degree):
    """Normalized probabilists' Hermite polynomials ``psi_0..psi_D`` at ``z``.

    Output has shape ``z.shape + (max_degree + 1,)``.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = z
    # He_{n+1} = z He_n - n He_{n-1}; psi_n = He_n / sqrt(n!)
    for n in range(1, max_degree):
        out[..., n + 1] = (z * out[..., n] - np.sqrt(n) * out[..., n - 1]) / np.sqrt(n + 1)
    return out


def hermite_derivative_table(z, max_degree):
    """``psi_n'(z) = sqrt(n) psi_{n-1}(z)`` for ``n = 0..D``."""
    base = hermite_table(z, max(max_degree - 1, 0))
    out = np.zeros(np.shape(z) + (max_degree + 1,))
    if max_degree >= 1:
        out[..., 1:] = np.sqrt(np.arange(1, max_degree + 1)) * base[..., :max_degree]
    return out


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Degree vectors of tensor-product basis functions on ``R^k``."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.indices, dtype=int))
        if idx.size == 0:
            raise ValueError("multi-index set is empty")
        if np.any(idx < 0):
            raise ValueError("multi-indices must be non-negative")
        if len({tuple(r) for r in idx}) != idx.shape[0]:
            raise ValueError("multi-index set contains duplicates")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def total_degree(cls, dim, degree):
        """All multi-indices of dimension ``dim`` with total degree <= ``degree``,
        ordered by total degree, then reverse-lexicographically."""
        rows = [
            alpha
            for alpha in itertools.product(range(degree + 1), repeat=dim)
            if sum(alpha) <= degree
        ]
        rows.sort(key=lambda a: (sum(a), tuple(-v for v in a)))
        return cls(np.array(rows, dtype=int))

    @property
    def dim(self):
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]

    def __eq__(self, other):
        return isinstance(other, MultiIndexSet) and np.array_equal(self.indices, other.indices)

    __hash__ = None

    def is_downward_closed(self):
        present = {tuple(r) for r in self.indices}
        for r in present:
            for i, v in enumerate(r):
                if v > 0 and r[:i] + (v - 1,) + r[i + 1 :] not in present:
                    return False
        return True


def hermite_features(idx: MultiIndexSet, z):
    """Basis values ``psi_a(z)`` and last-coordinate partials ``d_k psi_a(z)``.

    ``z`` is one point (length k) or an ``N x k`` array.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    if zz.shape[1] != idx.dim:
        raise ValueError(f"point has {zz.shape[1]} coordinates, index set expects {idx.dim}")
    D = int(idx.indices.max())
    tab = hermite_table(zz, D)  # N x k x (D+1)
    dtab = hermite_derivative_table(zz[:, -1], D)  # N x (D+1)
    cols = np.arange(idx.dim)
    per_coord = tab[:, cols, idx.indices]  # N x m x k
    values = np.prod(per_coord, axis=2)
    partials = np.prod(per_coord[:, :, :-1], axis=2) * dtab[:, idx.indices[:, -1]]
    if single:
        return values[0], partials[0]
    return values, partials


# -- components ----------------------------------------------------------


class _Layout:
    """Splits each multi-index into a prefix index and a last-coordinate degree."""

    def __init__(self, idx: MultiIndexSet):
        ind = idx.indices
        self.k = ind.shape[1]
        if self.k == 1:
            self.prefixes = np.zeros((1, 0), dtype=int)
            self.prefix_of = np.zeros(ind.shape[0], dtype=int)
        else:
            prefixes, inverse = np.unique(ind[:, :-1], axis=0, return_inverse=True)
            self.prefixes = prefixes
            self.prefix_of = np.asarray(inverse).reshape(-1)
        self.last_degree = ind[:, -1].copy()
        self.max_last = int(self.last_degree.max())
        self.max_prefix = int(self.prefixes.max()) if self.prefixes.size else 0
        self.psi0 = hermite_table(np.float64(0.0), self.max_last)

    def coef_matrix(self, coeffs):
        c = np.zeros((self.prefixes.shape[0], self.max_last + 1))
        c[self.prefix_of, self.last_degree] = coeffs
        return c

    def prefix_features(self, zp):
        n = zp.shape[0]
        if self.k == 1:
            return np.ones((n, 1))
        tab = hermite_table(zp, self.max_prefix)  # N x (k-1) x (D+1)
        out = np.ones((n, self.prefixes.shape[0]))
        for j in range(self.k - 1):
            deg = self.prefixes[:, j]
            hit = np.flatnonzero(deg)
            if hit.size:
                out[:, hit] *= tab[:, j, deg[hit]]
        return out


@dataclass(frozen=True, eq=False)
class MonotoneComponent:
    """One map component ``S^k = R_k(f)`` with ``f = sum c_a psi_a``."""

    index_set: MultiIndexSet
    coeffs: np.ndarray
    rectifier: str = "softplus"
    quad_order: int = DEFAULT_QUAD_ORDER
    _layout: _Layout = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if c.size != len(self.index_set):
            raise ValueError(
                f"{c.size} coefficients for an index set of size {len(self.index_set)}"
            )
        if self.rectifier != "softplus":
            raise ValueError(f"unsupported rectifier {self.rectifier!r}")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "_layout", _Layout(self.index_set))

    @property
    def dim(self):
        return self.index_set.dim

    def with_coeffs(self, coeffs):
        return MonotoneComponent(self.index_set, coeffs, self.rectifier, self.quad_order)

    @classmethod
    def identity(cls, dim, degree=1, quad_order=DEFAULT_QUAD_ORDER):
        """Component with ``S^k(z) = z_k`` on a total-degree basis."""
        idx = MultiIndexSet.total_degree(dim, degree)
        target = np.zeros(dim, dtype=int)
        target[-1] = 1
        c = np.zeros(len(idx))
        c[np.flatnonzero((idx.indices == target).all(axis=1))[0]] = IDENTITY_SLOPE_COEFF
        return cls(idx, c, quad_order=quad_order)

    def features(self, z):
        return ComponentFeatures(self, np.atleast_2d(np.asarray(z, dtype=float)))

    def evaluate(self, z):
        """Values ``S^k(z)`` and partials ``d_k S^k(z)`` for rows of ``z``."""
        feats = self.features(z)
        s, _, h_end = feats.forward(self.coeffs)
        return s, softplus(h_end)


def rectified_component_eval(comp: MonotoneComponent, z):
    """``(S^k(z), d_k S^k(z))`` for a single point of length k."""
    z = np.asarray(z, dtype=float)
    if z.shape != (comp.dim,):
        raise ValueError(f"expected a point of length {comp.dim}, got shape {z.shape}")
    s, ds = comp.evaluate(z[None, :])
    return float(s[0]), float(ds[0])


class ComponentFeatures:
    """Coefficient-independent quantities of one component at fixed points.

    ``forward(c)`` returns the component values, the integrand at the
    quadrature nodes and ``d_k f`` at the points; ``objective`` adds the
    empirical KL objective and its gradient.
    """

    def __init__(self, comp: MonotoneComponent, z):
        lay = comp._layout
        if z.shape[1] != lay.k:
            raise ValueError(f"points have {z.shape[1]} coordinates, component expects {lay.k}")
        self.layout = lay
        self.z_last = z[:, -1].copy()
        self.phi = lay.prefix_features(z[:, :-1])
        # an integrand affine in the last coordinate is constant along it,
        # so one node is exact
        order = 1 if lay.max_last <= 1 else comp.quad_order
        nodes, self.weights = gauss_legendre(order, 0.0, 1.0)
        t = self.z_last[:, None] * nodes[None, :]
        D = lay.max_last
        # derivative tables for degrees 1..D at the nodes and at z_k
        self.dpsi_nodes = hermite_derivative_table(t, D)[..., 1:]  # N x Q x D
        self.dpsi_end = hermite_derivative_table(self.z_last, D)[:, 1:]  # N x D

    @property
    def n(self):
        return self.z_last.shape[0]

    def _poly(self, coeffs):
        return self.phi @ self.layout.coef_matrix(coeffs)  # N x (D+1)

    def forward(self, coeffs):
        a = self._poly(coeffs)
        f0 = a @ self.layout.psi0
        h_nodes = np.einsum("nqd,nd->nq", self.dpsi_nodes, a[:, 1:])
        h_end = np.einsum("nd,nd->n", self.dpsi_end, a[:, 1:])
        s = f0 + self.z_last * (softplus(h_nodes) @ self.weights)
        return s, h_nodes, h_end

    def value_jacobian_parts(self, h_nodes, h_end):
        """Per-degree factors ``E`` (for dS/dc) and ``F`` (for d log d_kS/dc)."""
        lay = self.layout
        E = np.empty((self.n, lay.max_last + 1))
        E[:, 0] = lay.psi0[0]
        if lay.max_last:
            gw = expit(h_nodes) * self.weights
            E[:, 1:] = lay.psi0[1:] + self.z_last[:, None] * np.einsum(
                "nq,nqd->nd", gw, self.dpsi_nodes
            )
        F = np.zeros_like(E)
        F[:, 1:] = _log_softplus_d1(h_end)[:, None] * self.dpsi_end
        return E, F

    def objective(self, coeffs, grad=True):
        """Mean of ``0.5 S^2 - log d_k S`` and its coefficient gradient."""
        s, h_nodes, h_end = self.forward(coeffs)
        value = float(np.mean(0.5 * s * s - _log_softplus(h_end)))
        if not grad:
            return value
        E, F = self.value_jacobian_parts(h_nodes, h_end)
        W = s[:, None] * E - F
        gmat = self.phi.T @ W / self.n
        lay = self.layout
        return value, gmat[lay.prefix_of, lay.last_degree]

    def hessian(self, coeffs):
        """Per-sample-averaged coefficient Hessian of ``0.5 S^2 - log d_k S``."""
        lay = self.layout
        s, h_nodes, h_end = self.forward(coeffs)
        E, _ = self.value_jacobian_parts(h_nodes, h_end)
        phi = self.phi[:, lay.prefix_of]  # N x m
        dS = phi * E[:, lay.last_degree]
        full_nodes = np.concatenate([np.zeros(h_nodes.shape + (1,)), self.dpsi_nodes], axis=2)
        full_end = np.concatenate([np.zeros((self.n, 1)), self.dpsi_end], axis=1)
        sig = expit(h_nodes)
        g2w = sig * (1.0 - sig) * self.weights  # N x Q
        # d2S/dc_a dc_b = phi_a phi_b z sum_q w_q g''(h_q) psi'_da(t_q) psi'_db(t_q)
        K = np.einsum("nq,nqa,nqb->nab", g2w, full_nodes, full_nodes)
        K *= self.z_last[:, None, None]
        d2S = phi[:, :, None] * phi[:, None, :] * K[:, lay.last_degree][:, :, lay.last_degree]
        de = full_end[:, lay.last_degree] * phi
        d2log = _log_softplus_d2(h_end)[:, None, None] * de[:, :, None] * de[:, None, :]
        H = np.einsum("na,nb->ab", dS, dS) + np.einsum("n,nab->ab", s, d2S) - d2log.sum(axis=0)
        H /= self.n
        return 0.5 * (H + H.T)

    def solve(self, coeffs, targets, tol=1e-10, max_iter=100, limit=1e6):
        """Find ``z_k`` with ``S^k(prefix, z_k) = target`` for every row.

        Uses the prefix features stored in this object (``z_last`` is ignored).
        """
        a = self._poly(coeffs)
        f0 = a @ self.layout.psi0
        nodes, weights = gauss_legendre(self.weights.size, 0.0, 1.0)
        D = self.layout.max_last

        def evaluate(z):
            t = z[:, None] * nodes[None, :]
            h_nodes = np.einsum("nqd,nd->nq", hermite_derivative_table(t, D)[..., 1:], a[:, 1:])
            h_end = np.einsum("nd,nd->n", hermite_derivative_table(z, D)[:, 1:], a[:, 1:])
            return f0 + z * (softplus(h_nodes) @ weights), softplus(h_end)

        return _bracketed_newton(evaluate, np.asarray(targets, dtype=float), tol, max_iter, limit)


def _bracketed_newton(evaluate, targets, tol, max_iter, limit):
    n = targets.size
    lo = np.full(n, -1.0)
    hi = np.full(n, 1.0)
    s_lo, _ = evaluate(lo)
    s_hi, _ = evaluate(hi)
    # expand brackets geometrically until they straddle the targets
    while True:
        need_lo = s_lo > targets
        need_hi = s_hi < targets
        if not (need_lo.any() or need_hi.any()):
            break
        if np.any(lo[need_lo] <= -limit) or np.any(hi[need_hi] >= limit):
            raise DivergenceError(
                f"no bracket found within |z| <= {limit:g}; the map may be mis-trained"
            )
        lo = np.where(need_lo, np.maximum(2.0 * lo, -limit), lo)
        hi = np.where(need_hi, np.minimum(2.0 * hi, limit), hi)
        s_lo = np.where(need_lo, evaluate(lo)[0], s_lo)
        s_hi = np.where(need_hi, evaluate(hi)[0], s_hi)
    z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        s, ds = evaluate(z)
        r = s - targets
        done = np.abs(r) < tol
        if done.all():
            return z
        lo = np.where(r < 0, z, lo)
        hi = np.where(r > 0, z, hi)
        step = z - r / ds
        inside = (step > lo) & (step < hi) & np.isfinite(step)
        z = np.where(done, z, np.where(inside, step, 0.5 * (lo + hi)))
    return z


def component_invert(comp: MonotoneComponent, prefix, target):
    """Solve ``S^k(prefix, z_k) = target`` for ``z_k``."""
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    if prefix.size != comp.dim - 1:
        raise ValueError(f"prefix must have length {comp.dim - 1}")
    if not np.isfinite(target):
        raise ValueError("target must be finite")
    feats = comp.features(np.append(prefix, 0.0))
    return float(feats.solve(comp.coeffs, np.array([float(target)]))[0])


# -- maps ------------------------------------------------------------------


def _check_finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    return z


@dataclass(frozen=True, eq=False)
class TriangularMap:
    """Lower-triangular map ``z -> (S^1(z_1), ..., S^n(z_1..z_n))``.

    Inputs are standardized coordinate-wise, ``(z - shift) / scale``,
    before the components act; the standardization's log-Jacobian is
    included in ``logdet``.

    ``offset`` lets a map hold only the trailing components of a larger
    triangular map: component ``i`` then acts on the first
    ``offset + i + 1`` coordinates and produces output ``offset + i``.
    """

    components: tuple
    shift: np.ndarray
    scale: np.ndarray
    offset: int = 0

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float).reshape(-1))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).reshape(-1))
        for i, comp in enumerate(comps):
            if comp.dim != self.offset + i + 1:
                raise ValueError(
                    f"component {i} has dimension {comp.dim}, expected {self.offset + i + 1}"
                )
        if self.shift.size != self.input_dim or self.scale.size != self.input_dim:
            raise ValueError("standardization constants do not match the map dimension")
        if np.any(self.scale <= 0):
            raise ValueError("standardization scales must be positive")

    @property
    def input_dim(self):
        return self.offset + len(self.components)

    @property
    def output_dim(self):
        return len(self.components)

    @classmethod
    def identity(cls, dim, degree=1):
        comps = [MonotoneComponent.identity(k + 1, degree) for k in range(dim)]
        return cls(comps, np.zeros(dim), np.ones(dim))

    def standardize(self, z):
        return (z - self.shift) / self.scale

    def forward(self, z):
        """Image and log-determinant for rows of ``z`` (or a single point)."""
        z = _check_finite(z)
        single = z.ndim == 1
        zz = np.atleast_2d(z)
        if zz.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} coordinates, got {zz.shape[1]}")
        zh = self.standardize(zz)
        image = np.empty((zz.shape[0], self.output_dim))
        logdet = np.zeros(zz.shape[0])
        for i, comp in enumerate(self.components):
            k = self.offset + i + 1
            s, ds = comp.evaluate(zh[:, :k])
            image[:, i] = s
            logdet += np.log(ds)
        logdet -= np.sum(np.log(self.scale[self.offset :]))
        if single:
            return image[0], float(logdet[0])
        return image, logdet

    def logpdf(self, z):
        """Pullback of the standard normal through this map."""
        image, logdet = self.forward(z)
        return standard_normal_logpdf(image) + logdet

    def invert(self, w, given=None):
        """Solve ``S(given, z) = w`` for ``z``; ``given`` holds the leading
        ``offset`` coordinates when the map is a trailing block."""
        w = _check_finite(w)
        single = w.ndim == 1
        ww = np.atleast_2d(w)
        n = ww.shape[0]
        if ww.shape[1] != self.output_dim:
            raise ValueError(f"expected {self.output_dim} targets, got {ww.shape[1]}")
        zh = np.zeros((n, self.input_dim))
        if self.offset:
            if given is None:
                raise ValueError("a trailing block needs the leading coordinates")
            g = np.atleast_2d(np.asarray(given, dtype=float))
            zh[:, : self.offset] = (g - self.shift[: self.offset]) / self.scale[: self.offset]
        for i, comp in enumerate(self.components):
            k = self.offset + i + 1
            feats = comp.features(zh[:, :k])
            zh[:, k - 1] = feats.solve(comp.coeffs, ww[:, i])
        z = (zh * self.scale + self.shift)[:, self.offset :]
        return z[0] if single else z

    def to_dict(self):
        return {
            "offset": self.offset,
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "components": [
                {
                    "multi_indices": c.index_set.indices.tolist(),
                    "coefficients": c.coeffs.tolist(),
                    "rectifier": c.rectifier,
                    "quad_order": c.quad_order,
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d):
        comps = [
            MonotoneComponent(
                MultiIndexSet(np.array(c["multi_indices"], dtype=int).reshape(-1, d["offset"] + i + 1)),
                np.array(c["coefficients"], dtype=float),
                c["rectifier"],
                int(c["quad_order"]),
            )
            for i, c in enumerate(d["components"])
        ]
        return cls(comps, np.array(d["shift"]), np.array(d["scale"]), int(d["offset"]))


ORDERINGS = ("Y-then-X", "X-then-Y")


@dataclass(frozen=True, eq=False)
class BlockTriangularMap:
    """Two-block triangular map on ``(lead, trail)`` coordinates.

    ``lead`` transports the leading marginal; ``trail`` is a trailing block
    (a :class:`TriangularMap` with ``offset = n_lead``) transporting the
    conditional of the trailing variables. Either block may be absent if
    only one of the two densities is needed.
    """

    ordering: str
    n_lead: int
    n_trail: int
    lead: TriangularMap | None = None
    trail: TriangularMap | None = None

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if self.lead is not None and (self.lead.offset or self.lead.output_dim != self.n_lead):
            raise ValueError("leading block does not match n_lead")
        if self.trail is not None and (
            self.trail.offset != self.n_lead or self.trail.output_dim != self.n_trail
        ):
            raise ValueError("trailing block does not match (n_lead, n_trail)")

    @property
    def dim(self):
        return self.n_lead + self.n_trail

    @property
    def leading_variable(self):
        return self.ordering[0]

    def _need(self, name):
        block = getattr(self, name)
        if block is None:
            raise ValueError(f"the {name} block of this map was not trained")
        return block

    def forward(self, z):
        z = _check_finite(z)
        zz = np.atleast_2d(z)
        img_l, ld_l = self._need("lead").forward(zz[:, : self.n_lead])
        img_t, ld_t = self._need("trail").forward(zz)
        image = np.hstack([img_l, img_t])
        logdet = ld_l + ld_t
        if z.ndim == 1:
            return image[0], float(logdet[0])
        return image, logdet

    def invert(self, w):
        w = _check_finite(w)
        ww = np.atleast_2d(w)
        lead = self._need("lead").invert(ww[:, : self.n_lead])
        trail = self._need("trail").invert(ww[:, self.n_lead :], given=lead)
        z = np.hstack([lead, trail])
        return z[0] if w.ndim == 1 else z

    def to_dict(self):
        return {
            "format": "tmeig-block-map",
            "version": MAP_FORMAT_VERSION,
            "ordering": self.ordering,
            "n_lead": self.n_lead,
            "n_trail": self.n_trail,
            "lead": None if self.lead is None else self.lead.to_dict(),
            "trail": None if self.trail is None else self.trail.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "tmeig-block-map":
            raise ValueError("not a block-map document")
        if d.get("version") != MAP_FORMAT_VERSION:
            raise ValueError(f"unsupported map format version {d.get('version')!r}")
        return cls(
            d["ordering"],
            int(d["n_lead"]),
            int(d["n_trail"]),
            None if d["lead"] is None else TriangularMap.from_dict(d["lead"]),
            None if d["trail"] is None else TriangularMap.from_dict(d["trail"]),
        )

    def save(self, path, report=None):
        doc = self.to_dict()
        if report is not None:
            doc["fit_report"] = report
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def map_forward(tmap, z):
    """``(S(z), log det grad S(z))`` for a triangular or block map."""
    return tmap.forward(z)


def map_invert(tmap, w):
    return tmap.invert(w)
