"""Problem definitions: Gaussian priors, forward models with additive
Gaussian noise, joint samplers and closed-form information oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapabilityError
from .numerics import (
    cholesky,
    gaussian_logpdf,
    logdet_spd,
    sqrtm_psd,
    symmetrize,
)
from .seeding import make_rng


@dataclass(frozen=True)
class JointSampleSet:
    """Paired draws ``(x^i, y^i)``; rows ``[0, n_train)`` train the maps and
    the remaining rows evaluate the outer average."""

    X: np.ndarray
    Y: np.ndarray
    seed: int
    n_train: int = 0

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if not 0 <= self.n_train <= self.X.shape[0]:
            raise ValueError(f"n_train={self.n_train} outside [0, {self.X.shape[0]}]")

    @property
    def L(self):
        return self.X.shape[0]

    @property
    def N(self):
        return self.n_train

    @property
    def M(self):
        return self.L - self.n_train

    @property
    def train(self):
        return self.X[: self.n_train], self.Y[: self.n_train]

    @property
    def eval(self):
        return self.X[self.n_train :], self.Y[self.n_train :]

    def with_split(self, n_train):
        return JointSampleSet(self.X, self.Y, self.seed, int(n_train))


def gaussian_mutual_information(cov_xx, cov_xy, cov_yy):
    """I(X; Y) for jointly Gaussian variables with the given covariance blocks."""
    cov_xx = np.atleast_2d(cov_xx)
    cov_yy = np.atleast_2d(cov_yy)
    cov_xy = np.atleast_2d(cov_xy)
    joint = np.block([[cov_xx, cov_xy], [cov_xy.T, cov_yy]])
    return 0.5 * (logdet_spd(cov_xx) + logdet_spd(cov_yy) - logdet_spd(joint))


def squared_exp_covariance(points, sigma, length):
    """``K_ij = sigma * exp(-|z_i - z_j|^2 / length^2)``."""
    if sigma <= 0 or length <= 0:
        raise ValueError(f"sigma and length must be positive, got {sigma}, {length}")
    z = np.asarray(points, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    sq = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    return symmetrize(sigma * np.exp(-sq / length**2))


class GaussianNoiseModel:
    """``Y = G(X) + E`` with ``X ~ N(prior_mean, prior_cov)`` and
    ``E ~ N(0, noise_cov)``. Subclasses provide ``forward`` and ``jacobian``."""

    has_likelihood = True
    has_prior_density = True
    has_gradient = True

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_cov: np.ndarray

    @property
    def n_x(self):
        return self.prior_cov.shape[0]

    @property
    def n_y(self):
        return self.noise_cov.shape[0]

    @cached_property
    def _prior_sqrt(self):
        return sqrtm_psd(self.prior_cov)

    @cached_property
    def _noise_chol(self):
        return cholesky(self.noise_cov)

    def forward(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def sample(self, L, rng):
        """Draw ``L`` joint samples using generator ``rng``."""
        z = rng.standard_normal((L, self.n_x))
        x = self.prior_mean + z @ self._prior_sqrt
        e = rng.standard_normal((L, self.n_y)) @ self._noise_chol.T
        return x, self.forward(x) + e

    def sample_prior(self, L, rng):
        return self.prior_mean + rng.standard_normal((L, self.n_x)) @ self._prior_sqrt

    def log_likelihood(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if y.shape[-1] != self.n_y or x.shape[-1] != self.n_x:
            raise ValueError(
                f"expected y of width {self.n_y} and x of width {self.n_x}, "
                f"got {y.shape} and {x.shape}"
            )
        return gaussian_logpdf(y - self.forward(x), np.zeros(self.n_y), self.noise_cov)

    def prior_logpdf(self, x):
        return gaussian_logpdf(x, self.prior_mean, self.prior_cov)


@dataclass(frozen=True, eq=False)
class LinearGaussianModel(GaussianNoiseModel):
    """``Y = G X + E`` with a centered Gaussian prior."""

    G: np.ndarray
    prior_cov: np.ndarray
    noise_cov: np.ndarray
    prior_mean: np.ndarray = field(init=False)

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "prior_cov", symmetrize(np.atleast_2d(self.prior_cov)))
        object.__setattr__(self, "noise_cov", symmetrize(np.atleast_2d(self.noise_cov)))
        object.__setattr__(self, "prior_mean", np.zeros(G.shape[1]))
        if self.prior_cov.shape != (G.shape[1], G.shape[1]):
            raise ValueError("prior covariance does not match the columns of G")
        if self.noise_cov.shape != (G.shape[0], G.shape[0]):
            raise ValueError("noise covariance does not match the rows of G")

    def forward(self, x):
        return np.asarray(x, dtype=float) @ self.G.T

    def jacobian(self, x=None):
        return self.G.copy()

    @property
    def data_cov(self):
        return symmetrize(self.G @ self.prior_cov @ self.G.T + self.noise_cov)

    @property
    def cross_cov(self):
        """Cov(X, Y), shape ``n_x x n_y``."""
        return self.prior_cov @ self.G.T

    @property
    def joint_cov(self):
        return np.block([[self.prior_cov, self.cross_cov], [self.cross_cov.T, self.data_cov]])


def make_linear_gaussian(n_x, n_y, decay=0.8, seed=0, *, noise_var=0.01, sigma=0.1, length=0.1):
    """Random linear-Gaussian problem with geometrically decaying singular values.

    ``G = A diag(lam) B^T`` with ``lam_i = decay**(i-1)`` and orthonormal
    ``A``, ``B`` from the QR factors of seeded Gaussian matrices; the prior
    covariance is a squared-exponential kernel on ``n_x`` equispaced points
    in [0, 1] and the noise covariance is ``noise_var * I``.
    """
    if n_y > n_x:
        raise ValueError(f"n_y={n_y} must not exceed n_x={n_x}")
    if not 0 < decay <= 1:
        raise ValueError(f"decay must lie in (0, 1], got {decay}")
    rng = make_rng(seed, "linear-gaussian-G")
    a = _orthonormal(rng.standard_normal((n_y, n_y)))
    b = _orthonormal(rng.standard_normal((n_x, n_y)))
    lam = decay ** np.arange(n_y)
    G = (a * lam) @ b.T
    prior_cov = squared_exp_covariance(np.linspace(0.0, 1.0, n_x), sigma, length)
    return LinearGaussianModel(G, prior_cov, noise_var * np.eye(n_y))


def _orthonormal(m):
    q, r = np.linalg.qr(m)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class MoessbauerModel(GaussianNoiseModel):
    """Lorentzian absorption-line model.

    Parameters are ``x = (center, log width, log height, log offset)``
    with an independent Gaussian prior; the observation at velocity ``d``
    is ``offset - height * width^2 / (width^2 + (center - d)^2)`` plus
    Gaussian noise.
    """

    velocities: tuple = (-1.3, 0.0, 1.3)
    noise_sd: float = 0.1
    prior_loc: tuple = (0.0, 0.0, 0.0, 1.0)
    prior_scale: tuple = (1.0, 0.3, 0.3, 0.2)

    @property
    def prior_mean(self):
        return np.asarray(self.prior_loc, dtype=float)

    @cached_property
    def prior_cov(self):
        return np.diag(np.asarray(self.prior_scale, dtype=float) ** 2)

    @cached_property
    def noise_cov(self):
        return self.noise_sd**2 * np.eye(len(self.velocities))

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.velocities, dtype=float)
        c = x[..., 0:1]
        w2 = np.exp(2.0 * x[..., 1:2])
        h = np.exp(x[..., 2:3])
        o = np.exp(x[..., 3:4])
        q = (c - d) ** 2
        den = w2 + q
        return c - d, w2, h, o, q, den

    def forward(self, x):
        _, w2, h, o, _, den = self._parts(x)
        return o - h * w2 / den

    def jacobian(self, x):
        """``dY/dx``; shape ``(n_y, 4)`` for one point, ``(L, n_y, 4)`` for rows."""
        diff, w2, h, o, q, den = self._parts(x)
        d_center = 2.0 * h * w2 * diff / den**2
        d_logw = -2.0 * h * w2 * q / den**2
        d_logh = -h * w2 / den
        d_logo = np.broadcast_to(o, d_center.shape)
        return np.stack([d_center, d_logw, d_logh, d_logo], axis=-1)


@dataclass(frozen=True, eq=False)
class FocusedModel:
    """Joint law of a subset of the parameters and the data.

    The likelihood of ``Y`` given the retained parameters is intractable,
    so only the prior density (a Gaussian marginal) is exposed.
    """

    base: GaussianNoiseModel
    keep: tuple

    has_likelihood = False
    has_prior_density = True
    has_gradient = False

    @property
    def n_x(self):
        return len(self.keep)

    @property
    def n_y(self):
        return self.base.n_y

    @property
    def prior_mean(self):
        return self.base.prior_mean[list(self.keep)]

    @property
    def prior_cov(self):
        idx = np.asarray(self.keep)
        return self.base.prior_cov[np.ix_(idx, idx)]

    def sample(self, L, rng):
        x, y = self.base.sample(L, rng)
        return x[:, list(self.keep)], y

    def prior_logpdf(self, x):
        return gaussian_logpdf(x, self.prior_mean, self.prior_cov)

    def log_likelihood(self, y, x):
        raise CapabilityError("likelihood of data given a parameter subset is not available")

    def jacobian(self, x):
        raise CapabilityError("focused problems expose no forward gradient")


@dataclass(frozen=True, eq=False)
class ImplicitModel:
    """Sampling-only view of a model (likelihood-free setting)."""

    base: object
    keep_prior: bool = False

    has_likelihood = False
    has_gradient = False

    @property
    def has_prior_density(self):
        return self.keep_prior

    @property
    def n_x(self):
        return self.base.n_x

    @property
    def n_y(self):
        return self.base.n_y

    def sample(self, L, rng):
        return self.base.sample(L, rng)

    def prior_logpdf(self, x):
        if not self.keep_prior:
            raise CapabilityError("prior density is not available for this model")
        return self.base.prior_logpdf(x)

    def log_likelihood(self, y, x):
        raise CapabilityError("likelihood is not available for an implicit model")

    def jacobian(self, x):
        raise CapabilityError("forward gradient is not available for an implicit model")


def sample_joint(model, L, seed, n_train=0):
    """``L`` i.i.d. joint draws from ``model``, deterministic in ``seed``."""
    if L < 1:
        raise ValueError(f"L must be positive, got {L}")
    x, y = model.sample(int(L), make_rng(seed, "joint"))
    return JointSampleSet(x, y, int(seed), int(n_train))


def log_likelihood(model, y, x):
    if not getattr(model, "has_likelihood", False):
        raise CapabilityError(f"{type(model).__name__} has no tractable likelihood")
    return model.log_likelihood(y, x)


def forward_jacobian(model, x):
    if not getattr(model, "has_gradient", False):
        raise CapabilityError(f"{type(model).__name__} does not expose forward gradients")
    return model.jacobian(x)


def closed_form_eig(model: LinearGaussianModel, U_r=None, V_s=None):
    """Exact EIG of a linear-Gaussian model, optionally of the projected pair
    ``(U_r^T X, V_s^T Y)``."""
    if not isinstance(model, LinearGaussianModel):
        raise CapabilityError("closed-form EIG needs a linear-Gaussian model")
    if U_r is None and V_s is None:
        return 0.5 * (logdet_spd(model.data_cov) - logdet_spd(model.noise_cov))
    U = np.eye(model.n_x) if U_r is None else np.atleast_2d(np.asarray(U_r, dtype=float))
    V = np.eye(model.n_y) if V_s is None else np.atleast_2d(np.asarray(V_s, dtype=float))
    if U.shape[0] != model.n_x or V.shape[0] != model.n_y:
        raise ValueError("projection bases do not match the model dimensions")
    return gaussian_mutual_information(
        U.T @ model.prior_cov @ U, U.T @ model.cross_cov @ V, V.T @ model.data_cov @ V
    )
