"""Plug-in log-densities from trained triangular maps.

A block map with ordering Y-then-X gives the marginal of Y (leading block)
and the conditional of X given Y (trailing block); the X-then-Y map gives
the other two. Conditionals come from slicing the trained joint map, no
per-``y`` retraining is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import standard_normal_logpdf
from .transport import BlockTriangularMap

KINDS = ("marginal-Y", "conditional-X-given-Y", "marginal-X", "conditional-Y-given-X", "joint")


def _finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    return z


def pullback_logpdf(tmap, z):
    """``log eta(S(z)) + log det grad S(z)`` with ``eta`` standard normal."""
    image, logdet = tmap.forward(_finite(z))
    return standard_normal_logpdf(image) + logdet


def marginal_logpdf(block: BlockTriangularMap, leading, variable=None):
    """Density of the leading variables through the leading block only.

    ``variable`` ("X" or "Y"), when given, must be the map's leading one.
    """
    if variable is not None and variable != block.leading_variable:
        raise ValueError(
            f"map ordering {block.ordering} cannot give the marginal of {variable}"
        )
    return pullback_logpdf(block._need("lead"), leading)


def conditional_logpdf(block: BlockTriangularMap, trailing, leading):
    """Density of the trailing variables given the leading ones."""
    trailing = _finite(trailing)
    leading = _finite(leading)
    single = trailing.ndim == 1
    t = np.atleast_2d(trailing)
    lead = np.atleast_2d(leading)
    if t.shape[1] != block.n_trail or lead.shape[1] != block.n_lead:
        raise ValueError(
            f"expected trailing width {block.n_trail} and leading width {block.n_lead}, "
            f"got {t.shape[1]} and {lead.shape[1]}"
        )
    if lead.shape[0] != t.shape[0]:
        lead = np.broadcast_to(lead, (t.shape[0], lead.shape[1]))
    out = pullback_logpdf(block._need("trail"), np.hstack([lead, t]))
    return float(out[0]) if single else out


def joint_logpdf(block: BlockTriangularMap, z):
    return pullback_logpdf(block, z)


@dataclass(frozen=True)
class DensityEstimate:
    """One of the four plug-in densities, backed by a trained block map."""

    kind: str
    backing: BlockTriangularMap

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        lead = self.backing.leading_variable
        expected = {
            "marginal-Y": "Y",
            "conditional-X-given-Y": "Y",
            "marginal-X": "X",
            "conditional-Y-given-X": "X",
        }.get(self.kind)
        if expected is not None and expected != lead:
            raise ValueError(f"{self.kind} needs a map whose leading variable is {expected}")

    def logpdf(self, target, given=None):
        if self.kind.startswith("marginal"):
            return marginal_logpdf(self.backing, target)
        if self.kind == "joint":
            return joint_logpdf(self.backing, target)
        if given is None:
            raise ValueError(f"{self.kind} needs the conditioning variables")
        return conditional_logpdf(self.backing, target, given)
