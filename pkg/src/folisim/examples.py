"""Built-in example foliations.

The degree-2 coefficients were curated offline: candidates were screened
for all-hyperbolic singularities across the atlas, tangency degree 2, full
path survival, and a solidly negative occupation-averaged transverse drift
(see the shipped configs for the frozen chart data).
"""

from __future__ import annotations

import numpy as np

from .foliation import Foliation, linear_foliation
from .poly import Poly, PolyField

LINEAR2D_RATES = (1.0, -1.0j)
LINEAR3D_RATES = (1.0, -1.0j, -0.5 - 0.5j)

# curated degree-2 field on the main chart of the invariant plane
DEG2_P = [
    ((0, 0), 0.33383544978777757 + 0.858821961208138j),
    ((0, 1), -0.12567430944254887 - 0.24781833003341247j),
    ((0, 2), 0.6140289503227745 - 0.6793799469417017j),
    ((1, 0), 0.33374360470808273 + 0.4463512263301641j),
    ((1, 1), -0.5525059470668898 - 0.2641830273494207j),
    ((2, 0), -0.9882654656194889 - 0.8513632750595108j),
]
DEG2_Q = [
    ((0, 0), 0.5770598484159587 - 0.07286660396103149j),
    ((0, 1), 0.06823393835945946 - 0.46425116087810697j),
    ((0, 2), -0.6181647574175859 - 1.2160633299472923j),
    ((1, 0), -0.40789546128027687 - 0.1284932227301635j),
    ((1, 1), 0.6762101742557455 - 0.1910425323242975j),
    ((2, 0), 0.914514470410357 + 0.37836357244481306j),
]
# transverse multiplier of the invariant plane: X_z = z (g0 + g1 x + g2 y)
DEG2_G = (0.17105545 - 0.64502992j,
          0.40668023 + 0.44812829j,
          0.16355801 + 0.22094414j)

GENERIC_START_2D = np.array([0.31 + 0.12j, -0.22 + 0.27j])
SECOND_START_2D = np.array([-0.55 - 0.31j, 0.64 + 0.18j])


def linear2d(**kw) -> Foliation:
    """Hyperbolic linear model X = x d/dx - i y d/dy on a single chart."""
    return linear_foliation(LINEAR2D_RATES, **kw)


def linear3d(**kw) -> Foliation:
    """3D linear model with invariant plane z = 0."""
    return linear_foliation(LINEAR3D_RATES, **kw)


def deg2_plane_field() -> PolyField:
    return PolyField([Poly(2, DEG2_P), Poly(2, DEG2_Q)])


def deg2_space_field() -> PolyField:
    p3 = [((e[0], e[1], 0), c) for e, c in DEG2_P]
    q3 = [((e[0], e[1], 0), c) for e, c in DEG2_Q]
    g0, g1, g2 = DEG2_G
    z3 = [((0, 0, 1), g0), ((1, 0, 1), g1), ((0, 1, 1), g2)]
    return PolyField([Poly(3, p3), Poly(3, q3), Poly(3, z3)])


def deg2_p2(metric_weights="fubini_study", **kw) -> Foliation:
    """Curated degree-2 foliation over the standard 3-chart atlas of P^2."""
    from .projective import build_projective_foliation

    return build_projective_foliation(deg2_plane_field(), degree=2, seed=22,
                                      metric_weights=metric_weights,
                                      r_valid=10.0, **kw)


def deg2_p3(metric_weights="fubini_study", **kw) -> Foliation:
    """Degree-2 foliation of P^3 with the plane {hom_2 = 0} invariant."""
    from .projective import build_projective_foliation

    return build_projective_foliation(deg2_space_field(), degree=2,
                                      plane_slot=2, seed=5,
                                      metric_weights=metric_weights,
                                      r_valid=10.0, **kw)


_BUILDERS = {
    "linear2d": linear2d,
    "linear3d": linear3d,
    "deg2_p2": deg2_p2,
    "deg2_p3": deg2_p3,
}


def make(name, **kw) -> Foliation:
    try:
        return _BUILDERS[name](**kw)
    except KeyError:
        raise KeyError(f"unknown example {name!r}; have {sorted(_BUILDERS)}")
