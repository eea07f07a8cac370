"""The log-type ell function and the Poincare-type leaf metric.

The metric on a leaf has conformal factor 1/(|X|^2 ell^2) against the chart
Hermitian metric; in the flow-box coordinate z -> phi^z(p) its density is
ell(phi^z(p))^-2, which is what the Brownian sampler uses.
"""

from __future__ import annotations

import numpy as np

from .errors import AtSingularity, ChartExit, NonPositiveInput, NotTangent
from .foliation import AmbientPoint, Foliation

_SPLICE = 1.0 / 3.0
_A = np.log(3.0)
# taper 1 + (log3 - 1) / q(p u) for s > 1/3, with u = -log(3s) <= 0 and
# q(w) = 1 - w + w^2 - w^3/3; q matches e^{-w} to second order, so the
# splice at s = 1/3 is C^2, and the cubic tail keeps ell strictly
# decreasing and >= max(1, -log s) everywhere (see tests).
_P = 1.0 / (_A - 1.0)


def _q(w):
    return 1.0 - w + w * w - w ** 3 / 3.0


def ell(s):
    """Smooth decreasing surrogate for -log distance; exactly -log s for s <= 1/3."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0):
        raise NonPositiveInput("ell requires s > 0")
    u = -np.log(s_arr) - _A
    taper = 1.0 + (_A - 1.0) / _q(_P * np.minimum(u, 0.0))
    out = np.where(u >= 0, u + _A, taper)
    if np.isscalar(s) or s_arr.ndim == 0:
        return float(out)
    return out


def ell_d1(s):
    """d ell / ds (analytic)."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0):
        raise NonPositiveInput("ell requires s > 0")
    u = -np.log(s_arr) - _A
    w = _P * np.minimum(u, 0.0)
    q = _q(w)
    dq = -1.0 + 2.0 * w - w * w
    # h'(u) = (a-1) p g'(w), g = 1/q ; dl/ds = -h'(u)/s
    hp = (_A - 1.0) * _P * (-dq / q ** 2)
    out = np.where(u >= 0, -1.0 / s_arr, -hp / s_arr)
    if np.isscalar(s) or s_arr.ndim == 0:
        return float(out)
    return out


def ell_d2(s):
    """d^2 ell / ds^2 (analytic)."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0):
        raise NonPositiveInput("ell requires s > 0")
    u = -np.log(s_arr) - _A
    w = _P * np.minimum(u, 0.0)
    q = _q(w)
    dq = -1.0 + 2.0 * w - w * w
    d2q = 2.0 - 2.0 * w
    gp = -dq / q ** 2
    gpp = -d2q / q ** 2 + 2.0 * dq ** 2 / q ** 3
    hp = (_A - 1.0) * _P * gp
    hpp = (_A - 1.0) * _P ** 2 * gpp
    out = np.where(u >= 0, 1.0 / s_arr ** 2, (hpp + hp) / s_arr ** 2)
    if np.isscalar(s) or s_arr.ndim == 0:
        return float(out)
    return out


def ell_at(f: Foliation, p: AmbientPoint):
    """ell of the chart distance to the nearest listed singularity."""
    d = float(f.dist_to_singular(p.coords, p.chart))
    if d == 0.0:
        raise AtSingularity("ell_at at a singular point")
    if not np.isfinite(d):
        return 1.0
    return ell(d)


def ell_dist(dists):
    """Vectorized ell over an array of distances (inf allowed -> 1)."""
    dists = np.asarray(dists, dtype=np.float64)
    if np.any(dists <= 0):
        raise AtSingularity("distance to S vanished")
    out = np.ones_like(dists)
    finite = np.isfinite(dists)
    if finite.any():
        out[finite] = ell(dists[finite])
    return out


def poincare_type_norm(f: Foliation, p: AmbientPoint, v, angle_tol=1e-6):
    """Norm |v| / (|X(p)| ell(p)) of a leaf-tangent vector v at p."""
    v = np.asarray(v, dtype=np.complex128)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    X = f.eval_vector_field(p)
    nX = np.linalg.norm(X)
    if nX == 0.0:
        raise AtSingularity("field vanishes at p")
    # v must be C-proportional to X(p)
    inner = np.vdot(X, v)
    sin2 = max(0.0, 1.0 - abs(inner) ** 2 / (nX ** 2 * nv ** 2))
    if np.sqrt(sin2) > angle_tol:
        raise NotTangent("vector not tangent to the leaf direction")
    return nv / (nX * ell_at(f, p))


def flowbox_density(f: Foliation, p: AmbientPoint, z, rtol=1e-10):
    """Conformal density ell(phi^z(p))^-2 of the metric in the flow coordinate."""
    q = f.flow(p, complex(z), rtol=rtol)
    return 1.0 / ell_at(f, q) ** 2


def path_length(ells, dzetas):
    """Riemann-sum Poincare-type length of a sampled leaf path.

    ells[i] is ell at the point where increment dzetas[i] was taken; the
    first-order metric length of an increment is |dzeta| / ell.
    """
    ells = np.asarray(ells, dtype=np.float64)
    dzetas = np.asarray(dzetas, dtype=np.complex128)
    if len(dzetas) == 0:
        return 0.0
    return float(np.sum(np.abs(dzetas) / ells[: len(dzetas)]))


def segment_lengths(ells, dzetas):
    """Per-increment metric lengths |dzeta_i| / ell_i."""
    ells = np.asarray(ells, dtype=np.float64)
    dzetas = np.asarray(dzetas, dtype=np.complex128)
    return np.abs(dzetas) / ells[: len(dzetas)]


# -- chart/bundle weights --------------------------------------------------

def fs_tangent_form(coords):
    """Fubini-Study Hermitian form H(p) on a standard chart (matrix).

    H_ij = ((1+|p|^2) delta_ij - conj(p_i) p_j) / (1+|p|^2)^2, the same
    formula in every standard affine chart.
    """
    coords = np.asarray(coords, dtype=np.complex128)
    d = len(coords)
    n2 = 1.0 + float(np.vdot(coords, coords).real)
    H = ((n2 * np.eye(d, dtype=np.complex128)
          - np.conj(coords)[:, None] * coords[None, :]) / n2 ** 2)
    return H


def weight_matrix(f: Foliation, coords, chart):
    """Hermitian weight for tangent norms at a point: FS or Euclidean."""
    if f.metric_weights == "fubini_study":
        return fs_tangent_form(coords)
    return np.eye(f.dim, dtype=np.complex128)


def hermitian_norm(H, v):
    """sqrt(v^H H v) for a Hermitian positive form H."""
    return float(np.sqrt(np.real(np.vdot(v, H @ v))))
