"""Foliations by polynomial vector fields on affine charts.

A foliation is given per chart by a polynomial vector field; charts are
either a single affine chart or the standard affine atlas of a projective
space, with hard-coded rational transitions. Fields on overlapping charts
must agree up to a non-vanishing factor (they define the same leaves); the
atlas only moves points, tangent vectors and covectors between charts.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from . import integrate
from ._kernels import HAVE_NUMBA, integrate_segment_numba
from .errors import (AtSingularity, ChartExit, ChartMismatch, DegenerateLine,
                     NoConvergence, SingularJacobian, StepUnderflow)
from .poly import Poly, PolyField

HYPERBOLIC = "hyperbolic"
NON_HYPERBOLIC = "non_hyperbolic"


def classify_eigenvalues(eigs, zero_tol=1e-9, ratio_tol=1e-9):
    """Hyperbolic iff no eigenvalue vanishes and no two are R-colinear.

    R-colinearity of a pair is |Im(ratio)| <= ratio_tol.
    """
    eigs = [complex(e) for e in eigs]
    if len(eigs) not in (2, 3):
        raise ValueError("expected 2 or 3 eigenvalues")
    if any(abs(e) <= zero_tol for e in eigs):
        return NON_HYPERBOLIC
    for i in range(len(eigs)):
        for j in range(i + 1, len(eigs)):
            if abs((eigs[i] / eigs[j]).imag) <= ratio_tol:
                return NON_HYPERBOLIC
    return HYPERBOLIC


@dataclass
class SingularPoint:
    location: np.ndarray          # chart coordinates
    eigenvalues: np.ndarray       # spectrum of dX there
    classification: str
    linear_model: tuple | None = None   # (alpha, beta[, gamma]) if declared

    def __post_init__(self):
        self.location = np.asarray(self.location, dtype=np.complex128)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.complex128)


@dataclass
class AmbientPoint:
    chart: int
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.complex128)
        if not np.isfinite(self.coords.view(np.float64)).all():
            raise ValueError("non-finite coordinates")

    def copy(self):
        return AmbientPoint(self.chart, self.coords.copy())


class SingleChartAtlas:
    """One affine chart; leaving it is a ChartExit."""

    def __init__(self, dim, plane_coord=None):
        self.dim = dim
        self.n_charts = 1
        self._plane_coord = plane_coord

    def to_chart(self, coords, i, j):
        if i != 0 or j != 0:
            raise ChartMismatch("single-chart atlas")
        return np.asarray(coords, dtype=np.complex128)

    def transition_jacobian(self, coords, i, j):
        if i != 0 or j != 0:
            raise ChartMismatch("single-chart atlas")
        return np.eye(self.dim, dtype=np.complex128)

    def best_chart(self, coords, i):
        return 0

    def plane_coord(self, chart):
        return self._plane_coord

    def plane_distance(self, coords, chart):
        if self._plane_coord is None:
            raise ChartMismatch("no invariant plane marked")
        return abs(coords[..., self._plane_coord])


class ProjectiveAtlas:
    """Standard affine charts of P^m, possibly omitting some.

    Chart k is indexed by its homogeneous denominator slot denoms[k]; its
    coordinates are the remaining homogeneous slots, in increasing slot
    order, divided by the denominator. When a hyperplane {hom[plane_slot]=0}
    is marked invariant, the chart with that denominator is omitted and the
    plane appears in every chart as a coordinate hyperplane.
    """

    def __init__(self, dim, denoms=None, plane_slot=None):
        self.dim = dim
        m = dim + 1
        if denoms is None:
            denoms = [m - 1] + [k for k in range(m - 1)]
            if plane_slot is not None:
                denoms = [k for k in denoms if k != plane_slot]
        self.denoms = list(denoms)
        self.n_charts = len(self.denoms)
        self.plane_slot = plane_slot
        # coord_slots[k][a] = homogeneous slot of coordinate a in chart k
        self.coord_slots = [
            [s for s in range(m) if s != dk] for dk in self.denoms
        ]

    def embed(self, coords, chart):
        """Homogeneous representative with 1 in the chart's denominator slot."""
        coords = np.asarray(coords, dtype=np.complex128)
        h = np.empty(coords.shape[:-1] + (self.dim + 1,), dtype=np.complex128)
        h[..., self.denoms[chart]] = 1.0
        for a, s in enumerate(self.coord_slots[chart]):
            h[..., s] = coords[..., a]
        return h

    def to_chart(self, coords, i, j):
        if i == j:
            return np.asarray(coords, dtype=np.complex128)
        h = self.embed(coords, i)
        den = h[..., self.denoms[j]]
        if np.any(den == 0):
            raise ChartMismatch("point not visible in target chart")
        out = np.empty_like(np.asarray(coords, dtype=np.complex128))
        for a, s in enumerate(self.coord_slots[j]):
            out[..., a] = h[..., s] / den
        return out

    def transition_jacobian(self, coords, i, j):
        """d(to_chart(., i, j)) at coords (single point)."""
        coords = np.asarray(coords, dtype=np.complex128)
        if i == j:
            return np.eye(self.dim, dtype=np.complex128)
        h = self.embed(coords, i)
        dj = self.denoms[j]
        den = h[dj]
        if den == 0:
            raise ChartMismatch("point not visible in target chart")
        J = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for a, s in enumerate(self.coord_slots[j]):        # output index
            for b, t in enumerate(self.coord_slots[i]):    # input index
                J[a, b] = ((1.0 if s == t else 0.0) * den
                           - h[s] * (1.0 if dj == t else 0.0)) / den ** 2
        return J

    def best_chart(self, coords, i):
        h = self.embed(coords, i)
        mags = [abs(h[dk]) for dk in self.denoms]
        return int(np.argmax(mags))

    def plane_coord(self, chart):
        if self.plane_slot is None:
            return None
        return self.coord_slots[chart].index(self.plane_slot)

    def plane_distance(self, coords, chart):
        """|hom_plane| / ||hom||: chart-independent projective plane distance."""
        if self.plane_slot is None:
            raise ChartMismatch("no invariant plane marked")
        h = self.embed(coords, chart)
        return np.abs(h[..., self.plane_slot]) / np.linalg.norm(h, axis=-1)


@dataclass
class Chart:
    field: PolyField
    singularities: list = dfield(default_factory=list)

    def __post_init__(self):
        self._sing_locs = (np.array([s.location for s in self.singularities])
                           if self.singularities else np.zeros((0, self.field.nvars),
                                                               dtype=np.complex128))
        self.diag_rates = self.field.diagonal_rates()

    def sing_locations(self):
        return self._sing_locs


class Foliation:
    """Immutable after construction; all operations are pure."""

    def __init__(self, charts, atlas, degree, residual_tol=1e-8,
                 r_switch=2.0, r_valid=8.0, metric_weights="euclidean"):
        self.charts = list(charts)
        self.atlas = atlas
        self.dim = self.charts[0].field.nvars
        self.degree = int(degree)
        self.residual_tol = residual_tol
        self.r_switch = r_switch
        self.r_valid = r_valid
        self.metric_weights = metric_weights
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if len(self.charts) != atlas.n_charts:
            raise ValueError("chart count mismatch with atlas")
        if any(c.field.nvars != self.dim for c in self.charts):
            raise ValueError("chart dimension mismatch")
        self._validate()

    # -- construction-time invariants ------------------------------------
    def _validate(self):
        for k, chart in enumerate(self.charts):
            pc = self.atlas.plane_coord(k)
            if pc is not None:
                comp = chart.field.components[pc]
                if not comp.divisible_by_var(pc):
                    raise ValueError(
                        f"chart {k}: transverse component not divisible by the "
                        "plane coordinate; plane is not invariant")
            for s in chart.singularities:
                res = np.linalg.norm(chart.field(s.location))
                if res > self.residual_tol:
                    raise ValueError(
                        f"chart {k}: listed singularity has residual {res:.2e}")

    # -- basic queries ----------------------------------------------------
    def field(self, chart):
        return self.charts[chart].field

    def eval_vector_field(self, p: AmbientPoint):
        self._check_chart(p)
        return self.field(p.chart)(p.coords)

    def jacobian(self, p: AmbientPoint):
        self._check_chart(p)
        return self.field(p.chart).jacobian(p.coords)

    def _check_chart(self, p: AmbientPoint):
        if not (0 <= p.chart < len(self.charts)):
            raise ChartMismatch(f"no chart {p.chart}")
        if len(p.coords) != self.dim:
            raise ChartMismatch("coordinate arity mismatch")

    def dist_to_singular(self, coords, chart):
        """Euclidean chart distance to the nearest listed singularity."""
        locs = self.charts[chart].sing_locations()
        if len(locs) == 0:
            return np.full(np.shape(coords)[:-1], np.inf)
        d = np.linalg.norm(np.asarray(coords)[..., None, :] - locs, axis=-1)
        return d.min(axis=-1)

    def is_regular(self, p: AmbientPoint, tol=0.0):
        return self.dist_to_singular(p.coords, p.chart) > tol

    # -- singularities ------------------------------------------------------
    def refine_singularity(self, seed: AmbientPoint, tol=1e-12, max_iter=50):
        """Newton iteration on X = 0 from the seed; classifies the limit."""
        self._check_chart(seed)
        f = self.field(seed.chart)
        q = seed.coords.astype(np.complex128).copy()
        for _ in range(max_iter):
            val = f(q)
            if np.linalg.norm(val) <= tol:
                break
            jac = f.jacobian(q)
            if abs(np.linalg.det(jac)) < 1e-300:
                raise SingularJacobian("dX singular during Newton refinement")
            q = q - np.linalg.solve(jac, val)
        else:
            raise NoConvergence("singularity refinement did not converge")
        jac = f.jacobian(q)
        if abs(np.linalg.det(jac)) == 0.0:
            raise SingularJacobian("dX singular at the refined point")
        eigs = np.linalg.eigvals(jac)
        model = None
        rates = self.charts[seed.chart].diag_rates
        if rates is not None:
            model = tuple(rates)
        return SingularPoint(q, eigs, classify_eigenvalues(eigs), model)

    # -- flow ---------------------------------------------------------------
    def flow(self, p: AmbientPoint, zeta, rtol=1e-10, atol=1e-13):
        """phi^zeta(p) within p's chart. Raises ChartExit / StepUnderflow."""
        q, _, _ = self.flow_with_transport(p, zeta, rtol=rtol, atol=atol)
        return q

    def flow_with_transport(self, p: AmbientPoint, zeta, v0=None, s0=None,
                            rtol=1e-10, atol=1e-13):
        self._check_chart(p)
        q1, v1, s1, status = self.flow_batch(
            p.coords[None, :], np.array([zeta], dtype=np.complex128), p.chart,
            v0=None if v0 is None else v0[None], s0=None if s0 is None else s0[None],
            rtol=rtol, atol=atol)
        st = int(status[0])
        if st == integrate.EXIT:
            raise ChartExit("flow left the chart's valid domain")
        if st == integrate.UNDERFLOW:
            raise StepUnderflow("flow step control underflowed near S")
        return (AmbientPoint(p.chart, q1[0]),
                None if v1 is None else v1[0],
                None if s1 is None else s1[0])

    def flow_batch(self, coords, dzeta, chart, v0=None, s0=None,
                   rtol=1e-9, atol=1e-12, max_steps=10000, h0=None, h_out=None,
                   v_mode=0):
        """Vectorized in-chart flow over a batch; returns (q, V, s, status)."""
        ch = self.charts[chart]
        if ch.diag_rates is not None:
            q1, v1, s1, status = integrate.exact_linear_segment(
                ch.diag_rates, coords, dzeta, v0=v0, s0=s0, v_mode=v_mode)
            out = np.max(np.abs(q1), axis=1) > self.r_valid
            status = np.where(out, integrate.EXIT, status)
            return q1, v1, s1, status
        if HAVE_NUMBA and v_mode == 0:
            return integrate_segment_numba(
                ch.field, coords, dzeta, rtol=rtol, atol=atol, v0=v0, s0=s0,
                max_norm=self.r_valid, max_steps=max_steps, h0=h0, h_out=h_out)
        return integrate.integrate_segment(
            ch.field, coords, dzeta, rtol=rtol, atol=atol, v0=v0, s0=s0,
            max_norm=self.r_valid, max_steps=max_steps, h0=h0, h_out=h_out,
            v_mode=v_mode)

    # -- chart management ----------------------------------------------------
    def renormalize(self, p: AmbientPoint):
        """Move p to the chart where it is best conditioned, if needed."""
        if np.max(np.abs(p.coords)) <= self.r_switch:
            return p, None
        j = self.atlas.best_chart(p.coords, p.chart)
        if j == p.chart:
            return p, None
        coords = self.atlas.to_chart(p.coords, p.chart, j)
        jac = self.atlas.transition_jacobian(p.coords, p.chart, j)
        return AmbientPoint(j, coords), jac

    def plane_distance(self, p: AmbientPoint):
        return float(self.atlas.plane_distance(p.coords, p.chart))

    def has_plane(self):
        return self.atlas.plane_coord(0) is not None

    # -- tangency degree -------------------------------------------------------
    def restricted_plane_field(self, chart=0):
        """The field of F|_P in the plane coordinates of a chart (2-var)."""
        pc = self.atlas.plane_coord(chart)
        if self.dim == 2:
            return self.field(chart), (0, 1)
        if pc is None:
            raise ChartMismatch("chart does not meet the invariant plane")
        keep = [i for i in range(self.dim) if i != pc]
        comps = []
        for i in keep:
            terms = []
            for exps, c in self.field(chart).components[i].terms():
                if exps[pc] == 0:
                    terms.append((tuple(exps[j] for j in keep), c))
            comps.append(Poly(2, terms))
        return PolyField(comps), tuple(keep)

    def tangency_count_for_line(self, p0, v, chart=0, root_tol=1e-6):
        """Number of tangencies of F|_P with the affine line p0 + t v in P.

        Raises DegenerateLine when the tangency polynomial is degenerate
        (e.g. the line passes through a singularity or drops degree).
        """
        fld, _ = self.restricted_plane_field(chart)
        p0 = np.asarray(p0, dtype=np.complex128)
        v = np.asarray(v, dtype=np.complex128)
        cx = _compose_line(fld.components[0], p0, v)
        cy = _compose_line(fld.components[1], p0, v)
        tang = np.polynomial.polynomial.polysub(
            np.polynomial.polynomial.polymul(cx, [v[1]]),
            np.polynomial.polynomial.polymul(cy, [v[0]]))
        tang = np.trim_zeros(tang, "b")
        if len(tang) <= 1:
            raise DegenerateLine("tangency polynomial degenerate")
        scale = np.max(np.abs(tang))
        if abs(tang[-1]) < 1e-10 * scale:
            raise DegenerateLine("tangency polynomial drops degree")
        roots = np.roots(tang[::-1] / scale)
        # cluster roots, count distinct; a root at a singularity is degenerate
        roots = sorted(roots, key=lambda z: (z.real, z.imag))
        distinct = []
        for r in roots:
            if not distinct or abs(r - distinct[-1]) > root_tol:
                distinct.append(r)
        sings = self.charts[chart].sing_locations()
        if self.dim == 3:
            pc = self.atlas.plane_coord(chart)
            keep = [i for i in range(self.dim) if i != pc]
            sings = sings[:, keep] if len(sings) else sings
        for r in distinct:
            pt = p0 + r * v
            if len(sings) and np.min(np.linalg.norm(sings - pt, axis=1)) < root_tol:
                raise DegenerateLine("tangency at a singular point")
        return len(distinct)

    def tangency_degree(self, rng=None, n_lines=9, box=1.5):
        """Tangency count of F|_P with generic affine lines (majority vote)."""
        rng = np.random.default_rng(rng)
        counts = []
        attempts = 0
        while len(counts) < n_lines and attempts < 8 * n_lines:
            attempts += 1
            p0 = box * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            v /= np.linalg.norm(v)
            try:
                counts.append(self.tangency_count_for_line(p0, v))
            except DegenerateLine:
                continue
        if not counts:
            raise DegenerateLine("no generic line found")
        values, freq = np.unique(counts, return_counts=True)
        best = values[np.argmax(freq)]
        if freq.max() < 0.7 * len(counts):
            raise DegenerateLine(f"unstable tangency counts: {counts}")
        return int(best)


def _compose_line(poly: Poly, p0, v):
    """1-variable coefficient array (ascending) of poly(p0 + t v)."""
    P = np.polynomial.polynomial
    out = np.zeros(1, dtype=np.complex128)
    for exps, coeff in poly.terms():
        term = np.array([coeff], dtype=np.complex128)
        for var, e in enumerate(exps):
            lin = np.array([p0[var], v[var]], dtype=np.complex128)
            for _ in range(e):
                term = P.polymul(term, lin)
        out = P.polyadd(out, term)
    return out


def linear_foliation(rates, r_valid=8.0, **kw):
    """Globally linear single-chart model X = sum_i rate_i x_i d/dx_i."""
    rates = np.asarray(rates, dtype=np.complex128)
    dim = len(rates)
    comps = []
    for i, a in enumerate(rates):
        e = [0] * dim
        e[i] = 1
        comps.append(Poly(dim, [(tuple(e), a)]))
    fld = PolyField(comps)
    eigs = rates
    sing = SingularPoint(np.zeros(dim, dtype=np.complex128), eigs,
                         classify_eigenvalues(eigs), tuple(rates))
    plane_coord = dim - 1 if dim == 3 else None
    atlas = SingleChartAtlas(dim, plane_coord=plane_coord)
    return Foliation([Chart(fld, [sing])], atlas, degree=1,
                     r_switch=np.inf, r_valid=r_valid, **kw)
