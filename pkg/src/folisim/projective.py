"""Pushforward of polynomial fields across standard projective charts.

Used when building multi-chart foliations: the defining field of one chart
is pushed to the others and the denominator (a power of the coordinate that
vanishes off the overlap) is cleared, so every chart carries a polynomial
field defining the same foliation up to a non-vanishing factor on overlaps.
"""

from __future__ import annotations

import numpy as np

from .foliation import Chart, Foliation, ProjectiveAtlas, SingularPoint, classify_eigenvalues
from .poly import Poly, PolyField


def _sympy_poly(component: Poly, xs):
    import sympy as sp

    expr = sp.Integer(0)
    for exps, coeff in component.terms():
        term = sp.sympify(complex(coeff))
        for var, e in zip(xs, exps):
            term *= var ** int(e)
        expr += term
    return expr


def _to_terms(expr, ys):
    import sympy as sp

    poly = sp.Poly(sp.expand(expr), *ys)
    out = []
    for exps, coeff in poly.terms():
        c = complex(coeff)
        out.append((tuple(int(e) for e in exps), c))
    return out


def pushforward_field(field: PolyField, atlas: ProjectiveAtlas, i, j):
    """Polynomial field on chart j defining the same foliation as on chart i."""
    import sympy as sp

    m = atlas.dim
    xs = sp.symbols(f"_px0:{m}")
    ys = sp.symbols(f"_py0:{m}")

    hom_i = [None] * (m + 1)
    hom_i[atlas.denoms[i]] = sp.Integer(1)
    for b, s in enumerate(atlas.coord_slots[i]):
        hom_i[s] = xs[b]
    den_j = hom_i[atlas.denoms[j]]
    y_of_x = [sp.together(hom_i[s] / den_j) for s in atlas.coord_slots[j]]

    F = [_sympy_poly(c, xs) for c in field.components]
    G = [sp.together(sum(sp.diff(y_of_x[a], xs[b]) * F[b] for b in range(m)))
         for a in range(m)]

    hom_j = [None] * (m + 1)
    hom_j[atlas.denoms[j]] = sp.Integer(1)
    for b, s in enumerate(atlas.coord_slots[j]):
        hom_j[s] = ys[b]
    den_i = hom_j[atlas.denoms[i]]
    x_of_y = [sp.together(hom_j[s] / den_i) for s in atlas.coord_slots[i]]

    sub = dict(zip(xs, x_of_y))
    Gy = [sp.cancel(sp.together(g.subs(sub))) for g in G]

    # clear the pole: denominators are powers of den_i (= a single y or 1)
    max_pow = 0
    nums = []
    for g in Gy:
        num, den = sp.fraction(sp.cancel(g))
        p = sp.Poly(den, *ys)
        if len(p.terms()) != 1:
            raise ValueError(f"unexpected denominator {den}")
        exps, coeff = p.terms()[0]
        nums.append((num / coeff, exps))
        max_pow = max(max_pow, sum(exps))
    cleared = []
    for num, exps in nums:
        extra = sp.Integer(1)
        deficit = max_pow - sum(exps)
        if deficit:
            extra = den_i ** deficit
        cleared.append(sp.expand(num * extra))

    # remove a common monomial factor of den_i if every term carries it
    polys = [sp.Poly(c, *ys) for c in cleared]
    if den_i != 1:
        k = den_i.free_symbols.pop()
        k_index = ys.index(k)
        common = min((min((t[0][k_index] for t in p.terms()), default=0)
                      for p in polys if p.terms()), default=0)
        if common:
            cleared = [sp.expand(c / k ** common) for c in cleared]

    comps = [Poly(m, _to_terms(c, ys)) for c in cleared]
    return PolyField(comps)


def locate_zeros(field: PolyField, box=2.5, n_seeds=400, seed=0,
                 newton_tol=1e-13, keep_box=3.0):
    """Numerically locate the zeros of a polynomial field in a chart box."""
    rng = np.random.default_rng(seed)
    m = field.nvars
    found = []
    for _ in range(n_seeds):
        q = box * (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
        ok = False
        for _ in range(60):
            val = field(q)
            if np.linalg.norm(val) < newton_tol:
                ok = True
                break
            jac = field.jacobian(q)
            det = np.linalg.det(jac)
            if abs(det) < 1e-14:
                break
            q = q - np.linalg.solve(jac, val)
            if np.max(np.abs(q)) > 50:
                break
        if not ok or np.max(np.abs(q)) > keep_box:
            continue
        if all(np.linalg.norm(q - z) > 1e-7 for z in found):
            found.append(q)
    return found


def build_projective_foliation(field0: PolyField, degree, plane_slot=None,
                               sing_box=2.5, seed=0, **kw):
    """Foliation over the standard atlas from the main-chart field.

    Pushes the field to every chart, locates and classifies chart
    singularities numerically, and assembles the Foliation.
    """
    dim = field0.nvars
    atlas = ProjectiveAtlas(dim, plane_slot=plane_slot)
    charts = []
    for j in range(atlas.n_charts):
        fld = field0 if j == 0 else pushforward_field(field0, atlas, 0, j)
        sings = []
        for loc in locate_zeros(fld, box=sing_box, seed=seed + 7 * j):
            eigs = np.linalg.eigvals(fld.jacobian(loc))
            sings.append(SingularPoint(loc, eigs, classify_eigenvalues(eigs)))
        charts.append(Chart(fld, sings))
    return Foliation(charts, atlas, degree=degree, **kw)
