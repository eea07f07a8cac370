"""Sparse complex polynomials in 2 or 3 variables and polynomial vector fields.

Coefficients are stored as (exponent tuple, complex coefficient) terms.
Evaluation is vectorized over arrays of points of shape (..., nvars).
"""

from __future__ import annotations

import numpy as np


class Poly:
    """A complex polynomial in `nvars` variables, stored sparsely."""

    def __init__(self, nvars, terms):
        """terms: iterable of (exponent_tuple, coefficient)."""
        self.nvars = int(nvars)
        collected = {}
        for exps, coeff in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars:
                raise ValueError("exponent tuple length != nvars")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            c = collected.get(exps, 0j) + complex(coeff)
            collected[exps] = c
        items = sorted((e, c) for e, c in collected.items() if c != 0)
        self.exps = np.array([e for e, _ in items], dtype=np.int64).reshape(-1, self.nvars)
        self.coeffs = np.array([c for _, c in items], dtype=np.complex128)

    @property
    def degree(self):
        if len(self.coeffs) == 0:
            return -1
        return int(self.exps.sum(axis=1).max())

    def __call__(self, pts):
        """Evaluate at pts with shape (..., nvars); returns shape (...)."""
        pts = np.asarray(pts, dtype=np.complex128)
        if pts.shape[-1] != self.nvars:
            raise ValueError("point dimension mismatch")
        if len(self.coeffs) == 0:
            return np.zeros(pts.shape[:-1], dtype=np.complex128)
        flat = pts.reshape(-1, self.nvars)
        # (n, nterms, nvars) powers -> product over vars -> dot with coeffs
        powers = flat[:, None, :] ** self.exps[None, :, :]
        vals = powers.prod(axis=-1) @ self.coeffs
        return vals.reshape(pts.shape[:-1])

    def diff(self, var):
        """Partial derivative with respect to variable index `var`."""
        terms = []
        for exps, coeff in zip(self.exps, self.coeffs):
            e = exps[var]
            if e == 0:
                continue
            new = list(exps)
            new[var] = e - 1
            terms.append((tuple(new), coeff * e))
        return Poly(self.nvars, terms)

    def divisible_by_var(self, var):
        """True if every term contains the variable `var`."""
        if len(self.coeffs) == 0:
            return True
        return bool((self.exps[:, var] >= 1).all())

    def terms(self):
        return [(tuple(int(x) for x in e), complex(c)) for e, c in zip(self.exps, self.coeffs)]


class PolyField:
    """A polynomial vector field: one Poly per coordinate."""

    def __init__(self, components):
        components = list(components)
        if not components:
            raise ValueError("empty field")
        self.nvars = components[0].nvars
        if any(c.nvars != self.nvars for c in components):
            raise ValueError("component arity mismatch")
        if len(components) != self.nvars:
            raise ValueError("field must have nvars components")
        self.components = components
        self._jac = [[c.diff(j) for j in range(self.nvars)] for c in components]
        self.degree = max(c.degree for c in components)
        self._build_tables()

    def _build_tables(self):
        """Fused monomial table: field and Jacobian become one matmul."""
        d = self.nvars
        polys = list(self.components) + [self._jac[i][j]
                                         for i in range(d) for j in range(d)]
        mono = {}
        for p in polys:
            for e, _ in p.terms():
                mono.setdefault(e, len(mono))
        order = sorted(mono, key=mono.get)
        mono = {e: k for k, e in enumerate(order)}
        nm = max(len(mono), 1)
        self._mono_exps = (np.array(order, dtype=np.int64).reshape(nm if order else 0, d)
                           if order else np.zeros((0, d), dtype=np.int64))
        C = np.zeros((len(polys), nm), dtype=np.complex128)
        for r, p in enumerate(polys):
            for e, c in p.terms():
                C[r, mono[e]] = c
        self._C_field = np.ascontiguousarray(C[:d])
        self._C_jac = np.ascontiguousarray(C[d:])
        self._maxdeg_var = (self._mono_exps.max(axis=0)
                            if len(self._mono_exps) else np.zeros(d, dtype=np.int64))

    def _monomials(self, pts):
        """(n_monomials, N) matrix of monomial values at flat points (N, d)."""
        N = pts.shape[0]
        nm = len(self._mono_exps)
        if nm == 0:
            return np.zeros((0, N), dtype=np.complex128)
        M = np.ones((nm, N), dtype=np.complex128)
        for v in range(self.nvars):
            deg = int(self._maxdeg_var[v])
            if deg == 0:
                continue
            pw = np.empty((deg + 1, N), dtype=np.complex128)
            pw[0] = 1.0
            col = pts[:, v]
            for k in range(1, deg + 1):
                np.multiply(pw[k - 1], col, out=pw[k])
            M *= pw[self._mono_exps[:, v]]
        return M

    def eval_field_jac(self, pts, want_jac=True):
        """(field values, Jacobians or None) at pts (N, d), fused fast path."""
        pts = np.asarray(pts, dtype=np.complex128)
        M = self._monomials(pts)
        F = (self._C_field @ M).T
        J = None
        if want_jac:
            d = self.nvars
            J = (self._C_jac @ M).reshape(d, d, len(pts)).transpose(2, 0, 1)
        return np.ascontiguousarray(F), J

    @classmethod
    def from_terms(cls, nvars, component_terms):
        """component_terms: list (one per component) of term lists."""
        return cls([Poly(nvars, t) for t in component_terms])

    def __call__(self, pts):
        """Field values at pts (..., nvars) -> (..., nvars)."""
        pts = np.asarray(pts, dtype=np.complex128)
        flat = pts.reshape(-1, self.nvars)
        F, _ = self.eval_field_jac(flat, want_jac=False)
        return F.reshape(pts.shape)

    def jacobian(self, pts):
        """Jacobian matrices dX at pts (..., nvars) -> (..., nvars, nvars)."""
        pts = np.asarray(pts, dtype=np.complex128)
        flat = pts.reshape(-1, self.nvars)
        _, J = self.eval_field_jac(flat)
        return J.reshape(pts.shape + (self.nvars,))

    def trace_jacobian(self, pts):
        pts = np.asarray(pts, dtype=np.complex128)
        out = np.zeros(pts.shape[:-1], dtype=np.complex128)
        for i in range(self.nvars):
            out += self._jac[i][i](pts)
        return out

    def diagonal_rates(self):
        """If the field is exactly (a1 x1, ..., an xn), return the rates, else None.

        Such charts admit the exact exponential flow.
        """
        rates = []
        for i, comp in enumerate(self.components):
            if len(comp.coeffs) != 1:
                return None
            exps = comp.exps[0]
            want = np.zeros(self.nvars, dtype=np.int64)
            want[i] = 1
            if not (exps == want).all():
                return None
            rates.append(complex(comp.coeffs[0]))
        return np.array(rates, dtype=np.complex128)
