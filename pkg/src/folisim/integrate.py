"""Adaptive complex-time flow integration.

Complex time runs along the straight segment [0, dzeta]; the segment is
parametrized by s in [0,1] and integrated with an embedded Dormand-Prince
5(4) pair, vectorized over a batch of independent paths with per-path step
control. Optionally transports the variational matrix dV/dzeta = dX(q) V
and a flat covector ds/dzeta = -dX(q)^T s along the same segment.
"""

from __future__ import annotations

import numpy as np

# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_NSTAGE = 7

OK = 0
UNDERFLOW = 1
EXIT = 2


def _pack(q, v, s):
    parts = [q]
    if v is not None:
        parts.append(v.reshape(v.shape[0], -1))
    if s is not None:
        parts.append(s)
    return np.concatenate(parts, axis=1)


def _unpack(y, d, with_v, with_s):
    q = y[:, :d]
    k = d
    v = None
    s = None
    if with_v:
        v = y[:, k:k + d * d].reshape(-1, d, d)
        k += d * d
    if with_s:
        s = y[:, k:k + d]
    return q, v, s


def integrate_segment(field, q0, dzeta, rtol=1e-9, atol=1e-12, v0=None, s0=None,
                      max_norm=None, min_step=1e-12, max_steps=10000, h0=None,
                      h_out=None, v_mode=0):
    """Integrate dq/ds = dzeta * X(q) from s=0 to s=1 for a batch of paths.

    Parameters
    ----------
    field : PolyField
    q0 : (n, d) complex array of starting points
    dzeta : (n,) complex flow increments
    v0 : optional (n, d, d) variational matrices transported alongside
    s0 : optional (n, d) flat covectors (inverse-transpose transport)
    max_norm : abort a path when max|coord| exceeds this (status EXIT)
    h0 : optional (n,) warm-start step fractions from a previous segment
    h_out : optional (n,) array; receives the last accepted step fraction

    Returns
    -------
    (q1, v1, s1, status) with status an (n,) int array of OK/UNDERFLOW/EXIT.
    Failed paths hold their last accepted state.
    """
    q0 = np.asarray(q0, dtype=np.complex128)
    dzeta = np.asarray(dzeta, dtype=np.complex128)
    n, d = q0.shape
    with_v = v0 is not None
    with_s = s0 is not None

    def rhs(y, dz):
        q, v, s = _unpack(y, d, with_v, with_s)
        out = np.empty_like(y)
        fv, jac = field.eval_field_jac(q, want_jac=with_v or with_s)
        out[:, :d] = dz[:, None] * fv
        k = d
        if with_v:
            if v_mode == 0:
                dv = dz[:, None, None] * (jac @ v)
            else:
                dv = -dz[:, None, None] * (np.swapaxes(jac, 1, 2) @ v)
            out[:, k:k + d * d] = dv.reshape(len(y), d * d)
            k += d * d
        if with_s:
            st = s[:, :, None]
            ds = -dz[:, None, None] * (np.swapaxes(jac, 1, 2) @ st)
            out[:, k:k + d] = ds[:, :, 0]
        return out

    y = _pack(q0, v0, s0)
    status = np.zeros(n, dtype=np.int64)
    s_par = np.zeros(n)
    hstep = np.ones(n) if h0 is None else np.clip(h0, min_step, 1.0)
    active = np.ones(n, dtype=bool)
    # trivial increments are done immediately
    active &= np.abs(dzeta) > 0

    nsteps = 0
    while active.any():
        nsteps += 1
        if nsteps > max_steps:
            status[active] = UNDERFLOW
            break
        idx = np.nonzero(active)[0]
        n_active = len(idx)
        ya = y[idx]
        dz = dzeta[idx]
        h = np.minimum(hstep[idx], 1.0 - s_par[idx])

        ks = np.empty((_NSTAGE, n_active, ya.shape[1]), dtype=np.complex128)
        ks[0] = rhs(ya, dz)
        for i in range(1, _NSTAGE):
            acc = ya.copy()
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    acc += (h * a)[:, None] * ks[j]
            ks[i] = rhs(acc, dz)
        y5 = ya + h[:, None] * np.tensordot(_B5, ks, axes=(0, 0))
        ydiff = h[:, None] * np.tensordot(_B5 - _B4, ks, axes=(0, 0))

        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y5))
        err = np.max(np.abs(ydiff) / scale, axis=1)
        err = np.where(np.isfinite(err), err, np.inf)

        accept = err <= 1.0
        if max_norm is not None:
            q5 = y5[:, :d]
            exited = np.max(np.abs(q5), axis=1) > max_norm
            bad = accept & exited
            if bad.any():
                status[idx[bad]] = EXIT
                active[idx[bad]] = False
                accept = accept & ~bad

        good = idx[accept]
        y[good] = y5[accept]
        s_par[good] = s_par[good] + h[accept]
        done = good[s_par[good] >= 1.0 - 1e-14]
        active[done] = False

        with np.errstate(divide="ignore"):
            factor = 0.9 * err ** -0.2
        factor = np.clip(np.where(np.isfinite(factor), factor, 5.0), 0.2, 5.0)
        hstep[idx] = np.clip(h * factor, 0.0, 1.0)
        dead = idx[(hstep[idx] < min_step) & active[idx]]
        if len(dead):
            status[dead] = UNDERFLOW
            active[dead] = False

    if h_out is not None:
        h_out[:] = hstep

    q1, v1, s1 = _unpack(y, d, with_v, with_s)
    return q1.copy(), (v1.copy() if with_v else None), (s1.copy() if with_s else None), status


def exact_linear_segment(rates, q0, dzeta, v0=None, s0=None, v_mode=0):
    """Exact flow of the diagonal field (a1 x1, ..., ad xd) over dzeta.

    Matches the signature of integrate_segment for the diagonal-linear case.
    """
    q0 = np.asarray(q0, dtype=np.complex128)
    dzeta = np.asarray(dzeta, dtype=np.complex128)
    e = np.exp(np.outer(dzeta, rates))
    q1 = q0 * e
    v1 = None
    s1 = None
    if v0 is not None:
        v1 = v0 * e[:, :, None] if v_mode == 0 else v0 / e[:, :, None]
    if s0 is not None:
        s1 = s0 / e
    status = np.zeros(len(q0), dtype=np.int64)
    return q1, v1, s1, status
