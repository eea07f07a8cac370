"""Numba kernels: per-path adaptive RK45 segments and whole diffusion steps.

The numpy implementations in integrate.py / brownian.py remain the
reference; the kernels are cross-checked against them in the tests.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False

OK = 0
UNDERFLOW = 1
EXIT = 2

# walk_chunk per-path return codes
W_DONE = 0
W_RENORM = 1
W_MORE = 2
W_DEAD = 3

_ELL_A = float(np.log(3.0))
_ELL_P = 1.0 / (_ELL_A - 1.0)

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _ell_scalar(dist):
        if dist <= 1.0 / 3.0:
            return -np.log(dist)
        u = -np.log(dist) - _ELL_A
        w = _ELL_P * u
        q = 1.0 - w + w * w - w ** 3 / 3.0
        return 1.0 + (_ELL_A - 1.0) / q

    @numba.njit(cache=True)
    def _eval_field_jac(exps, Cf, Cj, nm, w, F, J, want_jac):
        d = w.shape[0]
        for a in range(d):
            F[a] = 0.0 + 0.0j
        if want_jac:
            for a in range(d):
                for b in range(d):
                    J[a, b] = 0.0 + 0.0j
        for m in range(nm):
            mono = 1.0 + 0.0j
            for v in range(d):
                e = exps[m, v]
                for _ in range(e):
                    mono *= w[v]
            for a in range(d):
                c = Cf[a, m]
                if c != 0:
                    F[a] += c * mono
            if want_jac:
                for a in range(d):
                    for b in range(d):
                        c = Cj[a * d + b, m]
                        if c != 0:
                            J[a, b] += c * mono

    @numba.njit(cache=True)
    def _rhs(exps, Cf, Cj, nm, y, dz, d, with_v, with_s, v_mode, F, J, out):
        _eval_field_jac(exps, Cf, Cj, nm, y[:d], F, J, with_v or with_s)
        for a in range(d):
            out[a] = dz * F[a]
        k = d
        if with_v:
            if v_mode == 0:
                for a in range(d):
                    for b in range(d):
                        acc = 0.0 + 0.0j
                        for c in range(d):
                            acc += J[a, c] * y[k + c * d + b]
                        out[k + a * d + b] = dz * acc
            else:
                # covector-matrix transport: dW = -dz * J^T W
                for a in range(d):
                    for b in range(d):
                        acc = 0.0 + 0.0j
                        for c in range(d):
                            acc += J[c, a] * y[k + c * d + b]
                        out[k + a * d + b] = -dz * acc
            k += d * d
        if with_s:
            for a in range(d):
                acc = 0.0 + 0.0j
                for c in range(d):
                    acc += J[c, a] * y[k + c]
                out[k + a] = -dz * acc

    @numba.njit(cache=True)
    def _rk_one(exps, Cf, Cj, nm, y, wlen, d, dz, with_v, with_s, v_mode,
                rtol, atol, max_norm, min_step, max_steps, h_start,
                scratch):
        """One adaptive RK45 complex segment on state y (modified in place).

        Returns (status, last step fraction). On failure y holds the last
        accepted state.
        """
        a21 = 1 / 5
        a31, a32 = 3 / 40, 9 / 40
        a41, a42, a43 = 44 / 45, -56 / 15, 32 / 9
        a51, a52, a53, a54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
        a61, a62, a63, a64, a65 = (9017 / 3168, -355 / 33, 46732 / 5247,
                                   49 / 176, -5103 / 18656)
        b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
        e1, e3, e4, e5, e6, e7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                  -17253 / 339200, 22 / 525, -1 / 40)
        ytmp = scratch[0]
        ynew = scratch[1]
        k1 = scratch[2]
        k2 = scratch[3]
        k3 = scratch[4]
        k4 = scratch[5]
        k5 = scratch[6]
        k6 = scratch[7]
        k7 = scratch[8]
        F = scratch[9][:d]
        J = scratch[10][:d * d].reshape(d, d)

        if dz == 0:
            return OK, h_start
        s_par = 0.0
        h = h_start
        if h > 1.0:
            h = 1.0
        if h < min_step:
            h = min_step
        nsteps = 0
        while s_par < 1.0 - 1e-14:
            nsteps += 1
            if nsteps > max_steps:
                return UNDERFLOW, h
            if h > 1.0 - s_par:
                h = 1.0 - s_par
            _rhs(exps, Cf, Cj, nm, y, dz, d, with_v, with_s, v_mode, F, J, k1)
            for a in range(wlen):
                ytmp[a] = y[a] + h * a21 * k1[a]
            _rhs(exps, Cf, Cj, nm, ytmp, dz, d, with_v, with_s, v_mode, F, J, k2)
            for a in range(wlen):
                ytmp[a] = y[a] + h * (a31 * k1[a] + a32 * k2[a])
            _rhs(exps, Cf, Cj, nm, ytmp, dz, d, with_v, with_s, v_mode, F, J, k3)
            for a in range(wlen):
                ytmp[a] = y[a] + h * (a41 * k1[a] + a42 * k2[a] + a43 * k3[a])
            _rhs(exps, Cf, Cj, nm, ytmp, dz, d, with_v, with_s, v_mode, F, J, k4)
            for a in range(wlen):
                ytmp[a] = y[a] + h * (a51 * k1[a] + a52 * k2[a]
                                      + a53 * k3[a] + a54 * k4[a])
            _rhs(exps, Cf, Cj, nm, ytmp, dz, d, with_v, with_s, v_mode, F, J, k5)
            for a in range(wlen):
                ytmp[a] = y[a] + h * (a61 * k1[a] + a62 * k2[a] + a63 * k3[a]
                                      + a64 * k4[a] + a65 * k5[a])
            _rhs(exps, Cf, Cj, nm, ytmp, dz, d, with_v, with_s, v_mode, F, J, k6)
            for a in range(wlen):
                ynew[a] = y[a] + h * (b1 * k1[a] + b3 * k3[a] + b4 * k4[a]
                                      + b5 * k5[a] + b6 * k6[a])
            _rhs(exps, Cf, Cj, nm, ynew, dz, d, with_v, with_s, v_mode, F, J, k7)

            err = 0.0
            bad = False
            for a in range(wlen):
                ea = h * (e1 * k1[a] + e3 * k3[a] + e4 * k4[a]
                          + e5 * k5[a] + e6 * k6[a] + e7 * k7[a])
                ya = abs(y[a])
                yn = abs(ynew[a])
                if not np.isfinite(yn):
                    bad = True
                    break
                sc = atol + rtol * (ya if ya > yn else yn)
                r = abs(ea) / sc
                if r > err:
                    err = r
            if bad:
                err = 1e6

            if err <= 1.0:
                if max_norm > 0:
                    for a in range(d):
                        if abs(ynew[a]) > max_norm:
                            return EXIT, h
                for a in range(wlen):
                    y[a] = ynew[a]
                s_par += h
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            if fac > 5.0:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
            h *= fac
            if h > 1.0:
                h = 1.0
            if h < min_step and s_par < 1.0 - 1e-14:
                return UNDERFLOW, h
        return OK, h

    @numba.njit(cache=True)
    def _exact_linear_one(rates, y, d, dz, with_v, with_s, v_mode, max_norm):
        sbase = d + (d * d if with_v else 0)
        for a in range(d):
            f = np.exp(rates[a] * dz)
            y[a] = y[a] * f
            if with_v:
                for b in range(d):
                    if v_mode == 0:
                        y[d + a * d + b] = y[d + a * d + b] * f
                    else:
                        y[d + a * d + b] = y[d + a * d + b] / f
            if with_s:
                y[sbase + a] = y[sbase + a] / f
        if max_norm > 0:
            for a in range(d):
                if abs(y[a]) > max_norm:
                    return EXIT
        return OK

    @numba.njit(cache=True)
    def rk_segments(exps, Cf, Cj, q, dz, V, S, with_v, with_s,
                    rtol, atol, max_norm, min_step, max_steps, hinit, h_out,
                    status):
        n, d = q.shape
        wlen = d + (d * d if with_v else 0) + (d if with_s else 0)
        y = np.empty(wlen, dtype=np.complex128)
        scratch = np.empty((11, wlen if wlen >= d * d else d * d),
                           dtype=np.complex128)
        nm = exps.shape[0]
        for i in range(n):
            for a in range(d):
                y[a] = q[i, a]
            k = d
            if with_v:
                for a in range(d):
                    for b in range(d):
                        y[k + a * d + b] = V[i, a, b]
                k += d * d
            if with_s:
                for a in range(d):
                    y[k + a] = S[i, a]
            st, h_last = _rk_one(exps, Cf, Cj, nm, y, wlen, d, dz[i],
                                 with_v, with_s, 0, rtol, atol, max_norm,
                                 min_step, max_steps, hinit[i], scratch)
            status[i] = st
            h_out[i] = h_last
            for a in range(d):
                q[i, a] = y[a]
            k = d
            if with_v:
                for a in range(d):
                    for b in range(d):
                        V[i, a, b] = y[k + a * d + b]
                k += d * d
            if with_s:
                for a in range(d):
                    S[i, a] = y[k + a]

    @numba.njit(cache=True, parallel=True)
    def walk_chunk(exps, Cf, Cj, nm, is_linear, rates,
                   sing_locs, n_sing,
                   coords, V, S, with_v, with_s,
                   chart, alive, remaining, htry, halvings, dz_accum,
                   len_accum, rk_h, normals, nrm_used,
                   subdiscretize, bound, max_halvings, rtol, atol,
                   r_valid, renorm_thresh, min_step, max_steps, v_mode,
                   codes):
        """Advance each path's remaining diffusion time within its chart.

        Per-path outcome in codes: W_DONE (remaining consumed), W_RENORM
        (coords passed the renormalization threshold; Python must switch
        charts and re-enter), W_MORE (normal block exhausted), W_DEAD
        (halvings exhausted; status underflow).

        Fields are passed per chart: exps/Cf/Cj/nm/is_linear/rates/sing
        arrays are indexed by the path's chart id.
        """
        n, d = coords.shape
        wlen = d + (d * d if with_v else 0) + (d if with_s else 0)
        nblock = normals.shape[1]

        for i in numba.prange(n):
            if not alive[i] or remaining[i] <= 0.0:
                codes[i] = W_DONE
                continue
            y = np.empty(wlen, dtype=np.complex128)
            ysave = np.empty(wlen, dtype=np.complex128)
            scratch = np.empty((11, wlen if wlen >= d * d else d * d),
                               dtype=np.complex128)
            c = chart[i]
            # pack state
            for a in range(d):
                y[a] = coords[i, a]
            k = d
            if with_v:
                for a in range(d):
                    for b in range(d):
                        y[k + a * d + b] = V[i, a, b]
                k += d * d
            if with_s:
                for a in range(d):
                    y[k + a] = S[i, a]

            code = W_DONE
            while True:
                if remaining[i] <= 0.0:
                    code = W_DONE
                    break
                # ell at the current point
                dist = np.inf
                for sidx in range(n_sing[c]):
                    acc = 0.0
                    for a in range(d):
                        dd = y[a] - sing_locs[c, sidx, a]
                        acc += dd.real * dd.real + dd.imag * dd.imag
                    acc = np.sqrt(acc)
                    if acc < dist:
                        dist = acc
                if dist <= 0.0:
                    code = W_DEAD
                    break
                ell = _ell_scalar(dist) if np.isfinite(dist) else 1.0
                scale = ell if subdiscretize else 1.0

                if nrm_used[i] >= nblock:
                    code = W_MORE
                    break
                x1 = normals[i, nrm_used[i], 0]
                x2 = normals[i, nrm_used[i], 1]
                nrm_used[i] += 1
                h_sub = htry[i]
                if h_sub > remaining[i]:
                    h_sub = remaining[i]
                dz = scale * np.sqrt(2.0 * h_sub) * complex(x1, x2)

                ok = True
                if abs(dz) > bound:
                    ok = False
                else:
                    for a in range(wlen):
                        ysave[a] = y[a]
                    if is_linear[c]:
                        st = _exact_linear_one(rates[c], y, d, dz,
                                               with_v, with_s, v_mode, r_valid)
                        rk_last = rk_h[i]
                    else:
                        h0 = rk_h[i] / abs(dz) if abs(dz) > 0 else 1.0
                        if h0 > 1.0:
                            h0 = 1.0
                        if h0 < min_step:
                            h0 = min_step
                        st, rk_last = _rk_one(exps[c, :nm[c]], Cf[c], Cj[c],
                                              nm[c], y, wlen, d, dz,
                                              with_v, with_s, v_mode, rtol,
                                              atol, r_valid, min_step,
                                              max_steps, h0, scratch)
                        rk_h[i] = rk_last * abs(dz)
                    if st != OK:
                        ok = False
                        for a in range(wlen):
                            y[a] = ysave[a]

                if ok:
                    dz_accum[i] += dz
                    len_accum[i] += abs(dz)
                    remaining[i] -= h_sub
                    htry[i] = 2.0 * h_sub
                    if htry[i] > remaining[i]:
                        htry[i] = remaining[i]
                    halvings[i] = 0
                    big = False
                    for a in range(d):
                        if abs(y[a]) > renorm_thresh:
                            big = True
                            break
                    if big and remaining[i] > 0.0:
                        code = W_RENORM
                        break
                else:
                    htry[i] *= 0.5
                    halvings[i] += 1
                    if halvings[i] > max_halvings:
                        code = W_DEAD
                        break

            # unpack state
            for a in range(d):
                coords[i, a] = y[a]
            k = d
            if with_v:
                for a in range(d):
                    for b in range(d):
                        V[i, a, b] = y[k + a * d + b]
                k += d * d
            if with_s:
                for a in range(d):
                    S[i, a] = y[k + a]
            codes[i] = code


def integrate_segment_numba(field, q0, dzeta, rtol=1e-9, atol=1e-12,
                            v0=None, s0=None, max_norm=None, min_step=1e-12,
                            max_steps=10000, h0=None, h_out=None):
    """Drop-in variant of integrate.integrate_segment using the numba kernel."""
    q = np.array(q0, dtype=np.complex128)
    dz = np.ascontiguousarray(dzeta, dtype=np.complex128)
    n, d = q.shape
    with_v = v0 is not None
    with_s = s0 is not None
    V = (np.array(v0, dtype=np.complex128) if with_v
         else np.zeros((0, d, d), dtype=np.complex128))
    S = (np.array(s0, dtype=np.complex128) if with_s
         else np.zeros((0, d), dtype=np.complex128))
    status = np.zeros(n, dtype=np.int64)
    hh = np.ones(n) if h0 is None else np.clip(np.asarray(h0, dtype=np.float64),
                                               min_step, 1.0)
    ho = np.empty(n)
    rk_segments(field._mono_exps, field._C_field, field._C_jac,
                q, dz, V, S, with_v, with_s,
                rtol, atol, -1.0 if max_norm is None else float(max_norm),
                min_step, max_steps, hh, ho, status)
    if h_out is not None:
        h_out[:] = ho
    return q, (V if with_v else None), (S if with_s else None), status


class ChartTables:
    """Per-chart field/singularity data packed for the walk kernel."""

    def __init__(self, fol):
        charts = fol.charts
        d = fol.dim
        nc = len(charts)
        nm_max = max(max(len(c.field._mono_exps), 1) for c in charts)
        ns_max = max(max(len(c.sing_locations()), 1) for c in charts)
        self.exps = np.zeros((nc, nm_max, d), dtype=np.int64)
        self.Cf = np.zeros((nc, d, nm_max), dtype=np.complex128)
        self.Cj = np.zeros((nc, d * d, nm_max), dtype=np.complex128)
        self.nm = np.zeros(nc, dtype=np.int64)
        self.is_linear = np.zeros(nc, dtype=np.bool_)
        self.rates = np.zeros((nc, d), dtype=np.complex128)
        self.sing = np.zeros((nc, ns_max, d), dtype=np.complex128)
        self.n_sing = np.zeros(nc, dtype=np.int64)
        for c, ch in enumerate(charts):
            f = ch.field
            k = len(f._mono_exps)
            self.nm[c] = k
            self.exps[c, :k] = f._mono_exps
            self.Cf[c, :, :k] = f._C_field
            self.Cj[c, :, :k] = f._C_jac
            if ch.diag_rates is not None:
                self.is_linear[c] = True
                self.rates[c] = ch.diag_rates
            locs = ch.sing_locations()
            self.n_sing[c] = len(locs)
            if len(locs):
                self.sing[c, :len(locs)] = locs
