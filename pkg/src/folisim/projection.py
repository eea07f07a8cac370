"""Orthogonal projections between nearby leaves and point holonomy.

The transversality function at a base point p with offsets (t, u) is

    F(t, u, zeta, xi) = det( N(phi^{zeta+xi}(p)),
                             phi^zeta(q) - phi^{zeta+xi}(p),
                             d/dz ) / s^2,

with q = p + t N(p) + u s d/dz, N(w) = (conj(X_y(w)), -conj(X_x(w)), 0)
the anti-holomorphic normal frame and s = |p| in a diagonal-linear
(singular) chart, s = 1 in a generic chart. F = 0 says the displacement is
Hermitian-orthogonal to the leaf at the moved base point; dF/dxi at the
origin is -|X(p)|^2 / s^2. Newton treats xi as two real unknowns via the
Wirtinger pair (dF/dxi, dF/dxibar), with step damping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brownian import LeafPath
from .errors import (ChartExit, NoConvergence, OutOfRadius, SectionExit,
                     SmallnessViolated)
from .foliation import AmbientPoint, Foliation
from .metric import ell_dist


@dataclass
class IFTConfig:
    r0: float = 0.35          # offset/time radius accepted by the solver
    r1: float = 0.5           # certified root radius for xi
    newton_tol: float = 1e-12
    max_iter: int = 20
    deriv_bound: float = 10.0  # documented C of the quantitative IFT

    def __post_init__(self):
        if not (0 < self.r0 < 1 and 0 < self.r1 < 1):
            raise ValueError("radii must lie in (0, 1)")


@dataclass
class ProjectionFrame:
    """Base data for the F-function at a point p of the invariant plane."""
    fol: Foliation
    p: AmbientPoint

    def __post_init__(self):
        f = self.fol
        self.chart = self.p.chart
        self.field = f.field(self.chart)
        self.singular_mode = self.fol.charts[self.chart].diag_rates is not None
        if f.dim == 3:
            pc = f.atlas.plane_coord(self.chart)
            self.ix = [i for i in range(3) if i != pc]
            self.pc = pc
        else:
            self.ix = [0, 1]
            self.pc = None
        xy = self.p.coords[self.ix]
        self.scale = float(np.linalg.norm(xy)) if self.singular_mode else 1.0
        if self.scale == 0:
            raise ValueError("frame base at the singular point")

    def normal(self, coords):
        """Anti-holomorphic normal frame N at chart coordinates (vectorized)."""
        X = self.field(coords)
        N = np.zeros_like(np.asarray(coords, dtype=np.complex128))
        N[..., self.ix[0]] = np.conj(X[..., self.ix[1]])
        N[..., self.ix[1]] = -np.conj(X[..., self.ix[0]])
        return N

    def offset_point(self, t, u=0.0):
        """q = p + t N(p) + u s d/dz."""
        q = self.p.coords + t * self.normal(self.p.coords)
        if self.pc is not None:
            q = q.copy()
            q[self.pc] += u * self.scale
        elif u:
            raise ValueError("u-offset needs ambient dimension 3")
        return q

    def decompose_offset(self, q_coords):
        """(t, u) with q = p + t N(p) + u s d/dz + (in-plane residual)."""
        d = np.asarray(q_coords) - self.p.coords
        Np = self.normal(self.p.coords)
        t = np.vdot(Np, d) / np.vdot(Np, Np)
        u = d[self.pc] / self.scale if self.pc is not None else 0.0
        return complex(t), complex(u)

    def _flow(self, coords, dz, rtol=1e-12):
        c = np.asarray(coords, dtype=np.complex128).reshape(-1, self.fol.dim)
        z = np.broadcast_to(np.asarray(dz, dtype=np.complex128), (len(c),))
        q1, _, _, st = self.fol.flow_batch(c, z, self.chart, rtol=rtol,
                                           atol=1e-15)
        if np.any(st != 0):
            raise ChartExit("flow left the chart during a projection solve")
        return q1.reshape(np.shape(coords))

    def _det_pair(self, A, B):
        """det of the in-plane 2x2 block with columns (A, B)."""
        i0, i1 = self.ix
        return A[..., i0] * B[..., i1] - A[..., i1] * B[..., i0]

    def F(self, t, u, zeta, xi, rtol=1e-12):
        """The transversality function; F(0,0,zeta,0) = 0."""
        q = self.offset_point(t, u)
        zq = self._flow(q, zeta, rtol)
        wp = self._flow(self.p.coords, zeta + xi, rtol)
        return complex(self._det_pair(self.normal(wp), zq - wp) / self.scale ** 2)

    def F_wirtinger(self, t, u, zeta, xi, rtol=1e-12):
        """(F, dF/dxi, dF/dxibar) analytically, at one argument tuple."""
        q = self.offset_point(t, u)
        zq = self._flow(q, zeta, rtol)
        wp = self._flow(self.p.coords, zeta + xi, rtol)
        N = self.normal(wp)
        delta = zq - wp
        X = self.field(wp)
        F = self._det_pair(N, delta) / self.scale ** 2
        dxi = -self._det_pair(N, X) / self.scale ** 2
        # anti-holomorphic variation of the frame: N-pattern applied to dX.X
        dXX = (self.field.jacobian(wp) @ X[..., None])[..., 0]
        Nbar = np.zeros_like(N)
        Nbar[..., self.ix[0]] = np.conj(dXX[..., self.ix[1]])
        Nbar[..., self.ix[1]] = -np.conj(dXX[..., self.ix[0]])
        dxibar = self._det_pair(Nbar, delta) / self.scale ** 2
        return complex(F), complex(dxi), complex(dxibar)

    def solve_xi(self, t, u, zeta, cfg: IFTConfig = IFTConfig(), rtol=1e-12):
        """Newton solve of F(t, u, zeta, xi) = 0 in the xi-disk D(r1)."""
        if max(abs(t), abs(u), abs(zeta)) > cfg.r0:
            raise OutOfRadius("(t, u, zeta) outside D(r0)^3")
        xi = 0.0 + 0.0j
        Fv, a, b = self.F_wirtinger(t, u, zeta, xi, rtol)
        for _ in range(cfg.max_iter):
            if abs(Fv) <= cfg.newton_tol:
                return xi
            den = abs(a) ** 2 - abs(b) ** 2
            if abs(den) < 1e-300:
                raise NoConvergence("degenerate Wirtinger system")
            step = -(np.conj(a) * Fv - b * np.conj(Fv)) / den
            lam = 1.0
            for _ in range(8):
                xin = xi + lam * step
                Fn, an, bn = self.F_wirtinger(t, u, zeta, xin, rtol)
                if abs(Fn) < abs(Fv):
                    break
                lam *= 0.5
            xi, Fv, a, b = xin, Fn, an, bn
            if abs(xi) > cfg.r1:
                raise OutOfRadius(f"|xi| = {abs(xi):.3f} left D(r1)")
        if abs(Fv) <= cfg.newton_tol:
            return xi
        raise NoConvergence(f"|F| = {abs(Fv):.2e} after {cfg.max_iter} iterations")


def solve_xi_many(frame: ProjectionFrame, t, u, zetas, tol=1e-11,
                  max_iter=30, rtol=1e-12):
    """Vectorized Newton for xi(t, u, zeta_i) over an array of zetas.

    Fixed offsets, varying flow time; the moved base point is advanced
    incrementally by each Newton step (exact in diagonal-linear charts).
    Returns (xi, converged mask).
    """
    fol = frame.fol
    zetas = np.asarray(zetas, dtype=np.complex128)
    n = len(zetas)
    ix0, ix1 = frame.ix
    s2 = frame.scale ** 2
    q = frame.offset_point(t, u)
    zq, _, _, st = fol.flow_batch(np.tile(q, (n, 1)), zetas, frame.chart,
                                  rtol=rtol, atol=1e-15)
    if np.any(st != 0):
        raise ChartExit("offset endpoints left the chart")
    wp, _, _, st = fol.flow_batch(np.tile(frame.p.coords, (n, 1)), zetas,
                                  frame.chart, rtol=rtol, atol=1e-15)
    if np.any(st != 0):
        raise ChartExit("base endpoints left the chart")
    xi = np.zeros(n, dtype=np.complex128)
    ok = np.ones(n, dtype=bool)

    def parts(w, z):
        N = frame.normal(w)
        delta = z - w
        X = frame.field(w)
        F = (N[:, ix0] * delta[:, ix1] - N[:, ix1] * delta[:, ix0]) / s2
        a = -(N[:, ix0] * X[:, ix1] - N[:, ix1] * X[:, ix0]) / s2
        dXX = (frame.field.jacobian(w) @ X[:, :, None])[:, :, 0]
        Nb0 = np.conj(dXX[:, ix1])
        Nb1 = -np.conj(dXX[:, ix0])
        b = (Nb0 * delta[:, ix1] - Nb1 * delta[:, ix0]) / s2
        return F, a, b

    F, a, b = parts(wp, zq)
    for _ in range(max_iter):
        act = ok & (np.abs(F) > tol)
        if not act.any():
            break
        den = np.abs(a[act]) ** 2 - np.abs(b[act]) ** 2
        bad = np.abs(den) < 1e-300
        idx = np.nonzero(act)[0]
        ok[idx[bad]] = False
        idx = idx[~bad]
        if len(idx) == 0:
            continue
        step = -(np.conj(a[idx]) * F[idx] - b[idx] * np.conj(F[idx])) / den[~bad]
        w1, _, _, st = fol.flow_batch(wp[idx], step, frame.chart,
                                      rtol=rtol, atol=1e-15)
        moved = st == 0
        ok[idx[~moved]] = False
        idx = idx[moved]
        wp[idx] = w1[moved]
        xi[idx] += step[moved]
        Fa, aa, ba = parts(wp[idx], zq[idx])
        F[idx], a[idx], b[idx] = Fa, aa, ba
    ok &= np.abs(F) <= 10 * tol
    return xi, ok


def F_eval(fol, p, t, u, zeta, xi, rtol=1e-12):
    return ProjectionFrame(fol, p).F(t, u, zeta, xi, rtol)


def solve_xi(fol, p, t, u, zeta, cfg: IFTConfig = IFTConfig()):
    return ProjectionFrame(fol, p).solve_xi(t, u, zeta, cfg)


def local_projection(fol, p: AmbientPoint, q_coords, zeta,
                     cfg: IFTConfig = IFTConfig(), ortho_tol=1e-8):
    """Project z = phi^zeta(q) onto L_p: the point phi^{zeta+xi}(p).

    Returns (projected AmbientPoint, xi, orthogonality residual).
    """
    frame = ProjectionFrame(fol, p)
    t, u = frame.decompose_offset(q_coords)
    xi = frame.solve_xi(t, u, zeta, cfg)
    z = frame._flow(np.asarray(q_coords, dtype=np.complex128), zeta)
    w = frame._flow(p.coords, zeta + xi)
    delta = z - w
    X = frame.field(w)
    nd = np.linalg.norm(delta)
    resid = abs(np.vdot(X, delta)) / (np.linalg.norm(X) * nd) if nd > 0 else 0.0
    if resid > ortho_tol:
        raise NoConvergence(f"orthogonality residual {resid:.2e}")
    return AmbientPoint(p.chart, w), xi, float(resid)


# -- transported transverse points (holonomy) -------------------------------

def _section_solve(fol, chart, moving, base, tol=1e-13, max_iter=30):
    """Flow-time xi with (phi^{xi}(moving) - base) in span(N(base), d/dz).

    Pure-holomorphic Newton (the frame at the fixed base does not move).
    Vectorized over a batch; returns (moved points, xi, ok mask).
    """
    fld = fol.field(chart)
    if fol.dim == 3:
        pc = fol.atlas.plane_coord(chart)
        ix = [i for i in range(3) if i != pc]
    else:
        ix = [0, 1]
    Xb = fld(base)
    N = np.zeros_like(base)
    N[..., ix[0]] = np.conj(Xb[..., ix[1]])
    N[..., ix[1]] = -np.conj(Xb[..., ix[0]])
    scale = np.maximum(np.linalg.norm(Xb, axis=-1) ** 2, 1e-300)

    w = moving.copy()
    n = len(w)
    xi = np.zeros(n, dtype=np.complex128)
    ok = np.ones(n, dtype=bool)

    def resid(wc):
        d = wc - base
        return (N[:, ix[0]] * d[:, ix[1]] - N[:, ix[1]] * d[:, ix[0]]) / scale

    r = resid(w)
    for _ in range(max_iter):
        act = ok & (np.abs(r) > tol)
        if not act.any():
            break
        idx = np.nonzero(act)[0]
        Xw = fld(w[idx])
        dr = (N[idx, ix[0]] * Xw[:, ix[1]] - N[idx, ix[1]] * Xw[:, ix[0]]) / scale[idx]
        degenerate = np.abs(dr) < 1e-300
        ok[idx[degenerate]] = False
        idx = idx[~degenerate]
        dr = dr[~degenerate]
        if len(idx) == 0:
            continue
        step = -r[idx] / dr
        w1, _, _, st = fol.flow_batch(w[idx], step, chart, rtol=1e-12, atol=1e-15)
        good = st == 0
        w[idx[good]] = w1[good]
        xi[idx[good]] += step[good]
        ok[idx[~good]] = False
        r = resid(w)
    ok &= np.abs(r) <= 10 * tol
    return w, xi, ok


def holonomy_transport(fol, path: LeafPath, q0_coords, eta=0.5,
                       section_bound=20.0, rtol=1e-12):
    """Transport transverse points along a recorded leaf path.

    q0_coords: (n_pts, dim) points in the section at path start. Steps chunk
    each recorded flow increment to |dzeta| <= eta, advancing base and
    transported points together and re-solving the section time each chunk.

    Returns dict with times, transported points (n_samples, n_pts, dim),
    transverse distances to the base path, and per-point alive masks.
    SectionExit is recorded by deactivating the point (distance > bound *
    dist(base, S)).
    """
    q = np.array(q0_coords, dtype=np.complex128).reshape(-1, fol.dim)
    n_pts = len(q)
    ns = path.n_samples()
    out_pts = np.full((ns, n_pts, fol.dim), np.nan, dtype=np.complex128)
    out_dist = np.full((ns, n_pts), np.nan)
    alive = np.ones(n_pts, dtype=bool)
    out_pts[0] = q
    out_dist[0] = np.linalg.norm(q - path.points[0], axis=1)
    truncated_at = None
    for k in range(len(path.dzetas)):
        if path.mixed[k]:
            # the recorded increment spans charts; the transport stops at
            # the last replayable sample
            truncated_at = k
            break
        c0, c1 = int(path.charts[k]), int(path.charts[k + 1])
        # the base is re-anchored to the recorded sample each step, so the
        # transport never accumulates replay drift along the path
        base = path.points[k].copy()
        if c1 != c0:
            base = fol.atlas.to_chart(base, c0, c1)
            q[alive] = fol.atlas.to_chart(q[alive], c0, c1)
        dz = path.dzetas[k]
        n_chunks = max(1, int(np.ceil(abs(dz) / eta)))
        exited = False
        for j in range(n_chunks):
            step = dz / n_chunks
            if j < n_chunks - 1:
                b1, _, _, st = fol.flow_batch(base[None], np.array([step]), c1,
                                              rtol=rtol, atol=1e-15)
                if st[0] != 0:
                    exited = True
                    break
                base = b1[0]
            else:
                base = path.points[k + 1].copy()  # snap to the record
            if alive.any():
                sub = np.nonzero(alive)[0]
                qa = q[sub]
                q1, _, _, stq = fol.flow_batch(
                    qa, np.full(len(qa), step, dtype=np.complex128), c1,
                    rtol=rtol, atol=1e-15)
                flown = stq == 0
                alive[sub[~flown]] = False
                sub = sub[flown]
                if len(sub):
                    base_tile = np.broadcast_to(base, (len(sub), fol.dim)).copy()
                    moved, _, okn = _section_solve(fol, c1, q1[flown], base_tile)
                    q[sub] = moved
                    alive[sub[~okn]] = False
        if exited:
            truncated_at = k
            break
        d = np.linalg.norm(q - path.points[k + 1], axis=1)
        sdist = fol.dist_to_singular(path.points[k + 1], c1)
        bad = alive & (d > section_bound * sdist)
        alive[bad] = False
        out_pts[k + 1][alive] = q[alive]
        out_dist[k + 1][alive] = d[alive]
    return {"times": path.times, "points": out_pts, "dist": out_dist,
            "alive": alive, "truncated_at": truncated_at}


def holonomy_point(fol, path: LeafPath, q0_coords, eta=0.5,
                   section_bound=20.0):
    """Spec operation: (t, transported point, transverse distance) series."""
    res = holonomy_transport(fol, path, np.asarray(q0_coords)[None, :],
                             eta=eta, section_bound=section_bound)
    return res["times"], res["points"][:, 0], res["dist"][:, 0]


def contraction_experiment(fol, start, sampler_cfg, theta_grid, n_paths=16,
                           eta=0.5, section_bound=50.0, start_chart=0,
                           rho=0.2):
    """Transverse-section contraction along Brownian paths.

    For each path and each theta in the grid (theta < rho), a point offset
    by theta * dist(p0, S) along the unit normal is transported by the point
    holonomy; the measured ratio dist_T(q_t, gamma(t)) / (theta *
    dist(gamma(t), S)) is recorded. Returns per-(path, theta) ratio series,
    fitted decay rates of the right-running maximum envelope, and the
    fraction of paths whose envelope decays exponentially (negative fitted
    slope with R^2 >= 0.8).
    """
    from scipy import stats

    from .brownian import sample_path
    from .foliation import AmbientPoint

    thetas = [t for t in theta_grid if 0 < t < rho] or list(theta_grid)
    n_theta = len(thetas)
    all_ratios = []
    rates = np.full((n_paths, n_theta), np.nan)
    monotone = np.zeros((n_paths, n_theta), dtype=bool)
    times = None
    for ip in range(n_paths):
        cfg = sampler_cfg if ip == 0 else None
        path = sample_path(fol, AmbientPoint(start_chart, np.asarray(start)),
                           sampler_cfg, index=ip)
        s0 = float(fol.dist_to_singular(path.points[0], start_chart))
        X = fol.field(start_chart)(path.points[0])
        if fol.dim == 3:
            pc = fol.atlas.plane_coord(start_chart)
            ix = [i for i in range(3) if i != pc]
        else:
            ix = [0, 1]
        nvec = np.zeros(fol.dim, dtype=np.complex128)
        nvec[ix[0]] = np.conj(X[ix[1]])
        nvec[ix[1]] = -np.conj(X[ix[0]])
        nvec /= np.linalg.norm(nvec)
        q0s = np.array([path.points[0] + th * s0 * nvec for th in thetas])
        res = holonomy_transport(fol, path, q0s, eta=eta,
                                 section_bound=section_bound)
        sdist = np.array([fol.dist_to_singular(path.points[k],
                                               int(path.charts[k]))
                          for k in range(path.n_samples())])
        ratios = res["dist"] / (np.array(thetas)[None, :] * sdist[:, None])
        all_ratios.append(ratios)
        times = path.times
        for jt in range(n_theta):
            r = ratios[:, jt]
            good = np.isfinite(r) & (r > 0)
            if good.sum() < 8:
                continue
            env = np.maximum.accumulate(r[good][::-1])[::-1]
            fit = stats.linregress(times[good], np.log(env))
            rates[ip, jt] = fit.slope
            monotone[ip, jt] = (fit.slope < 0) and (fit.rvalue ** 2 >= 0.8)
    return {"times": times, "thetas": thetas,
            "ratios": np.array(all_ratios), "rates": rates,
            "fraction_monotone": float(np.mean(monotone.all(axis=1))),
            "mean_rate": float(np.nanmean(rates))}


# -- continued projection (Phi realization) ----------------------------------

def continue_projection(fol, p: AmbientPoint, q_coords, path_on_q: LeafPath,
                        eta=0.5, eps0=0.25, smallness_C=1.0,
                        cfg: IFTConfig = IFTConfig()):
    """Project a path on L_q onto L_p step by step (the Phi map realization).

    The path must start at q. Returns dict with the projected base series,
    per-step ell values and distances (the audit trail). Raises
    SmallnessViolated when a step's offset leaves eps0 * dist(p_n, S).
    """
    p_cur = p.coords.copy()
    chartp = p.chart
    q_cur = np.asarray(q_coords, dtype=np.complex128).copy()
    dist0 = float(np.linalg.norm(q_cur - p_cur))
    ell0 = float(ell_dist(fol.dist_to_singular(p_cur, chartp)))
    if np.exp(smallness_C * ell0) * dist0 > eps0:
        raise SmallnessViolated("initial smallness condition fails", step=0)
    ps = [p_cur.copy()]
    ells = [ell0]
    dists = [dist0]
    nstep = 0
    for k in range(len(path_on_q.dzetas)):
        if path_on_q.mixed[k]:
            break
        c0, c1 = int(path_on_q.charts[k]), int(path_on_q.charts[k + 1])
        if c1 != c0:
            p_cur = fol.atlas.to_chart(p_cur, c0, c1)
            q_cur = fol.atlas.to_chart(q_cur, c0, c1)
            chartp = c1
        dz = path_on_q.dzetas[k]
        n_chunks = max(1, int(np.ceil(abs(dz) / eta)))
        for _ in range(n_chunks):
            step = dz / n_chunks
            nstep += 1
            frame = ProjectionFrame(fol, AmbientPoint(chartp, p_cur))
            t, u = frame.decompose_offset(q_cur)
            xi = frame.solve_xi(t, u, step, cfg)
            q_cur = frame._flow(q_cur, step)
            p_cur = frame._flow(p_cur, step + xi)
        d = float(np.linalg.norm(q_cur - p_cur))
        sd = float(fol.dist_to_singular(p_cur, chartp))
        ells.append(float(ell_dist(sd)))
        dists.append(d)
        ps.append(p_cur.copy())
        if d > eps0 * sd:
            raise SmallnessViolated(
                f"offset {d:.2e} > eps0 * dist(p, S) at step {k + 1}",
                step=k + 1)
    return {"projected": np.array(ps), "ells": np.array(ells),
            "dists": np.array(dists), "endpoint": AmbientPoint(chartp, p_cur)}
