"""Brownian motion on leaves with respect to the Poincare-type metric.

One Gaussian step per flow-box chart: at the current point p the increment
in the flow coordinate is dzeta = ell(p) sqrt(2h) (xi1 + i xi2), which gives
the process generator ell^2 * (Euclidean Laplacian) = Delta_g in the chart
where the metric density is ell^-2. Steps whose flow-time increment exceeds
a fixed fraction of the flow-box radius are rejected and retried at halved
effective h (the sub-discretization near singularities).

Each path owns a counter-based Philox stream keyed by (master seed, path
index), so ensembles are reproducible and independent of worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from . import _kernels, integrate
from .errors import DomainExit, OutOfRange, StepUnderflow
from .foliation import AmbientPoint, Foliation
from .metric import ell_dist, segment_lengths

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_EXIT = 2


@dataclass
class SamplerConfig:
    h: float
    horizon: float
    seed: int = 0
    guard_fraction: float = 0.2
    flowbox_c: float = 4.0        # flow-time radius of the flow-box chart
    time_factor: float = 1.0      # 0.5 emulates the half-Laplacian convention
    subdiscretize: bool = True    # ell-scaled increments; False = unit density
    rtol: float = 1e-9
    atol: float = 1e-12
    max_halvings: int = 40

    def __post_init__(self):
        if not (self.h > 0 and self.horizon >= self.h):
            raise ValueError("need h > 0 and horizon >= h")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.h))


def path_rng(seed, index):
    """Counter-based per-path stream: Philox keyed by (seed, path index)."""
    key = np.array([np.uint64(seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class LeafPath:
    """Sampled leafwise Brownian trajectory.

    p_{i+1} = flow(p_i, dzetas[i]) holds (to integration tolerance) for
    every step with mixed[i] == False; a mixed step crossed charts
    mid-increment, so only its metric length abs_dzetas[i] is meaningful.
    """
    start: AmbientPoint
    times: np.ndarray
    charts: np.ndarray
    points: np.ndarray
    dzetas: np.ndarray
    ells: np.ndarray
    abs_dzetas: np.ndarray = None
    mixed: np.ndarray = None
    seed: int = 0
    index: int = 0
    h: float = 0.0
    status: int = STATUS_OK
    fail_time: float | None = None

    def __post_init__(self):
        if self.abs_dzetas is None:
            self.abs_dzetas = np.abs(self.dzetas)
        if self.mixed is None:
            self.mixed = np.zeros(len(self.dzetas), dtype=bool)

    @property
    def horizon(self):
        return float(self.times[-1])

    def n_samples(self):
        return len(self.times)

    def sample_index(self, t, tol=1e-9):
        k = int(round((t - self.times[0]) / self.h)) if self.h else 0
        if k < 0 or k >= len(self.times) or abs(self.times[0] + k * self.h - t) > tol * max(1.0, abs(t)):
            raise OutOfRange(f"{t} is not a sample time")
        return k

    def shift(self, t):
        """Suffix path from sample time t, re-indexed to start at 0."""
        k = self.sample_index(t)
        return LeafPath(
            start=AmbientPoint(int(self.charts[k]), self.points[k].copy()),
            times=self.times[k:] - self.times[k],
            charts=self.charts[k:].copy(),
            points=self.points[k:].copy(),
            dzetas=self.dzetas[k:].copy(),
            ells=self.ells[k:].copy(),
            abs_dzetas=self.abs_dzetas[k:].copy(),
            mixed=self.mixed[k:].copy(),
            seed=self.seed, index=self.index, h=self.h,
            status=self.status, fail_time=self.fail_time)

    def segment_metric_lengths(self):
        """Per-step metric lengths |dzeta_i| / ell_i (sub-step accurate)."""
        return self.abs_dzetas / self.ells[: len(self.abs_dzetas)]

    def metric_length(self):
        return float(self.segment_metric_lengths().sum())

    def window_displacement(self, t0, delta):
        """Max over the window of accumulated metric path length from t0."""
        if delta < 0:
            raise OutOfRange("negative window")
        k0 = self.sample_index(t0)
        k1 = self.sample_index(min(t0 + delta, self.horizon))
        if k1 <= k0:
            return 0.0
        lens = self.segment_metric_lengths()[k0:k1]
        return float(np.max(np.cumsum(lens)))


def shift(path: LeafPath, t):
    return path.shift(t)


def window_displacement(path: LeafPath, t0, delta):
    return path.window_displacement(t0, delta)


class EnsembleWalker:
    """Advances an ensemble of leafwise Brownian paths in lockstep.

    Optionally transports the variational matrix (track_variational) and a
    flat conormal covector per declared bundle (track_flat) along each path;
    transported objects are renormalized each step with separate log scales.
    """

    def __init__(self, fol: Foliation, starts, cfg: SamplerConfig,
                 indices=None, charts=None, track_variational=False,
                 flat_covectors=None, variational_mode="tangent"):
        self.fol = fol
        self.cfg = cfg
        coords = np.array([np.asarray(s, dtype=np.complex128) for s in starts])
        self.n = len(coords)
        self.d = fol.dim
        self.coords = coords
        if charts is None:
            self.chart = np.zeros(self.n, dtype=np.int64)
        else:
            self.chart = np.asarray(charts, dtype=np.int64).copy()
        if indices is None:
            indices = np.arange(self.n)
        self.indices = np.asarray(indices)
        self.rngs = [path_rng(cfg.seed, i) for i in self.indices]
        self.t = 0.0
        self.alive = np.ones(self.n, dtype=bool)
        self.status = np.full(self.n, STATUS_OK, dtype=np.int64)
        self.fail_time = np.full(self.n, np.nan)
        self.ells = self._ells(self.coords, self.chart)
        self.V = None
        self.Vlog = None
        self.v_mode = 0 if variational_mode == "tangent" else 1
        if track_variational:
            self.V = np.tile(np.eye(self.d, dtype=np.complex128), (self.n, 1, 1))
            # covector mode treats the columns as independent transported
            # covectors, each with its own log scale
            self.Vlog = (np.zeros(self.n) if self.v_mode == 0
                         else np.zeros((self.n, self.d)))
        self.S = None
        self.Slog = None
        if flat_covectors is not None:
            self.S = np.array(flat_covectors, dtype=np.complex128).reshape(self.n, self.d)
            self.Slog = np.zeros(self.n)
        self.last_dzeta = np.zeros(self.n, dtype=np.complex128)
        self.last_abs_dzeta = np.zeros(self.n)
        self.last_mixed = np.zeros(self.n, dtype=bool)
        self._rk_flow_h = np.full(self.n, np.inf)  # warm-start step memory

    # -- helpers ---------------------------------------------------------
    def _ells(self, coords, charts):
        out = np.empty(len(coords))
        for c in np.unique(charts):
            m = charts == c
            dist = self.fol.dist_to_singular(coords[m], int(c))
            # a dead path may sit numerically on a singular point
            out[m] = ell_dist(np.maximum(dist, 1e-300))
        return out

    def _renormalize_charts(self, threshold=None, mark_mixed=None):
        thr = self.fol.r_switch if threshold is None else threshold
        need = self.alive & (np.max(np.abs(self.coords), axis=1) > thr)
        for i in np.nonzero(need)[0]:
            p = AmbientPoint(int(self.chart[i]), self.coords[i])
            q, jac = self.fol.renormalize(p)
            if jac is None:
                continue
            self.coords[i] = q.coords
            self.chart[i] = q.chart
            if self.V is not None:
                if self.v_mode == 0:
                    self.V[i] = jac @ self.V[i]
                else:
                    self.V[i] = np.linalg.solve(jac.T, self.V[i])
            if self.S is not None:
                self.S[i] = np.linalg.solve(jac.T, self.S[i])
            if mark_mixed is not None:
                mark_mixed[i] = True

    def _fold_norms(self):
        if self.V is not None:
            if self.v_mode == 0:
                nrm = np.linalg.norm(self.V, axis=(1, 2))
                ok = self.alive & (nrm > 0)
                self.V[ok] /= nrm[ok, None, None]
                self.Vlog[ok] += np.log(nrm[ok])
            else:
                nrm = np.linalg.norm(self.V, axis=1)  # per-column norms
                ok = self.alive[:, None] & (nrm > 0)
                np.divide(self.V, nrm[:, None, :], out=self.V, where=ok[:, None, :])
                self.Vlog[ok] += np.log(nrm[ok])
        if self.S is not None:
            nrm = np.linalg.norm(self.S, axis=1)
            ok = self.alive & (nrm > 0)
            self.S[ok] /= nrm[ok, None]
            self.Slog[ok] += np.log(nrm[ok])

    # -- one recorded step -------------------------------------------------
    def step(self):
        """Advance one diffusion step h for every alive path.

        A proposed increment is rejected (and the effective h halved, with a
        fresh draw) when it exceeds the flow-box guard OR when its flow
        integration fails: integration failure marks a leaf crossing the
        chart's far region (a pole of the chart flow), which a smaller step
        plus mid-step renormalization follows across charts.
        """
        cfg = self.cfg
        self._renormalize_charts()
        self.ells = self._ells(self.coords, self.chart)
        h_eff = cfg.h * cfg.time_factor
        remaining = np.where(self.alive, h_eff, 0.0)
        htry = remaining.copy()
        halvings = np.zeros(self.n, dtype=np.int64)
        dz_accum = np.zeros(self.n, dtype=np.complex128)
        len_accum = np.zeros(self.n)
        mixed = np.zeros(self.n, dtype=bool)
        bound = cfg.guard_fraction * cfg.flowbox_c

        if _kernels.HAVE_NUMBA:
            self._step_kernel(remaining, htry, halvings, dz_accum, len_accum,
                              mixed, bound, h_eff)
        else:
            self._step_python(remaining, htry, halvings, dz_accum, len_accum,
                              mixed, bound, h_eff)

        self.t += cfg.h
        self.last_dzeta = dz_accum
        self.last_abs_dzeta = len_accum
        self.last_mixed = mixed
        self.ells = self._ells(self.coords, self.chart)
        self._fold_norms()

    def _step_kernel(self, remaining, htry, halvings, dz_accum, len_accum,
                     mixed, bound, h_eff):
        cfg = self.cfg
        if not hasattr(self, "_tables"):
            self._tables = _kernels.ChartTables(self.fol)
        tb = self._tables
        d = self.d
        with_v = self.V is not None
        with_s = self.S is not None
        V = self.V if with_v else np.zeros((1, d, d), dtype=np.complex128)
        S = self.S if with_s else np.zeros((1, d), dtype=np.complex128)
        block = 32
        normals = np.zeros((self.n, block, 2))
        used = np.full(self.n, block, dtype=np.int64)
        codes = np.zeros(self.n, dtype=np.int64)
        need = self.alive & (remaining > 0)
        while need.any():
            for i in np.nonzero(need & (used >= block))[0]:
                normals[i] = self.rngs[i].standard_normal((block, 2))
                used[i] = 0
            _kernels.walk_chunk(
                tb.exps, tb.Cf, tb.Cj, tb.nm, tb.is_linear, tb.rates,
                tb.sing, tb.n_sing,
                self.coords, V, S, with_v, with_s,
                self.chart, need, remaining, htry, halvings, dz_accum,
                len_accum, self._rk_flow_h, normals, used,
                cfg.subdiscretize, bound, cfg.max_halvings, cfg.rtol,
                cfg.atol, self.fol.r_valid, min(3.0, self.fol.r_valid),
                1e-12, 150, self.v_mode, codes)
            dead = need & (codes == _kernels.W_DEAD)
            if dead.any():
                self._kill(np.nonzero(dead)[0], STATUS_UNDERFLOW)
            renorm = need & (codes == _kernels.W_RENORM)
            if renorm.any():
                self._renormalize_charts(threshold=min(3.0, self.fol.r_valid),
                                         mark_mixed=mixed)
            need = self.alive & (remaining > 0) & (codes != _kernels.W_DONE)

    def _step_python(self, remaining, htry, halvings, dz_accum, len_accum,
                     mixed, bound, h_eff):
        cfg = self.cfg
        while True:
            active = self.alive & (remaining > 1e-12 * h_eff)
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            xi = np.empty((len(idx), 2))
            for k, i in enumerate(idx):
                xi[k] = self.rngs[i].standard_normal(2)
            scale = self.ells[idx] if cfg.subdiscretize else np.ones(len(idx))
            dz = scale * np.sqrt(2.0 * htry[idx]) * (xi[:, 0] + 1j * xi[:, 1])

            reject = np.abs(dz) > bound
            acc_idx = idx[~reject]
            dz_acc = dz[~reject]
            failed = []
            if len(acc_idx):
                order = np.argsort(self.chart[acc_idx], kind="stable")
                acc_idx = acc_idx[order]
                dz_acc = dz_acc[order]
                for c in np.unique(self.chart[acc_idx]):
                    m = self.chart[acc_idx] == c
                    sel = acc_idx[m]
                    dsel = dz_acc[m]
                    adz = np.maximum(np.abs(dsel), 1e-300)
                    h0 = np.minimum(self._rk_flow_h[sel] / adz, 1.0)
                    h_out = np.empty(len(sel))
                    q1, v1, s1, st = self.fol.flow_batch(
                        self.coords[sel], dsel, int(c),
                        v0=None if self.V is None else self.V[sel],
                        s0=None if self.S is None else self.S[sel],
                        rtol=cfg.rtol, atol=cfg.atol, max_steps=150,
                        h0=h0, h_out=h_out)
                    self._rk_flow_h[sel] = h_out * adz
                    ok = st == integrate.OK
                    good = sel[ok]
                    self.coords[good] = q1[ok]
                    if self.V is not None:
                        self.V[good] = v1[ok]
                    if self.S is not None:
                        self.S[good] = s1[ok]
                    dz_accum[good] += dsel[ok]
                    len_accum[good] += np.abs(dsel[ok])
                    remaining[good] -= htry[good]
                    # gentle growth back toward the full remainder
                    htry[good] = np.minimum(remaining[good], 2.0 * htry[good])
                    halvings[good] = 0
                    failed.extend(sel[~ok])
            # guard rejections and integration failures retry at halved h;
            # the cap applies per proposal cascade, not per recorded step
            retry = np.concatenate([idx[reject], np.array(failed, dtype=np.int64)])
            if len(retry):
                retry = retry.astype(np.int64)
                htry[retry] *= 0.5
                halvings[retry] += 1
                dead = retry[halvings[retry] > cfg.max_halvings]
                if len(dead):
                    self._kill(dead, STATUS_UNDERFLOW)
            moved = self.alive & (np.max(np.abs(self.coords), axis=1) > 3.0)
            if moved.any():
                self._renormalize_charts(threshold=3.0, mark_mixed=mixed)
            act2 = self.alive & (remaining > 1e-12 * h_eff)
            if act2.any():
                self.ells[act2] = self._ells(self.coords[act2], self.chart[act2])

    def _kill(self, idx, status):
        self.alive[idx] = False
        self.status[idx] = status
        self.fail_time[idx] = self.t


def sample_path(fol: Foliation, start: AmbientPoint, cfg: SamplerConfig,
                index=0) -> LeafPath:
    """Sample one leafwise Brownian path, recording every diffusion step."""
    if not fol.is_regular(start):
        raise ValueError("start point is singular")
    w = EnsembleWalker(fol, [start.coords], cfg, indices=[index],
                       charts=[start.chart])
    n = cfg.n_steps
    times = np.zeros(n + 1)
    charts = np.zeros(n + 1, dtype=np.int64)
    points = np.zeros((n + 1, fol.dim), dtype=np.complex128)
    dzetas = np.zeros(n, dtype=np.complex128)
    absdz = np.zeros(n)
    mixed = np.zeros(n, dtype=bool)
    ells = np.zeros(n + 1)
    charts[0] = start.chart
    points[0] = start.coords
    ells[0] = w.ells[0]
    k = 0
    for k in range(1, n + 1):
        if not w.alive[0]:
            k -= 1
            break
        w.step()
        times[k] = w.t
        charts[k] = w.chart[0]
        points[k] = w.coords[0]
        dzetas[k - 1] = w.last_dzeta[0]
        absdz[k - 1] = w.last_abs_dzeta[0]
        mixed[k - 1] = w.last_mixed[0]
        ells[k] = w.ells[0]
    status = int(w.status[0])
    fail_time = float(w.fail_time[0]) if status != STATUS_OK else None
    return LeafPath(start=start, times=times[:k + 1], charts=charts[:k + 1],
                    points=points[:k + 1], dzetas=dzetas[:k], ells=ells[:k + 1],
                    abs_dzetas=absdz[:k], mixed=mixed[:k],
                    seed=cfg.seed, index=index, h=cfg.h,
                    status=status, fail_time=fail_time)


def sample_increment(fol: Foliation, p: AmbientPoint, h, rng,
                     subdiscretize=True):
    """One Gaussian flow-time increment at p (no guard, no flow)."""
    if h == 0:
        return 0.0 + 0.0j
    from .metric import ell_at
    scale = ell_at(fol, p) if subdiscretize else 1.0
    xi = rng.standard_normal(2)
    return scale * np.sqrt(2.0 * h) * (xi[0] + 1j * xi[1])


# -- reference samplers on model domains  -----------------------------------

_DENSITIES = {
    "disk": lambda z: 4.0 / (1.0 - np.abs(z) ** 2) ** 2,
    "punctured": lambda z: 1.0 / (np.abs(z) * np.abs(np.log(np.abs(z)))) ** 2,
    "plane": lambda z: np.ones_like(np.abs(z)),
}


@dataclass
class ReferenceEnsemble:
    kind: str
    h: float
    times: np.ndarray
    points: np.ndarray      # (n_paths, n_steps+1) complex
    status: np.ndarray

    def path(self, i):
        return self.points[i]


def reference_hyperbolic_sampler(z0, cfg: SamplerConfig, n_paths=1,
                                 kind="disk") -> ReferenceEnsemble:
    """Euler scheme dz = sqrt(2h/rho(z)) (xi1 + i xi2) on a model domain.

    kind: "disk" (density 4/(1-|z|^2)^2), "punctured" (1/(|z| log|z|)^2)
    or "plane" (density 1, the Euclidean sanity oracle).
    """
    rho = _DENSITIES[kind]
    n = cfg.n_steps
    pts = np.empty((n_paths, n + 1), dtype=np.complex128)
    z0 = complex(z0)
    if kind == "disk" and abs(z0) >= 1.0:
        raise DomainExit("start outside the unit disk")
    if kind == "punctured" and not (0 < abs(z0) < 1.0):
        raise DomainExit("start outside the punctured disk")
    pts[:, 0] = z0
    status = np.zeros(n_paths, dtype=np.int64)
    rngs = [path_rng(cfg.seed, i) for i in range(n_paths)]
    z = np.full(n_paths, z0, dtype=np.complex128)
    alive = np.ones(n_paths, dtype=bool)
    h_eff = cfg.h * cfg.time_factor
    for k in range(1, n + 1):
        remaining = np.where(alive, h_eff, 0.0)
        htry = remaining.copy()
        halvings = np.zeros(n_paths, dtype=np.int64)
        while True:
            active = alive & (remaining > 1e-12 * h_eff)
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            xi = np.empty((len(idx), 2))
            for m, i in enumerate(idx):
                xi[m] = rngs[i].standard_normal(2)
            dz = np.sqrt(2.0 * htry[idx] / rho(z[idx])) * (xi[:, 0] + 1j * xi[:, 1])
            znew = z[idx] + dz
            if kind == "plane":
                bad = np.zeros(len(idx), dtype=bool)
            else:
                bad = np.abs(znew) >= 1.0
                # local-scale guard, mirroring the flow-box step guard: the
                # increment must stay well inside the local model chart
                # (otherwise e.g. steps wrapping around the puncture bias
                # log|z| upward and the scheme loses the mean-value property)
                if kind == "punctured":
                    bad |= np.abs(dz) > 0.8 * np.abs(z[idx])
                else:
                    bad |= np.abs(dz) > 0.4 * (1.0 - np.abs(z[idx]))
            rej = idx[bad]
            htry[rej] *= 0.5
            halvings[rej] += 1
            dead = rej[halvings[rej] > cfg.max_halvings]
            if len(dead):
                alive[dead] = False
                status[dead] = STATUS_EXIT
            good = idx[~bad]
            z[good] = znew[~bad]
            remaining[good] -= htry[good]
            htry[good] = remaining[good]
        pts[:, k] = z
    return ReferenceEnsemble(kind=kind, h=cfg.h,
                             times=np.arange(n + 1) * cfg.h,
                             points=pts, status=status)


def hyperbolic_distance_disk(z, w):
    """Exact Poincare distance on the unit disk (curvature -1)."""
    z = np.asarray(z, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    num = 2.0 * np.abs(z - w) ** 2
    den = (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)
    return np.arccosh(1.0 + num / den)


def disk_window_sup_distance(points, i0, n_window):
    """sup over the window of dist_P from the window start (exact, disk)."""
    seg = points[..., i0:i0 + n_window + 1]
    d = hyperbolic_distance_disk(seg[..., :1], seg)
    return d.max(axis=-1)


def heat_tail_fit(cfg_template, deltas, r_grid, n_paths=2000, seed=0,
                  kind="disk"):
    """Empirical window-displacement tail on the reference disk sampler.

    Returns (slope, intercept, r_squared, rows) for the least-squares fit of
    log P(sup displacement >= R) against R^2/delta, pooling all deltas.
    rows are (delta, R, survival) with zero-survival points dropped.
    """
    from scipy import stats

    rows = []
    xs, ys = [], []
    for j, delta in enumerate(deltas):
        cfg = SamplerConfig(h=cfg_template.h, horizon=delta,
                            seed=cfg_template.seed + 1000 * j + seed,
                            time_factor=cfg_template.time_factor)
        ens = reference_hyperbolic_sampler(0.0, cfg, n_paths=n_paths, kind=kind)
        sup = disk_window_sup_distance(ens.points, 0, cfg.n_steps)
        for R in r_grid:
            surv = float(np.mean(sup >= R))
            rows.append((delta, R, surv))
            if surv > 0:
                xs.append(R ** 2 / delta)
                ys.append(np.log(surv))
    fit = stats.linregress(xs, ys)
    return fit.slope, fit.intercept, fit.rvalue ** 2, rows
