"""Empirical occupation measures, TV comparisons and plane concentration.

Occupation histograms are per-chart 20x20 grids over the moduli of the two
in-plane coordinates (coarse on purpose: desk-scale TV comparisons must
beat Monte Carlo noise). Histograms are mergeable monoids; parallel workers
emit partials that merge associatively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brownian import EnsembleWalker, LeafPath, SamplerConfig
from .errors import BinningMismatch, ChartMismatch
from .foliation import Foliation
from .metric import ell_dist


@dataclass(frozen=True)
class Binning:
    n_charts: int
    bins: int = 20
    box: float = 2.5


def _moduli_indices(fol: Foliation, coords, charts, binning: Binning):
    """(chart, i, j) cell of each sample; moduli clipped into the last bin."""
    coords = np.asarray(coords, dtype=np.complex128)
    charts = np.asarray(charts, dtype=np.int64)
    n = len(coords)
    ii = np.empty(n, dtype=np.int64)
    jj = np.empty(n, dtype=np.int64)
    width = binning.box / binning.bins
    for c in np.unique(charts):
        m = charts == c
        pc = fol.atlas.plane_coord(int(c))
        if fol.dim == 2:
            ix = [0, 1]
        elif pc is not None:
            ix = [i for i in range(3) if i != pc]
        else:
            ix = [0, 1]
        a = np.abs(coords[m][:, ix[0]])
        b = np.abs(coords[m][:, ix[1]])
        ii[m] = np.minimum((a / width).astype(np.int64), binning.bins - 1)
        jj[m] = np.minimum((b / width).astype(np.int64), binning.bins - 1)
    return charts, ii, jj


class OccupationHistogram:
    def __init__(self, binning: Binning, masses=None, total=0.0):
        self.binning = binning
        if masses is None:
            masses = np.zeros((binning.n_charts, binning.bins, binning.bins))
        self.masses = masses
        self.total = total

    def add_samples(self, fol, coords, charts, weight):
        c, i, j = _moduli_indices(fol, coords, charts, self.binning)
        np.add.at(self.masses, (c, i, j), weight)
        self.total += weight * len(np.atleast_1d(i))

    def normalized(self):
        if self.total <= 0:
            raise ValueError("empty histogram")
        return self.masses / self.total

    def __add__(self, other):
        self._check(other)
        return OccupationHistogram(self.binning, self.masses + other.masses,
                                   self.total + other.total)

    def _check(self, other):
        if (self.binning != other.binning
                or self.masses.shape != other.masses.shape):
            raise BinningMismatch("histograms binned differently")

    def copy(self):
        return OccupationHistogram(self.binning, self.masses.copy(), self.total)


def occupation(fol: Foliation, path: LeafPath, binning: Binning):
    """Time-weighted occupation of a path (each sample contributes h)."""
    if path.horizon <= 0:
        raise ValueError("path horizon must be positive")
    hist = OccupationHistogram(binning)
    hist.add_samples(fol, path.points, path.charts, path.h)
    return hist


def tv_distance(h1: OccupationHistogram, h2: OccupationHistogram):
    """Half the l1 distance of the normalized masses, in [0, 1]."""
    h1._check(h2)
    return float(0.5 * np.abs(h1.normalized() - h2.normalized()).sum())


def near_plane_fraction(fol: Foliation, path: LeafPath, eps):
    """Fraction of samples within projective plane-distance eps of P."""
    if fol.dim != 3:
        raise ChartMismatch("near-plane fraction needs ambient dimension 3")
    d = np.empty(path.n_samples())
    for c in np.unique(path.charts):
        m = path.charts == c
        d[m] = fol.atlas.plane_distance(path.points[m], int(c))
    return float(np.mean(d <= eps))


# -- streaming accumulators ---------------------------------------------------

class OccupationAccumulator:
    """Accumulates walker samples; snapshots give normalized histograms."""

    def __init__(self, fol: Foliation, binning: Binning):
        self.fol = fol
        self.hist = OccupationHistogram(binning)

    def update(self, walker: EnsembleWalker, weight):
        alive = walker.alive
        if not alive.any():
            return
        self.hist.add_samples(self.fol, walker.coords[alive],
                              walker.chart[alive], weight)

    def snapshot(self):
        return self.hist.copy()


class NearPlaneAccumulator:
    def __init__(self, fol: Foliation, eps):
        if fol.dim != 3:
            raise ChartMismatch("near-plane fraction needs ambient dimension 3")
        self.fol = fol
        self.eps = eps
        self.inside = 0
        self.total = 0

    def update(self, walker: EnsembleWalker, weight=None):
        alive = walker.alive
        if not alive.any():
            return
        for c in np.unique(walker.chart[alive]):
            m = alive & (walker.chart == c)
            d = self.fol.atlas.plane_distance(walker.coords[m], int(c))
            self.inside += int(np.sum(d <= self.eps))
            self.total += len(d)

    def fraction(self):
        return self.inside / self.total if self.total else float("nan")


class EllAverageAccumulator:
    """Running time-average of ell along the ensemble (integrability shadow)."""

    def __init__(self):
        self.sum = 0.0
        self.count = 0
        self.trace = []

    def update(self, walker: EnsembleWalker, weight=None):
        alive = walker.alive
        if not alive.any():
            return
        self.sum += float(walker.ells[alive].sum())
        self.count += int(alive.sum())
        self.trace.append(self.sum / self.count)

    def dyadic_window_means(self):
        """Means of the last two dyadic halves of the running-average trace."""
        tr = np.asarray(self.trace)
        n = len(tr)
        if n < 4:
            raise ValueError("trace too short")
        a = tr[n // 2: 3 * n // 4].mean()
        b = tr[3 * n // 4:].mean()
        return float(a), float(b)


def run_occupation_ensemble(fol: Foliation, start, cfg: SamplerConfig,
                            n_paths, binning: Binning, checkpoints,
                            start_chart=0, eps_plane=None, seed_offset=0,
                            track_ell=False):
    """Stream an ensemble and snapshot occupations at horizon checkpoints.

    Returns dict with per-checkpoint histograms, near-plane fractions (when
    eps_plane is given), the ell-average trace, and final path statuses.
    """
    starts = [np.asarray(start, dtype=np.complex128)] * n_paths
    w = EnsembleWalker(fol, starts, cfg, charts=[start_chart] * n_paths,
                       indices=np.arange(n_paths) + seed_offset)
    occ = OccupationAccumulator(fol, binning)
    npa = NearPlaneAccumulator(fol, eps_plane) if eps_plane is not None else None
    ella = EllAverageAccumulator() if track_ell else None
    checkpoints = sorted(checkpoints)
    steps_at = [int(round(T / cfg.h)) for T in checkpoints]
    hists = {}
    fracs = {}
    occ.update(w, cfg.h)
    if npa:
        npa.update(w)
    if ella:
        ella.update(w)
    n_total = steps_at[-1]
    ci = 0
    for k in range(1, n_total + 1):
        w.step()
        occ.update(w, cfg.h)
        if npa:
            npa.update(w)
        if ella:
            ella.update(w)
        while ci < len(steps_at) and k == steps_at[ci]:
            hists[checkpoints[ci]] = occ.snapshot()
            if npa:
                fracs[checkpoints[ci]] = npa.fraction()
            ci += 1
        if not w.alive.any():
            break
    return {"histograms": hists, "near_plane": fracs, "ell": ella,
            "status": w.status.copy()}


def similarity_check(fol: Foliation, start_a, start_b, cfg: SamplerConfig,
                     n_paths, binning: Binning, checkpoints,
                     chart_a=0, chart_b=0, match_seeds=True, eps_plane=None):
    """TV between ensemble-averaged occupations from two starts.

    Matched seeds reuse the same per-path streams for both starts, which
    cancels the common Monte Carlo noise (the spec's matched-seed design).
    Returns {"tv": {T: tv}, "runs": (run_a, run_b)}.
    """
    run_a = run_occupation_ensemble(fol, start_a, cfg, n_paths, binning,
                                    checkpoints, start_chart=chart_a,
                                    eps_plane=eps_plane)
    cfg_b = cfg if match_seeds else SamplerConfig(
        h=cfg.h, horizon=cfg.horizon, seed=cfg.seed + 977,
        guard_fraction=cfg.guard_fraction, flowbox_c=cfg.flowbox_c,
        time_factor=cfg.time_factor, subdiscretize=cfg.subdiscretize,
        rtol=cfg.rtol, atol=cfg.atol, max_halvings=cfg.max_halvings)
    run_b = run_occupation_ensemble(fol, start_b, cfg_b, n_paths, binning,
                                    checkpoints, start_chart=chart_b,
                                    eps_plane=eps_plane)
    tvs = {T: tv_distance(run_a["histograms"][T], run_b["histograms"][T])
           for T in run_a["histograms"]}
    return {"tv": tvs, "runs": (run_a, run_b)}


def transition_similarity(fol: Foliation, p_coords, offset_t, delta,
                          h, n_samples, seed=0, bins=20, box_w=None,
                          chart=0, offset_u=0.0, match_seeds=True):
    """TV between one-step displacement histograms from p and projected from q.

    Works in the flow coordinate of a single-chart foliation: endpoints of
    delta-time Brownian steps from p give flow times w; endpoints from
    q = p + t N(p) + u s dz are carried back to L_p through the xi-solve, so
    their feet have flow times w + xi(t, u, w). Both samples are binned on a
    common (Re, Im) grid and compared in TV. Matched seeds transport the
    same Wiener mass (the Radon-Nikodym comparison); independent seeds
    calibrate the Monte Carlo noise floor.
    """
    from .foliation import AmbientPoint
    from .projection import ProjectionFrame, solve_xi_many

    if fol.atlas.n_charts != 1:
        raise ChartMismatch("transition similarity is a single-chart diagnostic")
    p = AmbientPoint(chart, p_coords)
    frame = ProjectionFrame(fol, p)
    q = frame.offset_point(offset_t, offset_u)

    wa = _flow_time_endpoints(fol, p.coords, chart, delta, h, n_samples, seed)
    wb = _flow_time_endpoints(fol, q, chart, delta, h, n_samples,
                              seed if match_seeds else seed + 1)
    xib, okb = solve_xi_many(frame, offset_t, offset_u, wb)
    vb = (wb + xib)[okb]

    if box_w is None:
        box_w = 4.0 * float(np.median(np.abs(wa))) + 1e-12
    ha = _complex_hist(wa, bins, box_w)
    hb = _complex_hist(vb, bins, box_w)
    return float(0.5 * np.abs(ha - hb).sum())


def _flow_time_endpoints(fol, start, chart, delta, h, n_samples, seed):
    cfg = SamplerConfig(h=h, horizon=delta, seed=seed)
    w = EnsembleWalker(fol, [start] * n_samples, cfg,
                       charts=[chart] * n_samples)
    acc = np.zeros(n_samples, dtype=np.complex128)
    for _ in range(cfg.n_steps):
        w.step()
        acc += w.last_dzeta
    return acc


def _complex_hist(w, bins, box):
    re = np.clip(w.real, -box, box - 1e-15)
    im = np.clip(w.imag, -box, box - 1e-15)
    H, _, _ = np.histogram2d(re, im, bins=bins,
                             range=[[-box, box], [-box, box]])
    return H / H.sum()
