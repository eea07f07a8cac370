"""Variational and flat-section transport along leaf paths; Lyapunov slopes.

The variational matrix V solves dV/dzeta = dX(q) V along each flow
increment; flat conormal covectors transport by the inverse-transpose flow.
Log-norms of the induced maps on the two distinguished quotient bundles are

  N: (tangent of P) / (tangent of the foliation), inside the invariant plane,
  L: (ambient tangent) / (tangent of P), transverse to the invariant plane,

computed with configurable Hermitian weights (Fubini-Study by default, so
the series is chart-independent across the atlas).
"""

from __future__ import annotations

import numpy as np

from .brownian import EnsembleWalker, LeafPath, SamplerConfig, STATUS_OK
from .errors import DegenerateFrame, InsufficientPaths, StencilExit, ChartExit
from .foliation import AmbientPoint, Foliation
from .metric import ell_at, hermitian_norm, weight_matrix

BUNDLE_N = "N"
BUNDLE_L = "L"


# -- frames and quotient log-norms ------------------------------------------

def plane_indices(fol: Foliation, chart):
    """Indices of the in-plane coordinates (all of them in dimension 2)."""
    pc = fol.atlas.plane_coord(chart)
    if fol.dim == 2:
        return [0, 1], None
    if pc is None:
        raise ChartExit("chart does not meet the invariant plane")
    return [i for i in range(fol.dim) if i != pc], pc


def conormal_frame(fol: Foliation, coords, chart):
    """A covector u0 spanning the N-quotient frame at a point of P.

    Returns (u0, ix) where ix are the in-plane coordinate indices and u0 is
    the weighted orthogonal complement of X within the plane block.
    """
    ix, _ = plane_indices(fol, chart)
    X = fol.field(chart)(coords)[ix]
    H = weight_matrix(fol, coords, chart)[np.ix_(ix, ix)]
    w = H @ X
    nw = np.linalg.norm(w)
    if nw < 1e-300:
        raise DegenerateFrame("field norm vanished at the frame point")
    u0 = np.array([-np.conj(w[1]), np.conj(w[0])], dtype=np.complex128)
    return u0 / np.linalg.norm(u0), ix


def lognorm_N(fol: Foliation, V, coords0, chart0, coords1, chart1, vlog=0.0):
    """Log operator norm of the map V induces on TP/TF (1-dim quotient)."""
    u0, ix0 = conormal_frame(fol, coords0, chart0)
    ix1, _ = plane_indices(fol, chart1)
    VP = V[np.ix_(ix1, ix0)]
    H0 = weight_matrix(fol, coords0, chart0)[np.ix_(ix0, ix0)]
    H1 = weight_matrix(fol, coords1, chart1)[np.ix_(ix1, ix1)]
    X1 = fol.field(chart1)(coords1)[ix1]
    v = VP @ u0
    hx = np.vdot(X1, H1 @ X1)
    if abs(hx) < 1e-300:
        raise DegenerateFrame("field norm vanished at the target")
    v_perp = v - X1 * (np.vdot(X1, H1 @ v) / hx)
    num = hermitian_norm(H1, v_perp)
    den = hermitian_norm(H0, u0)
    return float(np.log(num) - np.log(den)) + vlog


def lognorm_L(fol: Foliation, V, coords0, chart0, coords1, chart1, vlog=0.0):
    """Log norm of the map V induces on TM/TP (transverse to the plane)."""
    _, pc0 = plane_indices(fol, chart0)
    _, pc1 = plane_indices(fol, chart1)
    if pc0 is None or pc1 is None:
        raise ChartExit("L-bundle needs ambient dimension 3")
    entry = V[pc1, pc0]
    k0 = _plane_quotient_weight(fol, coords0, chart0, pc0)
    k1 = _plane_quotient_weight(fol, coords1, chart1, pc1)
    return float(np.log(np.abs(entry)) + np.log(k1) - np.log(k0)) + vlog


def _plane_quotient_weight(fol: Foliation, coords, chart, pc):
    H = weight_matrix(fol, coords, chart)
    Hinv = np.linalg.inv(H)
    return 1.0 / np.sqrt(float(np.real(Hinv[pc, pc])))


def normal_derivative_lognorm(fol: Foliation, V, p0: AmbientPoint,
                              pt: AmbientPoint, bundle, vlog=0.0):
    """Spec operation: log |induced map of V| on bundle N or L."""
    if abs(np.linalg.det(V)) == 0.0:
        raise DegenerateFrame("variational matrix not invertible")
    fn = lognorm_N if bundle == BUNDLE_N else lognorm_L
    return fn(fol, V, p0.coords, p0.chart, pt.coords, pt.chart, vlog=vlog)


def flat_covector(fol: Foliation, coords, chart, bundle):
    """Initial flat conormal covector for a bundle at a point of P."""
    ix, pc = plane_indices(fol, chart)
    s = np.zeros(fol.dim, dtype=np.complex128)
    if bundle == BUNDLE_L:
        if pc is None:
            raise ChartExit("L-bundle needs ambient dimension 3")
        s[pc] = 1.0
        return s
    X = fol.field(chart)(coords)[ix]
    n = np.linalg.norm(X)
    if n < 1e-300:
        raise DegenerateFrame("field vanishes at the start")
    # annihilates X within the plane block
    s[ix[0]] = -X[1] / n
    s[ix[1]] = X[0] / n
    return s


def flat_lognorm(fol: Foliation, s, coords, chart, s0, coords0, chart0,
                 bundle, slog=0.0):
    """log ||s(t)|| / ||s(0)|| in the dual (conormal) weighted norm."""
    n1 = _dual_norm(fol, s, coords, chart, bundle)
    n0 = _dual_norm(fol, s0, coords0, chart0, bundle)
    return float(np.log(n1) - np.log(n0)) + slog


def _dual_norm(fol: Foliation, s, coords, chart, bundle):
    ix, pc = plane_indices(fol, chart)
    if bundle == BUNDLE_N:
        H = weight_matrix(fol, coords, chart)[np.ix_(ix, ix)]
        sv = s[ix]
        return float(np.sqrt(np.real(sv @ np.linalg.inv(H) @ np.conj(sv))))
    H = weight_matrix(fol, coords, chart)
    sv = np.asarray(s)
    return float(np.sqrt(np.real(sv @ np.linalg.inv(H) @ np.conj(sv))))


# -- transports along recorded paths ----------------------------------------

def transport_variational(fol: Foliation, path: LeafPath, rtol=1e-11):
    """Replay the variational transport along a recorded path.

    Returns (V_series, vlog_series): V_series[k] is the normalized matrix at
    sample k, with log scale vlog_series[k]; V_series[0] = I.
    """
    n = len(path.dzetas)
    V = np.eye(fol.dim, dtype=np.complex128)
    vlog = 0.0
    out = np.empty((n + 1, fol.dim, fol.dim), dtype=np.complex128)
    logs = np.empty(n + 1)
    out[0] = V
    logs[0] = 0.0
    for k in range(n):
        V, vlog = _advance(fol, path, k, V, vlog, rtol, transpose=False)
        out[k + 1] = V
        logs[k + 1] = vlog
    return out, logs


def transport_flat_section(fol: Foliation, path: LeafPath, s0, bundle=None,
                           rtol=1e-11):
    """Transport a flat conormal covector along a recorded path.

    In a diagonal-linear chart this is the exact exponential solution;
    elsewhere it integrates ds/dzeta = -dX(q)^T s.
    """
    n = len(path.dzetas)
    s = np.asarray(s0, dtype=np.complex128).copy()
    slog = 0.0
    out = np.empty((n + 1, fol.dim), dtype=np.complex128)
    logs = np.empty(n + 1)
    out[0] = s
    logs[0] = 0.0
    for k in range(n):
        s, slog = _advance(fol, path, k, s, slog, rtol, transpose=True)
        out[k + 1] = s
        logs[k + 1] = slog
    return out, logs


def _advance(fol, path, k, obj, olog, rtol, transpose):
    if path.mixed[k]:
        raise ValueError(
            "path step crossed charts mid-increment; replay transports need "
            "clean steps (resample with a smaller h or shorter horizon)")
    c0, c1 = int(path.charts[k]), int(path.charts[k + 1])
    coords = path.points[k]
    if c1 != c0:
        jac = fol.atlas.transition_jacobian(coords, c0, c1)
        coords = fol.atlas.to_chart(coords, c0, c1)
        obj = np.linalg.solve(jac.T, obj) if transpose else jac @ obj
    if transpose:
        _, _, s1, st = fol.flow_batch(coords[None], path.dzetas[k:k + 1], c1,
                                      s0=obj[None], rtol=rtol, atol=1e-14)
        obj = s1[0]
    else:
        _, v1, _, st = fol.flow_batch(coords[None], path.dzetas[k:k + 1], c1,
                                      v0=obj[None], rtol=rtol, atol=1e-14)
        obj = v1[0]
    nrm = np.linalg.norm(obj)
    if nrm > 0:
        obj = obj / nrm
        olog = olog + np.log(nrm)
    return obj, olog


def cocycle_lognorm_series(fol: Foliation, path: LeafPath, bundle,
                           rtol=1e-11):
    """H-type series of the derivative cocycle on a bundle along a path."""
    Vs, vlogs = transport_variational(fol, path, rtol=rtol)
    fn = lognorm_N if bundle == BUNDLE_N else lognorm_L
    out = np.empty(len(Vs))
    for k in range(len(Vs)):
        out[k] = fn(fol, Vs[k], path.points[0], int(path.charts[0]),
                    path.points[k], int(path.charts[k]), vlog=vlogs[k])
    return out


def flat_lognorm_series(fol: Foliation, path: LeafPath, bundle, rtol=1e-11):
    """H_t series: log ||s(gamma(t))|| / ||s(p)|| for the flat section."""
    s0 = flat_covector(fol, path.points[0], int(path.charts[0]), bundle)
    ss, slogs = transport_flat_section(fol, path, s0, bundle, rtol=rtol)
    out = np.empty(len(ss))
    for k in range(len(ss)):
        out[k] = flat_lognorm(fol, ss[k], path.points[k], int(path.charts[k]),
                              s0, path.points[0], int(path.charts[0]),
                              bundle, slog=slogs[k])
    return out


def H_t(series, times, t, h):
    """Value of a lognorm series at sample time t."""
    k = int(round(t / h))
    if k < 0 or k >= len(series) or abs(k * h - t) > 1e-9 * max(1.0, abs(t)):
        from .errors import OutOfRange
        raise OutOfRange(f"{t} is not a sample time")
    return float(series[k])


# -- ensemble runner ---------------------------------------------------------

def run_cocycle_ensemble(fol: Foliation, start, cfg: SamplerConfig,
                         n_paths, bundles=(BUNDLE_N,), record_every=1,
                         start_chart=0):
    """Sample an ensemble and record derivative-cocycle lognorm series.

    Bundle N is read off the transported variational matrix; bundle L is
    read off the transported flat conormal covector of the plane through
    the exact line-bundle duality (lognorm_L = -flat lognorm), which keeps
    its own log scale and so survives the exponential gap between the two
    bundles over long horizons.
    """
    starts = [np.asarray(start, dtype=np.complex128)] * n_paths
    w = EnsembleWalker(fol, starts, cfg, charts=[start_chart] * n_paths,
                       track_variational=True, variational_mode="covector")
    n = cfg.n_steps
    n_rec = n // record_every
    times = np.arange(n_rec + 1) * (record_every * cfg.h)
    series = {b: np.zeros((n_paths, n_rec + 1)) for b in bundles}
    coords0 = w.coords.copy()
    charts0 = w.chart.copy()
    # seed the covector-matrix columns with the flat conormal frames
    cols = {b: j for j, b in enumerate(bundles)}
    s0 = {b: flat_covector(fol, coords0[0], start_chart, b) for b in bundles}
    n0 = {b: _dual_norm(fol, s0[b], coords0[0], start_chart, b)
          for b in bundles}
    W0 = np.eye(fol.dim, dtype=np.complex128)
    for b in bundles:
        W0[:, cols[b]] = s0[b]
    w.V[:] = W0
    for k in range(1, n_rec * record_every + 1):
        w.step()
        if k % record_every:
            continue
        r = k // record_every
        for i in range(n_paths):
            for b in bundles:
                st = w.V[i][:, cols[b]]
                nt = _dual_norm(fol, st, w.coords[i], int(w.chart[i]), b)
                series[b][i, r] = -(np.log(nt) - np.log(n0[b])
                                    + w.Vlog[i, cols[b]])
    return {"times": times, "series": series,
            "status": w.status.copy(), "walker": w}


def lyapunov_estimate(times, series, window=0.5):
    """Per-path slopes over the trailing window; ensemble mean and 95% CI.

    series: (n_paths, n_times) lognorm values. Requires >= 30 paths.
    """
    from scipy import stats

    series = np.atleast_2d(series)
    n_paths = len(series)
    if n_paths < 30:
        raise InsufficientPaths(f"{n_paths} paths < 30")
    t0 = times[-1] * (1.0 - window)
    sel = times >= t0
    t = times[sel]
    slopes = np.empty(n_paths)
    tc = t - t.mean()
    denom = np.sum(tc ** 2)
    for i in range(n_paths):
        y = series[i, sel]
        slopes[i] = np.sum(tc * (y - y.mean())) / denom
    mean = float(slopes.mean())
    sem = float(slopes.std(ddof=1) / np.sqrt(n_paths))
    tcrit = stats.t.ppf(0.975, n_paths - 1)
    return {"slope": mean, "ci95": (mean - tcrit * sem, mean + tcrit * sem),
            "per_path": slopes, "sem": sem}


# -- curvature of the bundle metric along leaves ------------------------------

def curvature_theta(fol: Foliation, p: AmbientPoint, bundle,
                    delta=5e-3, stencil=5, rtol=1e-11):
    """Leafwise Laplacian (w.r.t. the Poincare-type metric) of log||s||.

    A local flat section is constructed by short-time transport to the
    stencil points of the flow-box chart; theta = Delta_g log||s|| at p.
    """
    if stencil == 5:
        offsets = [0, delta, -delta, 1j * delta, -1j * delta]
        weights = np.array([-4.0, 1.0, 1.0, 1.0, 1.0]) / delta ** 2
    elif stencil == 9:
        offsets = [0, delta, -delta, 1j * delta, -1j * delta,
                   delta + 1j * delta, delta - 1j * delta,
                   -delta + 1j * delta, -delta - 1j * delta]
        weights = np.array([-20.0, 4.0, 4.0, 4.0, 4.0, 1.0, 1.0, 1.0, 1.0]) / (6.0 * delta ** 2)
    else:
        raise ValueError("stencil must be 5 or 9")
    s0 = flat_covector(fol, p.coords, p.chart, bundle)
    vals = np.empty(len(offsets))
    for j, w in enumerate(offsets):
        try:
            q, _, s1 = fol.flow_with_transport(p, complex(w), s0=s0, rtol=rtol)
        except ChartExit as e:
            raise StencilExit(str(e)) from e
        vals[j] = np.log(_dual_norm(fol, s1, q.coords, q.chart, bundle))
    lap_flow = float(weights @ vals)
    return ell_at(fol, p) ** 2 * lap_flow
