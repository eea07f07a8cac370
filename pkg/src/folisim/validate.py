"""Self-contained property suites behind the `validate` CLI subcommand."""

from __future__ import annotations

import numpy as np

from . import triangular as tri
from .brownian import SamplerConfig, heat_tail_fit, path_rng, reference_hyperbolic_sampler
from .foliation import AmbientPoint, HYPERBOLIC
from .metric import ell, ell_d2
from .projection import IFTConfig, ProjectionFrame


def _check(report, name, passed, detail):
    report["checks"][name] = {"passed": bool(passed), "detail": detail}


def run_validation(cfg, fol, scfg, quick=False):
    rng = np.random.default_rng(scfg.seed)
    report = {"checks": {}}

    # ell function: splice smoothness, monotonicity, floor
    s = np.linspace(1e-6, 6.0, 2001 if quick else 20001)
    v = ell(s)
    ok = (np.all(np.diff(v) <= 0) and np.all(v >= 1.0)
          and np.all(v >= -np.log(s) - 1e-12))
    d2_jump = abs(ell_d2(1 / 3 - 1e-12) - ell_d2(1 / 3 + 1e-12))
    _check(report, "ell_invariants", ok and d2_jump < 1e-6,
           f"monotone/floor ok={ok}, splice d2 jump {d2_jump:.2e}")

    # singularity residuals and classification
    resid = 0.0
    all_h = True
    for k, chart in enumerate(fol.charts):
        for sp in chart.singularities:
            resid = max(resid, float(np.linalg.norm(chart.field(sp.location))))
            all_h &= sp.classification == HYPERBOLIC
    _check(report, "singularities",
           resid <= fol.residual_tol and (all_h or cfg.get("exploratory")),
           f"max residual {resid:.2e}, all hyperbolic {all_h}")

    # tangency degree against the declared degree
    if fol.dim == 2 or fol.atlas.plane_coord(0) is not None:
        try:
            d = fol.tangency_degree(rng=scfg.seed)
            _check(report, "tangency_degree", d == fol.degree,
                   f"counted {d}, declared {fol.degree}")
        except Exception as e:
            _check(report, "tangency_degree", False, str(e))

    # flow group property + jacobian finite differences near the start
    start = cfg.get("start")
    p0 = (np.array([complex(a, b) for a, b in start]) if start
          else 0.2 * np.ones(fol.dim, dtype=complex))
    p = AmbientPoint(0, p0)
    z1, z2 = 0.05 + 0.04j, -0.03 + 0.06j
    q12 = fol.flow(fol.flow(p, z1), z2)
    q3 = fol.flow(p, z1 + z2)
    grp = float(np.abs(q12.coords - q3.coords).max())
    _check(report, "flow_group_property", grp < 1e-7,
           f"|flow(flow(p,z1),z2) - flow(p,z1+z2)| = {grp:.2e}")

    jac = fol.jacobian(p)
    h = 1e-6
    fd = np.empty_like(jac)
    for j in range(fol.dim):
        e = np.zeros(fol.dim, dtype=complex)
        e[j] = h
        fd[:, j] = (fol.field(0)(p0 + e) - fol.field(0)(p0 - e)) / (2 * h)
    jerr = float(np.abs(jac - fd).max() / max(1.0, np.abs(jac).max()))
    _check(report, "jacobian_fd", jerr < 1e-6,
           f"relative central-difference error {jerr:.2e}")

    # invariant plane preserved by the flow
    pc = fol.atlas.plane_coord(0)
    if fol.dim == 3 and pc is not None:
        pp = p0.copy()
        pp[pc] = 0.0
        q = fol.flow(AmbientPoint(0, pp), 0.1 - 0.07j)
        _check(report, "plane_invariance", abs(q.coords[pc]) < 1e-12,
               f"|plane coord after flow| = {abs(q.coords[pc]):.2e}")

    # triangular cocycle suite
    n_coc = 50 if quick else 300
    worst_ratio = 1.0
    worst_gap = -np.inf
    for k in range(n_coc):
        tc = tri.random_triangular(np.random.default_rng(1000 + k), 256,
                                   lam=1.0, mu=1.0, M=1.0, sigma=0.4)
        C_full, (C_half,) = tri.lemma15_bound(tc, 0.3, checkpoints=[128])
        worst_ratio = max(worst_ratio, C_full / C_half)
        u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        worst_gap = max(worst_gap,
                        tri.lyapunov_norm_contraction_gap(tc, 3, u, 0.3))
    _check(report, "cocycle_bounds",
           worst_ratio <= 2.0 and worst_gap <= 1e-12,
           f"C doubling ratio max {worst_ratio:.3f}, "
           f"contraction gap max {worst_gap:.2e}")

    # xi-solver on the config's geometry
    frame = ProjectionFrame(fol, p)
    ift = IFTConfig()
    worst0 = 0.0
    n_xi = 100 if quick else 1000
    fails = 0
    cmax = 0.0
    def _clip(z, r):
        return z if abs(z) <= r else z * (r / abs(z))

    for k in range(n_xi):
        z = _clip(0.2 * (rng.standard_normal() + 1j * rng.standard_normal()), 0.3)
        worst0 = max(worst0, abs(frame.solve_xi(0.0, 0.0, z, ift)))
        t = _clip(0.1 * (rng.standard_normal() + 1j * rng.standard_normal()), 0.3)
        try:
            xi = frame.solve_xi(t, 0.0, z, ift)
            cmax = max(cmax, abs(xi) / abs(t))
        except Exception:
            fails += 1
    _check(report, "xi_solver",
           worst0 < 1e-12 and fails <= 0.01 * n_xi and np.isfinite(cmax),
           f"|xi(0,0,z)| max {worst0:.2e}, failures {fails}/{n_xi}, "
           f"C fit {cmax:.2f}")

    # sampler sanity: unit-density mean-square displacement through the
    # reference sampler
    n_ms = 20000 if quick else 100000
    h_ms = 0.01
    ens = reference_hyperbolic_sampler(
        0.0, SamplerConfig(h=h_ms, horizon=h_ms, seed=scfg.seed),
        n_paths=n_ms, kind="plane")
    msd = float(np.mean(np.abs(ens.points[:, 1] - ens.points[:, 0]) ** 2))
    _check(report, "euclidean_msd", abs(msd - 4 * h_ms) / (4 * h_ms) < 0.02,
           f"E|dz|^2 = {msd:.5f} vs 4h = {4 * h_ms}")

    # reference-sampler heat tail
    tmpl = SamplerConfig(h=0.02, horizon=1.0, seed=scfg.seed)
    slope, _, r2, _ = heat_tail_fit(tmpl, [0.5, 1.0], [1.0, 1.5, 2.0, 2.5],
                                    n_paths=1000 if quick else 4000)
    _check(report, "heat_tail", slope < 0 and r2 >= 0.9,
           f"slope {slope:+.3f}, R^2 {r2:.3f}")

    report["passed"] = all(e["passed"] for e in report["checks"].values())
    return report
