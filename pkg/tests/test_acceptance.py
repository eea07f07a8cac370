"""Acceptance suite: one test per release criterion, at stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. The degree-2 ensemble runs take tens of minutes in total.
"""

import time

import numpy as np
import pytest
from scipy import stats

from folisim import cocycle, examples, occupation as occ, triangular as tri
from folisim.brownian import (SamplerConfig, heat_tail_fit,
                              reference_hyperbolic_sampler, sample_path)
from folisim.foliation import AmbientPoint
from folisim.projection import IFTConfig, ProjectionFrame, holonomy_point
from tests.test_cocycle import loop_path


def _report(num, ok, detail):
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


class TestCriterion1:
    def test_loop_holonomy_oracle(self, linear2d):
        t0 = time.time()
        r = np.exp(-4.0)
        lp = loop_path(r=r, nseg=64)
        y0 = 1e-8
        _, pts, _ = holonomy_point(linear2d, lp, np.array([r, y0]))
        mult = pts[-1][1] / y0
        want = np.exp(2j * np.pi * (-1j) / 1.0)  # exp(2 i pi beta / alpha)
        rel = abs(mult - want) / abs(want)
        elapsed = time.time() - t0
        _report(1, rel < 1e-9 and elapsed < 1.0,
                f"loop multiplier {mult:.4f}, |mult| = {abs(mult):.4f} "
                f"(e^(2pi) = {np.exp(2 * np.pi):.4f}), rel err {rel:.2e}, "
                f"{elapsed:.2f}s")


class TestCriterion2:
    def test_triangular_cocycle_suite(self, rng):
        t0 = time.time()
        worst_ratio = 1.0
        worst_gap = -np.inf
        for k in range(1000):
            tc = tri.random_triangular(np.random.default_rng(k), 256,
                                       lam=1.0, mu=1.0, M=1.0, sigma=0.4)
            C_full, (C_half,) = tri.lemma15_bound(tc, 0.3, checkpoints=[128])
            assert np.isfinite(C_full)
            worst_ratio = max(worst_ratio, C_full / C_half)
            if k % 50 == 0:
                u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
                m = int(rng.integers(0, 8))
                worst_gap = max(worst_gap,
                                tri.lyapunov_norm_contraction_gap(tc, m, u, 0.3))
        # Pesin composition on a fixed hypothesis-satisfying cocycle
        tc = tri.random_triangular(np.random.default_rng(7), 256,
                                   lam=1.0, mu=1.0, M=1.0, sigma=0.3)
        eps = 0.25
        rho, chat = tri.pesin_radius_and_constant(tc, eps, M=1.0, r=1.0, rng=3)
        theta = 0.5 * rho
        pesin_ok = True
        for trial in range(50):
            trng = np.random.default_rng(100 + trial)
            maps = [tri.PerturbedMap.random_quadratic(tc.matrix(i), 1.0, trng)
                    for i in range(51)]
            for n in (1, 5, 10, 20, 35, 50):
                rad = tri.pesin_compose(maps, theta, n, rng=trial)
                bound = chat * np.exp(-(tc.alpha - 2 * eps) * n) * theta
                pesin_ok &= rad <= bound * (1 + 1e-9)
        elapsed = time.time() - t0
        _report(2, worst_ratio <= 2.0 and worst_gap <= 1e-12 and pesin_ok
                and elapsed < 30.0,
                f"1000 cocycles: C doubling ratio max {worst_ratio:.3f}, "
                f"contraction gap max {worst_gap:.2e}, pesin ok {pesin_ok}, "
                f"{elapsed:.1f}s")


class TestCriterion3:
    def test_xi_solver(self, linear3d, rng):
        frame = ProjectionFrame(linear3d,
                                AmbientPoint(0, [0.1, 0.08 - 0.03j, 0.0]))
        ift = IFTConfig()
        # xi(0, 0, zeta) = 0 across 1000 zeta samples
        worst0 = 0.0
        for _ in range(1000):
            z = 0.15 * (rng.standard_normal() + 1j * rng.standard_normal())
            if abs(z) > ift.r0:
                z *= ift.r0 / abs(z) * 0.99
            worst0 = max(worst0, abs(frame.solve_xi(0.0, 0.0, z, ift)))
        # dF/dxi(0,0,0,0) identity
        _, dxi, _ = frame.F_wirtinger(0, 0, 0, 0)
        X = linear3d.eval_vector_field(frame.p)
        want = -np.linalg.norm(X) ** 2 / np.linalg.norm(frame.p.coords) ** 2
        deriv_err = abs(dxi - want)
        # |xi| <= C (|t| + |u|), fitted C stable under sample doubling,
        # Newton convergence rate on in-radius samples

        def batch(n, seed):
            r = np.random.default_rng(seed)
            cmax = 0.0
            fails = 0
            total = 0
            for _ in range(n):
                t = 0.08 * (r.standard_normal() + 1j * r.standard_normal())
                u = 0.08 * (r.standard_normal() + 1j * r.standard_normal())
                z = 0.15 * (r.standard_normal() + 1j * r.standard_normal())
                if max(abs(t), abs(u), abs(z)) > ift.r0:
                    continue
                total += 1
                try:
                    xi = frame.solve_xi(t, u, z, ift)
                    assert abs(frame.F(t, u, z, xi)) <= 1e-10
                    cmax = max(cmax, abs(xi) / (abs(t) + abs(u)))
                except Exception:
                    fails += 1
            return cmax, fails, total
        c1, f1, n1 = batch(10000, 1)
        c2, f2, n2 = batch(20000, 2)
        conv = 1.0 - (f1 + f2) / (n1 + n2)
        ok = (worst0 < 1e-12 and deriv_err < 1e-8
              and np.isfinite(c2) and c2 <= 2 * c1 and conv >= 0.99)
        _report(3, ok,
                f"|xi(0,0,z)| max {worst0:.2e}, dF/dxi err {deriv_err:.2e}, "
                f"C fitted {c1:.3f}->{c2:.3f}, convergence {conv:.4f}")


class TestCriterion4:
    def test_sampler_sanity(self):
        t0 = time.time()
        h = 0.01
        ens = reference_hyperbolic_sampler(
            0.0, SamplerConfig(h=h, horizon=h, seed=3), n_paths=100000,
            kind="plane")
        msd = float(np.mean(np.abs(ens.points[:, 1] - ens.points[:, 0]) ** 2))
        msd_ok = abs(msd - 4 * h) / (4 * h) < 0.02
        slope, _, r2, _ = heat_tail_fit(
            SamplerConfig(h=0.01, horizon=1.0, seed=3),
            deltas=[0.25, 0.5, 1.0], r_grid=[1.0, 1.5, 2.0, 2.5, 3.0],
            n_paths=4000)
        elapsed = time.time() - t0
        _report(4, msd_ok and slope < 0 and r2 >= 0.9 and elapsed < 120.0,
                f"MSD {msd:.5f} vs 4h {4 * h} ({abs(msd - 4 * h) / (4 * h):.3%}), "
                f"tail slope {slope:+.3f}, R^2 {r2:.3f}, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def deg2_lyapunov(deg2_p3):
    cfg = SamplerConfig(h=0.1, horizon=200.0, seed=2024, rtol=1e-6)
    start = np.array([0.31 + 0.12j, -0.22 + 0.27j, 0.0])
    return cocycle.run_cocycle_ensemble(deg2_p3, start, cfg, 100,
                                        bundles=("N", "L"), record_every=5)


class TestCriterion5:
    def test_lyapunov_negative_both_bundles(self, deg2_lyapunov):
        t0 = time.time()
        res = deg2_lyapunov
        expected = {"N": 4.0, "L": 1.0 / 3.0}
        details = []
        ok = True
        for b in ("N", "L"):
            est = cocycle.lyapunov_estimate(res["times"], res["series"][b])
            lo, hi = est["ci95"]
            ok &= hi < 0.0
            ratio = -est["slope"] / expected[b]
            details.append(
                f"{b}: slope {est['slope']:+.3f} CI [{lo:+.3f},{hi:+.3f}] "
                f"ratio to {'lambda=4' if b == 'N' else 'mu=1/3'}: {ratio:.2f} "
                "(up to the metric comparability constant)")
        _report(5, ok, "; ".join(details))


class TestCriterion6:
    def test_two_start_occupation_tv(self, deg2_p2):
        cfg = SamplerConfig(h=0.1, horizon=10000.0, seed=77, rtol=1e-6)
        binning = occ.Binning(n_charts=deg2_p2.atlas.n_charts)
        res = occ.similarity_check(
            deg2_p2, examples.GENERIC_START_2D, examples.SECOND_START_2D,
            cfg, n_paths=16, binning=binning,
            checkpoints=[100.0, 1000.0, 10000.0], match_seeds=True)
        vals = [res["tv"][T] for T in sorted(res["tv"])]
        decreasing = all(b <= a for a, b in zip(vals, vals[1:]))
        _report(6, decreasing and vals[-1] <= 0.2,
                f"TV over T=(1e2,1e3,1e4): "
                + ", ".join(f"{v:.4f}" for v in vals))


class TestCriterion7:
    def test_near_plane_concentration(self, deg2_p3):
        cfg = SamplerConfig(h=0.1, horizon=10000.0, seed=77, rtol=1e-6)
        start = np.array([0.31 + 0.12j, -0.22 + 0.27j, 0.01 + 0.0j])
        res = occ.run_occupation_ensemble(
            deg2_p3, start, cfg, 16, occ.Binning(n_charts=3),
            [100.0, 1000.0, 10000.0], eps_plane=0.05)
        fr = [res["near_plane"][T] for T in sorted(res["near_plane"])]
        increasing = all(b >= a for a, b in zip(fr, fr[1:]))
        _report(7, increasing and fr[-1] > 0.9,
                "near-plane fractions over T=(1e2,1e3,1e4): "
                + ", ".join(f"{v:.4f}" for v in fr))


class TestCriterion8:
    def test_cross_module_coherence(self, linear2d, deg2_p2):
        # (a) point holonomy vs variational cocycle at small offsets
        cfg = SamplerConfig(h=0.02, horizon=1.0, seed=31, rtol=1e-11)
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        path = sample_path(deg2_p2, p, cfg)
        assert not path.mixed.any()
        old = deg2_p2.metric_weights
        deg2_p2.metric_weights = "euclidean"
        try:
            eucl = cocycle.cocycle_lognorm_series(deg2_p2, path, "N")[-1]
        finally:
            deg2_p2.metric_weights = old
        frame = ProjectionFrame(deg2_p2, p)
        nvec = frame.normal(p.coords)
        nvec = nvec / np.linalg.norm(nvec)
        rel_holo = 0.0
        for theta in (1e-4, 3e-5):
            q0 = p.coords + theta * nvec
            _, _, dist = holonomy_point(deg2_p2, path, q0)
            rel_holo = max(rel_holo,
                           abs(np.log(dist[-1] / dist[0]) - eucl) / abs(eucl))
        # (b) H_t cocycle additivity
        cfg2 = SamplerConfig(h=0.01, horizon=0.6, seed=5, rtol=1e-11)
        mpath = sample_path(linear2d, AmbientPoint(0, [np.exp(-2.0), 0.0]),
                            cfg2)
        hts = cocycle.flat_lognorm_series(linear2d, mpath, "N")
        k = 20
        sh = mpath.shift(mpath.times[k])
        hts2 = cocycle.flat_lognorm_series(linear2d, sh, "N")
        add_err = np.abs(hts[k:] - (hts[k] + hts2)).max()
        # (c) flat-section / variational duality
        hn = cocycle.cocycle_lognorm_series(deg2_p2, path, "N")
        hf = cocycle.flat_lognorm_series(deg2_p2, path, "N")
        dual_err = np.abs(hf + hn).max()
        ok = rel_holo < 0.10 and add_err < 1e-8 and dual_err < 1e-5
        _report(8, ok,
                f"holonomy-vs-variational rel {rel_holo:.3f}, "
                f"H_t additivity {add_err:.2e}, duality {dual_err:.2e}")
