import numpy as np
import pytest

from folisim import cocycle
from folisim.brownian import LeafPath, SamplerConfig, sample_path
from folisim.errors import InsufficientPaths
from folisim.foliation import AmbientPoint


def loop_path(r=np.exp(-3.0), nseg=48, alpha=1.0):
    """The circle |x| = r traversed once in the leaf {y = 0}."""
    dz = 2j * np.pi / alpha / nseg * np.ones(nseg, dtype=complex)
    pts = np.array([[r * np.exp(1j * 2 * np.pi * k / nseg), 0.0]
                    for k in range(nseg + 1)])
    return LeafPath(start=AmbientPoint(0, [r, 0.0]),
                    times=np.arange(nseg + 1) * 0.1,
                    charts=np.zeros(nseg + 1, dtype=np.int64),
                    points=pts, dzetas=dz,
                    ells=np.full(nseg + 1, -np.log(r)), h=0.1)


@pytest.fixture(scope="module")
def model_path(linear2d):
    cfg = SamplerConfig(h=0.01, horizon=0.6, seed=5, rtol=1e-11)
    return sample_path(linear2d, AmbientPoint(0, [np.exp(-2.0), 0.0]), cfg)


class TestVariationalTransport:
    def test_starts_at_identity(self, linear2d, model_path):
        Vs, logs = cocycle.transport_variational(linear2d, model_path)
        assert np.allclose(Vs[0], np.eye(2))
        assert logs[0] == 0.0

    def test_linear_closed_form(self, linear2d, model_path):
        Vs, logs = cocycle.transport_variational(linear2d, model_path)
        Z = np.cumsum(np.concatenate([[0.0], model_path.dzetas]))
        for k in range(0, model_path.n_samples(), 10):
            V = Vs[k] * np.exp(logs[k])
            want = np.diag([np.exp(Z[k]), np.exp(-1j * Z[k])])
            assert np.abs(V - want).max() < 1e-9 * max(1, np.abs(want).max())

    def test_abel_liouville(self, deg2_p2):
        # det V(t) = exp(int tr dX dzeta), Gauss-Legendre quadrature oracle
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        dz = 0.25 - 0.2j
        _, V, _ = deg2_p2.flow_with_transport(p, dz,
                                              v0=np.eye(2, dtype=complex),
                                              rtol=1e-12)
        nodes, weights = np.polynomial.legendre.leggauss(24)
        acc = 0.0 + 0.0j
        for x, wgt in zip(nodes, weights):
            s = 0.5 * (x + 1.0)
            q = deg2_p2.flow(p, s * dz, rtol=1e-12)
            acc += wgt * deg2_p2.field(0).trace_jacobian(q.coords) * 0.5 * dz
        assert abs(np.linalg.det(V) - np.exp(acc)) / abs(np.exp(acc)) < 1e-6


class TestLognorms:
    def test_identity_path_zero(self, linear2d):
        p = np.array([0.2, 0.1 + 0.05j])
        v = cocycle.lognorm_N(linear2d, np.eye(2, dtype=complex), p, 0, p, 0)
        assert abs(v) < 1e-12

    def test_loop_value_2pi(self, linear2d):
        lp = loop_path()
        Vs, logs = cocycle.transport_variational(linear2d, lp)
        got = cocycle.lognorm_N(linear2d, Vs[-1], lp.points[0], 0,
                                lp.points[-1], 0, vlog=logs[-1])
        assert got == pytest.approx(2 * np.pi, rel=1e-9)

    def test_degenerate_frame_rejected(self, linear2d):
        with pytest.raises(Exception):
            cocycle.normal_derivative_lognorm(
                linear2d, np.zeros((2, 2), dtype=complex),
                AmbientPoint(0, [0.1, 0.0]), AmbientPoint(0, [0.1, 0.0]), "N")


class TestFlatSections:
    def test_trivial_path_unchanged(self, linear2d, model_path):
        sub = model_path.shift(model_path.horizon)  # single point
        s0 = cocycle.flat_covector(linear2d, sub.points[0], 0, "N")
        ss, logs = cocycle.transport_flat_section(linear2d, sub, s0)
        assert np.allclose(ss[0] * np.exp(logs[0]), s0)

    def test_linear_chart_exact_decay(self, linear3d):
        # A(T) = a(p) e^{-alpha zeta T} for the x-component
        p = np.array([0.1, 0.05, 0.0])
        zeta = 1.0
        path = LeafPath(start=AmbientPoint(0, p),
                        times=np.array([0.0, 1.0]),
                        charts=np.zeros(2, dtype=np.int64),
                        points=np.array([p, p * np.exp([1.0, -1j, -0.5 - 0.5j])]),
                        dzetas=np.array([zeta + 0j]),
                        ells=np.ones(2), h=1.0)
        s0 = np.array([1.0, 0.0, 0.0], dtype=complex)  # a dx
        ss, logs = cocycle.transport_flat_section(linear3d, path, s0)
        got = ss[-1] * np.exp(logs[-1])
        assert abs(got[0] - np.exp(-1.0 * zeta)) < 1e-12

    def test_c_component_quadrature_bound(self, linear3d):
        # |C(1)| <= |c(p)| e^{M |zeta|} with M = sup|gamma| = |gamma|
        p = np.array([0.1, 0.05, 0.0])
        zeta = 0.8 + 0.3j
        path = LeafPath(start=AmbientPoint(0, p),
                        times=np.array([0.0, 1.0]),
                        charts=np.zeros(2, dtype=np.int64),
                        points=np.array([p, p * np.exp(np.array([1.0, -1j, -0.5 - 0.5j]) * zeta)]),
                        dzetas=np.array([zeta]),
                        ells=np.ones(2), h=1.0)
        s0 = np.array([0.0, 0.0, 1.0], dtype=complex)  # c dz
        ss, logs = cocycle.transport_flat_section(linear3d, path, s0)
        got = abs((ss[-1] * np.exp(logs[-1]))[2])
        M = abs(-0.5 - 0.5j)
        assert got <= np.exp(M * abs(zeta)) + 1e-12

    def test_duality_with_variational(self, linear2d, model_path):
        hn = cocycle.cocycle_lognorm_series(linear2d, model_path, "N")
        hf = cocycle.flat_lognorm_series(linear2d, model_path, "N")
        assert np.abs(hf + hn).max() < 1e-5

    def test_duality_on_curved_example(self, deg2_p2):
        cfg = SamplerConfig(h=0.02, horizon=0.5, seed=17, rtol=1e-11)
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        path = sample_path(deg2_p2, p, cfg)
        assert not path.mixed.any()
        hn = cocycle.cocycle_lognorm_series(deg2_p2, path, "N")
        hf = cocycle.flat_lognorm_series(deg2_p2, path, "N")
        assert np.abs(hf + hn).max() < 1e-5

    def test_inverse_transpose_action(self, deg2_p2):
        # transported covector equals the inverse-transpose of V applied to s0
        cfg = SamplerConfig(h=0.02, horizon=0.3, seed=23, rtol=1e-11)
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        path = sample_path(deg2_p2, p, cfg)
        Vs, vlogs = cocycle.transport_variational(deg2_p2, path)
        s0 = cocycle.flat_covector(deg2_p2, path.points[0], 0, "N")
        ss, slogs = cocycle.transport_flat_section(deg2_p2, path, s0)
        k = path.n_samples() - 1
        V = Vs[k] * np.exp(vlogs[k])
        want = np.linalg.solve(V.T, s0)
        got = ss[k] * np.exp(slogs[k])
        assert np.abs(got - want).max() / np.abs(want).max() < 1e-5


class TestHt:
    def test_zero_at_zero(self, linear2d, model_path):
        h = cocycle.flat_lognorm_series(linear2d, model_path, "N")
        assert h[0] == 0.0
        assert cocycle.H_t(h, model_path.times, 0.0, model_path.h) == 0.0

    def test_cocycle_additivity(self, linear2d, model_path):
        h = cocycle.flat_lognorm_series(linear2d, model_path, "N")
        k = 20
        sh = model_path.shift(model_path.times[k])
        h2 = cocycle.flat_lognorm_series(linear2d, sh, "N")
        err = np.abs(h[k:] - (h[k] + h2)).max()
        assert err < 1e-8

    def test_loop_duality_sign(self, linear2d):
        lp = loop_path()
        hf = cocycle.flat_lognorm_series(linear2d, lp, "N")
        hn = cocycle.cocycle_lognorm_series(linear2d, lp, "N")
        assert hf[-1] == pytest.approx(-hn[-1], abs=1e-9)


class TestLyapunovEstimate:
    def test_synthetic_slope(self, rng):
        t = np.linspace(0, 10, 101)
        series = -2.0 * t[None, :] + 0.05 * rng.standard_normal((40, 101))
        est = cocycle.lyapunov_estimate(t, series)
        lo, hi = est["ci95"]
        assert lo < -2.0 < hi

    def test_insufficient_paths(self):
        t = np.linspace(0, 1, 11)
        with pytest.raises(InsufficientPaths):
            cocycle.lyapunov_estimate(t, np.zeros((10, 11)))

    def test_covector_route_matches_replay(self, linear2d):
        cfg = SamplerConfig(h=0.01, horizon=0.5, seed=5, rtol=1e-11)
        p = AmbientPoint(0, [np.exp(-2.0), 0.0])
        path = sample_path(linear2d, p, cfg)
        hn = cocycle.cocycle_lognorm_series(linear2d, path, "N")
        res = cocycle.run_cocycle_ensemble(linear2d, p.coords, cfg, 1,
                                           bundles=("N",))
        assert np.abs(res["series"]["N"][0] - hn).max() < 1e-9


class TestCurvatureTheta:
    def test_constant_norm_section_zero(self, linear2d):
        # Euclidean weights + the L-style covector on the 3d linear model:
        # |s| = |c| exp(-Re int gamma) varies, but for gamma = 0 it is flat
        from folisim.foliation import linear_foliation
        f = linear_foliation([1.0, -1j, 1e-30])
        p = AmbientPoint(0, [0.2, 0.1, 0.0])
        th = cocycle.curvature_theta(f, p, "L", delta=1e-2)
        assert abs(th) < 1e-4

    def test_stencil_refinement(self, deg2_p2):
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        t5 = cocycle.curvature_theta(deg2_p2, p, "N", delta=4e-3, stencil=5)
        t9 = cocycle.curvature_theta(deg2_p2, p, "N", delta=4e-3, stencil=9)
        assert t5 == pytest.approx(t9, rel=1e-3)

    def test_theta_matches_one_step_drift_sign(self, deg2_p2):
        # occupation-mean of theta tracks the flat-section growth rate
        p = AmbientPoint(0, [0.31 + 0.12j, -0.22 + 0.27j])
        th = cocycle.curvature_theta(deg2_p2, p, "N", delta=5e-3)
        assert th > 0  # flat sections grow, derivative cocycle contracts
