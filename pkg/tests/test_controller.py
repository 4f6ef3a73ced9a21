import math

import numpy as np
import pytest

from ftns.controller import (
    EscState,
    GainSet,
    TargetState,
    averaged_rhs,
    esc_rhs,
    floor_spd,
    gain_threshold,
    lyapunov_v1,
    lyapunov_v2,
    lyapunov_v3,
    make_averaged_rhs,
    make_esc_rhs,
    make_target_rhs,
    monitor_channels,
    target_rhs,
    to_zg,
)
from ftns.dither import DitherSpec, averaged_demod, vec_sym
from ftns.flows import FlowParams, scaled_flow
from ftns.plant import ModelError, PolynomialCost, QuadraticCost
from ftns import sim


class CountingCost(QuadraticCost):
    """Wrapper that counts evaluate() calls (probe economy check)."""

    def __post_init__(self):
        super().__post_init__()
        self.calls = 0

    def evaluate(self, x):
        self.calls += 1
        return super().evaluate(x)


@pytest.fixture
def ref_state0():
    return EscState(x=[0.0, 1.0], v=[0.01, 0.01], xi=[1.0, 0.0, 1.0])


def test_esc_rhs_at_t0(ref_state0, ref_gains, ref_flow, ref_dither, ref_cost):
    ds = esc_rhs(0.0, ref_state0, ref_gains, ref_flow, ref_dither, ref_cost)
    # probe vanishes at t=0, so the direction argument is H0 v0 = v0
    np.testing.assert_allclose(ds.x, ref_gains.k * scaled_flow([0.01, 0.01], ref_flow), rtol=1e-15)
    np.testing.assert_allclose(ds.v, -ref_gains.K * scaled_flow([0.01, 0.01], ref_flow), rtol=1e-15)
    # the Hessian channel sees xi - y*s(0) with y = 71 at the unperturbed x
    expected_xi_arg = np.array([1.0, 0.0, 1.0]) - 71.0 * np.array([-8.0, 0.0, -8.0])
    np.testing.assert_allclose(ds.xi, -ref_gains.K2 * scaled_flow(expected_xi_arg, ref_flow),
                               rtol=1e-14)


def test_esc_rhs_single_cost_evaluation(ref_state0, ref_gains, ref_flow, ref_dither):
    counting = CountingCost(hstar=[[60.0, 25.0], [25.0, 30.0]], xstar=[1.0, 2.0], ystar=1.0)
    esc_rhs(0.37, ref_state0, ref_gains, ref_flow, ref_dither, counting)
    assert counting.calls == 1


def test_esc_rhs_independent_transcription(ref_state0, ref_gains, ref_flow, ref_dither, ref_cost):
    # straight-line scalar re-implementation of the closed-loop equations,
    # kept deliberately free of the library's vector helpers
    t = 1e-3
    x1, x2 = 0.0, 1.0
    v1, v2 = 0.01, 0.01
    xi1, xi2, xi3 = 1.0, 0.0, 1.0
    k, K, K2 = 5.0, 10.0, 100.0
    c1, c2 = 1.0, 1e-4
    s1 = math.sin(150.0 * t)
    s2 = math.sin(200.0 * t)
    p1, p2 = x1 + s1, x2 + s2
    y = 1.0 + 30.0 * (p1 - 1.0) ** 2 + 25.0 * (p1 - 1.0) * (p2 - 2.0) + 15.0 * (p2 - 2.0) ** 2
    d11, d12 = 2.0 * y * s1, 2.0 * y * s2
    e11 = 16.0 * (s1 * s1 - 0.5)
    e12 = 4.0 * s1 * s2
    e22 = 16.0 * (s2 * s2 - 0.5)
    w1 = xi1 * v1 + xi2 * v2 + d11
    w2 = xi2 * v1 + xi3 * v2 + d12
    nw = math.hypot(w1, w2)
    gw = c1 / math.sqrt(nw) + c2 * nw
    u1, u2, u3 = xi1 - y * e11, xi2 - y * e12, xi3 - y * e22
    nu = math.sqrt(u1 * u1 + u2 * u2 + u3 * u3)
    gu = c1 / math.sqrt(nu) + c2 * nu
    nv = math.hypot(v1, v2)
    gv = c1 / math.sqrt(nv) + c2 * nv
    expected = np.array([
        k * gv * v1, k * gv * v2,
        -K * gw * w1, -K * gw * w2,
        -K2 * gu * u1, -K2 * gu * u2, -K2 * gu * u3,
    ])
    got = esc_rhs(t, ref_state0, ref_gains, ref_flow, ref_dither, ref_cost).pack()
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_target_rhs_equilibrium(ref_gains, ref_flow, ref_cost):
    ds = target_rhs(TargetState(x=[1.0, 2.0], v=[0.0, 0.0]), ref_gains, ref_flow, ref_cost)
    np.testing.assert_array_equal(ds.pack(), np.zeros(4))


def test_target_rhs_at_reference_point(ref_gains, ref_flow, ref_cost):
    ds = target_rhs(TargetState(x=[0.0, 1.0], v=[0.0, 0.0]), ref_gains, ref_flow, ref_cost)
    g = np.array([-85.0, -55.0])
    np.testing.assert_allclose(ds.v, -ref_gains.K * scaled_flow(g, ref_flow), rtol=1e-14)
    np.testing.assert_array_equal(ds.x, np.zeros(2))


def test_target_settles_in_finite_time(ref_gains, ref_flow, ref_cost):
    rhs = make_target_rhs(ref_gains, ref_flow, ref_cost)
    cfg = sim.SimConfig(t_end=2.0, dt=1e-3)
    tr = sim.integrate(rhs, np.array([0.0, 1.0, 0.01, 0.01]), cfg, n=2)
    st = sim.settling_time(tr, np.array([1.0, 2.0]), 1e-3)
    assert st is not None and st < 2.0


def test_to_zg_reference_values(ref_cost):
    z, g = to_zg(TargetState(x=[0.0, 1.0], v=[0.0, 0.0]), ref_cost)
    np.testing.assert_array_equal(z, g)
    z, g = to_zg(TargetState(x=[1.0, 2.0], v=[0.0, 0.0]), ref_cost)
    np.testing.assert_allclose(np.concatenate([z, g]), np.zeros(4), atol=1e-15)
    z, g = to_zg(TargetState(x=[0.0, 1.0], v=[1.0, 0.0]), ref_cost)
    np.testing.assert_allclose(z, [-25.0, -30.0], rtol=1e-14)
    # the seeking state uses the current estimate as curvature
    z_esc, _ = to_zg(EscState(x=[0.0, 1.0], v=[1.0, 0.0], xi=[60.0, 25.0, 30.0]), ref_cost)
    np.testing.assert_allclose(z_esc, [-25.0, -30.0], rtol=1e-14)
    z_id, _ = to_zg(EscState(x=[0.0, 1.0], v=[1.0, 0.0], xi=[1.0, 0.0, 1.0]), ref_cost)
    np.testing.assert_allclose(z_id, [-84.0, -55.0], rtol=1e-14)


def test_lyapunov_reference_values(ref_cost):
    assert lyapunov_v1(np.zeros(2), np.zeros(2)) == 0.0
    assert lyapunov_v2(np.array([1.0, 0.0, 1.0]), ref_cost) == pytest.approx(2473.5, rel=1e-15)
    # plain arithmetic: (25^2 + 30^2 + 85^2 + 55^2)/2
    v1 = lyapunov_v1(np.array([-25.0, -30.0]), np.array([-85.0, -55.0]))
    assert v1 == pytest.approx((625.0 + 900.0 + 7225.0 + 3025.0) / 2.0, rel=1e-15)
    assert v1 == pytest.approx(5887.5, rel=1e-15)
    assert lyapunov_v3(np.array([-25.0, -30.0]), np.array([-85.0, -55.0])) == v1


def test_lyapunov_v2_requires_quadratic():
    poly = PolynomialCost.from_terms([((2, 0), 1.0), ((0, 2), 1.0)])
    with pytest.raises(ModelError):
        lyapunov_v2(np.array([1.0, 0.0, 1.0]), poly)


def test_gain_threshold_identity_hessian(ref_flow):
    ident = QuadraticCost(hstar=np.eye(2), xstar=[0.0, 0.0], ystar=0.0)
    k1min, k2min, kstar = gain_threshold(ident, 1.0, ref_flow)
    assert k1min == pytest.approx(math.sqrt(1.0 / 3.0), rel=1e-12)
    assert kstar > 0.0


def test_gain_threshold_independent_transcription(ref_cost, ref_flow):
    lmin = 45.0 - math.sqrt(850.0)
    lmax = 45.0 + math.sqrt(850.0)
    k1 = math.sqrt((0.5 / 1.5) / lmin ** 2)
    k2 = ((lmin / lmax ** 3) * (2.0 / 3.0)) ** 2
    kst = 2.0 * 5.0 * max(k1 / 1.5 * lmax ** 1.5 / lmin, k2 / 3.0 * lmax ** 3 / lmin)
    got = gain_threshold(ref_cost, 5.0, ref_flow)
    np.testing.assert_allclose(got, [k1, k2, kst], rtol=1e-12)


def test_gain_threshold_linear_in_k(ref_cost, ref_flow):
    _, _, k1 = gain_threshold(ref_cost, 1.0, ref_flow)
    _, _, k4 = gain_threshold(ref_cost, 4.0, ref_flow)
    assert k4 == pytest.approx(4.0 * k1, rel=1e-14)


def test_gain_threshold_requires_quadratic(ref_flow):
    poly = PolynomialCost.from_terms([((2, 0), 1.0), ((0, 2), 1.0)])
    with pytest.raises(ModelError):
        gain_threshold(poly, 1.0, ref_flow)


def test_floor_spd():
    A = np.array([[1.0, 0.0], [0.0, -5.0]])
    F = floor_spd(A, rel=1e-3)
    lam = np.linalg.eigvalsh(F)
    assert lam.min() >= 1e-3 - 1e-12  # trace is negative, absolute floor applies
    spd = np.array([[4.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(floor_spd(spd, rel=1e-3), spd, rtol=1e-12)


# --- averaged system ----------------------------------------------------------


def test_averaged_rhs_equilibrium(ref_gains, ref_flow, ref_dither, ref_cost):
    s = EscState(x=[1.0, 2.0], v=[0.0, 0.0], xi=[60.0, 25.0, 30.0])
    ds = averaged_rhs(s, ref_gains, ref_flow, ref_dither, ref_cost)
    assert np.linalg.norm(ds.pack()) <= 1e-8
    # the closed loop's x-derivative is exactly zero there whenever the
    # probe vanishes (t=0)
    ds_esc = esc_rhs(0.0, s, ref_gains, ref_flow, ref_dither, ref_cost)
    np.testing.assert_array_equal(ds_esc.x, np.zeros(2))
    np.testing.assert_array_equal(ds_esc.v, np.zeros(2))


def test_averaged_rhs_node_doubling(ref_gains, ref_flow, ref_dither, ref_cost):
    s = EscState(x=[0.0, 1.0], v=[0.01, 0.01], xi=[1.0, 0.0, 1.0])
    d_a = averaged_rhs(s, ref_gains, ref_flow, ref_dither, ref_cost, num_nodes=256).pack()
    d_b = averaged_rhs(s, ref_gains, ref_flow, ref_dither, ref_cost, num_nodes=512).pack()
    assert np.linalg.norm(d_a - d_b) <= 1e-8 * np.linalg.norm(d_a)


def test_averaged_matches_target_with_frozen_estimate(ref_gains, ref_flow, ref_dither, ref_cost):
    rng = np.random.default_rng(9)
    xi_true = vec_sym(ref_cost.hstar)
    for _ in range(5):
        x = rng.uniform(-3.0, 3.0, size=2)
        v = rng.uniform(-1.0, 1.0, size=2)
        ds_avg = averaged_rhs(EscState(x=x, v=v, xi=xi_true),
                              ref_gains, ref_flow, ref_dither, ref_cost)
        ds_tgt = target_rhs(TargetState(x=x, v=v), ref_gains, ref_flow, ref_cost)
        scale = max(1.0, np.linalg.norm(ds_tgt.pack()))
        assert np.linalg.norm(np.concatenate([ds_avg.x, ds_avg.v]) - ds_tgt.pack()) <= 1e-6 * scale


def test_averaging_identities_random_frozen_states(ref_dither, ref_cost):
    # period averages of the demodulated arguments equal H v + grad and
    # xi - vec(H) for the quadratic map, across 50 random frozen states
    rng = np.random.default_rng(123)
    xi_true = vec_sym(ref_cost.hstar)
    H = ref_cost.hstar
    for _ in range(50):
        x = rng.uniform(-5.0, 5.0, size=2)
        v = rng.uniform(-2.0, 2.0, size=2)
        xi = rng.uniform(-10.0, 80.0, size=3)
        d1_avg, d2_avg = averaged_demod(ref_cost, x, ref_dither)
        lhs_v = H @ v + d1_avg
        rhs_v = H @ v + ref_cost.gradient(x)
        assert np.linalg.norm(lhs_v - rhs_v) <= 1e-8 * max(1.0, np.linalg.norm(rhs_v))
        lhs_xi = xi - d2_avg
        rhs_xi = xi - xi_true
        assert np.linalg.norm(lhs_xi - rhs_xi) <= 1e-8 * max(1.0, np.linalg.norm(rhs_xi))


# --- flat adapters -------------------------------------------------------------


def test_flat_adapters_match_reference(ref_gains, ref_flow, ref_dither, ref_cost):
    rng = np.random.default_rng(77)
    esc_flat = make_esc_rhs(ref_gains, ref_flow, ref_dither, ref_cost)
    esc_floor = make_esc_rhs(ref_gains, ref_flow, ref_dither, ref_cost, pd_floor=1e-3)
    avg_flat = make_averaged_rhs(ref_gains, ref_flow, ref_dither, ref_cost)
    tgt_flat = make_target_rhs(ref_gains, ref_flow, ref_cost)
    for _ in range(10):
        t = float(rng.uniform(0.0, 1.0))
        x = rng.uniform(-3.0, 3.0, size=2)
        v = rng.uniform(-2.0, 2.0, size=2)
        xi = rng.uniform(-5.0, 70.0, size=3)
        s = EscState(x=x, v=v, xi=xi)
        y = s.pack()
        np.testing.assert_allclose(
            esc_flat(t, y),
            esc_rhs(t, s, ref_gains, ref_flow, ref_dither, ref_cost).pack(), rtol=1e-14)
        np.testing.assert_allclose(
            esc_floor(t, y),
            esc_rhs(t, s, ref_gains, ref_flow, ref_dither, ref_cost, pd_floor=1e-3).pack(),
            rtol=1e-14)
        np.testing.assert_allclose(
            avg_flat(t, y),
            averaged_rhs(s, ref_gains, ref_flow, ref_dither, ref_cost).pack(),
            rtol=1e-13, atol=1e-13)
        st = TargetState(x=x, v=v)
        np.testing.assert_allclose(
            tgt_flat(t, st.pack()),
            target_rhs(st, ref_gains, ref_flow, ref_cost).pack(), rtol=1e-14)


def test_monitor_channels(ref_cost):
    chans = monitor_channels(ref_cost, "esc")
    y = EscState(x=[0.0, 1.0], v=[1.0, 0.0], xi=[60.0, 25.0, 30.0]).pack()
    assert chans["y"](0.0, y) == pytest.approx(71.0, rel=1e-14)
    assert chans["V1"](0.0, y) == pytest.approx(5887.5, rel=1e-14)
    assert chans["V3"](0.0, y) == chans["V1"](0.0, y)
    assert chans["V2"](0.0, y) == pytest.approx(0.0, abs=1e-15)
    assert chans["err_x"](0.0, y) == pytest.approx(math.sqrt(2.0), rel=1e-14)
    assert chans["err_xi"](0.0, y) == 0.0

    tchans = monitor_channels(ref_cost, "target")
    yt = TargetState(x=[0.0, 1.0], v=[1.0, 0.0]).pack()
    assert tchans["V1"](0.0, yt) == pytest.approx(5887.5, rel=1e-14)
    assert math.isnan(tchans["V2"](0.0, yt))
    assert math.isnan(tchans["V3"](0.0, yt))
    assert math.isnan(tchans["err_xi"](0.0, yt))


# --- decay invariants along the ideal flow -------------------------------------


@pytest.fixture(scope="module")
def fine_target_run():
    cost = QuadraticCost(hstar=[[60.0, 25.0], [25.0, 30.0]], xstar=[1.0, 2.0], ystar=1.0)
    flow = FlowParams.from_q(3.0, 1.5, 1.0, 1e-4)
    _, _, kstar = gain_threshold(cost, 5.0, flow)
    gains = GainSet(k=5.0, K=1.2 * kstar, K2=100.0)
    rhs = make_target_rhs(gains, flow, cost)
    chans = monitor_channels(cost, "target")
    cfg = sim.SimConfig(t_end=0.7, dt=1e-5, record_stride=10)
    tr = sim.integrate(rhs, np.array([0.0, 1.0, 0.01, 0.01]), cfg, channels=chans, n=2)
    return tr, flow


def test_v1_decays_below_threshold(fine_target_run):
    tr, _ = fine_target_run
    V1 = tr.channels["V1"]
    increases = np.diff(V1) - 1e-9 * np.maximum(V1[:-1], 1.0)
    assert not np.any(increases > 0.0)
    assert V1.min() < 1e-10


def test_v1_finite_time_power_law(fine_target_run):
    # settling-time bound from the worst observed decay rate of
    # dV1/dt <= -2^((2-a1)/2) * k7 * V1^((2-a1)/2)
    tr, flow = fine_target_run
    V1 = tr.channels["V1"]
    t = tr.times
    beta = (2.0 - flow.alpha1) / 2.0
    rate = -np.diff(V1) / np.diff(t)
    mask = V1[:-1] >= 1e-8          # fit above the discrete stagnation region
    k7 = np.min(rate[mask] / (2.0 ** beta * V1[:-1][mask] ** beta))
    assert k7 > 0.0
    bound = V1[0] ** (flow.alpha1 / 2.0) / (2.0 ** beta * k7 * (flow.alpha1 / 2.0))
    t_hit = t[np.argmax(V1 < 1e-10)]
    assert V1.min() < 1e-10 and t_hit <= bound
