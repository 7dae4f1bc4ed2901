import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import freqz
from sklearn.base import clone

from frictobs.friction import FrictionParams, PreslidingState, advance_presliding, presliding_stiffness
from frictobs.observer import (
    DivergenceDetector,
    FrictionObserver,
    ObserverFault,
    ObserverGains,
    ObserverRunner,
    ObserverState,
    SecondOrderLowPass,
    a0_rate,
    a0_trajectory,
    check_stability,
    design_gains,
    dominant_pole,
    eigen_sweep,
    eigenvalues,
    ignatyev_margins,
    lowpass_coefficients,
    noise_gain,
    observer_eigenvalues,
    observer_step,
    plant_blocks,
)

FP = FrictionParams()
STATIC = FrictionParams(viscous_lag=0.0)
M = 0.538
ROOT = math.sqrt(8000.0 / M)


def quiet_gains(fp, rho):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return design_gains(fp, M, rho)


def error_matrix(fp, gains, k):
    b = plant_blocks(M, fp, k)
    (p11, p12), (p21, p22) = b.a22
    return np.array([[p11 - gains.L1, p12], [p21 - gains.L2, p22]])


def test_designed_gains_values():
    g = design_gains(FP, M, 1.02)
    assert g.L1 == pytest.approx(2 * 1.02 * ROOT, rel=1e-12)
    assert g.L1 == pytest.approx(248.76, abs=5e-3)
    assert g.L2 == pytest.approx(20776.8, rel=1e-9)


def test_unit_rho_sits_on_the_boundary():
    with pytest.warns(RuntimeWarning):
        g = design_gains(FP, M, 1.0)
    assert g.L2 == 21100.0
    assert check_stability(g, FP).prop1_ok == (True, False)


def test_rho_below_one_warns_and_fails():
    with pytest.warns(RuntimeWarning):
        g = design_gains(FP, M, 0.98)
    assert g.L2 == pytest.approx(21416.8, rel=1e-9)
    assert check_stability(g, FP).prop1_ok == (True, False)


def test_stability_conditions_static_examples():
    assert check_stability(ObserverGains(248.76, 20776.8), FP).prop1_ok == (True, True)
    assert check_stability(ObserverGains(0.0, 20776.8), FP).prop1_ok[0] is False


@pytest.mark.parametrize("kwargs", [{"mass": 0.0}, {"rho": -1.0}])
def test_design_rejects_bad_parameters(kwargs):
    args = {"fp": FP, "mass": M, "rho": 1.02, **kwargs}
    with pytest.raises(ValueError):
        design_gains(**args)


def test_eigenvalues_examples():
    g = design_gains(FP, M, 1.02)
    l1, l2 = observer_eigenvalues(g, FP, M, 8000.0)
    assert l1 == pytest.approx(l2) == pytest.approx(-1.02 * ROOT)
    assert l1.real == pytest.approx(-124.38, abs=5e-3)
    lo, hi = observer_eigenvalues(g, FP, M, 0.0)
    assert lo.real == pytest.approx(-246.32, abs=5e-3)
    assert hi.real == pytest.approx(-2.4388, abs=5e-5)


@given(rho=st.floats(0.5, 6.0), k=st.floats(0.0, 8000.0), static=st.booleans())
def test_eigenvalues_match_numeric_oracle(rho, k, static):
    fp = STATIC if static else FP
    g = quiet_gains(fp, rho)
    got = sorted(observer_eigenvalues(g, fp, M, k), key=lambda z: (z.real, z.imag))
    ref = sorted(np.linalg.eigvals(error_matrix(fp, g, k)), key=lambda z: (z.real, z.imag))
    scale = max(1.0, abs(ref[0]))
    for a, b in zip(got, ref):
        assert abs(a - b) <= 1e-6 * scale


@given(rho=st.floats(1.0 + 1e-6, 10.0), static=st.booleans())
def test_designed_eigenvalues_real_negative_over_stiffness_range(rho, static):
    fp = STATIC if static else FP
    g = design_gains(fp, M, rho)
    ks, lam = eigen_sweep(g, fp, M, n=1000)
    assert np.all(lam.imag == 0.0)
    assert np.all(lam.real < 0.0)
    # closed form -rho sqrt(kappa/m) +- sqrt((kappa - k)/m); the square root
    # amplifies roundoff next to the double pole, hence the absolute term
    np.testing.assert_allclose(lam[:, 0].real, -rho * ROOT - np.sqrt((8000.0 - ks) / M),
                               rtol=1e-9, atol=1e-4)


@given(rho=st.floats(1.0 + 1e-6, 10.0))
def test_dominant_pole_identity(rho):
    g = design_gains(FP, M, rho)
    top = max(z.real for z in observer_eigenvalues(g, FP, M, 0.0))
    assert top == pytest.approx(dominant_pole(FP, M, rho), rel=1e-9, abs=1e-9)


@given(rho=st.floats(0.1, 10.0).filter(lambda r: abs(r - 1.0) > 1e-9), static=st.booleans())
def test_design_consistent_with_gain_conditions(rho, static):
    fp = STATIC if static else FP
    rep = check_stability(quiet_gains(fp, rho), fp, M)
    assert rep.stable == (rho > 1.0)
    if rho < 1.0:
        assert rep.prop1_ok[1] is False


def test_static_variant_gains():
    g = design_gains(STATIC, M, 1.02)
    assert g.L1 == pytest.approx(2 * 1.02 * ROOT - 21.1 / M)
    assert g.L2 == pytest.approx(8000.0 * (1 - 1.02 ** 2))


def test_noise_gain():
    assert noise_gain(8000.0, 1.02) == pytest.approx(323.2)
    assert noise_gain(8000.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        noise_gain(8000.0, 0.99)


def test_margins_at_gross_sliding():
    g = design_gains(FP, M, 1.02)
    a0 = a0_trajectory(g, FP, M, np.zeros(100))
    bound, margin = ignatyev_margins(a0, g.L1, dt=1e-4)
    assert margin == pytest.approx(2 * g.L1 / M * (21100.0 - g.L2), rel=1e-12)
    assert margin > 0.0
    # a constant a1 contributes exactly L1 when a0 does not move
    assert bound == pytest.approx(g.L1)
    bad = quiet_gains(FP, 0.98)
    _, margin = ignatyev_margins(a0_trajectory(bad, FP, M, np.zeros(10)), bad.L1)
    assert margin < 0.0
    with pytest.raises(ValueError):
        ignatyev_margins([], 1.0)


def test_analytic_a0_rate_matches_finite_difference():
    g = design_gains(FP, M, 1.02)
    dt, v = 1e-6, 0.001
    ps = PreslidingState()
    ks, rates = [], []
    for _ in range(300):
        ps = advance_presliding(FP, ps, v, dt)
        ks.append(presliding_stiffness(FP, ps))
        rates.append(a0_rate(FP, M, ps, v))
    a0 = a0_trajectory(g, FP, M, ks)
    fd = np.gradient(a0, dt)
    inside = np.array([k < FP.stiffness_clamp for k in ks])
    # central differences next to the clamp boundary mix both regimes
    inside = inside & np.roll(inside, 1) & np.roll(inside, -1)
    inside[:2] = inside[-1] = False
    assert inside.sum() > 50
    np.testing.assert_allclose(np.array(rates)[inside], fd[inside], rtol=2e-2)
    # the stiffness relaxes along a branch, so the rate is negative
    assert np.all(np.array(rates)[inside] < 0.0)


def test_observer_equilibrium_and_back_transformation():
    g = design_gains(FP, M, 1.02)
    b = plant_blocks(M, FP, 0.0)
    obs = observer_step(b, g, ObserverState(), 0.0, 0.0, 1e-4)
    assert obs == ObserverState()
    for wbar in (1e-3, -2e-4, 5e-5):
        obs = observer_step(b, g, obs, 0.3, wbar, 1e-4)
        assert obs.w2 == obs.y1 + g.L1 * wbar
        assert obs.w3 == obs.y2 + g.L2 * wbar


def test_zoh_step_matches_fine_integration():
    g = design_gains(FP, M, 1.02)
    b = plant_blocks(M, FP, 3000.0)
    start = ObserverState(0.01, 0.5)
    u, wbar, dt = 0.7, 2e-4, 1e-3
    zoh = observer_step(b, g, start, u, wbar, dt, method="zoh")
    fine = start
    for _ in range(10_000):
        fine = observer_step(b, g, fine, u, wbar, dt / 10_000, method="euler")
    assert zoh.y1 == pytest.approx(fine.y1, rel=1e-4, abs=1e-9)
    assert zoh.y2 == pytest.approx(fine.y2, rel=1e-4, abs=1e-9)
    with pytest.raises(ValueError):
        observer_step(b, g, start, u, wbar, dt, method="rk4")


def test_non_finite_estimate_raises():
    g = design_gains(FP, M, 1.02)
    with pytest.raises(ObserverFault) as exc:
        observer_step(plant_blocks(M, FP, 0.0), g, ObserverState(), math.inf, 0.0, 1e-4, step=5)
    assert exc.value.step == 5


def test_lowpass_dc_gain_and_corner():
    dt, wc = 1e-4, 2 * math.pi * 40
    b0, b1, b2, a1, a2 = lowpass_coefficients(wc, dt)
    assert (b0 + b1 + b2) / (1 + a1 + a2) == pytest.approx(1.0, abs=1e-12)
    _, h = freqz([b0, b1, b2], [1.0, a1, a2], worN=[wc * dt])
    assert abs(h[0]) == pytest.approx(0.5, abs=2e-3)
    lp = SecondOrderLowPass(wc, dt)
    y = lp.filter(np.full(20_000, 3.0))
    assert y[-1] == pytest.approx(3.0, abs=1e-9)


def test_lowpass_initialised_at_rest_holds_value():
    lp = SecondOrderLowPass(100.0, 1e-4, initial=2.5)
    np.testing.assert_allclose(lp.filter(np.full(50, 2.5)), 2.5, rtol=0, atol=1e-12)


def test_divergence_detector_hold_logic():
    det = DivergenceDetector(1e-3, hold=0.01)
    for i in range(5):
        assert not det.update(i, 0.01, 1.0, 1.0, 0.0)
    for i in range(5, 9):
        det.update(i, 0.01, 1.0, 0.0, 0.0)  # back in bounds resets the count
    for i in range(9, 19):
        det.update(i, 0.01, 1.0, 0.0, 50.0)
    assert det.diverged
    assert det.onset == pytest.approx(9e-3)


def test_runner_static_variant_total_friction():
    g = design_gains(STATIC, M, 4.0)
    runner = ObserverRunner(STATIC, M, g, 1e-4)
    assert runner.total_friction(0.01, 0.35) == pytest.approx(0.35 + 0.211)
    runner_lag = ObserverRunner(FP, M, design_gains(FP, M, 1.02), 1e-4)
    assert runner_lag.total_friction(0.01, 0.5) == 0.5


def test_runner_tracks_state_space_plant_without_noise():
    from frictobs.plant import PlantParams, initial_state, plant_step

    pp = PlantParams()
    st_ = initial_state(0.0, 0.01, FP)
    runner = ObserverRunner(FP, M, design_gains(FP, M, 1.02), 1e-4)
    errs = []
    # u = w3 keeps v constant while w3 ramps at (k + sigma/beta) v
    for i in range(100_000):
        w2, w3, _, _ = runner.step(st_.w3, st_.x)
        errs.append(abs(w3 - st_.w3))
        st_ = plant_step(pp, FP, st_, st_.w3, 1e-4, "state_space")
    assert errs[-1] < 1e-3 * max(errs)


def test_friction_observer_estimator_api():
    est = FrictionObserver(rho=1.02)
    assert set(est.get_params()) >= {"rho", "cutoff_hz", "replica_cutoff_hz", "method"}
    with pytest.raises(Exception):
        est.transform(np.zeros((3, 2)))
    est.fit()
    assert est.stability_.stable
    out = est.transform(np.zeros((10, 2)))
    assert out.shape == (10, 4)
    np.testing.assert_array_equal(out, 0.0)
    with pytest.raises(ValueError):
        est.transform(np.zeros((4, 3)))
    with pytest.warns(RuntimeWarning):
        clone(est).set_params(rho=0.98).fit()
    with pytest.raises(ValueError):
        clone(est).set_params(method="rk4").fit()


def test_zoh_and_euler_agree_on_smooth_input():
    t = np.arange(5000) * 1e-4
    x = 1e-4 * np.sin(2 * math.pi * t)
    X = np.column_stack([np.zeros_like(t), x])
    e = FrictionObserver(method="euler").fit().transform(X)
    z = FrictionObserver(method="zoh").fit().transform(X)
    assert np.max(np.abs(e[:, 0] - z[:, 0])) < 0.05 * np.max(np.abs(e[:, 0])) + 1e-9


def test_runner_estimate_uses_current_measurement_only():
    g = design_gains(FP, M, 1.02)
    a, b = ObserverRunner(FP, M, g, 1e-4), ObserverRunner(FP, M, g, 1e-4)
    for i in range(50):
        a.step(0.1, 1e-6 * i)
        b.step(0.1, 1e-6 * i)
    # the estimate at a sample does not depend on the input applied at that sample
    assert a.estimate(5e-5) == b.estimate(5e-5)
    a.advance(1.0, 5e-5)
    b.advance(-1.0, 5e-5)
    assert a.estimate(5.1e-5) != b.estimate(5.1e-5)
    assert a.obs.w3 == a.obs.y2 + g.L2 * 5.1e-5
