import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, stats
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gridmtd.attack import orthogonal_defender
from gridmtd.estimation import (
    BadDataDetector,
    MeasurementModel,
    NotCalibratedError,
    WLSStateEstimator,
    build_measurement_matrix,
    calibrate,
    calibrate_threshold,
    detection_probability,
    detection_probability_chi2,
    full_measurement_matrix,
    noise_residuals,
    residual,
    simulate_measurements,
    wls_estimate,
)
from gridmtd.grid import parse_case


def test_two_bus_matrix_by_hand(two_bus_text):
    g = parse_case(two_bus_text)
    H = build_measurement_matrix(g)
    # flow 1->2, reverse flow, injections at bus 1 and 2; slack column removed
    np.testing.assert_allclose(H, [[-2.0], [2.0], [-2.0], [2.0]])
    assert np.linalg.matrix_rank(H) == 1


def test_case14_shape_rank_and_block_structure(case14):
    H = build_measurement_matrix(case14)
    L, N = case14.n_branch, case14.n_bus
    assert H.shape == (2 * L + N, N - 1)
    assert np.linalg.matrix_rank(H) == N - 1
    np.testing.assert_allclose(H[:L], -H[L:2 * L])
    full = full_measurement_matrix(case14)
    np.testing.assert_allclose(full[:, case14.non_ref], H)
    np.testing.assert_allclose(full.sum(axis=1), 0, atol=1e-9)


def test_model_layout(case14):
    m = MeasurementModel.from_grid(case14)
    assert [n for _, n in m.layout] == [20, 20, 14]
    assert m.rank == 13


def test_simulated_measurement_statistics(case14, rng):
    m = MeasurementModel.from_grid(case14, noise_sigma=0.5)
    theta = rng.standard_normal(m.n_state) * 0.05
    Z = simulate_measurements(m, theta, rng, size=10_000)
    clean = m.H @ theta
    assert np.all(np.abs(Z.mean(axis=0) - clean) < 4 * 0.5 / 100)
    np.testing.assert_allclose(Z.var(axis=0), 0.25, rtol=0.1)
    exact = MeasurementModel(m.H, 0.0)
    np.testing.assert_array_equal(simulate_measurements(exact, theta, rng), clean)


def test_wls_matches_dense_inverse_oracle(case14, rng):
    sigma = rng.uniform(0.05, 0.3, size=54)
    m = MeasurementModel(build_measurement_matrix(case14), sigma)
    z = simulate_measurements(m, rng.standard_normal(13) * 0.1, rng)
    W = np.diag(1 / sigma**2)
    H = m.H
    oracle = np.linalg.inv(H.T @ W @ H) @ H.T @ W @ z
    np.testing.assert_allclose(wls_estimate(m, z), oracle, rtol=1e-8, atol=1e-10)


def test_wls_exact_recovery_and_orthogonal_noise(case14, rng):
    m = MeasurementModel.from_grid(case14)
    theta = rng.standard_normal(13) * 0.1
    z = m.H @ theta
    np.testing.assert_allclose(wls_estimate(m, z), theta, atol=1e-10)
    v = m.residual_operator @ rng.standard_normal(54)
    np.testing.assert_allclose(wls_estimate(m, z + v), theta, atol=1e-9)
    assert residual(m, z) == pytest.approx(0.0, abs=1e-8)


def test_residual_matches_direct_minimisation(rng):
    H = rng.standard_normal((8, 3))
    w = rng.uniform(0.5, 2.0, size=8)
    m = MeasurementModel(H, 1 / np.sqrt(w))
    z = rng.standard_normal(8)
    best = optimize.minimize(lambda t: np.sum(w * (z - H @ t) ** 2), np.zeros(3), tol=1e-12)
    assert residual(m, z) == pytest.approx(np.sqrt(best.fun), rel=1e-5)


def test_residual_of_complement_attack_is_full_norm(case14, rng):
    H = build_measurement_matrix(case14)
    Hp = orthogonal_defender(H, rng=rng)
    m = MeasurementModel(H, 0.0)
    a = Hp @ rng.standard_normal(Hp.shape[1])
    z = H @ rng.standard_normal(13) + a
    assert residual(m, z) == pytest.approx(np.linalg.norm(a), rel=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_residual_is_state_invariant(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((10, 4))
    m = MeasurementModel(H, rng.uniform(0.1, 1.0, size=10))
    z = rng.standard_normal(10)
    shift = H @ rng.standard_normal(4) * 10
    assert residual(m, z + shift) == pytest.approx(residual(m, z), rel=1e-7, abs=1e-9)


def test_calibration_median_and_chi_distribution(case14):
    m = MeasurementModel.from_grid(case14)
    tau = calibrate_threshold(m, 0.5, 20_000, rng=1)
    r = noise_residuals(m, 20_000, rng=2)
    assert tau == pytest.approx(np.median(r), rel=0.02)
    # squared whitened residual is chi-square with M - rank degrees of freedom
    assert stats.kstest(r**2, stats.chi2(41).cdf).pvalue > 1e-3


def test_false_positive_rate_in_binomial_band(case14):
    m = calibrate(MeasurementModel.from_grid(case14), 5e-4, 100_000, rng=11)
    r = noise_residuals(m, 100_000, rng=12)
    fp = np.mean(r >= m.tau)
    assert 2.5e-4 <= fp <= 1e-3


def test_calibration_guards(case14):
    m = MeasurementModel.from_grid(case14)
    with pytest.raises(ValueError):
        calibrate_threshold(m, 5e-4, 1000)
    with pytest.raises(ValueError):
        calibrate_threshold(m, 1.5, 1000)
    with pytest.raises(ValueError):
        calibrate_threshold(MeasurementModel(m.H, 0.0), 0.1, 1000)
    with pytest.raises(NotCalibratedError):
        detection_probability(m, np.zeros(54))
    with pytest.raises(ValueError):
        detection_probability(calibrate(m, 0.1, 1000, 0), np.zeros(54), n_trials=10)


def test_detection_probability_cases(case14, rng):
    m = calibrate(MeasurementModel.from_grid(case14), 0.01, 50_000, rng=3)
    # zero attack and in-span attack sit at the false-positive rate
    for a in (np.zeros(54), m.H @ rng.standard_normal(13)):
        pd = detection_probability(m, a, 20_000, rng=4)
        assert abs(pd - 0.01) < 4 * np.sqrt(0.01 * 0.99 / 20_000)
    # same-norm attack in the complement is detected more often
    inside = m.H @ rng.standard_normal(13)
    outside = orthogonal_defender(m.H, 1, rng)[:, 0]
    outside *= np.linalg.norm(inside) / np.linalg.norm(outside) * 0.005
    inside *= 0.005
    p_out = detection_probability(m, outside, 5000, rng=5)
    p_in = detection_probability(m, inside, 5000, rng=5)
    assert p_out >= p_in


def test_chi_square_cross_check(case14, rng):
    m = calibrate(MeasurementModel.from_grid(case14), 5e-4, 100_000, rng=6)
    direction = orthogonal_defender(m.H, 1, rng)[:, 0]
    for scale in (0.3, 0.8, 1.2):
        a = direction / np.linalg.norm(direction) * scale
        mc = detection_probability(m, a, 20_000, rng=7)
        exact = detection_probability_chi2(m, a)
        assert abs(mc - exact) < 4 * np.sqrt(exact * (1 - exact) / 20_000) + 1e-3


def test_wls_estimator_sklearn_contract(case14, rng):
    H = build_measurement_matrix(case14)
    est = WLSStateEstimator(H=H, noise_sigma=0.1)
    assert clone(est).get_params()["noise_sigma"] == 0.1
    with pytest.raises(NotFittedError):
        est.transform(np.zeros((1, 54)))
    Theta = rng.standard_normal((5, 13)) * 0.1
    Z = est.fit().inverse_transform(Theta)
    np.testing.assert_allclose(est.transform(Z), Theta, atol=1e-10)
    np.testing.assert_allclose(est.residuals(Z), 0, atol=1e-7)
    with pytest.raises(ValueError):
        est.transform(np.zeros((2, 5)))


def test_bad_data_detector(case14, rng):
    H = build_measurement_matrix(case14)
    bdd = BadDataDetector(H=H, noise_sigma=0.1, alpha=0.01, n_trials=20_000, random_state=0).fit()
    assert bdd.tau_ > 0
    params = bdd.get_params()
    assert params["alpha"] == 0.01 and params["random_state"] == 0
    clean = simulate_measurements(bdd.model_, np.zeros(13), rng, size=5000)
    flags = bdd.predict(clean)
    assert set(np.unique(flags)) <= {-1, 1}
    assert np.mean(flags == -1) < 0.03
    attacked = clean + orthogonal_defender(H, 1, rng)[:, 0] * 100
    assert np.all(bdd.predict(attacked) == -1)
    np.testing.assert_allclose(bdd.decision_function(clean), bdd.tau_ - bdd.score_samples(clean))
    # fitting on supplied clean rows gives a similar threshold
    rows = simulate_measurements(bdd.model_, rng.standard_normal(13), rng, size=20_000)
    tau_rows = BadDataDetector(H=H, noise_sigma=0.1, alpha=0.01).fit(rows).tau_
    assert tau_rows == pytest.approx(bdd.tau_, rel=0.05)
    with pytest.raises(ValueError):
        BadDataDetector(H=H, alpha=0.01).fit(rows[:10])
