import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridmtd.attack import orthogonal_defender
from gridmtd.estimation import MeasurementModel, build_measurement_matrix, residual
from gridmtd.evaluation import (
    DetectionSimulator,
    EvalConfig,
    attack_matrix,
    daily_simulation,
    effectiveness,
    effectiveness_from_pd,
    eta_key,
    false_positive_rate,
    gamma_sweep,
    random_perturbation_baseline,
    random_plans,
    static_scenario,
    stream,
    wilson_half_width,
)
from gridmtd.grid import LoadTrace
from gridmtd.opf import baseline_opf

SMALL = EvalConfig(n_attacks=60, n_noise=400, n_calibration=20_000, n_starts=2,
                   gammas=(0.0, 0.2, 0.3), seed=7)


@pytest.fixture(scope="module")
def scenario(case14):
    return static_scenario(case14, SMALL)


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(alpha=0.0)
    with pytest.raises(ValueError):
        EvalConfig(gammas=())
    with pytest.raises(ValueError):
        EvalConfig(n_calibration=100)
    with pytest.raises(ValueError):
        EvalConfig(deltas=(1.5,))
    assert EvalConfig().digest() == EvalConfig().digest() != EvalConfig(seed=1).digest()
    assert len(EvalConfig().gammas) == 10


def test_wilson_half_width():
    assert wilson_half_width(0, 1000) > 0
    assert wilson_half_width(500, 1000) == pytest.approx(1.96 * np.sqrt(0.25 / 1000), rel=0.01)


def test_fast_residual_path_matches_generic(scenario):
    cfg = SMALL
    sim = DetectionSimulator(cfg)
    H = scenario.H_attacker
    x = scenario.baseline.x.copy()
    x[scenario.grid.dfacts_index] *= 1.05
    model = sim.model(build_measurement_matrix(scenario.grid, x))
    attacks = attack_matrix(H, scenario.z_ref, cfg)[:10]
    pd = sim.detection_probabilities(model, attacks)
    for k, a in enumerate(attacks):
        noise = stream(cfg.seed, 2, k).standard_normal((cfg.n_noise, model.n_meas)) * model.noise_sigma
        r = residual(model, noise + a)
        assert pd[k] == pytest.approx(np.mean(r >= model.tau), abs=2.0 / cfg.n_noise)


def test_calibrated_threshold_controls_false_positives(case14):
    cfg = EvalConfig(n_calibration=100_000)
    model = DetectionSimulator(cfg).model(build_measurement_matrix(case14))
    fp = false_positive_rate(model, cfg)
    assert 2.5e-4 <= fp.value <= 1e-3


def test_aligned_defender_is_ineffective(scenario):
    for H_def in (scenario.H_attacker, 1.5 * scenario.H_attacker):
        model = DetectionSimulator(SMALL).model(H_def)
        est = effectiveness(model, scenario.H_attacker, SMALL, 0.5, z_ref=scenario.z_ref)
        assert est.value == 0.0 and est.n == SMALL.n_attacks


def test_orthogonal_defender_is_fully_effective(scenario):
    H_def = orthogonal_defender(scenario.H_attacker, rng=0)
    model = DetectionSimulator(SMALL).model(H_def)
    est = effectiveness(model, scenario.H_attacker, SMALL, SMALL.alpha, z_ref=scenario.z_ref)
    assert est.value == 1.0


def test_effectiveness_requires_reference_and_calibration(scenario):
    model = MeasurementModel(scenario.H_attacker, 0.1)
    with pytest.raises(RuntimeError):
        effectiveness(model, scenario.H_attacker, SMALL, 0.5, z_ref=scenario.z_ref)
    calibrated = DetectionSimulator(SMALL).model(scenario.H_attacker)
    with pytest.raises(ValueError):
        effectiveness(calibrated, scenario.H_attacker, SMALL, 0.5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1), st.floats(0, 1))
def test_effectiveness_nonincreasing_in_delta(pd, d1, d2):
    lo, hi = sorted((d1, d2))
    pd = np.array(pd)
    a, b = effectiveness_from_pd(pd, lo), effectiveness_from_pd(pd, hi)
    assert 0 <= b.value <= a.value <= 1


@pytest.fixture(scope="module")
def sweep(scenario):
    return gamma_sweep(scenario.grid, scenario.load, scenario.H_attacker, SMALL,
                       scenario.baseline, scenario.z_ref)


def test_sweep_rows(sweep):
    assert [r["gamma_th"] for r in sweep.rows] == [0.0, 0.2, 0.3]
    assert all(r["feasible"] for r in sweep.rows)
    c = sweep.column("c_mtd")
    # warm starts make cost nondecreasing up to the restart tie tolerance
    assert np.all(np.diff(c) >= -1e-6)
    assert c[0] == pytest.approx(0.0, abs=1e-5)
    assert sweep.rows[0][eta_key(0.5)] <= 0.05
    for r in sweep.rows:
        etas = [r[eta_key(d)] for d in SMALL.deltas]
        assert etas == sorted(etas, reverse=True)
        assert r["gamma_achieved"] >= r["gamma_th"] - 1e-6


def test_sweep_is_deterministic(tmp_path, sweep, scenario):
    again = gamma_sweep(scenario.grid, scenario.load, scenario.H_attacker, SMALL,
                        scenario.baseline, scenario.z_ref)
    sweep.to_csv(tmp_path / "a.csv")
    again.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    sweep.to_json(tmp_path / "a.json")
    again.to_json(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_infeasible_gamma_is_reported_blank(tmp_path, scenario):
    cfg = SMALL.replace(gammas=(0.0, 1.0), n_attacks=10)
    rep = gamma_sweep(scenario.grid, scenario.load, scenario.H_attacker, cfg,
                      scenario.baseline, scenario.z_ref)
    assert [r["feasible"] for r in rep.rows] == [True, False]
    rep.to_csv(tmp_path / "s.csv")
    last = (tmp_path / "s.csv").read_text().splitlines()[-1].split(",")
    assert last[0] == "1.0" and last[1] == "0" and last[3] == ""


def test_random_plans_respect_bounds(case14, scenario):
    x0 = scenario.baseline.x
    plans = random_plans(case14, x0, 50, 0.02, seed=1)
    others = np.setdiff1d(np.arange(case14.n_branch), case14.dfacts_index)
    for x in plans:
        assert np.all(np.abs(x / x0 - 1) <= 0.02 + 1e-12)
        assert np.all(x >= case14.x_min - 1e-12) and np.all(x <= case14.x_max + 1e-12)
        np.testing.assert_array_equal(x[others], x0[others])
    assert all(np.array_equal(x, x0) for x in random_plans(case14, x0, 5, 0.0, seed=1))


def test_random_baseline_zero_bound(scenario):
    rep = random_perturbation_baseline(scenario.grid, scenario.load, scenario.H_attacker,
                                       SMALL.replace(n_attacks=20), n_plans=3, bound=0.0,
                                       baseline=scenario.baseline, z_ref=scenario.z_ref)
    assert len(rep.rows) == 3
    assert all(r["gamma"] < 1e-7 and r[eta_key(0.5)] == 0.0 for r in rep.rows)
    frac = [s["fraction_meeting"] for s in rep.metadata["summary"]]
    assert frac == [0.0] * len(SMALL.deltas)
    with pytest.raises(ValueError):
        random_perturbation_baseline(scenario.grid, scenario.load, scenario.H_attacker, SMALL, n_plans=0)


def test_daily_constant_trace(case14):
    cfg = SMALL.replace(n_attacks=40, n_noise=300)
    trace = LoadTrace.constant(259.0, hours=3)
    rep = daily_simulation(case14, trace, cfg, target_eta=0.5)
    assert len(rep.rows) == 2
    assert all(r["feasible"] for r in rep.rows)
    assert rep.rows[0]["c_mtd"] == rep.rows[1]["c_mtd"]
    assert rep.rows[0]["gamma_th"] == rep.rows[1]["gamma_th"]
    for r in rep.rows:
        assert r["gamma_t_tprime"] < 1e-9
        assert r["eta"] >= 0.5


def test_daily_argument_checks(case14):
    with pytest.raises(ValueError):
        daily_simulation(case14, LoadTrace.constant(259.0, hours=1), SMALL)
    with pytest.raises(ValueError):
        daily_simulation(case14, LoadTrace.constant(259.0, hours=2), SMALL, attacker_model="oracle")
