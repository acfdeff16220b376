import math

import numpy as np
import pytest
from scipy import integrate

from ich_estimands import SimConfig, oracle_mu, run_calibration, simulate
from ich_estimands.estimands import ALL_STRATEGIES
from ich_estimands.simulation import (
    default_checkpoints,
    oracle_tau,
    random_bits,
    replication_seed,
    uniforms,
    worker_count,
)

CFG = SimConfig()


def test_oracle_at_zero_and_simple_values():
    for s in ALL_STRATEGIES:
        for w in (0, 1):
            assert oracle_mu(s, w, 0.0, CFG) == pytest.approx(0.0, abs=1e-15)
    cfg = SimConfig(a1=0.5, a0=0.5)
    assert oracle_mu("tp", 1, 1.0, cfg) == pytest.approx(1 - math.exp(-0.25), abs=1e-12)
    assert oracle_mu("tp", 1, 1.0, cfg) == pytest.approx(0.221199, abs=1e-6)


@pytest.mark.parametrize("a,c", [(0.4, 0.3), (0.8, 0.15), (2.0, 0.01), (0.05, 3.0), (1.0, 0.0)])
def test_wo_oracle_matches_quadrature(a, c):
    cfg = SimConfig(a1=a, c1=c)
    for t in (0.1, 0.7, 1.3, 2.0, 5.0):
        ref, _ = integrate.quad(lambda s: math.exp(-a * s * s / 2 - c * s) * a * s, 0, t, epsabs=1e-13)
        assert oracle_mu("wo", 1, t, cfg) == pytest.approx(ref, abs=1e-8)


def test_oracle_relations():
    grid = np.linspace(0, CFG.t_star, 1000)
    for w in (0, 1):
        wo = oracle_mu("wo", w, grid, CFG)
        assert (oracle_mu("ps", w, grid, CFG) >= wo).all()
        assert (wo <= oracle_mu("cv", w, grid, CFG)).all()
        for s in ALL_STRATEGIES:
            assert (np.diff(oracle_mu(s, w, grid, CFG)) >= 0).all()
    np.testing.assert_array_equal(oracle_mu("hp1", 0, grid, CFG), oracle_mu("wo", 0, grid, CFG))
    np.testing.assert_array_equal(oracle_mu("hp2", 1, grid, CFG), oracle_mu("tp", 1, grid, CFG))
    no_ice = SimConfig(c1=0.0, c0=0.0)
    for s in ALL_STRATEGIES:
        np.testing.assert_allclose(
            oracle_mu(s, 1, grid, no_ice), oracle_mu("tp", 1, grid, no_ice), atol=1e-12
        )
    assert oracle_tau("cv", 1.0, CFG) == pytest.approx(
        oracle_mu("cv", 1, 1.0, CFG) - oracle_mu("cv", 0, 1.0, CFG)
    )


def test_ps_oracle_denominator():
    # denominator is one minus the intercurrent incidence by t*
    t = CFG.t_star
    for w in (0, 1):
        a, c = CFG.a(w), CFG.c(w)
        ice, _ = integrate.quad(lambda s: math.exp(-a * s * s / 2 - c * s) * c, 0, t)
        expected = oracle_mu("wo", w, 1.0, CFG) / (1 - ice)
        assert oracle_mu("ps", w, 1.0, CFG) == pytest.approx(expected, abs=1e-10)


def test_checkpoints_inside_window():
    cp = default_checkpoints(CFG)
    assert cp.shape == (3,)
    assert (np.diff(cp) > 0).all() and 0 < cp[0] and cp[-1] < CFG.t_star


def test_uniform_stream():
    u = uniforms(3, np.arange(100_000, dtype=np.uint64))
    assert (u > 0).all() and (u <= 1).all()
    assert abs(u.mean() - 0.5) < 3 * math.sqrt(1 / 12 / u.size)
    assert np.array_equal(random_bits(3, [5, 6]), random_bits(3, [5, 6]))
    assert not np.array_equal(random_bits(3, [5]), random_bits(4, [5]))
    assert replication_seed(1, 0) != replication_seed(1, 1)


def test_simulation_is_deterministic_and_prefix_stable():
    a = simulate(SimConfig(n_per_arm=50, seed=7))
    b = simulate(SimConfig(n_per_arm=50, seed=7))
    assert a.records == b.records
    big = simulate(SimConfig(n_per_arm=80, seed=7))
    for w in (0, 1):
        small_rows = [r for r in a.records if r.arm == w]
        big_rows = [r for r in big.records if r.arm == w][:50]
        assert small_rows == big_rows
    assert simulate(SimConfig(n_per_arm=50, seed=8)).records != a.records
    assert a.ids[0] == "0-1" and a.ids[50] == "1-1"


def test_no_intercurrent_no_censoring():
    ds = simulate(SimConfig(c1=0.0, c0=0.0, censor_rate=0.0, n_per_arm=200))
    assert (ds.delta_r == 0).all()
    assert (ds.r_obs == ds.t_star).all()
    assert (ds.t_obs <= ds.t_star).all()


def test_weibull_mean():
    cfg = SimConfig(a1=2.0, censor_rate=0.0, c1=0.0, t_star=50.0, n_per_arm=10_000, seed=3)
    ds = simulate(cfg)
    t = ds.t_obs[ds.arm == 1]
    assert (ds.delta_t[ds.arm == 1] == 1).all()
    mean = math.sqrt(math.pi) / 2
    assert mean == pytest.approx(0.886227, abs=1e-6)
    se = math.sqrt(1 - math.pi / 4) / math.sqrt(t.size)
    assert abs(t.mean() - mean) < 3 * se


def test_marginal_distributions_dkw():
    # Dvoretzky-Kiefer-Wolfowitz band at level 0.01 for T and R in each arm
    cfg = SimConfig(censor_rate=0.0, t_star=40.0, n_per_arm=10_000, seed=12)
    ds = simulate(cfg)
    eps = math.sqrt(math.log(2 / 0.01) / (2 * cfg.n_per_arm))
    grid = np.linspace(0.05, 6, 60)
    for w in (0, 1):
        sel = ds.arm == w
        t, r = np.sort(ds.t_obs[sel]), np.sort(ds.r_obs[sel])
        emp_t = np.searchsorted(t, grid, side="right") / t.size
        emp_r = np.searchsorted(r, grid, side="right") / r.size
        assert np.abs(emp_t - (1 - np.exp(-cfg.a(w) * grid**2 / 2))).max() < eps
        assert np.abs(emp_r - (1 - np.exp(-cfg.c(w) * grid))).max() < eps


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(a1=0.0)
    with pytest.raises(ValueError):
        SimConfig(c0=-1.0)
    with pytest.raises(ValueError):
        SimConfig(n_per_arm=0)
    with pytest.raises(ValueError):
        run_calibration(SimConfig(), replications=10)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ESTIMAND_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ESTIMAND_THREADS", "x")
    assert worker_count(2) == 2


def test_calibration_independent_of_workers():
    cfg = SimConfig(n_per_arm=80, seed=4)
    one = run_calibration(cfg, replications=100, workers=1)
    two = run_calibration(cfg, replications=100, workers=2)
    assert one.to_dict() == two.to_dict()
    row = one.row("hp-I", 0, 1)
    assert set(row) >= {"bias", "empirical_sd", "mean_se", "se_ratio", "coverage"}
    assert one.tests["cv"]["null_holds"] is False
    assert 0 <= one.tests["tp"]["rejection_rate"] <= 1
