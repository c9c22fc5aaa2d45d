import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tailrisk import mecsim
from tailrisk.errors import ParameterError, SampleError
from tailrisk.mecsim import MecConfig, MecDecision, MecState, _Policy
from tailrisk.snc import ServiceModel


def brute_decision(cfg, P):
    """First minimiser of ``V power - P service`` over all 22 decisions, ordered by power."""
    cands = [MecDecision(float(f), o) for o in (False, True) for f in cfg.frequencies()]
    vals = [cfg.V * mecsim.power(cfg, c) - P * mecsim.expected_service(cfg, c) for c in cands]
    return cands, vals


def test_bounds_and_units():
    cfg = MecConfig(sigma_th=100.0, xi_th=0.25)
    assert cfg.mean_excess_bound == pytest.approx(100 / 0.75)
    assert cfg.second_moment_bound == pytest.approx(2e4 / (0.75 * 0.5))
    assert mecsim.power(cfg, MecDecision(cfg.f_max, True)) == pytest.approx(1.5)
    assert mecsim.expected_service(cfg, MecDecision(cfg.f_max, False)) == pytest.approx(5000.0)
    assert len(cfg.frequencies()) == 11
    assert cfg.capacity == pytest.approx(5000 + cfg.offload.mean_bits)


def test_config_validation():
    for kw in ({"d": 0}, {"epsilon": 1.0}, {"sigma_th": 0}, {"xi_th": 0.5}, {"V": 0}, {"f_levels": 1}):
        with pytest.raises(ParameterError):
            MecConfig(**kw)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e7), st.sampled_from([1e6, 3e8, 1e10]))
def test_hull_policy_is_exact_argmin(P, V):
    cfg = MecConfig(V=V)
    pol = _Policy(cfg)
    cands, vals = brute_decision(cfg, P)
    got = pol.choice[pol.decide(P, V)]
    got_val = cfg.V * mecsim.power(cfg, got) - P * mecsim.expected_service(cfg, got)
    assert got_val <= min(vals) + 1e-9 * (1 + abs(min(vals)))


def test_zero_pressure_idles():
    cfg = MecConfig()
    assert mecsim.mec_controller(MecState(), cfg) == MecDecision(0.0, False)


def test_pressure_terms():
    cfg = MecConfig(d=100.0, w1=2.0, w2=3.0)
    assert mecsim.pressure(MecState(X=50, Q1=1, Q2=5, Q3=7), cfg) == 52.0
    assert mecsim.pressure(MecState(X=110, Q1=1, Q2=5, Q3=7), cfg) == 110 + 2 + 15 + 2 * 10 * 7


def test_step_examples():
    cfg = MecConfig(d=100.0, epsilon=0.1, sigma_th=10.0)
    s = mecsim.mec_step(MecState(X=90.0), cfg, 30.0, MecDecision(0.0, False))
    assert (s.X, s.Q1, s.Q2, s.Q3, s.t) == (120.0, 0.9, 10.0, 400.0 - 200.0, 1)
    s2 = mecsim.mec_step(s, cfg, 0.0, MecDecision(cfg.f_max, False))
    assert s2.X == 0.0 and s2.Q1 == pytest.approx(0.8) and (s2.Q2, s2.Q3) == (s.Q2, s.Q3)
    s3 = mecsim.mec_step(MecState(X=0), cfg, 0.0, MecDecision(0.0, True), offload_bits=5.0)
    assert s3.X == 0.0
    with pytest.raises(ParameterError):
        mecsim.mec_step(MecState(), cfg, 1.0, MecDecision(2 * cfg.f_max, False))
    with pytest.raises(ParameterError):
        mecsim.mec_step(MecState(), cfg, 1.0, MecDecision(-1.0, False))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 3e4), st.booleans(), st.integers(0, 10)), max_size=30))
def test_virtual_queues_non_negative_and_gated(steps):
    cfg = MecConfig(d=2e4)
    s = MecState()
    for a, off, fi in steps:
        prev = s
        s = mecsim.mec_step(s, cfg, a, MecDecision(cfg.frequencies()[fi], off))
        assert min(s.X, s.Q1, s.Q2, s.Q3) >= 0
        if s.X <= cfg.d:
            assert (s.Q2, s.Q3) == (prev.Q2, prev.Q3)


def test_vectorised_loop_matches_scalar_api():
    cfg = replace(MecConfig(T=4000, seed=3), d=15000.0, V=1e7)
    tr = mecsim.mec_simulate(cfg)
    a, o = mecsim._draws(cfg, cfg.T)
    pol = _Policy(cfg)
    s = MecState()
    for t in range(cfg.T):
        dec = mecsim.mec_controller(s, cfg, pol)
        s = mecsim.mec_step(s, cfg, a[t], dec, offload_bits=o[t])
        assert tr.f[t] == dec.f and tr.offload[t] == dec.offload
        assert tr.X[t] == pytest.approx(s.X, rel=1e-12, abs=1e-9)
        assert np.allclose(tr.Q[t], [s.Q1, s.Q2, s.Q3], rtol=1e-12, atol=1e-9)
    assert tr.X.max() > cfg.d  # the check exercised the gated branch


def test_shorter_run_is_prefix():
    cfg = MecConfig(seed=1)
    short = mecsim.mec_simulate(cfg, T=70000)
    long = mecsim.mec_simulate(cfg, T=140000)
    assert np.array_equal(short.X, long.X[:70000])
    assert np.array_equal(short.Q, long.Q[:70000])


def test_report_on_handmade_trace():
    cfg = MecConfig(d=10.0, warmup_fraction=0.0, epsilon=0.3, sigma_th=1.0)
    X = np.array([0.0, 12.0, 5.0, 15.0, 9.0])
    tr = mecsim.MecTrace(X=X, Q=np.zeros((5, 3)), f=np.zeros(5), offload=np.zeros(5, bool),
                         power=np.array([0, 1, 0, 1, 0.5]), warmup=0)
    rep = mecsim.constraint_report(tr, cfg)
    assert rep.violation_freq == pytest.approx(0.4)
    assert rep.cond_mean_excess == pytest.approx(3.5)
    assert rep.cond_second_moment_excess == pytest.approx(14.5)
    assert rep.mean_power == pytest.approx(0.5)
    assert rep.n_exceed == 2 and not rep.empty
    assert not rep.meets_violation and not rep.meets_mean
    assert rep.as_dict()["n_exceed"] == 2


def test_report_empty_tail():
    cfg = MecConfig(d=100.0, warmup_fraction=0.0)
    tr = mecsim.MecTrace(X=np.ones(10), Q=np.zeros((10, 3)), f=np.zeros(10), offload=np.zeros(10, bool),
                         power=np.zeros(10), warmup=0)
    rep = mecsim.constraint_report(tr, cfg)
    assert rep.empty and math.isnan(rep.cond_mean_excess) and rep.meets_mean and rep.meets_second


def test_tail_analysis():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.uniform(0, 100, 10000), 100 + rng.exponential(20.0, 2000)])
    ta = mecsim.mec_tail_analysis(X, 100.0)
    assert ta.n_exceed == 2000
    assert ta.gpd.sigma_t == pytest.approx(20.0, rel=0.1)
    assert abs(ta.gpd.xi) < 0.1
    assert ta.ks_distance < 0.05
    assert ta.ccdf[0] == pytest.approx(np.mean(X > 0))
    with pytest.raises(SampleError):
        mecsim.mec_tail_analysis(np.ones(100), 5.0)


def test_pilot_and_calibration_are_deterministic():
    cfg = MecConfig(seed=2)
    X = mecsim.pilot_queue(cfg, T=50000)
    assert np.array_equal(X, mecsim.pilot_queue(cfg, T=50000))
    c1, c2 = mecsim.calibrate(cfg), mecsim.calibrate(cfg)
    assert c1 == c2
    assert c1.d > 0 and c1.sigma_th > 0 and c1.xi_th <= 0.45


def test_controlled_queue_stays_bounded_short():
    cfg = mecsim.default_config(seed=0, T=200_000)
    tr = mecsim.mec_simulate(cfg)
    rep = mecsim.constraint_report(tr, cfg)
    assert rep.violation_freq <= 3 * cfg.epsilon
    assert tr.Q[-1, 0] < 1e3


def test_huge_pressure_picks_max_service():
    cfg = MecConfig()
    dec = mecsim.mec_controller(MecState(X=cfg.d * 10, Q1=1e12), cfg)
    assert dec == MecDecision(cfg.f_max, True)
    # crossover: max service beats idling while V * P_max < P * S_max
    P = mecsim.pressure(MecState(X=cfg.d * 10, Q1=1e12), cfg)
    top = MecDecision(cfg.f_max, True)
    V_cross = P * mecsim.expected_service(cfg, top) / mecsim.power(cfg, top)
    assert mecsim.mec_controller(MecState(X=cfg.d * 10, Q1=1e12), replace(cfg, V=V_cross * 1e3)) != top


def test_huge_V_idles():
    cfg = MecConfig(V=1e30)
    assert mecsim.mec_controller(MecState(X=5e4, Q1=10, Q2=3, Q3=2), cfg) == MecDecision(0.0, False)


def test_zero_arrivals_report_empty():
    cfg = MecConfig(arrival_mean=0.0, T=5000)
    tr, rep = mecsim.mec_run(cfg)
    assert np.all(tr.X == 0) and rep.violation_freq == 0 and rep.empty


def test_tail_analysis_exponential_injection():
    rng = np.random.default_rng(1)
    d = 50.0
    X = np.concatenate([rng.uniform(0, d, 10**5), d + rng.exponential(1.0, 10**5)])
    ta = mecsim.mec_tail_analysis(X, d)
    assert abs(ta.gpd.xi) < 0.03 and ta.ks_distance < 0.03
