import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from tailrisk import snc
from tailrisk.errors import DomainError, InstabilityError, ParameterError, UnstableQueueError
from tailrisk.snc import ArrivalEnvelope, LogMgf, ServiceModel


# ---------------------------------------------------------------- effective bandwidth

def test_effective_bandwidth_examples():
    assert snc.effective_bandwidth(LogMgf.poisson(1.0), 1.0) == pytest.approx(math.e - 1)
    assert snc.effective_bandwidth(LogMgf.bernoulli(0.5), math.log(2)) == pytest.approx(
        math.log(1.5) / math.log(2))
    assert snc.effective_bandwidth(LogMgf.deterministic(3.0), 0.7) == pytest.approx(3.0)
    with pytest.raises(ParameterError):
        snc.effective_bandwidth(LogMgf.poisson(1.0), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 5), st.floats(0.01, 3), st.floats(0.01, 3))
def test_effective_bandwidth_monotone_between_mean_and_peak(lam, t1, t2):
    for a in (LogMgf.poisson(lam), LogMgf.bernoulli(min(lam / 5, 1.0), 2.0)):
        lo, hi = sorted((t1, t2))
        e_lo, e_hi = snc.effective_bandwidth(a, lo), snc.effective_bandwidth(a, hi)
        assert e_lo <= e_hi + 1e-12
        assert a.mean_rate - 1e-12 <= e_lo <= a.peak_rate + 1e-12


@pytest.mark.parametrize("lam,c", [(1.0, 2.0), (0.5, 0.8), (3.0, 3.5)])
def test_decay_rate_poisson_brentq(lam, c):
    ref = optimize.brentq(lambda t: lam * math.expm1(t) - c * t, 1e-6, 50, xtol=1e-14)
    assert snc.decay_rate(LogMgf.poisson(lam), c) == pytest.approx(ref, rel=1e-8)


def test_decay_rate_known_value_and_edges():
    assert snc.decay_rate(LogMgf.poisson(1.0), 2.0) == pytest.approx(1.2564312086, abs=1e-8)
    with pytest.raises(UnstableQueueError):
        snc.decay_rate(LogMgf.poisson(1.0), 1.0)
    assert snc.decay_rate(LogMgf.bernoulli(0.3, 2.0), 2.0) == math.inf


def test_decay_rate_bernoulli_closed_form():
    # log(1 - p + p e^{2t}) = c t
    p, c = 0.3, 1.0
    ref = optimize.brentq(lambda t: math.log1p(p * math.expm1(2 * t)) - c * t, 1e-3, 50)
    assert snc.decay_rate(LogMgf.bernoulli(p, 2.0), c) == pytest.approx(ref, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 4), st.floats(1.05, 4))
def test_decay_rate_solves_equation(lam, ratio):
    a = LogMgf.poisson(lam)
    th = snc.decay_rate(a, lam * ratio)
    assert snc.effective_bandwidth(a, th) == pytest.approx(lam * ratio, rel=1e-7)


def test_legendre_examples():
    assert snc.legendre(lambda t: t * t / 2, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert snc.legendre(LogMgf.poisson(1.0), 2.0) == pytest.approx(2 * math.log(2) - 1, abs=1e-9)
    assert snc.legendre(LogMgf.poisson(1.0), 1.0) == pytest.approx(0.0, abs=1e-12)
    assert snc.legendre(LogMgf.deterministic(1.0), 2.0) == math.inf
    assert snc.legendre(LogMgf.poisson(1.0), -0.5) == math.inf


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.05, 10))
def test_legendre_poisson_closed_form(lam, a):
    ref = a * math.log(a / lam) - a + lam
    assert snc.legendre(LogMgf.poisson(lam), a) == pytest.approx(ref, rel=1e-8, abs=1e-10)


# ---------------------------------------------------------------- Mellin

def _quad_mellin(pdf, s, lo=0.0, hi=math.inf):
    return integrate.quad(lambda x: x ** (s - 1) * pdf(x), lo, hi, epsrel=1e-12, limit=400)[0]


@pytest.mark.parametrize("m", [0.5, 5.0, 10.0])
@pytest.mark.parametrize("s", [-2.0, -0.5, 0.0, 0.4, 1.0, 2.5])
def test_one_plus_exponential_against_quadrature(m, s):
    pdf = lambda x: math.exp(-(x - 1) / m) / m
    ref = _quad_mellin(pdf, s, 1.0)
    assert snc.mellin(snc.OnePlusExponential(m), s) == pytest.approx(ref, rel=1e-9)


def test_mellin_examples():
    assert snc.mellin(snc.PointMass(2.0), 3.0) == 4.0
    assert snc.mellin(snc.Exponential(1.0), 3.0) == pytest.approx(2.0)
    assert snc.mellin(snc.OnePlusExponential(1.0), 0.0) == pytest.approx(0.596347, abs=1e-6)
    with pytest.raises(DomainError):
        snc.mellin(snc.Exponential(1.0), 0.0)
    with pytest.raises(DomainError):
        snc.mellin(snc.PointMass(0.0), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.2, 4))
def test_exponential_mellin_against_gamma(m, s):
    ref = _quad_mellin(lambda x: math.exp(-x / m) / m, s)
    assert snc.mellin(snc.Exponential(m), s) == pytest.approx(ref, rel=1e-7)


def test_continuous_quadrature_and_divergence():
    d = snc.Continuous(lambda x: 1.0, 0.0, 1.0)
    assert snc.mellin(d, 2.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        snc.mellin(snc.Continuous(lambda x: math.exp(-x)), -0.5)


def test_rayleigh_mean_bits():
    svc = ServiceModel.rayleigh(10.0, scale=3.0)
    ref = integrate.quad(lambda x: math.log2(1 + x) * math.exp(-x / 10) / 10, 0, math.inf)[0]
    assert svc.mean_bits == pytest.approx(3.0 * ref, rel=1e-9)
    assert ServiceModel.rayleigh(1.0).mean_bits == pytest.approx(
        math.e * special.exp1(1.0) / math.log(2), rel=1e-12)


# ---------------------------------------------------------------- kernel and bound

def test_kernel_constant_service_closed_form():
    env, svc = ArrivalEnvelope(1.0, 0.5), ServiceModel.constant(2.0)
    for s, w in [(0.3, 1), (1.2, 4), (2.0, 0)]:
        ref = 2 ** (-s * 2.0 * w) / (1 - 2 ** (s * (1.5 - 2.0)))
        assert snc.steady_kernel(s, w, env, svc) == pytest.approx(ref, rel=1e-12)


def test_kernel_instability():
    with pytest.raises(InstabilityError) as e:
        snc.steady_kernel(1.0, 2, ArrivalEnvelope(3.0), ServiceModel.constant(2.0))
    assert e.value.product == pytest.approx(2.0)
    with pytest.raises(InstabilityError):
        snc.delay_violation_bound(3, ArrivalEnvelope(3.0), ServiceModel.constant(2.0))


def test_stability_limit_rayleigh_root():
    env, svc = ArrivalEnvelope(1.0), ServiceModel.rayleigh(10.0)
    root = optimize.brentq(lambda s: s * math.log(2) + math.log(snc.mellin(snc.OnePlusExponential(10.0), 1 - s)),
                           1e-3, 50, xtol=1e-14)
    assert snc.stability_limit(env, svc) == pytest.approx(root, rel=1e-9)
    assert snc.stability_limit(ArrivalEnvelope(1.0), ServiceModel.constant(2.0)) == math.inf


@pytest.mark.parametrize("rho,w", [(0.5, 1), (1.0, 3), (1.0, 8)])
def test_bound_matches_dense_grid_minimum(rho, w):
    env, svc = ArrivalEnvelope(rho), ServiceModel.rayleigh(10.0)
    b = snc.delay_violation_bound(w, env, svc)
    top = snc.stability_limit(env, svc)
    grid = np.geomspace(1e-4, top * (1 - 1e-9), 20000)
    dense = min(snc.steady_kernel(s, w, env, svc) for s in grid)
    assert b.bound <= dense * (1 + 1e-9)
    assert b.bound >= dense * (1 - 1e-3)
    assert 0 < b.s < top


def test_bound_non_increasing_in_w():
    env, svc = ArrivalEnvelope(1.0), ServiceModel.rayleigh(5.0)
    vals = [snc.delay_violation_bound(w, env, svc).bound for w in range(1, 11)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_bound_clamped_to_one():
    assert snc.delay_violation_bound(0, ArrivalEnvelope(1.9), ServiceModel.constant(2.0)).bound == 1.0


@pytest.mark.parametrize("snr,rho", [(5.0, 0.5), (10.0, 1.0)])
def test_bound_dominates_simulation(snr, rho):
    svc = ServiceModel.rayleigh(snr)
    tr = snc.queue_sim(lambda rng, n: np.full(n, rho), svc.sample, 200_000, seed=1, warmup=1000)
    for k, w in enumerate(tr.delays_w):
        assert tr.violation_frequency[k] <= snc.delay_violation_bound(w, ArrivalEnvelope(rho), svc).bound


# ---------------------------------------------------------------- simulator

def _lindley_loop(x, q0=0.0):
    out, q = [], q0
    for v in x:
        q = max(q + v, 0.0)
        out.append(q)
    return np.array(out)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=200), st.floats(0, 10))
def test_lindley_matches_loop(x, q0):
    x = np.array(x)
    assert np.allclose(snc._lindley(x, q0), _lindley_loop(x, q0), atol=1e-9)


def test_lindley_across_chunk_boundary(monkeypatch):
    monkeypatch.setattr(snc, "_CHUNK", 7)
    x = np.random.default_rng(0).normal(-0.1, 1.0, 100)
    assert np.allclose(snc._lindley(x, 2.0), _lindley_loop(x, 2.0), atol=1e-12)


def _fifo_violations(a, c, w, warmup=0):
    # explicit FIFO: cohort t leaves when cumulative departures reach cumulative arrivals through t
    q, dep, cum_a = 0.0, [], 0.0
    cums = []
    for at, ct in zip(a, c):
        q = max(q + at - ct, 0.0)
        cum_a += at
        cums.append(cum_a)
        dep.append(cum_a - q)
    T = len(a)
    return sum(1 for t in range(warmup, T - w) if dep[t + w] < cums[t] - 1e-7)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=5, max_size=80), st.integers(1, 3), st.integers(1, 5))
def test_violation_count_matches_fifo(arr, cap, w):
    a = np.array(arr, float)
    tr = snc.queue_sim(lambda rng, n: a[:n], lambda rng, n: np.full(n, float(cap)), len(a), 0, ws=(w,))
    assert tr.violations[0] == _fifo_violations(a, np.full(len(a), cap), w)
    assert tr.observed[0] == max(len(a) - w, 0)


def test_queue_sim_deterministic_and_streams():
    arr = LogMgf.poisson(1.0).sampler
    svc = ServiceModel.constant(2.0).sample
    a = snc.queue_sim(arr, svc, 5000, seed=3)
    b = snc.queue_sim(arr, svc, 5000, seed=3)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.violations, b.violations)
    with pytest.raises(ParameterError):
        snc.queue_sim(arr, svc, 0, seed=3)


def test_survival_slope_short_run():
    tr = snc.queue_sim(LogMgf.poisson(1.0).sampler, ServiceModel.constant(2.0).sample, 10**6, seed=0,
                       ws=(), warmup=1000)
    slope = snc.log_survival_slope(tr.stationary_q())
    assert -slope == pytest.approx(snc.decay_rate(LogMgf.poisson(1.0), 2.0), rel=0.05)


def test_survival_slope_needs_mass():
    with pytest.raises(DomainError):
        snc.log_survival_slope(np.zeros(1000))
