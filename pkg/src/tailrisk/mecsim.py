"""Single-server MEC task queue under a drift-plus-penalty controller.

The queue ``X`` (bits) is served by local computing at frequency ``f``
(``f / cycles_per_bit`` bits per slot) plus an optional offload link whose
per-slot throughput comes from an :class:`~tailrisk.snc.ServiceModel`.
Three virtual queues track the tail constraints:

* ``Q1``: long-run fraction of slots with ``X > d`` at most ``epsilon``;
* ``Q2``: mean excess ``Y = X - d`` over those slots at most ``sigma_th / (1 - xi_th)``;
* ``Q3``: second moment of that excess at most ``2 sigma_th^2 / ((1 - xi_th)(1 - 2 xi_th))``.

``Q2`` and ``Q3`` only move in slots where ``X > d``, so they encode the
conditional constraints.
"""

from dataclasses import dataclass, field, replace
import bisect
import math

import numpy as np

from .errors import ParameterError, SampleError
from .evt import GpdParams, fit_gpd, ks_distance_gpd, pot_excesses
from .rng import stream
from .snc import ServiceModel, _lindley

_CHUNK = 1 << 16


@dataclass(frozen=True)
class MecConfig:
    arrival_mean: float = 8000.0
    d: float = 30000.0
    epsilon: float = 1e-3
    sigma_th: float = 4000.0
    xi_th: float = 0.0
    f_max: float = 5e6
    cycles_per_bit: float = 1000.0
    offload: ServiceModel = field(default_factory=lambda: ServiceModel.rayleigh(10.0, scale=1720.0))
    kappa_cpu: float | None = None
    p_tx: float = 0.5
    V: float = 3e8
    w1: float = 70.0
    w2: float = 20.0
    f_levels: int = 11
    T: int = 1_000_000
    warmup_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.d > 0:
            raise ParameterError("threshold d must be positive")
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1)")
        if not self.sigma_th > 0:
            raise ParameterError("sigma_th must be positive")
        if not self.xi_th < 0.5:
            raise ParameterError("xi_th must be below 0.5 for a finite second moment")
        if not self.V > 0:
            raise ParameterError("V must be positive")
        if self.arrival_mean < 0 or self.f_max <= 0 or self.cycles_per_bit <= 0:
            raise ParameterError("rates must be positive")
        if self.f_levels < 2 or self.T < 1 or not 0 <= self.warmup_fraction < 1:
            raise ParameterError("bad grid size, horizon or warmup")

    @property
    def kappa(self) -> float:
        return 1.0 / self.f_max ** 3 if self.kappa_cpu is None else self.kappa_cpu

    @property
    def warmup(self) -> int:
        return int(self.warmup_fraction * self.T)

    @property
    def mean_excess_bound(self) -> float:
        return self.sigma_th / (1.0 - self.xi_th)

    @property
    def second_moment_bound(self) -> float:
        return 2.0 * self.sigma_th ** 2 / ((1.0 - self.xi_th) * (1.0 - 2.0 * self.xi_th))

    @property
    def capacity(self) -> float:
        return self.f_max / self.cycles_per_bit + self.offload.mean_bits

    def frequencies(self) -> np.ndarray:
        return np.linspace(0.0, self.f_max, self.f_levels)


@dataclass(frozen=True)
class MecState:
    X: float = 0.0
    Q1: float = 0.0
    Q2: float = 0.0
    Q3: float = 0.0
    t: int = 0


@dataclass(frozen=True)
class MecDecision:
    f: float
    offload: bool


def power(cfg: MecConfig, dec: MecDecision) -> float:
    return cfg.kappa * dec.f ** 3 + (cfg.p_tx if dec.offload else 0.0)


def expected_service(cfg: MecConfig, dec: MecDecision) -> float:
    return dec.f / cfg.cycles_per_bit + (cfg.offload.mean_bits if dec.offload else 0.0)


def _check(cfg, dec):
    if not 0 <= dec.f <= cfg.f_max * (1 + 1e-12):
        raise ParameterError(f"frequency {dec.f} outside [0, {cfg.f_max}]")


def mec_step(state: MecState, cfg: MecConfig, arrival: float, decision: MecDecision,
             offload_bits: float | None = None) -> MecState:
    """Advance one slot.

    ``offload_bits`` is the realised link throughput this slot (used only if
    the decision offloads); when omitted the model mean is used.
    """
    _check(cfg, decision)
    if decision.offload:
        off = cfg.offload.mean_bits if offload_bits is None else float(offload_bits)
    else:
        off = 0.0
    s = decision.f / cfg.cycles_per_bit + off
    X = max(state.X + arrival - s, 0.0)
    return _virtual(cfg, state, X)


def _virtual(cfg, state, X):
    if X > cfg.d:
        y = X - cfg.d
        q1 = max(state.Q1 + 1.0 - cfg.epsilon, 0.0)
        q2 = max(state.Q2 + y - cfg.mean_excess_bound, 0.0)
        q3 = max(state.Q3 + y * y - cfg.second_moment_bound, 0.0)
    else:
        q1 = max(state.Q1 - cfg.epsilon, 0.0)
        q2, q3 = state.Q2, state.Q3
    return MecState(X, q1, q2, q3, state.t + 1)


# --------------------------------------------------------------------------
# controller


class _Policy:
    """Exact per-slot argmin over the decision grid.

    The objective ``V power_k - P service_k`` is linear in the pressure
    ``P``, so the minimiser is the lower envelope of 22 lines; it is
    precomputed once as breakpoints on ``P / V``.
    """

    def __init__(self, cfg: MecConfig):
        cands = [MecDecision(float(f), o) for o in (False, True) for f in cfg.frequencies()]
        pw = np.array([power(cfg, c) for c in cands])
        sv = np.array([expected_service(cfg, c) for c in cands])
        # tie rule at equal objective: lower power first
        order = sorted(range(len(cands)), key=lambda k: (pw[k], -sv[k]))
        hull = []  # (ratio from which candidate k is optimal, k)
        r = 0.0
        k = order[0]
        while True:
            hull.append((r, k))
            best_r, best_k = math.inf, None
            for j in order:
                if sv[j] > sv[k]:
                    rj = (pw[j] - pw[k]) / (sv[j] - sv[k])
                    if rj < best_r - 1e-15 or (abs(rj - best_r) <= 1e-15 and sv[j] > sv[best_k]):
                        best_r, best_k = rj, j
            if best_k is None:
                break
            r, k = max(best_r, r), best_k
        self.breaks = [h[0] for h in hull]
        self.choice = [cands[h[1]] for h in hull]
        self.service = [sv[h[1]] for h in hull]
        self.cands, self.pw, self.sv = cands, pw, sv

    def decide(self, pressure: float, V: float) -> int:
        if pressure <= 0:
            return 0
        return bisect.bisect_right(self.breaks, pressure / V) - 1


def pressure(state: MecState, cfg: MecConfig) -> float:
    """Queue pressure multiplying the service term in the drift bound.

    ``X`` plus ``w1 * Q1``; above the threshold the conditional queues add
    their one-slot sensitivities ``w2 * Q2`` and ``2 Y Q3``.
    """
    p = state.X + cfg.w1 * state.Q1
    if state.X > cfg.d:
        y = state.X - cfg.d
        p += cfg.w2 * state.Q2 + 2.0 * y * state.Q3
    return p


def mec_controller(state: MecState, cfg: MecConfig, _policy: _Policy | None = None) -> MecDecision:
    """Minimise ``V power(dec) + P (E[a] - service(dec))`` over the decision grid."""
    pol = _policy or _Policy(cfg)
    return pol.choice[pol.decide(pressure(state, cfg), cfg.V)]


# --------------------------------------------------------------------------
# simulation


@dataclass
class MecTrace:
    X: np.ndarray
    Q: np.ndarray          # shape (T, 3)
    f: np.ndarray
    offload: np.ndarray
    power: np.ndarray
    warmup: int


@dataclass(frozen=True)
class ConstraintReport:
    violation_freq: float
    cond_mean_excess: float
    cond_second_moment_excess: float
    mean_power: float
    n_exceed: int
    empty: bool
    meets_violation: bool
    meets_mean: bool
    meets_second: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _draws(cfg, T):
    """Arrival and offload draws in fixed-size chunks: a shorter run is a prefix of a longer one."""
    a = np.empty(T)
    o = np.empty(T)
    ra = stream(cfg.seed, "mec", "arrivals")
    ro = stream(cfg.seed, "mec", "offload")
    for start in range(0, T, _CHUNK):
        n = min(_CHUNK, T - start)
        a[start:start + n] = ra.poisson(cfg.arrival_mean, size=_CHUNK)[:n] if cfg.arrival_mean > 0 else 0.0
        o[start:start + n] = cfg.offload.sample(ro, _CHUNK)[:n]
    return a, o


def mec_simulate(cfg: MecConfig, T: int | None = None) -> MecTrace:
    T = cfg.T if T is None else int(T)
    a, o = _draws(cfg, T)
    pol = _Policy(cfg)
    breaks, V = pol.breaks, cfg.V
    fr = [c.f for c in pol.choice]
    offl = [c.offload for c in pol.choice]
    local = [c.f / cfg.cycles_per_bit for c in pol.choice]
    pw = [power(cfg, c) for c in pol.choice]
    d, eps, w1, w2 = cfg.d, cfg.epsilon, cfg.w1, cfg.w2
    m1, m2 = cfg.mean_excess_bound, cfg.second_moment_bound
    Xs = np.empty(T)
    Qs = np.empty((T, 3))
    idx = np.empty(T, dtype=np.int64)
    X = q1 = q2 = q3 = 0.0
    al, ol = a.tolist(), o.tolist()
    for t in range(T):
        p = X + w1 * q1
        if X > d:
            y = X - d
            p += w2 * q2 + 2.0 * y * q3
        k = 0 if p <= 0 else bisect.bisect_right(breaks, p / V) - 1
        s = local[k] + (ol[t] if offl[k] else 0.0)
        X = X + al[t] - s
        if X < 0.0:
            X = 0.0
        if X > d:
            y = X - d
            q1 = q1 + 1.0 - eps
            q2 = q2 + y - m1
            q3 = q3 + y * y - m2
            if q2 < 0.0:
                q2 = 0.0
            if q3 < 0.0:
                q3 = 0.0
        else:
            q1 = q1 - eps
            if q1 < 0.0:
                q1 = 0.0
        Xs[t] = X
        Qs[t, 0] = q1
        Qs[t, 1] = q2
        Qs[t, 2] = q3
        idx[t] = k
    choice_f = np.array(fr)[idx]
    choice_o = np.array(offl)[idx]
    return MecTrace(X=Xs, Q=Qs, f=choice_f, offload=choice_o, power=np.array(pw)[idx],
                    warmup=int(cfg.warmup_fraction * T))


def constraint_report(trace: MecTrace, cfg: MecConfig, T: int | None = None) -> ConstraintReport:
    """Time averages over slots ``[warmup, T)``; ``T`` defaults to the full trace."""
    T = trace.X.size if T is None else int(T)
    w = int(cfg.warmup_fraction * T)
    X = trace.X[w:T]
    y = X[X > cfg.d] - cfg.d
    n = X.size
    freq = y.size / n if n else 0.0
    empty = y.size == 0
    m1 = float(y.mean()) if not empty else math.nan
    m2 = float(np.mean(y * y)) if not empty else math.nan
    return ConstraintReport(
        violation_freq=freq,
        cond_mean_excess=m1,
        cond_second_moment_excess=m2,
        mean_power=float(trace.power[w:T].mean()) if n else math.nan,
        n_exceed=int(y.size),
        empty=empty,
        meets_violation=freq <= cfg.epsilon,
        meets_mean=empty or m1 <= cfg.mean_excess_bound,
        meets_second=empty or m2 <= cfg.second_moment_bound,
    )


def mec_run(cfg: MecConfig):
    trace = mec_simulate(cfg)
    return trace, constraint_report(trace, cfg)


@dataclass(frozen=True)
class TailAnalysis:
    grid: np.ndarray
    ccdf: np.ndarray
    gpd: GpdParams
    ks_distance: float
    n_exceed: int


def mec_tail_analysis(X, d: float, grid=None, min_samples: int = 30) -> TailAnalysis:
    """Empirical CCDF of ``X`` and a GPD fitted to its excesses over ``d``."""
    X = np.asarray(X, dtype=float)
    exc = pot_excesses(X, d)
    if len(exc) < min_samples:
        raise SampleError(f"only {len(exc)} exceedances of d={d}; need {min_samples}")
    params = fit_gpd(exc, threshold=d, min_samples=min_samples)
    if grid is None:
        grid = np.linspace(0.0, float(X.max()), 101)
    srt = np.sort(X)
    ccdf = 1.0 - np.searchsorted(srt, grid, side="right") / srt.size
    return TailAnalysis(np.asarray(grid, dtype=float), ccdf, params,
                        ks_distance_gpd(exc, params), len(exc))


# --------------------------------------------------------------------------
# calibration


PILOT_FREQ_FRACTION = 0.65
PILOT_SLOTS = 1_000_000


def pilot_queue(cfg: MecConfig, T: int | None = None, freq_fraction: float = PILOT_FREQ_FRACTION) -> np.ndarray:
    """Open-loop pilot: fixed ``freq_fraction * f_max`` plus offload every slot, same draws as the controlled run."""
    T = PILOT_SLOTS if T is None else int(T)
    a, o = _draws(cfg, T)
    s = freq_fraction * cfg.f_max / cfg.cycles_per_bit + o
    X = _lindley(a - s, 0.0)
    return X[int(cfg.warmup_fraction * T):]


def calibrate(cfg: MecConfig, quantile: float = 0.999, tighten: float = 0.2,
              freq_fraction: float = PILOT_FREQ_FRACTION) -> MecConfig:
    """Set ``d`` at the pilot's ``quantile`` and the GPD constraint from the pilot's excesses.

    ``sigma_th`` is the fitted scale reduced by ``tighten``; ``xi_th`` is
    the fitted shape, capped below 0.5.
    """
    X = pilot_queue(cfg, freq_fraction=freq_fraction)
    d = float(np.quantile(X, quantile))
    g = fit_gpd(pot_excesses(X, d), threshold=d)
    return replace(cfg, d=d, sigma_th=(1.0 - tighten) * g.sigma_t, xi_th=min(g.xi, 0.45))


def default_config(seed: int = 0, T: int = 1_000_000, freq_fraction: float = PILOT_FREQ_FRACTION,
                   **overrides) -> MecConfig:
    base = MecConfig(seed=seed, T=T, **overrides)
    return calibrate(base, freq_fraction=freq_fraction)
