"""Risk-sensitive learning agents and the mmWave beamwidth/power simulator.

Each small cell (SC) serves one UE and learns a (beamwidth, power) action.
Three schemes are compared:

* ``RSL``: exponential-utility estimates with risk index ``mu < 0``;
* ``CSL``: the same learner with ``mu = 0`` (plain mean estimates);
* ``BL1``: maximum transmit power, beamwidth drawn uniformly each slot.

Channel model (all constants configurable on :class:`MmwaveScenario`):
LOS probability ``exp(-d / 141 m)``, path loss ``61.4 + 20 log10 d`` (LOS)
and ``72 + 29.2 log10 d`` (NLOS) dB, sectored transmit pattern with
mainlobe gain ``2 pi / beamwidth`` (capped by the array size) and a fixed
-10 dB sidelobe, Gaussian beam-pointing error per slot, receive array gain
on the serving link only. When a link is blocked its dominant reflected
path leaves the SC at a uniform angular offset within
``+-nlos_angle_spread`` of the direct path, so a narrow beam gains more
in LOS but misses the reflection more often under blockage.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError, SampleError
from .evt import as_array
from .rng import stream

MU_EPS = 1e-8
SCHEMES = ("RSL", "CSL", "BL1")


@dataclass(frozen=True)
class ActionGrid:
    beamwidths: tuple = tuple(np.round(np.arange(0.2, 0.4 + 1e-9, 0.04), 10))
    powers: tuple = (21.0, 23.0, 25.0)

    def __post_init__(self):
        bw = tuple(float(b) for b in self.beamwidths)
        pw = tuple(float(p) for p in self.powers)
        if not bw or not pw:
            raise ParameterError("action grid must be non-empty")
        if any(not 0 < b <= math.pi for b in bw):
            raise ParameterError("beamwidths must lie in (0, pi]")
        object.__setattr__(self, "beamwidths", bw)
        object.__setattr__(self, "powers", pw)

    @property
    def size(self) -> int:
        return len(self.beamwidths) * len(self.powers)

    def action(self, index: int):
        """``(beamwidth, power_dbm)`` for a flat action index (power varies fastest)."""
        b, p = divmod(int(index), len(self.powers))
        return self.beamwidths[b], self.powers[p]

    def index(self, beam_index: int, power_index: int) -> int:
        return int(beam_index) * len(self.powers) + int(power_index)

    def arrays(self):
        idx = np.arange(self.size)
        return (np.asarray(self.beamwidths)[idx // len(self.powers)],
                np.asarray(self.powers)[idx % len(self.powers)])


@dataclass
class AgentState:
    """Per-SC learner: utility estimates, strategy, and step-size bookkeeping.

    ``mu == 0`` selects classical (risk-neutral) estimation. Step sizes are
    ``1 / n(a) ** lambda_exponent`` with ``n(a)`` the visit count of the
    updated action; exponent 1 gives exact running averages.
    """

    mu: float
    r_hat: np.ndarray
    probs: np.ndarray
    counts: np.ndarray
    kappa: float = 10.0
    lambda_exponent: float = 0.6
    t: int = 0

    @classmethod
    def fresh(cls, n_actions: int, mu: float = 0.0, kappa: float = 10.0,
              lambda_exponent: float = 0.6) -> "AgentState":
        return cls(mu=float(mu), r_hat=np.zeros(n_actions), probs=np.full(n_actions, 1.0 / n_actions),
                   counts=np.zeros(n_actions, dtype=np.int64), kappa=kappa,
                   lambda_exponent=lambda_exponent)


def rs_transform(payoffs, mu: float) -> float:
    """Exponential-utility certainty equivalent ``(1/mu) log mean(exp(mu u))``."""
    u = as_array(payoffs)
    if u.size == 0:
        raise SampleError("empty payoff sample")
    if abs(mu) < MU_EPS:
        return float(u.mean())
    return float((logsumexp(mu * u) - math.log(u.size)) / mu)


def utility_innovation(payoff: float, mu: float) -> float:
    if abs(mu) < MU_EPS:
        return float(payoff)
    return math.expm1(mu * payoff) / mu


def utility_estimate_update(st: AgentState, action: int, payoff: float, lam: float | None = None) -> AgentState:
    """Move ``r_hat[action]`` toward ``(exp(mu u) - 1) / mu`` by step ``lam``."""
    if not 0 <= action < st.r_hat.size:
        raise ParameterError(f"action {action} outside grid of size {st.r_hat.size}")
    counts = st.counts.copy()
    counts[action] += 1
    if lam is None:
        lam = 1.0 / counts[action] ** st.lambda_exponent
    if not 0 < lam <= 1:
        raise ParameterError(f"learning rate must lie in (0, 1], got {lam}")
    r_hat = st.r_hat.copy()
    r_hat[action] += lam * (utility_innovation(payoff, st.mu) - r_hat[action])
    return replace(st, r_hat=r_hat, counts=counts, t=st.t + 1)


def certainty_equivalent(r_hat, mu: float) -> np.ndarray:
    """Map estimates of ``E[(exp(mu u) - 1) / mu]`` back to payoff units, ``log(1 + mu r) / mu``.

    Monotone in ``r_hat``; the identity when ``mu == 0``.
    """
    r_hat = np.asarray(r_hat, dtype=float)
    if abs(mu) < MU_EPS:
        return r_hat.copy()
    arg = np.maximum(1.0 + mu * r_hat, np.finfo(float).tiny)
    return np.log(arg) / mu


def boltzmann(values, kappa: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if math.isinf(kappa):
        best = values == values.max()
        return best / best.sum()
    z = kappa * values
    return np.exp(z - logsumexp(z))


def strategy_update(st: AgentState) -> AgentState:
    """Logit (Boltzmann) strategy over the certainty equivalents of ``r_hat``."""
    if not np.all(np.isfinite(st.r_hat)):
        raise ParameterError("utility estimates must be finite")
    probs = boltzmann(certainty_equivalent(st.r_hat, st.mu), st.kappa)
    return replace(st, probs=probs)


def sample_action(probs, u: float) -> int:
    """Inverse-CDF draw from ``probs`` with a supplied uniform ``u``."""
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))


def rate_ccdf(samples, grid) -> np.ndarray:
    """Empirical ``P(R > g)`` at each grid point."""
    s = np.sort(as_array(samples))
    if s.size == 0:
        raise SampleError("empty rate sample")
    g = np.asarray(grid, dtype=float)
    return 1.0 - np.searchsorted(s, g, side="right") / s.size


# --------------------------------------------------------------------------
# scenario and channel


@dataclass
class MmwaveScenario:
    sc_positions: np.ndarray
    ue_positions: np.ndarray
    carrier_ghz: float = 28.0
    bandwidth_hz: float = 1e9
    n_tx: int = 64
    n_rx: int = 4
    blockage_decay_m: float | None = 141.0
    los_intercept_db: float = 61.4
    los_slope_db: float = 20.0
    nlos_intercept_db: float = 72.0
    nlos_slope_db: float = 29.2
    noise_figure_db: float = 7.0
    sidelobe_db: float = -10.0
    pointing_error_std: float = 0.02
    nlos_angle_spread: float = 0.3
    grid: ActionGrid = field(default_factory=ActionGrid)
    mu: float = -0.5
    kappa: float = 10.0
    lambda_exponent: float = 0.6
    warmup_fraction: float = 0.1
    eval_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.sc_positions = np.atleast_2d(np.asarray(self.sc_positions, dtype=float))
        self.ue_positions = np.atleast_2d(np.asarray(self.ue_positions, dtype=float))
        if self.sc_positions.shape != self.ue_positions.shape or self.sc_positions.shape[1] != 2:
            raise ParameterError("need one 2-D UE position per SC")
        if np.any(np.linalg.norm(self.ue_positions - self.sc_positions, axis=1) <= 0):
            raise ParameterError("UE must not coincide with its SC")

    @property
    def n_cells(self) -> int:
        return self.sc_positions.shape[0]

    @classmethod
    def random(cls, density_per_km2: float = 24.0, area_km2: float = 1.0, seed: int = 0,
               ue_distance=(20.0, 60.0), **kwargs) -> "MmwaveScenario":
        """Uniform SC drop in a square, each UE at a uniform distance/angle from its SC."""
        if density_per_km2 <= 0 or area_km2 <= 0:
            raise ParameterError("density and area must be positive")
        rng = stream(seed, "mmwave", "topology")
        n = max(1, int(round(density_per_km2 * area_km2)))
        side = math.sqrt(area_km2) * 1000.0
        sc = rng.uniform(0.0, side, size=(n, 2))
        r = rng.uniform(*ue_distance, size=n)
        phi = rng.uniform(0.0, 2 * math.pi, size=n)
        ue = sc + np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        return cls(sc_positions=sc, ue_positions=ue, seed=seed, **kwargs)

    def noise_dbm(self) -> float:
        return -174.0 + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    def path_loss_db(self, dist, los):
        logd = np.log10(dist)
        return np.where(los, self.los_intercept_db + self.los_slope_db * logd,
                        self.nlos_intercept_db + self.nlos_slope_db * logd)

    def los_probability(self, dist):
        if self.blockage_decay_m is None:
            return np.ones_like(dist)
        return np.exp(-dist / self.blockage_decay_m)


def _geometry(sc: MmwaveScenario):
    # [j, i]: from SC j to UE i
    delta = sc.ue_positions[None, :, :] - sc.sc_positions[:, None, :]
    dist = np.maximum(np.linalg.norm(delta, axis=2), 1.0)
    angle = np.arctan2(delta[..., 1], delta[..., 0])
    boresight = np.diag(angle).copy()
    return dist, angle, boresight


def link_rates(sc: MmwaveScenario, beamwidths, powers_dbm, los, pointing_errors,
               path_offsets=None, geometry=None):
    """Per-UE rate (bit/s) for one slot given every SC's action and the channel state.

    ``los`` is a boolean ``[j, i]`` matrix (SC ``j`` to UE ``i``);
    ``pointing_errors`` are per-SC beam offsets and ``path_offsets`` the
    ``[j, i]`` departure-angle offsets applied to blocked links (radians).
    """
    dist, angle, boresight = geometry if geometry is not None else _geometry(sc)
    bw = np.asarray(beamwidths, dtype=float)
    beam = boresight + np.asarray(pointing_errors, dtype=float)
    if path_offsets is not None:
        angle = angle + np.where(los, 0.0, path_offsets)
    off = np.abs((angle - beam[:, None] + np.pi) % (2 * np.pi) - np.pi)
    main_gain = np.minimum(2 * np.pi / bw, sc.n_tx)
    g_tx = np.where(off <= bw[:, None] / 2, main_gain[:, None], 10 ** (sc.sidelobe_db / 10))
    n = sc.n_cells
    g_rx = np.where(np.eye(n, dtype=bool), float(sc.n_rx), 1.0)
    rx_dbm = (np.asarray(powers_dbm, dtype=float)[:, None] + 10 * np.log10(g_tx * g_rx)
              - sc.path_loss_db(dist, los))
    rx_mw = 10 ** (rx_dbm / 10)
    signal = np.diag(rx_mw)
    interference = rx_mw.sum(axis=0) - signal
    sinr = signal / (10 ** (sc.noise_dbm() / 10) + interference)
    return sc.bandwidth_hz * np.log2(1.0 + sinr)


@dataclass
class MmwaveResult:
    scheme: str
    rates_gbps: np.ndarray
    actions: np.ndarray
    summary: dict


def _summary(rates, grid=None):
    if rates.size == 0:
        return {"n": 0, "mean": float("nan"), "variance": float("nan"), "empty": True,
                "ccdf_grid": np.array([]), "ccdf": np.array([])}
    if grid is None:
        grid = np.linspace(0.0, float(np.ceil(rates.max())), 41)
    return {"n": int(rates.size), "mean": float(rates.mean()), "variance": float(rates.var()),
            "empty": False, "ccdf_grid": np.asarray(grid, dtype=float), "ccdf": rate_ccdf(rates, grid)}


def simulate_mmwave(sc: MmwaveScenario, scheme: str, episodes: int, seed: int | None = None,
                    ccdf_grid=None) -> MmwaveResult:
    """Run the per-slot learning loop and return the final-window rate distribution.

    Randomness: one stream per SC for action draws and one shared channel
    stream (LOS states, pointing errors, reflection offsets). Every scheme
    consumes the same draws, so schemes compared under one seed see
    identical channels. Agents are held as stacked arrays; the arithmetic
    is that of :func:`utility_estimate_update`, :func:`strategy_update` and
    :func:`sample_action` applied row by row.
    """
    scheme = scheme.upper()
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    episodes = int(episodes)
    if episodes < 0:
        raise ParameterError("episodes must be non-negative")
    seed = sc.seed if seed is None else seed
    n = sc.n_cells
    grid = sc.grid
    n_act = grid.size
    bw_of, pw_of = grid.arrays()
    n_beam, n_pw = len(grid.beamwidths), len(grid.powers)
    geom = _geometry(sc)
    p_los = sc.los_probability(geom[0])

    chan = stream(seed, "mmwave", "channel")
    uniforms = np.column_stack([stream(seed, "mmwave", "sc", j).random(episodes) for j in range(n)]) \
        if episodes else np.zeros((0, n))
    mu = sc.mu if scheme == "RSL" else 0.0
    r_hat = np.zeros((n, n_act))
    counts = np.zeros((n, n_act), dtype=np.int64)
    probs = np.full((n, n_act), 1.0 / n_act)
    rows = np.arange(n)
    warmup = int(math.ceil(sc.warmup_fraction * episodes))
    eval_start = episodes - int(math.ceil(sc.eval_fraction * episodes))

    actions = np.zeros((episodes, n), dtype=np.int64)
    kept = []
    for t in range(episodes):
        u = uniforms[t]
        if scheme == "BL1":
            beam_idx = np.minimum((u * n_beam).astype(int), n_beam - 1)
            act = beam_idx * n_pw + (n_pw - 1)
        elif t < warmup:
            act = np.minimum((u * n_act).astype(int), n_act - 1)
        else:
            cdf = np.cumsum(probs, axis=1)
            act = np.minimum((cdf <= (u * cdf[:, -1])[:, None]).sum(axis=1), n_act - 1)
        actions[t] = act
        los = chan.random((n, n)) < p_los
        err = chan.normal(0.0, 1.0, size=n) * sc.pointing_error_std
        refl = chan.uniform(-1.0, 1.0, size=(n, n)) * sc.nlos_angle_spread
        rates = link_rates(sc, bw_of[act], pw_of[act], los, err, refl, geometry=geom) / 1e9
        if scheme != "BL1":
            counts[rows, act] += 1
            lam = 1.0 / counts[rows, act] ** sc.lambda_exponent
            innov = rates if abs(mu) < MU_EPS else np.expm1(mu * rates) / mu
            r_hat[rows, act] += lam * (innov - r_hat[rows, act])
            if t + 1 >= warmup:
                z = sc.kappa * certainty_equivalent(r_hat, mu)
                probs = np.exp(z - logsumexp(z, axis=1, keepdims=True))
        if t >= eval_start:
            kept.append(rates)
    rates = np.concatenate(kept) if kept else np.array([])
    return MmwaveResult(scheme, rates, actions, _summary(rates, ccdf_grid))
