"""Effective bandwidth and Mellin-transform delay bounds for fading links.

Bit/SNR-domain convention: a bit-domain amount ``b`` maps to the SNR domain
as ``2 ** b = exp(b ln 2)``. With Shannon-rate service ``g = log2(1 + snr)``
the SNR-domain service increment is exactly ``1 + snr``, so the service
Mellin transform is ``E[(1 + snr) ** (s - 1)]``. This is the only place the
base is fixed; everything else takes bits per slot.

A queue simulator (Lindley recursion with virtual FIFO delays) serves as
the empirical check on every bound.
"""

from dataclasses import dataclass, field
import functools
import math
import warnings
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from ._numerics import golden_min, grid_golden_min, upper_gamma
from .errors import DomainError, InstabilityError, ParameterError, UnstableQueueError
from .rng import stream

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# arrival descriptions


@dataclass(frozen=True)
class LogMgf:
    """Per-slot arrival log-MGF ``theta -> log E[exp(theta a)]`` on ``theta < theta_max``.

    ``mean`` and ``peak`` (per-slot mean and supremum of ``a``) are used by
    :func:`decay_rate`; they are estimated numerically when omitted.
    """

    func: Callable[[float], float]
    theta_max: float = math.inf
    mean: float | None = None
    peak: float | None = None
    name: str = "custom"
    sampler: Callable | None = field(default=None, compare=False)

    def __call__(self, theta: float) -> float:
        if theta >= self.theta_max:
            return math.inf
        return float(self.func(theta))

    @property
    def mean_rate(self) -> float:
        if self.mean is not None:
            return self.mean
        h = 1e-6
        return (self(h) - self(-h)) / (2 * h)

    @property
    def peak_rate(self) -> float:
        if self.peak is not None:
            return self.peak
        if math.isfinite(self.theta_max):
            return math.inf
        theta = 1e6
        return self(theta) / theta

    @classmethod
    def deterministic(cls, a: float) -> "LogMgf":
        a = float(a)
        return cls(lambda th: th * a, mean=a, peak=a, name=f"deterministic({a})",
                   sampler=lambda rng, n: np.full(n, a))

    @classmethod
    def poisson(cls, lam: float) -> "LogMgf":
        lam = float(lam)
        return cls(lambda th: lam * math.expm1(th), mean=lam, peak=math.inf, name=f"poisson({lam})",
                   sampler=lambda rng, n: rng.poisson(lam, size=n).astype(float))

    @classmethod
    def bernoulli(cls, p: float, size: float = 1.0) -> "LogMgf":
        p, size = float(p), float(size)
        if not 0 <= p <= 1:
            raise ParameterError("bernoulli probability must lie in [0, 1]")
        return cls(lambda th: math.log1p(p * math.expm1(th * size)), mean=p * size,
                   peak=size if p > 0 else 0.0, name=f"bernoulli({p}, {size})",
                   sampler=lambda rng, n: size * (rng.random(n) < p))


def effective_bandwidth(lam: LogMgf, theta: float) -> float:
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if theta >= lam.theta_max:
        raise ParameterError(f"theta={theta} outside the log-MGF domain (< {lam.theta_max})")
    return lam(theta) / theta


def decay_rate(lam: LogMgf, capacity: float, rtol: float = 1e-10) -> float:
    """Queue-tail decay rate ``theta*`` solving ``Lambda(theta*) / theta* = capacity``.

    Returns ``math.inf`` when the capacity reaches the peak arrival rate
    (the queue never builds a tail). Bisection is valid because the
    effective bandwidth is non-decreasing in ``theta``.
    """
    c = float(capacity)
    if c <= lam.mean_rate:
        raise UnstableQueueError(f"capacity {c} does not exceed mean arrival rate {lam.mean_rate}")
    if c >= lam.peak_rate:
        return math.inf
    lo, hi = 0.0, 1.0
    while effective_bandwidth(lam, hi) <= c if hi < lam.theta_max else False:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return math.inf
    if hi >= lam.theta_max:
        hi = lam.theta_max * (1 - 1e-15)
        if effective_bandwidth(lam, hi) <= c:
            raise DomainError("effective bandwidth stays below capacity on the log-MGF domain")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if effective_bandwidth(lam, mid) > c:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def legendre(lam: Callable[[float], float], alpha: float, theta_limit: float = 1e8) -> float:
    """Rate function ``sup_theta [theta alpha - Lambda(theta)]``.

    The concave objective is followed uphill from 0 with a doubling step
    until it turns down, then refined by golden section. Returns
    ``math.inf`` when it is still rising linearly at ``|theta| = theta_limit``.
    """
    def g(th):
        v = lam(th)
        return th * alpha - v if math.isfinite(v) else -math.inf

    h = 1e-4
    g0 = g(0.0)
    direction = 1.0 if g(h) >= g(-h) else -1.0
    if max(g(h), g(-h)) <= g0:
        lo, hi = -h, h
    else:
        prev, cur = 0.0, direction * h
        gprev, gcur = g0, g(cur)
        while True:
            nxt = 2.0 * cur
            gnxt = g(nxt)
            if gnxt <= gcur:
                lo, hi = sorted((prev, nxt))
                break
            if abs(nxt) > theta_limit:
                # increments no longer shrinking -> unbounded
                if gnxt - gcur > 1e-9 * (1.0 + abs(gcur)):
                    return math.inf
                return gnxt
            prev, cur, gprev, gcur = cur, nxt, gcur, gnxt
    _, fmin = golden_min(lambda th: -g(th), lo, hi, xtol=1e-14)
    return max(-fmin, g0)


# --------------------------------------------------------------------------
# Mellin transforms


@dataclass(frozen=True)
class PointMass:
    k: float

    def mellin(self, s):
        if self.k > 0:
            return self.k ** (s - 1.0)
        if self.k == 0 and s > 1:
            return 0.0
        raise DomainError(f"E[0^{s - 1}] diverges")


@dataclass(frozen=True)
class Exponential:
    """``X ~ Exp(mean)``; ``E[X^(s-1)] = mean^(s-1) Gamma(s)`` for ``s > 0``."""

    mean: float

    def mellin(self, s):
        if s <= 0:
            raise DomainError(f"Mellin transform of an exponential diverges at s={s}")
        return self.mean ** (s - 1.0) * math.gamma(s)


@dataclass(frozen=True)
class OnePlusExponential:
    """``X = 1 + snr`` with ``snr ~ Exp(mean)`` (Rayleigh power).

    ``E[X^(s-1)] = exp(1/m) m^(s-1) Gamma(s, 1/m)``, finite for all real ``s``.
    """

    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ParameterError("mean SNR must be positive")

    def mellin(self, s):
        x = 1.0 / self.mean
        return math.exp(x + (s - 1.0) * math.log(self.mean)) * upper_gamma(s, x)


@dataclass(frozen=True)
class Continuous:
    """Density on ``[lower, upper]``; the transform falls back to adaptive quadrature."""

    pdf: Callable[[float], float]
    lower: float = 0.0
    upper: float = math.inf

    def mellin(self, s):
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda x: x ** (s - 1.0) * self.pdf(x), self.lower, self.upper,
                                      epsrel=1e-10, epsabs=0.0, limit=200)
        if not math.isfinite(val) or err > 1e-8 * max(abs(val), 1e-300):
            raise DomainError(f"Mellin integral does not converge at s={s}")
        return val


def mellin(dist, s: float) -> float:
    """Mellin transform ``E[X^(s-1)]`` of a non-negative random variable."""
    return float(dist.mellin(float(s)))


# --------------------------------------------------------------------------
# delay bounds


@dataclass(frozen=True)
class ArrivalEnvelope:
    """(sigma, rho) envelope in bits: ``(1/s) log E[e^{s A(tau,t)}] <= rho (t - tau) + sigma``."""

    rho: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.rho < 0 or self.sigma < 0:
            raise ParameterError("rho and sigma must be non-negative")

    def log_mellin(self, s):
        # conservative per-slot bound: burst charged to every slot
        return s * LN2 * (self.rho + self.sigma)


@dataclass(frozen=True)
class ServiceModel:
    """Per-slot service in bits.

    ``kind="constant"``: ``c`` bits every slot. ``kind="rayleigh"``:
    ``scale * log2(1 + snr)`` bits with ``snr ~ Exp(mean_snr)``.
    """

    kind: str
    c: float = 0.0
    mean_snr: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "rayleigh"):
            raise ParameterError(f"unknown service kind {self.kind!r}")
        if self.c < 0:
            raise ParameterError("service capacity must be non-negative")
        if self.kind == "rayleigh" and not (self.mean_snr > 0 and self.scale > 0):
            raise ParameterError("mean SNR and scale must be positive")

    @classmethod
    def constant(cls, c: float) -> "ServiceModel":
        return cls("constant", c=float(c))

    @classmethod
    def rayleigh(cls, mean_snr: float, scale: float = 1.0) -> "ServiceModel":
        return cls("rayleigh", mean_snr=float(mean_snr), scale=float(scale))

    @property
    def snr_distribution(self):
        return OnePlusExponential(self.mean_snr)

    def log_mellin_service(self, s: float) -> float:
        """``log M_S(1 - s)``: log of the SNR-domain service transform at ``1 - s``."""
        if self.kind == "constant":
            return -s * LN2 * self.c
        return _log_rayleigh_mellin(self.mean_snr, 1.0 - s * self.scale)

    @property
    def mean_bits(self) -> float:
        if self.kind == "constant":
            return self.c
        x = 1.0 / self.mean_snr
        # E[ln(1 + snr)] = e^x E1(x)
        return self.scale * math.exp(x) * upper_gamma(0.0, x) / LN2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.c)
        return self.scale * np.log2(1.0 + rng.exponential(self.mean_snr, size=n))


@functools.lru_cache(maxsize=65536)
def _log_rayleigh_mellin(mean_snr: float, s: float) -> float:
    return math.log(OnePlusExponential(mean_snr).mellin(s))


def _log_arrival(env, s):
    if isinstance(env, LogMgf):
        return env(s * LN2)
    return env.log_mellin(s)


def _log_product(s, env, svc):
    return _log_arrival(env, s) + svc.log_mellin_service(s)


def steady_kernel(s: float, w: int, env, svc: ServiceModel) -> float:
    """Steady-state kernel ``M_S(1-s)^w / (1 - M_A(1+s) M_S(1-s))``."""
    if not s > 0:
        raise ParameterError("kernel needs s > 0")
    if w < 0:
        raise ParameterError("delay w must be non-negative")
    lp = _log_product(s, env, svc)
    if not lp < 0:
        raise InstabilityError(f"stability violated at s={s}: product={math.exp(lp):.6g} >= 1",
                               product=math.exp(lp))
    return math.exp(w * svc.log_mellin_service(s) - math.log(-math.expm1(lp)))


def _log_kernel(s, w, env, svc):
    lp = _log_product(s, env, svc)
    if not lp < 0:
        return math.inf
    return w * svc.log_mellin_service(s) - math.log(-math.expm1(lp))


_S_MIN = 1e-4
_S_CAP = 1e3
_GRID = 200


def stability_limit(env, svc: ServiceModel) -> float:
    """Supremum of the stable ``s`` range ``(0, s_stab)``; ``inf`` when unbounded."""
    if not _log_product(_S_MIN, env, svc) < 0:
        raise InstabilityError("no s > 0 satisfies the stability condition",
                               product=math.exp(_log_product(_S_MIN, env, svc)))
    lo, hi = _S_MIN, 2 * _S_MIN
    while _log_product(hi, env, svc) < 0:
        lo, hi = hi, 2 * hi
        if hi > _S_CAP:
            return math.inf
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if _log_product(mid, env, svc) < 0:
            lo = mid
        else:
            hi = mid
    return lo


class DelayBound(NamedTuple):
    bound: float
    s: float


def delay_violation_bound(w: int, env, svc: ServiceModel) -> DelayBound:
    """``inf_{s>0}`` of the steady-state kernel, clamped to ``[0, 1]``.

    Search: 200 log-spaced points on ``[1e-4, s_stab)`` (capped at 1e3 when
    the stable range is unbounded), then golden section on ``log s``.
    """
    s_stab = stability_limit(env, svc)
    top = min(s_stab * (1 - 1e-9), _S_CAP)
    us = np.linspace(math.log(_S_MIN), math.log(top), _GRID)
    f = lambda u: _log_kernel(math.exp(u), w, env, svc)
    u, logk, _ = grid_golden_min(f, us, xtol=1e-12)
    return DelayBound(min(1.0, math.exp(logk)), math.exp(u))


# --------------------------------------------------------------------------
# simulation


@dataclass
class QueueTrace:
    q: np.ndarray
    arrivals: np.ndarray
    service: np.ndarray
    warmup: int
    delays_w: tuple
    violations: np.ndarray
    observed: np.ndarray

    @property
    def violation_frequency(self) -> np.ndarray:
        return self.violations / np.maximum(self.observed, 1)

    def stationary_q(self) -> np.ndarray:
        return self.q[self.warmup:]


_CHUNK = 1 << 16


def _lindley(x, q0):
    """Vectorised ``q_t = max(q_{t-1} + x_t, 0)``, processed in chunks to bound rounding."""
    out = np.empty_like(x)
    q = q0
    for start in range(0, x.size, _CHUNK):
        seg = x[start:start + _CHUNK]
        s = np.cumsum(seg)
        qs = s - np.minimum(np.minimum.accumulate(s), -q)
        out[start:start + seg.size] = np.maximum(qs, 0.0)
        q = out[start + seg.size - 1]
    return out


def queue_sim(arrival_sampler, service_sampler, T: int, seed: int, ws=tuple(range(1, 11)),
              warmup: int = 0, q0: float = 0.0, tol: float = 1e-7) -> QueueTrace:
    """Simulate ``q(t+1) = (q(t) + a(t+1) - c(t+1))^+`` for ``T`` slots.

    Samplers are ``(rng, n) -> array`` callables (e.g. ``LogMgf.sampler``,
    ``ServiceModel.sample``). Bits reaching the queue by the end of slot
    ``t`` violate delay ``w`` when the backlog at ``t + w`` still exceeds
    the arrivals after ``t``, i.e. FIFO departures have not covered them.
    Violation counts use slots ``t >= warmup`` with ``t + w < T``.
    """
    T = int(T)
    if T < 1:
        raise ParameterError("T must be at least 1")
    a = np.asarray(arrival_sampler(stream(seed, "queue", "arrivals"), T), dtype=float)
    c = np.asarray(service_sampler(stream(seed, "queue", "service"), T), dtype=float)
    q = _lindley(a - c, float(q0))
    cum = np.concatenate([[0.0], np.cumsum(a)])
    ws = tuple(int(w) for w in ws)
    viol = np.zeros(len(ws), dtype=np.int64)
    seen = np.zeros(len(ws), dtype=np.int64)
    for k, w in enumerate(ws):
        t = np.arange(warmup, T - w)
        if t.size == 0:
            continue
        later = cum[t + w + 1] - cum[t + 1]
        viol[k] = int(np.count_nonzero(q[t + w] - later > tol))
        seen[k] = t.size
    return QueueTrace(q=q, arrivals=a, service=c, warmup=int(warmup), delays_w=ws,
                      violations=viol, observed=seen)


def log_survival_slope(q, x_min: float = 1.0, min_count: int = 100) -> float:
    """Least-squares slope of ``log P(q >= x)`` over integer ``x >= x_min`` with enough mass."""
    q = np.sort(np.asarray(q, dtype=float))
    n = q.size
    xs, ys = [], []
    x = x_min
    while True:
        cnt = n - np.searchsorted(q, x, side="left")
        if cnt < min_count:
            break
        xs.append(x)
        ys.append(math.log(cnt / n))
        x += 1.0
    if len(xs) < 2:
        raise DomainError("not enough tail mass to estimate a slope")
    return float(np.polyfit(xs, ys, 1)[0])
