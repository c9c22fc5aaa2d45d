"""Risk measures on samples and on moment generating functions.

``alpha`` is the tail mass: ``var_empirical(xs, 0.05)`` is the 95% quantile.
Losses are large values (right tail).
"""

from dataclasses import dataclass, replace
import math
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from ._numerics import golden_min
from .errors import DomainError, ParameterError, SampleError
from .evt import as_array, fit_gpd, gpd_mean, pot_excesses

_GRID_POINTS = 81
_Z_LO = 1e-6
_Z_HI = 1e6
_Z_EXPAND = 1e3
_Z_LIMIT_HI = 1e16
_Z_LIMIT_LO = 1e-16


@dataclass(frozen=True)
class RiskLevel:
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"risk level alpha must lie in (0, 1], got {self.alpha}")


def _alpha(level) -> float:
    return level.alpha if isinstance(level, RiskLevel) else RiskLevel(float(level)).alpha


def _nonempty(xs) -> np.ndarray:
    arr = as_array(xs)
    if arr.size == 0:
        raise SampleError("empty sample")
    return arr


def var_empirical(xs, level) -> float:
    """Smallest ``t`` with empirical ``P(X <= t) >= 1 - alpha``.

    That is the ``ceil((1 - alpha) n)``-th ascending order statistic; the
    product is rounded to 9 decimals first so that e.g. ``0.95 * 100`` is 95,
    not 95.00000000000001.
    """
    alpha = _alpha(level)
    arr = np.sort(_nonempty(xs))
    n = arr.size
    k = max(math.ceil(round((1.0 - alpha) * n, 9)), 1)
    return float(arr[k - 1])


def _ru_objective(arr, t, alpha):
    return t + float(np.mean(np.maximum(arr - t, 0.0))) / alpha


def cvar_empirical(xs, level) -> float:
    """``inf_t { t + E[(X - t)^+] / alpha }`` over the empirical distribution.

    The objective is piecewise linear with kinks at the order statistics, so
    the infimum is attained at one of them. The scan uses suffix sums; the
    winning candidate is then re-evaluated directly.
    """
    alpha = _alpha(level)
    arr = _nonempty(xs)
    srt = np.sort(arr)
    n = srt.size
    y = srt - srt[-1]
    # sum_{j>k} (y_j - y_k) for each ascending index k
    suffix = np.concatenate([np.cumsum(y[::-1])[::-1][1:], [0.0]])
    tail = suffix - (n - 1 - np.arange(n)) * y
    vals = y + tail / (n * alpha)
    k = int(np.argmin(vals))
    lo, hi = max(k - 1, 0), min(k + 1, n - 1)
    return min(_ru_objective(arr, srt[j], alpha) for j in range(lo, hi + 1))


def cvar_tail_mean(xs, level) -> float:
    """Weighted mean of the top ``n * alpha`` order statistics.

    The largest ``floor(n alpha)`` values get weight 1 and the next one the
    fractional remainder; for integer ``n alpha`` this is the plain mean of
    the top ``n alpha`` values. Cross-check for :func:`cvar_empirical`.
    """
    alpha = _alpha(level)
    desc = np.sort(_nonempty(xs))[::-1]
    m = round(desc.size * alpha, 9)
    k = min(int(math.floor(m)), desc.size)
    total = float(desc[:k].sum())
    if k < desc.size and m > k:
        total += (m - k) * float(desc[k])
    return total / m


# --------------------------------------------------------------------------
# entropic VaR


@dataclass(frozen=True)
class MgfHandle:
    """Moment generating function ``z -> E[exp(z X)]`` on ``[0, z_max)``.

    Supply ``log_mgf`` whenever possible: the search works in log space and
    a plain ``mgf`` overflows long before the infimum is reached for
    light-tailed variables. ``vectorized`` marks a ``log_mgf`` that accepts
    arrays of ``z``.
    """

    mgf: Callable[[float], float] | None = None
    log_mgf: Callable | None = None
    z_max: float = math.inf
    vectorized: bool = False

    def __post_init__(self):
        if self.mgf is None and self.log_mgf is None:
            raise ParameterError("MgfHandle needs mgf or log_mgf")
        if not self.z_max > 0:
            raise ParameterError("z_max must be positive")

    def log(self, z):
        if self.log_mgf is not None:
            return self.log_mgf(z)
        with np.errstate(divide="ignore", over="ignore"):
            return math.log(self.mgf(z))


class EvarResult(NamedTuple):
    value: float
    z: float
    at_boundary: bool


def _evar_objective(mgf: MgfHandle, log_alpha: float):
    def f(u):
        z = math.exp(u)
        if z >= mgf.z_max:
            return math.inf
        try:
            lm = float(mgf.log(z))
        except (OverflowError, ValueError, ZeroDivisionError):
            return math.inf
        v = (lm - log_alpha) / z
        return v if math.isfinite(v) else math.inf
    return f


def _grid_values(mgf, f, us, log_alpha):
    if mgf.vectorized:
        zs = np.exp(us)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = (np.asarray(mgf.log_mgf(zs), dtype=float) - log_alpha) / zs
        vals[~np.isfinite(vals) | (zs >= mgf.z_max)] = np.inf
        return vals
    return np.array([f(u) for u in us])


def evar(mgf: MgfHandle, level, full_output: bool = False):
    """Entropic VaR: ``inf_{z>0} (log M(z) - log alpha) / z``.

    Bracketing on a log-``z`` grid (expanded while the optimum sits on an
    open edge), then golden-section refinement. When the infimum is only
    approached as ``z -> 0`` or ``z -> z_max``/infinity, the value at the
    extreme grid point is returned and ``at_boundary`` is set.
    """
    alpha = _alpha(level)
    log_alpha = math.log(alpha)
    f = _evar_objective(mgf, log_alpha)
    lo = math.log(_Z_LO)
    if math.isfinite(mgf.z_max):
        hi = math.log(mgf.z_max) + math.log1p(-1e-12)
        lo = min(lo, hi - math.log(1e12))
    else:
        hi = math.log(_Z_HI)

    while True:
        us = np.linspace(lo, hi, _GRID_POINTS)
        vals = _grid_values(mgf, f, us, log_alpha)
        if not np.any(np.isfinite(vals)):
            raise DomainError("MGF objective is non-finite on the whole search range")
        i = int(np.argmin(vals))
        can_grow_hi = math.isinf(mgf.z_max) and hi < math.log(_Z_LIMIT_HI)
        can_grow_lo = lo > math.log(_Z_LIMIT_LO)
        if i == len(us) - 1 and can_grow_hi:
            lo, hi = hi - math.log(_Z_EXPAND), min(hi + math.log(_Z_EXPAND) * 4, math.log(_Z_LIMIT_HI))
            continue
        if i == 0 and can_grow_lo:
            lo, hi = max(lo - math.log(_Z_EXPAND) * 4, math.log(_Z_LIMIT_LO)), lo + math.log(_Z_EXPAND)
            continue
        break

    tie = 1e-13 * (1.0 + abs(vals[i]))
    if vals[-1] - vals[i] <= tie:
        i = len(us) - 1
    elif vals[0] - vals[i] <= tie:
        i = 0
    if i in (0, len(us) - 1):
        result = EvarResult(float(vals[i]), math.exp(us[i]), True)
    else:
        u, fu = golden_min(f, us[i - 1], us[i + 1], xtol=1e-14)
        if not fu <= vals[i]:
            u, fu = us[i], vals[i]
        result = EvarResult(float(fu), math.exp(u), False)
    return result if full_output else result.value


def evar_empirical(xs, level, full_output: bool = False):
    """EVaR under the empirical distribution.

    The sample is standardised before the search and the result mapped
    back, which makes the value exactly translation- and scale-equivariant
    up to rounding and keeps the ``z`` bracket data-independent.
    """
    arr = _nonempty(xs)
    m = float(arr.mean())
    s = float(arr.std())
    if s == 0.0 or s <= 1e-14 * max(abs(m), 1.0):
        res = EvarResult(m, math.inf, True)
        return res if full_output else res.value
    y = (arr - m) / s
    log_n = math.log(y.size)

    ymax = float(np.max(np.abs(y)))

    def log_mgf(z):
        z = np.asarray(z, dtype=float)
        zy = np.multiply.outer(z, y)
        # log-mean-exp; expm1/log1p keeps precision as z -> 0 where the value ~ z^2/2
        small = z * ymax < 1.0
        out = np.where(small,
                       np.log1p(np.mean(np.expm1(np.minimum(zy, 1.0)), axis=-1)),
                       logsumexp(zy, axis=-1) - log_n)
        return float(out) if out.ndim == 0 else out

    res = evar(MgfHandle(log_mgf=log_mgf, vectorized=True), level, full_output=True)
    res = EvarResult(m + s * res.value, res.z / s, res.at_boundary)
    return res if full_output else res.value


# --------------------------------------------------------------------------
# mean-variance tracking


@dataclass(frozen=True)
class VarianceTracker:
    r_hat: float = 0.0
    v_hat: float = 0.0
    t: int = 0


def variance_update(tr: VarianceTracker, payoff: float, beta: float) -> VarianceTracker:
    """One stochastic-approximation step of the payoff variance estimate.

    The variance moves first, using the deviation from the mean estimate
    held *before* this payoff; the mean then follows on the same step size.
    """
    if not 0 < beta <= 1:
        raise ParameterError(f"learning rate must lie in (0, 1], got {beta}")
    dev = payoff - tr.r_hat
    v = tr.v_hat + beta * (dev * dev - tr.v_hat)
    r = tr.r_hat + beta * dev
    return replace(tr, r_hat=r, v_hat=max(v, 0.0), t=tr.t + 1)


# --------------------------------------------------------------------------


class LinkReport(NamedTuple):
    lhs: float
    rhs: float
    rel_err: float


def cvar_gpd_link_check(xs, level, min_samples: int = 30) -> LinkReport:
    """Compare CVaR - VaR against the mean of a GPD fitted to excesses over VaR."""
    arr = _nonempty(xs)
    v = var_empirical(arr, level)
    lhs = cvar_empirical(arr, level) - v
    params = fit_gpd(pot_excesses(arr, v), threshold=v, min_samples=min_samples)
    rhs = gpd_mean(params)
    return LinkReport(lhs, rhs, abs(lhs - rhs) / abs(rhs))
