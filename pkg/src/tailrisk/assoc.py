"""BS-UE multi-connectivity association.

Net utility of an association ``x`` (B x U, binary)::

    sum_bu x_bu gamma_bu - vartheta * sum_b v_b - varphi * sum_u max(nu_u - 1, 0)

with ``v_b`` the number of UEs on BS ``b`` and ``nu_u`` the number of BSs
serving UE ``u``. ``convention="printed"`` evaluates the literal
alternative form ``vartheta sum v_b + varphi sum (nu_u - 1) - sum x gamma``
(unclipped), kept only for auditing; the optimizers always maximise.
"""

from dataclasses import dataclass
import math
from typing import Callable, NamedTuple

import numpy as np

from .errors import ParameterError, SizeError
from .rng import stream

BRUTE_FORCE_CAP = 20
_CONVENTIONS = ("net", "printed")


@dataclass(frozen=True)
class AssocInstance:
    gamma: np.ndarray
    vartheta: float = 1.0
    varphi: float = 1.0
    power_split: bool = False
    convention: str = "net"

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2 or g.size == 0:
            raise ParameterError("gamma must be a non-empty B x U matrix")
        if np.any(~np.isfinite(g)) or np.any(g < 0):
            raise ParameterError("gamma entries must be finite and non-negative")
        if self.vartheta < 0 or self.varphi < 0:
            raise ParameterError("costs must be non-negative")
        if self.convention not in _CONVENTIONS:
            raise ParameterError(f"convention must be one of {_CONVENTIONS}")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def B(self) -> int:
        return self.gamma.shape[0]

    @property
    def U(self) -> int:
        return self.gamma.shape[1]

    @property
    def zeta(self) -> float:
        return self.U / self.B


def _as_assoc(inst, x):
    x = np.asarray(x)
    if x.shape != inst.gamma.shape:
        raise ParameterError(f"association shape {x.shape} does not match gamma {inst.gamma.shape}")
    if not np.all((x == 0) | (x == 1)):
        raise ParameterError("association entries must be 0 or 1")
    return x.astype(np.int8)


def _values(inst: AssocInstance, X: np.ndarray) -> np.ndarray:
    """Objective for a stack of associations ``X`` of shape (N, B, U)."""
    Xf = X.astype(float)
    v = Xf.sum(axis=2)            # (N, B)
    nu = Xf.sum(axis=1)           # (N, U)
    if inst.power_split:
        g = inst.gamma[None, :, :] / np.maximum(v, 1.0)[:, :, None]
        reward = np.sum(Xf * g, axis=(1, 2))
    else:
        reward = np.einsum("nbu,bu->n", Xf, inst.gamma)
    if inst.convention == "printed":
        return inst.vartheta * v.sum(axis=1) + inst.varphi * (nu - 1.0).sum(axis=1) - reward
    return reward - inst.vartheta * v.sum(axis=1) - inst.varphi * np.maximum(nu - 1.0, 0.0).sum(axis=1)


def network_value(inst: AssocInstance, x) -> float:
    return float(_values(inst, _as_assoc(inst, x)[None])[0])


def _enumerate(B, U, start, stop):
    """Associations for integer codes in ``[start, stop)``; entry (0, 0) is the most significant bit."""
    n = B * U
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8).reshape(-1, B, U)


def brute_force_opt(inst: AssocInstance, chunk: int = 1 << 15):
    """Exhaustive maximiser; ties go to the lexicographically smallest matrix (row-major)."""
    n = inst.B * inst.U
    if n > BRUTE_FORCE_CAP:
        raise SizeError(f"B*U = {n} exceeds the brute-force cap of {BRUTE_FORCE_CAP}")
    best_val, best_code = -math.inf, -1
    total = 1 << n
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        vals = _values(inst, _enumerate(inst.B, inst.U, start, stop))
        i = int(np.argmax(vals))   # first maximiser = smallest code in this chunk
        if vals[i] > best_val:
            best_val, best_code = float(vals[i]), start + i
    x = _enumerate(inst.B, inst.U, best_code, best_code + 1)[0]
    return x, best_val


def greedy_assoc(inst: AssocInstance):
    """Add the link with the largest positive marginal gain until none is left (ties: row-major first)."""
    x = np.zeros(inst.gamma.shape, dtype=np.int8)
    cur = network_value(inst, x)
    while True:
        free = np.argwhere(x == 0)
        if free.size == 0:
            break
        cand = np.repeat(x[None], len(free), axis=0)
        cand[np.arange(len(free)), free[:, 0], free[:, 1]] = 1
        vals = _values(inst, cand)
        i = int(np.argmax(vals))
        if not vals[i] > cur:
            break
        x = cand[i]
        cur = float(vals[i])
    return x, cur


def reliability_fraction(inst: AssocInstance, x, gamma0: float) -> float:
    """Fraction of UEs whose best connected link has SNR above ``gamma0``; unconnected UEs fail."""
    x = _as_assoc(inst, x)
    best = np.where(x == 1, inst.gamma, -np.inf).max(axis=0)
    return float(np.count_nonzero(best > gamma0)) / inst.U


# --------------------------------------------------------------------------


class EbarResult(NamedTuple):
    mean: float
    stderr: float
    n: int


def rayleigh_sampler(mean_snr: float = 10.0) -> Callable:
    """i.i.d. exponential link SNRs with the given mean."""
    if not mean_snr > 0:
        raise ParameterError("mean SNR must be positive")
    return lambda rng, B, U: rng.exponential(mean_snr, size=(B, U))


def monte_carlo_ebar(B: int, U: int, sampler: Callable | None = None, vartheta: float = 1.0,
                     varphi: float = 1.0, n_draws: int = 2000, seed: int = 0,
                     method: str = "brute", power_split: bool = False) -> EbarResult:
    """Channel-averaged optimal value over ``n_draws`` i.i.d. SNR matrices.

    ``stderr`` is NaN for a single draw.
    """
    if n_draws < 1:
        raise ParameterError("n_draws must be at least 1")
    if method not in ("brute", "greedy"):
        raise ParameterError("method must be 'brute' or 'greedy'")
    if method == "brute" and B * U > BRUTE_FORCE_CAP:
        raise SizeError(f"B*U = {B * U} exceeds the brute-force cap of {BRUTE_FORCE_CAP}")
    sampler = sampler or rayleigh_sampler()
    opt = brute_force_opt if method == "brute" else greedy_assoc
    rng = stream(seed, "assoc", "channel")
    vals = np.empty(n_draws)
    for i in range(n_draws):
        inst = AssocInstance(sampler(rng, B, U), vartheta, varphi, power_split=power_split)
        vals[i] = opt(inst)[1]
    # shifting by the first draw keeps a constant sample exact
    dev = vals - vals[0]
    mean = float(vals[0] + dev.mean())
    stderr = float(dev.std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else math.nan
    return EbarResult(mean, stderr, n_draws)
