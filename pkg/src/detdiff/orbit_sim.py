"""Monte Carlo walkers: an independent oracle for J and D.

Walkers iterate the reduced map and accumulate the integer jumps, so the
displacement S_n = sum(jumps) + x_n - x_0 never needs the unbounded lift.
At integer slope with rational bias the orbits are iterated exactly on the
lattice x = s/M - 1/2, M = 2 d Q (Q a large prime); float orbits of even
slopes would otherwise collapse after ~53/log2(a) steps.

Walker i takes its starting point from draw i of a Philox stream keyed by
the seed, so any split of the walkers across workers gives the same result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np
from scipy import stats

from . import kernels
from .map_core import HALF, MapParams, eval_map, psi

RATIONAL_DEN_CAP = 2**16


@dataclass(frozen=True)
class SimConfig:
    params: MapParams
    n_steps: int = 10_000
    n_walkers: int = 10_000
    seed: int = 0
    burn_in: int = 200
    n_batches: int = 20
    threads: int = 1

    def __post_init__(self):
        if self.burn_in < 100:
            raise ValueError("burn_in must be at least 100")
        if self.n_walkers < 2 * self.n_batches:
            raise ValueError("need at least two walkers per batch")


@dataclass
class SimEstimate:
    J: float
    D: float
    J_se: float
    D_se: float
    n_steps: int
    n_walkers: int
    D_inc: float = math.nan
    D_inc_se: float = math.nan
    method: str = "float"
    S: np.ndarray | None = field(default=None, repr=False)


def philox_uniform(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform [0, 1) doubles for stream positions start .. start+count-1."""
    bg = np.random.Philox(key=seed)
    bg.advance(start // 4)
    raw = bg.random_raw(start % 4 + count)[start % 4:]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _lattice(params: MapParams):
    """(a, c, modulus) for exact integer orbits, or None when not applicable."""
    if not params.is_integer_slope:
        return None
    a = int(params.a)
    b = Fraction(params.b).limit_denominator(RATIONAL_DEN_CAP)
    if abs(float(b) - float(params.b)) > 1e-15:
        return None
    d = b.denominator
    bound = 2**63 // ((3 * a + 4) * d)          # (1.5 a + 2) * 2 d * Q < 2^63
    Q = int(gmpy2.prev_prime(bound))
    modulus = 2 * d * Q
    c = (b - Fraction(a, 2) + HALF) * modulus
    assert c.denominator == 1
    return a, int(c), modulus


def _run(params: MapParams, x0: np.ndarray, burn: int, n_steps: int, checkpoints):
    lat = _lattice(params)
    if lat is None:
        a, b = float(params.a), float(params.b)
        _, x = kernels.walk_float(a, b, x0, burn, [burn])
        S, _ = kernels.walk_float(a, b, x, n_steps, checkpoints)
        return S, "float"
    a, c, mod = lat
    s0 = np.minimum(np.floor((x0 + 0.5) * mod), mod - 1).astype(np.int64)
    _, s = kernels.walk_modular(a, c, mod, s0, burn, [burn])
    S, _ = kernels.walk_modular(a, c, mod, s, n_steps, checkpoints)
    return S, "modular"


def simulate_walkers(params: MapParams, n_walkers: int, n_steps: int, seed: int = 0,
                     burn_in: int = 200, checkpoints=None, threads: int = 1):
    """Displacements at the checkpoints, shape (n_walkers, len(checkpoints))."""
    cps = [n_steps] if checkpoints is None else sorted(checkpoints)
    if threads <= 1:
        x0 = philox_uniform(seed, 0, n_walkers) - 0.5
        return _run(params, x0, burn_in, n_steps, cps)
    bounds = np.linspace(0, n_walkers, threads + 1).astype(int)

    def job(i):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        return _run(params, philox_uniform(seed, lo, hi - lo) - 0.5, burn_in, n_steps, cps)

    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(job, range(threads)))
    return np.vstack([p[0] for p in parts]), parts[0][1]


def displacement_series(params: MapParams, x0, n: int) -> list:
    """S_0 .. S_n along the reduced orbit; exact for Fraction inputs."""
    obs = psi(params)
    x = x0
    out = [0 * x0]
    for _ in range(n):
        out.append(out[-1] + obs(x))
        x = eval_map(params, x)
    return out


def _batched(fn, S: np.ndarray, n_batches: int) -> tuple[float, float]:
    est = fn(S)
    vals = np.array([fn(part) for part in np.array_split(S, n_batches)])
    return est, float(np.std(vals, ddof=1) / math.sqrt(n_batches))


def mc_transport(config: SimConfig, keep_samples: bool = False) -> SimEstimate:
    """Monte Carlo J and D with batch standard errors.

    D is var(S_n)/(2n).  ``D_inc`` = (var S_n - var S_{n/2}) / n removes the
    O(1/n) bias of the plain estimator and is what oracle comparisons use.
    """
    if config.n_steps < 1000:
        raise ValueError("n_steps must be at least 1000")
    n = config.n_steps
    h = n // 2
    S, method = simulate_walkers(config.params, config.n_walkers, n, config.seed,
                                 config.burn_in, [h, n], config.threads)
    B = config.n_batches
    J, J_se = _batched(lambda s: float(np.mean(s[:, 1])) / n, S, B)
    D, D_se = _batched(lambda s: float(np.var(s[:, 1], ddof=1)) / (2 * n), S, B)
    Di, Di_se = _batched(lambda s: (float(np.var(s[:, 1], ddof=1)) - float(np.var(s[:, 0], ddof=1))) / (2 * (n - h)), S, B)
    return SimEstimate(J, D, J_se, D_se, n, config.n_walkers, Di, Di_se, method,
                       S[:, 1].copy() if keep_samples else None)


@dataclass(frozen=True)
class CLTRow:
    n: int
    ks: float
    variance: float
    variance_ratio: float


def clt_check(config: SimConfig, n_grid, D: float, J: float) -> list:
    """KS distance of n^-1/2 (S_n - nJ) to N(0, 2D) for each n in n_grid."""
    S, _ = simulate_walkers(config.params, config.n_walkers, max(n_grid), config.seed,
                            config.burn_in, sorted(n_grid), config.threads)
    rows = []
    for col, n in enumerate(sorted(n_grid)):
        z = (S[:, col] - n * J) / math.sqrt(n)
        var = float(np.var(z, ddof=1))
        if D > 0:
            ks = float(stats.kstest(z, "norm", args=(0.0, math.sqrt(2 * D))).statistic)
            ratio = var / (2 * D)
        else:
            ks, ratio = math.nan, math.inf if var > 0 else 1.0
        rows.append(CLTRow(n, ks, var, ratio))
    return rows
