"""
Monte Carlo - stable subordinators and subordinate Brownian motion
Independent statistical checks of the grid heat kernels
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from api.errors import CoverageError, DomainError
from config import COVERAGE_LIMIT, NONLOCAL_THREADS
from services.heatkernel import HeatKernelGrid

logger = logging.getLogger(__name__)

CHUNK = 2 ** 16


@dataclass(frozen=True)
class PathSample:
    """S_t and X_t = W_{S_t} samples at one time; increments has shape (n, dim)"""

    alpha: float
    t: float
    subordinator_values: np.ndarray
    increments: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return int(self.subordinator_values.size)

    @property
    def dim(self) -> int:
        return int(self.increments.shape[1])


def _generator(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"stable index {alpha} outside (0, 1)", guard="0 < alpha < 1", hypothesis="phi(lambda) = lambda^alpha")


def _kanter_chunk(alpha: float, t: float, size: int, seq: np.random.SeedSequence) -> np.ndarray:
    """Positive alpha-stable draws with E exp(-lambda S) = exp(-t lambda^alpha)"""
    rng = _generator(seq)
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    body = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    tail = (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    return t ** (1.0 / alpha) * body * tail


def _stable(alpha: float, t: float, n: int, seq: np.random.SeedSequence, threads: int) -> np.ndarray:
    sizes = [min(CHUNK, n - start) for start in range(0, n, CHUNK)]
    children = seq.spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda job: _kanter_chunk(alpha, t, *job), zip(sizes, children)))
    return np.concatenate(parts) if parts else np.empty(0)


def sample_stable_subordinator(
    alpha: float,
    t: float,
    n: int,
    seed: int,
    threads: Optional[int] = None,
) -> np.ndarray:
    """n samples of S_t; chunked on disjoint Philox streams so the result ignores thread count"""
    _check_alpha(alpha)
    if not t > 0 or n < 1:
        raise DomainError("need t > 0 and n >= 1", guard="t > 0")
    values = _stable(alpha, t, n, np.random.SeedSequence(seed), threads or NONLOCAL_THREADS)
    logger.debug("subordinator sampled", extra={"alpha": alpha, "t": t, "n": n, "seed": seed})
    return values


def sample_sbm(
    alpha: float,
    t: float,
    n: int,
    dim: int = 1,
    seed: int = 0,
    threads: Optional[int] = None,
) -> PathSample:
    """X_t = sqrt(2 S_t) Z, Z standard normal; W runs at variance 2 per unit time"""
    _check_alpha(alpha)
    if not t > 0 or n < 1:
        raise DomainError("need t > 0 and n >= 1", guard="t > 0")
    if dim not in (1, 2):
        raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")
    subordinator_seq, gauss_seq = np.random.SeedSequence(seed).spawn(2)
    s = _stable(alpha, t, n, subordinator_seq, threads or NONLOCAL_THREADS)
    z = _generator(gauss_seq).standard_normal((n, dim))
    return PathSample(alpha=alpha, t=t, subordinator_values=s, increments=np.sqrt(2.0 * s)[:, None] * z, seed=seed)


# ===== LAPLACE TRANSFORM =====

@dataclass(frozen=True)
class LaplaceReport:
    rows: Tuple[Dict, ...]
    max_z: float


def laplace_transform_check(
    alpha: float,
    t: float,
    lambdas: Sequence[float] = (0.5, 1.0, 2.0),
    n: int = 100_000,
    seed: int = 0,
) -> LaplaceReport:
    """Empirical E exp(-lambda S_t) against exp(-t lambda^alpha), in standard errors"""
    s = sample_stable_subordinator(alpha, t, n, seed)
    rows = []
    for lam in lambdas:
        values = np.exp(-lam * s)
        empirical = float(values.mean())
        exact = math.exp(-t * lam ** alpha)
        stderr = float(values.std(ddof=1)) / math.sqrt(n)
        rows.append({"lambda": lam, "empirical": empirical, "exact": exact, "stderr": stderr, "z": abs(empirical - exact) / stderr})
    return LaplaceReport(rows=tuple(rows), max_z=max(row["z"] for row in rows))


# ===== KOLMOGOROV-SMIRNOV BRIDGE =====

@dataclass(frozen=True)
class KSReport:
    statistic: float
    pvalue: float
    n: int
    outside_mass: float
    wrapped: bool


def _centered_cdf(density: HeatKernelGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes on [-L/2, L/2] and the trapezoid CDF of the periodized density"""
    grid = density.grid
    if grid.dim != 1:
        raise DomainError("the KS bridge is one-dimensional", guard="dim == 1")
    values = np.fft.fftshift(grid.values)
    values = np.append(values, values[0])
    x = -grid.period / 2.0 + np.arange(values.size) * grid.dx
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * grid.dx)])
    return x, cdf / cdf[-1]


def ks_compare(samples: np.ndarray, density: HeatKernelGrid, wrap: bool = True) -> KSReport:
    """
    KS distance between samples of X_t and the grid density

    The grid holds the law of X_t mod L; wrap=True folds the samples onto the
    box, wrap=False drops the samples outside it and refuses more than 1%.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    half = density.grid.period / 2.0
    outside = np.abs(samples) >= half
    outside_mass = float(outside.mean())
    if wrap:
        points = np.mod(samples + half, 2.0 * half) - half
    else:
        if outside_mass > COVERAGE_LIMIT:
            raise CoverageError(
                f"{outside_mass:.2%} of the samples fall outside the box",
                guard="clipped mass <= 1%",
            )
        points = samples[~outside]
    x, cdf = _centered_cdf(density)
    result = stats.kstest(points, lambda v: np.interp(v, x, cdf))
    logger.info(
        "ks comparison",
        extra={"n": int(points.size), "ks": float(result.statistic), "outside_mass": outside_mass, "t": density.t},
    )
    return KSReport(
        statistic=float(result.statistic),
        pvalue=float(result.pvalue),
        n=int(points.size),
        outside_mass=outside_mass,
        wrapped=wrap,
    )


def sample_from_density(density: HeatKernelGrid, n: int, seed: int = 0) -> np.ndarray:
    """Inverse-CDF draws from the grid density on [-L/2, L/2)"""
    x, cdf = _centered_cdf(density)
    u = _generator(np.random.SeedSequence(seed)).uniform(0.0, 1.0, n)
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(u, cdf[keep], x[keep])


def ks_two_sample(first: np.ndarray, second: np.ndarray) -> float:
    return float(stats.ks_2samp(np.ravel(first), np.ravel(second)).statistic)


def export_rows(sample: PathSample) -> List[Dict]:
    """One row per draw for CSV export"""
    rows = []
    for i in range(sample.n):
        row = {"index": i, "subordinator": float(sample.subordinator_values[i])}
        for j in range(sample.dim):
            row[f"x{j + 1}"] = float(sample.increments[i, j])
        rows.append(row)
    return rows
