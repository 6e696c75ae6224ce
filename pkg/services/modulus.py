"""
Moduli of continuity and Bernstein functions
Evaluation, scaling indices, scaling certificates, inversion, tail integrals
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from api.errors import (
    DomainError,
    PreconditionError,
    RangeError,
    UnsupportedFamilyError,
)
from config import BERNSTEIN_MAX_ORDER, INDEX_DEPTH, INVERT_RTOL, QUAD_RTOL, TAIL_RMAX_FACTOR

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray, Sequence[float]]

# log-scale span handled numerically before the analytic power-law end pieces
_LOG_SPAN = 30.0


class Family(str, Enum):
    POWER = "power"
    POWER_LOG = "power_log"
    POWER_LOG1P = "power_log1p"
    PRODUCT = "product"
    RATIO_BY_R = "ratio_by_r"
    TABULATED = "tabulated"
    ORDER_OF = "order_of"


@dataclass(frozen=True)
class IndexInterval:
    """Estimated lower/upper scaling indices of a modulus"""

    m: float
    M: float
    depth: int

    def __post_init__(self):
        if self.m > self.M + 1e-12:
            raise ValueError("lower index exceeds upper index")

    def contains(self, value: float) -> bool:
        return self.m <= value <= self.M

    def distance_to_integer(self) -> float:
        """Distance of [m, M] to the nearest integer (0 when an integer lies inside)"""
        lo = math.ceil(self.m)
        if lo <= self.M:
            return 0.0
        return min(self.m - math.floor(self.m), lo - self.M)

    def within(self, lo: float, hi: float) -> bool:
        return lo < self.m and self.M < hi


class Modulus:
    """
    Positive, evaluable modulus on (0, r_max]

    Use the factory classmethods; values are normalized so that eval(1) = 1.
    """

    def __init__(
        self,
        family: Family,
        raw: Callable[[np.ndarray], np.ndarray],
        params: Optional[Dict] = None,
        r_max: float = math.inf,
        r_min: float = 0.0,
        factors: Tuple["Modulus", ...] = (),
        normalize: bool = True,
    ):
        self.family = Family(family)
        self.params = dict(params or {})
        self.r_max = float(r_max)
        self.r_min = float(r_min)
        self.factors = tuple(factors)
        self._raw = raw
        self._scale = 1.0
        if normalize:
            if not (self.r_min <= 1.0 <= self.r_max):
                raise DomainError(
                    f"{self.label}: normalization point r=1 lies outside the domain",
                    guard="normalization",
                    hypothesis="psi(1)=1, varphi(1)=1",
                )
            scale = float(raw(np.array([1.0]))[0])
            if not scale > 0 or not math.isfinite(scale):
                raise DomainError(f"{self.label}: value at 1 is not positive", guard="normalization")
            self._scale = scale
        self._index_cache: Dict[int, IndexInterval] = {}

    # ----- factories -----

    @classmethod
    def power(cls, alpha: float) -> "Modulus":
        alpha = float(alpha)
        return cls(Family.POWER, lambda r: np.power(r, alpha), {"alpha": alpha})

    @classmethod
    def power_log(cls, alpha: float, beta: float = 1.0, sign: int = 1) -> "Modulus":
        """r^alpha * |ln(2/r)|^(sign*beta) on (0, 1]"""
        alpha, beta, sign = float(alpha), float(beta), int(sign)
        if sign not in (-1, 1):
            raise DomainError("power_log sign must be +1 or -1", guard="family parameters")

        def raw(r):
            return np.power(r, alpha) * np.power(np.abs(np.log(2.0 / r)), sign * beta)

        return cls(Family.POWER_LOG, raw, {"alpha": alpha, "beta": beta, "sign": sign}, r_max=1.0)

    @classmethod
    def power_log1p(cls, alpha: float, beta: float) -> "Modulus":
        """s^alpha * ln(1 + s^beta) / ln 2 on (0, inf)"""
        alpha, beta = float(alpha), float(beta)

        def raw(r):
            return np.power(r, alpha) * np.log1p(np.power(r, beta)) / math.log(2.0)

        return cls(Family.POWER_LOG1P, raw, {"alpha": alpha, "beta": beta})

    @classmethod
    def product(cls, *factors: "Modulus") -> "Modulus":
        if len(factors) < 2:
            raise DomainError("a product needs at least two factors", guard="family parameters")

        def raw(r):
            out = np.ones_like(np.asarray(r, dtype=float))
            for f in factors:
                out = out * f._eval_array(r)
            return out

        return cls(
            Family.PRODUCT,
            raw,
            {},
            r_max=min(f.r_max for f in factors),
            r_min=max(f.r_min for f in factors),
            factors=tuple(factors),
        )

    @classmethod
    def ratio_by_r(cls, base: "Modulus") -> "Modulus":
        """r^-1 * base(r)"""
        return cls(
            Family.RATIO_BY_R,
            lambda r: base._eval_array(r) / r,
            {},
            r_max=base.r_max,
            r_min=base.r_min,
            factors=(base,),
        )

    @classmethod
    def tabulated(cls, r: Sequence[float], values: Sequence[float]) -> "Modulus":
        """Log-log linear interpolation between log-spaced samples; no extrapolation"""
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != values.shape or r.size < 2:
            raise DomainError("tabulated modulus needs matching 1-d sample arrays", guard="family parameters")
        if np.any(r <= 0) or np.any(values <= 0) or np.any(np.diff(r) <= 0):
            raise DomainError(
                "tabulated samples must be positive with strictly increasing r",
                guard="positivity",
            )
        log_r, log_v = np.log(r), np.log(values)

        def raw(x):
            return np.exp(np.interp(np.log(x), log_r, log_v))

        return cls(
            Family.TABULATED,
            raw,
            {"size": int(r.size)},
            r_max=float(r[-1]),
            r_min=float(r[0]),
        )

    @classmethod
    def order_of(cls, bernstein: "BernsteinSpec") -> "Modulus":
        """varphi(r) = 1 / phi(r^-2)"""
        return cls(
            Family.ORDER_OF,
            lambda r: 1.0 / bernstein.phi(np.power(r, -2.0)),
            {"bernstein": bernstein.label},
        )

    # ----- evaluation -----

    @property
    def label(self) -> str:
        if self.family in (Family.PRODUCT, Family.RATIO_BY_R):
            inner = ",".join(f.label for f in self.factors)
            return f"{self.family.value}({inner})"
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.family.value}({args})"

    def _eval_array(self, r) -> np.ndarray:
        return self._raw(np.asarray(r, dtype=float)) / self._scale

    def eval(self, r: ArrayLike):
        arr = np.asarray(r, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError(f"{self.label}: r must be positive", guard="domain (0, r_max]")
        if np.any(arr > self.r_max * (1.0 + 1e-12)):
            raise DomainError(f"{self.label}: r exceeds r_max={self.r_max}", guard="domain (0, r_max]")
        if np.any(arr < self.r_min * (1.0 - 1e-12)):
            raise DomainError(
                f"{self.label}: r below the smallest tabulated sample {self.r_min}",
                guard="no extrapolation",
            )
        out = self._eval_array(arr)
        if arr.ndim == 0:
            return float(out)
        return out

    __call__ = eval

    def bar(self) -> "Modulus":
        return Modulus.ratio_by_r(self)

    def times(self, other: "Modulus") -> "Modulus":
        return Modulus.product(self, other)

    def exact_indices(self) -> Optional[Tuple[float, float]]:
        """Closed-form indices for pure powers and their products/ratios"""
        if self.family is Family.POWER:
            a = self.params["alpha"]
            return a, a
        if self.family is Family.PRODUCT:
            parts = [f.exact_indices() for f in self.factors]
            if all(p is not None for p in parts):
                return sum(p[0] for p in parts), sum(p[1] for p in parts)
        if self.family is Family.RATIO_BY_R:
            p = self.factors[0].exact_indices()
            if p is not None:
                return p[0] - 1.0, p[1] - 1.0
        return None

    def __repr__(self) -> str:
        return f"Modulus<{self.label}>"


# ===== SCALING INDICES =====

def estimate_indices(m: Modulus, depth: int = INDEX_DEPTH) -> IndexInterval:
    """
    Dyadic estimate of (m_psi, M_psi)

    Extremes of log(m(R)/m(r))/log(R/r) over pairs r = 2^-j, R = 2^-k with
    depth//2 <= k < j <= depth. Pure powers are returned exactly.
    """
    if depth < 4:
        raise PreconditionError("index depth must be at least 4", guard="depth >= 4")
    if depth in m._index_cache:
        return m._index_cache[depth]

    exact = m.exact_indices()
    if exact is not None:
        interval = IndexInterval(exact[0], exact[1], depth)
    else:
        j_max = depth
        if m.r_min > 0:
            j_max = min(depth, int(math.floor(-math.log2(m.r_min))))
        j_min = j_max // 2
        if j_max - j_min < 2:
            raise PreconditionError(
                f"{m.label}: domain too short for a dyadic index scan",
                guard="depth >= 4",
            )
        j = np.arange(j_min, j_max + 1)
        logs = np.log(m(np.power(2.0, -j.astype(float))))
        # slope between R = 2^-k (row) and r = 2^-j (column), k < j
        num = logs[:, None] - logs[None, :]
        den = (j[None, :] - j[:, None]) * math.log(2.0)
        mask = den > 0
        slopes = num[mask] / den[mask]
        interval = IndexInterval(float(slopes.min()), float(slopes.max()), depth)

    m._index_cache[depth] = interval
    logger.debug("indices estimated", extra={"modulus": m.label, "m": interval.m, "M": interval.M})
    return interval


def local_slope(f: Callable[[np.ndarray], np.ndarray], r: float, rel_step: float = 1e-3) -> float:
    """d log f / d log r at r"""
    hi, lo = r * math.exp(rel_step), r * math.exp(-rel_step)
    return float((math.log(f(hi)) - math.log(f(lo))) / (2.0 * rel_step))


# ===== BERNSTEIN FUNCTIONS =====

class BernsteinSpec:
    """
    Bernstein function phi with zero drift, phi(1) = 1

    Families: stable(alpha) and stable_log(alpha, beta); custom callables are
    accepted without a Levy density.
    """

    def __init__(
        self,
        family: str,
        phi: Callable[[np.ndarray], np.ndarray],
        params: Optional[Dict] = None,
        levy_density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        mp_phi: Optional[Callable] = None,
    ):
        self.family = family
        self.params = dict(params or {})
        self._phi = phi
        self._levy_density = levy_density
        self._mp_phi = mp_phi
        self._mu_table: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._varphi: Optional[Modulus] = None
        value_at_one = float(np.asarray(phi(np.array([1.0])))[0])
        if abs(value_at_one - 1.0) > 1e-12:
            raise DomainError(f"{self.label}: phi(1) = {value_at_one} != 1", guard="phi(1)=1")

    @classmethod
    def stable(cls, alpha: float) -> "BernsteinSpec":
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise DomainError("stable Bernstein function needs alpha in (0,1)", guard="alpha in (0,1)")
        c = alpha / special.gamma(1.0 - alpha)
        return cls(
            "stable",
            lambda lam: np.power(lam, alpha),
            {"alpha": alpha},
            levy_density=lambda t: c * np.power(t, -1.0 - alpha),
        )

    @classmethod
    def stable_log(cls, alpha: float, beta: float) -> "BernsteinSpec":
        """phi(lam) = lam^alpha * ln(1 + lam^beta) / ln 2"""
        alpha, beta = float(alpha), float(beta)
        if not (0.0 < alpha and 0.0 < beta and alpha + beta < 1.0):
            raise DomainError(
                "stable_log needs alpha, beta > 0 and alpha + beta < 1",
                guard="scaling exponents in (0,1)",
            )
        ln2 = math.log(2.0)

        def phi(lam):
            return np.power(lam, alpha) * np.log1p(np.power(lam, beta)) / ln2

        def mp_phi(p):
            return mpmath.power(p, alpha) * mpmath.log(1 + mpmath.power(p, beta)) / mpmath.log(2)

        return cls("stable_log", phi, {"alpha": alpha, "beta": beta}, mp_phi=mp_phi)

    @classmethod
    def custom(cls, phi: Callable, levy_density: Optional[Callable] = None, label: str = "custom") -> "BernsteinSpec":
        return cls(label, phi, {}, levy_density=levy_density)

    @property
    def label(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.family}({args})"

    def phi(self, lam: ArrayLike):
        arr = np.asarray(lam, dtype=float)
        out = self._phi(arr)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def varphi(self) -> Modulus:
        if self._varphi is None:
            self._varphi = Modulus.order_of(self)
        return self._varphi

    def phi_inverse(self, y: float) -> float:
        return invert(self.phi, y)

    def levy_density(self, t: ArrayLike) -> np.ndarray:
        """Density of the Levy measure mu(dt) of the subordinator"""
        t = np.asarray(t, dtype=float)
        if self._levy_density is not None:
            return self._levy_density(t)
        if self._mp_phi is None:
            raise UnsupportedFamilyError(
                f"{self.label}: no Levy density available",
                guard="mu-density available",
            )
        log_t, log_mu = self._tabulate_mu()
        return np.exp(_extrap(np.log(t), log_t, log_mu))

    def _tabulate_mu(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Tail mu(t, inf) from the inverse Laplace transform of phi(lam)/lam,
        differentiated numerically on a log grid
        """
        if self._mu_table is not None:
            return self._mu_table
        log_t = np.linspace(math.log(1e-12), math.log(1e8), 401)
        mp_phi = self._mp_phi
        tail = np.array(
            [float(mpmath.invertlaplace(lambda p: mp_phi(p) / p, math.exp(u), method="talbot")) for u in log_t]
        )
        if np.any(tail <= 0):
            raise UnsupportedFamilyError(
                f"{self.label}: inverse Laplace transform of the tail is not positive",
                guard="phi is a Bernstein function",
            )
        slope = np.gradient(np.log(tail), log_t)
        mu = -tail * slope / np.exp(log_t)
        if np.any(mu <= 0):
            raise UnsupportedFamilyError(f"{self.label}: tabulated Levy density not positive", guard="mu >= 0")
        self._mu_table = (log_t, np.log(mu))
        logger.info("levy density tabulated", extra={"bernstein": self.label, "points": int(log_t.size)})
        return self._mu_table

    def __repr__(self) -> str:
        return f"BernsteinSpec<{self.label}>"


def _extrap(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Linear interpolation with linear (power-law) continuation at both ends"""
    out = np.interp(x, xp, fp)
    lo_slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
    hi_slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
    out = np.where(x < xp[0], fp[0] + lo_slope * (x - xp[0]), out)
    out = np.where(x > xp[-1], fp[-1] + hi_slope * (x - xp[-1]), out)
    return out


# ===== SCALING CERTIFICATES =====

@dataclass(frozen=True)
class ScalingCertificate:
    delta1: float
    delta2: float
    a1: float = 1.0
    a2: float = 1.0
    lam_max: Optional[float] = None
    r_grid: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not (0.0 < self.delta1 <= self.delta2 < 1.0):
            raise PreconditionError(
                "certificate needs 0 < delta1 <= delta2 < 1",
                guard="scaling exponents",
                hypothesis="0 < delta_1 <= delta_2 < 1",
            )
        if not (0.0 < self.a1 <= 1.0 <= self.a2):
            raise PreconditionError(
                "certificate needs a1 in (0,1] and a2 >= 1",
                guard="scaling constants",
                hypothesis="a_1 in (0,1], a_2 in [1,inf)",
            )

    @property
    def tail_constant(self) -> float:
        return 1.0 / (2.0 * self.a1 * self.delta1)


@dataclass(frozen=True)
class ScalingReport:
    holds: bool
    worst_margin: float


def _scaling_logs(b: BernsteinSpec, lam_grid: ArrayLike, r_grid: ArrayLike):
    lam = np.asarray(lam_grid, dtype=float)
    r = np.asarray(r_grid, dtype=float)
    if np.any(lam < 1.0):
        raise PreconditionError("lambda grid must lie in [1, inf)", guard="lambda >= 1")
    if np.any(r <= 0.0):
        raise PreconditionError("r grid must be positive", guard="r > 0")
    L, R = np.meshgrid(lam, r, indexing="ij")
    return L, np.log(b.phi(L * R)) - np.log(b.phi(R))


def check_scaling(
    b: BernsteinSpec,
    cert: ScalingCertificate,
    lam_grid: ArrayLike,
    r_grid: ArrayLike,
) -> ScalingReport:
    """Checks a1 lam^d1 phi(r) <= phi(lam r) <= a2 lam^d2 phi(r) pointwise (log slack)"""
    L, log_ratio = _scaling_logs(b, lam_grid, r_grid)
    lower = log_ratio - (math.log(cert.a1) + cert.delta1 * np.log(L))
    upper = (math.log(cert.a2) + cert.delta2 * np.log(L)) - log_ratio
    worst = float(min(lower.min(), upper.min()))
    return ScalingReport(holds=worst >= -1e-12, worst_margin=worst)


def fit_scaling_certificate(
    b: BernsteinSpec,
    lam_grid: ArrayLike,
    r_grid: ArrayLike,
    delta1: float,
    delta2: float,
) -> ScalingCertificate:
    """Tightest (a1, a2) for given exponents on the grid"""
    L, log_ratio = _scaling_logs(b, lam_grid, r_grid)
    a1 = min(1.0, float(np.exp((log_ratio - delta1 * np.log(L)).min())))
    a2 = max(1.0, float(np.exp((log_ratio - delta2 * np.log(L)).max())))
    return ScalingCertificate(
        delta1=delta1,
        delta2=delta2,
        a1=a1,
        a2=a2,
        lam_max=float(np.max(lam_grid)),
        r_grid=tuple(float(x) for x in np.asarray(r_grid).ravel()),
    )


# ===== BERNSTEIN CHECK =====

@dataclass(frozen=True)
class BernsteinReport:
    alternating_signs_up_to: int
    n_max: int
    first_violation: Optional[Tuple[int, float]] = None


def check_bernstein(
    b: BernsteinSpec,
    n_max: int = BERNSTEIN_MAX_ORDER,
    lam_grid: Optional[ArrayLike] = None,
) -> BernsteinReport:
    """
    Finite-order certificate of (-1)^n phi^(n) <= 0 from central differences
    """
    if n_max > 8:
        raise PreconditionError("finite differences degrade beyond order 8", guard="n_max <= 8")
    lam = np.logspace(-2, 2, 41) if lam_grid is None else np.asarray(lam_grid, dtype=float)
    step = 0.1 * lam
    for n in range(1, n_max + 1):
        k = np.arange(n + 1)
        weights = (-1.0) ** k * special.comb(n, k)
        offsets = (n / 2.0 - k)
        points = lam[:, None] + offsets[None, :] * step[:, None]
        deriv = (b.phi(points) * weights[None, :]).sum(axis=1) / step ** n
        scale = np.abs(b.phi(lam)) / lam ** n
        signed = (-1.0) ** n * deriv
        bad = signed > 1e-8 * scale
        if np.any(bad):
            at = float(lam[np.argmax(bad)])
            return BernsteinReport(alternating_signs_up_to=n - 1, n_max=n_max, first_violation=(n, at))
    return BernsteinReport(alternating_signs_up_to=n_max, n_max=n_max)


# ===== INVERSION =====

def invert(
    m: Callable[[np.ndarray], np.ndarray],
    y: float,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
) -> float:
    """Solves m(r) = y for strictly increasing m by a bracketed root search in log r"""
    if not y > 0:
        raise RangeError("target must be positive", guard="y in range")
    r_lo = lo if lo is not None else (max(m.r_min, 1e-300) if isinstance(m, Modulus) else 1e-300)
    r_hi = hi if hi is not None else (min(m.r_max, 1e300) if isinstance(m, Modulus) else 1e300)
    if r_lo <= 0.0:
        r_lo = 1e-300

    def g(u: float) -> float:
        return math.log(float(m(math.exp(u)))) - math.log(y)

    u_min, u_max = math.log(r_lo), math.log(r_hi)
    a, c = max(-1.0, u_min), min(1.0, u_max)
    if a >= c:
        a, c = u_min, u_max
    while g(a) > 0 and a > u_min:
        a = max(u_min, 2.0 * a - 1.0 if a < 0 else -1.0)
    while g(c) < 0 and c < u_max:
        c = min(u_max, 2.0 * c + 1.0 if c > 0 else 1.0)
    ga, gc = g(a), g(c)
    if ga > 0 or gc < 0:
        raise RangeError(f"value {y} outside the range of the function", guard="y in range")
    if ga == 0:
        return math.exp(a)
    if gc == 0:
        return math.exp(c)
    u = optimize.brentq(g, a, c, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    r = math.exp(u)
    value = float(m(r))
    if abs(value - y) > max(INVERT_RTOL, 1e-13 * abs(u) + 1e-14) * y * 10:
        logger.warning("inversion tolerance not met", extra={"target": y, "value": value})
    return r


# ===== INTEGRALS WITH POWER-LAW ENDS =====

def integrate_from_zero(g: Callable[[np.ndarray], np.ndarray], r0: float, rtol: float = QUAD_RTOL) -> float:
    """int_0^r0 g(rho) d rho for g behaving like a power at 0 (log substitution + analytic end)"""
    u0 = math.log(r0)
    u_lo = u0 - _LOG_SPAN
    body, _ = integrate.quad(lambda u: float(g(math.exp(u))) * math.exp(u), u_lo, u0, epsrel=rtol, epsabs=0.0, limit=400)
    rho = math.exp(u_lo)
    s = local_slope(g, rho)
    if s <= -1.0:
        raise PreconditionError("integral diverges at 0", guard="integrability at 0")
    return body + float(g(rho)) * rho / (s + 1.0)


def integrate_to_infinity(g: Callable[[np.ndarray], np.ndarray], r0: float, r_max: Optional[float] = None, rtol: float = QUAD_RTOL) -> float:
    """int_r0^inf g(rho) d rho for g behaving like a power at infinity"""
    u0 = math.log(r0)
    u_hi = math.log(r_max) if r_max is not None else u0 + _LOG_SPAN
    body, _ = integrate.quad(lambda u: float(g(math.exp(u))) * math.exp(u), u0, u_hi, epsrel=rtol, epsabs=0.0, limit=400)
    rho = math.exp(u_hi)
    s = local_slope(g, rho)
    if s >= -1.0:
        raise PreconditionError("integral diverges at infinity", guard="integrability at infinity")
    return body + float(g(rho)) * rho / (-s - 1.0)


def tail_integral(varphi: Modulus, r: float, r_max: Optional[float] = None) -> float:
    """int_r^inf ds / (s varphi(s)), quadrature to r_max plus power-law remainder"""
    if not math.isinf(varphi.r_max):
        raise DomainError(f"{varphi.label}: tail integral needs a modulus on (0, inf)", guard="domain (0, inf)")
    indices = estimate_indices(varphi)
    if indices.m <= 0.0:
        raise PreconditionError(
            f"{varphi.label}: lower index {indices.m:.3f} <= 0, tail integral diverges",
            guard="m_varphi > 0",
            hypothesis="int_r^inf ds/(s varphi(s)) <= C/varphi(r)",
        )
    if r_max is None:
        r_max = max(r, 1.0) * TAIL_RMAX_FACTOR
    return integrate_to_infinity(lambda s: 1.0 / (s * varphi(s)), r, r_max=r_max)


def tail_bound(varphi: Modulus, r: float, cert: ScalingCertificate) -> float:
    """C / varphi(r) with C = 1/(2 a1 delta1)"""
    return cert.tail_constant / float(varphi(r))
