"""
Lévy kernels - jump densities of subordinate Brownian motion and coefficient fields
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import ndimage, special

from api.errors import ConfigError, DomainError, SingularityError
from config import DEFAULT_PERIOD, QUAD_RTOL
from services.modulus import (
    BernsteinSpec,
    Modulus,
    integrate_from_zero,
    integrate_to_infinity,
    tail_integral,
)

logger = logging.getLogger(__name__)

# a(x, h) with x, h of shape (dim, ...) broadcastable; returns shape (...)
CoefficientFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 for dim 1)"""
    return 2.0 * math.pi ** (dim / 2.0) / special.gamma(dim / 2.0)


def periodic_distance(x: np.ndarray, period: float) -> np.ndarray:
    """|x| on the torus [0, L)^dim; component axis first"""
    x = np.asarray(x, dtype=float)
    wrapped = np.mod(x + period / 2.0, period) - period / 2.0
    return np.sqrt(np.sum(wrapped ** 2, axis=0))


# ===== COEFFICIENTS =====

@dataclass(frozen=True)
class KernelCoefficient:
    """
    Coefficient a(x, h) of a nonlocal kernel with its structural constants

    signed=True marks differences a(x,h) - a(x0,h), which need no positive
    lower bound.
    """

    a: CoefficientFn
    lambda1: float
    lambda2: float
    lambda3: float = 1.0
    symmetric_in_h: bool = True
    psi_cont: Modulus = Modulus.power(1.0)
    depends_on_x: bool = True
    label: str = "custom"
    signed: bool = False

    def __post_init__(self):
        if self.lambda1 > self.lambda2:
            raise DomainError("coefficient bounds need lambda1 <= lambda2", guard="0 < Lambda_1 <= Lambda_2")
        if not self.signed and not self.lambda1 > 0:
            raise DomainError("coefficient lower bound must be positive", guard="0 < Lambda_1 <= Lambda_2")
        if not self.lambda3 > 0:
            raise DomainError("continuity constant must be positive", guard="Lambda_3 > 0")

    def __call__(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        out = self.a(x, h)
        shape = np.broadcast_shapes(x.shape[1:], h.shape[1:])
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    def frozen(self, x0: Sequence[float]) -> "KernelCoefficient":
        """a0(h) = a(x0, h)"""
        point = np.asarray(x0, dtype=float).reshape(-1)
        a = self.a

        def frozen_a(x, h):
            h = np.asarray(h, dtype=float)
            anchor = point.reshape((-1,) + (1,) * (h.ndim - 1))
            return a(np.broadcast_to(anchor, (point.size,) + h.shape[1:]), h)

        return replace(self, a=frozen_a, depends_on_x=False, label=f"{self.label}@x0={point.tolist()}")

    def perturbation(self, x0: Sequence[float]) -> "KernelCoefficient":
        """b(x, h) = a(x, h) - a(x0, h)"""
        frozen = self.frozen(x0)
        a = self.a
        spread = self.lambda2 - self.lambda1
        return replace(
            self,
            a=lambda x, h: a(x, h) - frozen.a(x, h),
            lambda1=-spread,
            lambda2=spread,
            signed=True,
            label=f"{self.label}-frozen",
        )

    # ----- factories -----

    @classmethod
    def constant(cls, value: float = 1.0) -> "KernelCoefficient":
        value = float(value)
        return cls(
            a=lambda x, h: np.full(np.broadcast_shapes(np.shape(x)[1:], np.shape(h)[1:]), value),
            lambda1=value,
            lambda2=value,
            depends_on_x=False,
            label=f"constant({value})",
        )

    @classmethod
    def cosine(cls, amplitude: float = 0.5, axis: int = 0) -> "KernelCoefficient":
        """1 + amplitude * cos(x_axis); Lipschitz with constant amplitude"""
        amplitude = float(amplitude)
        if not 0 <= amplitude < 1:
            raise DomainError("cosine amplitude must lie in [0, 1)", guard="0 < Lambda_1")
        return cls(
            a=lambda x, h: 1.0 + amplitude * np.cos(x[axis]),
            lambda1=1.0 - amplitude,
            lambda2=1.0 + amplitude,
            lambda3=amplitude or 1.0,
            label=f"cos({amplitude})",
        )

    @classmethod
    def bump(
        cls,
        amplitude: float = 0.5,
        psi: Optional[Modulus] = None,
        width: float = 1.0,
        period: float = DEFAULT_PERIOD,
    ) -> "KernelCoefficient":
        """1 + amplitude * psi(min(dist(x,0), 1)) * (2 B(h/width) - 1) with an even bump B, max B = 1"""
        amplitude = float(amplitude)
        psi = psi or Modulus.power(0.5)
        if not 0 <= amplitude < 1:
            raise DomainError("bump amplitude must lie in [0, 1)", guard="0 < Lambda_1")

        def a(x, h):
            dist = np.minimum(periodic_distance(x, period), 1.0)
            weight = np.where(dist > 0, psi(np.maximum(dist, 1e-300)), 0.0)
            rho = np.sqrt(np.sum(np.asarray(h, dtype=float) ** 2, axis=0)) / width
            inside = rho < 1.0
            b = np.zeros_like(rho)
            b[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
            return 1.0 + amplitude * weight * (2.0 * b - 1.0)

        return cls(
            a=a,
            lambda1=1.0 - amplitude,
            lambda2=1.0 + amplitude,
            lambda3=amplitude or 1.0,
            psi_cont=psi,
            label=f"bump({amplitude},{psi.label})",
        )

    @classmethod
    def step(cls, jump: float = 0.5, period: float = DEFAULT_PERIOD) -> "KernelCoefficient":
        """1 + jump on x_1 mod L < L/2; discontinuous in x"""
        jump = float(jump)
        return cls(
            a=lambda x, h: 1.0 + jump * (np.mod(x[0], period) < period / 2.0),
            lambda1=1.0,
            lambda2=1.0 + jump,
            lambda3=jump or 1.0,
            label=f"step({jump})",
        )

    @classmethod
    def asymmetric(cls, amplitude: float = 0.3, width: float = 0.5) -> "KernelCoefficient":
        """1 + amplitude * tanh(h_1/width); odd part in h, constant in x"""
        amplitude = float(amplitude)
        return cls(
            a=lambda x, h: 1.0 + amplitude * np.tanh(np.asarray(h, dtype=float)[0] / width),
            lambda1=1.0 - amplitude,
            lambda2=1.0 + amplitude,
            symmetric_in_h=False,
            depends_on_x=False,
            label=f"asymmetric({amplitude})",
        )

    @classmethod
    def tabulated(
        cls,
        values: np.ndarray,
        period: float = DEFAULT_PERIOD,
        lambda3: float = 1.0,
        psi: Optional[Modulus] = None,
    ) -> "KernelCoefficient":
        """x-dependent field sampled on a periodic grid, linear interpolation, independent of h"""
        table = np.asarray(values, dtype=float)
        if table.ndim not in (1, 2) or np.any(~np.isfinite(table)):
            raise DomainError("tabulated coefficient needs finite 1-d or 2-d samples", guard="finite values")
        n = table.shape[0]
        dx = period / n

        def a(x, h):
            x = np.asarray(x, dtype=float)
            idx = np.mod(x, period) / dx
            if table.ndim == 1:
                out = ndimage.map_coordinates(table, idx[:1].reshape(1, -1), order=1, mode="grid-wrap")
            else:
                out = ndimage.map_coordinates(table, idx[:2].reshape(2, -1), order=1, mode="grid-wrap")
            out = out.reshape(x.shape[1:])
            return out

        return cls(
            a=a,
            lambda1=float(table.min()),
            lambda2=float(table.max()),
            lambda3=lambda3,
            psi_cont=psi or Modulus.power(1.0),
            label=f"tabulated(n={n})",
        )


COEFFICIENT_FACTORIES: Dict[str, Callable[..., KernelCoefficient]] = {
    "constant": KernelCoefficient.constant,
    "cosine": KernelCoefficient.cosine,
    "bump": KernelCoefficient.bump,
    "step": KernelCoefficient.step,
    "asymmetric": KernelCoefficient.asymmetric,
    "tabulated": KernelCoefficient.tabulated,
}


def coefficient_from_spec(kind: str, **params) -> KernelCoefficient:
    """Builds a coefficient from the config whitelist"""
    factory = COEFFICIENT_FACTORIES.get(kind)
    if factory is None:
        raise ConfigError(f"unknown coefficient kind '{kind}'; expected one of {sorted(COEFFICIENT_FACTORIES)}")
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for coefficient '{kind}': {exc}") from exc


# ===== COEFFICIENT VERIFICATION =====

@dataclass(frozen=True)
class CoefficientReport:
    bounds_ok: bool
    continuity_ok: bool
    symmetry_ok: bool
    worst_lower: float
    worst_upper: float
    worst_continuity: float
    worst_asymmetry: float

    @property
    def ok(self) -> bool:
        return self.bounds_ok and self.continuity_ok and self.symmetry_ok


def _directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    theta = np.arange(count) * (2.0 * np.pi / count)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def verify_coefficient(
    k: KernelCoefficient,
    dim: int = 1,
    n: int = 32,
    period: float = DEFAULT_PERIOD,
    rtol: float = 1e-6,
) -> CoefficientReport:
    """Scans (x, z, h) samples for the bounds, psi-continuity and symmetry constants"""
    axis = np.arange(n) * (period / n)
    if dim == 1:
        x = axis.reshape(1, -1)
    else:
        x = np.stack([g.ravel() for g in np.meshgrid(axis, axis, indexing="ij")])
    directions = _directions(dim, 8)
    radii = np.logspace(-3, 1, 9)
    shifts = np.logspace(-6, 0, 13)

    lower, upper, continuity, asymmetry = math.inf, -math.inf, 0.0, 0.0
    for e in directions:
        for r in radii:
            h = np.broadcast_to((r * e).reshape(dim, 1), x.shape)
            values = k(x, h)
            lower = min(lower, float(values.min()))
            upper = max(upper, float(values.max()))
            asymmetry = max(asymmetry, float(np.max(np.abs(values - k(x, -h)))))
            for z_dir in directions:
                for s in shifts:
                    z = (s * z_dir).reshape(dim, 1)
                    diff = np.abs(k(x - z, h) - values)
                    continuity = max(continuity, float(diff.max()) / float(k.psi_cont(s)))

    bounds_ok = lower >= k.lambda1 - 1e-12 and upper <= k.lambda2 + 1e-12
    continuity_ok = continuity <= k.lambda3 * (1.0 + rtol)
    symmetry_ok = (asymmetry <= 1e-12) if k.symmetric_in_h else True
    report = CoefficientReport(
        bounds_ok=bounds_ok,
        continuity_ok=continuity_ok,
        symmetry_ok=symmetry_ok,
        worst_lower=lower,
        worst_upper=upper,
        worst_continuity=continuity,
        worst_asymmetry=asymmetry,
    )
    logger.debug("coefficient verified", extra={"coefficient": k.label, "ok": report.ok})
    return report


# ===== JUMP DENSITY =====

def fractional_laplacian_constant(beta: float, dim: int) -> float:
    """C with (-Delta)^{beta/2} u(x) = C p.v. int (u(x) - u(x+h)) |h|^{-d-beta} dh"""
    if not 0 < beta < 2:
        raise DomainError("fractional order must lie in (0, 2)", guard="beta in (0,2)")
    return (
        beta
        * 2.0 ** (beta - 1.0)
        * special.gamma((dim + beta) / 2.0)
        / (math.pi ** (dim / 2.0) * special.gamma(1.0 - beta / 2.0))
    )


def _jump_density_scalar(b: BernsteinSpec, r: float, dim: int) -> float:
    def integrand(t):
        return (4.0 * math.pi * t) ** (-dim / 2.0) * math.exp(-r * r / (4.0 * t)) * float(b.levy_density(t))

    # e^{-r^2/4t} < 1e-300 below r^2 e^-8
    t0 = r * r * math.exp(-8.0)
    return integrate_to_infinity(integrand, t0, r_max=r * r * math.exp(60.0), rtol=QUAD_RTOL)


def jump_density(b: BernsteinSpec, r, dim: int = 1):
    """j(r) = int_0^inf (4 pi t)^{-d/2} e^{-r^2/4t} mu(dt), by log-scale quadrature"""
    b.levy_density(1.0)  # UnsupportedFamilyError without a density
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0):
        raise SingularityError("jump density is singular at r = 0", guard="r > 0")
    values = np.array([_jump_density_scalar(b, float(v), dim) for v in arr.ravel()]).reshape(arr.shape)
    return float(values) if arr.ndim == 0 else values


@dataclass(frozen=True)
class ComparabilityReport:
    c0: float
    lower: float
    upper: float
    r_grid: tuple


def comparability_constant(b: BernsteinSpec, dim: int = 1, r_grid: Optional[Sequence[float]] = None) -> ComparabilityReport:
    """C0 with C0^-1 <= j(r) r^d varphi(r) <= C0 on the r grid"""
    r = np.power(2.0, np.linspace(-10, 3, 27)) if r_grid is None else np.asarray(r_grid, dtype=float)
    product = jump_density(b, r, dim) * r ** dim * b.varphi(r)
    lower, upper = float(product.min()), float(product.max())
    return ComparabilityReport(
        c0=max(upper, 1.0 / lower),
        lower=lower,
        upper=upper,
        r_grid=tuple(float(v) for v in r),
    )


# ===== KERNELS =====

@dataclass(frozen=True)
class LevyKernel:
    """a(x,h) / (|h|^dim varphi(|h|))"""

    varphi: Modulus
    dim: int = 1
    coefficient: KernelCoefficient = KernelCoefficient.constant(1.0)
    bernstein: Optional[BernsteinSpec] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")

    @classmethod
    def from_bernstein(
        cls,
        b: BernsteinSpec,
        dim: int = 1,
        coefficient: Optional[KernelCoefficient] = None,
    ) -> "LevyKernel":
        return cls(b.varphi, dim, coefficient or KernelCoefficient.constant(1.0), b)

    def frozen(self, x0: Sequence[float]) -> "LevyKernel":
        return replace(self, coefficient=self.coefficient.frozen(x0))

    def radial(self, r):
        """Kernel of the a = 1 operator as a function of |h|"""
        r = np.asarray(r, dtype=float)
        return 1.0 / (r ** self.dim * self.varphi(r))

    def __call__(self, x, h):
        return kernel_value(self, x, h)


def _as_points(v, dim: int) -> np.ndarray:
    """Component axis first; bare scalars and flat arrays are 1-d points"""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0 or (dim == 1 and arr.shape[0] != 1):
        arr = arr.reshape((1,) + arr.shape)
    if arr.shape[0] != dim:
        raise DomainError(f"points need {dim} components on the first axis", guard="dim")
    return arr


def kernel_value(k: LevyKernel, x, h):
    """a(x,h) / (|h|^dim varphi(|h|)); x, h with the component axis first"""
    x = _as_points(x, k.dim)
    h = _as_points(h, k.dim)
    r = np.sqrt(np.sum(h ** 2, axis=0))
    if np.any(r == 0):
        raise SingularityError("kernel is singular at h = 0", guard="h != 0")
    out = k.coefficient(x, h) / (r ** k.dim * k.varphi(r))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class IntegrabilityReport:
    inner: float
    outer: float
    total: float
    truncated: tuple


def levy_integrability(k: LevyKernel, outer: Sequence[float] = (2.0, 8.0, 32.0, 128.0)) -> IntegrabilityReport:
    """int (1 ^ |h|^2) |h|^-d varphi(|h|)^-1 dh scaled by Lambda_2, with truncations at growing radii"""
    area = sphere_area(k.dim) * k.coefficient.lambda2
    varphi = k.varphi
    inner = area * integrate_from_zero(lambda r: r / varphi(r), 1.0)
    tail = area * tail_integral(varphi, 1.0)
    truncated = []
    for radius in outer:
        partial = area * (tail_integral(varphi, 1.0) - tail_integral(varphi, float(radius)))
        truncated.append(inner + partial)
    return IntegrabilityReport(inner=inner, outer=tail, total=inner + tail, truncated=tuple(truncated))
