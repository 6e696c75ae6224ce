"""
Nonlocal operators - direct quadrature of L0, L, B and the commutator term H on periodic grids
Cutoffs, freezing at a point, the auxiliary integral
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from api.errors import ConfigurationError, DomainError, GridMismatchError, PreconditionError, UnsupportedFamilyError
from config import ANGLES, COMPENSATOR_GUARD, INNER_CUTOFF_CELLS, OUTER_CUTOFF, SHELLS_PER_DECADE, TAIL_TOL, TAYLOR_RADIUS
from services.funcspace import GridFunction, GridSpec, HolderReport, holder_norm
from services.heatkernel import SymbolTable, hankel_tail
from services.levykernel import KernelCoefficient, LevyKernel, periodic_distance, sphere_area
from services.modulus import Modulus, estimate_indices, integrate_from_zero, integrate_to_infinity, tail_integral

logger = logging.getLogger(__name__)

# kappa r where the asymptotic J0 tail takes over
_HANKEL_START = 200.0
# radii sampled to classify the h-dependence of a coefficient
_SAMPLE_RADII = (1e-3, 0.1, 0.7, 1.9, 5.0)


# ===== OPERATOR SETUP =====

class Compensator(str, Enum):
    NONE = "none"
    GRADIENT = "gradient"


def choose_compensator(varphi: Modulus) -> Compensator:
    """None below M_varphi = 1, gradient on [1, 2); a guard band below 1 is refused"""
    upper = estimate_indices(varphi).M
    if upper >= 1.0:
        return Compensator.GRADIENT
    if upper > 1.0 - COMPENSATOR_GUARD:
        raise ConfigurationError(
            f"{varphi.label}: upper index {upper:.4f} within {COMPENSATOR_GUARD} of 1",
            guard="|M_varphi - 1| > 0.02",
            hypothesis="M_varphi < 1 (no compensator) or 1 <= M_varphi < 2 (gradient term)",
        )
    return Compensator.NONE


@dataclass(frozen=True)
class QuadratureSettings:
    """
    Band split of the h-integral

    inner_cutoff overrides the cell rule h0 = min(cells * dx, 0.25 / |xi|_max).
    """

    inner_cutoff_cells: float = INNER_CUTOFF_CELLS
    inner_cutoff: Optional[float] = None
    outer_cutoff: float = OUTER_CUTOFF
    shells_per_decade: int = SHELLS_PER_DECADE
    angles: int = ANGLES
    tail_tol: float = TAIL_TOL

    def __post_init__(self):
        if not self.inner_cutoff_cells > 0:
            raise DomainError("inner_cutoff_cells must be positive", guard="inner cutoff > 0")
        if self.inner_cutoff is not None and not 0 < self.inner_cutoff < 1:
            raise DomainError("inner_cutoff must lie in (0, 1)", guard="0 < h0 < 1")
        if self.outer_cutoff < 1.0:
            raise DomainError("outer_cutoff must be at least 1", guard="R_out >= 1")
        if self.shells_per_decade < 1 or self.angles < 1:
            raise DomainError("shells_per_decade and angles must be positive", guard="quadrature resolution")
        if not 0 < self.tail_tol < 1:
            raise DomainError("tail_tol must lie in (0, 1)", guard="0 < tail_tol < 1")


@dataclass(frozen=True)
class OperatorSpec:
    """Kernel, compensator and quadrature of one nonlocal operator"""

    kernel: LevyKernel
    compensator: Compensator
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        varphi = self.kernel.varphi
        indices = estimate_indices(varphi)
        if indices.M >= 2.0:
            raise ConfigurationError(
                f"{varphi.label}: upper index {indices.M:.3f} >= 2",
                guard="M_varphi < 2",
                hypothesis="int min(1, |h|^2) kernel(h) dh < inf",
            )
        if self.compensator is Compensator.NONE and indices.M > 1.0 - COMPENSATOR_GUARD:
            raise ConfigurationError(
                f"{varphi.label}: upper index {indices.M:.3f} needs the gradient compensator",
                guard="compensator consistent with M_varphi",
                hypothesis="M_varphi < 1 for the uncompensated operator",
            )
        if self.compensator is Compensator.GRADIENT and indices.M < 1.0:
            raise ConfigurationError(
                f"{varphi.label}: upper index {indices.M:.3f} < 1 takes no gradient compensator",
                guard="compensator consistent with M_varphi",
            )
        if not self.kernel.coefficient.symmetric_in_h and indices.m <= 1.0 <= indices.M:
            raise ConfigurationError(
                f"1 lies in the index interval [{indices.m:.3f}, {indices.M:.3f}] of {varphi.label}",
                guard="a(x,h) = a(x,-h) when 1 in I_varphi",
                hypothesis="symmetric coefficient when m_varphi <= 1 <= M_varphi",
            )

    @classmethod
    def for_kernel(
        cls,
        kernel: LevyKernel,
        quadrature: Optional[QuadratureSettings] = None,
        compensator: Optional[Compensator] = None,
    ) -> "OperatorSpec":
        return cls(kernel, compensator or choose_compensator(kernel.varphi), quadrature or QuadratureSettings())

    def with_coefficient(self, coefficient: KernelCoefficient) -> "OperatorSpec":
        return replace(self, kernel=replace(self.kernel, coefficient=coefficient))


@dataclass(frozen=True)
class FrozenDecomposition:
    """L = L0 + B with L0 frozen at x0 and B carried by b(x,h) = a(x,h) - a(x0,h)"""

    x0: Tuple[float, ...]
    frozen: OperatorSpec
    perturbation: OperatorSpec


def freeze(spec: OperatorSpec, x0: Sequence[float]) -> FrozenDecomposition:
    point = tuple(float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float)))
    if len(point) != spec.kernel.dim:
        raise DomainError(f"x0 needs {spec.kernel.dim} components", guard="dim")
    coefficient = spec.kernel.coefficient
    return FrozenDecomposition(
        x0=point,
        frozen=spec.with_coefficient(coefficient.frozen(point)),
        perturbation=spec.with_coefficient(coefficient.perturbation(point)),
    )


# ===== COEFFICIENT PROFILE =====

@dataclass(frozen=True)
class CoefficientProfile:
    h_independent: bool
    isotropic: bool


def _directions(dim: int, angles: int) -> Tuple[np.ndarray, float]:
    """Unit vectors over a half circle and their angular weight"""
    if dim == 1:
        return np.ones((1, 1)), 1.0
    theta = (np.arange(angles) + 0.5) * math.pi / angles
    return np.stack([np.cos(theta), np.sin(theta)], axis=1), math.pi / angles


def coefficient_profile(coefficient: KernelCoefficient, dim: int) -> CoefficientProfile:
    """Samples a(x, h) on a few points for dependence on h and on its direction"""
    x = np.array([[0.3, 1.7, 4.1], [2.2, 0.9, 5.3]])[:dim]
    units, _ = _directions(dim, 6)
    units = np.concatenate([units, -units])
    samples = np.array(
        [[coefficient(x, np.outer(radius * e, np.ones(3))) for e in units] for radius in _SAMPLE_RADII]
    )
    scale = max(float(np.max(np.abs(samples))), 1e-300)
    isotropic = bool(np.max(np.abs(samples - samples[:, :1])) <= 1e-12 * scale)
    h_independent = bool(np.max(np.abs(samples - samples[:1, :1])) <= 1e-12 * scale)
    return CoefficientProfile(h_independent=h_independent, isotropic=isotropic)


def _sample(coefficient: KernelCoefficient, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    hh = np.broadcast_to(h.reshape((-1,) + (1,) * (x.ndim - 1)), x.shape)
    return np.asarray(coefficient(x, hh), dtype=float)


# ===== QUADRATURE RULE =====

@lru_cache(maxsize=None)
def _gauss_legendre(m: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(m)


@dataclass(frozen=True)
class Shell:
    lo: float
    hi: float
    nodes: np.ndarray
    weights: np.ndarray  # dr-weights times w(r)

    @property
    def radius(self) -> float:
        return math.sqrt(self.lo * self.hi)


class QuadratureRule:
    """
    Band split of the h-integral for one (varphi, compensator, grid, settings)

    |h| < h0: Taylor model through fourth order from spectral derivatives.
    h0 <= |h| <= R_out: log-radial shells, Gauss-Legendre in log r per shell.
    |h| > R_out: oscillatory Fourier/Hankel integrals to infinity.
    Translations act as the multipliers e^{i h.xi}, so every band of the
    symmetric operator is a Fourier multiplier on the grid.
    """

    def __init__(self, varphi: Modulus, compensator: Compensator, grid: GridSpec, settings: QuadratureSettings):
        self.varphi = varphi
        self.compensator = compensator
        self.grid = grid
        self.settings = settings
        self.dim = grid.dim
        self.kappa = grid.frequency_norm()
        self.kappa_max = float(self.kappa.max())
        if settings.inner_cutoff is not None:
            h0 = settings.inner_cutoff
        else:
            h0 = min(settings.inner_cutoff_cells * grid.dx, TAYLOR_RADIUS / self.kappa_max)
        self.h0 = float(min(h0, 0.5))
        self.r_out = settings.outer_cutoff
        self.far_radius = 2.0 * self.r_out

        orders = (1, 2, 3, 4, 6) if compensator is Compensator.NONE else (2, 3, 4, 6)
        self.moments: Dict[int, float] = {
            p: integrate_from_zero(lambda r, p=p: r ** p * self.w(r), self.h0, rtol=1e-11) for p in orders
        }
        self.far_mass = integrate_to_infinity(self.w, self.r_out, rtol=1e-11)
        self.shells = self._build_shells()
        logger.debug(
            "quadrature rule built",
            extra={
                "varphi": varphi.label,
                "n": grid.n,
                "dim": grid.dim,
                "h0": self.h0,
                "shells": len(self.shells),
                "nodes": int(sum(s.nodes.size for s in self.shells)),
            },
        )

    def w(self, r):
        """Radial weight 1/(r varphi(r)) of the h-integral in polar form"""
        return 1.0 / (r * self.varphi(r))

    def _build_shells(self) -> List[Shell]:
        decades = math.log10(self.r_out / self.h0)
        count = max(1, int(math.ceil(self.settings.shells_per_decade * decades)))
        edges = np.geomspace(self.h0, self.r_out, count + 1)
        if self.h0 < 1.0 < self.r_out:
            edges = np.unique(np.concatenate([edges, [1.0]]))
        shells = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            # products of two shifted differences oscillate at up to 2 |xi|_max
            phase = 2.0 * self.kappa_max * (hi - lo)
            x, wq = _gauss_legendre(8 + int(math.ceil(0.6 * phase)))
            half = 0.5 * math.log(hi / lo)
            u = half * x + 0.5 * math.log(hi * lo)
            r = np.exp(u)
            shells.append(Shell(float(lo), float(hi), r, half * wq * r * self.w(r)))
        return shells

    # ----- symmetric multipliers -----

    def _distinct_kappa(self) -> Tuple[np.ndarray, np.ndarray]:
        distinct, inverse = np.unique(np.round(self.kappa.ravel(), 12), return_inverse=True)
        return distinct, inverse.reshape(self.kappa.shape)

    def _radial_kernel(self, kr: np.ndarray) -> np.ndarray:
        """Full-sphere average of e^{i h.xi} - 1 at |h||xi| = kr"""
        if self.dim == 1:
            return -4.0 * np.sin(0.5 * kr) ** 2
        return 2.0 * math.pi * (special.j0(kr) - 1.0)

    @cached_property
    def inner_multiplier(self) -> np.ndarray:
        k2 = self.kappa ** 2
        m2, m4 = self.moments[2], self.moments[4]
        if self.dim == 1:
            return -k2 * m2 + k2 * k2 * m4 / 12.0
        return -0.5 * math.pi * k2 * m2 + math.pi * k2 * k2 * m4 / 32.0

    @cached_property
    def shell_multipliers(self) -> np.ndarray:
        distinct, inverse = self._distinct_kappa()
        table = np.empty((len(self.shells), distinct.size))
        for j, shell in enumerate(self.shells):
            table[j] = shell.weights @ self._radial_kernel(np.outer(shell.nodes, distinct))
        return table[:, inverse]

    @cached_property
    def far_multiplier(self) -> np.ndarray:
        distinct, inverse = self._distinct_kappa()
        values = np.array([self._far_value(float(k)) for k in distinct])
        return values[inverse]

    def _far_value(self, kappa: float) -> float:
        if kappa == 0.0:
            return 0.0
        if self.dim == 1:
            return 2.0 * (self._far_cos(kappa) - self.far_mass)
        return 2.0 * math.pi * (self._far_bessel(kappa) - self.far_mass)

    def _far_cos(self, kappa: float) -> float:
        value, _ = integrate.quad(
            self.w, self.r_out, np.inf, weight="cos", wvar=kappa, limlst=100, epsabs=1e-3 * self.settings.tail_tol * self.far_mass
        )
        return value

    def _far_sin(self, kappa: float) -> float:
        value, _ = integrate.quad(
            self.w, self.r_out, np.inf, weight="sin", wvar=kappa, limlst=100, epsabs=1e-3 * self.settings.tail_tol * self.far_mass
        )
        return value

    def _far_bessel(self, kappa: float) -> float:
        r1 = max(self.r_out, _HANKEL_START / kappa)
        head = 0.0
        if r1 > self.r_out:
            head, _ = integrate.quad(
                lambda u: special.j0(kappa * math.exp(u)) * float(self.w(math.exp(u))) * math.exp(u),
                math.log(self.r_out),
                math.log(r1),
                limit=2000,
                epsabs=1e-3 * self.settings.tail_tol * self.far_mass,
                epsrel=1e-11,
            )
        return head + hankel_tail(self.w, kappa, r1)

    @cached_property
    def total_multiplier(self) -> np.ndarray:
        """Sum over all bands; the multiplier of the operator with a == 1"""
        return self.inner_multiplier + self.shell_multipliers.sum(axis=0) + self.far_multiplier

    def symmetric_bands(self) -> List[Tuple[float, np.ndarray]]:
        """(radius where a is sampled, multiplier) per band"""
        bands = [(0.5 * self.h0, self.inner_multiplier)]
        bands.extend((shell.radius, m) for shell, m in zip(self.shells, self.shell_multipliers))
        bands.append((self.far_radius, self.far_multiplier))
        return bands

    # ----- one-sided multipliers (dim 1) -----

    @cached_property
    def signed_bands(self) -> List[Tuple[float, np.ndarray, np.ndarray]]:
        """(radius, multiplier of h > 0, multiplier of h < 0) per band"""
        if self.dim != 1:
            raise UnsupportedFamilyError("one-sided bands exist in dim 1 only", guard="radial a0 in dim 2")
        xi = self.grid.wavenumbers()[0]
        comp = 1.0 if self.compensator is Compensator.GRADIENT else 0.0
        m = self.moments
        m1 = 0.0 if comp else m[1]
        even = -0.5 * xi ** 2 * m[2] + xi ** 4 * m[4] / 24.0
        odd = 1j * xi * m1 - 1j * xi ** 3 * m[3] / 6.0
        bands = [(0.5 * self.h0, even + odd, even - odd)]
        for shell in self.shells:
            kr = np.outer(shell.nodes, xi)
            indicator = (shell.nodes <= 1.0).astype(float)[:, None]
            cos_part = shell.weights @ (-2.0 * np.sin(0.5 * kr) ** 2)
            sin_part = shell.weights @ (np.sin(kr) - comp * indicator * kr)
            bands.append((shell.radius, cos_part + 1j * sin_part, cos_part - 1j * sin_part))
        distinct, inverse = np.unique(np.abs(xi), return_inverse=True)
        cos_far = np.array([self._far_cos(float(k)) if k > 0 else self.far_mass for k in distinct])[inverse]
        sin_far = np.array([self._far_sin(float(k)) if k > 0 else 0.0 for k in distinct])[inverse] * np.sign(xi)
        bands.append((self.far_radius, cos_far + 1j * sin_far - self.far_mass, cos_far - 1j * sin_far - self.far_mass))
        return bands

    # ----- error budget -----

    def inner_error_bound(self, u: GridFunction, lambda2: float) -> float:
        """Bound on the Taylor remainder of the inner band, from sixth derivatives"""
        sixth = sum(
            math.factorial(6) / math.prod(math.factorial(g) for g in gamma) * d.sup_norm()
            for gamma, d in u.derivatives(6)
        )
        return lambda2 * 0.5 * sphere_area(self.dim) * sixth * self.moments[6] / 360.0

    def tail_magnitude(self, u: GridFunction, lambda2: float) -> float:
        """Sup-norm size of the |h| > R_out contribution"""
        return 4.0 * u.sup_norm() * lambda2 * 0.5 * sphere_area(self.dim) * self.far_mass

    def tail_error_bound(self, u: GridFunction, lambda2: float) -> float:
        return self.settings.tail_tol * self.tail_magnitude(u, lambda2)


@lru_cache(maxsize=32)
def quadrature_rule(varphi: Modulus, compensator: Compensator, grid: GridSpec, settings: QuadratureSettings) -> QuadratureRule:
    return QuadratureRule(varphi, compensator, grid, settings)


def rule_for(spec: OperatorSpec, grid: GridSpec) -> QuadratureRule:
    return quadrature_rule(spec.kernel.varphi, spec.compensator, grid, spec.quadrature)


# ===== APPLY =====

def _ifft(coeffs: np.ndarray, dim: int) -> np.ndarray:
    return np.real(np.fft.ifftn(coeffs, axes=tuple(range(-dim, 0))))


def _check(spec: OperatorSpec, u: GridFunction) -> CoefficientProfile:
    if spec.kernel.dim != u.dim:
        raise GridMismatchError("operator and grid dimensions differ", guard="identical grids")
    profile = coefficient_profile(spec.kernel.coefficient, u.dim)
    if u.dim == 2 and not profile.isotropic:
        raise UnsupportedFamilyError(
            "dim 2 operators need a coefficient depending on h through |h| only",
            guard="radial a(x, .) in dim 2",
        )
    return profile


def apply_L(spec: OperatorSpec, u: GridFunction) -> GridFunction:
    """L u(x) = int (u(x+h) - u(x) - grad u(x).h 1_{|h|<=1}) a(x,h) / (|h|^d varphi(|h|)) dh"""
    profile = _check(spec, u)
    coefficient = spec.kernel.coefficient
    rule = rule_for(spec, u.spec)
    x = np.stack(u.coords())
    e1 = np.eye(u.dim)[0]
    u_hat = u.fourier()

    if coefficient.symmetric_in_h and profile.h_independent:
        a = _sample(coefficient, x, e1)
        values = a * _ifft(rule.total_multiplier * u_hat, u.dim)
    elif coefficient.symmetric_in_h:
        values = np.zeros(u.shape)
        for radius, multiplier in rule.symmetric_bands():
            values += _sample(coefficient, x, radius * e1) * _ifft(multiplier * u_hat, u.dim)
    else:
        values = np.zeros(u.shape)
        for radius, plus, minus in rule.signed_bands:
            values += _sample(coefficient, x, radius * e1) * _ifft(plus * u_hat, 1)
            values += _sample(coefficient, x, -radius * e1) * _ifft(minus * u_hat, 1)
    logger.debug("operator applied", extra={"coefficient": coefficient.label, "n": u.n, "dim": u.dim})
    return u.with_values(values)


def apply_L0(spec: OperatorSpec, u: GridFunction, x0: Optional[Sequence[float]] = None) -> GridFunction:
    """The operator frozen at x0; x0 may be omitted for coefficients constant in x"""
    if spec.kernel.coefficient.depends_on_x:
        if x0 is None:
            raise PreconditionError("coefficient depends on x; give the freezing point x0", guard="a0(h) = a(x0, h)")
        spec = freeze(spec, x0).frozen
    return apply_L(spec, u)


def apply_B(spec: OperatorSpec, v: GridFunction, x0: Sequence[float]) -> GridFunction:
    """B v = L v - L0 v, carried by b(x,h) = a(x,h) - a(x0,h)"""
    return apply_L(freeze(spec, x0).perturbation, v)


def frozen_symbol(spec: OperatorSpec, grid: GridSpec, x0: Optional[Sequence[float]] = None) -> SymbolTable:
    """symbol = -(multiplier of L0) from the same bands apply_L uses"""
    coefficient = spec.kernel.coefficient
    if coefficient.depends_on_x:
        if x0 is None:
            raise PreconditionError("coefficient depends on x; give the freezing point x0", guard="a0(h) = a(x0, h)")
        coefficient = coefficient.frozen(x0)
    if not coefficient.symmetric_in_h:
        raise UnsupportedFamilyError(
            "asymmetric coefficient gives a complex symbol",
            guard="a0(h) = a0(-h)",
            hypothesis="symmetric a0 cancels the gradient compensator",
        )
    rule = rule_for(spec, grid)
    origin = np.zeros((grid.dim, 1))
    e1 = np.eye(grid.dim)[:, :1]
    values = np.zeros(grid.shape)
    for radius, multiplier in rule.symmetric_bands():
        values -= float(coefficient(origin, radius * e1)[0]) * np.real(multiplier)
    values[(0,) * grid.dim] = 0.0
    return SymbolTable(grid, values, f"quadrature({coefficient.label})")


# ===== CUTOFFS =====

def transition(s: np.ndarray) -> np.ndarray:
    """1 on [0, 1], 0 on [2, inf), smooth and decreasing in between"""
    s = np.asarray(s, dtype=float)

    def g(t):
        positive = t > 0
        return np.where(positive, np.exp(-1.0 / np.where(positive, t, 1.0)), 0.0)

    inside, outside = g(2.0 - s), g(s - 1.0)
    return inside / (inside + outside)


@dataclass(frozen=True)
class Cutoff:
    """eta(x) = transition(|x - x0| / r) on the periodic grid"""

    r: float
    x0: Tuple[float, ...]
    values: GridFunction

    @classmethod
    def build(cls, grid: GridSpec, x0: Sequence[float], r: float) -> "Cutoff":
        point = tuple(float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float)))
        if len(point) != grid.dim:
            raise DomainError(f"x0 needs {grid.dim} components", guard="dim")
        if not 0 < r <= grid.period / 4.0:
            raise DomainError("cutoff ball B(x0, 2r) must fit in the box", guard="0 < 4r <= period")
        offsets = np.stack(grid.coords()) - np.asarray(point).reshape((-1,) + (1,) * grid.dim)
        dist = periodic_distance(offsets, grid.period)
        return cls(r=float(r), x0=point, values=GridFunction(transition(dist / r), grid.period))

    @classmethod
    def everywhere(cls, grid: GridSpec) -> "Cutoff":
        return cls(r=math.inf, x0=(0.0,) * grid.dim, values=GridFunction.constant(1.0, grid.n, grid.dim, grid.period))

    def holder_norm(self, psi: Modulus) -> HolderReport:
        return holder_norm(self.values, psi)


# ===== COMMUTATOR TERM =====

def _directional(derivs: Dict[int, List], e: np.ndarray, k: int) -> np.ndarray:
    total = 0.0
    for gamma, d in derivs[k]:
        weight = math.factorial(k) / math.prod(math.factorial(g) for g in gamma)
        total = total + weight * math.prod(e[i] ** g for i, g in enumerate(gamma)) * d.values
    return total


def apply_H(spec: OperatorSpec, u: GridFunction, eta: Cutoff) -> GridFunction:
    """
    H(x) = int (u(x+h) - u(x)) (eta(x+h) - eta(x)) a(x,h) / (|h|^d varphi(|h|)) dh

    Node-wise products of spectrally shifted differences on the shells; the
    inner band uses the product of the two Taylor models, the far band the
    oscillatory multipliers.
    """
    profile = _check(spec, u)
    if not eta.values.same_grid(u):
        raise GridMismatchError("cutoff and function live on different grids", guard="identical grids")
    coefficient = spec.kernel.coefficient
    rule = rule_for(spec, u.spec)
    dim = u.dim
    x = np.stack(u.coords())
    units, angle_weight = _directions(dim, spec.quadrature.angles)
    signs = (1.0, -1.0)
    axes = tuple(range(-dim, 0))
    u_hat, eta_hat = u.fourier(), eta.values.fourier()
    wave = np.stack(u.wavenumbers())
    u_derivs = {k: u.derivatives(k) for k in (1, 2, 3)}
    eta_derivs = {k: eta.values.derivatives(k) for k in (1, 2, 3)}
    m = rule.moments

    def coeff(radius, e, s):
        if profile.h_independent:
            return coeff_h0
        return _sample(coefficient, x, s * radius * e)

    coeff_h0 = _sample(coefficient, x, np.eye(dim)[0])
    values = np.zeros(u.shape)

    for e in units:
        du = [None] + [_directional(u_derivs, e, k) for k in (1, 2, 3)]
        de = [None] + [_directional(eta_derivs, e, k) for k in (1, 2, 3)]
        even = du[1] * de[1] * m[2] + (du[1] * de[3] / 6.0 + du[2] * de[2] / 4.0 + du[3] * de[1] / 6.0) * m[4]
        odd = 0.5 * (du[1] * de[2] + du[2] * de[1]) * m[3]
        projection = np.tensordot(e, wave, axes=(0, 0))
        for s in signs:
            inner = even + s * odd
            acc = coeff(0.5 * rule.h0, e, s) * inner
            for shell in rule.shells:
                phase = np.exp(1j * s * np.multiply.outer(shell.nodes, projection))
                shifted_u = np.real(np.fft.ifftn(phase * u_hat, axes=axes)) - u.values
                shifted_eta = np.real(np.fft.ifftn(phase * eta_hat, axes=axes)) - eta.values.values
                acc = acc + coeff(shell.radius, e, s) * np.tensordot(shell.weights, shifted_u * shifted_eta, axes=(0, 0))
            values += angle_weight * acc

    far = _far_product(rule, u, eta.values, coefficient, profile, x)
    logger.debug("commutator term applied", extra={"coefficient": coefficient.label, "n": u.n, "cutoff_r": eta.r})
    return u.with_values(values + far)


def _far_product(rule, u, eta, coefficient, profile, x) -> np.ndarray:
    """F(u eta) - u F(eta) - eta F(u) with F the |h| > R_out band"""
    product = u * eta
    e1 = np.eye(u.dim)[0]
    if coefficient.symmetric_in_h:
        mult = rule.far_multiplier
        parts = [_ifft(mult * f.fourier(), u.dim) for f in (product, eta, u)]
        a = _sample(coefficient, x, (1.0 if profile.h_independent else rule.far_radius) * e1)
        return a * (parts[0] - u.values * parts[1] - eta.values * parts[2])
    _, plus, minus = rule.signed_bands[-1]
    total = np.zeros(u.shape)
    for s, mult in ((1.0, plus), (-1.0, minus)):
        parts = [_ifft(mult * f.fourier(), 1) for f in (product, eta, u)]
        a = _sample(coefficient, x, s * rule.far_radius * e1)
        total += a * (parts[0] - u.values * parts[1] - eta.values * parts[2])
    return total


# ===== AUXILIARY INTEGRAL =====

@dataclass(frozen=True)
class AuxReport:
    value: float
    scale: float  # Psi(r) / varphi(r)
    ratio: float
    r: float


def aux_integral(psi: Modulus, varphi: Modulus, r: float, dim: int = 1) -> AuxReport:
    """int_{R^d} Psi(|h| ^ r) / (|h|^d varphi(|h|)) dh against Psi(r)/varphi(r)"""
    upper_varphi = estimate_indices(varphi).M
    lower_psi = estimate_indices(psi).m
    if not upper_varphi < lower_psi:
        raise PreconditionError(
            f"M_varphi = {upper_varphi:.3f} is not below m_Psi = {lower_psi:.3f}",
            guard="M_varphi < m_Psi",
            hypothesis="int Psi(|h| ^ r) kernel(h) dh <= C Psi(r)/varphi(r)",
        )
    inner = integrate_from_zero(lambda s: psi(s) / (s * varphi(s)), r, rtol=1e-10)
    outer = float(psi(r)) * tail_integral(varphi, r)
    value = sphere_area(dim) * (inner + outer)
    scale = float(psi(r)) / float(varphi(r))
    return AuxReport(value=value, scale=scale, ratio=value / scale, r=float(r))
