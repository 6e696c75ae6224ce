"""
Heat kernels - transition densities of subordinate Brownian motion on a periodic box
Semigroups, Fourier symbols, derivative bounds, constant-coefficient solves
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from api.errors import (
    AlignmentError,
    CompatibilityError,
    DomainError,
    GridMismatchError,
    PreconditionError,
    ResolutionError,
    SingularSymbolError,
    UnsupportedFamilyError,
)
from config import RINGING_TOL, SPECTRAL_TAIL
from services.funcspace import GridFunction, GridSpec
from services.levykernel import LevyKernel
from services.modulus import BernsteinSpec, Modulus, integrate_from_zero, integrate_to_infinity, invert

logger = logging.getLogger(__name__)

_MAX_GRID = 2 ** 22

# |xi| h0 for the Taylor band of 1 - cos, |xi| h1 where the oscillatory tail starts
_TAYLOR_ARG = 0.05
_MIDDLE_PERIODS_1D = 4
_MIDDLE_PERIODS_2D = 32


# ===== DENSITIES =====

@dataclass(frozen=True)
class HeatKernelGrid:
    """Box-periodized density q_d(t, .) sampled on the grid"""

    t: float
    grid: GridFunction
    spectral_cutoff: float
    label: str = ""

    def mass(self) -> float:
        return float(np.sum(self.grid.values)) * self.grid.dx ** self.grid.dim

    def at(self, x: Union[float, Sequence[float]]) -> float:
        """Value at a grid-aligned point"""
        idx = _grid_index(self.grid.spec, x)
        return float(self.grid.values[idx])


def _grid_index(spec: GridSpec, x) -> Tuple[int, ...]:
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    steps = xv / spec.dx
    rounded = np.rint(steps)
    if xv.size != spec.dim or np.any(np.abs(steps - rounded) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise AlignmentError(f"point {xv.tolist()} is not on the grid (dx={spec.dx})", guard="grid-aligned point")
    return tuple(int(s) % spec.n for s in rounded)


def _characteristic(b: BernsteinSpec, t: float, spec: GridSpec) -> np.ndarray:
    return np.exp(-t * b.phi(spec.frequency_norm() ** 2))


def resolution_for(b: BernsteinSpec, t: float, spec: GridSpec) -> int:
    """Smallest n (power of two, >= spec.n) with e^{-t phi(xi_max^2)} < SPECTRAL_TAIL"""
    n = spec.n
    while n <= _MAX_GRID:
        xi_max = math.sqrt(spec.dim) * math.pi * n / spec.period
        if math.exp(-t * float(b.phi(xi_max ** 2))) < SPECTRAL_TAIL:
            return n
        n *= 2
    raise ResolutionError(f"no grid up to n={_MAX_GRID} resolves t={t}", suggested_n=None, guard="spectral tail")


def density(b: BernsteinSpec, t: float, spec: GridSpec) -> HeatKernelGrid:
    """Inverse DFT of e^{-t phi(|xi|^2)} on the dual lattice (the box-periodized density)"""
    if not t > 0:
        raise DomainError("time must be positive", guard="t > 0")
    xi_max = float(spec.frequency_norm().max())
    if math.exp(-t * float(b.phi(xi_max ** 2))) >= SPECTRAL_TAIL:
        suggested = resolution_for(b, t, spec)
        raise ResolutionError(
            f"spectral tail at t={t} not negligible on n={spec.n}; use n={suggested}",
            suggested_n=suggested,
            guard="e^{-t phi(xi_max^2)} < 1e-14",
        )
    values = np.real(np.fft.ifftn(_characteristic(b, t, spec))) * (spec.n / spec.period) ** spec.dim
    if values.min() < -RINGING_TOL * values.max():
        raise ResolutionError(
            f"density undershoot {values.min():.3e} at t={t}",
            suggested_n=spec.n * 2,
            guard="spectral ringing",
        )
    kernel = HeatKernelGrid(t=t, grid=GridFunction(values, spec.period), spectral_cutoff=xi_max, label=b.label)
    logger.debug("density computed", extra={"bernstein": b.label, "t": t, "n": spec.n, "mass": kernel.mass()})
    return kernel


def density_at(b: BernsteinSpec, t: float, x: Union[float, Sequence[float]], dim: int = 1) -> float:
    """Pointwise density on R^dim by Fourier (dim 1) or Hankel (dim 2) quadrature"""
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))

    def char(xi):
        return math.exp(-t * float(b.phi(xi * xi)))

    # e^{-t phi(xi^2)} < 1e-18 beyond xi_cut
    xi_cut = math.sqrt(invert(b.phi, 41.5 / t))
    if dim == 1:
        if r == 0.0:
            value, _ = integrate.quad(char, 0.0, xi_cut, limit=400, epsabs=0.0, epsrel=1e-12)
        else:
            value, _ = integrate.quad(char, 0.0, xi_cut, weight="cos", wvar=r, limit=400, epsabs=1e-15)
        return value / math.pi
    if dim == 2:
        value, _ = integrate.quad(lambda xi: char(xi) * special.j0(xi * r) * xi, 0.0, xi_cut, limit=2000, epsabs=1e-15)
        return value / (2.0 * math.pi)
    raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")


def check_chapman_kolmogorov(b: BernsteinSpec, t1: float, t2: float, spec: GridSpec) -> float:
    """Sup error between q(t1) * q(t2) and q(t1 + t2)"""
    q1, q2 = density(b, t1, spec), density(b, t2, spec)
    q12 = density(b, t1 + t2, spec)
    conv = semigroup_apply(q1, q2.grid)
    return float(np.max(np.abs(conv.values - q12.grid.values)))


# ===== TWO-SIDED ESTIMATES =====

@dataclass(frozen=True)
class BoundReport:
    c_hat: float
    rows: Tuple[Dict, ...]
    n: int
    period: float


def twosided_bound(b: BernsteinSpec, t: float, r: float, dim: int) -> float:
    """phi^-1(1/t)^{d/2} ^ t phi(r^-2)/r^d"""
    first = invert(b.phi, 1.0 / t) ** (dim / 2.0)
    if r == 0.0:
        return first
    return min(first, t * float(b.phi(r ** -2.0)) / r ** dim)


def _points(x_list, dim: int) -> List[np.ndarray]:
    return [np.atleast_1d(np.asarray(x, dtype=float)).reshape(dim) for x in x_list]


def check_twosided(
    b: BernsteinSpec,
    t_list: Sequence[float],
    x_list: Sequence,
    spec: GridSpec,
) -> BoundReport:
    """max over (t, x) of max(ratio, 1/ratio), ratio = q(t,x) / bound(t,x)"""
    rows = []
    for t in t_list:
        kernel = density(b, t, spec)
        for x in _points(x_list, spec.dim):
            r = float(np.linalg.norm(x))
            q = kernel.at(x)
            bound = twosided_bound(b, t, r, spec.dim)
            if not q > 0:
                raise PreconditionError(f"density not positive at t={t}, x={x.tolist()}", guard="q > 0")
            ratio = q / bound
            rows.append({"t": t, "x": r, "q": q, "bound": bound, "ratio": ratio})
    c_hat = max(max(row["ratio"], 1.0 / row["ratio"]) for row in rows)
    logger.info("two-sided check", extra={"bernstein": b.label, "n": spec.n, "c_hat": c_hat})
    return BoundReport(c_hat=c_hat, rows=tuple(rows), n=spec.n, period=spec.period)


def check_derivative_bound(
    b: BernsteinSpec,
    k: int,
    t_list: Sequence[float],
    x_list: Sequence,
    spec: GridSpec,
) -> BoundReport:
    """max over (t, x) of sum_{|gamma|=k} |D^gamma q(t,x)| / (phi^-1(1/t)^{k/2} bound(t,x))"""
    if k > 3:
        raise PreconditionError("derivative order above 3", guard="k <= 3")
    rows = []
    for t in t_list:
        kernel = density(b, t, spec)
        ders = [g for _, g in kernel.grid.derivatives(k)]
        scale = invert(b.phi, 1.0 / t) ** (k / 2.0)
        for x in _points(x_list, spec.dim):
            idx = _grid_index(spec, x)
            value = sum(abs(float(g.values[idx])) for g in ders)
            bound = scale * twosided_bound(b, t, float(np.linalg.norm(x)), spec.dim)
            rows.append({"t": t, "x": float(np.linalg.norm(x)), "derivative": value, "bound": bound, "ratio": value / bound})
    c_hat = max(row["ratio"] for row in rows)
    logger.info("derivative check", extra={"bernstein": b.label, "k": k, "n": spec.n, "c_hat": c_hat})
    return BoundReport(c_hat=c_hat, rows=tuple(rows), n=spec.n, period=spec.period)


# ===== SYMBOLS =====

@dataclass(frozen=True)
class SymbolTable:
    """symbol(xi) on the dual lattice, FFT ordering; the multiplier of L0 is -symbol"""

    grid: GridSpec
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise GridMismatchError("symbol values do not match the grid", guard="identical grids")
        if np.any(~np.isfinite(self.values)):
            raise DomainError("symbol values must be finite", guard="finite symbol")
        self.values.setflags(write=False)

    @property
    def frequencies(self) -> List[np.ndarray]:
        return self.grid.wavenumbers()

    @classmethod
    def subordinate(cls, b: BernsteinSpec, grid: GridSpec) -> "SymbolTable":
        """phi(|xi|^2)"""
        return cls(grid, np.asarray(b.phi(grid.frequency_norm() ** 2), dtype=float), f"phi={b.label}")

    @classmethod
    def fractional(cls, beta: float, grid: GridSpec, constant: float = 1.0) -> "SymbolTable":
        """constant * |xi|^beta"""
        return cls(grid, constant * grid.frequency_norm() ** beta, f"|xi|^{beta}")

    def radial(self) -> Tuple[np.ndarray, np.ndarray]:
        """(|xi|, symbol) over distinct frequency norms"""
        norms = self.grid.frequency_norm().ravel()
        order = np.argsort(norms, kind="stable")
        norms, values = norms[order], self.values.ravel()[order]
        keep = np.concatenate([[True], np.diff(norms) > 1e-12 * max(norms[-1], 1.0)])
        return norms[keep], values[keep]

    def min_positive(self) -> float:
        off = self.values[self.grid.frequency_norm() > 0]
        return float(off.min())


def _check_same_grid(grid: GridSpec, f: GridFunction) -> None:
    if f.spec != grid:
        raise GridMismatchError(f"grid mismatch: {grid} vs {f.spec}", guard="identical grids")


def semigroup_apply(
    kernel: Union[HeatKernelGrid, SymbolTable],
    f: GridFunction,
    t: Optional[float] = None,
) -> GridFunction:
    """Q_t f by convolution with a density grid, or P_t f = F^-1(e^{-t symbol} F f)"""
    if isinstance(kernel, HeatKernelGrid):
        if not kernel.grid.same_grid(f):
            raise GridMismatchError("density and function live on different grids", guard="identical grids")
        weight = np.fft.fftn(kernel.grid.values) * kernel.grid.dx ** kernel.grid.dim
        return f.from_fourier(f.fourier() * weight)
    if t is None or t < 0:
        raise DomainError("semigroup time must be given and non-negative", guard="t >= 0")
    _check_same_grid(kernel.grid, f)
    return f.from_fourier(f.fourier() * np.exp(-t * kernel.values))


def apply_multiplier(symbol: SymbolTable, u: GridFunction) -> GridFunction:
    """L0 u = F^-1(-symbol F u)"""
    _check_same_grid(symbol.grid, u)
    return u.from_fourier(-symbol.values * u.fourier())


def solve_constant(symbol: SymbolTable, f: GridFunction) -> GridFunction:
    """u with L0 u = f: F u = -F f / symbol off the origin, zero mean"""
    _check_same_grid(symbol.grid, f)
    mean = f.mean()
    if abs(mean) > 1e-10 * max(f.sup_norm(), 1.0):
        raise CompatibilityError(
            f"right-hand side has mean {mean:.3e} on the box",
            guard="zero mean",
            hypothesis="symbol(0) = 0 forces int f = 0",
        )
    origin = symbol.grid.frequency_norm() == 0
    if np.any(symbol.values[~origin] <= 0):
        raise SingularSymbolError("symbol vanishes off the origin", guard="symbol > 0 for xi != 0")
    coeffs = f.fourier()
    safe = np.where(origin, 1.0, symbol.values)
    u_hat = np.where(origin, 0.0, -coeffs / safe)
    return f.from_fourier(u_hat)


def potential_by_time_quadrature(
    symbol: SymbolTable,
    f: GridFunction,
    nodes: int = 16,
    decay: float = 1e-8,
) -> GridFunction:
    """
    R f = int_0^T P_t f dt + F^-1(F f e^{-T symbol} / symbol)

    Gauss-Legendre on dyadic time panels; T from e^{-T symbol_min} = decay.
    """
    _check_same_grid(symbol.grid, f)
    origin = symbol.grid.frequency_norm() == 0
    s = np.where(origin, 0.0, symbol.values)
    s_min, s_max = symbol.min_positive(), float(s.max())
    t_end = math.log(1.0 / decay) / s_min
    edges = [0.0]
    tau = 1.0 / s_max
    while tau < t_end:
        edges.append(tau)
        tau *= 2.0
    edges.append(t_end)
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = np.zeros_like(s)
    for lo, hi in zip(edges[:-1], edges[1:]):
        times = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        for ti, wi in zip(times, w):
            total = total + 0.5 * (hi - lo) * wi * np.exp(-ti * s)
    safe = np.where(origin, 1.0, s)
    total = np.where(origin, 0.0, total + np.exp(-t_end * s) / safe)
    return f.from_fourier(f.fourier() * total)


# ===== SEMIGROUP DERIVATIVE BOUND =====

def check_semigroup_derivative_bound(
    b: BernsteinSpec,
    f: GridFunction,
    k: int,
    t_list: Sequence[float],
    symbol: Optional[SymbolTable] = None,
    varphi: Optional[Modulus] = None,
) -> BoundReport:
    """max over t of max_{|gamma|=k} ||D^gamma P_t f||_0 varphi^-1(t)^k / ||f||_0"""
    if k > 3:
        raise PreconditionError("derivative order above 3", guard="k <= 3")
    symbol = symbol or SymbolTable.subordinate(b, f.spec)
    varphi = varphi or b.varphi
    norm = f.sup_norm()
    rows = []
    for t in t_list:
        pt = semigroup_apply(symbol, f, t)
        size = max(g.sup_norm() for _, g in pt.derivatives(k))
        scale = invert(varphi, t) ** k
        ratio = 0.0 if norm == 0 else size * scale / norm
        rows.append({"t": t, "derivative": size, "scale": scale, "ratio": ratio})
    c_hat = max(row["ratio"] for row in rows)
    logger.info("semigroup derivative check", extra={"bernstein": b.label, "k": k, "n": f.n, "c_hat": c_hat})
    return BoundReport(c_hat=c_hat, rows=tuple(rows), n=f.n, period=f.period)


# ===== NUMERICAL SYMBOL =====

def hankel_tail(w: Callable[[float], float], kappa: float, r0: float) -> float:
    """int_r0^inf J0(kappa r) w(r) dr from the asymptotic expansion of J0 (kappa r0 >= 200)"""

    def envelope(r, sign):
        z = kappa * r
        p = 1.0 - 9.0 / (128.0 * z * z)
        return math.sqrt(1.0 / (math.pi * z)) * w(r) * (p + sign / (8.0 * z))

    scale = abs(w(r0)) * r0 + 1e-300
    cos_part, _ = integrate.quad(lambda r: envelope(r, -1.0), r0, np.inf, weight="cos", wvar=kappa, limlst=100, epsabs=1e-13 * scale)
    sin_part, _ = integrate.quad(lambda r: envelope(r, 1.0), r0, np.inf, weight="sin", wvar=kappa, limlst=100, epsabs=1e-13 * scale)
    return cos_part + sin_part


def radial_symbol(w: Callable[[float], float], kappa: float, dim: int = 1) -> float:
    """
    2 int_0^inf (1 - cos kappa r) w(r) dr (dim 1) or 2 pi int_0^inf (1 - J0(kappa r)) w(r) dr (dim 2)

    Taylor band below h0 = 0.05/kappa, direct quadrature up to a few periods,
    tail as int w minus the oscillatory Fourier/Hankel integral.
    """
    if kappa == 0.0:
        return 0.0
    h0 = _TAYLOR_ARG / kappa
    m2 = integrate_from_zero(lambda r: r * r * w(r), h0, rtol=1e-10)
    m4 = integrate_from_zero(lambda r: r ** 4 * w(r), h0, rtol=1e-10)
    if dim == 1:
        inner = kappa ** 2 * m2 / 2.0 - kappa ** 4 * m4 / 24.0
        h1 = _MIDDLE_PERIODS_1D * 2.0 * math.pi / kappa

        def osc(r):
            return 2.0 * math.sin(0.5 * kappa * r) ** 2
    else:
        inner = kappa ** 2 * m2 / 4.0 - kappa ** 4 * m4 / 64.0
        h1 = _MIDDLE_PERIODS_2D * 2.0 * math.pi / kappa

        def osc(r):
            return 1.0 - special.j0(kappa * r)

    middle, _ = integrate.quad(
        lambda u: osc(math.exp(u)) * w(math.exp(u)) * math.exp(u),
        math.log(h0),
        math.log(h1),
        limit=800,
        epsabs=0.0,
        epsrel=1e-11,
    )
    mass = integrate_to_infinity(w, h1, rtol=1e-11)
    if dim == 1:
        scale = abs(w(h1)) * h1 + 1e-300
        wave, _ = integrate.quad(w, h1, np.inf, weight="cos", wvar=kappa, limlst=100, epsabs=1e-13 * scale)
        return 2.0 * (inner + middle + mass - wave)
    return 2.0 * math.pi * (inner + middle + mass - hankel_tail(w, kappa, h1))


def compute_symbol(kernel: LevyKernel, grid: GridSpec, x0: Optional[Sequence[float]] = None) -> SymbolTable:
    """Numerical Fourier multiplier of the frozen operator, per distinct |xi|"""
    coefficient = kernel.coefficient
    if not coefficient.symmetric_in_h:
        raise UnsupportedFamilyError(
            "asymmetric coefficient gives a complex symbol",
            guard="a0(h) = a0(-h)",
            hypothesis="symmetric a0 cancels the gradient compensator",
        )
    if coefficient.depends_on_x:
        coefficient = coefficient.frozen(x0 if x0 is not None else np.zeros(kernel.dim))
    if kernel.dim != grid.dim:
        raise GridMismatchError("kernel and grid dimensions differ", guard="identical grids")
    varphi = kernel.varphi
    dim = kernel.dim

    if dim == 2:
        radii = np.array([0.1, 0.7, 2.0])
        angles = np.linspace(0.0, np.pi, 5)
        samples = np.array([coefficient(np.zeros((2, 3)), np.stack([radii * math.cos(a), radii * math.sin(a)])) for a in angles])
        if np.max(np.abs(samples - samples[0])) > 1e-12:
            raise UnsupportedFamilyError("anisotropic coefficients are not supported in dim 2", guard="radial a0")

    def a0(r: float) -> float:
        h = np.zeros((dim, 1))
        h[0, 0] = r
        return float(coefficient(np.zeros((dim, 1)), h)[0])

    def w(r: float) -> float:
        return a0(r) / (r * float(varphi(r)))

    norms = grid.frequency_norm()
    distinct = np.unique(np.round(norms.ravel(), 12))
    table = {kappa: radial_symbol(w, float(kappa), dim) for kappa in distinct}
    values = np.vectorize(lambda k: table[k])(np.round(norms, 12))
    logger.info("symbol computed", extra={"kernel": coefficient.label, "n": grid.n, "frequencies": int(distinct.size)})
    return SymbolTable(grid, np.asarray(values, dtype=float), f"numerical({coefficient.label})")
