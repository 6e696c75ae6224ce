"""
Function spaces - grid-sampled periodic functions
Differences, generalized Hölder seminorms and norms, mollification, random corpus
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from api.errors import (
    AlignmentError,
    DomainError,
    GridMismatchError,
    OrderAmbiguityError,
    PreconditionError,
    ResolutionError,
)
from config import DEFAULT_PERIOD, INDEX_DEPTH, INTEGER_GUARD
from services.modulus import Modulus, estimate_indices

logger = logging.getLogger(__name__)

Offset = Union[float, Sequence[float]]


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [0, L)^dim with n points per axis"""

    n: int
    dim: int = 1
    period: float = DEFAULT_PERIOD

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")
        if not _is_power_of_two(self.n):
            raise DomainError(f"n={self.n} is not a power of two", guard="n power of two")
        if not self.period > 0:
            raise DomainError("period must be positive", guard="L > 0")

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    def coords(self) -> List[np.ndarray]:
        x = np.arange(self.n) * self.dx
        if self.dim == 1:
            return [x]
        return list(np.meshgrid(x, x, indexing="ij"))

    def wavenumbers(self) -> List[np.ndarray]:
        """Angular frequencies 2*pi*k/L per axis, broadcast to the grid shape"""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        if self.dim == 1:
            return [k]
        return list(np.meshgrid(k, k, indexing="ij"))

    def frequency_norm(self) -> np.ndarray:
        return np.sqrt(sum(k ** 2 for k in self.wavenumbers()))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n * factor, self.dim, self.period)


class GridFunction:
    """
    Real periodic function sampled at x_j = j * L / n on [0, L)^dim

    Values are read-only after construction.
    """

    def __init__(self, values: np.ndarray, period: float = DEFAULT_PERIOD):
        arr = np.array(values, dtype=float)
        if arr.ndim not in (1, 2):
            raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")
        if arr.ndim == 2 and arr.shape[0] != arr.shape[1]:
            raise DomainError("2-d grids must be square", guard="n points per axis")
        n = arr.shape[0]
        if not _is_power_of_two(n):
            raise DomainError(f"n={n} is not a power of two", guard="n power of two")
        if not np.all(np.isfinite(arr)):
            raise DomainError("grid values must be finite", guard="finite values")
        if not period > 0:
            raise DomainError("period must be positive", guard="L > 0")
        arr.setflags(write=False)
        self.values = arr
        self.period = float(period)

    # ----- construction -----

    @classmethod
    def from_callable(cls, func: Callable, n: int, dim: int = 1, period: float = DEFAULT_PERIOD) -> "GridFunction":
        """Samples func(x) (dim 1) or func(x1, x2) (dim 2) on the grid"""
        x = np.arange(n) * (period / n)
        if dim == 1:
            return cls(func(x), period)
        if dim == 2:
            x1, x2 = np.meshgrid(x, x, indexing="ij")
            return cls(func(x1, x2), period)
        raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")

    @classmethod
    def constant(cls, c: float, n: int, dim: int = 1, period: float = DEFAULT_PERIOD) -> "GridFunction":
        return cls(np.full((n,) * dim, float(c)), period)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(values, self.period)

    # ----- geometry -----

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.n, self.dim, self.period)

    def coords(self) -> List[np.ndarray]:
        return self.spec.coords()

    def wavenumbers(self) -> List[np.ndarray]:
        return self.spec.wavenumbers()

    def same_grid(self, other: "GridFunction") -> bool:
        return self.shape == other.shape and abs(self.period - other.period) <= 1e-12 * self.period

    def _check_grid(self, other: "GridFunction") -> None:
        if not self.same_grid(other):
            raise GridMismatchError(
                f"grid mismatch: {self.shape}/L={self.period} vs {other.shape}/L={other.period}",
                guard="identical grids",
            )

    # ----- spectral -----

    def fourier(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def from_fourier(self, coeffs: np.ndarray) -> "GridFunction":
        return self.with_values(np.real(np.fft.ifftn(coeffs)))

    def derivative(self, multi_index: Union[int, Sequence[int]]) -> "GridFunction":
        """Spectral derivative D^gamma; Nyquist mode dropped on axes of odd order"""
        gamma = (multi_index,) if isinstance(multi_index, int) else tuple(multi_index)
        if len(gamma) != self.dim:
            raise DomainError("multi-index length must equal dim", guard="|gamma| per axis")
        if sum(gamma) == 0:
            return self
        coeffs = self.fourier()
        for axis_k, order in zip(self.wavenumbers(), gamma):
            if order == 0:
                continue
            factor = (1j * axis_k) ** order
            if order % 2 == 1:
                factor = np.where(np.isclose(np.abs(axis_k), np.pi / self.dx), 0.0, factor)
            coeffs = coeffs * factor
        return self.from_fourier(coeffs)

    def derivatives(self, order: int) -> List[Tuple[Tuple[int, ...], "GridFunction"]]:
        """All D^gamma f with |gamma| = order"""
        out = []
        for gamma in itertools.product(range(order + 1), repeat=self.dim):
            if sum(gamma) == order:
                out.append((gamma, self.derivative(gamma)))
        return out

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    # ----- arithmetic -----

    def _operand(self, other):
        if isinstance(other, GridFunction):
            self._check_grid(other)
            return other.values
        return float(other)

    def __add__(self, other):
        return self.with_values(self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._operand(other))

    def __rsub__(self, other):
        return self.with_values(self._operand(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._operand(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __repr__(self) -> str:
        return f"GridFunction(dim={self.dim}, n={self.n}, period={self.period:.6g})"


# ===== DIFFERENCES =====

def _shift(values: np.ndarray, steps: Sequence[int]) -> np.ndarray:
    """values(x + steps*dx) with periodic wrap"""
    return np.roll(values, tuple(-s for s in steps), axis=tuple(range(values.ndim)))


def grid_steps(f: GridFunction, h: Offset) -> Tuple[int, ...]:
    """Integer grid steps of an offset; AlignmentError off-grid"""
    hv = np.atleast_1d(np.asarray(h, dtype=float))
    if hv.size != f.dim:
        raise AlignmentError(f"offset has {hv.size} components, grid has dim {f.dim}", guard="grid-aligned offset")
    steps = hv / f.dx
    rounded = np.rint(steps)
    if np.any(np.abs(steps - rounded) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise AlignmentError(f"offset {hv.tolist()} is not a multiple of dx={f.dx}", guard="grid-aligned offset")
    return tuple(int(s) for s in rounded)


def _difference_values(values: np.ndarray, steps: Sequence[int], order: int) -> np.ndarray:
    if order == 1:
        return _shift(values, steps) - values
    if order == 2:
        return _shift(values, steps) - 2.0 * values + _shift(values, [-s for s in steps])
    raise DomainError("difference order must be 1 or 2", guard="order in {1,2}")


def difference(f: GridFunction, h: Offset, order: int = 1) -> GridFunction:
    """Delta_h f = f(x+h) - f(x), Delta^2_h f = f(x+h) - 2f(x) + f(x-h)"""
    return f.with_values(_difference_values(f.values, grid_steps(f, h), order))


def admissible_offsets(f: GridFunction, radius: float = 1.0) -> List[Tuple[Tuple[int, ...], float]]:
    """
    Grid steps s with 0 < |s*dx| <= radius over a half-space

    Differences of order 1 and 2 at -h are shifts of those at h, so the
    supremum over the half-space equals the full one.
    """
    s_max = int(math.floor(radius / f.dx + 1e-9))
    s_max = min(s_max, f.n // 2)
    offsets = []
    if f.dim == 1:
        for s in range(1, s_max + 1):
            offsets.append(((s,), s * f.dx))
        return offsets
    for s1 in range(0, s_max + 1):
        for s2 in range(-s_max, s_max + 1):
            if s1 == 0 and s2 <= 0:
                continue
            length = math.hypot(s1, s2) * f.dx
            if length <= radius * (1.0 + 1e-12):
                offsets.append(((s1, s2), length))
    return offsets


def seminorm(f: GridFunction, psi: Modulus, j: int = 0, order: int = 1) -> float:
    """sup_x sup_{0<|h|<=1} |Delta_h^order f(x)| / (psi(|h|) |h|^-j) over grid offsets"""
    if f.dx > 1.0:
        raise PreconditionError(f"grid spacing {f.dx} exceeds 1", guard="dx <= 1")
    offsets = admissible_offsets(f)
    lengths = np.array([length for _, length in offsets])
    weights = psi(lengths) * lengths ** (-float(j))
    best = 0.0
    for (steps, _), w in zip(offsets, weights):
        value = float(np.max(np.abs(_difference_values(f.values, steps, order)))) / w
        if value > best:
            best = value
    return best


# ===== HÖLDER NORM =====

@dataclass(frozen=True)
class HolderReport:
    sup_norm: float
    deriv_sup_norms: Tuple[float, ...]
    seminorm_first: float
    seminorm_second: float
    norm: float
    psi: Modulus
    k: int

    @property
    def equivalent_norm(self) -> float:
        """||f||_0 + [[f]]"""
        return self.sup_norm + self.seminorm_second

    def to_dict(self) -> Dict:
        return {
            "sup_norm": self.sup_norm,
            "deriv_sup_norms": list(self.deriv_sup_norms),
            "seminorm_first": self.seminorm_first,
            "seminorm_second": self.seminorm_second,
            "norm": self.norm,
            "psi": self.psi.label,
            "k": self.k,
        }


def holder_order(psi: Modulus, depth: int = INDEX_DEPTH) -> int:
    """k with m_psi in (k, k+1]; refuses indices near an integer"""
    indices = estimate_indices(psi, depth)
    nearest = round(indices.m)
    if abs(indices.m - nearest) < INTEGER_GUARD:
        raise OrderAmbiguityError(
            f"{psi.label}: lower index {indices.m:.4f} is within {INTEGER_GUARD} of the integer {nearest}",
            guard="m_psi not an integer",
            hypothesis="I_psi does not meet the integers",
        )
    if indices.m <= 0:
        raise PreconditionError(f"{psi.label}: lower index must be positive", guard="m_psi > 0")
    return int(math.ceil(indices.m)) - 1


def holder_norm(f: GridFunction, psi: Modulus, depth: int = INDEX_DEPTH) -> HolderReport:
    """Sum of derivative sup norms up to order k plus [D^k f]_{C^{-k;psi}}"""
    k = holder_order(psi, depth)
    deriv_sup = []
    top: List[GridFunction] = []
    for order in range(k + 1):
        ders = f.derivatives(order)
        deriv_sup.append(max(g.sup_norm() for _, g in ders))
        if order == k:
            top = [g for _, g in ders]
    first = max(seminorm(g, psi, j=k, order=1) for g in top)
    second = seminorm(f, psi, j=0, order=2)
    report = HolderReport(
        sup_norm=deriv_sup[0],
        deriv_sup_norms=tuple(deriv_sup),
        seminorm_first=first,
        seminorm_second=second,
        norm=sum(deriv_sup) + first,
        psi=psi,
        k=k,
    )
    logger.debug("holder norm", extra={"psi": psi.label, "n": f.n, "k": k, "norm": report.norm})
    return report


# ===== MOLLIFICATION =====

def bump(r: np.ndarray) -> np.ndarray:
    """exp(-1/(1-r^2)) on r < 1, zero outside"""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def min_image_coords(f: GridFunction) -> List[np.ndarray]:
    """Signed periodic distance of each grid point to the origin, per axis"""
    j = np.arange(f.n)
    x = np.where(j < f.n // 2, j, j - f.n) * f.dx
    if f.dim == 1:
        return [x]
    return list(np.meshgrid(x, x, indexing="ij"))


def mollify(f: GridFunction, eps: float) -> GridFunction:
    """Periodic convolution with the renormalized bump rho_eps"""
    if eps < 2.0 * f.dx:
        suggested = f.n
        while f.period / suggested > eps / 2.0:
            suggested *= 2
        raise ResolutionError(
            f"eps={eps} below twice the grid spacing {f.dx}",
            suggested_n=suggested,
            guard="eps >= 2 dx",
        )
    radius = np.sqrt(sum(c ** 2 for c in min_image_coords(f))) / eps
    rho = bump(radius)
    rho = rho / rho.sum()
    return f.from_fourier(f.fourier() * np.fft.fftn(rho))


# ===== RANDOM CORPUS =====

def _mode_list(n: int, dim: int) -> List[Tuple[int, ...]]:
    """Non-zero modes of a half-space ordered by shell max|k| then lexicographically"""
    k_max = n // 2 - 1
    modes: List[Tuple[int, ...]] = []
    for shell in range(1, k_max + 1):
        if dim == 1:
            modes.append((shell,))
            continue
        ring = []
        for k1 in range(0, shell + 1):
            for k2 in range(-shell, shell + 1):
                if max(abs(k1), abs(k2)) != shell:
                    continue
                if k1 == 0 and k2 <= 0:
                    continue
                ring.append((k1, k2))
        modes.extend(sorted(ring))
    return modes


def random_holder_sample(
    psi: Modulus,
    seed: int,
    n: int,
    dim: int = 1,
    period: float = DEFAULT_PERIOD,
) -> GridFunction:
    """
    f = sum_k a_k cos(xi_k . (x - x0) + theta0), a_k = psi(min(1/|xi_k|, 1)) |xi_k|^-dim U_k

    U_k ~ U[1/2, 1]; the cusp location x0 and the phase theta0 are random.
    Every mode adds to the cusp with the same sign, so the sample has
    exactly the regularity of psi at x0. Modes are drawn in a fixed order
    so a finer grid extends the same series with higher modes.
    """
    if dim not in (1, 2):
        raise DomainError("only dim 1 and 2 are supported", guard="dim in {1,2}")
    if not _is_power_of_two(n):
        raise DomainError(f"n={n} is not a power of two", guard="n power of two")
    amp_seq, shift_seq = np.random.SeedSequence(int(seed)).spawn(2)
    amp_rng = np.random.Generator(np.random.Philox(amp_seq))
    shift_rng = np.random.Generator(np.random.Philox(shift_seq))
    x0 = shift_rng.uniform(0.0, period, size=dim)
    theta0 = shift_rng.uniform(0.0, 2.0 * np.pi)

    modes = np.array(_mode_list(n, dim), dtype=int).reshape(-1, dim)
    u = amp_rng.uniform(0.5, 1.0, size=len(modes))
    xi_vec = 2.0 * np.pi * modes / period
    xi = np.sqrt(np.sum(xi_vec ** 2, axis=1))
    amp = psi(np.minimum(1.0 / xi, 1.0)) * xi ** (-float(dim)) * u
    theta = theta0 - xi_vec @ x0

    coeffs = np.zeros((n,) * dim, dtype=complex)
    scale = n ** dim / 2.0
    idx = tuple((modes % n).T)
    neg = tuple(((-modes) % n).T)
    coeffs[idx] = scale * amp * np.exp(1j * theta)
    coeffs[neg] = np.conj(coeffs[idx])
    values = np.real(np.fft.ifftn(coeffs))
    return GridFunction(values, period)


def corpus(
    psi: Modulus,
    seeds: Iterable[int],
    n: int,
    dim: int = 1,
    period: float = DEFAULT_PERIOD,
) -> List[GridFunction]:
    return [random_holder_sample(psi, seed, n, dim, period) for seed in seeds]
