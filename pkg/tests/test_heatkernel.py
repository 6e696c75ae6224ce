import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from api.errors import CompatibilityError, GridMismatchError, ResolutionError, SingularSymbolError, UnsupportedFamilyError
from services.funcspace import GridFunction, GridSpec, random_holder_sample
from services.heatkernel import (
    SymbolTable,
    apply_multiplier,
    check_chapman_kolmogorov,
    check_derivative_bound,
    check_semigroup_derivative_bound,
    check_twosided,
    compute_symbol,
    density,
    density_at,
    potential_by_time_quadrature,
    semigroup_apply,
    solve_constant,
)
from services.levykernel import KernelCoefficient, LevyKernel, fractional_laplacian_constant
from services.modulus import Modulus

CAUCHY_BOX = GridSpec(4096, 1, 64.0)
X_WINDOW = [2.0 ** -j for j in range(-3, 7)]
T_WINDOW = [0.25, 1.0, 4.0]


def periodized_cauchy(t, x, period):
    a = 2.0 * math.pi / period
    return math.sinh(a * t) / (period * (math.cosh(a * t) - np.cos(a * x)))


# ===== DENSITIES =====

def test_cauchy_density_on_box(stable_half):
    kernel = density(stable_half, 1.0, CAUCHY_BOX)
    x = CAUCHY_BOX.coords()[0][:200]
    assert_allclose(kernel.grid.values[:200], periodized_cauchy(1.0, x, 64.0), rtol=1e-9)
    assert abs(kernel.at(0.0) - 1.0 / math.pi) < 3e-4


def test_cauchy_density_pointwise(stable_half):
    assert_allclose(density_at(stable_half, 1.0, 0.0), 1.0 / math.pi, rtol=1e-8)
    assert_allclose(density_at(stable_half, 2.0, 1.5), 2.0 / (math.pi * (4.0 + 2.25)), rtol=1e-7)


def test_density_mass_and_symmetry(stable_half):
    kernel = density(stable_half, 0.5, CAUCHY_BOX)
    assert abs(kernel.mass() - 1.0) < 1e-6
    values = kernel.grid.values
    assert_allclose(values[1:], values[1:][::-1], atol=1e-15 * values.max())


def test_density_2d_mass(stable_half):
    kernel = density(stable_half, 1.0, GridSpec(256, 2, 32.0))
    assert abs(kernel.mass() - 1.0) < 1e-6
    assert kernel.grid.values.min() >= -1e-8 * kernel.grid.values.max()


def test_density_resolution_error(stable_half):
    with pytest.raises(ResolutionError) as excinfo:
        density(stable_half, 0.01, GridSpec(256, 1, 64.0))
    suggested = excinfo.value.suggested_n
    assert suggested > 256
    density(stable_half, 0.01, GridSpec(suggested, 1, 64.0))


def test_chapman_kolmogorov(stable_half):
    assert check_chapman_kolmogorov(stable_half, 0.5, 1.0, CAUCHY_BOX) <= 1e-8


# ===== TWO-SIDED AND DERIVATIVE ESTIMATES =====

def test_twosided_cauchy(stable_half):
    report = check_twosided(stable_half, T_WINDOW, X_WINDOW + [0.0], CAUCHY_BOX)
    assert report.c_hat <= 10.0
    refined = check_twosided(stable_half, T_WINDOW, X_WINDOW + [0.0], CAUCHY_BOX.refined())
    assert abs(refined.c_hat - report.c_hat) <= 0.01 * report.c_hat


def test_twosided_single_point(stable_half):
    report = check_twosided(stable_half, [1.0], [0.0], CAUCHY_BOX)
    assert_allclose(report.rows[0]["ratio"], 1.0 / math.pi, rtol=1e-3)


def test_derivative_bound(stable_half):
    report = check_derivative_bound(stable_half, 1, T_WINDOW, X_WINDOW + [0.0], CAUCHY_BOX)
    at_origin = [row for row in report.rows if row["x"] == 0.0]
    assert all(row["derivative"] < 1e-10 for row in at_origin)
    assert 0 < report.c_hat < 10.0
    refined = check_derivative_bound(stable_half, 1, T_WINDOW, X_WINDOW + [0.0], CAUCHY_BOX.refined())
    assert abs(refined.c_hat - report.c_hat) <= 0.01 * report.c_hat


# ===== SEMIGROUPS =====

def test_semigroup_eigenfunction(stable_half):
    grid = GridSpec(256)
    f = GridFunction.from_callable(np.cos, 256)
    symbol = SymbolTable.subordinate(stable_half, grid)
    assert_allclose(semigroup_apply(symbol, f, 0.7).values, math.exp(-0.7) * f.values, atol=1e-14)


def test_semigroup_strong_continuity(stable_half, psi_half):
    f = random_holder_sample(psi_half, 1, 256)
    symbol = SymbolTable.subordinate(stable_half, f.spec)
    errors = [(semigroup_apply(symbol, f, t) - f).sup_norm() for t in (1e-2, 1e-4, 1e-6)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-3


def test_semigroup_law_and_contraction(stable_half, psi_half):
    symbol = SymbolTable.subordinate(stable_half, GridSpec(256))
    for seed in range(3):
        f = random_holder_sample(psi_half, seed, 256)
        twice = semigroup_apply(symbol, semigroup_apply(symbol, f, 0.3), 0.4)
        assert_allclose(twice.values, semigroup_apply(symbol, f, 0.7).values, atol=1e-12)
        assert semigroup_apply(symbol, f, 0.3).sup_norm() <= f.sup_norm() * (1.0 + 1e-12)


def test_positivity_preserved(stable_half):
    f = GridFunction.from_callable(lambda x: np.maximum(np.cos(x), 0.0) ** 3, 256)
    pt = semigroup_apply(SymbolTable.subordinate(stable_half, f.spec), f, 0.5)
    assert pt.values.min() >= -1e-8 * f.sup_norm()


def test_density_convolution_matches_symbol(stable_half):
    f = GridFunction.from_callable(lambda x: np.exp(np.cos(2.0 * math.pi * x / 64.0)), 4096, period=64.0)
    by_kernel = semigroup_apply(density(stable_half, 1.0, CAUCHY_BOX), f)
    by_symbol = semigroup_apply(SymbolTable.subordinate(stable_half, CAUCHY_BOX), f, 1.0)
    assert_allclose(by_kernel.values, by_symbol.values, atol=1e-10)


def test_semigroup_grid_mismatch(stable_half):
    symbol = SymbolTable.subordinate(stable_half, GridSpec(128))
    with pytest.raises(GridMismatchError):
        semigroup_apply(symbol, GridFunction.constant(1.0, 256), 1.0)


def test_semigroup_derivative_bound(stable_half, psi_half):
    f = random_holder_sample(psi_half, 4, 1024)
    t_list = [2.0 ** -j for j in range(0, 9)]
    first = check_semigroup_derivative_bound(stable_half, f, 1, t_list)
    assert 0 < first.c_hat < 10.0
    second = check_semigroup_derivative_bound(stable_half, f, 2, t_list)
    assert 0 < second.c_hat < 100.0


def test_semigroup_derivative_of_constant(stable_half):
    report = check_semigroup_derivative_bound(stable_half, GridFunction.constant(2.0, 128), 1, [0.1, 1.0])
    assert report.c_hat < 1e-12


# ===== CONSTANT-COEFFICIENT SOLVES =====

def test_solve_eigenfunction():
    grid = GridSpec(128)
    f = GridFunction.from_callable(lambda x: np.cos(3.0 * x), 128)
    symbol = SymbolTable.fractional(1.0, grid)
    u = solve_constant(symbol, f)
    assert_allclose(u.values, -np.cos(3.0 * grid.coords()[0]) / 3.0, atol=1e-14)


def test_solve_residual(stable_half, psi_half):
    f = random_holder_sample(psi_half, 9, 512)
    symbol = SymbolTable.subordinate(stable_half, f.spec)
    u = solve_constant(symbol, f)
    assert (apply_multiplier(symbol, u) - f).sup_norm() <= 1e-6 * f.sup_norm()


def test_solve_requires_zero_mean(stable_half):
    f = GridFunction.from_callable(lambda x: 1.0 + np.cos(x), 64)
    with pytest.raises(CompatibilityError):
        solve_constant(SymbolTable.subordinate(stable_half, f.spec), f)


def test_solve_singular_symbol():
    grid = GridSpec(64)
    values = grid.frequency_norm().copy()
    values[5] = 0.0
    with pytest.raises(SingularSymbolError):
        solve_constant(SymbolTable(grid, values), GridFunction.from_callable(np.cos, 64))


def test_potential_by_time_quadrature(stable_half, psi_half):
    f = random_holder_sample(psi_half, 2, 256)
    symbol = SymbolTable.subordinate(stable_half, f.spec)
    potential = potential_by_time_quadrature(symbol, f)
    u = solve_constant(symbol, f)
    assert_allclose(potential.values, -u.values, atol=1e-6 * u.sup_norm())


# ===== NUMERICAL SYMBOLS =====

@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_symbol_pure_power(alpha):
    grid = GridSpec(64)
    table = compute_symbol(LevyKernel(Modulus.power(alpha)), grid)
    c_alpha = math.pi / (math.gamma(1.0 + alpha) * math.sin(math.pi * alpha / 2.0))
    xi = np.abs(grid.wavenumbers()[0])
    assert table.values[0] == 0.0
    assert_allclose(table.values[1:], c_alpha * xi[1:] ** alpha, rtol=1e-7)
    assert_allclose(table.values[2] / table.values[1], 2.0 ** alpha, rtol=1e-7)


def test_symbol_matches_subordinate(stable_04):
    grid = GridSpec(32)
    constant = fractional_laplacian_constant(0.8, 1)
    kernel = LevyKernel.from_bernstein(stable_04, coefficient=KernelCoefficient.constant(constant))
    numeric = compute_symbol(kernel, grid)
    assert_allclose(numeric.values, SymbolTable.subordinate(stable_04, grid).values, rtol=1e-6, atol=1e-12)


def test_symbol_2d(stable_half):
    grid = GridSpec(16, 2)
    constant = fractional_laplacian_constant(1.0, 2)
    kernel = LevyKernel.from_bernstein(stable_half, dim=2, coefficient=KernelCoefficient.constant(constant))
    numeric = compute_symbol(kernel, grid)
    assert_allclose(numeric.values, grid.frequency_norm(), rtol=1e-6, atol=1e-12)


def test_symbol_is_even_and_positive():
    table = compute_symbol(LevyKernel(Modulus.power(0.7), coefficient=KernelCoefficient.bump(0.3)), GridSpec(32))
    values = table.values
    assert np.all(values[1:] > 0)
    assert_allclose(values[1:], values[1:][::-1], rtol=1e-14)


def test_symbol_rejects_asymmetric():
    kernel = LevyKernel(Modulus.power(0.7), coefficient=KernelCoefficient.asymmetric(0.3))
    with pytest.raises(UnsupportedFamilyError):
        compute_symbol(kernel, GridSpec(32))
