import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from api.errors import OrderAmbiguityError, RangeError
from api.models import ExperimentConfig
from services.experiments import (
    check_psi,
    derivative_bound_sweep,
    far_band_tail,
    interpolation_check,
    mapping_item,
    mapping_ratio,
    mollification_rates,
    norm_equivalence,
    operator_spec,
    perturbation_suite,
    product_check,
    potential_item,
    potential_regularity,
    prop_branch,
    schauder_item,
    schauder_ratio,
    twosided_sweep,
)
from services.funcspace import GridFunction, GridSpec, holder_norm, random_holder_sample
from services.heatkernel import SymbolTable
from services.levykernel import fractional_laplacian_constant
from services.modulus import Modulus


def make_config(**overrides) -> ExperimentConfig:
    raw = {
        "psi": {"family": "power", "alpha": 0.5},
        "kernel": {"varphi": {"family": "power", "alpha": 1.0}},
        "grid": {"n": 256},
        "seeds": [0, 1, 2, 3],
        "symbol": "fractional",
        "sweeps": {"resolutions": [256, 512]},
    }
    raw.update(overrides)
    return ExperimentConfig.model_validate(raw)


# ===== INDEX GUARDS =====

@pytest.mark.parametrize("alpha, branch", [(0.5, "(0,1)"), (1.5, "(1,2)"), (2.3, "(2,3)")])
def test_prop_branch(alpha, branch):
    assert prop_branch(Modulus.power(alpha)) == branch


def test_prop_branch_rejects_integers_and_large_orders():
    with pytest.raises(OrderAmbiguityError):
        prop_branch(Modulus.power(2.0))
    with pytest.raises(RangeError):
        prop_branch(Modulus.power(3.5))


def test_integer_psi_is_a_guard_failure():
    with pytest.raises(OrderAmbiguityError) as excinfo:
        check_psi(Modulus.power(1.0))
    assert excinfo.value.exit_code == 2
    assert "integer-order exclusion" in excinfo.value.describe()


def test_schauder_config_with_integer_psi():
    with pytest.raises(OrderAmbiguityError):
        schauder_ratio(make_config(psi={"family": "power", "alpha": 1.0}))


# ===== SCHAUDER AND POTENTIAL RATIOS =====

def test_schauder_eigenfunction_round_trip():
    grid = GridSpec(256)
    psi, phipsi = Modulus.power(0.5), Modulus.power(1.5)
    symbol = SymbolTable.fractional(1.0, grid)
    f = GridFunction.from_callable(lambda x: -3.0 * np.cos(3.0 * x), 256)
    item = schauder_item(symbol, f, psi, phipsi)
    u = GridFunction.from_callable(lambda x: np.cos(3.0 * x), 256)
    assert_allclose(item["u_sup"], 1.0, rtol=1e-12)
    assert_allclose(item["u_norm"], holder_norm(u, phipsi).norm, rtol=1e-10)
    assert_allclose(item["ratio"], item["u_norm"] / (1.0 + holder_norm(f, psi).norm), rtol=1e-12)


def test_schauder_ratio_invariant_under_rescaling():
    grid = GridSpec(256)
    psi, phipsi = Modulus.power(0.5), Modulus.power(1.5)
    symbol = SymbolTable.fractional(1.0, grid)
    f = random_holder_sample(psi, 5, 256)
    assert_allclose(schauder_item(symbol, 2.0 * f, psi, phipsi)["ratio"], schauder_item(symbol, f, psi, phipsi)["ratio"], rtol=1e-10)


def test_schauder_ratio_report():
    report = schauder_ratio(make_config())
    assert report.prop_branch == "(1,2)"
    assert report.seeds == [0, 1, 2, 3] and len(report.ratios) == 4
    assert [point.n for point in report.resolution_trace] == [256, 512]
    assert 0 < report.c_hat < math.inf
    assert report.c_hat == max(report.ratios)
    assert len(report.config_hash) == 64


def test_schauder_independent_of_threads():
    single = schauder_ratio(make_config(threads=1))
    pooled = schauder_ratio(make_config(threads=3))
    assert single.ratios == pooled.ratios


def test_quadrature_symbol_matches_fractional_laplacian():
    constant = fractional_laplacian_constant(1.0, 1)
    kernel = {"varphi": {"family": "power", "alpha": 1.0}, "coefficient": {"kind": "constant", "params": {"value": constant}}}
    closed = schauder_ratio(make_config(kernel=kernel, sweeps={"resolutions": [256]}))
    numeric = schauder_ratio(make_config(kernel=kernel, symbol="quadrature", sweeps={"resolutions": [256]}))
    assert abs(numeric.c_hat - closed.c_hat) <= 0.2 * closed.c_hat
    assert_allclose(numeric.ratios, closed.ratios, rtol=1e-4)


def test_subordinate_symbol_source():
    report = schauder_ratio(
        make_config(
            kernel={"bernstein": {"family": "stable", "alpha": 0.4}},
            symbol="subordinate",
            sweeps={"resolutions": [256]},
        )
    )
    constant = {"kind": "constant", "params": {"value": fractional_laplacian_constant(0.8, 1)}}
    fractional = schauder_ratio(
        make_config(kernel={"varphi": {"family": "power", "alpha": 0.8}, "coefficient": constant}, sweeps={"resolutions": [256]})
    )
    assert_allclose(report.ratios, fractional.ratios, rtol=1e-10)


def test_potential_matches_schauder_bookkeeping():
    grid = GridSpec(256)
    psi, phipsi = Modulus.power(0.5), Modulus.power(1.5)
    symbol = SymbolTable.fractional(1.0, grid)
    f = random_holder_sample(psi, 3, 256)
    schauder = schauder_item(symbol, f, psi, phipsi)
    potential = potential_item(symbol, f, psi, phipsi)
    assert potential["rf_norm"] == schauder["u_norm"]
    assert potential["ratio"] == schauder["ratio"]
    by_time = potential_item(symbol, f, psi, phipsi, realization="time_quadrature")
    assert_allclose(by_time["ratio"], schauder["ratio"], rtol=1e-5)


def test_potential_high_order_branch():
    cfg = make_config(kernel={"varphi": {"family": "power", "alpha": 1.8}}, seeds=[0, 1])
    report = potential_regularity(cfg)
    assert report.prop_branch == "(2,3)"
    assert 0 < report.c_hat < math.inf


# ===== MAPPING RATIO =====

def test_mapping_constant_is_zero():
    cfg = make_config(kernel={"varphi": {"family": "power", "alpha": 0.6}}, psi={"family": "power", "alpha": 0.3})
    item = mapping_item(operator_spec(cfg), GridFunction.constant(2.0, 256), Modulus.power(0.3), Modulus.power(0.9))
    assert item["ratio"] == 0.0


def test_mapping_ratio_variable_coefficient():
    cfg = make_config(
        kernel={"varphi": {"family": "power", "alpha": 0.6}, "coefficient": {"kind": "cosine", "params": {"amplitude": 0.5}}},
        psi={"family": "power", "alpha": 0.3},
        seeds=[0, 1],
    )
    report = mapping_ratio(cfg)
    assert report.prop_branch == "(0,1)"
    assert 0 < report.c_hat < math.inf


# ===== PERTURBATION SUITE =====

def perturbation_config(coefficient):
    return make_config(
        kernel={"varphi": {"family": "power", "alpha": 0.6}, "coefficient": coefficient},
        psi={"family": "power", "alpha": 0.3},
        seeds=[0, 1],
        sweeps={"r": [0.5, 0.25, 0.125]},
        symbol="quadrature",
    )


def test_perturbation_constant_coefficient_vanishes():
    report = perturbation_suite(perturbation_config({"kind": "constant"}))
    assert all(row.coefficient == 0.0 for row in report.rows)
    assert report.monotone


@pytest.mark.slow
def test_perturbation_coefficient_decays_with_radius():
    report = perturbation_suite(perturbation_config({"kind": "cosine", "params": {"amplitude": 0.5}}))
    assert [row.r for row in report.rows] == [0.5, 0.25, 0.125]
    assert report.monotone
    assert all(row.fit_epsilon >= 0 and row.fit_constant >= 0 for row in report.rows)
    assert report.rows[0].freezing_residual <= report.rows[0].freezing_budget


# ===== FUNCTION-SPACE CHECKS =====

def test_norm_equivalence_bounded():
    report = norm_equivalence(Modulus.power(0.5), range(4), [256, 512])
    assert report.c_hat <= 50.0
    assert report.details["forward_max"] >= 1.0 - 1e-12


def test_interpolation_constants_grow_as_eps_shrinks():
    result = interpolation_check(Modulus.power(0.3), Modulus.power(0.7), range(4), 256)
    constants = [row["constant"] for row in result["rows"]]
    assert all(math.isfinite(c) for c in constants)
    assert constants == sorted(constants)


def test_product_check():
    result = product_check(Modulus.power(0.5), range(4), 256)
    assert 0 < result["c_hat"] < 10.0
    assert len(result["ratios"]) == 4


def test_mollification_rates():
    result = mollification_rates(Modulus.power(0.5), range(4), 2048, [2.0 ** -j for j in range(3, 8)])
    assert result["slope_error"] >= 0.5 - 0.1
    assert abs(result["slope_second"] - (0.5 - 2.0)) <= 0.2


# ===== HEAT KERNEL SWEEPS =====

def test_derivative_bound_sweep(stable_half, psi_half):
    rows = derivative_bound_sweep([stable_half], [1, 2], [2.0 ** -j for j in range(0, 9)], [1024, 2048], psi_half)
    assert [row["k"] for row in rows] == [1, 2]
    assert all(row["growth"] < 2.0 for row in rows)


def test_twosided_sweep(stable_half):
    result = twosided_sweep(stable_half, [0.25, 1.0, 4.0], [2.0 ** -j for j in range(-3, 7)], GridSpec(4096, 1, 64.0))
    assert result["c_hat"] <= 10.0
    assert result["change"] < 0.01


def test_far_band_tail_is_sharp_for_stable(stable_04):
    tail = far_band_tail(stable_04, 2.0)
    assert tail["delta1"] == pytest.approx(0.4, rel=1e-4)
    assert tail["far_mass"] == pytest.approx(1.0 / (0.8 * 2.0 ** 0.8), rel=1e-4)
    assert tail["far_mass"] <= tail["tail_bound"] * (1.0 + 1e-4)


def test_far_band_tail_is_logged(stable_log, caplog):
    with caplog.at_level("DEBUG", logger="services.experiments"):
        tail = far_band_tail(stable_log, 2.0)
    assert 0.0 < tail["far_mass"] and math.isfinite(tail["tail_bound"])
    assert any(getattr(rec, "tail_bound", None) == tail["tail_bound"] for rec in caplog.records)
