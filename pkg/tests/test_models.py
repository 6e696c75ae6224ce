import json
import math
from typing import get_args

import pytest
from pydantic import ValidationError

from api.models import (
    BernsteinModel,
    CheckResult,
    CoefficientKind,
    CoefficientSpec,
    ExperimentConfig,
    GridConfig,
    KernelSpec,
    ModulusSpec,
    RatioReport,
    ResolutionPoint,
)
from services.experiments import operator_spec
from services.levykernel import COEFFICIENT_FACTORIES
from services.modulus import Family
from utils.overrides import load_config

BASE = {
    "psi": {"family": "power", "alpha": 0.5},
    "kernel": {"varphi": {"family": "power", "alpha": 1.0}},
}


def test_defaults_fill_in():
    cfg = ExperimentConfig.model_validate(BASE)
    assert cfg.grid.n == 1024
    assert cfg.seeds == list(range(32))
    assert cfg.resolutions() == [1024, 2048]
    assert cfg.freezing_point() == [pytest.approx(math.pi)]
    assert cfg.symbol == "quadrature"


def test_explicit_resolutions_and_point():
    cfg = ExperimentConfig.model_validate({**BASE, "sweeps": {"resolutions": [64, 128, 256]}, "x0": [1.0]})
    assert cfg.resolutions() == [64, 128, 256]
    assert cfg.freezing_point() == [1.0]


@pytest.mark.parametrize("n", [0, 6, 100, 1000])
def test_grid_must_be_power_of_two(n):
    with pytest.raises(ValidationError):
        GridConfig(n=n)


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**BASE, "gird": {"n": 64}})


def test_seeds_must_be_distinct():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**BASE, "seeds": [1, 1]})


def test_x0_dimension_checked():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**BASE, "x0": [1.0, 2.0]})


def test_modulus_parameters():
    with pytest.raises(ValidationError):
        ModulusSpec(family="power")
    with pytest.raises(ValidationError):
        ModulusSpec(family="power_log1p", alpha=0.5)
    with pytest.raises(ValidationError):
        ModulusSpec(family="tabulated", r=[0.1, 1.0], values=[0.5])
    assert ModulusSpec(family="power_log", alpha=0.5, beta=1.0).build().family is Family.POWER_LOG


def test_kernel_needs_an_order_source():
    with pytest.raises(ValidationError):
        KernelSpec()
    kernel = KernelSpec(bernstein=BernsteinModel(alpha=0.4)).build()
    assert kernel.varphi(1.0) == pytest.approx(1.0)


def test_bernstein_index_range():
    with pytest.raises(ValidationError):
        BernsteinModel(alpha=1.0)


def test_config_hash_is_stable_and_sensitive():
    first = ExperimentConfig.model_validate(BASE)
    second = ExperimentConfig.model_validate(dict(reversed(list(BASE.items()))))
    assert first.config_hash() == second.config_hash()
    changed = ExperimentConfig.model_validate({**BASE, "seeds": [0, 1]})
    assert changed.config_hash() != first.config_hash()


def test_schema_is_published():
    schema = ExperimentConfig.model_json_schema()
    assert {"psi", "kernel", "grid", "seeds"} <= set(schema["properties"])
    assert schema["required"] == ["psi", "kernel"]


def test_ratio_report_rejects_nonfinite_ratios():
    with pytest.raises(ValidationError):
        RatioReport(experiment="x", ratios=[1.0, math.inf], seeds=[0, 1], c_hat=1.0)
    with pytest.raises(ValidationError):
        RatioReport(experiment="x", ratios=[-0.5], seeds=[0], c_hat=1.0)


def test_ratio_report_stability_and_rows():
    report = RatioReport(
        experiment="schauder",
        ratios=[1.0, 2.0],
        seeds=[3, 4],
        c_hat=2.0,
        resolution_trace=[ResolutionPoint(n=256, c_hat=2.0), ResolutionPoint(n=512, c_hat=2.2)],
    )
    assert report.stability() == pytest.approx(0.1)
    assert report.rows() == [{"seed": 3, "ratio": 1.0}, {"seed": 4, "ratio": 2.0}]
    assert RatioReport(experiment="x", ratios=[1.0], seeds=[0], c_hat=1.0).stability() == 0.0


def test_check_result_defaults():
    result = CheckResult(name="determinism", passed=True)
    assert result.seconds == 0.0 and result.message == ""


def test_coefficient_kinds_match_the_registry():
    assert set(get_args(CoefficientKind)) == set(COEFFICIENT_FACTORIES)


def test_unknown_coefficient_kind_rejected_at_load():
    with pytest.raises(ValidationError, match="kind"):
        ExperimentConfig.model_validate({**BASE, "kernel": {**BASE["kernel"], "coefficient": {"kind": "cos"}}})
    assert "cosine" in json.dumps(ExperimentConfig.model_json_schema())


def test_bad_coefficient_params_rejected_at_load():
    with pytest.raises(ValidationError, match="frequency"):
        CoefficientSpec(kind="cosine", params={"frequency": 2})
    with pytest.raises(ValidationError, match="amplitude"):
        CoefficientSpec(kind="cosine", params={"amplitude": 1.5})


def test_every_shipped_config_builds_its_operator(config_dir):
    for path in sorted(config_dir.glob("*.json")):
        cfg = load_config(path)
        kernel = cfg.kernel.build(cfg.grid.dim)
        assert kernel.coefficient is not None
        if cfg.symbol != "subordinate":
            assert operator_spec(cfg).kernel.varphi.label, path.name
