import math

import pytest
from scipy.special import gamma

from api.errors import AcceptanceError, ConfigError
from api.models import CheckResult
from config import FREEZING_RTOL
from services import acceptance
from services.acceptance import (
    acceptance_checks,
    check_determinism,
    check_freezing_identity,
    stable_constant,
    verify_all,
)


@pytest.mark.parametrize("alpha", [0.4, 1.0, 1.4])
def test_stable_constant_matches_closed_form(alpha):
    exact = math.pi / (gamma(1.0 + alpha) * math.sin(math.pi * alpha / 2.0))
    assert stable_constant(alpha) == pytest.approx(exact, rel=1e-8)


def test_twelve_named_checks(config_dir):
    names = [name for name, _ in acceptance_checks(config_dir)]
    assert len(names) == len(set(names)) == 12


def test_determinism_check(config_dir):
    result = check_determinism(config_dir)
    assert result.passed and result.value == 0.0


def test_verify_all_reports_every_failure(monkeypatch, config_dir):
    checks = [
        ("good", lambda: CheckResult(name="good", passed=True, value=0.0, threshold=1.0)),
        ("bad", lambda: CheckResult(name="bad", passed=False, value=2.0, threshold=1.0)),
    ]
    monkeypatch.setattr(acceptance, "acceptance_checks", lambda _: checks)
    with pytest.raises(AcceptanceError) as info:
        verify_all(config_dir)
    assert info.value.exit_code == 3
    assert [r.name for r in info.value.results] == ["good", "bad"]
    assert "bad" in str(info.value)
    assert [r.name for r in verify_all(config_dir, only=["good"])] == ["good"]


@pytest.mark.slow
@pytest.mark.parametrize(
    "name",
    ["symbol_oracle", "cauchy_closed_form", "twosided_bound", "freezing_identity", "mollification_rates"],
)
def test_operator_and_kernel_checks(config_dir, name):
    (result,) = verify_all(config_dir, only=[name])
    assert result.passed, result.message


@pytest.mark.slow
def test_verify_all(config_dir):
    results = verify_all(config_dir)
    assert all(r.passed for r in results)


def test_raising_check_is_recorded_and_later_checks_still_run(monkeypatch, config_dir):
    def broken():
        raise ConfigError("mapping config is missing")

    checks = [
        ("broken", broken),
        ("good", lambda: CheckResult(name="good", passed=True, value=0.0, threshold=1.0)),
    ]
    monkeypatch.setattr(acceptance, "acceptance_checks", lambda _: checks)
    with pytest.raises(AcceptanceError) as info:
        verify_all(config_dir)
    broken_result, good_result = info.value.results
    assert broken_result.name == "broken" and not broken_result.passed
    assert "mapping config is missing" in broken_result.message
    assert good_result.passed
    assert "broken" in str(info.value) and "good" not in str(info.value)


def test_freezing_identity_scans_random_samples():
    result = check_freezing_identity(n=256, seeds=[3, 5])
    assert result.name == "freezing_identity"
    assert math.isfinite(result.value) and result.value >= 0.0
    assert result.threshold == pytest.approx(10.0 * FREEZING_RTOL)
    assert result.message in ("worst seed 3", "worst seed 5")
