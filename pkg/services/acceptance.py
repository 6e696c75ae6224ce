"""
Acceptance - the verify-all checks
Each check returns a CheckResult; verify_all raises AcceptanceError when any fails
"""

import logging
import math
import tempfile
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from api.errors import AcceptanceError, NonlocalError
from api.models import CheckResult, ExperimentConfig
from config import FREEZING_RTOL
from services.experiments import (
    derivative_bound_sweep,
    freezing_residual,
    mapping_ratio,
    mollification_rates,
    norm_equivalence,
    perturbation_suite,
    schauder_ratio,
    twosided_sweep,
)
from services.funcspace import GridFunction, GridSpec, random_holder_sample
from services.heatkernel import density, density_at
from services.levykernel import KernelCoefficient, LevyKernel
from services.modulus import BernsteinSpec, Modulus
from services.montecarlo import ks_compare, sample_sbm
from services.nonlocal_operator import Cutoff, OperatorSpec, apply_L0
from utils.overrides import load_config
from utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)

CAUCHY_BOX = GridSpec(4096, 1, 64.0)
SCHAUDER_CONFIGS = ("stable_alpha1_psi05.json", "stable_alpha06_psi03.json", "high_order_psi05.json")
MAPPING_CONFIG = "mapping_cosine.json"
PERTURBATION_CONFIG = "perturbation_cosine.json"
RESEED_OFFSET = 1000


def _result(name: str, value: float, threshold: float, passed: bool, message: str = "") -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), value=float(value), threshold=float(threshold), message=message)


def stable_constant(alpha: float) -> float:
    """int_R (1 - cos t) |t|^{-1-alpha} dt by direct quadrature"""
    head, _ = integrate.quad(lambda t: (1.0 - math.cos(t)) * t ** (-1.0 - alpha), 0.0, 1.0, limit=200, epsabs=1e-13)
    wave, _ = integrate.quad(lambda t: t ** (-1.0 - alpha), 1.0, np.inf, weight="cos", wvar=1.0)
    return 2.0 * (head + 1.0 / alpha - wave)


# ===== OPERATORS AND KERNELS =====

def check_symbol_oracle(n: int = 2048, xi0: float = 3.0) -> CheckResult:
    worst = 0.0
    for alpha in (0.4, 1.0, 1.4):
        spec = OperatorSpec.for_kernel(LevyKernel(Modulus.power(alpha)))
        u = GridFunction.from_callable(lambda x: np.cos(xi0 * x), n)
        expected = -stable_constant(alpha) * xi0 ** alpha
        error = (apply_L0(spec, u) - expected * u).sup_norm() / abs(expected)
        worst = max(worst, error)
    return _result("symbol_oracle", worst, 1e-3, worst <= 1e-3)


def check_cauchy_closed_form() -> CheckResult:
    """Pointwise density(0) against 1/pi and the grid against the periodized closed form"""
    b = BernsteinSpec.stable(0.5)
    point = abs(density_at(b, 1.0, 0.0) - 1.0 / math.pi)
    kernel = density(b, 1.0, CAUCHY_BOX)
    x = CAUCHY_BOX.coords()[0]
    a = 2.0 * math.pi / CAUCHY_BOX.period
    exact = math.sinh(a) / (CAUCHY_BOX.period * (math.cosh(a) - np.cos(a * x)))
    grid_error = float(np.max(np.abs(kernel.grid.values - exact)))
    worst = max(point, grid_error)
    return _result("cauchy_closed_form", worst, 1e-5, worst <= 1e-5, f"pointwise {point:.2e}, grid {grid_error:.2e}")


def check_twosided() -> CheckResult:
    x_list = [2.0 ** -j for j in range(-3, 7)]
    worst_c, worst_change = 0.0, 0.0
    for b in (BernsteinSpec.stable(0.5), BernsteinSpec.stable_log(0.3, 0.4)):
        sweep = twosided_sweep(b, [0.25, 1.0, 4.0], x_list, CAUCHY_BOX)
        worst_c = max(worst_c, sweep["c_hat"])
        worst_change = max(worst_change, sweep["change"])
    passed = worst_c <= 10.0 and worst_change < 0.01
    return _result("twosided_bound", worst_c, 10.0, passed, f"largest change under refinement {worst_change:.2%}")


def check_derivative_bound() -> CheckResult:
    rows = derivative_bound_sweep(
        [BernsteinSpec.stable(0.4), BernsteinSpec.stable(0.5)],
        [1, 2],
        [2.0 ** -j for j in range(0, 9)],
        [1024, 2048],
        Modulus.power(0.5),
    )
    growth = max(row["growth"] for row in rows)
    finite = all(math.isfinite(c) for row in rows for c in row["c_hat"])
    return _result("derivative_bound", growth, 2.0, finite and growth < 2.0)


# ===== FUNCTION SPACES =====

def check_norm_equivalence(seeds: Sequence[int] = range(32)) -> CheckResult:
    worst_c, worst_change = 0.0, 0.0
    for psi in (Modulus.power(0.5), Modulus.power_log(0.5, 1.0), Modulus.power(1.5)):
        report = norm_equivalence(psi, seeds, [1024, 2048])
        c_values = [report.details["forward_max"], report.details["backward_max"]]
        worst_c = max(worst_c, *c_values)
        worst_change = max(worst_change, report.stability())
    passed = worst_c <= 50.0 and worst_change < 0.25
    return _result("norm_equivalence", worst_c, 50.0, passed, f"largest change under refinement {worst_change:.2%}")


def check_mollification(seeds: Sequence[int] = range(32)) -> CheckResult:
    result = mollification_rates(Modulus.power(0.5), seeds, 2048, [2.0 ** -j for j in range(3, 8)])
    m = result["m_psi"]
    first_ok = result["slope_error"] >= m - 0.1
    second_gap = abs(result["slope_second"] - (m - 2.0))
    message = f"slopes {result['slope_error']:.3f} and {result['slope_second']:.3f}"
    return _result("mollification_rates", second_gap, 0.2, first_ok and second_gap <= 0.2, message)


def check_freezing_identity(n: int = 1024, seeds: Sequence[int] = range(4)) -> CheckResult:
    """Worst relative product-rule residual over random C^{phi psi} samples, radii and centres"""
    spec = OperatorSpec.for_kernel(LevyKernel(Modulus.power(0.6), coefficient=KernelCoefficient.cosine(0.5)))
    grid = GridSpec(n)
    phipsi = Modulus.power(0.9)
    worst, worst_seed = 0.0, None
    for seed in seeds:
        u = random_holder_sample(phipsi, seed, n)
        for r in (1.0, 0.75):
            for x0 in (math.pi, 2.0):
                residual, scale = freezing_residual(spec, u, Cutoff.build(grid, [x0], r))
                if residual / scale >= worst:
                    worst, worst_seed = residual / scale, seed
    budget = 10.0 * FREEZING_RTOL
    return _result("freezing_identity", worst, budget, worst <= budget, f"worst seed {worst_seed}")


# ===== EXPERIMENTS =====

def _reseeded(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fresh corpus at the base resolution only"""
    sweeps = cfg.sweeps.model_copy(update={"resolutions": [cfg.grid.n]})
    return cfg.model_copy(update={"seeds": [s + RESEED_OFFSET for s in cfg.seeds], "sweeps": sweeps})


def check_schauder(config_dir: Path) -> CheckResult:
    worst = 0.0
    notes = []
    for name in SCHAUDER_CONFIGS:
        cfg = load_config(config_dir / name)
        report = schauder_ratio(cfg)
        reseeded = schauder_ratio(_reseeded(cfg))
        reseed_change = abs(reseeded.c_hat - report.c_hat) / report.c_hat
        worst = max(worst, report.stability(), reseed_change)
        notes.append(f"{cfg.name} {report.prop_branch}: c_hat {report.c_hat:.4g}")
    return _result("schauder_stability", worst, 0.10, worst < 0.10, "; ".join(notes))


def check_mapping(config_dir: Path) -> CheckResult:
    report = mapping_ratio(load_config(config_dir / MAPPING_CONFIG))
    change = report.stability()
    return _result("mapping_stability", change, 0.10, math.isfinite(report.c_hat) and change < 0.10)


def check_montecarlo(n: int = 100_000) -> CheckResult:
    worst = 0.0
    matches = {}
    for alpha in (0.3, 0.5, 0.7):
        grid = GridSpec(8192, 1, 64.0) if alpha < 0.4 else CAUCHY_BOX
        q = density(BernsteinSpec.stable(alpha), 1.0, grid)
        statistic = ks_compare(sample_sbm(alpha, 1.0, n, seed=10).increments, q).statistic
        matches[alpha] = (q, statistic)
        worst = max(worst, statistic)
    controls = []
    for alpha in (0.3, 0.5):
        q, match = matches[alpha]
        mismatch = ks_compare(sample_sbm(alpha + 0.2, 1.0, n, seed=11).increments, q).statistic
        controls.append(mismatch >= 0.03 and mismatch > 5.0 * match)
    return _result("montecarlo_ks", worst, 0.02, worst <= 0.02 and all(controls), f"negative controls {controls}")


def check_perturbation(config_dir: Path) -> CheckResult:
    report = perturbation_suite(load_config(config_dir / PERTURBATION_CONFIG))
    coefficients = [row.coefficient for row in report.rows]
    return _result("perturbation_decay", coefficients[-1], coefficients[0], report.monotone, f"coefficients {coefficients}")


def check_determinism(config_dir: Path) -> CheckResult:
    """Same config and seeds twice: byte-identical CSVs"""
    cfg = load_config(config_dir / SCHAUDER_CONFIGS[0], ["grid.n=256", "seeds=[0,1,2,3]", "sweeps.resolutions=[256,512]"])
    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in ("first", "second"):
            writer = ReportWriter(Path(tmp) / run)
            writer.write_ratio_report(schauder_ratio(cfg))
            digests.append({p.name: p.read_bytes() for p in writer.written if p.suffix == ".csv"})
    identical = digests[0] == digests[1]
    return _result("determinism", 0.0 if identical else 1.0, 0.0, identical)


# ===== VERIFY ALL =====

def acceptance_checks(config_dir: Path) -> List[Tuple[str, Callable[[], CheckResult]]]:
    return [
        ("symbol_oracle", check_symbol_oracle),
        ("cauchy_closed_form", check_cauchy_closed_form),
        ("twosided_bound", check_twosided),
        ("derivative_bound", check_derivative_bound),
        ("norm_equivalence", check_norm_equivalence),
        ("mollification_rates", check_mollification),
        ("freezing_identity", check_freezing_identity),
        ("schauder_stability", lambda: check_schauder(config_dir)),
        ("mapping_stability", lambda: check_mapping(config_dir)),
        ("montecarlo_ks", check_montecarlo),
        ("perturbation_decay", lambda: check_perturbation(config_dir)),
        ("determinism", lambda: check_determinism(config_dir)),
    ]


def verify_all(config_dir: Path, only: Optional[Sequence[str]] = None) -> List[CheckResult]:
    """Runs the checks in order; raises AcceptanceError after all have run if any failed"""
    results = []
    for name, check in acceptance_checks(Path(config_dir)):
        if only and name not in only:
            continue
        start = time.perf_counter()
        try:
            result = check()
        except NonlocalError as exc:
            logger.error("acceptance check raised", extra={"check": name, "error": exc.describe()})
            result = CheckResult(name=name, passed=False, message=exc.describe())
        result.seconds = time.perf_counter() - start
        logger.info("acceptance check", extra={"check": name, "passed": result.passed, "value": result.value, "seconds": result.seconds})
        results.append(result)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise AcceptanceError(f"acceptance checks failed: {', '.join(failed)}", results)
    return results
