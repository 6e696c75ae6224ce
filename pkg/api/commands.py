"""
Commands - one handler per subcommand
Each handler takes the validated config and a ReportWriter and returns an exit code
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List

from api.errors import AcceptanceError, PreconditionError
from api.models import CheckResult, ExperimentConfig
from config import NONLOCAL_THREADS
from services.acceptance import verify_all
from services.experiments import (
    build_symbol,
    derivative_bound_sweep,
    mapping_ratio,
    mollification_rates,
    norm_equivalence,
    operator_spec,
    perturbation_suite,
    potential_regularity,
    prop_branch,
    product_check,
    schauder_ratio,
    twosided_sweep,
)
from services.funcspace import holder_norm, random_holder_sample
from services.heatkernel import density, solve_constant
from services.modulus import BernsteinSpec
from services.montecarlo import export_rows, ks_compare, sample_sbm
from services.nonlocal_operator import apply_L, apply_L0
from utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)

Handler = Callable[[ExperimentConfig, ReportWriter], int]


def _bernstein(cfg: ExperimentConfig) -> BernsteinSpec:
    if cfg.kernel.bernstein is None:
        raise PreconditionError("this command needs kernel.bernstein", guard="bernstein given")
    return cfg.kernel.bernstein.build()


def _grid_rows(values, coords) -> List[Dict]:
    """Flattened (x1, ..., value) rows of a grid"""
    flat = [c.ravel() for c in coords]
    return [
        {**{f"x{j + 1}": float(axis[i]) for j, axis in enumerate(flat)}, "value": float(v)}
        for i, v in enumerate(values.ravel())
    ]


# ===== FUNCTION SPACES =====

def run_norms(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    psi = cfg.psi.build()
    report = norm_equivalence(psi, cfg.seeds, cfg.resolutions(), cfg.grid.dim, cfg.threads or NONLOCAL_THREADS, cfg.config_hash())
    writer.write_ratio_report(report)
    product = product_check(psi, cfg.seeds, cfg.grid.n)
    writer.write_csv("product.csv", [{"seed": s, "ratio": r} for s, r in zip(cfg.seeds, product["ratios"])])
    if prop_branch(psi, "psi") == "(0,1)":
        rates = mollification_rates(psi, cfg.seeds, cfg.grid.n, cfg.sweeps.eps)
        writer.write_csv("mollification.csv", rates["rows"], ["eps", "error", "second"])
        writer.write_json("mollification.json", {k: v for k, v in rates.items() if k != "rows"})
    return 0


# ===== OPERATORS =====

def run_symbol(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    grid = cfg.grid.to_spec()
    symbol = build_symbol(cfg, grid)
    writer.write_grid("symbol", symbol)
    norms, values = symbol.radial()
    writer.write_csv("symbol.csv", [{"xi": k, "symbol": v} for k, v in zip(norms, values)], ["xi", "symbol"])
    writer.write_report({"label": symbol.label, "n": grid.n, "dim": grid.dim, "min_positive": symbol.min_positive()})
    return 0


def run_apply(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    """L u and L0 u on the first corpus sample"""
    spec = operator_spec(cfg)
    psi = cfg.psi.build()
    u = random_holder_sample(psi, cfg.seeds[0], cfg.grid.n, cfg.grid.dim, cfg.grid.period)
    lu = apply_L(spec, u)
    l0u = apply_L0(spec, u, cfg.freezing_point())
    for stem, g in (("u", u), ("Lu", lu), ("L0u", l0u)):
        writer.write_grid(stem, g)
    writer.write_report(
        {
            "seed": cfg.seeds[0],
            "u_sup": u.sup_norm(),
            "u_norm": holder_norm(u, psi).norm,
            "Lu_sup": lu.sup_norm(),
            "L0u_sup": l0u.sup_norm(),
            "x0": cfg.freezing_point(),
        }
    )
    return 0


def run_solve(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    """u with L0 u = f for the first corpus sample"""
    grid = cfg.grid.to_spec()
    psi = cfg.psi.build()
    f = random_holder_sample(psi, cfg.seeds[0], grid.n, grid.dim, grid.period)
    u = solve_constant(build_symbol(cfg, grid), f)
    writer.write_grid("f", f)
    writer.write_grid("u", u)
    if grid.dim == 1:
        rows = [{"x": x, "f": fv, "u": uv} for x, fv, uv in zip(grid.coords()[0], f.values, u.values)]
        writer.write_csv("solution.csv", rows, ["x", "f", "u"])
    writer.write_report({"seed": cfg.seeds[0], "f_sup": f.sup_norm(), "u_sup": u.sup_norm(), "f_norm": holder_norm(f, psi).norm})
    return 0


# ===== HEAT KERNEL AND SAMPLING =====

def run_heatkernel(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    b = _bernstein(cfg)
    grid = cfg.grid.to_spec()
    masses = []
    for i, t in enumerate(cfg.sweeps.t):
        kernel = density(b, t, grid)
        writer.write_grid(f"density_{i}", kernel)
        writer.write_csv(f"density_{i}.csv", _grid_rows(kernel.grid.values, grid.coords()))
        masses.append({"t": t, "mass": kernel.mass(), "spectral_cutoff": kernel.spectral_cutoff})
    bounds = twosided_sweep(b, cfg.sweeps.t, cfg.sweeps.x, grid)
    writer.write_csv("twosided.csv", bounds.pop("rows"), ["t", "x", "q", "bound", "ratio"])
    derivative = derivative_bound_sweep([b], cfg.sweeps.k, cfg.sweeps.t, cfg.resolutions(), cfg.psi.build())
    writer.write_report({"bernstein": b.label, "masses": masses, "twosided": bounds, "derivative": derivative})
    return 0


def run_simulate(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    mc = cfg.montecarlo
    sample = sample_sbm(mc.alpha, mc.t, mc.n, mc.dim, mc.seed, cfg.threads)
    writer.write_csv("samples.csv", export_rows(sample))
    summary = {"alpha": mc.alpha, "t": mc.t, "n": mc.n, "seed": mc.seed}
    if mc.dim == 1:
        q = density(BernsteinSpec.stable(mc.alpha), mc.t, cfg.grid.to_spec())
        summary["ks"] = asdict(ks_compare(sample.increments, q, wrap=mc.wrap))
    writer.write_report(summary)
    return 0


# ===== ESTIMATES =====

def run_schauder(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    writer.write_ratio_report(schauder_ratio(cfg))
    return 0


def run_potential(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    writer.write_ratio_report(potential_regularity(cfg))
    return 0


def run_mapping(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    writer.write_ratio_report(mapping_ratio(cfg))
    return 0


def run_perturbation(cfg: ExperimentConfig, writer: ReportWriter) -> int:
    report = perturbation_suite(cfg)
    writer.write_report(report)
    writer.write_csv("perturbation.csv", [row.model_dump() for row in report.rows])
    return 0


def run_verify_all(config_dir: Path, writer: ReportWriter) -> int:
    """All acceptance checks; checks.csv is written whether or not they pass"""
    try:
        results = verify_all(config_dir)
    except AcceptanceError as exc:
        _write_checks(writer, exc.results)
        raise
    _write_checks(writer, results)
    return 0


def _write_checks(writer: ReportWriter, results: List[CheckResult]) -> None:
    # wall times go to report.json only; checks.csv is compared byte for byte across runs
    columns = [name for name in CheckResult.model_fields if name != "seconds"]
    writer.write_csv("checks.csv", [r.model_dump() for r in results], columns)
    writer.write_report({"checks": results, "passed": all(r.passed for r in results)})


COMMANDS: Dict[str, Handler] = {
    "norms": run_norms,
    "symbol": run_symbol,
    "apply": run_apply,
    "heatkernel": run_heatkernel,
    "solve": run_solve,
    "simulate": run_simulate,
    "schauder": run_schauder,
    "mapping": run_mapping,
    "perturbation": run_perturbation,
    "potential": run_potential,
}
