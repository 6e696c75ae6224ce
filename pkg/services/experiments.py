"""
Experiments - empirical constants of the a priori estimates
Schauder, mapping and potential ratios, perturbation suite, function-space checks
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from api.errors import OrderAmbiguityError, PreconditionError, RangeError
from api.models import ExperimentConfig, PerturbationReport, PerturbationRow, RatioReport, ResolutionPoint
from config import FREEZING_RTOL, INTEGER_GUARD, NONLOCAL_THREADS
from services.funcspace import GridFunction, GridSpec, holder_norm, mollify, random_holder_sample
from services.heatkernel import (
    SymbolTable,
    check_semigroup_derivative_bound,
    check_twosided,
    potential_by_time_quadrature,
    solve_constant,
)
from services.levykernel import fractional_laplacian_constant
from services.modulus import (
    BernsteinSpec,
    Family,
    Modulus,
    estimate_indices,
    fit_scaling_certificate,
    tail_bound,
    tail_integral,
)
from services.nonlocal_operator import (
    Cutoff,
    OperatorSpec,
    apply_B,
    apply_H,
    apply_L,
    coefficient_profile,
    frozen_symbol,
    rule_for,
)

logger = logging.getLogger(__name__)

BRANCHES = ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0))
TAIL_LAMBDA_GRID = np.logspace(0.0, 4.0, 33)
TAIL_R_GRID = np.logspace(-4.0, 4.0, 33)
TAIL_DELTA_FLOOR = 1e-3


# ===== INDEX GUARDS =====

def prop_branch(m: Modulus, name: str = "phi psi") -> str:
    """Which of (0,1), (1,2), (2,3) holds the index interval of m"""
    indices = estimate_indices(m)
    if indices.distance_to_integer() < INTEGER_GUARD:
        raise OrderAmbiguityError(
            f"I_{name} = [{indices.m:.4f}, {indices.M:.4f}] of {m.label} is within {INTEGER_GUARD} of an integer",
            guard="integer-order exclusion",
            hypothesis=f"I_{name} contains no integer",
        )
    for lo, hi in BRANCHES:
        if indices.within(lo, hi):
            return f"({lo:g},{hi:g})"
    raise RangeError(
        f"I_{name} = [{indices.m:.4f}, {indices.M:.4f}] of {m.label} leaves (0,3)",
        guard="I_phipsi in (0,1) u (1,2) u (2,3)",
        hypothesis=f"I_{name} inside (0,1), (1,2) or (2,3)",
    )


def check_psi(psi: Modulus) -> None:
    indices = estimate_indices(psi)
    if indices.distance_to_integer() < INTEGER_GUARD:
        raise OrderAmbiguityError(
            f"I_psi = [{indices.m:.4f}, {indices.M:.4f}] of {psi.label} meets the integers",
            guard="integer-order exclusion",
            hypothesis="I_psi in (0,1)",
        )
    if not indices.within(0.0, 1.0):
        raise RangeError(
            f"I_psi = [{indices.m:.4f}, {indices.M:.4f}] of {psi.label} leaves (0,1)",
            guard="I_psi in (0,1)",
            hypothesis="I_psi in (0,1)",
        )


def schauder_guards(psi: Modulus, varphi: Modulus) -> Tuple[Modulus, str]:
    """phi psi and its branch; the (2,3) branch needs m_varphi > 1"""
    check_psi(psi)
    phipsi = varphi.times(psi)
    branch = prop_branch(phipsi)
    if branch == "(2,3)" and not estimate_indices(varphi).m > 1.0:
        raise PreconditionError(
            f"I_phipsi in (2,3) but m_varphi = {estimate_indices(varphi).m:.4f}",
            guard="m_varphi > 1 on the (2,3) branch",
            hypothesis="necessarily m_varphi > 1",
        )
    return phipsi, branch


def perturbation_guards(psi: Modulus, varphi: Modulus) -> Tuple[Modulus, str]:
    phipsi, branch = schauder_guards(psi, varphi)
    upper = max(estimate_indices(varphi).M, estimate_indices(psi).M)
    lower = estimate_indices(phipsi).m
    if not upper < lower:
        raise PreconditionError(
            f"M_varphi v M_psi = {upper:.4f} is not below m_phipsi = {lower:.4f}",
            guard="M_varphi v M_psi < m_phipsi",
            hypothesis="M_phi v M_psi < m_{phi psi}",
        )
    return phipsi, branch


def mapping_guards(psi: Modulus, varphi: Modulus) -> Tuple[Modulus, str]:
    check_psi(psi)
    v, p = estimate_indices(varphi), estimate_indices(psi)
    if not max(v.M, p.M) < v.m + p.m:
        raise PreconditionError(
            f"M_varphi v M_psi = {max(v.M, p.M):.4f} is not below m_varphi + m_psi = {v.m + p.m:.4f}",
            guard="M_varphi v M_psi < m_varphi + m_psi",
            hypothesis="M_phi v M_psi < m_phi + m_psi",
        )
    phipsi = varphi.times(psi)
    return phipsi, prop_branch(phipsi)


# ===== BUILDING FROM A CONFIG =====

def operator_spec(cfg: ExperimentConfig) -> OperatorSpec:
    spec = OperatorSpec.for_kernel(cfg.kernel.build(cfg.grid.dim), cfg.quadrature.to_settings())
    if cfg.kernel.bernstein is not None:
        far_band_tail(cfg.kernel.bernstein.build(), spec.quadrature.outer_cutoff)
    return spec


def far_band_tail(b: BernsteinSpec, r_out: float) -> Dict[str, float]:
    """
    Mass of the far band |h| > R_out against the scaling bound C / varphi(R_out)

    Exponents come from the index scan of varphi, (a1, a2) are fitted on
    TAIL_LAMBDA_GRID x TAIL_R_GRID.
    """
    varphi = b.varphi
    indices = estimate_indices(varphi)
    delta1 = min(max(0.5 * indices.m, TAIL_DELTA_FLOOR), 1.0 - TAIL_DELTA_FLOOR)
    delta2 = min(max(0.5 * indices.M, delta1), 1.0 - TAIL_DELTA_FLOOR)
    cert = fit_scaling_certificate(b, TAIL_LAMBDA_GRID, TAIL_R_GRID, delta1, delta2)
    mass = tail_integral(varphi, r_out)
    bound = tail_bound(varphi, r_out, cert)
    extra = {"bernstein": b.label, "r_out": r_out, "far_mass": mass, "tail_bound": bound}
    if mass > bound * (1.0 + 1e-6):
        logger.warning("far band exceeds its scaling bound", extra=extra)
    else:
        logger.debug("far band within scaling bound", extra=extra)
    return {"far_mass": mass, "tail_bound": bound, "delta1": delta1, "delta2": delta2}


def build_symbol(cfg: ExperimentConfig, grid: GridSpec, spec: Optional[OperatorSpec] = None) -> SymbolTable:
    """Symbol of the frozen operator from the configured source"""
    if cfg.symbol == "subordinate":
        if cfg.kernel.bernstein is None:
            raise PreconditionError("symbol 'subordinate' needs a Bernstein function", guard="bernstein given")
        return SymbolTable.subordinate(cfg.kernel.bernstein.build(), grid)
    spec = spec or operator_spec(cfg)
    if cfg.symbol == "fractional":
        return fractional_symbol(spec, grid)
    return frozen_symbol(spec, grid, cfg.freezing_point())


def fractional_symbol(spec: OperatorSpec, grid: GridSpec) -> SymbolTable:
    """Closed form (a0 / C_{beta,d}) |xi|^beta for a constant a0 and varphi = r^beta"""
    varphi = spec.kernel.varphi
    coefficient = spec.kernel.coefficient
    profile = coefficient_profile(coefficient, grid.dim)
    if varphi.family is not Family.POWER or coefficient.depends_on_x or not profile.h_independent:
        raise PreconditionError(
            "symbol 'fractional' needs varphi = r^beta and a constant coefficient",
            guard="classical fractional Laplacian",
        )
    beta = float(varphi.params["alpha"])
    a0 = float(coefficient(np.zeros((grid.dim, 1)), np.eye(grid.dim)[:, :1])[0])
    return SymbolTable.fractional(beta, grid, a0 / fractional_laplacian_constant(beta, grid.dim))


def _threads(cfg: ExperimentConfig) -> int:
    return cfg.threads or NONLOCAL_THREADS


def _map_seeds(func: Callable[[int], Dict], seeds: Sequence[int], threads: int) -> List[Dict]:
    """Evaluates func per seed; results come back in seed order"""
    if threads <= 1:
        return [func(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, seeds))


def _report(
    experiment: str,
    cfg: ExperimentConfig,
    per_resolution: List[Tuple[int, List[Dict]]],
    branch: str,
) -> RatioReport:
    trace = [ResolutionPoint(n=n, c_hat=max(item["ratio"] for item in items)) for n, items in per_resolution]
    base = per_resolution[0][1]
    report = RatioReport(
        experiment=experiment,
        ratios=[item["ratio"] for item in base],
        seeds=list(cfg.seeds),
        c_hat=trace[0].c_hat,
        resolution_trace=trace,
        config_hash=cfg.config_hash(),
        prop_branch=branch,
        details={"items": base},
    )
    logger.info(
        "experiment finished",
        extra={"experiment": experiment, "c_hat": report.c_hat, "stability": report.stability(), "branch": branch},
    )
    return report


# ===== SCHAUDER RATIO =====

def schauder_item(symbol: SymbolTable, f: GridFunction, psi: Modulus, phipsi: Modulus) -> Dict:
    """u = solve(f); ||u||_{C^{phi psi}} / (||u||_0 + ||f||_{C^psi})"""
    u = solve_constant(symbol, f)
    u_norm = holder_norm(u, phipsi)
    f_norm = holder_norm(f, psi)
    return {
        "u_norm": u_norm.norm,
        "u_sup": u_norm.sup_norm,
        "f_norm": f_norm.norm,
        "ratio": u_norm.norm / (u_norm.sup_norm + f_norm.norm),
    }


def schauder_ratio(cfg: ExperimentConfig) -> RatioReport:
    spec = operator_spec(cfg)
    psi = cfg.psi.build()
    phipsi, branch = schauder_guards(psi, spec.kernel.varphi)
    per_resolution = []
    for n in cfg.resolutions():
        grid = cfg.grid.to_spec(n)
        symbol = build_symbol(cfg, grid, spec)

        def item(seed: int) -> Dict:
            f = random_holder_sample(psi, seed, n, grid.dim, grid.period)
            result = schauder_item(symbol, f, psi, phipsi)
            logger.debug("schauder item", extra={"experiment": "schauder", "n": n, "seed": seed, "ratio": result["ratio"]})
            return {"seed": seed, **result}

        per_resolution.append((n, _map_seeds(item, cfg.seeds, _threads(cfg))))
    return _report("schauder", cfg, per_resolution, branch)


# ===== POTENTIAL OPERATOR =====

def potential_item(symbol: SymbolTable, f: GridFunction, psi: Modulus, phipsi: Modulus, realization: str = "solve") -> Dict:
    """||Rf||_{C^{phi psi}} / (||f||_{C^psi} + ||Rf||_0) with R = -L0^-1"""
    if realization == "solve":
        rf = -solve_constant(symbol, f)
    else:
        rf = potential_by_time_quadrature(symbol, f)
    rf_norm = holder_norm(rf, phipsi)
    f_norm = holder_norm(f, psi)
    return {
        "rf_norm": rf_norm.norm,
        "rf_sup": rf_norm.sup_norm,
        "f_norm": f_norm.norm,
        "ratio": rf_norm.norm / (f_norm.norm + rf_norm.sup_norm),
    }


def potential_regularity(cfg: ExperimentConfig) -> RatioReport:
    spec = operator_spec(cfg)
    psi = cfg.psi.build()
    phipsi, branch = schauder_guards(psi, spec.kernel.varphi)
    per_resolution = []
    for n in cfg.resolutions():
        grid = cfg.grid.to_spec(n)
        symbol = build_symbol(cfg, grid, spec)

        def item(seed: int) -> Dict:
            f = random_holder_sample(psi, seed, n, grid.dim, grid.period)
            return {"seed": seed, **potential_item(symbol, f, psi, phipsi, cfg.realization)}

        per_resolution.append((n, _map_seeds(item, cfg.seeds, _threads(cfg))))
    return _report("potential", cfg, per_resolution, branch)


# ===== MAPPING BOUND =====

def mapping_item(spec: OperatorSpec, u: GridFunction, psi: Modulus, phipsi: Modulus) -> Dict:
    """||L u||_{C^psi} / ||u||_{C^{phi psi}}"""
    lu_norm = holder_norm(apply_L(spec, u), psi).norm
    u_norm = holder_norm(u, phipsi).norm
    return {"lu_norm": lu_norm, "u_norm": u_norm, "ratio": lu_norm / u_norm}


def mapping_ratio(cfg: ExperimentConfig) -> RatioReport:
    spec = operator_spec(cfg)
    psi = cfg.psi.build()
    phipsi, branch = mapping_guards(psi, spec.kernel.varphi)
    per_resolution = []
    for n in cfg.resolutions():
        grid = cfg.grid.to_spec(n)

        def item(seed: int) -> Dict:
            u = random_holder_sample(phipsi, seed, n, grid.dim, grid.period)
            result = mapping_item(spec, u, psi, phipsi)
            logger.debug("mapping item", extra={"experiment": "mapping", "n": n, "seed": seed, "ratio": result["ratio"]})
            return {"seed": seed, **result}

        per_resolution.append((n, _map_seeds(item, cfg.seeds, _threads(cfg))))
    return _report("mapping", cfg, per_resolution, branch)


# ===== PERTURBATION SUITE =====

def _smooth_function(grid: GridSpec) -> GridFunction:
    if grid.dim == 1:
        return GridFunction.from_callable(lambda x: np.cos(2.0 * x) + 0.5 * np.sin(x), grid.n, 1, grid.period)
    return GridFunction.from_callable(lambda x1, x2: np.cos(x1) * np.sin(2.0 * x2), grid.n, 2, grid.period)


def freezing_residual(spec: OperatorSpec, u: GridFunction, eta: Cutoff) -> Tuple[float, float]:
    """sup |L(u eta) - eta L u - u L eta - H| and the scale it is measured against"""
    lhs = apply_L(spec, u * eta.values)
    lu = apply_L(spec, u)
    leta = apply_L(spec, eta.values)
    rhs = eta.values * lu + u * leta + apply_H(spec, u, eta)
    scale = lhs.sup_norm() + lu.sup_norm() + leta.sup_norm()
    return (lhs - rhs).sup_norm(), scale


def perturbation_item(spec: OperatorSpec, u: GridFunction, eta: Cutoff, psi: Modulus, phipsi: Modulus) -> Dict:
    """Norms entering the B v and H bounds for v = u eta"""
    v = u * eta.values
    bv = apply_B(spec, v, eta.x0)
    h = apply_H(spec, u, eta)
    v_norm = holder_norm(v, phipsi)
    u_norm = holder_norm(u, phipsi)
    return {
        "bv_norm": holder_norm(bv, psi).norm,
        "v_sup": v_norm.sup_norm,
        "v_norm": v_norm.norm,
        "h_norm": holder_norm(h, psi).norm,
        "u_sup": u_norm.sup_norm,
        "u_norm": u_norm.norm,
    }


def perturbation_suite(cfg: ExperimentConfig) -> PerturbationReport:
    """
    B v and H against C ||.||_0 + eps ||.||_{C^{phi psi}} over the cutoff radii

    The coefficient of ||v||_{C^{phi psi}} in the B v bound is reported twice:
    as max ||Bv||_psi / ||v||_{phi psi} over the corpus, and as the second
    component of a nonnegative least-squares fit of both terms.
    """
    spec = operator_spec(cfg)
    psi = cfg.psi.build()
    phipsi, branch = perturbation_guards(psi, spec.kernel.varphi)
    grid = cfg.grid.to_spec()
    x0 = cfg.freezing_point()
    smooth = _smooth_function(grid)
    rows, items = [], []
    for r in cfg.sweeps.r:
        eta = Cutoff.build(grid, x0, r)

        def item(seed: int) -> Dict:
            u = random_holder_sample(phipsi, seed, grid.n, grid.dim, grid.period)
            return {"seed": seed, "r": r, **perturbation_item(spec, u, eta, psi, phipsi)}

        results = _map_seeds(item, cfg.seeds, _threads(cfg))
        items.extend(results)
        design = np.array([[it["v_sup"], it["v_norm"]] for it in results])
        target = np.array([it["bv_norm"] for it in results])
        (fit_c, fit_eps), _ = optimize.nnls(design, target)
        residual, scale = freezing_residual(spec, smooth, eta)
        rows.append(
            PerturbationRow(
                r=r,
                coefficient=max(it["bv_norm"] / it["v_norm"] for it in results),
                fit_constant=float(fit_c),
                fit_epsilon=float(fit_eps),
                h_ratio=max(it["h_norm"] / it["u_norm"] for it in results),
                freezing_residual=residual / scale,
                freezing_budget=cfg.tolerances.freezing_factor * FREEZING_RTOL,
            )
        )
        logger.debug("perturbation radius", extra={"experiment": "perturbation", "r": r, "coefficient": rows[-1].coefficient})
    ordered = sorted(rows, key=lambda row: -row.r)
    monotone = all(b.coefficient < a.coefficient or a.coefficient == b.coefficient == 0.0 for a, b in zip(ordered, ordered[1:]))
    logger.info("experiment finished", extra={"experiment": "perturbation", "monotone": monotone, "branch": branch})
    return PerturbationReport(rows=rows, monotone=monotone, config_hash=cfg.config_hash(), prop_branch=branch, items=items)


# ===== FUNCTION-SPACE CHECKS =====

def norm_equivalence(
    psi: Modulus,
    seeds: Sequence[int],
    resolutions: Sequence[int],
    dim: int = 1,
    threads: int = 1,
    config_hash: str = "",
) -> RatioReport:
    """||f||_{C^psi} against ||f||_0 + [[f]]_{C^psi}, both directions"""
    branch = prop_branch(psi, "psi")
    if branch == "(2,3)":
        raise RangeError("norm equivalence needs I_psi in (0,1) u (1,2)", guard="I_psi in (0,1) u (1,2)")
    per_resolution = []
    for n in resolutions:

        def item(seed: int) -> Dict:
            report = holder_norm(random_holder_sample(psi, seed, n, dim), psi)
            forward = report.norm / report.equivalent_norm
            return {"seed": seed, "forward": forward, "backward": 1.0 / forward, "ratio": max(forward, 1.0 / forward)}

        per_resolution.append((n, _map_seeds(item, seeds, threads)))
    trace = [ResolutionPoint(n=n, c_hat=max(it["ratio"] for it in items)) for n, items in per_resolution]
    base = per_resolution[0][1]
    return RatioReport(
        experiment="norm_equivalence",
        ratios=[it["ratio"] for it in base],
        seeds=list(seeds),
        c_hat=trace[0].c_hat,
        resolution_trace=trace,
        config_hash=config_hash,
        prop_branch=branch,
        details={
            "forward_max": max(it["forward"] for it in base),
            "backward_max": max(it["backward"] for it in base),
            "psi": psi.label,
        },
    )


def interpolation_check(
    psi_low: Modulus,
    psi_high: Modulus,
    seeds: Sequence[int],
    n: int,
    eps_list: Sequence[float] = (0.5, 0.1, 0.01),
) -> Dict:
    """Smallest C(eps) with ||f||_{C^psi1} <= C ||f||_0 + eps ||f||_{C^psi2} on a psi2 corpus"""
    prop_branch(psi_low, "psi1")
    prop_branch(psi_high, "psi2")
    upper, lower = estimate_indices(psi_low).M, estimate_indices(psi_high).m
    if not upper < lower:
        raise PreconditionError(
            f"M_psi1 = {upper:.4f} is not below m_psi2 = {lower:.4f}",
            guard="M_psi1 < m_psi2",
            hypothesis="M_psi1 < m_psi2",
        )
    norms = []
    for seed in seeds:
        f = random_holder_sample(psi_high, seed, n)
        norms.append((f.sup_norm(), holder_norm(f, psi_low).norm, holder_norm(f, psi_high).norm))
    rows = []
    for eps in eps_list:
        constant = max(max(0.0, low - eps * high) / sup for sup, low, high in norms)
        rows.append({"eps": eps, "constant": constant})
    return {"psi1": psi_low.label, "psi2": psi_high.label, "n": n, "rows": rows}


def product_check(psi: Modulus, seeds: Sequence[int], n: int) -> Dict:
    """max ||f g||_{C^psi} / (||f||_{C^psi} ||g||_{C^psi}) over consecutive corpus pairs"""
    branch = prop_branch(psi, "psi")
    samples = [random_holder_sample(psi, seed, n) for seed in seeds]
    ratios = []
    for f, g in zip(samples, samples[1:] + samples[:1]):
        ratios.append(holder_norm(f * g, psi).norm / (holder_norm(f, psi).norm * holder_norm(g, psi).norm))
    return {"psi": psi.label, "branch": branch, "n": n, "ratios": ratios, "c_hat": max(ratios)}


def _slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mollification_rates(psi: Modulus, seeds: Sequence[int], n: int, eps_list: Sequence[float]) -> Dict:
    """
    Log-log slopes of ||f - f_eps||_0 and ||D^2 f_eps||_0 in eps

    Expected: about m_psi and m_psi - 2.
    """
    check_psi(psi)
    samples = [random_holder_sample(psi, seed, n) for seed in seeds]
    norms = [holder_norm(f, psi).norm for f in samples]
    rows = []
    for eps in eps_list:
        smooth = [mollify(f, eps) for f in samples]
        error = max((f - g).sup_norm() / c for f, g, c in zip(samples, smooth, norms))
        second = max(max(d.sup_norm() for _, d in g.derivatives(2)) / c for g, c in zip(smooth, norms))
        rows.append({"eps": eps, "error": error, "second": second})
    eps = [row["eps"] for row in rows]
    return {
        "psi": psi.label,
        "m_psi": estimate_indices(psi).m,
        "rows": rows,
        "slope_error": _slope(eps, [row["error"] for row in rows]),
        "slope_second": _slope(eps, [row["second"] for row in rows]),
    }


# ===== HEAT KERNEL SWEEPS =====

def derivative_bound_sweep(
    bernsteins: Sequence[BernsteinSpec],
    orders: Sequence[int],
    t_list: Sequence[float],
    resolutions: Sequence[int],
    psi: Modulus,
    seed: int = 0,
) -> List[Dict]:
    """c_hat of ||D^k P_t f||_0 varphi^-1(t)^k / ||f||_0 per (b, k, n)"""
    rows = []
    for b in bernsteins:
        for k in orders:
            trace = []
            for n in resolutions:
                f = random_holder_sample(psi, seed, n)
                trace.append(check_semigroup_derivative_bound(b, f, k, t_list).c_hat)
            rows.append(
                {
                    "bernstein": b.label,
                    "k": k,
                    "resolutions": list(resolutions),
                    "c_hat": trace,
                    "growth": trace[-1] / trace[0] if trace[0] > 0 else math.inf,
                }
            )
    return rows


def twosided_sweep(b: BernsteinSpec, t_list: Sequence[float], x_list: Sequence[float], grid: GridSpec) -> Dict:
    """c_hat of the two-sided bound at grid and under grid doubling"""
    coarse = check_twosided(b, t_list, x_list, grid)
    fine = check_twosided(b, t_list, x_list, grid.refined())
    return {
        "bernstein": b.label,
        "c_hat": coarse.c_hat,
        "c_hat_refined": fine.c_hat,
        "change": abs(fine.c_hat - coarse.c_hat) / coarse.c_hat,
        "rows": list(coarse.rows),
    }
