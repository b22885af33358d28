# app/services/experiment_runner.py
import base64
import logging
import math
import os
import platform
import time
import traceback
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import psutil
import scipy
from pydantic import ValidationError

from ..config import settings
from ..exceptions import ConfigError, LiouvilleLabError, MaximaNotSeparated
from ..models import (
    CheckResult,
    CoefficientKind,
    DiskProblem,
    ExperimentCommand,
    ExperimentConfig,
    ExperimentResult,
    GlobalSolutionParams,
    PolarGridSpec,
    ProcessingStatus,
    SolutionField,
    as_complex,
)
from ..tasks.celery_tasks import branch_run, dispatch, dispatch_many, identity_chunk
from ..utils.coefficients import CoefficientField, SingularWeight, modulated_coefficient, parse_expression
from ..utils.polar_grid import PolarGrid
from ..utils.serialization import artifact_hashes, to_jsonable, write_csv, write_json
from . import blowup_asymptotics as asym
from . import circulant_algebra
from . import global_family as family
from . import liouville_solver as solver
from . import pohozaev_quadrature as pq
from .cache_service import CacheService
from .disk_green import estimate_chain

logger = logging.getLogger(__name__)

PROBLEM_DEFAULTS: Dict[str, Any] = {
    "N": 1,
    "tau": 1.0,
    "h": "1",
    "modulated": False,
    "n_r": 96,
    "n_theta": 128,
    "grading": 3.0,
    "cluster_radius": 0.0,
    "angular_grading": 0.0,
    "angular_clusters": None,
    "boundary_value": None,
    "boundary_law": "derived",
}

COMMAND_DEFAULTS: Dict[ExperimentCommand, Dict[str, Any]] = {
    ExperimentCommand.IDENTITIES: {"nmin": 1, "nmax": 100, "tol": None, "chunk": 25, "nondegeneracy_max": 100},
    ExperimentCommand.FAMILY: {"N": 2, "lambda": 10.0, "xi": [1.0, 0.0], "h0": 1.0,
                               "fd_steps": [1e-2, 5e-3, 2.5e-3], "point": [1.2, 0.0], "kernel_samples": 100},
    ExperimentCommand.LOCATE: {"N": 3, "delta": 0.05, "L": [0.2, 0.1], "random_trials": 0},
    ExperimentCommand.SOLVE: {**PROBLEM_DEFAULTS, "seed_kind": "family", "mu": 8.0, "delta": 0.3, "lambda": 8.0},
    ExperimentCommand.BRANCH: {**PROBLEM_DEFAULTS, "n_r": 256, "n_theta": 512, "grading": 16.0,
                               "cluster_radius": 0.3, "angular_grading": 8.0,
                               "schedule": [8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0],
                               "delta": 0.3, "resolution_limit": None, "far_field_band": 3.0},
    ExperimentCommand.POHOZAEV: {"N": 2, "lambda": 12.0, "xi": [1.0, 0.0], "h0": 1.0, "center": None, "r": 0.3,
                                 "nodes": [8, 16, 32, 64, 128, 256, 512, 1024, 2048], "pair_N": 2,
                                 "pair_lambda": 20.0,
                                 "pair_m": [1e-2, 5e-3, 2.5e-3], "pair_r": 0.25, "pair_angle": 2.0},
    ExperimentCommand.APPROX: {"N": 1, "lambda": 5.0, "xi": [1.0, 0.0], "s": 10.0, "eps": 0.1, "radius": 50.0,
                               "perturbation": 1e-3, "thetas": None, "det_s": 1000.0, "det_thetas": None,
                               "chain_deltas": [0.1, 0.05, 0.025],
                               "h": "exp(0.1*x1 + 0.05*x1^2 + 0.1*x2^2)", "h_N": 2,
                               "h_deltas": [0.2, 0.1, 0.05]},
    ExperimentCommand.GLUCK: {"eps": [1e-2, 5e-3, 2e-3, 1e-3], "V": "1 + 0.1*x1", "tau": 1.0, "n_r": 256,
                              "n_theta": 256, "grading": 8.0, "boundary_law": "derived"},
}


def _check(name: str, value: float, tolerance: float, passed: Optional[bool] = None) -> CheckResult:
    """Por defecto pasa si value ≤ tolerance"""
    value = float(value)
    if passed is None:
        passed = bool(np.isfinite(value) and value <= tolerance)
    return CheckResult(name=name, value=value, tolerance=float(tolerance), passed=bool(passed))


def kernel_error_scale(params: GlobalSolutionParams, z: complex, fd: np.ndarray) -> np.ndarray:
    """Denominador del error relativo: |fd| acotado por abajo al 1% de la escala de cada derivada"""
    d_xi = abs(complex(family.kernel_derivatives(params, np.array([z]))[1][0]))
    floors = np.array([1e-2 / math.exp(params.lam), 2e-2 * d_xi, 2e-2 * d_xi])
    return np.maximum(np.abs(fd), np.maximum(floors, 1e-300))


def resolve_params(command: ExperimentCommand, params: Dict[str, Any]) -> Dict[str, Any]:
    """Completa con valores por defecto; una clave desconocida es un error de configuración"""
    defaults = COMMAND_DEFAULTS[command]
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"Claves desconocidas para '{command.value}': {', '.join(unknown)}")
    merged = dict(defaults)
    merged.update(params)
    law = merged.get("boundary_law")
    if law is not None and law not in asym.BOUNDARY_LAWS:
        raise ConfigError(f"boundary_law desconocida: {law} (opciones: {', '.join(asym.BOUNDARY_LAWS)})")
    return merged


def build_problem(p: Dict[str, Any]) -> DiskProblem:
    N = int(p["N"])
    tau = float(p["tau"])
    spec = parse_expression(str(p["h"]))
    if p["modulated"]:
        if N < 1:
            raise ConfigError("modulated requiere N ≥ 1")
        mod = modulated_coefficient(N, float(p["delta"]) ** (N + 1), tau)
        if spec.kind == CoefficientKind.EXP_POLYNOMIAL:
            spec = mod.model_copy(update={"terms": spec.terms})
        elif spec.terms == {"0,0": 1.0}:
            spec = mod
        else:
            raise ConfigError("modulated solo se combina con h = 1 o h = exp(polinomio)")
    angular = float(p.get("angular_grading") or 0.0)
    clusters = p.get("angular_clusters") or (N + 1 if angular > 0 else 1)
    grid = PolarGridSpec(n_r=int(p["n_r"]), n_theta=int(p["n_theta"]), grading=float(p["grading"]),
                         cluster_radius=float(p["cluster_radius"]), angular_grading=angular,
                         angular_clusters=int(clusters))
    bval = p["boundary_value"]
    return DiskProblem(N=N, tau=tau, coefficient=spec, grid=grid,
                       boundary_value=0.0 if bval is None else float(bval))


def _global_params(p: Dict[str, Any], prefix: str = "") -> GlobalSolutionParams:
    return GlobalSolutionParams(N=int(p[f"{prefix}N"]), lam=float(p[f"{prefix}lambda"]),
                                xi=as_complex(p.get(f"{prefix}xi", 1.0)), h0=float(p.get("h0", 1.0)))


class ExperimentRunner:
    """Despacha un subcomando, escribe artefactos deterministas y el manifiesto"""

    def __init__(self, config: ExperimentConfig, cache: Optional[CacheService] = None):
        self.config = config
        self.command = config.command
        self.output_dir = config.output_dir
        self.rng = np.random.default_rng(config.seed)
        self.artifacts: List[str] = []
        self.checks: List[CheckResult] = []
        self.cache = cache
        self._handlers: Dict[ExperimentCommand, Callable[[Dict[str, Any]], ProcessingStatus]] = {
            ExperimentCommand.IDENTITIES: self._identities,
            ExperimentCommand.FAMILY: self._family,
            ExperimentCommand.LOCATE: self._locate,
            ExperimentCommand.SOLVE: self._solve,
            ExperimentCommand.BRANCH: self._branch,
            ExperimentCommand.POHOZAEV: self._pohozaev,
            ExperimentCommand.APPROX: self._approx,
            ExperimentCommand.GLUCK: self._gluck,
        }

    # --- utilidades de artefactos ---

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _csv(self, name: str, rows: List[dict], columns: Optional[List[str]] = None):
        self.artifacts.append(write_csv(self._path(name), rows, columns))

    def _json(self, name: str, data: Any):
        self.artifacts.append(write_json(self._path(name), data))

    def _prepare_output(self):
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"output_dir no se puede crear: {e}")
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigError(f"output_dir sin permiso de escritura: {self.output_dir}")

    # --- ejecución ---

    def run(self) -> ExperimentResult:
        try:
            params = resolve_params(self.command, self.config.params)
        except ValidationError as e:
            raise ConfigError(str(e))
        self._prepare_output()
        started = datetime.now(timezone.utc)
        start_time = time.time()
        cache_payload = {"params": params, "seed": self.config.seed}
        error = None

        cached = self._from_cache(cache_payload)
        if cached is not None:
            status = cached
        else:
            logger.info(f"Ejecutando '{self.command.value}'", extra={"params": to_jsonable(params)})
            try:
                status = self._handlers[self.command](params)
            except (ConfigError, ValidationError):
                raise
            except LiouvilleLabError as e:
                logger.error(f"Experimento '{self.command.value}' falló: {e}")
                status, error = ProcessingStatus.FAILED, f"{type(e).__name__}: {e}"
            except Exception as e:
                logger.error(f"Error inesperado en '{self.command.value}': {e}")
                logger.error(traceback.format_exc())
                status, error = ProcessingStatus.FAILED, f"{type(e).__name__}: {e}"

        if any(not c.passed for c in self.checks):
            status = ProcessingStatus.FAILED
        if cached is None:
            self._json("checks.json", [c.model_dump() for c in self.checks])
            if status != ProcessingStatus.FAILED:
                self._to_cache(cache_payload, status)
        if status == ProcessingStatus.FAILED:
            self._write_failure_report(error)

        elapsed = time.time() - start_time
        result = ExperimentResult(command=self.command, status=status, checks=self.checks,
                                  artifacts=[os.path.relpath(p, self.output_dir) for p in sorted(set(self.artifacts))],
                                  elapsed=elapsed, cached=cached is not None)
        self._write_manifest(params, result, started)
        logger.info(f"'{self.command.value}' terminó con estado {status.value} en {elapsed:.2f}s",
                    extra={"checks": len(self.checks), "failed": sum(not c.passed for c in self.checks)})
        return result

    def _write_failure_report(self, error: Optional[str]):
        report = {
            "command": self.command.value,
            "error": error,
            "failed_checks": [c.model_dump() for c in self.checks if not c.passed],
        }
        self.artifacts.append(write_json(self._path("failure_report.json"), report))

    def _write_manifest(self, params: Dict[str, Any], result: ExperimentResult, started: datetime):
        process = psutil.Process()
        cpu = process.cpu_times()
        manifest = {
            "command": self.command.value,
            "config": {"params": params, "output_dir": self.output_dir, "seed": self.config.seed},
            "status": result.status.value,
            "cached": result.cached,
            "started_at": started.isoformat(),
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "elapsed": result.elapsed,
            "artifacts": artifact_hashes(sorted(set(self.artifacts)), self.output_dir),
            "environment": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "rss_bytes": process.memory_info().rss,
                "cpu_user": cpu.user,
                "cpu_system": cpu.system,
                "celery_enabled": settings.celery_enabled,
            },
        }
        write_json(self._path("manifest.json"), manifest)

    def _from_cache(self, payload: Dict[str, Any]) -> Optional[ProcessingStatus]:
        if not settings.cache_enabled:
            return None
        self.cache = self.cache or CacheService()
        stored = self.cache.get_result(self.command.value, payload)
        if not stored:
            return None
        for rel, blob in stored["artifacts"].items():
            path = self._path(rel)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "wb") as fh:
                fh.write(base64.b64decode(blob))
            self.artifacts.append(path)
        self.checks = [CheckResult(**c) for c in stored["checks"]]
        return ProcessingStatus(stored["status"])

    def _to_cache(self, payload: Dict[str, Any], status: ProcessingStatus):
        if not settings.cache_enabled:
            return
        self.cache = self.cache or CacheService()
        blobs = {}
        for path in sorted(set(self.artifacts)):
            with open(path, "rb") as fh:
                blobs[os.path.relpath(path, self.output_dir)] = base64.b64encode(fh.read()).decode("ascii")
        self.cache.set_result(self.command.value, payload, {
            "status": status.value,
            "checks": [c.model_dump() for c in self.checks],
            "artifacts": blobs,
        })

    # --- subcomandos ---

    def _identities(self, p: Dict[str, Any]) -> ProcessingStatus:
        nmin, nmax = int(p["nmin"]), int(p["nmax"])
        if nmin < 1 or nmax < nmin:
            raise ConfigError("se requiere 1 ≤ nmin ≤ nmax")
        jobs = [{"n_min": a, "n_max": b, "tol": p["tol"]}
                for a, b in circulant_algebra.chunk_ranges(nmin, nmax, int(p["chunk"]))]
        results = dispatch_many(identity_chunk, jobs)
        rows = [row for r in results for row in r["rows"]]
        self._csv("identities.csv", rows)
        crashed = [r for r in results if r["status"] == "failed"]
        self.checks.append(_check("identity_chunks_failed", len(crashed), 0))
        self.checks.append(_check("identities_failed", sum(not r["pass"] for r in rows), 0))

        nondeg = []
        for N in range(max(2, nmin), min(nmax, int(p["nondegeneracy_max"])) + 1):
            sys = circulant_algebra.build(N)
            g = circulant_algebra.nondegeneracy_constant(sys)
            closed = (N - 1) * (N - 2) / 6.0 + 2.0 - 2.0 / N
            brute = circulant_algebra.nondegeneracy_brute_force(sys)
            nondeg.append({"N": N, "g": g, "closed_form": closed, "abs_error": abs(g - closed),
                           "brute_force": brute, "distance_to_minus_one": abs(brute + 1.0)})
        if nondeg:
            self._csv("nondegeneracy.csv", nondeg)
            self.checks.append(_check("nondegeneracy_formula", max(r["abs_error"] for r in nondeg), 1e-10))
            low = min(r["g"] for r in nondeg)
            self.checks.append(_check("nondegeneracy_lower_bound", low, 1.0, passed=low >= 1.0 - 1e-12))
            gap = min(r["distance_to_minus_one"] for r in nondeg)
            self.checks.append(_check("nondegeneracy_not_minus_one", gap, 0.0, passed=gap > 1e-8))
        if nmin <= 1:
            self._json("dichotomy_N1.json", circulant_algebra.n1_dichotomy())
        return ProcessingStatus.SUCCESS

    def _family(self, p: Dict[str, Any]) -> ProcessingStatus:
        params = _global_params(p)
        N = params.N
        out: Dict[str, Any] = {"params": params.model_dump(by_alias=True)}

        mass = family.total_mass(params)
        exact = 8 * math.pi * (N + 1)
        out["mass"] = mass.model_dump()
        out["mass_rel_error"] = abs(mass.value - exact) / exact
        self.checks.append(_check("mass_rel_error", out["mass_rel_error"], 1e-5))

        try:
            out["maxima"] = family.local_maxima(params)
        except MaximaNotSeparated as e:
            out["maxima_error"] = str(e)

        point = as_complex(p["point"])
        residuals = [{"fd_step": h, "residual": abs(family.residual_global(params, point, h))}
                     for h in p["fd_steps"]]
        for a, b in zip(residuals, residuals[1:]):
            b["ratio"] = a["residual"] / b["residual"] if b["residual"] > 0 else math.inf
        self._csv("residual_refinement.csv", residuals)
        ratios = [r["ratio"] for r in residuals[1:]]
        if ratios:
            expected = (residuals[0]["fd_step"] / residuals[1]["fd_step"]) ** 2
            self.checks.append(_check("residual_order_ratio", abs(ratios[-1] - expected) / expected, 0.25))

        samples = []
        rows = []
        for _ in range(int(p["kernel_samples"])):
            sp = GlobalSolutionParams(N=int(self.rng.integers(0, 4)), lam=float(self.rng.uniform(-2.0, 4.0)),
                                      xi=complex(*self.rng.uniform(-1.5, 1.5, 2)))
            z = complex(*self.rng.uniform(-2.5, 2.5, 2))
            samples.append((sp, z))
            analytic = np.array(family.kernel_real_derivatives(sp, np.array([z])))[:, 0]
            fd = np.array(family.finite_difference_kernel(sp, np.array([z]), step=1e-5))[:, 0]
            rel = np.abs(analytic - fd) / kernel_error_scale(sp, z, fd)
            rows.append({"N": sp.N, "lambda": sp.lam, "xi": sp.xi, "z": z, "rel_error_lambda": rel[0],
                         "rel_error_xi1": rel[1], "rel_error_xi2": rel[2]})
        if rows:
            self._csv("kernel_derivatives.csv", rows)
            worst = max(max(r["rel_error_lambda"], r["rel_error_xi1"], r["rel_error_xi2"]) for r in rows)
            self.checks.append(_check("kernel_derivative_rel_error", worst, 1e-6))
            out["lambda_derivative_audit"] = family.audit_lambda_derivative(samples)
        self._json("family.json", out)
        return ProcessingStatus.SUCCESS

    def _locate(self, p: Dict[str, Any]) -> ProcessingStatus:
        N, delta, L = int(p["N"]), float(p["delta"]), as_complex(p["L"])
        sys = circulant_algebra.build(N)
        closed = asym.predict_displacements(sys, delta, L)
        direct = asym.predict_displacements_direct(sys, delta, L)
        diff = float(np.max(np.abs(closed - direct)))
        main3 = abs(asym.main3_residual(sys, closed, delta, L))
        out = {"N": N, "delta": delta, "L": L, "closed_form": closed, "direct_solve": direct,
               "max_difference": diff, "match": diff <= 1e-10, "main3_residual": main3,
               "sign_adjudication": asym.adjudicate_displacement_sign(N, delta, L)}
        if N == 1:
            out["n1_system"] = asym.predict_displacements_n1_system(delta, L)

        worst_diff, worst_main3 = diff, main3
        trials = []
        for _ in range(int(p["random_trials"])):
            tN = int(self.rng.integers(1, 51))
            td = float(self.rng.uniform(1e-3, 0.2))
            tL = complex(*self.rng.uniform(-1.0, 1.0, 2))
            tsys = circulant_algebra.build(tN)
            c = asym.predict_displacements(tsys, td, tL)
            d = asym.predict_displacements_direct(tsys, td, tL)
            trials.append({"N": tN, "delta": td, "L": tL, "max_difference": float(np.max(np.abs(c - d))),
                           "main3_residual": abs(asym.main3_residual(tsys, c, td, tL))})
        if trials:
            self._csv("locate_trials.csv", trials)
            worst_diff = max(worst_diff, max(t["max_difference"] for t in trials))
            worst_main3 = max(worst_main3, max(t["main3_residual"] for t in trials))
        self._json("locate.json", out)
        self.checks.append(_check("closed_vs_direct", worst_diff, 1e-10))
        self.checks.append(_check("main3_residual", worst_main3, 1e-12))
        return ProcessingStatus.SUCCESS

    def _solve(self, p: Dict[str, Any]) -> ProcessingStatus:
        problem = build_problem(p)
        N = problem.N
        kind = p["seed_kind"]
        exact = None
        source = "explicit" if p["boundary_value"] is not None else kind
        if kind == "family":
            mu, delta = float(p["mu"]), float(p["delta"])
            if p["boundary_value"] is None:
                bval = solver.boundary_for(problem, mu, delta, p["boundary_law"])
                source = "law"
                problem = problem.model_copy(update={"boundary_value": bval})
            seed = solver.seed_from_family(problem, mu, delta)
        elif kind == "bubble":
            bubble = GlobalSolutionParams(N=N, lam=float(p["lambda"]), xi=0.0)
            if p["boundary_value"] is None:
                value = float(family.eval_global(bubble, np.array([problem.tau + 0j]))[0])
                problem = problem.model_copy(update={"boundary_value": value})
            seed = family.eval_global(bubble, PolarGrid(problem.grid, problem.tau).points)
            seed[-1] = problem.boundary_value
            if problem.coefficient.is_rotation_invariant and p["boundary_value"] is None:
                exact = seed.copy()
        elif kind == "flat":
            seed = None
        else:
            raise ConfigError(f"seed_kind desconocido: {kind}")

        field = solver.solve(problem, seed)
        self.artifacts.extend(solver.write_snapshot(field, self._path("solution")))
        self._csv("peaks.csv", [{"location": pk.location, "height": pk.height} for pk in field.peaks])
        summary = solver.step_report(field)
        summary["boundary_law"] = p["boundary_law"]
        summary["boundary_source"] = source
        if exact is not None:
            summary["sup_error_vs_exact"] = float(np.max(np.abs(np.asarray(field.values) - exact)))
        self._json("solve.json", summary)
        self.checks.append(_check("newton_residual", field.residual_norm, settings.newton_tol))
        return ProcessingStatus.SUCCESS

    def _branch(self, p: Dict[str, Any]) -> ProcessingStatus:
        problem = build_problem(p)
        N = problem.N
        result = dispatch(branch_run, problem=to_jsonable(problem.model_dump()),
                          schedule=[float(m) for m in p["schedule"]], delta=float(p["delta"]),
                          resolution_limit=p["resolution_limit"], output_dir=self.output_dir,
                          boundary_law=p["boundary_law"])
        if result.get("error"):
            raise LiouvilleLabError(result["error"])
        steps = result["steps"]
        self.artifacts.extend(result["files"])
        scalar = [{k: v for k, v in s.items() if not isinstance(v, (dict, list))} for s in steps]
        self._csv("branch.csv", scalar)
        for s in steps:
            if "blowup" in s:
                self._json(f"blowup_{s['step']:03d}.json", s["blowup"])
        self._json("branch_status.json", {"status": result["status"], "reason": result["reason"],
                                          "boundary_law": p["boundary_law"],
                                          "steps": len(steps), "scheduled": len(p["schedule"])})
        if not steps:
            return ProcessingStatus.FAILED

        mismatched = sum(s["n_peaks"] != N + 1 for s in steps)
        self.checks.append(_check("peak_count_mismatches", mismatched, 0))
        target = 8 * math.pi * (N + 1)
        self.checks.append(_check("final_mass_rel_error", abs(steps[-1]["mass"] - target) / target, 0.05))
        if N >= 1:
            last = steps[-1]
            self.checks.append(_check("final_sigma", last.get("sigma", math.inf), 5e-2))
            far = [s["far_field_deviation"] for s in steps if s.get("far_field_deviation") is not None]
            if far:
                self.checks.append(_check("far_field_band", max(far), float(p["far_field_band"])))
            fits = [s.get("global_sup_difference", math.inf) for s in steps]
            if len(fits) >= 3:
                third = max(1, len(fits) // 3)
                growth = max(fits[-third:]) / max(max(fits[:third]), 1e-300)
                self.checks.append(_check("global_fit_growth", growth, 1.5))
        return ProcessingStatus(result["status"])

    def _pohozaev(self, p: Dict[str, Any]) -> ProcessingStatus:
        params = _global_params(p)
        N = params.N
        root = abs(params.xi) ** (1.0 / (N + 1)) * np.exp(1j * np.angle(params.xi) / (N + 1))
        center = as_complex(p["center"]) if p["center"] is not None else complex(
            root * np.exp(2j * math.pi / (N + 1)) if N >= 1 else root)
        field = family.GlobalField(params, radius=10.0 * max(1.0, abs(root)))
        weight = SingularWeight(N, h0=params.h0)
        rows = []
        for label, direction in (("x1", 1.0), ("x2", 1j)):
            reports = pq.refinement_sweep(field, weight, center, float(p["r"]), direction, nodes=p["nodes"])
            for rep in reports:
                rows.append({"direction": label, "n_boundary": rep.n_boundary, "volume": rep.lhs_volume,
                             "flux": rep.lhs_flux, "boundary": rep.rhs_boundary, "residual": rep.residual})
            self.checks.append(_check(f"pohozaev_residual_{label}", reports[-1].residual, 1e-6))
            orders = pq.convergence_orders(reports)
            worst = min(orders) if orders else math.nan
            self.checks.append(_check(f"pohozaev_order_{label}", worst, 1.8,
                                      passed=bool(orders) and worst >= 1.8))
        self._csv("pohozaev.csv", rows)

        pN, s = int(p["pair_N"]), 1
        pair_rows = []
        for size in p["pair_m"]:
            shift = float(size) * np.exp(1j * float(p["pair_angle"]))
            uA, uB, m = pq.global_pair(pN, float(p["pair_lambda"]), 1.0, shift)
            c = np.exp(2j * math.pi * s / (pN + 1))
            measured = pq.pair_difference(uA, uB, c, float(p["pair_r"]), 1.0).total
            closed = pq.pair_difference_closed_form(pN, m, s, 1.0)
            printed = pq.pair_difference_closed_form(pN, m, s, 1.0, variant="printed")
            pair_rows.append({"m": float(size), "measured": measured, "closed_form": closed,
                              "printed_form": printed,
                              "normalized_error": abs(measured - closed) / max(abs(closed), 1e-300)})
        self._csv("pair_difference.csv", pair_rows)
        if len(pair_rows) >= 2:
            x = np.log([r["m"] for r in pair_rows])
            y = np.log([r["normalized_error"] for r in pair_rows])
            slope = float(np.polyfit(x, y, 1)[0])
            self.checks.append(_check("pair_difference_slope", abs(slope - 1.0), 0.1))
        return ProcessingStatus.SUCCESS

    def _approx(self, p: Dict[str, Any]) -> ProcessingStatus:
        params = _global_params(p)
        N = params.N
        field = family.GlobalField(params, radius=float(p["radius"]))
        pert = float(p["perturbation"])
        guess = params.model_copy(update={"lam": params.lam + pert, "xi": params.xi + pert * (1 + 1j)})
        match = asym.appendixA_match(field, guess, s=float(p["s"]), eps=float(p["eps"]), thetas=p["thetas"])
        recovery = max(abs(match.params.lam - params.lam), abs(match.params.xi - params.xi))
        out = {"params": params.model_dump(by_alias=True), "match": match.model_dump(by_alias=True),
               "recovery_error": recovery}
        self.checks.append(_check("appendix_a_self_fit", recovery, 1e-9))

        det_thetas = p["det_thetas"] or (0.0, math.pi / (4 * (N + 1)), math.pi / (N + 1))
        kernel = family.build_kernel_matrix(params, float(p["det_s"]), float(p["eps"]), det_thetas)
        out["det_m2"] = kernel.det_m2
        out["det_m2_leading"] = kernel.det_m2_leading
        out["leading_ratio"] = kernel.leading_ratio
        self.checks.append(_check("det_m2_leading_ratio", abs(kernel.leading_ratio - 1.0), 0.2))
        self._json("approx.json", out)

        self._csv("grad_h_chain.csv", estimate_chain(p["chain_deltas"], seed=self.config.seed))
        coefficient = CoefficientField(parse_expression(str(p["h"])))
        rows = []
        for delta in p["h_deltas"]:
            rel = asym.laplacian_relation(coefficient, int(p["h_N"]), float(delta))
            rel["error_over_delta3"] = rel["error"] / float(delta) ** 3
            rows.append(rel)
        self._csv("laplacian_relation.csv", rows)
        return ProcessingStatus.SUCCESS

    def _gluck_solve(self, p: Dict[str, Any], eps: float) -> SolutionField:
        """Resuelve en la malla dada y repite con el agrupamiento radial en |p| medido"""
        u0 = -2.0 * math.log(float(eps))
        bval = asym.boundary_value_law(0, u0, 1.0, float(p["tau"]), variant=p["boundary_law"])
        base = {**PROBLEM_DEFAULTS, "N": 0, "tau": p["tau"], "h": p["V"], "n_r": p["n_r"],
                "n_theta": p["n_theta"], "grading": p["grading"], "boundary_value": bval}
        problem = build_problem(base)
        bubble = GlobalSolutionParams(N=0, lam=u0, xi=0.0)
        seed = family.eval_global(bubble, PolarGrid(problem.grid, problem.tau).points)
        seed[-1] = problem.boundary_value
        first = solver.solve(problem, seed)
        center = abs(first.peaks[0].location) if first.peaks else 0.0
        if center <= PolarGrid(problem.grid, problem.tau).spacing_at(0.0):
            return first
        refined = build_problem({**base, "cluster_radius": center})
        logger.debug(f"Gluck ε={eps:.1e}: malla reagrupada en |p|={center:.3e}")
        return solver.solve(refined, solver.transfer(first, refined))

    def _gluck(self, p: Dict[str, Any]) -> ProcessingStatus:
        coefficient = CoefficientField(parse_expression(str(p["V"])))
        rows = []
        for eps in p["eps"]:
            expansion = asym.gluck_check(solver.GridField(self._gluck_solve(p, float(eps))), coefficient)
            q = expansion.q
            grad, V0 = expansion.grad_V0, expansion.V0
            angle = abs(math.degrees(np.angle(q / grad))) if abs(q) > 0 and abs(grad) > 0 else math.inf
            ratio = (abs(q) / expansion.eps ** 2) / (2 * abs(grad) / V0 ** 2) if abs(grad) > 0 else math.inf
            rows.append({"eps_target": float(eps), "eps": expansion.eps, "u0": expansion.u0,
                         "center": expansion.center, "q": q, "q_lift": expansion.q_lift,
                         "q_predicted": expansion.q_predicted, "angle_deg": angle, "magnitude_ratio": ratio,
                         "remainder_sup": expansion.remainder_sup, "remainder_ratio": expansion.remainder_ratio,
                         "boundary_law": p["boundary_law"]})
        self._csv("gluck.csv", rows)
        self.checks.append(_check("gluck_direction_deg", max(r["angle_deg"] for r in rows), 15.0))
        worst = max(abs(r["magnitude_ratio"] - 1.0) for r in rows)
        self.checks.append(_check("gluck_magnitude_relative", worst, 0.3))
        return ProcessingStatus.SUCCESS


def run(config: ExperimentConfig, cache: Optional[CacheService] = None) -> ExperimentResult:
    return ExperimentRunner(config, cache=cache).run()


def exit_code(result: ExperimentResult) -> int:
    return 0 if result.status != ProcessingStatus.FAILED else 1
