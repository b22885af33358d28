# app/services/liouville_solver.py
import json
import logging
import math
import os
import time
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..config import settings
from ..exceptions import BranchTerminated, FitDiverged, NewtonStalled, PeakCountMismatch
from ..models import (
    BlowupData,
    CoefficientKind,
    DiskProblem,
    GlobalSolutionParams,
    Peak,
    SolutionField,
    as_complex,
)
from ..utils.coefficients import CoefficientField
from ..utils.fields import ScaledField, refine_maximum
from ..utils.polar_grid import PolarGrid
from ..utils.serialization import read_grid, write_grid, write_json
from .blowup_asymptotics import (
    boundary_value_law,
    compare_to_global,
    far_field_profile,
    mu_spread,
    mu_spread_bound,
)
from .disk_green import HarmonicLift, harmonic_lift
from .global_family import eval_global

logger = logging.getLogger(__name__)


class DiscreteProblem:
    """Operador de volumen finito sobre la malla polar; dueño de su espacio de trabajo"""

    def __init__(self, problem: DiskProblem):
        self.problem = problem
        self.grid = PolarGrid(problem.grid, problem.tau)
        self.coefficient = CoefficientField(problem.coefficient)
        g = self.grid
        n_r, n_t = g.n_r, g.n_theta
        self.shape = (n_r, n_t)
        interior = g.points[:-1]
        self.weight = np.abs(interior) ** (2 * problem.N) * np.real(self.coefficient.value(interior))
        if np.any(self.weight <= 0) or not np.all(np.isfinite(self.weight)):
            raise ValueError("h debe ser positivo y finito en el disco")
        self.areas = g.cell_areas
        self.boundary = np.full(n_t, problem.boundary_value, dtype=float)
        if problem.boundary_profile is not None:
            self.boundary = self.boundary + np.asarray(problem.boundary_profile, dtype=float)
        self._assemble_laplacian()

    def _index(self, i, j):
        return i * self.grid.n_theta + np.mod(j, self.grid.n_theta)

    def _assemble_laplacian(self):
        g = self.grid
        n_r, n_t = g.n_r, g.n_theta
        m = n_r - 1
        i = np.repeat(np.arange(m), n_t)
        j = np.tile(np.arange(n_t), m)
        # flujo radial por la cara exterior y angular hacia j + 1
        c_out = (g.faces[1:] / np.diff(g.r))[:, None] * g.angular_widths[None, :]
        c_ang = ((g.faces[1:] - g.faces[:-1])[:m] / g.r[:m])[:, None] / g.node_gaps[None, :]

        rows, cols, vals = [], [], []
        k = self._index(i, j)
        c_plus = c_ang[i, j]
        c_minus = c_ang[i, (j - 1) % n_t]
        diag = -(c_out[i, j] + c_plus + c_minus)
        inner = i > 0
        diag = diag - np.where(inner, c_out[np.maximum(i - 1, 0), j], 0.0)
        rows += [k]; cols += [k]; vals += [diag]
        rows += [k[inner]]; cols += [self._index(i[inner] - 1, j[inner])]; vals += [c_out[i[inner] - 1, j[inner]]]
        outer = i < m - 1
        rows += [k[outer]]; cols += [self._index(i[outer] + 1, j[outer])]; vals += [c_out[i[outer], j[outer]]]
        rows += [k]; cols += [self._index(i, j + 1)]; vals += [c_plus]
        rows += [k]; cols += [self._index(i, j - 1)]; vals += [c_minus]
        self.L = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m * n_t, m * n_t),
        )
        self.b = np.zeros((m, n_t))
        self.b[-1] = c_out[m - 1] * self.boundary

    def residual(self, u_int: np.ndarray) -> np.ndarray:
        """F = L u + b + A |x|^{2N} h e^u (integrado por celda)"""
        source = self.areas * self.weight * np.exp(u_int.reshape(self.shape[0] - 1, -1))
        return self.L @ u_int + (self.b + source).ravel()

    def jacobian(self, u_int: np.ndarray) -> sparse.csr_matrix:
        source = (self.areas * self.weight).ravel() * np.exp(u_int)
        return (self.L + sparse.diags(source)).tocsr()

    def full(self, u_int: np.ndarray) -> np.ndarray:
        return np.vstack([u_int.reshape(self.shape[0] - 1, -1), self.boundary[None, :]])


def _rotation_tangent(values: np.ndarray, grid: PolarGrid) -> np.ndarray:
    span = grid.node_gaps + np.roll(grid.node_gaps, 1)
    return ((np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / span[None, :])[:-1].ravel()


def _needs_phase_condition(problem: DiskProblem, tangent: np.ndarray) -> bool:
    return (problem.N >= 1 and problem.coefficient.is_rotation_invariant
            and problem.boundary_profile is None and float(np.max(np.abs(tangent))) > 1e-8)


def solve(problem: DiskProblem, initial: Union[np.ndarray, SolutionField, None] = None,
          tol: Optional[float] = None, max_iter: Optional[int] = None) -> SolutionField:
    """Newton amortiguado (pasos a la mitad mientras el residuo no baje)"""
    tol = settings.newton_tol if tol is None else tol
    max_iter = settings.newton_max_iter if max_iter is None else max_iter
    disc = DiscreteProblem(problem)
    g = disc.grid
    if initial is None:
        guess = np.full(disc.shape, problem.boundary_value, dtype=float)
    elif isinstance(initial, SolutionField):
        guess = np.array(initial.values, dtype=float)
    else:
        guess = np.array(initial, dtype=float)
    if guess.shape != disc.shape or not np.all(np.isfinite(guess)):
        raise ValueError("la semilla debe ser finita y tener la forma de la malla")

    start = time.time()
    u = guess[:-1].ravel().copy()
    tangent = _rotation_tangent(guess, g)
    phase = _needs_phase_condition(problem, tangent)
    u_ref = u.copy()
    sigma = 0.0

    def augmented(u_vec, sig):
        F = disc.residual(u_vec)
        if not phase:
            return F
        return np.concatenate([F + sig * tangent, [tangent @ (u_vec - u_ref)]])

    R = augmented(u, sigma)
    norm = float(np.max(np.abs(R)))
    best = (norm, u.copy())
    history = [norm]
    iterations = 0
    while norm > tol and iterations < max_iter:
        iterations += 1
        J = disc.jacobian(u)
        if phase:
            t = sparse.csc_matrix(tangent[:, None])
            system = sparse.bmat([[J, t], [t.T, None]], format="csc")
            step = spsolve(system, -R)
            du, dsig = step[:-1], step[-1]
        else:
            du, dsig = spsolve(J.tocsc(), -R), 0.0
        if not np.all(np.isfinite(du)):
            break
        lam = 1.0
        while True:
            cand_u, cand_s = u + lam * du, sigma + lam * dsig
            with np.errstate(over="ignore", invalid="ignore"):
                cand_R = augmented(cand_u, cand_s)
            cand_norm = float(np.max(np.abs(cand_R)))
            if np.isfinite(cand_norm) and cand_norm < norm:
                break
            lam *= 0.5
            if lam < 1e-8:
                break
        if not (np.isfinite(cand_norm) and cand_norm < norm):
            logger.warning(f"Newton sin descenso en la iteración {iterations} (‖F‖={norm:.3e})")
            break
        u, sigma, R, norm = cand_u, cand_s, cand_R, cand_norm
        history.append(norm)
        logger.debug(f"Newton it={iterations} ‖F‖∞={norm:.3e} paso={lam}")
        if norm < best[0]:
            best = (norm, u.copy())

    values = disc.full(best[1])
    field = _finalize(problem, disc, values, best[0], iterations, best[0] <= tol, phase)
    field.residual_history = history
    logger.info(f"Solve N={problem.N} malla {disc.shape}: ‖F‖∞={best[0]:.3e} en {iterations} it",
                extra={"N": problem.N, "n_r": g.n_r, "n_theta": g.n_theta, "iterations": iterations,
                       "residual_norm": best[0], "elapsed": time.time() - start, "sigma": sigma})
    if best[0] > tol:
        raise NewtonStalled(f"Newton no alcanzó tol={tol} (‖F‖∞={best[0]:.3e})",
                            best_iterate=field, residual_norm=best[0])
    return field


def _stencil(values: np.ndarray, grid: PolarGrid, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """Vecindad 3×3; el anillo −1 es el anillo 0 al otro lado del origen"""
    n_t = values.shape[1]
    points = grid.points
    vals, pts = [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii, jj = i + di, (j + dj) % n_t
            if ii < 0:
                ii, jj = 0, int(grid.antipode[jj])
            vals.append(values[ii, jj])
            pts.append(points[ii, jj])
    return np.array(vals), np.array(pts)


def _quadratic_peak(vals: np.ndarray, pts: np.ndarray, center: complex) -> Tuple[complex, float]:
    """Ajuste cuadrático por mínimos cuadrados y su máximo; cae al nodo si el ajuste no es cóncavo"""
    z = pts - center
    x, y = z.real, z.imag
    scale = max(np.max(np.abs(z)), 1e-300)
    xs, ys = x / scale, y / scale
    M = np.column_stack([np.ones_like(xs), xs, ys, xs ** 2, xs * ys, ys ** 2])
    c, *_ = np.linalg.lstsq(M, vals, rcond=None)
    H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    if not np.all(np.linalg.eigvalsh(H) < 0):
        return center, float(vals[4])
    shift = np.linalg.solve(H, -c[1:3])
    if np.hypot(*shift) > 1.0:
        return center, float(vals[4])
    height = c[0] + c[1] * shift[0] + c[2] * shift[1] + c[3] * shift[0] ** 2 + c[4] * shift[0] * shift[1] \
        + c[5] * shift[1] ** 2
    return center + scale * complex(shift[0], shift[1]), float(height)


def find_peaks(values: np.ndarray, grid: PolarGrid, boundary: float) -> List[Peak]:
    """Máximos discretos sobre umax − 0.25(umax − borde), refinados y ordenados por ángulo desde p₀"""
    interior = values[:-1]
    umax = float(interior.max())
    level = umax - 0.25 * (umax - boundary)
    points = grid.points
    found: List[Peak] = []
    for i, j in zip(*np.nonzero(interior >= level)):
        vals, pts = _stencil(values, grid, int(i), int(j))
        if vals[4] < vals.max():
            continue
        loc, height = _quadratic_peak(vals, pts, points[i, j])
        merge = 2.0 * grid.spacing_at(abs(loc), float(np.angle(loc)))
        for k, other in enumerate(found):
            if abs(other.location - loc) < merge:
                if height > other.height:
                    found[k] = Peak(location=loc, height=height)
                break
        else:
            found.append(Peak(location=loc, height=height))
    if not found:
        return found
    p0 = max(found, key=lambda p: p.height)
    base = p0.angle
    return sorted(found, key=lambda p: (p.angle - base) % (2 * math.pi) if p is not p0 else -1.0)


def _finalize(problem: DiskProblem, disc: DiscreteProblem, values: np.ndarray, norm: float,
              iterations: int, converged: bool, phase: bool) -> SolutionField:
    g = disc.grid
    peaks = find_peaks(values, g, float(np.mean(disc.boundary)))
    p0 = peaks[0] if peaks else Peak(location=0j, height=float(values.max()))
    N = problem.N
    if N >= 1 and abs(p0.location) > g.spacing_at(0.0):
        delta = abs(p0.location)
        mu = p0.height + 2 * (N + 1) * math.log(delta)
    else:
        delta, mu = 1.0, p0.height
    field = SolutionField(problem=problem, values=values, peaks=peaks, mu=mu, delta=delta,
                          theta=p0.angle if delta != 1.0 else 0.0, residual_norm=norm,
                          iterations=iterations, converged=converged, phase_condition=phase)
    field.mass = total_mass(field, disc)
    return field


def total_mass(field: SolutionField, disc: Optional[DiscreteProblem] = None) -> float:
    """∫_{B_τ} |x|^{2N} h e^u con los pesos de la malla"""
    disc = disc or DiscreteProblem(field.problem)
    pts = disc.grid.points
    weight = np.abs(pts) ** (2 * field.problem.N) * np.real(disc.coefficient.value(pts))
    return float(np.sum(disc.grid.quadrature_weights * weight * np.exp(field.values)))


def is_simple(field: SolutionField) -> bool:
    """Una sola cima en el origen (o sin escala δ)"""
    return field.problem.N >= 1 and (len(field.peaks) <= 1 or field.delta == 1.0)


# --- campos evaluables sobre la solución discreta ---

class GridField:
    """Campo de malla con interpolación bicúbica; expone la malla y las cimas"""

    def __init__(self, solution: SolutionField):
        self.solution = solution
        self.N = solution.problem.N
        self.radius = solution.problem.tau
        self.grid = PolarGrid(solution.problem.grid, solution.problem.tau)
        self.peaks = solution.peaks
        self._interp = self.grid.interpolator(np.asarray(solution.values))

    def value(self, z):
        return self._interp.value(z)

    def gradient(self, z):
        return self._interp.gradient(z)


class ScaledGridField(ScaledField):
    def __init__(self, base: GridField, delta: float, theta: float = 0.0):
        super().__init__(base, delta, theta)
        self.grid = base.grid
        self.peaks = [Peak(location=p.location / self._T, height=p.height + self._shift) for p in base.peaks]


def scale_to_v(field: SolutionField, delta: Optional[float] = None,
               theta: Optional[float] = None) -> ScaledGridField:
    """v(y) = u(δ e^{iθ} y) + 2(N+1) log δ sobre |y| < τ/δ"""
    delta = field.delta if delta is None else delta
    theta = field.theta if theta is None else theta
    return ScaledGridField(GridField(field), delta, theta)


def deoscillate(field: SolutionField) -> Tuple[HarmonicLift, SolutionField]:
    """φ armónica con φ|_∂ = u|_∂ − media y φ(0) = 0; devuelve (φ, u − φ)"""
    g = PolarGrid(field.problem.grid, field.problem.tau)
    boundary = g.resample_ring(np.asarray(field.values)[-1])
    phi = harmonic_lift(boundary - boundary.mean(), radius=g.tau)
    values = np.asarray(field.values) - phi.value(g.points)
    values[-1] = boundary.mean()
    problem = field.problem.model_copy(update={"boundary_value": float(boundary.mean()),
                                               "boundary_profile": None})
    return phi, field.model_copy(update={"values": values, "problem": problem})


# --- semillas y continuación ---

def family_params(problem: DiskProblem, mu: float, delta: float) -> GlobalSolutionParams:
    """ξ = δ^{N+1}, λ = μ − 2(N+1) log δ"""
    return GlobalSolutionParams(N=problem.N, lam=mu - 2 * (problem.N + 1) * math.log(delta),
                                xi=delta ** (problem.N + 1))


def seed_from_family(problem: DiskProblem, mu: float, delta: float) -> np.ndarray:
    """U de la familia global, más 2log|1 − c x^k|² si el coeficiente es modulado.

    Si U no es constante en ∂B_τ se le resta la extensión armónica de su
    oscilación en el borde, de modo que la semilla respeta el dato de Dirichlet.
    """
    grid = PolarGrid(problem.grid, problem.tau)
    pts = grid.points
    values = eval_global(family_params(problem, mu, delta), pts)
    spec = problem.coefficient
    if spec.kind == CoefficientKind.MODULATED:
        values = values + 2.0 * np.log(np.abs(1.0 - spec.modulation * pts ** spec.modulation_power) ** 2)
    ring = grid.resample_ring(values[-1])
    if np.max(np.abs(ring - ring.mean())) > 1e-10 * (1.0 + np.max(np.abs(ring))):
        values = values - harmonic_lift(ring - ring.mean(), radius=grid.tau).value(pts)
    values[-1] = problem.boundary_value + (np.asarray(problem.boundary_profile)
                                           if problem.boundary_profile is not None else 0.0)
    return values


def transfer(field: SolutionField, problem: DiskProblem) -> np.ndarray:
    """Valores de un paso previo sobre la malla de `problem`"""
    if field.problem.grid == problem.grid and field.problem.tau == problem.tau:
        return np.array(field.values, dtype=float)
    values = GridField(field).value(PolarGrid(problem.grid, problem.tau).points)
    values[-1] = field.problem.boundary_value
    return values


def boundary_for(problem: DiskProblem, mu: float, delta: float, law: str = "derived") -> float:
    """u|_∂B_τ = v|_∂Ω − 2(N+1) log δ"""
    return boundary_value_law(problem.N, mu, delta, problem.tau, variant=law) - 2 * (problem.N + 1) * math.log(delta)


def resolution_ratio(problem: DiskProblem, mu: float, delta: float, angle: float = 0.0) -> float:
    """e^{μ/2} · paso de malla en δe^{i angle} / δ"""
    grid = PolarGrid(problem.grid, problem.tau)
    return math.exp(mu / 2.0) * grid.spacing_at(delta, angle) / delta


def _step_problem(problem: DiskProblem, delta: float) -> DiskProblem:
    """Malla del paso: el agrupamiento radial sigue al δ medido"""
    if problem.N < 1 or problem.grid.cluster_radius == 0.0 or not 0.0 < delta < problem.tau:
        return problem
    return problem.model_copy(update={"grid": problem.grid.model_copy(update={"cluster_radius": delta})})


def continue_branch(problem: DiskProblem, schedule: Sequence[float], delta: Optional[float] = None,
                    resolution_limit: Optional[float] = None, boundary_law: str = "derived") -> List[SolutionField]:
    """Rama con μ creciente; cada paso arranca del anterior desplazado y, si falla, de la familia"""
    schedule = list(schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("el calendario de μ debe ser estrictamente creciente")
    limit = settings.resolution_limit if resolution_limit is None else resolution_limit
    N = problem.N
    delta = delta if delta is not None else (problem.grid.cluster_radius or 1.0)
    branch: List[SolutionField] = []
    previous: Optional[SolutionField] = None

    for step, mu in enumerate(schedule):
        current_delta = previous.delta if previous is not None and previous.delta != 1.0 else delta
        angle = previous.theta if previous is not None else 0.0
        local = _step_problem(problem, current_delta)
        ratio = resolution_ratio(local, mu, current_delta, angle) if N >= 1 else math.exp(mu / 2.0) * \
            PolarGrid(local.grid, local.tau).spacing_at(0.0)
        if ratio > limit:
            logger.info(f"Rama detenida en μ={mu}: resolución {ratio:.3g} > {limit}")
            raise BranchTerminated("resolution_limit", branch)

        if N >= 1:
            bval = boundary_for(local, mu, current_delta, boundary_law)
        else:
            bval = boundary_value_law(0, mu, 1.0, local.tau, variant=boundary_law)
        target = local.model_copy(update={"boundary_value": bval})
        seeds = []
        if previous is not None:
            shifted = transfer(previous, target) + (bval - previous.problem.boundary_value)
            seeds.append(("shift", shifted))
        seeds.append(("family", seed_from_family(target, mu, current_delta)))

        solution = None
        for label, seed in seeds:
            try:
                solution = solve(target, seed)
                break
            except NewtonStalled as exc:
                logger.warning(f"Semilla '{label}' sin convergencia en μ={mu}: {exc}")
        if solution is None:
            raise BranchTerminated("newton_stalled", branch)

        branch.append(solution)
        previous = solution
        logger.info(f"Paso {step}: μ objetivo {mu}, medido {solution.mu:.6g}, δ={solution.delta:.4g}, "
                    f"cimas={len(solution.peaks)}, masa={solution.mass:.6g}",
                    extra={"step": step, "simple": is_simple(solution)})
    return branch


def measure_blowup(v, N: int, coefficient: Optional[CoefficientField] = None,
                   delta: float = 1.0, theta: float = 0.0) -> BlowupData:
    """Q_l, μ, σ y m_l = Q_l e^{−iβ_l} − 1 a partir del campo escalado.

    Si Q₀ no cae exactamente en e₁ se re-normaliza dividiendo por Q₀, que
    equivale a corregir (δ, θ).
    """
    peaks = getattr(v, "peaks", None)
    beta = 2 * np.pi * np.arange(N + 1) / (N + 1)
    if peaks is not None:
        seeds = [p.location for p in peaks]
    else:
        seeds = list(np.exp(1j * beta))
    if len(seeds) != N + 1:
        raise PeakCountMismatch(f"se esperaban {N + 1} cimas, hay {len(seeds)}")

    refined = []
    for s in seeds:
        z, strict = refine_maximum(v, s)
        refined.append(z if strict else s)
    refined = np.array(refined)
    q0 = refined[np.argmin(np.abs(refined - 1.0))]
    Q = refined / q0
    order = np.argsort(np.mod(np.angle(Q), 2 * np.pi) + np.where(np.abs(Q - 1.0) < 1e-14, -1.0, 0.0))
    Q = Q[order]
    heights = v.value(refined[order])
    m = Q * np.exp(-1j * beta) - 1.0
    m[0] = 0j
    delta_new = getattr(v, "delta", delta) * abs(q0)
    theta_new = getattr(v, "theta", theta) + float(np.angle(q0))
    L = 0j
    if coefficient is not None:
        L = complex(np.exp(-1j * theta_new) * coefficient.grad_log(np.array([0j]))[0])
    return BlowupData(N=N, delta=delta_new, mu=float(heights[0]), L=L,
                      sigma=float(np.max(np.abs(Q - np.exp(1j * beta)))),
                      m=[complex(x) for x in m], Q=[complex(x) for x in Q], theta=theta_new)


def branch_summary(branch: Sequence[SolutionField]) -> List[dict]:
    rows = []
    for k, f in enumerate(branch):
        rows.append({"step": k, "mu": f.mu, "delta": f.delta, "theta": f.theta, "n_peaks": len(f.peaks),
                     "mass": f.mass, "residual_norm": f.residual_norm, "iterations": f.iterations,
                     "boundary_value": f.problem.boundary_value, "simple": is_simple(f)})
    return rows


# --- instantáneas y diagnósticos por paso ---

def write_snapshot(field: SolutionField, prefix: str) -> List[str]:
    """<prefix>.grid (binario) y <prefix>.json (metadatos)"""
    problem = field.problem
    grid_path = write_grid(f"{prefix}.grid", np.asarray(field.values), problem.tau, problem.N)
    meta = field.model_dump(exclude={"values"})
    meta["grid_file"] = os.path.basename(grid_path)
    json_path = write_json(f"{prefix}.json", meta)
    return [grid_path, json_path]


def read_snapshot(prefix: str) -> SolutionField:
    with open(f"{prefix}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    header, values = read_grid(f"{prefix}.grid")
    meta.pop("grid_file", None)
    meta["problem"] = DiskProblem.model_validate(meta["problem"])
    if header["n_r"] != meta["problem"].grid.n_r or header["n_theta"] != meta["problem"].grid.n_theta:
        raise ValueError(f"{prefix}: la cabecera no coincide con la malla de los metadatos")
    meta["peaks"] = [Peak(location=as_complex(p["location"]), height=p["height"]) for p in meta["peaks"]]
    return SolutionField(values=values, **meta)


def far_field_deviation(v: ScaledGridField, N: int, mu: float, n_radii: int = 6, n_theta: int = 256) -> Optional[float]:
    """max |media circular de v − (−μ − (4N+4) log|y|)| para 2 < |y| < 0.95 τ/δ"""
    outer = 0.95 * v.radius
    if outer <= 2.2:
        return None
    radii = np.geomspace(2.0, outer, n_radii)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    means = v.value(radii[:, None] * np.exp(1j * theta)[None, :]).mean(axis=1)
    return float(np.max(np.abs(means - far_field_profile(N, mu, radii))))


def step_report(field: SolutionField) -> dict:
    """Resumen de un paso de rama: geometría medida, ajuste global y perfil lejano"""
    N = field.problem.N
    row = {"mu": field.mu, "delta": field.delta, "theta": field.theta, "n_peaks": len(field.peaks),
           "mass": field.mass, "residual_norm": field.residual_norm, "iterations": field.iterations,
           "boundary_value": field.problem.boundary_value, "simple": is_simple(field)}
    if N == 0 or row["simple"]:
        return row
    coefficient = CoefficientField(field.problem.coefficient)
    v = scale_to_v(field)
    row["mu_spread"] = mu_spread([p.height for p in v.peaks[:N + 1]])
    row["mu_spread_bound"] = mu_spread_bound(field.delta, field.mu)
    try:
        blowup = measure_blowup(v, N, coefficient)
        row["blowup"] = blowup.model_dump()
        row["sigma"] = blowup.sigma
    except (PeakCountMismatch, ValueError) as e:
        logger.warning(f"Medición de la explosión falló en μ={field.mu:.4g}: {e}")
        row["blowup_error"] = str(e)
    h0 = float(np.real(coefficient.value(np.array([field.delta * np.exp(1j * field.theta)]))[0]))
    try:
        fit = compare_to_global(v, GlobalSolutionParams(N=N, lam=field.mu, xi=1.0, h0=h0))
        row["global_sup_difference"] = fit.sup_difference
        row["global_sup_difference_outside"] = fit.sup_difference_outside
    except FitDiverged as e:
        logger.warning(f"Ajuste global falló en μ={field.mu:.4g}: {e}")
        row["global_fit_error"] = str(e)
    row["far_field_deviation"] = far_field_deviation(v, N, field.mu)
    return row
