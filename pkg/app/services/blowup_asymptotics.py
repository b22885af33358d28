# app/services/blowup_asymptotics.py
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from ..exceptions import FitDiverged, NewtonDiverged, NotSingleBubble, SingularKernelMatrix
from ..models import (
    AppendixAMatch,
    CirculantSystem,
    FitResult,
    GlobalSolutionParams,
    GluckExpansion,
)
from ..utils.coefficients import CoefficientField
from ..utils.fields import Field, FunctionField, refine_maximum
from .circulant_algebra import build
from .disk_green import harmonic_lift
from .global_family import (
    build_kernel_matrix,
    epsilon_scale,
    eval_global,
    kernel_real_derivatives,
)
from .pohozaev_quadrature import pohozaev_balance_residual

logger = logging.getLogger(__name__)


def _phases(N: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(N + 1) / (N + 1))


# --- desplazamientos de los puntos de explosión ---

def predict_displacements(sys: CirculantSystem, delta: float, L: complex) -> np.ndarray:
    """m_l = δ L̄ (e^{iβ_l} − 1)/(2N), m₀ = 0"""
    e = _phases(sys.N)
    return delta * np.conj(L) * (e - 1.0) / (2 * sys.N)


def predict_displacements_direct(sys: CirculantSystem, delta: float, L: complex) -> np.ndarray:
    """Resuelve A m = δ L̄ (e^{iβ₁}, …, e^{iβ_N})ᵀ"""
    if sys.A is None:
        raise ValueError("el sistema no tiene A densa")
    e = _phases(sys.N)
    m = linalg.solve(sys.A.astype(complex), delta * np.conj(L) * e[1:], assume_a="sym")
    return np.concatenate([[0j], m])


def main3_residual(sys: CirculantSystem, m: Sequence[complex], delta: float, L: complex) -> complex:
    """Ecuación l = 0: −Σ_j d_j m_j − δ L̄"""
    m = np.asarray(m, dtype=complex)
    return complex(-np.sum(sys.d * m[1:]) - delta * np.conj(L))


def predict_displacements_pointwise_system(sys: CirculantSystem, delta: float, L: complex) -> np.ndarray:
    """Sistema por burbuja con forzamiento +δL̄e^{iβ_l} (l = 0..N), resuelto por mínimos cuadrados"""
    N = sys.N
    e = _phases(N)
    rows = np.zeros((N + 1, N), dtype=complex)
    rhs = np.zeros(N + 1, dtype=complex)
    for l in range(N + 1):
        for j in range(1, N + 1):
            if j == l:
                rows[l, j - 1] = sys.D
            else:
                rows[l, j - 1] = -sys.d[abs(j - l) - 1]
        rhs[l] = -delta * np.conj(L) * e[l]
    m, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    return np.concatenate([[0j], m])


def predict_displacements_n1_system(delta: float, L: complex) -> Dict[str, complex]:
    """N = 1: el sistema de dos ecuaciones da m₁ = +δL̄, la forma cerrada da −δL̄"""
    sys = build(1)
    return {
        "component_system": complex(predict_displacements_pointwise_system(sys, delta, L)[1]),
        "closed_form": complex(predict_displacements(sys, delta, L)[1]),
    }


def _point_balance(N: int, delta: float, L: complex, guess: np.ndarray) -> Tuple[np.ndarray, complex]:
    """2N/Q_l − 4Σ_{j≠l} 1/(Q_l − Q_j) + δL̄ = 0 para l = 1..N con Q₀ = 1"""
    e = _phases(N)

    def unpack(x):
        m = np.concatenate([[0j], x[:N] + 1j * x[N:]])
        return e * (1.0 + m), m

    def force(Q, l):
        others = np.delete(Q, l)
        return 2 * N / Q[l] - 4.0 * np.sum(1.0 / (Q[l] - others)) + delta * np.conj(L)

    def equations(x):
        Q, _ = unpack(x)
        F = np.array([force(Q, l) for l in range(1, N + 1)])
        return np.concatenate([F.real, F.imag])

    x0 = np.concatenate([guess[1:].real, guess[1:].imag])
    sol = optimize.root(equations, x0, method="hybr", tol=1e-14)
    if not sol.success:
        raise NewtonDiverged(f"balance de puntos no convergió: {sol.message}")
    Q, m = unpack(sol.x)
    return m, complex(force(Q, 0))


def adjudicate_displacement_sign(N: int, delta: float, L: complex) -> dict:
    """Decide la convención de signo con dos árbitros independientes.

    (1) balance no lineal de puntos con Q₀ fijo; (2) residuo de primer orden del
    balance de Pohozaev por burbuja. Ambos se evalúan para ±forma cerrada.
    """
    sys = build(N)
    closed = predict_displacements(sys, delta, L)
    candidates = {"closed_form": closed, "flipped": -closed}
    nonlinear, force0 = _point_balance(N, delta, L, closed)
    scale = max(delta * abs(L), 1e-300)
    balance_error = {k: float(np.max(np.abs(nonlinear - v)) / scale) for k, v in candidates.items()}
    pohozaev_error = {k: float(np.max(np.abs(pohozaev_balance_residual(N, delta, L, v)))) / (8 * math.pi * scale)
                      for k, v in candidates.items()}
    chosen = min(balance_error, key=balance_error.get)
    agree = chosen == min(pohozaev_error, key=pohozaev_error.get)
    logger.info(f"Adjudicación de signo N={N}, δ={delta}: '{chosen}' (coinciden árbitros: {agree})")
    return {
        "N": N,
        "delta": delta,
        "L": complex(L),
        "sign_convention": chosen,
        "arbiters_agree": agree,
        "point_balance_error": balance_error,
        "pohozaev_balance_error": pohozaev_error,
        "point_balance_l0_residual": abs(force0),
        "nonlinear_m": [complex(v) for v in nonlinear],
    }


# --- leyes de valor en el borde y perfiles ---

BOUNDARY_LAWS = ("derived", "printed")


def boundary_value_law(N: int, mu: float, delta: float, tau: float, variant: str = "derived") -> float:
    """Valor de v_k en ∂Ω_k = ∂B(0, τ/δ).

    "derived": −μ + 2log 8 + 4log(1+N) − 4(1+N)log(τ/δ), que coincide con la familia exacta;
    "printed": la versión con log 8 en lugar de 2log 8.
    """
    if variant not in BOUNDARY_LAWS:
        raise ValueError(f"Variante desconocida: {variant}")
    log8 = math.log(8.0) * (2.0 if variant == "derived" else 1.0)
    return -mu + log8 + 4.0 * math.log(1 + N) - 4.0 * (1 + N) * math.log(tau / delta)


def exact_family_boundary_value(N: int, mu: float, delta: float, tau: float, h0: float = 1.0,
                                n_theta: int = 64) -> Tuple[float, float]:
    """Media y oscilación de U (ξ = e₁) sobre |y| = τ/δ"""
    params = GlobalSolutionParams(N=N, lam=mu, xi=1.0, h0=h0)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    values = eval_global(params, (tau / delta) * np.exp(1j * theta))
    return float(values.mean()), float(values.max() - values.min())


def mu_spread(heights: Sequence[float]) -> float:
    heights = np.asarray(heights, dtype=float)
    return float(heights.max() - heights.min())


def mu_spread_bound(delta: float, mu: float) -> float:
    return delta + mu ** 2 * math.exp(-mu)


def far_field_profile(N: int, mu: float, y) -> np.ndarray:
    """Perfil lejano −μ − (4N+4) log|y|"""
    return -mu - (4 * N + 4) * np.log(np.abs(np.asarray(y, dtype=complex)))


def vanishing_rates(delta: float, mu: float) -> Tuple[float, float]:
    """(δ + δ⁻¹μe^{−μ}, δ + δ⁻²μe^{−μ})"""
    if not delta > 0 or not mu > 0:
        raise ValueError("delta y mu deben ser positivos")
    tail = mu * math.exp(-mu)
    return delta + tail / delta, delta + tail / delta ** 2


def laplacian_relation(coefficient: CoefficientField, N: int, delta: float) -> dict:
    """Σ_l δ(L̄(δe^{iβ_l}) − L̄(0)) e^{iβ_l} frente a δ²(N+1)/2 · Δlog h(0), N ≥ 2"""
    if N < 2:
        raise ValueError("la relación de segundo orden requiere N ≥ 2")
    e = _phases(N)
    Lbar = np.conj(coefficient.grad_log(delta * e))
    Lbar0 = np.conj(coefficient.grad_log(np.array([0j])))[0]
    lhs = complex(np.sum(delta * (Lbar - Lbar0) * e))
    predicted = delta ** 2 * (N + 1) / 2.0 * float(coefficient.laplacian_log(np.array([0j]))[0])
    return {"N": N, "delta": delta, "lhs": lhs, "predicted": predicted, "error": abs(lhs - predicted)}


# --- aproximación por soluciones globales ---

def _sample_points(radius: float, n_theta: int, n_inner: int = 100, n_outer: int = 100) -> np.ndarray:
    inner = np.linspace(0.0, min(2.0, 0.5 * radius), n_inner)
    outer = np.geomspace(max(inner[-1], 1e-3), 0.99 * radius, n_outer) if radius > 4.0 else np.array([])
    radii = np.unique(np.concatenate([inner, outer, [0.99 * radius]]))
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    return (radii[:, None] * np.exp(1j * theta)[None, :]).ravel()


def compare_to_global(field: Field, guess: GlobalSolutionParams, exclusion: float = 0.25,
                      n_theta: Optional[int] = None) -> FitResult:
    """Ajusta (λ, ξ) con la altura y la posición de la burbuja l = 0.

    Los máximos de U son las raíces de ξ y U vale λ en ellos, así que
    λ = v(Q₀) y ξ = Q₀^{N+1}.
    """
    N = guess.N
    seed = abs(guess.xi) ** (1.0 / (N + 1)) * np.exp(1j * np.angle(guess.xi) / (N + 1))
    Q0, strict = refine_maximum(field, seed)
    if not strict or not np.isfinite(Q0) or abs(Q0 - seed) > 0.5 * max(abs(seed), 1e-3):
        raise FitDiverged(f"no se encontró el máximo cerca de {seed} (llegó a {Q0})")
    lam = float(field.value(np.array([Q0]))[0])
    fitted = GlobalSolutionParams(N=N, lam=lam, xi=Q0 ** (N + 1), h0=guess.h0)

    n_theta = n_theta or 64 * (N + 1)
    points = _sample_points(field.radius, n_theta)
    diff = np.abs(field.value(points) - eval_global(fitted, points))
    roots = abs(fitted.xi) ** (1.0 / (N + 1)) * np.exp(
        1j * (np.angle(fitted.xi) + 2 * np.pi * np.arange(N + 1)) / (N + 1))
    outside = np.min(np.abs(points[:, None] - roots[None, :]), axis=1) > exclusion
    result = FitResult(params=fitted, sup_difference=float(diff.max()),
                       sup_difference_outside=float(diff[outside].max()) if outside.any() else 0.0)
    logger.debug(f"Ajuste global: λ={lam:.12g}, ξ={fitted.xi:.12g}, sup={result.sup_difference:.3e}")
    return result


def appendixA_match(field: Field, guess: GlobalSolutionParams, s: float = 10.0, eps: float = 0.1,
                    thetas: Optional[Sequence[float]] = None, max_iter: int = 20,
                    tol: float = 1e-12) -> AppendixAMatch:
    """Resuelve v(p_l) = V(p_l; λ, ξ) en los tres puntos p_l por Newton y mide |v − V|/(ε log(2+|y|))"""
    N = guess.N
    if thetas is None:
        thetas = (0.0, math.pi / (4 * (N + 1)), math.pi / (2 * (N + 1)))
    kernel = build_kernel_matrix(guess, s, eps, thetas)
    if abs(kernel.det) < 1e-14 * np.prod(np.linalg.norm(kernel.entries, axis=1)):
        raise SingularKernelMatrix(f"det(M) = {kernel.det:.3e}")
    probes = np.array(kernel.probes)
    if np.max(np.abs(probes)) >= field.radius:
        raise ValueError(f"los puntos p_l salen del dominio |y| < {field.radius}")
    target = field.value(probes)

    params = guess
    floor = 1e-13 * (1.0 + float(np.max(np.abs(target))))
    converged = False
    for iteration in range(1, max_iter + 1):
        F = eval_global(params, probes) - target
        if np.max(np.abs(F)) <= floor:
            converged = True
            break
        d_lam, d_x1, d_x2 = kernel_real_derivatives(params, probes)
        J = np.column_stack([d_lam * math.exp(params.lam), d_x1, d_x2])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SingularKernelMatrix(str(exc))
        if not np.all(np.isfinite(step)):
            raise NewtonDiverged("paso de Newton no finito")
        params = params.model_copy(update={"lam": params.lam + step[0],
                                           "xi": params.xi + complex(step[1], step[2])})
        if np.max(np.abs(step)) < tol * max(1.0, abs(params.lam)):
            converged = True
            break
    if not converged:
        final = np.max(np.abs(eval_global(params, probes) - target))
        if not final <= 1e3 * floor:
            raise NewtonDiverged(f"sin convergencia tras {max_iter} iteraciones (residuo {final:.3e})")

    points = _sample_points(field.radius, 64 * (N + 1))
    scale = epsilon_scale(params.lam, N) * np.log(2.0 + np.abs(points))
    residual = float(np.max(np.abs(field.value(points) - eval_global(params, points)) / scale))
    return AppendixAMatch(params=params, max_scaled_residual=residual, iterations=iteration,
                          probes=[complex(p) for p in probes])


# --- expansión de Gluck (N = 0) ---

def gluck_prediction(eps: float, coefficient: CoefficientField, at: complex = 0j) -> dict:
    """q = 2ε²∇V/V² y coeficiente −8ΔlogV/V del término ε²(log)²"""
    z = np.array([complex(at)])
    V = float(np.real(coefficient.value(z)[0]))
    grad = complex(coefficient.gradient(z)[0])
    lap_log = float(coefficient.laplacian_log(z)[0])
    return {"q": 2.0 * eps ** 2 * grad / V ** 2, "log_coefficient": -8.0 * lap_log / V,
            "V0": V, "grad_V0": grad, "lap_log_V0": lap_log}


def _lattice_maxima(field: Field, n_r: int = 96, n_theta: int = 128) -> List[complex]:
    """Máximos discretos sobre una red polar, por encima de la mitad del rango"""
    radii = field.radius * (np.arange(n_r) + 0.5) / n_r
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = radii[:, None] * np.exp(1j * theta)[None, :]
    vals = field.value(pts)
    level = vals.min() + 0.5 * (vals.max() - vals.min())
    found = []
    for i in range(n_r):
        for j in range(n_theta):
            v = vals[i, j]
            if v < level:
                continue
            neigh = [vals[i, (j + 1) % n_theta], vals[i, (j - 1) % n_theta]]
            if i + 1 < n_r:
                neigh.append(vals[i + 1, j])
            neigh.append(vals[i - 1, j] if i > 0 else vals[0, (j + n_theta // 2) % n_theta])
            if v >= max(neigh):
                found.append(pts[i, j])
    return found


def gluck_check(field: Field, coefficient: CoefficientField, n_samples: int = 256,
                seed: Optional[complex] = None) -> GluckExpansion:
    """Construye cada término de la expansión refinada de una burbuja regular y mide el resto"""
    peaks = getattr(field, "peaks", None)
    if peaks is not None:
        seeds = [p.location for p in peaks]
    else:
        seeds = _lattice_maxima(field)
    # máximos discretos adyacentes de una misma burbuja cuentan una vez
    distinct = []
    for z in seeds:
        if all(abs(z - w) > 0.05 * field.radius for w in distinct):
            distinct.append(z)
    if len(distinct) != 1:
        raise NotSingleBubble(f"se esperaba una burbuja, hay {len(distinct)}")
    p, strict = refine_maximum(field, seed if seed is not None else distinct[0])
    if not strict:
        raise NotSingleBubble(f"el punto {p} no es un máximo estricto")

    u0 = float(field.value(np.array([p]))[0])
    eps = math.exp(-u0 / 2.0)
    rho = 0.5 * (field.radius - abs(p))
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    boundary = field.value(p + rho * np.exp(1j * theta))
    psi = harmonic_lift(boundary - boundary.mean(), radius=rho, center=p)

    pred = gluck_prediction(eps, coefficient, p)
    V0 = pred["V0"]
    # q es el máximo local de u − ψ, medido desde p
    reduced = FunctionField(field.N, field.radius, lambda z: field.value(z) - psi.value(z),
                            lambda z: field.gradient(z) - psi.gradient(z))
    top, strict = refine_maximum(reduced, p)
    if not strict:
        raise NotSingleBubble(f"u − ψ no tiene máximo estricto cerca de {p}")
    q = complex(top - p)
    q_lift = complex(-2.0 * eps ** 2 * psi.gradient(np.array([p]))[0] / V0)

    radii = np.geomspace(min(1e-2 * eps, 1e-3 * rho), rho, 80)
    pts = (p + radii[:, None] * np.exp(1j * theta[::4])[None, :]).ravel()
    bubble = u0 - 2.0 * np.log1p(V0 * math.exp(u0) / 8.0 * np.abs(pts - p - q) ** 2)
    log_term = pred["log_coefficient"] * eps ** 2 * np.log(2.0 + np.abs(pts - p) / eps) ** 2
    remainder = np.abs(field.value(pts) - (bubble + psi.value(pts) + log_term))
    sup = float(remainder.max())
    ratio = sup / (eps ** 2 * math.log(1.0 / eps)) if eps < 1 else math.inf
    logger.info(f"Gluck: ε={eps:.3e}, q={q:.3e}, predicho {pred['q']:.3e}, resto/ε²log={ratio:.3g}")
    return GluckExpansion(center=complex(p), u0=u0, eps=eps, q=q, q_lift=q_lift, q_predicted=pred["q"], V0=V0,
                          grad_V0=pred["grad_V0"], lap_log_V0=pred["lap_log_V0"],
                          log_coefficient=pred["log_coefficient"], psi=psi, lift_radius=rho,
                          remainder_sup=sup, remainder_ratio=ratio)
