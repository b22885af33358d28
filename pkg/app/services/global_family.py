# app/services/global_family.py
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy import integrate

from ..exceptions import DegenerateProbes, MaximaNotSeparated, TailTooLarge
from ..models import GlobalSolutionParams, KernelMatrix, MassResult
from ..utils.fields import gradient_hessian, refine_maximum
from ..utils.quadrature import graded_breakpoints, panel_rule, trapezoid_angles

logger = logging.getLogger(__name__)


def _log_a(params: GlobalSolutionParams) -> float:
    return params.lam + math.log(params.h0) - math.log(params.c0)


def _parts(params: GlobalSolutionParams, y):
    """f = y^{N+1} − ξ y L = log(1 + a|f|²) evaluado sin desbordes"""
    y = np.asarray(y, dtype=complex)
    f = y ** (params.N + 1) - params.xi
    with np.errstate(divide="ignore"):
        t = _log_a(params) + 2.0 * np.log(np.abs(f))
    return y, f, np.logaddexp(0.0, t)


def eval_global(params: GlobalSolutionParams, y) -> np.ndarray:
    """U(y) = λ − 2 log(1 + (e^λ h₀ / 8(N+1)²) |y^{N+1} − ξ|²)"""
    _, _, L = _parts(params, y)
    return params.lam - 2.0 * L


def eval_global_gradient(params: GlobalSolutionParams, y) -> np.ndarray:
    """Gradiente complejo ∂₁U + i∂₂U = −4 a f conj(f') / (1 + a|f|²)"""
    y, f, L = _parts(params, y)
    fprime = (params.N + 1) * y ** params.N
    return -4.0 * np.exp(_log_a(params) - L) * f * np.conj(fprime)


def epsilon_scale(lam: float, N: int) -> float:
    return math.exp(-lam / (2.0 * (N + 1)))


class GlobalField:
    """La solución global como campo evaluable sobre B(0, radius)"""

    def __init__(self, params: GlobalSolutionParams, radius: float = 10.0):
        self.params = params
        self.N = params.N
        self.radius = radius

    def value(self, z):
        return eval_global(self.params, z)

    def gradient(self, z):
        return eval_global_gradient(self.params, z)


def residual_global(params: GlobalSolutionParams, y: complex, fd_step: float) -> float:
    """Laplaciano por 5 puntos de U más |y|^{2N} h₀ e^U"""
    if fd_step <= 0:
        raise ValueError("fd_step debe ser positivo")
    y = complex(y)
    h = fd_step
    stencil = np.array([y + h, y - h, y + 1j * h, y - 1j * h, y])
    u = eval_global(params, stencil)
    lap = (u[0] + u[1] + u[2] + u[3] - 4.0 * u[4]) / h ** 2
    return float(lap + abs(y) ** (2 * params.N) * params.h0 * math.exp(u[4]))


def _bump_width(params: GlobalSolutionParams) -> Tuple[float, float]:
    """Radio de los máximos y semiancho de cada protuberancia en el plano y"""
    a = math.exp(_log_a(params))
    n1 = params.N + 1
    r_star = abs(params.xi) ** (1.0 / n1)
    if r_star > 0:
        width = 1.0 / (math.sqrt(a) * n1 * r_star ** params.N)
        width = min(width, a ** (-1.0 / (2 * n1)))
    else:
        width = a ** (-1.0 / (2 * n1))
    return r_star, width


def _tail_bounds(params: GlobalSolutionParams, radius: float) -> Tuple[float, float]:
    """Cotas inferior/superior de ∫_{|y|>R} |y|^{2N} h₀ e^U"""
    a = math.exp(_log_a(params))
    n1 = params.N + 1
    T = radius ** n1
    x = abs(params.xi)
    if T <= x:
        return 0.0, math.inf
    pref = 2.0 * math.pi * params.h0 * math.exp(params.lam) / n1
    # en t = r^{N+1}: r^{2N+1} dr = t dt / (N+1), y |f| entre t − |ξ| y t + |ξ|
    lo, _ = integrate.quad(lambda t: t / (1.0 + a * (t + x) ** 2) ** 2, T, np.inf, epsabs=0, epsrel=1e-12)
    hi, _ = integrate.quad(lambda t: t / (1.0 + a * (t - x) ** 2) ** 2, T, np.inf, epsabs=0, epsrel=1e-12)
    return pref * lo, pref * hi


def total_mass(params: GlobalSolutionParams, radius: float = None, tol: float = 1e-8,
               n_theta: int = None, order: int = 20) -> MassResult:
    """∫_{R²} |y|^{2N} h₀ e^U con cola analítica; ≈ 8π(N+1)"""
    a = math.exp(_log_a(params))
    n1 = params.N + 1
    r_star, width = _bump_width(params)
    if radius is None:
        T = max(100.0 * (1.0 + abs(params.xi)), 100.0 / math.sqrt(a))
        radius = T ** (1.0 / n1)
    if n_theta is None:
        n_theta = 8 * n1
        if r_star > 0:
            n_theta = max(n_theta, int(60.0 * r_star / width))
        n_theta = min(n1 * math.ceil(n_theta / n1), 1 << 16)

    tail_lo, tail_hi = _tail_bounds(params, radius)
    breaks = graded_breakpoints(0.0, radius, r_star, width / 4.0)
    r, wr = panel_rule(breaks, order)
    theta, wt = trapezoid_angles(n_theta)
    inner = 0.0
    # por bloques para acotar memoria
    for start in range(0, r.size, 256):
        rr = r[start:start + 256]
        y = rr[:, None] * np.exp(1j * theta)[None, :]
        integrand = rr[:, None] ** (2 * params.N) * params.h0 * np.exp(eval_global(params, y))
        inner += float(np.sum(integrand.sum(axis=1) * wt * rr * wr[start:start + 256]))

    value = inner + 0.5 * (tail_lo + tail_hi)
    error = 0.5 * (tail_hi - tail_lo)
    if not math.isfinite(error) or error > tol * abs(value):
        raise TailTooLarge(f"Cola no acotable a tol={tol} con R={radius} (incertidumbre {error:.3e})")
    logger.debug(f"Masa total N={params.N} λ={params.lam}: {value:.15g} (R={radius:.3g}, n_θ={n_theta})")
    return MassResult(value=value, error_estimate=error, tail=0.5 * (tail_lo + tail_hi), radius=radius)


def local_maxima(params: GlobalSolutionParams) -> List[complex]:
    """Los N+1 máximos locales de U, refinados por Newton desde las raíces de ξ"""
    n1 = params.N + 1
    if math.exp(params.lam / 2.0) < 10.0 * n1:
        raise MaximaNotSeparated(f"λ={params.lam} por debajo del umbral e^(λ/2) ≥ 10(N+1)")
    if params.N >= 1 and params.xi == 0:
        raise MaximaNotSeparated("ξ = 0 con N ≥ 1: los N+1 máximos colapsan en el origen")

    field = GlobalField(params)
    r_star, width = _bump_width(params)
    base = np.angle(params.xi) / n1 if params.xi != 0 else 0.0
    seeds = [r_star * np.exp(1j * (base + 2.0 * math.pi * l / n1)) for l in range(n1)]
    maxima = []
    for seed in seeds:
        z, strict = refine_maximum(field, seed, step=min(1e-6, width * 1e-3))
        if not strict:
            raise MaximaNotSeparated(f"El punto {z} no es un máximo local estricto")
        maxima.append(complex(z))

    if n1 > 1:
        spacing = min(abs(p - q) for i, p in enumerate(maxima) for q in maxima[i + 1:])
        if spacing < 4.0 * width:
            raise MaximaNotSeparated(f"Separación {spacing:.3e} comparable al ancho {width:.3e}")
    return maxima


def kernel_derivatives(params: GlobalSolutionParams, z, variant: str = "derived"):
    """(∂v/∂Λ, ∂v/∂ξ, ∂v/∂ξ̄) con Λ = e^λ.

    variant="derived" es la derivada exacta de v = log Λ − 2 log(1 + Λh₀|f|²/c₀);
    variant="printed" usa el factor 1/c₀ en lugar de 2/Λ en el segundo término.
    """
    Lam = math.exp(params.lam)
    z, f, L = _parts(params, z)
    w = np.exp(-L)
    aw = np.exp(_log_a(params) - L)
    if variant == "derived":
        d_lam = -1.0 / Lam + (2.0 / Lam) * w
    elif variant == "printed":
        d_lam = -1.0 / Lam + w / params.c0
    else:
        raise ValueError(f"Variante desconocida: {variant}")
    d_xi = 2.0 * aw * np.conj(f)
    return d_lam, d_xi, np.conj(d_xi)


def kernel_real_derivatives(params: GlobalSolutionParams, z, variant: str = "derived"):
    """(∂v/∂Λ, ∂v/∂ξ₁, ∂v/∂ξ₂)"""
    d_lam, d_xi, _ = kernel_derivatives(params, z, variant)
    return d_lam, 2.0 * np.real(d_xi), -2.0 * np.imag(d_xi)


def finite_difference_kernel(params: GlobalSolutionParams, z, step: float = 1e-4):
    """Oráculo por diferencias centrales en (Λ, ξ₁, ξ₂)"""
    Lam = math.exp(params.lam)
    dL = step * Lam

    def at(lam_value, xi_value):
        p = params.model_copy(update={"lam": math.log(lam_value), "xi": xi_value})
        return eval_global(p, z)

    d_lam = (at(Lam + dL, params.xi) - at(Lam - dL, params.xi)) / (2 * dL)
    d_x1 = (at(Lam, params.xi + step) - at(Lam, params.xi - step)) / (2 * step)
    d_x2 = (at(Lam, params.xi + 1j * step) - at(Lam, params.xi - 1j * step)) / (2 * step)
    return d_lam, d_x1, d_x2


def audit_lambda_derivative(samples: Sequence[Tuple[GlobalSolutionParams, complex]], step: float = 1e-4) -> dict:
    """Compara ambas fórmulas de ∂v/∂Λ contra diferencias finitas"""
    errors = {"derived": 0.0, "printed": 0.0}
    for params, z in samples:
        fd = finite_difference_kernel(params, z, step)[0]
        for variant in errors:
            value = kernel_derivatives(params, z, variant)[0]
            errors[variant] = max(errors[variant], float(abs(value - fd) / max(abs(fd), 1e-300)))
    matched = min(errors, key=errors.get)
    logger.info(f"Auditoría ∂v/∂Λ: {errors} -> coincide '{matched}'")
    return {"max_rel_error": errors, "matches": matched}


def build_kernel_matrix(params: GlobalSolutionParams, s: float, eps: float,
                        thetas: Sequence[float]) -> KernelMatrix:
    """Matriz M de derivadas en los puntos p_l = s^{1+εl} e^{iθ_l}"""
    if s <= 1 or eps <= 0:
        raise ValueError("se requiere s > 1 y eps > 0")
    thetas = [float(t) for t in thetas]
    n1 = params.N + 1
    sine = math.sin(n1 * (thetas[1] - thetas[0]))
    if abs(sine) < 1e-12 or len(set(thetas)) != 3:
        raise DegenerateProbes(f"sin((N+1)(θ₂−θ₁)) = {sine:.3e}")

    probes = np.array([s ** (1.0 + eps * l) * np.exp(1j * thetas[l - 1]) for l in (1, 2, 3)])
    d_lam, d_x1, d_x2 = kernel_real_derivatives(params, probes)
    entries = np.vstack([d_lam, d_x1, d_x2])

    Lam = math.exp(params.lam)
    d_lam_c, d_xi, d_xib = kernel_derivatives(params, probes)
    m1 = np.vstack([d_lam_c.astype(complex), d_xi, d_xib])
    scale = abs(probes[2]) ** n1 / 2.0
    m2 = np.diag([-Lam, scale, scale]) @ m1
    det_m2 = complex(np.linalg.det(m2))
    leading = 2j * sine * s ** (3 * n1 * eps)

    return KernelMatrix(
        probes=[complex(p) for p in probes],
        entries=entries,
        scale_s=s,
        eps=eps,
        thetas=thetas,
        det=float(np.linalg.det(entries)),
        m2=m2,
        det_m2=det_m2,
        det_m2_leading=leading,
        leading_ratio=det_m2 / leading,
    )


def is_strict_maximum(params: GlobalSolutionParams, z: complex, step: float = 1e-6) -> bool:
    _, hess = gradient_hessian(GlobalField(params), z, step)
    return bool(np.all(np.linalg.eigvalsh(hess) < 0))
