# app/services/pohozaev_quadrature.py
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import BallOutsideDomain
from ..models import GlobalSolutionParams, PairDifferenceReport, PohozaevReport, ToleranceBudget
from ..utils.coefficients import SingularWeight
from ..utils.fields import Field
from ..utils.quadrature import polar_disk_rule, trapezoid_angles
from .circulant_algebra import _d_vector
from .global_family import GlobalField

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * math.pi


def _dot(a, b):
    """a·b para vectores escritos como complejos"""
    return np.real(a * np.conj(b))


def _check_ball(field: Field, center: complex, r: float):
    if not r > 0:
        raise ValueError("r debe ser positivo")
    if abs(center) + r >= field.radius:
        raise BallOutsideDomain(f"B({center}, {r}) no está contenida en |y| < {field.radius}")
    grid = getattr(field, "grid", None)
    if grid is not None:
        delta = getattr(field, "delta", 1.0)
        x = center * delta * np.exp(1j * getattr(field, "theta", 0.0))
        spacing = grid.spacing_at(abs(x), float(np.angle(x))) / delta
        if r < 4.0 * spacing:
            raise BallOutsideDomain(f"r={r} menor que 4 celdas de la malla ({spacing:.3e})")


def _bubble_width(field: Field, weight: SingularWeight, center: complex, r: float) -> float:
    """Escala sqrt(8 / (W e^u)) de una burbuja centrada en `center`"""
    peak = float(weight.value(np.array([center]))[0] * np.exp(field.value(np.array([center]))[0]))
    if not peak > 0:
        return r / 8.0
    return float(min(max(math.sqrt(8.0 / peak), 1e-12), r / 8.0))


def _circle(center: complex, r: float, n: int) -> Tuple[np.ndarray, np.ndarray, float]:
    phi, w = trapezoid_angles(n)
    nu = np.exp(1j * phi)
    return center + r * nu, nu, w * r


def pohozaev(field: Field, weight: SingularWeight, center: complex, r: float, xi_dir: complex,
             n_boundary: int = 2048, n_theta: int = 256, order: int = 20, width: Optional[float] = None,
             budget: Optional[ToleranceBudget] = None) -> PohozaevReport:
    """Identidad de Pohozaev en B(center, r) para Δu + W e^u = 0:

    ∫ ∂_ξW e^u − ∫_∂ e^u W (ξ·ν) = ∫_∂ (∂_νu ∂_ξu − ½|∇u|² (ξ·ν))
    """
    center = complex(center)
    xi_dir = complex(xi_dir)
    if abs(xi_dir) == 0:
        raise ValueError("xi_dir no puede ser nulo")
    xi_dir = xi_dir / abs(xi_dir)
    _check_ball(field, center, r)

    if width is None:
        width = _bubble_width(field, weight, center, r)
    points, weights = polar_disk_rule(center, r, n_theta, focus=0.0, width=width / 4.0, order=order)
    volume = float(np.sum(weights * _dot(weight.gradient(points), xi_dir) * np.exp(field.value(points))))

    y, nu, ds = _circle(center, r, n_boundary)
    grad = field.gradient(y)
    xi_nu = _dot(xi_dir, nu)
    flux = float(ds * np.sum(np.exp(field.value(y)) * weight.value(y) * xi_nu))
    d_nu = _dot(grad, nu)
    d_xi = _dot(grad, xi_dir)
    rhs = float(ds * np.sum(d_nu * d_xi - 0.5 * np.abs(grad) ** 2 * xi_nu))

    residual = abs(volume - flux - rhs)
    logger.debug(f"Pohozaev en B({center:.4g}, {r}): residuo {residual:.3e}",
                 extra={"n_boundary": n_boundary, "n_theta": n_theta})
    return PohozaevReport(center=center, r=r, xi_dir=xi_dir, lhs_volume=volume, lhs_flux=flux,
                          rhs_boundary=rhs, residual=residual, n_boundary=n_boundary,
                          budget=budget or ToleranceBudget())


def pair_difference(uA: Field, uB: Field, center: complex, r: float, xi_dir: complex,
                    n_boundary: int = 2048, budget: Optional[ToleranceBudget] = None) -> PairDifferenceReport:
    """Integral mixta de w = uA − uB contra V = uB sobre ∂B(center, r), término a término"""
    center = complex(center)
    xi_dir = complex(xi_dir) / abs(xi_dir)
    for field in (uA, uB):
        _check_ball(field, center, r)

    y, nu, ds = _circle(center, r, n_boundary)
    grad_V = uB.gradient(y)
    grad_w = uA.gradient(y) - grad_V
    xi_nu = _dot(xi_dir, nu)
    t1 = float(ds * np.sum(_dot(grad_V, nu) * _dot(grad_w, xi_dir)))
    t2 = float(ds * np.sum(_dot(grad_w, nu) * _dot(grad_V, xi_dir)))
    t3 = float(-ds * np.sum(_dot(grad_V, grad_w) * xi_nu))
    return PairDifferenceReport(center=center, r=r, xi_dir=xi_dir, flux_V_dxi_w=t1, flux_w_dxi_V=t2,
                                gradient_cross=t3, total=t1 + t2 + t3, budget=budget or ToleranceBudget())


def pair_difference_vector(N: int, m: Sequence[complex], s: int, variant: str = "balanced") -> complex:
    """8π Σ_{l≠s} d_{|l−s|}(m̄_s e^{iβ_l} − m̄_l e^{iβ_•}) como vector complejo.

    "balanced": e^{iβ_s} en el segundo término; "printed": e^{iβ_{2l+s}}.
    """
    if N < 1:
        raise ValueError("N debe ser ≥ 1")
    m = np.asarray(m, dtype=complex)
    if m.size != N + 1:
        raise ValueError("m debe tener N+1 entradas")
    d = _d_vector(N)
    beta = lambda k: 2.0 * math.pi * (k % (N + 1)) / (N + 1)
    total = 0j
    for l in range(N + 1):
        if l == s:
            continue
        second = beta(s) if variant == "balanced" else beta(2 * l + s)
        if variant not in ("balanced", "printed"):
            raise ValueError(f"Variante desconocida: {variant}")
        total += d[abs(l - s) - 1] * (np.conj(m[s]) * np.exp(1j * beta(l)) - np.conj(m[l]) * np.exp(1j * second))
    return EIGHT_PI * total


def pair_difference_closed_form(N: int, m: Sequence[complex], s: int, xi_dir: complex,
                                variant: str = "balanced") -> float:
    xi_dir = complex(xi_dir) / abs(xi_dir)
    return float(_dot(pair_difference_vector(N, m, s, variant), xi_dir))


def global_pair(N: int, lam: float, xi: complex, m_shift: complex,
                h0: float = 1.0) -> Tuple[GlobalField, GlobalField, np.ndarray]:
    """uA con centro ξ + m_shift, uB con centro ξ; m_l = Q_l^A / Q_l^B − 1 desde las raíces"""
    pA = GlobalSolutionParams(N=N, lam=lam, xi=complex(xi) + complex(m_shift), h0=h0)
    pB = GlobalSolutionParams(N=N, lam=lam, xi=complex(xi), h0=h0)
    roots = lambda z: np.abs(z) ** (1.0 / (N + 1)) * np.exp(
        1j * (np.angle(z) + 2.0 * math.pi * np.arange(N + 1)) / (N + 1))
    m = roots(pA.xi) / roots(pB.xi) - 1.0
    radius = 10.0 * max(1.0, abs(xi)) ** (1.0 / (N + 1))
    return GlobalField(pA, radius), GlobalField(pB, radius), m


def pohozaev_balance_residual(N: int, delta: float, L: complex, m: Sequence[complex]) -> np.ndarray:
    """8π(δL − 2N m̄_s e^{iβ_s}) − 8πΣ_{l≠s} d(m̄_s e^{iβ_l} − m̄_l e^{iβ_s}) para s = 0..N.

    Balance de primer orden de la identidad de Pohozaev en cada burbuja; se anula
    para los desplazamientos con la convención correcta.
    """
    m = np.asarray(m, dtype=complex)
    out = np.empty(N + 1, dtype=complex)
    for s in range(N + 1):
        e_s = np.exp(2j * math.pi * s / (N + 1))
        out[s] = EIGHT_PI * (delta * L - 2 * N * np.conj(m[s]) * e_s) - pair_difference_vector(N, m, s)
    return out


def local_mass(field: Field, weight: SingularWeight, center: complex, r: float,
               f: Optional[Callable] = None, n_theta: int = 256, order: int = 20,
               width: Optional[float] = None) -> float:
    """∫_{B(center, r)} f W e^u"""
    center = complex(center)
    _check_ball(field, center, r)
    if width is None:
        width = _bubble_width(field, weight, center, r)
    points, weights = polar_disk_rule(center, r, n_theta, focus=0.0, width=width / 4.0, order=order)
    integrand = weight.value(points) * np.exp(field.value(points))
    if f is not None:
        integrand = integrand * f(points)
    return float(np.sum(weights * integrand))


def refinement_sweep(field: Field, weight: SingularWeight, center: complex, r: float, xi_dir: complex,
                     nodes: Sequence[int] = (8, 16, 32, 64, 128, 256, 512, 1024, 2048)) -> List[PohozaevReport]:
    """Residuos de Pohozaev al duplicar los nodos del borde"""
    return [pohozaev(field, weight, center, r, xi_dir, n_boundary=n) for n in nodes]


def convergence_orders(reports: Sequence[PohozaevReport], floor: Optional[float] = None) -> List[float]:
    """Orden observado log(R_k/R_{k+1}) / log(n_{k+1}/n_k) entre niveles sobre el piso de ruido.

    El piso por defecto es 10 veces el residuo del nivel más fino; los pares cuyo
    residuo fino ya cae en el piso no se cuentan.
    """
    if len(reports) < 2:
        raise ValueError("se necesitan al menos dos niveles")
    if floor is None:
        floor = 10.0 * reports[-1].residual
    orders = []
    for coarse, fine in zip(reports, reports[1:]):
        if fine.n_boundary <= coarse.n_boundary:
            raise ValueError("los nodos deben crecer")
        if min(coarse.residual, fine.residual) <= floor:
            continue
        orders.append(math.log(coarse.residual / fine.residual) / math.log(fine.n_boundary / coarse.n_boundary))
    return orders
