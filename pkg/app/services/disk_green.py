# app/services/disk_green.py
import logging
import math
from typing import Iterable, List, Optional, Sequence

import numpy as np

from ..exceptions import CoincidentPoints, TooFewSamples
from ..utils.polar_grid import PolarGrid

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MIN_SAMPLES = 16


class DiskGreen:
    """Función de Green de −Δ en B(0, R) con condición de Dirichlet.

    G(y, η) = −(1/2π) log|y − η| + H(y, η), con la parte regular por imagen:
    H(y, η) = (1/2π) log(|η|/R · |R²η/|η|² − y|) = (1/2π) log(|R² − y η̄| / R).
    """

    def __init__(self, radius: float):
        if not radius > 0:
            raise ValueError("radius debe ser positivo")
        self.radius = float(radius)

    def green_regular(self, y, eta):
        y = np.asarray(y, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        R = self.radius
        return np.log(np.abs(R * R - y * np.conj(eta)) / R) / TWO_PI

    def green(self, y, eta):
        y = np.asarray(y, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        dist = np.abs(y - eta)
        if np.any(dist <= 1e-15 * self.radius):
            raise CoincidentPoints("G(y, η) no está definida para y = η")
        return -np.log(dist) / TWO_PI + self.green_regular(y, eta)

    def grad1_regular(self, y, eta):
        """∇_y H = (1/2π)(y − η*)/|y − η*|², η* = R²η/|η|²; vale 0 en η = 0"""
        y = np.asarray(y, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        R = self.radius
        return -eta / (R * R - eta * np.conj(y)) / TWO_PI

    def green_gradient(self, y, eta):
        """∇_y G(y, η) en forma compleja"""
        y = np.asarray(y, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        diff = y - eta
        if np.any(np.abs(diff) <= 1e-15 * self.radius):
            raise CoincidentPoints("∇G(y, η) no está definido para y = η")
        return -1.0 / np.conj(diff) / TWO_PI + self.grad1_regular(y, eta)


def green(g: DiskGreen, y, eta):
    return g.green(y, eta)


def green_regular(g: DiskGreen, y, eta):
    return g.green_regular(y, eta)


def grad1_regular(g: DiskGreen, y, eta):
    return g.grad1_regular(y, eta)


class HarmonicLift:
    """Extensión armónica a B(center, R) de datos equiespaciados en el borde.

    Los coeficientes de Fourier se obtienen por FFT (regla del trapecio en la
    fórmula de Poisson); el interior se evalúa como Re F(z'), z' = (z − c)/R,
    F = c₀ + 2Σ_{0<k<n/2} c_k z'^k + c_{n/2} z'^{n/2}.
    """

    def __init__(self, samples: Sequence[float], radius: float = 1.0, center: complex = 0j,
                 offset: float = 0.0):
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n < MIN_SAMPLES:
            raise TooFewSamples(f"se requieren al menos {MIN_SAMPLES} muestras, hay {n}")
        self.samples = samples
        self.radius = float(radius)
        self.center = complex(center)
        self.offset = float(offset)
        coeffs = np.fft.fft(samples) / n
        half = n // 2
        k = np.arange(half + 1)
        c = coeffs[:half + 1] * np.exp(-1j * k * self.offset)
        poly = 2.0 * c
        poly[0] = c[0]
        if n % 2 == 0:
            poly[half] = c[half]
        self._poly = poly
        self._dpoly = np.polynomial.polynomial.polyder(poly)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(np.real(self._poly[0]))

    def _local(self, z):
        return (np.asarray(z, dtype=complex) - self.center) / self.radius

    def value(self, z):
        return np.real(np.polynomial.polynomial.polyval(self._local(z), self._poly))

    def gradient(self, z):
        """∂₁ + i∂₂ de Re F es conj(F')"""
        return np.conj(np.polynomial.polynomial.polyval(self._local(z), self._dpoly)) / self.radius

    def poisson_value(self, z):
        """Cuadratura directa del núcleo de Poisson (oráculo)"""
        z = np.atleast_1d(self._local(z))
        n = self.n_samples
        phi = self.offset + TWO_PI * np.arange(n) / n
        r = np.abs(z)[:, None]
        kernel = (1.0 - r ** 2) / np.abs(np.exp(1j * phi)[None, :] - z[:, None]) ** 2
        return (kernel @ self.samples) / n


def harmonic_lift(samples: Sequence[float], radius: float = 1.0, center: complex = 0j,
                  offset: float = 0.0) -> HarmonicLift:
    return HarmonicLift(samples, radius=radius, center=center, offset=offset)


def default_points(radius: float, n_radii: int = 3, n_angles: int = 8) -> np.ndarray:
    radii = radius * np.linspace(0.2, 0.7, n_radii)
    angles = TWO_PI * (np.arange(n_angles) + 0.25) / n_angles
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()


def representation_check(g: DiskGreen, grid: PolarGrid, u_values: np.ndarray, f_values: np.ndarray,
                         points: Optional[Iterable[complex]] = None) -> float:
    """max |u(y) − ∫G(y,η) f(η) dη − u|_∂| sobre los puntos de evaluación.

    La integral usa los pesos de volumen finito de la malla; la singularidad
    logarítmica se resta: ∫G f = ∫G (f − f(y)) + f(y)(R² − |y|²)/4.
    """
    if abs(grid.tau - g.radius) > 1e-12 * g.radius:
        raise ValueError("la malla y la función de Green deben compartir el radio")
    points = default_points(g.radius) if points is None else np.asarray(list(points), dtype=complex)
    boundary = float(np.mean(u_values[-1]))
    u_interp = grid.interpolator(u_values)
    f_interp = grid.interpolator(f_values)
    eta = grid.points.ravel()
    weights = grid.quadrature_weights.ravel()
    f_flat = f_values.ravel()
    R2 = g.radius ** 2

    defect = 0.0
    for y in points:
        f_y = float(f_interp.value(y))
        dist = np.abs(eta - y)
        mask = dist > 1e-14 * g.radius
        kernel = np.zeros_like(dist)
        kernel[mask] = g.green(y, eta[mask])
        integral = float(np.sum(weights * kernel * (f_flat - f_y))) + f_y * (R2 - abs(y) ** 2) / 4.0
        defect = max(defect, abs(float(u_interp.value(y)) - integral - boundary))
    logger.debug(f"Defecto de representación {defect:.3e} con {len(points)} puntos")
    return defect


def estimate_chain(deltas: Sequence[float] = (0.1, 0.05, 0.025), N: int = 2, tau: float = 1.0,
                   sigma_factor: float = 1.0, seed: int = 12345) -> List[dict]:
    """Mide 2π∇₁H(Q_m, Q_l) + τ⁻²δ² e^{iβ_l} frente a la cota δ²σ + δ⁴.

    Los puntos Q_l = e^{iβ_l}(1 + m_l) se perturban con |m_l| ≤ σ = sigma_factor·δ.
    """
    rng = np.random.default_rng(seed)
    beta = TWO_PI * np.arange(N + 1) / (N + 1)
    rows = []
    for delta in deltas:
        sigma = sigma_factor * delta
        m = sigma * rng.uniform(0, 1, N + 1) * np.exp(1j * rng.uniform(0, TWO_PI, N + 1))
        m[0] = 0.0
        Q = np.exp(1j * beta) * (1.0 + m)
        g = DiskGreen(tau / delta)
        measured_sigma = float(np.max(np.abs(Q - np.exp(1j * beta))))
        defect = 0.0
        for mi in range(N + 1):
            for li in range(N + 1):
                value = TWO_PI * g.grad1_regular(Q[mi], Q[li]) + delta ** 2 * np.exp(1j * beta[li]) / tau ** 2
                defect = max(defect, float(abs(value)))
        bound = delta ** 2 * measured_sigma + delta ** 4
        rows.append({"delta": float(delta), "sigma": measured_sigma, "defect": defect,
                     "bound": bound, "constant": defect / bound})
    logger.info(f"Cadena de estimaciones de ∇H: constantes {[round(r['constant'], 3) for r in rows]}")
    return rows
