# app/utils/polar_grid.py
import logging
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import brentq

from ..models import PolarGridSpec

logger = logging.getLogger(__name__)


class PolarGrid:
    """Malla polar mapeada r = R(s), θ = Θ(t), con s y t uniformes.

    Los nodos radiales son s_i = (i + 1/2)Δs con Δs = 1/(n_r − 1/2), de modo que el
    último anillo cae exactamente en r = τ (nodo de Dirichlet). El mapeo sinh agrupa
    nodos alrededor de `cluster_radius`. Con `angular_grading` > 0 el ángulo se agrupa
    del mismo modo alrededor de los k = `angular_clusters` ángulos 2πl/k, que caen
    exactamente en nodos.
    """

    def __init__(self, spec: PolarGridSpec, tau: float):
        self.spec = spec
        self.tau = float(tau)
        self.n_r = spec.n_r
        self.n_theta = spec.n_theta
        if self.n_theta % 2:
            raise ValueError("n_theta debe ser par")
        self.ds = 1.0 / (self.n_r - 0.5)
        self.dt = 2.0 * np.pi / self.n_theta
        self.s = (np.arange(self.n_r) + 0.5) * self.ds
        self.s[-1] = 1.0
        self._setup_mapping()
        self._setup_angles()
        self.r = self.radius(self.s)
        faces = np.arange(1, self.n_r) * self.ds
        self.faces = np.concatenate([[0.0], self.radius(faces)])

    def _setup_mapping(self):
        b = self.spec.grading
        c = self.spec.cluster_radius
        if b == 0.0:
            self._b, self._A, self._s0, self._c = 0.0, self.tau, 0.0, 0.0
            return
        if c == 0.0:
            s0 = 0.0
            A = self.tau / np.sinh(b)
        else:
            g = lambda s0: c * np.sinh(b * (1.0 - s0)) - (self.tau - c) * np.sinh(b * s0)
            s0 = brentq(g, 0.0, 1.0, xtol=1e-15)
            A = c / np.sinh(b * s0)
        self._b, self._A, self._s0, self._c = b, A, s0, c

    def _setup_angles(self):
        k = self.spec.angular_clusters
        if self.spec.angular_grading > 0.0 and self.n_theta % (2 * k):
            raise ValueError(f"n_theta={self.n_theta} debe ser múltiplo de 2k={2 * k}")
        self._k = k
        self._half = np.pi / k
        self.t = np.arange(self.n_theta) * self.dt
        self.theta = self.angle(self.t)
        # θ_j desenrollado con θ_n = θ_0 + 2π
        closed = np.concatenate([self.theta, [self.theta[0] + 2 * np.pi]])
        self.node_gaps = np.diff(closed)
        faces = self.angle(self.t + 0.5 * self.dt)
        faces = np.concatenate([[faces[-1] - 2 * np.pi], faces])
        faces = np.unwrap(faces)
        self.angular_widths = np.diff(faces)
        self.dtheta = float(np.max(self.angular_widths))

    # --- mapeo radial ---

    def radius(self, s):
        s = np.asarray(s, dtype=float)
        if self._b == 0.0:
            return self.tau * s
        return self._c + self._A * np.sinh(self._b * (s - self._s0))

    def dradius(self, s):
        s = np.asarray(s, dtype=float)
        if self._b == 0.0:
            return self.tau * np.ones_like(s)
        return self._A * self._b * np.cosh(self._b * (s - self._s0))

    def inverse(self, r):
        r = np.asarray(r, dtype=float)
        if self._b == 0.0:
            return r / self.tau
        return self._s0 + np.arcsinh((r - self._c) / self._A) / self._b

    # --- mapeo angular ---

    @property
    def angular_graded(self) -> bool:
        return self.spec.angular_grading > 0.0

    def _sector(self, x):
        """Índice del sector y coordenada local respecto de su centro 2πl/k"""
        width = 2.0 * self._half
        l = np.floor(np.mod(x, 2 * np.pi) / width + 0.5)
        return l, np.mod(x, 2 * np.pi) - l * width

    def angle(self, t):
        t = np.asarray(t, dtype=float)
        if not self.angular_graded:
            return np.mod(t, 2 * np.pi)
        b = self.spec.angular_grading
        l, local = self._sector(t)
        theta = l * 2.0 * self._half + self._half * np.sinh(b * local / self._half) / np.sinh(b)
        return np.mod(theta, 2 * np.pi)

    def dangle(self, t):
        """dΘ/dt"""
        t = np.asarray(t, dtype=float)
        if not self.angular_graded:
            return np.ones_like(t)
        b = self.spec.angular_grading
        _, local = self._sector(t)
        return b * np.cosh(b * local / self._half) / np.sinh(b)

    def angle_inverse(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not self.angular_graded:
            return np.mod(theta, 2 * np.pi)
        b = self.spec.angular_grading
        l, local = self._sector(theta)
        t = l * 2.0 * self._half + self._half * np.arcsinh(np.sinh(b) * local / self._half) / b
        return np.mod(t, 2 * np.pi)

    @cached_property
    def antipode(self) -> np.ndarray:
        """Índice del nodo más cercano a θ_j + π en el mismo anillo"""
        if not self.angular_graded or self._k % 2 == 0:
            return (np.arange(self.n_theta) + self.n_theta // 2) % self.n_theta
        target = np.mod(self.theta + np.pi, 2 * np.pi)
        gap = np.abs(np.angle(np.exp(1j * (target[:, None] - self.theta[None, :]))))
        return np.argmin(gap, axis=1)

    def antipodal_rows(self, values: np.ndarray) -> np.ndarray:
        """Valores de cada anillo en θ + π, interpolados en t si no caen en nodos"""
        if not self.angular_graded or self._k % 2 == 0:
            return np.roll(values, self.n_theta // 2, axis=1)
        t_target = self.angle_inverse(self.theta + np.pi)
        return np.vstack([self._periodic_spline(row)(t_target) for row in values])

    def _periodic_spline(self, row: np.ndarray) -> CubicSpline:
        t = np.concatenate([self.t, [2 * np.pi]])
        return CubicSpline(t, np.concatenate([row, row[:1]]), bc_type="periodic")

    def resample_ring(self, row: np.ndarray, n: int = None) -> np.ndarray:
        """Muestras equiespaciadas en θ (para transformadas de Fourier del borde)"""
        row = np.asarray(row, dtype=float)
        n = n or self.n_theta
        if not self.angular_graded and n == self.n_theta:
            return row.copy()
        theta = 2.0 * np.pi * np.arange(n) / n
        return self._periodic_spline(row)(self.angle_inverse(theta))

    # --- geometría de volumen finito ---

    @property
    def n_unknowns(self) -> int:
        return (self.n_r - 1) * self.n_theta

    @cached_property
    def points(self) -> np.ndarray:
        """Nodos complejos, forma (n_r, n_theta)"""
        return self.r[:, None] * np.exp(1j * self.theta)[None, :]

    @cached_property
    def cell_areas(self) -> np.ndarray:
        """Áreas de las celdas de volumen finito (anillos interiores), forma (n_r − 1, n_theta)"""
        rings = 0.5 * (self.faces[1:] ** 2 - self.faces[:-1] ** 2)
        return rings[:, None] * self.angular_widths[None, :]

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Pesos de integración sobre B_τ, incluye la media celda del borde"""
        w = np.empty(self.n_r)
        w[:-1] = 0.5 * (self.faces[1:] ** 2 - self.faces[:-1] ** 2)
        w[-1] = 0.5 * (self.tau ** 2 - self.faces[-1] ** 2)
        return w[:, None] * self.angular_widths[None, :]

    def spacing_at(self, radius: float, angle: float = 0.0) -> float:
        """Mayor paso local (radial o angular) en el punto radius·e^{i angle}"""
        s = float(np.clip(self.inverse(radius), 0.0, 1.0))
        dtheta = float(self.dangle(self.angle_inverse(angle))) * self.dt
        return max(float(self.dradius(s)) * self.ds, radius * dtheta)

    def interpolator(self, values: np.ndarray) -> "GridInterpolator":
        return GridInterpolator(self, values)


class GridInterpolator:
    """Spline bicúbico en (s, t) con anillo fantasma a través del origen y t periódico"""

    _PAD = 4

    def __init__(self, grid: PolarGrid, values: np.ndarray):
        if values.shape != (grid.n_r, grid.n_theta):
            raise ValueError(f"forma {values.shape} no coincide con la malla")
        self.grid = grid
        p = self._PAD
        ghost = grid.antipodal_rows(values[:p])[::-1]
        s_ext = np.concatenate([-grid.s[:p][::-1], grid.s])
        data = np.vstack([ghost, values])
        t_ext = np.concatenate([grid.t[-p:] - 2 * np.pi, grid.t, grid.t[:p] + 2 * np.pi])
        data = np.hstack([data[:, -p:], data, data[:, :p]])
        self._spline = RectBivariateSpline(s_ext, t_ext, data, kx=3, ky=3)

    def _coords(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        theta = np.mod(np.angle(z), 2 * np.pi)
        s = self.grid.inverse(r)
        t = self.grid.angle_inverse(theta)
        return z, r, theta, s, t

    def value(self, z) -> np.ndarray:
        z, r, theta, s, t = self._coords(z)
        out = self._spline.ev(s.ravel(), t.ravel())
        return out.reshape(z.shape)

    def gradient(self, z) -> np.ndarray:
        """Gradiente complejo ∂₁u + i∂₂u = e^{iθ}(u_r + i u_θ / r)"""
        z, r, theta, s, t = self._coords(z)
        u_s = self._spline.ev(s.ravel(), t.ravel(), dx=1).reshape(z.shape)
        u_t = self._spline.ev(s.ravel(), t.ravel(), dy=1).reshape(z.shape)
        u_r = u_s / self.grid.dradius(s)
        u_theta = u_t / self.grid.dangle(t)
        r_safe = np.where(r > 0, r, 1.0)
        return np.exp(1j * theta) * (u_r + 1j * u_theta / r_safe)
