# app/utils/fields.py
import logging
from typing import Callable, Optional, Protocol, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class Field(Protocol):
    """Campo escalar evaluable en puntos complejos sobre B(0, radius)"""
    N: int
    radius: float

    def value(self, z) -> np.ndarray: ...

    def gradient(self, z) -> np.ndarray: ...


class FunctionField:
    """Campo definido por funciones; el gradiente es opcional (diferencias centrales)"""

    def __init__(self, N: int, radius: float, value_fn: Callable, gradient_fn: Optional[Callable] = None,
                 step: float = 1e-6):
        self.N = N
        self.radius = radius
        self._value = value_fn
        self._gradient = gradient_fn
        self._step = step

    def value(self, z):
        return self._value(np.asarray(z, dtype=complex))

    def gradient(self, z):
        z = np.asarray(z, dtype=complex)
        if self._gradient is not None:
            return self._gradient(z)
        h = self._step
        gx = (self._value(z + h) - self._value(z - h)) / (2 * h)
        gy = (self._value(z + 1j * h) - self._value(z - 1j * h)) / (2 * h)
        return gx + 1j * gy


class ScaledField:
    """v(y) = u(δ e^{iθ} y) + 2(N+1) log δ sobre |y| < R/δ"""

    def __init__(self, base: Field, delta: float, theta: float = 0.0):
        self.base = base
        self.N = base.N
        self.delta = float(delta)
        self.theta = float(theta)
        self.radius = base.radius / self.delta
        self._T = self.delta * np.exp(1j * self.theta)
        self._shift = 2.0 * (self.N + 1) * np.log(self.delta)

    def value(self, y):
        return self.base.value(self._T * np.asarray(y, dtype=complex)) + self._shift

    def gradient(self, y):
        return np.conj(self._T) * self.base.gradient(self._T * np.asarray(y, dtype=complex))


def gradient_hessian(field: Field, z: complex, step: float = 1e-6) -> Tuple[np.ndarray, np.ndarray]:
    """Gradiente real y hessiana por diferencias centrales del gradiente"""
    g = complex(np.asarray(field.gradient(np.array([z])))[0])
    gpx = field.gradient(np.array([z + step, z - step]))
    gpy = field.gradient(np.array([z + 1j * step, z - 1j * step]))
    col_x = (gpx[0] - gpx[1]) / (2 * step)
    col_y = (gpy[0] - gpy[1]) / (2 * step)
    hess = np.array([[col_x.real, col_y.real], [col_x.imag, col_y.imag]])
    hess = 0.5 * (hess + hess.T)
    return np.array([g.real, g.imag]), hess


def refine_maximum(field: Field, seed: complex, max_iter: int = 50, tol: float = 1e-12,
                   step: Optional[float] = None) -> Tuple[complex, bool]:
    """Newton sobre ∇u = 0 con amortiguamiento 1/2 cuando |∇u| crece.

    Devuelve el punto y si es un máximo local estricto.
    """
    z = complex(seed)
    if step is None:
        step = 1e-6 * max(1.0, abs(z))
    grad, hess = gradient_hessian(field, z, step)
    for _ in range(max_iter):
        if np.linalg.norm(grad) < tol:
            break
        try:
            dx = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        # Paso de Newton solo si apunta en dirección de ascenso; si no, gradiente
        if grad @ dx <= 0:
            dx = grad / max(np.linalg.norm(hess, 2), 1e-300)
        t = 1.0
        while True:
            candidate = z + t * complex(dx[0], dx[1])
            g_new, h_new = gradient_hessian(field, candidate, step)
            if np.linalg.norm(g_new) < np.linalg.norm(grad) or t < 1e-6:
                break
            t *= 0.5
        z, grad, hess = candidate, g_new, h_new
        if t * np.linalg.norm(dx) < 1e-15 * max(1.0, abs(z)):
            break
    eig = np.linalg.eigvalsh(hess)
    return z, bool(np.all(eig < 0))
