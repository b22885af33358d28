# app/utils/quadrature.py
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodos y pesos de Gauss–Legendre en [-1, 1]"""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_rule(breakpoints: Sequence[float], order: int = 20) -> Tuple[np.ndarray, np.ndarray]:
    """Regla compuesta de Gauss–Legendre sobre los paneles [b_k, b_{k+1}]"""
    b = np.asarray(breakpoints, dtype=float)
    if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
        raise ValueError("breakpoints debe ser estrictamente creciente")
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(b)
    mid = 0.5 * (b[1:] + b[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_breakpoints(a: float, b: float, focus: float, width: float, ratio: float = 2.0) -> np.ndarray:
    """Paneles geométricos en [a, b] que se refinan hacia `focus` con ancho mínimo `width`"""
    if not a < b:
        raise ValueError("intervalo vacío")
    width = max(width, 1e-14 * max(1.0, abs(b)))
    focus = min(max(focus, a), b)
    points = {a, b, focus}
    step = width
    while focus - step > a:
        points.add(focus - step)
        step *= ratio
    step = width
    while focus + step < b:
        points.add(focus + step)
        step *= ratio
    return np.array(sorted(points))


def trapezoid_angles(n: int, offset: float = 0.0) -> Tuple[np.ndarray, float]:
    """Nodos equiespaciados en [0, 2π) y el peso común 2π/n"""
    theta = offset + 2.0 * np.pi * np.arange(n) / n
    return theta, 2.0 * np.pi / n


def polar_disk_rule(center: complex, radius: float, n_theta: int, focus: float = 0.0,
                    width: float = None, order: int = 20) -> Tuple[np.ndarray, np.ndarray]:
    """Regla tensorial (Gauss–Legendre radial × trapecio angular) sobre B(center, radius).

    Devuelve puntos complejos y pesos que incluyen el jacobiano r.
    """
    if width is None:
        width = radius / 8.0
    breaks = graded_breakpoints(0.0, radius, focus, width)
    r, wr = panel_rule(breaks, order)
    theta, wt = trapezoid_angles(n_theta)
    points = center + r[:, None] * np.exp(1j * theta)[None, :]
    weights = (wr * r)[:, None] * wt * np.ones(n_theta)[None, :]
    return points.ravel(), weights.ravel()
