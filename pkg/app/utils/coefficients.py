# app/utils/coefficients.py
import re
import logging
from typing import Dict, Tuple

import numpy as np

from ..models import CoefficientKind, CoefficientSpec

logger = logging.getLogger(__name__)

_TERM = re.compile(r"^([+-]?)\s*(.*)$")
_FACTOR = re.compile(r"^(x1|x2)(?:\^(\d+))?$")


def _parse_monomial(text: str) -> Tuple[Tuple[int, int], float]:
    coef = 1.0
    i = j = 0
    for factor in filter(None, (f.strip() for f in text.split("*"))):
        match = _FACTOR.match(factor)
        if match:
            power = int(match.group(2) or 1)
            if match.group(1) == "x1":
                i += power
            else:
                j += power
        else:
            coef *= float(factor)
    return (i, j), coef


def parse_polynomial(text: str) -> Dict[str, float]:
    """Convierte '1 + 0.1*x1 - 0.2*x1*x2^2' en {'i,j': c}"""
    cleaned = text.replace(" ", "").replace("**", "^")
    if not cleaned:
        return {}
    pieces = re.findall(r"[+-]?[^+-]+", cleaned.replace("e-", "E~").replace("e+", "E#"))
    terms: Dict[str, float] = {}
    for piece in pieces:
        piece = piece.replace("E~", "e-").replace("E#", "e+")
        sign, body = _TERM.match(piece).groups()
        (i, j), coef = _parse_monomial(body)
        key = f"{i},{j}"
        terms[key] = terms.get(key, 0.0) + (-coef if sign == "-" else coef)
    return terms


def parse_expression(text: str) -> CoefficientSpec:
    """Gramática mínima: polinomio en x1, x2 o exp(polinomio)"""
    stripped = text.strip()
    if stripped.startswith("exp(") and stripped.endswith(")"):
        terms = parse_polynomial(stripped[4:-1])
        terms.setdefault("0,0", 0.0)
        return CoefficientSpec(kind=CoefficientKind.EXP_POLYNOMIAL, terms=terms)
    terms = parse_polynomial(stripped)
    terms.setdefault("0,0", 0.0)
    return CoefficientSpec(kind=CoefficientKind.POLYNOMIAL, terms=terms)


class CoefficientField:
    """Evalúa h, ∇h (complejo ∂₁+i∂₂) y la hessiana en puntos complejos"""

    def __init__(self, spec: CoefficientSpec):
        self.spec = spec
        size = 1 + max([sum(map(int, k.split(","))) for k in spec.terms] + [0])
        self._c = np.zeros((size, size))
        for key, value in spec.terms.items():
            i, j = map(int, key.split(","))
            self._c[i, j] += value
        self._cx = np.polynomial.polynomial.polyder(self._c, axis=0)
        self._cy = np.polynomial.polynomial.polyder(self._c, axis=1)
        self._cxx = np.polynomial.polynomial.polyder(self._c, 2, axis=0)
        self._cyy = np.polynomial.polynomial.polyder(self._c, 2, axis=1)
        self._cxy = np.polynomial.polynomial.polyder(self._cx, axis=1)

    def _poly(self, c, z):
        return np.polynomial.polynomial.polyval2d(np.real(z), np.imag(z), c)

    def _modulation_parts(self, z):
        c = self.spec.modulation
        k = self.spec.modulation_power
        g = 1.0 - c * z ** k
        g1 = -c * k * z ** (k - 1)
        g2 = -c * k * (k - 1) * z ** (k - 2) if k >= 2 else np.zeros_like(g)
        return g, g1, g2

    def log_value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.spec.kind == CoefficientKind.POLYNOMIAL:
            return np.log(self._poly(self._c, z))
        out = self._poly(self._c, z)
        if self.spec.kind == CoefficientKind.MODULATED:
            g, _, _ = self._modulation_parts(z)
            out = out - 2.0 * np.log(np.abs(g) ** 2)
        return out

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.spec.kind == CoefficientKind.POLYNOMIAL:
            return self._poly(self._c, z)
        return np.exp(self.log_value(z))

    def grad_log(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        px = self._poly(self._cx, z)
        py = self._poly(self._cy, z)
        if self.spec.kind == CoefficientKind.POLYNOMIAL:
            return (px + 1j * py) / self._poly(self._c, z)
        grad = px + 1j * py
        if self.spec.kind == CoefficientKind.MODULATED:
            g, g1, _ = self._modulation_parts(z)
            # ∇ log|g|² = 2·conj(g'/g) para g holomorfa
            grad = grad - 4.0 * np.conj(g1 / g)
        return grad

    def gradient(self, z) -> np.ndarray:
        return self.value(z) * self.grad_log(z)

    def hessian_log(self, z) -> np.ndarray:
        """Hessiana de log h, forma (..., 2, 2)"""
        z = np.asarray(z, dtype=complex)
        pxx = self._poly(self._cxx, z)
        pyy = self._poly(self._cyy, z)
        pxy = self._poly(self._cxy, z)
        if self.spec.kind == CoefficientKind.POLYNOMIAL:
            p = self._poly(self._c, z)
            px = self._poly(self._cx, z) / p
            py = self._poly(self._cy, z) / p
            hxx, hyy, hxy = pxx / p - px * px, pyy / p - py * py, pxy / p - px * py
        else:
            hxx, hyy, hxy = pxx, pyy, pxy
            if self.spec.kind == CoefficientKind.MODULATED:
                g, g1, g2 = self._modulation_parts(z)
                G2 = (g2 * g - g1 ** 2) / g ** 2
                # Hess(Re G) = [[Re G'', -Im G''], [-Im G'', -Re G'']] y log|g|² = 2 Re log g
                hxx = hxx - 4.0 * np.real(G2)
                hyy = hyy + 4.0 * np.real(G2)
                hxy = hxy + 4.0 * np.imag(G2)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def laplacian_log(self, z) -> np.ndarray:
        hess = self.hessian_log(z)
        return hess[..., 0, 0] + hess[..., 1, 1]

    def hessian(self, z) -> np.ndarray:
        h = self.value(z)
        gl = self.grad_log(z)
        g = np.stack([np.real(gl), np.imag(gl)], -1)
        outer = g[..., :, None] * g[..., None, :]
        return h[..., None, None] * (self.hessian_log(z) + outer)


def modulated_coefficient(N: int, xi: complex, tau: float) -> CoefficientSpec:
    """h = |1 − (ξ̄/τ^{2N+2}) x^{N+1}|^{-4}: el cociente que vuelve constante en ∂B_τ a la familia global"""
    c = np.conj(xi) / tau ** (2 * N + 2)
    logger.debug(f"Coeficiente modulado N={N} c={c}")
    return CoefficientSpec(kind=CoefficientKind.MODULATED, terms={"0,0": 0.0},
                           modulation=complex(c), modulation_power=N + 1)


class SingularWeight:
    """W(y) = |y|^{2N} h₀ h(T y); T = δ e^{iθ} lleva coordenadas escaladas a originales"""

    def __init__(self, N: int, coefficient: CoefficientField = None, h0: float = 1.0, transform: complex = 1.0):
        self.N = N
        self.coefficient = coefficient
        self.h0 = float(h0)
        self.transform = complex(transform)

    def value(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        out = self.h0 * np.abs(y) ** (2 * self.N)
        if self.coefficient is not None:
            out = out * self.coefficient.value(self.transform * y)
        return out

    def grad_log(self, y) -> np.ndarray:
        """∇ log W = 2N y/|y|² + conj(T)·∇ log h(T y)"""
        y = np.asarray(y, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(y != 0, 2.0 * self.N / np.conj(np.where(y != 0, y, 1.0)), 0.0)
        if self.coefficient is not None:
            out = out + np.conj(self.transform) * self.coefficient.grad_log(self.transform * y)
        return out

    def gradient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        out = 2.0 * self.N * self.h0 * np.abs(y) ** (2 * self.N - 2) * y if self.N > 0 else np.zeros_like(y)
        if self.coefficient is None:
            return out
        Ty = self.transform * y
        return (out * self.coefficient.value(Ty)
                + self.h0 * np.abs(y) ** (2 * self.N) * np.conj(self.transform) * self.coefficient.gradient(Ty))
