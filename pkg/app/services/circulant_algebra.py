# app/services/circulant_algebra.py
import logging
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..config import settings
from ..exceptions import SizeCap
from ..models import CirculantSystem, IdentityReport

logger = logging.getLogger(__name__)

# Por encima de este N las sumas dobles usan productos Toeplitz por FFT
BRUTE_FORCE_MAX_N = 2000


def _d_vector(N: int) -> np.ndarray:
    """d_j = 1/sin²(jπ/(N+1)), j = 1..N, palíndromo exacto"""
    j = np.arange(1, N + 1)
    folded = np.minimum(j, N + 1 - j)
    return 1.0 / np.sin(folded * np.pi / (N + 1)) ** 2


def _phase(N: int, k) -> np.ndarray:
    """e^{iβ_k} con el índice reducido módulo N+1"""
    k = np.mod(np.asarray(k), N + 1)
    return np.exp(2j * np.pi * k / (N + 1))


def build(N: int, with_inverse: bool = True) -> CirculantSystem:
    """Construye d, D, A y (opcionalmente) A⁻¹ por LU con pivoteo parcial"""
    if N < 1:
        raise ValueError("N debe ser ≥ 1")
    cap = settings.circulant_dense_cap if with_inverse else settings.circulant_sweep_cap
    if N > cap:
        raise SizeCap(f"N={N} supera el límite {cap}")

    d = _d_vector(N)
    D = float(d.sum())
    beta = 2.0 * np.pi * np.arange(N + 1) / (N + 1)
    A = A_inv = cond = None
    if with_inverse:
        A = linalg.toeplitz(np.concatenate([[D], -d[:N - 1]]))
        lu, piv = linalg.lu_factor(A)
        A_inv = linalg.lu_solve((lu, piv), np.eye(N))
        cond = float(np.linalg.cond(A))
        defect = float(np.max(np.abs(A @ A_inv - np.eye(N))))
        if defect > 1e-10:
            logger.warning(f"A·A⁻¹ difiere de la identidad en {defect:.3e} (N={N})")

    guess = N * (N + 2) / 3.0
    if abs(D - guess) > 1e-9 * guess:
        logger.warning(f"D={D!r} no coincide con N(N+2)/3={guess!r}")

    return CirculantSystem(N=N, d=d, D=D, A=A, A_inv=A_inv, beta=beta,
                           Lambda_const=D - 2 * N, condition_number=cond)


def dft_inverse(sys: CirculantSystem) -> np.ndarray:
    """A⁻¹ por diagonalización DFT del circulante (N+1)×(N+1).

    A es la matriz reducida (se elimina el índice 0) de un laplaciano circulante
    C con núcleo span(1); con G = C⁺: (A⁻¹)_{ij} = G_ij − G_i0 − G_0j + G_00.
    """
    N = sys.N
    g = _pseudo_inverse_kernel(sys)
    idx = np.arange(N + 1)
    G = g[np.mod(idx[:, None] - idx[None, :], N + 1)]
    return G[1:, 1:] - G[1:, :1] - G[:1, 1:] + G[0, 0]


def _pseudo_inverse_kernel(sys: CirculantSystem) -> np.ndarray:
    """Primera columna g de C⁺"""
    column = np.concatenate([[sys.D], -sys.d])
    eig = np.real(np.fft.fft(column))
    inv_eig = np.zeros_like(eig)
    inv_eig[1:] = 1.0 / eig[1:]
    return np.real(np.fft.ifft(inv_eig))


def apply_inverse(sys: CirculantSystem, v) -> np.ndarray:
    """A⁻¹v; sin A⁻¹ densa usa la convolución circular con g en O(N log N)"""
    v = np.asarray(v)
    if sys.A_inv is not None:
        return sys.A_inv @ v
    g = _pseudo_inverse_kernel(sys)
    padded = np.concatenate([[0.0], v])
    Gv = np.fft.ifft(np.fft.fft(g) * np.fft.fft(padded))
    total = np.sum(v)
    out = Gv[1:] - g[1:] * total - Gv[0] + g[0] * total
    return out if np.iscomplexobj(v) else np.real(out)


def apply_matrix(sys: CirculantSystem, v) -> np.ndarray:
    """A v = D v − T v, T Toeplitz con columna (0, d₁, …, d_{N−1})"""
    v = np.asarray(v)
    if sys.A is not None:
        return sys.A @ v
    return sys.D * v - _toeplitz_matvec(sys.d, v)


def _inverse_scales(sys: CirculantSystem) -> Tuple[np.ndarray, np.ndarray, float]:
    """Escalas de los sumandos: (|A⁻¹|d por fila, Σ_j|a^{sj}| por fila, Σ|a^{sj}|).

    Sin A⁻¹ densa se acotan con |a^{sj}| ≤ 4 max|g|.
    """
    N = sys.N
    if sys.A_inv is not None:
        absA = np.abs(sys.A_inv)
        return absA @ sys.d, absA.sum(axis=1), float(absA.sum())
    bound = 4.0 * float(np.max(np.abs(_pseudo_inverse_kernel(sys))))
    return np.full(N, bound * sys.D), np.full(N, bound * N), bound * N * N


def _default_tol(N: int) -> float:
    return 1e-8 if N <= 100 else 1e-6


def _report(name: str, N: int, lhs: complex, rhs: complex, tol: float,
            scale: float = 1.0, index: Optional[int] = None) -> IdentityReport:
    """Absoluta hasta N = 100, relativa a la escala de los sumandos por encima"""
    err = float(abs(lhs - rhs))
    bound = tol if N <= 100 else tol * max(1.0, scale)
    return IdentityReport(identity_name=name, N=N, index=index, lhs=complex(lhs), rhs=complex(rhs),
                          abs_error=err, tol=bound, passed=err <= bound)


def verify_identities(sys: CirculantSystem, tol: Optional[float] = None,
                      matrix_free: bool = False) -> List[IdentityReport]:
    """Evalúa los lemas del sistema circulante en aritmética de punto flotante.

    Sin A⁻¹ densa solo se evalúan D-guess y compu-1, salvo con `matrix_free`,
    que aplica A y A⁻¹ por FFT.
    """
    N = sys.N
    tol = _default_tol(N) if tol is None else tol
    d = sys.d
    e = _phase(N, np.arange(1, N + 1))
    reports = [
        _report("D-guess", N, sys.D, N * (N + 2) / 3.0, tol, scale=sys.D),
        _report("compu-1", N, sys.D - np.sum(d * e), 2 * N, tol, scale=2 * sys.D),
    ]
    if sys.A_inv is None and not matrix_free:
        return reports

    compu8 = apply_inverse(sys, d[::-1])
    inv = apply_inverse(sys, e)
    inv_conj = apply_inverse(sys, np.conj(e))
    # (imp-1): −(d_N,…,d₁) + A e = 2N e
    eigen = apply_matrix(sys, e) - d[::-1]
    compu8_scale, row_scale, quad_scale = _inverse_scales(sys)
    for s in range(N):
        reports.append(_report("compu-8", N, compu8[s], 1.0, tol, scale=compu8_scale[s], index=s + 1))
        reports.append(_report("inv-lem", N, inv[s], (e[s] - 1.0) / (2 * N), tol,
                               scale=row_scale[s], index=s + 1))
        reports.append(_report("eigenvector", N, eigen[s], 2 * N * e[s], tol, scale=2 * sys.D, index=s + 1))
    reports.append(_report("compu-2", N, e @ inv_conj, (N + 1) / (2.0 * N), tol, scale=quad_scale))
    reports.append(_report("add-lem", N, e @ inv, 0.0, tol, scale=quad_scale))

    failed = [r for r in reports if not r.passed]
    if failed:
        logger.warning(f"N={N}: {len(failed)} identidades fuera de tolerancia",
                       extra={"identities": [r.identity_name for r in failed]})
    return reports


def _toeplitz_matvec(d: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(T a)_s = Σ_{l≠s} d_{|l−s|} a_l"""
    N = d.size
    column = np.concatenate([[0.0], d[:N - 1]])
    if N <= BRUTE_FORCE_MAX_N:
        idx = np.arange(N)
        T = column[np.abs(idx[:, None] - idx[None, :])]
        return T @ a
    return linalg.matmul_toeplitz((column, column), a)


def _toeplitz_form(d: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    """Σ_s Σ_{l≠s} d_{|l−s|} a_l b_s"""
    return complex(b @ _toeplitz_matvec(d, a))


def _sum_chain_values(sys: CirculantSystem) -> dict:
    N = sys.N
    d = sys.d
    l = np.arange(1, N + 1)
    e = _phase(N, l)
    e2 = _phase(N, 2 * l)
    return {
        "add-11": _toeplitz_form(d, e, np.conj(e)),
        "add-12": _toeplitz_form(d, e, np.ones(N)),
        # e^{iβ_{2l}} e^{iβ_{s−l}} = e^{iβ_l} e^{iβ_s}
        "add-15": _toeplitz_form(d, e, e),
        # e^{iβ_{3l}} e^{iβ_{s−l}} = e^{iβ_{2l}} e^{iβ_s}
        "add-14": _toeplitz_form(d, e2, e),
        "two-beta": complex(np.sum(d * e2)),
    }


def _power_sum(N: int, k: int) -> int:
    """Σ_{l=1}^N e^{iβ_{kl}}: N si (N+1) | k, −1 en otro caso"""
    return N if k % (N + 1) == 0 else -1


def verify_sum_chain(sys: CirculantSystem, tol: Optional[float] = None,
                     matrix_free: bool = False) -> List[IdentityReport]:
    """Sumas dobles de la cadena de no degeneración frente a su forma cerrada.

    La forma cerrada de add-14 usa Σ_l e^{iβ_{3l}} = −1, que falla cuando
    (N+1) divide a 3 (N = 2); se compara contra la forma general. Los términos
    con A⁻¹ requieren A⁻¹ densa o `matrix_free`.
    """
    N = sys.N
    if N < 2:
        raise ValueError("la cadena de sumas requiere N ≥ 2")
    tol = _default_tol(N) if tol is None else tol
    Lam = sys.Lambda_const
    D = sys.D
    values = _sum_chain_values(sys)
    scale = 2.0 * N * D
    two_beta_closed = -4.0 * (N - 1) + D
    add14_closed = Lam * _power_sum(N, 3) - two_beta_closed
    reports = [
        _report("add-11", N, values["add-11"], (N - 1) * Lam, tol, scale),
        _report("add-12", N, values["add-12"], -Lam - D, tol, scale),
        _report("add-15", N, values["add-15"], -2.0 * Lam, tol, scale),
        _report("two-beta", N, values["two-beta"], two_beta_closed, tol, scale=2 * D),
        _report("add-14", N, values["add-14"], add14_closed, tol, scale),
    ]
    if N == 2:
        generic = -Lam - two_beta_closed
        logger.info(f"add-14 en N=2: forma genérica (Σe^(iβ_3l) = −1) {generic} "
                    f"frente a {add14_closed} (Σe^(iβ_3l) = N)")

    if sys.A_inv is not None or matrix_free:
        e = _phase(N, np.arange(1, N + 1))
        row = apply_inverse(sys, np.conj(e))
        reports.append(_report("add-left-1", N, np.sum(1.0 - 2 * N * row * e), -1.0, tol, scale=N))
        reports.append(_report("tba-1", N, _tba_brute(sys), (N * Lam + D) / (2.0 * N), tol, scale))
        imp9_closed = (values["add-15"] - add14_closed) / (2.0 * N) if N == 2 else 2.0 / N - 1.0
        reports.append(_report("imp-9", N, _imp9_brute(sys), imp9_closed, tol, scale))
    return reports


def _tba_brute(sys: CirculantSystem) -> complex:
    """Σ_s Σ_{l≠s} d_{|l−s|} e^{iβ_l} Σ_j a^{sj} e^{−iβ_j}"""
    N = sys.N
    e = _phase(N, np.arange(1, N + 1))
    weights = apply_inverse(sys, np.conj(e))
    return _toeplitz_form(sys.d, e, weights)


def _imp9_brute(sys: CirculantSystem) -> complex:
    """Σ_s Σ_{l≠s} d_{|l−s|} Σ_j a^{lj} e^{i(β_{2l+s} − β_j)}"""
    N = sys.N
    l = np.arange(1, N + 1)
    e = _phase(N, l)
    a = _phase(N, 2 * l) * apply_inverse(sys, np.conj(e))
    return _toeplitz_form(sys.d, a, e)


def nondegeneracy_constant(sys: CirculantSystem) -> float:
    """g(N) = Λ/2 + D/(2N) + 1 − 2/N + 1; para N = 1 devuelve derecha − izquierda de la dicotomía"""
    N = sys.N
    if N == 1:
        report = n1_dichotomy()
        logger.info(f"N=1: coeficiente izquierdo {report['left']}, derecho {report['right']}")
        return float(report["right"] - report["left"])
    return sys.Lambda_const / 2.0 + sys.D / (2.0 * N) + 1.0 - 2.0 / N + 1.0


def nondegeneracy_brute_force(sys: CirculantSystem) -> float:
    """Misma combinación evaluada sumando índices: (tba-1) − (imp-9) − (add-left-1)"""
    if sys.A_inv is None or sys.N < 2:
        raise ValueError("se requiere A⁻¹ y N ≥ 2")
    N = sys.N
    e = _phase(N, np.arange(1, N + 1))
    left = np.sum(1.0 - 2 * N * (sys.A_inv @ np.conj(e)) * e)
    return float(np.real(_tba_brute(sys) - _imp9_brute(sys) - left))


def n1_dichotomy() -> dict:
    """Para N = 1 el lado izquierdo vale −1 y el derecho 0 (sin pares l ≠ s)"""
    sys = build(1)
    e = _phase(1, np.array([1]))
    left = complex(np.sum(1.0 - 2.0 * (sys.A_inv @ np.conj(e)) * e))
    right = _toeplitz_form(sys.d, e, np.conj(e))
    return {"N": 1, "left": float(left.real), "right": float(right.real)}


def chunk_ranges(n_min: int, n_max: int, chunk: int) -> Iterator[Tuple[int, int]]:
    """Divide [n_min, n_max] en bloques contiguos para el pool de workers"""
    start = n_min
    while start <= n_max:
        stop = min(start + chunk - 1, n_max)
        yield start, stop
        start = stop + 1


def sweep_identities(n_min: int, n_max: int, tol: Optional[float] = None,
                     progress: Optional[Callable[[int], None]] = None) -> List[IdentityReport]:
    """Reportes por N.

    Hasta `circulant_inverse_sweep_cap` se factoriza A densa; por encima solo
    D-guess, compu-1 y la cadena de sumas por FFT, más las identidades con A⁻¹
    aplicada por FFT cada `circulant_spot_stride` valores de N.
    """
    if n_max > settings.circulant_sweep_cap:
        raise SizeCap(f"n_max={n_max} supera el límite {settings.circulant_sweep_cap}")
    dense_cap = min(settings.circulant_inverse_sweep_cap, settings.circulant_dense_cap)
    stride = settings.circulant_spot_stride
    reports: List[IdentityReport] = []
    for N in range(max(1, n_min), n_max + 1):
        dense = N <= dense_cap
        spot = not dense and stride > 0 and N % stride == 0
        sys = build(N, with_inverse=dense)
        reports.extend(verify_identities(sys, tol, matrix_free=spot))
        if N >= 2:
            reports.extend(verify_sum_chain(sys, tol, matrix_free=spot))
        if progress is not None:
            progress(N)
    failed = sum(not r.passed for r in reports)
    logger.info(f"Barrido N={n_min}..{n_max}: {len(reports)} reportes, {failed} fallidos")
    return reports
