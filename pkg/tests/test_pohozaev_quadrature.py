# tests/test_pohozaev_quadrature.py
import math

import numpy as np
import pytest
from pytest import mark

from app.exceptions import BallOutsideDomain
from app.models import GlobalSolutionParams, PohozaevReport
from app.services import pohozaev_quadrature as pq
from app.services.blowup_asymptotics import predict_displacements
from app.services.circulant_algebra import build
from app.services.global_family import GlobalField, eval_global, eval_global_gradient
from app.utils.coefficients import SingularWeight
from app.utils.fields import FunctionField


@pytest.fixture
def bubble_field():
    params = GlobalSolutionParams(N=2, lam=12.0, xi=1.0)
    return GlobalField(params, radius=10.0), SingularWeight(2)


@mark.parametrize("direction", [1.0, 1j, np.exp(0.4j)])
def test_pohozaev_identity_on_exact_solution(bubble_field, direction):
    field, weight = bubble_field
    report = pq.pohozaev(field, weight, np.exp(2j * math.pi / 3), 0.3, direction)
    assert report.residual < 1e-6
    assert report.n_boundary == 2048


def test_pohozaev_identity_single_bubble():
    field = GlobalField(GlobalSolutionParams(N=0, lam=8.0), radius=5.0)
    report = pq.pohozaev(field, SingularWeight(0), 0j, 0.5, 1.0)
    assert report.lhs_volume == pytest.approx(0.0, abs=1e-14)
    assert report.residual < 1e-6


def test_refinement_sweep_converges_with_order(bubble_field):
    field, weight = bubble_field
    reports = pq.refinement_sweep(field, weight, np.exp(2j * math.pi / 3), 0.3, 1j)
    assert [r.n_boundary for r in reports] == [8 * 2 ** k for k in range(9)]
    orders = pq.convergence_orders(reports)
    assert orders
    assert min(orders) >= 1.8
    assert reports[-1].residual < 1e-6


def _reports(residuals, start=16):
    return [PohozaevReport(center=0j, r=1.0, xi_dir=1.0, lhs_volume=0.0, lhs_flux=0.0, rhs_boundary=0.0,
                           residual=res, n_boundary=start * 2 ** k) for k, res in enumerate(residuals)]


def test_convergence_orders_skip_noise_floor():
    orders = pq.convergence_orders(_reports([1e-2, 2.5e-3, 6.25e-4, 1e-12, 1.1e-12]))
    assert orders == pytest.approx([2.0, 2.0])
    first_order = pq.convergence_orders(_reports([1e-2, 5e-3, 2.5e-3, 1e-12]))
    assert min(first_order) == pytest.approx(1.0)


def test_convergence_orders_need_growing_nodes():
    reports = _reports([1e-2, 1e-3])
    with pytest.raises(ValueError):
        pq.convergence_orders(reports[::-1])
    with pytest.raises(ValueError):
        pq.convergence_orders(reports[:1])


def test_ball_must_fit(bubble_field):
    field, weight = bubble_field
    with pytest.raises(BallOutsideDomain):
        pq.pohozaev(field, weight, 9.5 + 0j, 1.0, 1.0)
    with pytest.raises(ValueError):
        pq.pohozaev(field, weight, 0j, 0.5, 0j)


def test_pair_difference_first_order():
    N, s, angle = 2, 1, 2.0
    sizes = [1e-2, 5e-3, 2.5e-3]
    errors = []
    for size in sizes:
        uA, uB, m = pq.global_pair(N, 20.0, 1.0, size * np.exp(1j * angle))
        center = np.exp(2j * math.pi * s / (N + 1))
        measured = pq.pair_difference(uA, uB, center, 0.25, 1.0).total
        closed = pq.pair_difference_closed_form(N, m, s, 1.0)
        errors.append(abs(measured - closed) / abs(closed))
    assert errors[-1] < 0.05
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert 0.85 < slope < 1.15


def test_pair_difference_variants_agree_for_N1():
    m = [0j, 0.01 - 0.02j]
    balanced = pq.pair_difference_vector(1, m, 1)
    printed = pq.pair_difference_vector(1, m, 1, variant="printed")
    assert balanced == pytest.approx(printed)


def test_pair_difference_vector_checks_length():
    with pytest.raises(ValueError):
        pq.pair_difference_vector(2, [0j, 0j], 0)


@mark.parametrize("N", [2, 3, 5])
def test_balance_vanishes_for_predicted_displacements(N):
    delta, L = 0.05, 0.2 + 0.1j
    m = predict_displacements(build(N), delta, L)
    residual = pq.pohozaev_balance_residual(N, delta, L, m)
    assert np.max(np.abs(residual)) < 1e-10


def test_balance_detects_flipped_sign():
    N, delta, L = 3, 0.05, 0.2 + 0.1j
    m = predict_displacements(build(N), delta, L)
    residual = pq.pohozaev_balance_residual(N, delta, L, -m)
    assert np.max(np.abs(residual)) > 1e-3


def test_local_mass_of_single_bubble():
    lam, r = 15.0, 1.0
    field = GlobalField(GlobalSolutionParams(N=0, lam=lam), radius=5.0)
    a = math.exp(lam) / 8.0
    expected = 8 * math.pi * a * r ** 2 / (1.0 + a * r ** 2)
    assert pq.local_mass(field, SingularWeight(0), 0j, r) == pytest.approx(expected, rel=1e-8)


def _combination(uA, uB, a=1.0, b=-1.0):
    return FunctionField(uA.N, uA.radius, lambda z: a * uA.value(z) + b * uB.value(z),
                         lambda z: a * uA.gradient(z) + b * uB.gradient(z))


def test_pair_difference_swapping_pairs_flips_sign():
    # T(A, B) + T(B, A) = −B(w, w): antisimétrica salvo el término cuadrático en w
    center = np.exp(2j * math.pi / 3)
    defects = []
    for size in (2e-3, 1e-3):
        uA, uB, _ = pq.global_pair(2, 20.0, 1.0, size * np.exp(2.0j))
        forward = pq.pair_difference(uA, uB, center, 0.25, 1.0).total
        backward = pq.pair_difference(uB, uA, center, 0.25, 1.0).total
        w = _combination(uA, uB)
        quadratic = pq.pair_difference(_combination(w, w, 2.0, 0.0), w, center, 0.25, 1.0).total
        assert forward + backward == pytest.approx(-quadratic, abs=1e-10)
        defects.append(abs(forward + backward) / abs(forward))
    assert defects[1] < 0.1
    assert defects[1] <= defects[0] + 1e-9


def test_pair_difference_of_identical_solutions_vanishes(bubble_field):
    field, _ = bubble_field
    report = pq.pair_difference(field, field, np.exp(2j * math.pi / 3), 0.3, np.exp(0.7j))
    assert report.total == 0.0
    assert report.flux_V_dxi_w == report.flux_w_dxi_V == report.gradient_cross == 0.0


def test_pair_difference_independent_of_radius():
    # la diferencia entre r y r/2 es la integral de volumen en el anillo, ~ e^{−λ}
    uA, uB, _ = pq.global_pair(2, 30.0, 1.0, 1e-2 * np.exp(2.0j))
    center = np.exp(2j * math.pi / 3)
    outer = pq.pair_difference(uA, uB, center, 0.25, 1.0).total
    inner = pq.pair_difference(uA, uB, center, 0.125, 1.0).total
    assert inner == pytest.approx(outer, rel=1e-3)


def _flux_mass(field, center, r, n=4096):
    # ∫ η₁ W e^u = −∮ (η₁ ∂_νu − u ν₁) por la segunda identidad de Green
    theta = 2 * math.pi * np.arange(n) / n
    nu = np.exp(1j * theta)
    y = center + r * nu
    d_nu = np.real(field.gradient(y) * np.conj(nu))
    return float(-(2 * math.pi * r / n) * np.sum(y.real * d_nu - field.value(y) * nu.real))


def test_local_mass_first_moment_at_bubble(bubble_field):
    field, weight = bubble_field
    measured = pq.local_mass(field, weight, 1.0, 0.3, f=lambda z: z.real)
    assert measured == pytest.approx(_flux_mass(field, 1.0, 0.3), rel=1e-6)
    assert measured == pytest.approx(pq.local_mass(field, weight, 1.0, 0.3), rel=0.05)


def test_local_mass_tends_to_eight_pi():
    lams = (10.0, 12.0, 14.0)
    deficits = []
    for lam in lams:
        field = GlobalField(GlobalSolutionParams(N=2, lam=lam, xi=1.0), radius=10.0)
        deficits.append(8 * math.pi - pq.local_mass(field, SingularWeight(2), 1.0, 0.3))
    assert all(d > 0 for d in deficits)
    # el déficit es la cola fuera de la bola, proporcional a e^{−λ}
    scaled = [d * math.exp(lam) for d, lam in zip(deficits, lams)]
    assert max(scaled) / min(scaled) < 1.1


def test_local_mass_translation_covariant():
    params = GlobalSolutionParams(N=0, lam=10.0)
    shift = 0.7 + 0.4j
    base = GlobalField(params, radius=5.0)
    moved = FunctionField(0, 5.0, lambda z: eval_global(params, z - shift),
                          lambda z: eval_global_gradient(params, z - shift))
    weight = SingularWeight(0)
    mass = pq.local_mass(base, weight, 0j, 1.0)
    assert pq.local_mass(moved, weight, shift, 1.0) == pytest.approx(mass, rel=1e-10)
    moment = pq.local_mass(moved, weight, shift, 1.0, f=lambda z: z.real)
    assert moment == pytest.approx(shift.real * mass, rel=1e-8)
