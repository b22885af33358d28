# tests/test_global_family.py
import math

import numpy as np
import pytest
from pytest import mark

from app.exceptions import DegenerateProbes, MaximaNotSeparated
from app.models import GlobalSolutionParams
from app.services import global_family as family


@mark.parametrize("N, lam, xi, h0, y, expected", [
    (0, 0.0, 0.0, 8.0, 0j, 0.0),
    (2, 20.0, 1.0, 1.0, np.exp(2j * math.pi / 3), 20.0),
    (1, 0.0, 0.0, 1.0, 2 + 0j, -2.0 * math.log(1.5)),
])
def test_eval_global_known_values(N, lam, xi, h0, y, expected):
    params = GlobalSolutionParams(N=N, lam=lam, xi=xi, h0=h0)
    assert family.eval_global(params, np.array([y]))[0] == pytest.approx(expected, abs=1e-9)


def test_eval_global_does_not_overflow_far_away():
    params = GlobalSolutionParams(N=3, lam=40.0, xi=0.5)
    values = family.eval_global(params, np.array([1e6 + 0j, 1e8j]))
    assert np.all(np.isfinite(values))


def test_gradient_matches_finite_differences(rng):
    params = GlobalSolutionParams(N=2, lam=3.0, xi=0.7 - 0.2j)
    z = rng.uniform(-1.5, 1.5, 10) + 1j * rng.uniform(-1.5, 1.5, 10)
    h = 1e-6
    fd = ((family.eval_global(params, z + h) - family.eval_global(params, z - h))
          + 1j * (family.eval_global(params, z + 1j * h) - family.eval_global(params, z - 1j * h))) / (2 * h)
    np.testing.assert_allclose(family.eval_global_gradient(params, z), fd, rtol=1e-6, atol=1e-7)


@mark.parametrize("N, lam, xi, h0, y, bound", [
    (0, 0.0, 0.0, 8.0, 0.3 + 0.1j, 1e-4),
    (2, 10.0, 1.0, 1.0, 1.2 + 0j, 1e-3),
])
def test_residual_is_small(N, lam, xi, h0, y, bound):
    params = GlobalSolutionParams(N=N, lam=lam, xi=xi, h0=h0)
    assert abs(family.residual_global(params, y, 1e-4)) < bound


def test_residual_is_second_order():
    params = GlobalSolutionParams(N=0, lam=0.0, h0=8.0)
    coarse = abs(family.residual_global(params, 0.5 + 0.3j, 1e-2))
    fine = abs(family.residual_global(params, 0.5 + 0.3j, 5e-3))
    assert 3.0 < coarse / fine < 5.0


def test_residual_rejects_non_positive_step():
    with pytest.raises(ValueError):
        family.residual_global(GlobalSolutionParams(N=0, lam=0.0), 0j, 0.0)


@mark.parametrize("N, lam, xi, h0, rel", [
    (0, 0.0, 0.0, 8.0, 1e-6),
    (2, 10.0, 1.0, 1.0, 1e-5),
    (1, 2.0, 0.3 - 0.4j, 1.0, 1e-5),
])
def test_total_mass_is_quantized(N, lam, xi, h0, rel):
    mass = family.total_mass(GlobalSolutionParams(N=N, lam=lam, xi=xi, h0=h0))
    assert mass.value == pytest.approx(8 * math.pi * (N + 1), rel=rel)
    assert mass.error_estimate <= 1e-8 * mass.value


def test_total_mass_independent_of_center():
    a = family.total_mass(GlobalSolutionParams(N=1, lam=2.0, xi=0.0)).value
    b = family.total_mass(GlobalSolutionParams(N=1, lam=2.0, xi=1 + 1j)).value
    assert a == pytest.approx(b, rel=1e-6)


def test_local_maxima_at_roots(three_bumps):
    maxima = family.local_maxima(three_bumps)
    roots = np.exp(2j * math.pi * np.arange(3) / 3)
    assert len(maxima) == 3
    for root in roots:
        assert min(abs(m - root) for m in maxima) < 1e-3


def test_local_maxima_single_bubble():
    maxima = family.local_maxima(GlobalSolutionParams(N=0, lam=5.0))
    assert len(maxima) == 1
    assert abs(maxima[0]) < 1e-8


@mark.parametrize("params", [
    GlobalSolutionParams(N=2, lam=10.0, xi=0.0),
    GlobalSolutionParams(N=2, lam=1.0, xi=1.0),
])
def test_local_maxima_not_separated(params):
    with pytest.raises(MaximaNotSeparated):
        family.local_maxima(params)


def test_kernel_derivatives_match_finite_differences(rng):
    for _ in range(20):
        params = GlobalSolutionParams(N=int(rng.integers(0, 4)), lam=float(rng.uniform(-2.0, 4.0)),
                                      xi=complex(*rng.uniform(-1.5, 1.5, 2)))
        z = np.array([complex(*rng.uniform(-2.5, 2.5, 2))])
        analytic = np.array(family.kernel_real_derivatives(params, z))[:, 0]
        fd = np.array(family.finite_difference_kernel(params, z, step=1e-5))[:, 0]
        d_xi = abs(family.kernel_derivatives(params, z)[1][0])
        scale = np.maximum(np.abs(fd), [1e-2 / math.exp(params.lam), 2e-2 * d_xi, 2e-2 * d_xi])
        assert np.all(np.abs(analytic - fd) / scale < 1e-6)


def test_kernel_conjugate_pair(three_bumps):
    _, d_xi, d_xib = family.kernel_derivatives(three_bumps, np.array([0.4 + 0.9j]))
    np.testing.assert_allclose(d_xib, np.conj(d_xi))


def test_audit_picks_exact_lambda_derivative():
    samples = [(GlobalSolutionParams(N=1, lam=1.0, xi=0.5), 0.8 + 0.3j),
               (GlobalSolutionParams(N=0, lam=-1.0, xi=0.2j), 0.1 - 0.4j)]
    audit = family.audit_lambda_derivative(samples)
    assert audit["matches"] == "derived"
    assert audit["max_rel_error"]["derived"] < 1e-6


def test_kernel_matrix_leading_determinant():
    params = GlobalSolutionParams(N=1, lam=0.0, xi=1.0)
    kernel = family.build_kernel_matrix(params, 1e3, 0.1, (0.0, math.pi / 8, math.pi / 2))
    assert abs(kernel.leading_ratio - 1.0) < 0.2
    assert kernel.entries.shape == (3, 3)
    assert abs(kernel.probes[2]) == pytest.approx(1e3 ** 1.3)


def test_kernel_matrix_degenerate_angles():
    params = GlobalSolutionParams(N=1, lam=0.0, xi=1.0)
    with pytest.raises(DegenerateProbes):
        family.build_kernel_matrix(params, 10.0, 0.1, (0.0, math.pi / 2, 1.0))


def test_epsilon_scale():
    assert family.epsilon_scale(8.0, 1) == pytest.approx(math.exp(-2.0))


def test_lambda_must_be_finite():
    with pytest.raises(ValueError):
        GlobalSolutionParams(N=0, lam=math.inf)
