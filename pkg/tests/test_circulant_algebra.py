# tests/test_circulant_algebra.py
import numpy as np
import pytest
from pytest import mark

from app.config import settings
from app.exceptions import SizeCap
from app.services import circulant_algebra as circ


@mark.parametrize("N", [1, 2, 3, 7, 10, 64])
def test_build_shapes_and_sum(N):
    sys = circ.build(N)
    assert sys.D == pytest.approx(N * (N + 2) / 3.0, rel=1e-12)
    np.testing.assert_array_equal(sys.d, sys.d[::-1])
    np.testing.assert_allclose(sys.A, sys.A.T)
    np.testing.assert_allclose(sys.A @ sys.A_inv, np.eye(N), atol=1e-10)
    assert sys.Lambda_const == pytest.approx(sys.D - 2 * N)


def test_build_rejects_small_N():
    with pytest.raises(ValueError):
        circ.build(0)


@mark.parametrize("N", [1, 2, 3, 5, 10, 50, 100])
def test_identities_hold(N):
    reports = circ.verify_identities(circ.build(N))
    failed = [(r.identity_name, r.index, r.abs_error) for r in reports if not r.passed]
    assert not failed


@mark.parametrize("N", [2, 3, 4, 9, 40, 100])
def test_sum_chain_holds(N):
    reports = circ.verify_sum_chain(circ.build(N))
    names = {r.identity_name for r in reports}
    assert {"add-11", "add-12", "add-14", "add-15", "tba-1", "imp-9", "add-left-1"} <= names
    assert all(r.passed for r in reports)


def test_sweep_up_to_one_hundred():
    reports = circ.sweep_identities(1, 100)
    assert reports
    assert all(r.passed for r in reports)
    assert {r.N for r in reports} == set(range(1, 101))


@mark.parametrize("N", [5000, 99999])
def test_large_N_without_inverse(N):
    sys = circ.build(N, with_inverse=False)
    assert sys.A is None
    reports = circ.verify_identities(sys) + circ.verify_sum_chain(sys)
    assert all(r.passed for r in reports)


@mark.parametrize("N", [1, 2, 5, 20])
def test_dft_inverse_matches_lu(N):
    sys = circ.build(N)
    np.testing.assert_allclose(circ.dft_inverse(sys), sys.A_inv, atol=1e-10)


def test_nondegeneracy_constant_closed_form():
    for N in range(2, 101):
        g = circ.nondegeneracy_constant(circ.build(N))
        assert g == pytest.approx((N - 1) * (N - 2) / 6.0 + 2.0 - 2.0 / N, abs=1e-10)
        assert g >= 1.0 - 1e-12


@mark.parametrize("N", [3, 4, 8, 25])
def test_nondegeneracy_brute_force_agrees(N):
    sys = circ.build(N)
    assert circ.nondegeneracy_brute_force(sys) == pytest.approx(circ.nondegeneracy_constant(sys), abs=1e-8)


def test_nondegeneracy_brute_force_three_fold_aliasing():
    # con N = 2 la suma de e^{iβ_3l} vale N y el término imp-9 cambia
    sys = circ.build(2)
    assert circ.nondegeneracy_brute_force(sys) == pytest.approx(0.0, abs=1e-10)
    assert circ.nondegeneracy_constant(sys) == pytest.approx(1.0)


def test_n1_dichotomy():
    report = circ.n1_dichotomy()
    assert report["left"] == pytest.approx(-1.0)
    assert report["right"] == pytest.approx(0.0)
    assert circ.nondegeneracy_constant(circ.build(1)) == pytest.approx(1.0)


def test_size_cap(monkeypatch):
    monkeypatch.setattr(settings, "circulant_dense_cap", 5)
    with pytest.raises(SizeCap):
        circ.build(6)
    assert circ.build(6, with_inverse=False).A is None


def test_sweep_cap(monkeypatch):
    monkeypatch.setattr(settings, "circulant_sweep_cap", 10)
    with pytest.raises(SizeCap):
        circ.sweep_identities(1, 11)


def test_chunk_ranges():
    assert list(circ.chunk_ranges(1, 10, 4)) == [(1, 4), (5, 8), (9, 10)]
    assert list(circ.chunk_ranges(3, 3, 25)) == [(3, 3)]


@mark.parametrize("N", [1, 2, 5, 37])
def test_fft_application_matches_dense(N, rng):
    dense = circ.build(N)
    free = circ.build(N, with_inverse=False)
    v = rng.normal(size=N) + 1j * rng.normal(size=N)
    np.testing.assert_allclose(circ.apply_inverse(free, v), dense.A_inv @ v, atol=1e-12)
    np.testing.assert_allclose(circ.apply_matrix(free, v), dense.A @ v, atol=1e-9)
    real = rng.normal(size=N)
    assert not np.iscomplexobj(circ.apply_inverse(free, real))


@mark.parametrize("N", [500, 2500])
def test_matrix_free_identities_hold(N):
    sys = circ.build(N, with_inverse=False)
    reports = circ.verify_identities(sys, matrix_free=True) + circ.verify_sum_chain(sys, matrix_free=True)
    names = {r.identity_name for r in reports}
    assert {"compu-8", "inv-lem", "compu-2", "add-lem", "tba-1", "imp-9", "add-left-1"} <= names
    assert all(r.passed for r in reports)


def test_sweep_factorizes_only_below_inverse_cap(monkeypatch):
    monkeypatch.setattr(settings, "circulant_inverse_sweep_cap", 10)
    monkeypatch.setattr(settings, "circulant_spot_stride", 7)
    calls = []
    build = circ.build

    def recording_build(N, with_inverse=True):
        calls.append((N, with_inverse))
        return build(N, with_inverse=with_inverse)

    monkeypatch.setattr(circ, "build", recording_build)
    reports = circ.sweep_identities(1, 30)
    assert [N for N, dense in calls if dense] == list(range(1, 11))
    assert all(not dense for N, dense in calls if N > 10)
    assert all(r.passed for r in reports)
    by_n = lambda n: {r.identity_name for r in reports if r.N == n}
    assert "compu-8" in by_n(14) and "tba-1" in by_n(21)
    assert "compu-8" not in by_n(15)
    assert {"D-guess", "compu-1", "add-11", "add-14"} <= by_n(15)
