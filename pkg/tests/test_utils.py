# tests/test_utils.py
import json
import math

import numpy as np
import pytest
from pytest import mark

from app.models import CoefficientKind, CoefficientSpec, PolarGridSpec
from app.utils import serialization
from app.utils.coefficients import (
    CoefficientField,
    SingularWeight,
    modulated_coefficient,
    parse_expression,
    parse_polynomial,
)
from app.utils.fields import FunctionField, ScaledField, refine_maximum
from app.utils.polar_grid import PolarGrid
from app.utils.quadrature import graded_breakpoints, panel_rule, polar_disk_rule


# --- cuadraturas ---

def test_panel_rule_integrates_polynomials():
    x, w = panel_rule([0.0, 0.3, 1.0, 2.0], order=10)
    assert np.sum(w * x ** 7) == pytest.approx(2.0 ** 8 / 8)


def test_panel_rule_rejects_unsorted():
    with pytest.raises(ValueError):
        panel_rule([0.0, 1.0, 0.5])


def test_graded_breakpoints_refine_towards_focus():
    b = graded_breakpoints(0.0, 1.0, 0.5, 1e-3)
    assert b[0] == 0.0 and b[-1] == 1.0 and 0.5 in b
    assert np.min(np.diff(b)) == pytest.approx(1e-3)


def test_polar_disk_rule_area_and_moment():
    pts, w = polar_disk_rule(0.3 + 0.2j, 0.5, 32)
    assert np.sum(w) == pytest.approx(math.pi * 0.25, rel=1e-12)
    assert np.sum(w * np.abs(pts - (0.3 + 0.2j)) ** 2) == pytest.approx(math.pi * 0.5 ** 4 / 2, rel=1e-12)


# --- malla polar ---

@mark.parametrize("grading, cluster", [(0.0, 0.0), (3.0, 0.0), (3.0, 0.3)])
def test_polar_grid_geometry(grading, cluster):
    grid = PolarGrid(PolarGridSpec(n_r=40, n_theta=32, grading=grading, cluster_radius=cluster), 1.0)
    assert grid.r[-1] == pytest.approx(1.0)
    assert np.all(np.diff(grid.r) > 0)
    assert np.all(np.diff(grid.faces) > 0)
    assert np.sum(grid.quadrature_weights) == pytest.approx(math.pi, rel=1e-12)
    np.testing.assert_allclose(grid.inverse(grid.r), grid.s, atol=1e-12)
    assert grid.n_unknowns == 39 * 32


def test_clustered_grid_is_finer_at_cluster():
    grid = PolarGrid(PolarGridSpec(n_r=64, n_theta=64, grading=4.0, cluster_radius=0.3), 1.0)
    radial = lambda r: float(grid.dradius(grid.inverse(r))) * grid.ds
    assert radial(0.3) < radial(0.9)


def test_grid_interpolator_smooth_function():
    grid = PolarGrid(PolarGridSpec(n_r=64, n_theta=64, grading=2.0), 1.0)
    u = lambda z: np.exp(np.real(z)) * np.cos(np.imag(z))
    interp = grid.interpolator(u(grid.points))
    z = np.array([0.31 + 0.2j, -0.5 - 0.4j, 0.01j, 0.9])
    np.testing.assert_allclose(interp.value(z), u(z), atol=1e-3)
    # gradiente de Re(e^z) es conj((e^z)')
    np.testing.assert_allclose(interp.gradient(z[:3]), np.conj(np.exp(z[:3])), atol=1e-2)


def test_grid_interpolator_shape_check():
    grid = PolarGrid(PolarGridSpec(n_r=16, n_theta=16), 1.0)
    with pytest.raises(ValueError):
        grid.interpolator(np.zeros((15, 16)))


@mark.parametrize("clusters, n_theta", [(1, 32), (2, 64), (3, 48)])
def test_angular_grading_geometry(clusters, n_theta):
    grid = PolarGrid(PolarGridSpec(n_r=24, n_theta=n_theta, angular_grading=5.0, angular_clusters=clusters), 1.0)
    assert np.sum(grid.angular_widths) == pytest.approx(2 * math.pi, rel=1e-12)
    assert np.sum(grid.node_gaps) == pytest.approx(2 * math.pi, rel=1e-12)
    assert np.all(grid.node_gaps > 0) and np.all(grid.angular_widths > 0)
    centers = grid.theta[:: n_theta // clusters]
    np.testing.assert_allclose(centers, 2 * math.pi * np.arange(clusters) / clusters, atol=1e-12)
    np.testing.assert_allclose(grid.angle_inverse(grid.theta), grid.t, atol=1e-12)
    assert np.sum(grid.quadrature_weights) == pytest.approx(math.pi, rel=1e-12)
    assert grid.angular_widths[0] < grid.angular_widths[n_theta // (2 * clusters)] / 10


def test_angular_grading_refines_spacing_at_cluster():
    grid = PolarGrid(PolarGridSpec(n_r=512, n_theta=64, angular_grading=6.0), 1.0)
    assert grid.spacing_at(0.5, 0.0) < grid.spacing_at(0.5, math.pi / 2)
    uniform = PolarGrid(PolarGridSpec(n_r=512, n_theta=64), 1.0)
    assert grid.spacing_at(0.5, 0.0) < uniform.spacing_at(0.5, 0.0)


@mark.parametrize("clusters", [2, 3])
def test_antipodal_rows(clusters):
    grid = PolarGrid(PolarGridSpec(n_r=16, n_theta=96, angular_grading=4.0, angular_clusters=clusters), 1.0)
    rows = np.cos(grid.theta)[None, :] * np.ones((2, 1))
    np.testing.assert_allclose(grid.antipodal_rows(rows), -rows, atol=1e-3)
    gap = np.angle(np.exp(1j * (grid.theta[grid.antipode] - grid.theta - math.pi)))
    assert np.max(np.abs(gap)) <= grid.dtheta
    if clusters % 2 == 0:
        np.testing.assert_allclose(gap, 0.0, atol=1e-12)


def test_resample_ring_returns_uniform_samples():
    grid = PolarGrid(PolarGridSpec(n_r=16, n_theta=128, angular_grading=4.0, angular_clusters=2), 1.0)
    samples = grid.resample_ring(np.cos(2 * grid.theta), 64)
    uniform = 2 * math.pi * np.arange(64) / 64
    np.testing.assert_allclose(samples, np.cos(2 * uniform), atol=1e-3)


def test_grid_interpolator_on_angular_graded_grid():
    grid = PolarGrid(PolarGridSpec(n_r=64, n_theta=96, grading=2.0, angular_grading=4.0, angular_clusters=3),
                     1.0)
    u = lambda z: np.exp(np.real(z)) * np.cos(np.imag(z))
    interp = grid.interpolator(u(grid.points))
    z = np.array([0.31 + 0.2j, -0.5 - 0.4j, 0.01j, 0.9])
    np.testing.assert_allclose(interp.value(z), u(z), atol=1e-3)
    np.testing.assert_allclose(interp.gradient(z[:3]), np.conj(np.exp(z[:3])), atol=1e-2)


# --- coeficientes ---

def test_parse_polynomial():
    assert parse_polynomial("1 + 0.1*x1 - 0.2*x1*x2^2") == {"0,0": 1.0, "1,0": 0.1, "1,2": -0.2}
    assert parse_polynomial("2e-3*x2") == {"0,1": 2e-3}


def test_parse_expression_kinds():
    assert parse_expression("1 + 0.1*x1").kind == CoefficientKind.POLYNOMIAL
    spec = parse_expression("exp(0.2*x1*x2)")
    assert spec.kind == CoefficientKind.EXP_POLYNOMIAL
    assert spec.terms["0,0"] == 0.0


def test_coefficient_must_be_normalized():
    with pytest.raises(ValueError):
        parse_expression("2 + x1")


@mark.parametrize("text", ["1 + 0.1*x1 + 0.2*x2^2", "exp(0.1*x1 - 0.3*x1*x2)"])
def test_coefficient_derivatives(text):
    field = CoefficientField(parse_expression(text))
    z, h = np.array([0.3 - 0.2j]), 1e-5
    fd = ((field.log_value(z + h) - field.log_value(z - h))
          + 1j * (field.log_value(z + 1j * h) - field.log_value(z - 1j * h))) / (2 * h)
    np.testing.assert_allclose(field.grad_log(z), fd, atol=1e-8)
    lap = (field.log_value(z + h) + field.log_value(z - h) + field.log_value(z + 1j * h)
           + field.log_value(z - 1j * h) - 4 * field.log_value(z)) / h ** 2
    np.testing.assert_allclose(field.laplacian_log(z), np.real(lap), atol=1e-4)


def test_modulated_coefficient():
    spec = modulated_coefficient(1, 0.09, 1.0)
    assert spec.kind == CoefficientKind.MODULATED
    assert not spec.is_rotation_invariant
    field = CoefficientField(spec)
    z = np.array([0j, 0.5 + 0.5j])
    expected = np.abs(1.0 - 0.09 * z ** 2) ** -4
    np.testing.assert_allclose(field.value(z), expected)
    # log h = −2 log|g|² es armónica fuera de los ceros de g
    np.testing.assert_allclose(field.laplacian_log(z), 0.0, atol=1e-12)
    h = 1e-6
    fd = ((field.log_value(z + h) - field.log_value(z - h))
          + 1j * (field.log_value(z + 1j * h) - field.log_value(z - 1j * h))) / (2 * h)
    np.testing.assert_allclose(field.grad_log(z), fd, atol=1e-7)


def test_singular_weight_gradient():
    weight = SingularWeight(2, CoefficientField(parse_expression("1 + 0.1*x1")), transform=0.5 * np.exp(0.3j))
    y, h = np.array([0.7 - 0.4j]), 1e-6
    fd = ((weight.value(y + h) - weight.value(y - h)) + 1j * (weight.value(y + 1j * h) - weight.value(y - 1j * h))) / (2 * h)
    np.testing.assert_allclose(weight.gradient(y), fd, rtol=1e-6)
    np.testing.assert_allclose(weight.grad_log(y), weight.gradient(y) / weight.value(y), rtol=1e-10)


def test_rotation_invariance_flag():
    assert CoefficientSpec().is_rotation_invariant
    assert not parse_expression("1 + 0.1*x1").is_rotation_invariant


# --- campos ---

def test_refine_maximum_quadratic():
    field = FunctionField(0, 2.0, lambda z: -np.abs(z - (0.3 - 0.1j)) ** 2 - 0.5 * np.real(z - 0.3) ** 2)
    z, strict = refine_maximum(field, 0.1 + 0.2j)
    assert strict
    assert abs(z - (0.3 - 0.1j)) < 1e-6


def test_scaled_field():
    base = FunctionField(1, 1.0, lambda z: np.real(z) ** 2, lambda z: 2 * np.real(z) + 0j)
    v = ScaledField(base, 0.5, math.pi / 2)
    assert v.radius == pytest.approx(2.0)
    # y = 1 corresponde a x = 0.5i
    assert v.value(np.array([1.0 + 0j]))[0] == pytest.approx(4 * math.log(0.5), abs=1e-12)
    assert v.value(np.array([1j]))[0] == pytest.approx(0.25 + 4 * math.log(0.5))


# --- serialización ---

def test_write_csv_format(tmp_path):
    path = serialization.write_csv(str(tmp_path / "rows.csv"),
                                   [{"name": "a", "value": 0.1, "z": 1 + 2j, "ok": True}])
    raw = (tmp_path / "rows.csv").read_bytes()
    assert raw.split(b"\r\n")[0] == b"name,value,z_re,z_im,ok"
    assert b"0.10000000000000001" in raw
    assert b"true" in raw
    assert path.endswith("rows.csv")


def test_write_json_sorted_and_complex(tmp_path):
    path = serialization.write_json(str(tmp_path / "out.json"), {"b": 1 + 1j, "a": np.float64(0.5)})
    text = open(path, encoding="utf-8").read()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 0.5, "b": [1.0, 1.0]}


def test_grid_file_header(tmp_path):
    values = np.arange(12, dtype=float).reshape(3, 4)
    path = serialization.write_grid(str(tmp_path / "u.grid"), values, 1.5, 2)
    raw = open(path, "rb").read()
    assert raw[:4] == b"LVGR"
    assert len(raw) == 64 + 12 * 8
    header, back = serialization.read_grid(path)
    assert header["n_r"] == 3 and header["n_theta"] == 4 and header["N"] == 2 and header["tau"] == 1.5
    np.testing.assert_array_equal(back, values)


def test_grid_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.grid"
    path.write_bytes(b"XXXX" + bytes(60) + bytes(8))
    with pytest.raises(ValueError):
        serialization.read_grid(str(path))


def test_config_hash_is_order_independent():
    assert serialization.config_hash({"a": 1, "b": [1, 2]}) == serialization.config_hash({"b": [1, 2], "a": 1})
    assert serialization.config_hash({"a": 1}) != serialization.config_hash({"a": 2})
