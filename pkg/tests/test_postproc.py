import math

import numpy as np
import pytest

from chns.mesh import build_mesh
from chns.postproc import (
    SERIES_HEADER,
    BenchmarkRecord,
    ContourSet,
    EmptyRegionError,
    bubble_spike,
    center_of_mass,
    circularity,
    extract_contour,
    l2_error,
    l2_error_velocity,
    observed_orders,
    read_series,
    read_vtk_point_count,
    region_stats,
    rise_velocity,
    write_fields,
    write_series,
)
from chns.spaces import Field, build_space, interpolate

OPEN = {"bottom": "none", "right": "none", "top": "none", "left": "none"}


def W(n=8, k=2, **kw):
    return build_space(build_mesh(n, n, **kw), "W", k)


def circle(x, y):
    return np.hypot(x - 0.5, y - 0.5) - 0.25


# -- errors ----------------------------------------------------------------------

def test_l2_error_examples():
    sp = W()
    f = interpolate(sp, lambda x, y: x * y)
    assert l2_error(f, lambda x, y: x * y) <= 1e-14
    assert l2_error(Field(sp, np.zeros(sp.ndof)), lambda x, y: np.ones_like(x)) == pytest.approx(1.0)


def test_l2_error_velocity():
    m = build_mesh(4, 4)
    P = build_space(m, "Phi", 3, OPEN)
    xi = interpolate(P, lambda x, y: x * y)  # u = (x, -y)
    exact = lambda x, y: np.stack([x, -y], -1)  # noqa: E731
    assert l2_error_velocity(xi, exact) <= 1e-13
    zero = Field(P, np.zeros(P.ndof))
    assert l2_error_velocity(zero, exact) == pytest.approx(math.sqrt(2 / 3))


def test_observed_orders():
    np.testing.assert_allclose(observed_orders([0.1, 0.05, 0.025], [1.0, 0.25, 0.0625]), [2.0, 2.0])


# -- contours --------------------------------------------------------------------

def test_linear_level_set_contour():
    c = extract_contour(interpolate(W(4), lambda x, y: y - 0.5))
    assert len(c.polylines) == 1 and c.closed == [False]
    assert c.length == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(c.vertices()[:, 1], 0.5, atol=1e-12)
    assert bubble_spike(c) == pytest.approx((0.5, 0.5))
    assert c.enclosed_area is None


def test_circle_contour_length():
    phi = interpolate(W(32), circle)
    c = extract_contour(phi, m=8)
    assert c.closed == [True]
    assert abs(c.length - math.pi / 2) / (math.pi / 2) <= 5e-3
    assert c.enclosed_area == pytest.approx(math.pi / 16, rel=1e-3)
    coarse = abs(extract_contour(phi, m=2).length - math.pi / 2)
    assert abs(c.length - math.pi / 2) <= coarse


def test_uniform_field_has_no_contour():
    c = extract_contour(interpolate(W(4), lambda x, y: np.ones_like(x)))
    assert c.is_empty and c.length == 0.0 and c.vertices().shape == (0, 2)


def test_bubble_spike_empty_raises():
    with pytest.raises(EmptyRegionError):
        bubble_spike(ContourSet())


# -- region integrals ------------------------------------------------------------

def test_center_of_mass_of_disk():
    phi = interpolate(W(32), circle)
    assert center_of_mass(phi) == pytest.approx(0.5, abs=2e-3)
    assert region_stats(phi).area == pytest.approx(math.pi / 16, rel=1e-2)


def test_uniform_rise_velocity():
    m = build_mesh(8, 8)
    phi = interpolate(build_space(m, "W", 2), circle)
    xi = interpolate(build_space(m, "Phi", 3, OPEN), lambda x, y: -x)  # u = (0, 1)
    assert rise_velocity(phi, xi) == pytest.approx(1.0, abs=1e-13)


def test_empty_region_raises():
    with pytest.raises(EmptyRegionError):
        region_stats(interpolate(W(4), lambda x, y: np.ones_like(x)))


def test_circularity_of_disk_and_ellipse():
    sp = W(32)
    assert circularity(interpolate(sp, circle)) == pytest.approx(1.0, abs=0.01)
    a, b = 0.3, 0.15
    ell = interpolate(sp, lambda x, y: np.hypot((x - 0.5) / a, (y - 0.5) / b) - 1.0)
    h = ((a - b) / (a + b)) ** 2
    perim = math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
    assert circularity(ell) == pytest.approx(2 * math.pi * math.sqrt(a * b) / perim, rel=2e-3)


def test_circularity_is_smooth_under_translation():
    sp = W(16)
    vals = [circularity(interpolate(sp, lambda x, y, c=c: np.hypot(x - 0.5, y - c) - 0.25))
            for c in np.linspace(0.45, 0.55, 11)]
    assert np.ptp(vals) <= 1e-3


# -- output ------------------------------------------------------------------------

def test_series_round_trip(tmp_path):
    recs = [BenchmarkRecord(t=0.1 * i, dt=0.1, vmax=1.0 / 3, mass=2.0, y_c=0.5) for i in range(3)]
    write_series(recs, tmp_path / "s.csv")
    back = read_series(tmp_path / "s.csv")
    assert len(back) == 3
    assert back[1].vmax == pytest.approx(1.0 / 3, rel=1e-10)
    assert math.isnan(back[0].y_spike)


def test_empty_series_is_header_only(tmp_path):
    p = write_series([], tmp_path / "s.csv")
    assert p.read_text().strip() == ",".join(SERIES_HEADER)
    assert read_series(p) == []


def test_series_unwritable(tmp_path):
    with pytest.raises(OSError):
        write_series([], tmp_path / "missing" / "s.csv")


def test_vtk_output(tmp_path):
    m = build_mesh(3, 2)
    phi = interpolate(build_space(m, "W", 2), lambda x, y: x + y)
    xi = interpolate(build_space(m, "Phi", 3, OPEN), lambda x, y: y)
    p = write_fields(tmp_path / "f.vtk", phi, xi)
    assert read_vtk_point_count(p) == 4 * m.n_elements
    text = p.read_text()
    assert "CELL_TYPES 6" in text and "SCALARS phi double 1" in text
    vel = text.split("VECTORS velocity double\n")[1].split()
    np.testing.assert_allclose(np.array(vel, float).reshape(-1, 3)[:, 0], 1.0)
