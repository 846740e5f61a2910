"""Benchmark quantities, L2 errors, zero-level contours and file output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from skimage.measure import find_contours

from .quadbasis import tensor_rule
from .spaces import Field, eval_field, velocity_from_stream

SERIES_HEADER = ("t", "dt", "vmax", "mass", "y_c", "circularity", "V_c", "y_bubble", "y_spike")


class EmptyRegionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------
def _rule(field_: Field, n_points):
    n = n_points or field_.space.degree + 3
    return tensor_rule(n)


def l2_error(field_: Field, exact, n_points: int | None = None) -> float:
    """L2 distance between a W or Phi field and ``exact(x, y)``.

    Uses an n x n Gauss rule per element, n = degree + 3 by default.
    """
    pts, w = _rule(field_, n_points)
    mesh = field_.space.mesh
    xq = mesh.to_physical(pts)
    vals = eval_field(field_, None, pts)
    diff = vals - exact(xq[..., 0], xq[..., 1])
    return float(np.sqrt(np.sum(diff**2 * w) * mesh.hx * mesh.hy))


def l2_error_velocity(xi: Field, exact, n_points: int | None = None) -> float:
    """L2 distance between curl(xi) and ``exact(x, y)`` returning (..., 2)."""
    pts, w = _rule(xi, n_points)
    mesh = xi.space.mesh
    xq = mesh.to_physical(pts)
    u, _ = velocity_from_stream(xi, None, pts)
    diff = u - exact(xq[..., 0], xq[..., 1])
    return float(np.sqrt(np.sum(np.sum(diff**2, axis=-1) * w) * mesh.hx * mesh.hy))


def observed_orders(hs, errors) -> np.ndarray:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for consecutive pairs."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------
@dataclass
class ContourSet:
    polylines: list = field(default_factory=list)
    closed: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.polylines

    @property
    def length(self) -> float:
        return float(sum(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)) for p in self.polylines))

    @property
    def enclosed_area(self) -> float | None:
        """Shoelace area inside the closed polylines; None if any polyline is open."""
        if self.is_empty or not all(self.closed):
            return None
        area = 0.0
        for p in self.polylines:
            x, y = p[:, 0], p[:, 1]
            area += 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        return float(area)

    def vertices(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)


def sample_grid(phi: Field, m: int):
    """phi on a global grid with m equispaced samples per element edge.

    Nodes shared between elements take the average of the element traces.
    Returns (X, Y, values) with shape (ny (m-1) + 1, nx (m-1) + 1).
    """
    if m < 2:
        raise ValueError("need at least 2 samples per element")
    mesh = phi.space.mesh
    s = np.linspace(0.0, 1.0, m)
    ref = np.stack(np.meshgrid(s, s, indexing="xy"), axis=-1).reshape(-1, 2)
    vals = eval_field(phi, None, ref).reshape(mesh.ny, mesh.nx, m, m)
    NY, NX = mesh.ny * (m - 1) + 1, mesh.nx * (m - 1) + 1
    acc = np.zeros((NY, NX))
    cnt = np.zeros((NY, NX))
    for b in range(m):
        for a in range(m):
            rows = np.arange(mesh.ny)[:, None] * (m - 1) + b
            cols = np.arange(mesh.nx)[None, :] * (m - 1) + a
            np.add.at(acc, (rows, cols), vals[:, :, b, a])
            np.add.at(cnt, (rows, cols), 1.0)
    grid = acc / cnt
    if mesh.periodic_x:
        avg = 0.5 * (grid[:, 0] + grid[:, -1])
        grid[:, 0] = grid[:, -1] = avg
    if mesh.periodic_y:
        avg = 0.5 * (grid[0, :] + grid[-1, :])
        grid[0, :] = grid[-1, :] = avg
    x = np.linspace(mesh.x0, mesh.x1, NX)
    y = np.linspace(mesh.y0, mesh.y1, NY)
    X, Y = np.meshgrid(x, y, indexing="xy")
    return X, Y, grid


def extract_contour(phi: Field, level: float = 0.0, m: int | None = None) -> ContourSet:
    """Marching squares on the per-element sample grid; m defaults to 2(k+1)."""
    m = m or 2 * (phi.space.degree + 1)
    X, Y, grid = sample_grid(phi, m)
    if not (grid.min() < level < grid.max()):
        return ContourSet()
    mesh = phi.space.mesh
    dx = (mesh.x1 - mesh.x0) / (X.shape[1] - 1)
    dy = (mesh.y1 - mesh.y0) / (Y.shape[0] - 1)
    out = ContourSet()
    for c in find_contours(grid, level):
        pts = np.column_stack([mesh.x0 + c[:, 1] * dx, mesh.y0 + c[:, 0] * dy])
        keep = np.ones(len(pts), bool)
        keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
        pts = pts[keep]
        if len(pts) < 2:
            continue
        out.polylines.append(pts)
        out.closed.append(bool(np.allclose(c[0], c[-1])))
    return out


# ---------------------------------------------------------------------------
# region integrals
# ---------------------------------------------------------------------------
@dataclass
class RegionStats:
    area: float
    y_c: float
    V_c: float | None


def region_stats(phi: Field, xi: Field | None = None, n_points: int | None = None) -> RegionStats:
    """Area, center of mass and mean vertical velocity of {phi < 0}.

    Integrals use a Gauss rule per element with an indicator evaluated at
    each point; n_points defaults to 2(k+1) per direction.
    """
    n = n_points or 2 * (phi.space.degree + 1)
    pts, w = tensor_rule(n)
    mesh = phi.space.mesh
    jac = mesh.hx * mesh.hy
    xq = mesh.to_physical(pts)
    ind = (eval_field(phi, None, pts) < 0.0) * w * jac
    area = float(ind.sum())
    if area <= 0.0:
        raise EmptyRegionError("region {phi < 0} is empty")
    y_c = float((ind * xq[..., 1]).sum() / area)
    V_c = None
    if xi is not None:
        u, _ = velocity_from_stream(xi, None, pts)
        V_c = float((ind * u[..., 1]).sum() / area)
    return RegionStats(area, y_c, V_c)


def center_of_mass(phi: Field, n_points: int | None = None) -> float:
    return region_stats(phi, None, n_points).y_c


def rise_velocity(phi: Field, xi: Field, n_points: int | None = None) -> float:
    return region_stats(phi, xi, n_points).V_c


def circularity(phi: Field, contour: ContourSet | None = None, m: int | None = None,
                n_points: int | None = None) -> float:
    """Perimeter of the area-equivalent circle over the contour length.

    The area comes from the same closed polygon as the perimeter, so both
    move smoothly with the interface; the point-sampled indicator area is
    piecewise constant in time and would add jitter of a few 1e-3.  Open
    contours fall back to the indicator.
    """
    contour = contour if contour is not None else extract_contour(phi, 0.0, m)
    perim = contour.length
    if perim <= 0.0:
        raise EmptyRegionError("zero-level contour has zero length")
    area = contour.enclosed_area
    if area is None:
        area = region_stats(phi, None, n_points).area
    return 2.0 * math.sqrt(math.pi * area) / perim


def bubble_spike(contour: ContourSet) -> tuple[float, float]:
    """(min y, max y) over the contour vertices."""
    if contour.is_empty:
        raise EmptyRegionError("empty contour")
    y = contour.vertices()[:, 1]
    return float(y.min()), float(y.max())


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
@dataclass
class BenchmarkRecord:
    t: float
    dt: float = math.nan
    vmax: float = math.nan
    mass: float = math.nan
    y_c: float = math.nan
    circularity: float = math.nan
    V_c: float = math.nan
    y_bubble: float = math.nan
    y_spike: float = math.nan


def write_series(records, path) -> Path:
    path = Path(path)
    names = [f.name for f in fields(BenchmarkRecord)]
    assert tuple(names) == SERIES_HEADER
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_HEADER)
            for r in records:
                w.writerow(["%.10e" % getattr(r, n) for n in names])
    except OSError as exc:
        raise OSError(f"cannot write series to {path}: {exc}") from exc
    return path


def read_series(path) -> list[BenchmarkRecord]:
    with Path(path).open() as fh:
        return [BenchmarkRecord(**{k: float(v) for k, v in row.items()}) for row in csv.DictReader(fh)]


def write_fields(path, phi: Field, xi: Field | None = None) -> Path:
    """Legacy ASCII VTK with one quad cell per element.

    Points are element corners, duplicated per element so the
    discontinuous phase field is written without averaging.
    """
    path = Path(path)
    mesh = phi.space.mesh
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    pts = mesh.to_physical(corners).reshape(-1, 2)
    ph = eval_field(phi, None, corners).ravel()
    if xi is not None:
        u = velocity_from_stream(xi, None, corners)[0].reshape(-1, 2)
    else:
        u = np.zeros((len(pts), 2))
    n_el = mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", "chns fields", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [f"{x:.10e} {y:.10e} 0" for x, y in pts]
    lines.append(f"CELLS {n_el} {5 * n_el}")
    lines += [f"4 {4 * e} {4 * e + 1} {4 * e + 2} {4 * e + 3}" for e in range(n_el)]
    lines.append(f"CELL_TYPES {n_el}")
    lines += ["9"] * n_el
    lines += [f"POINT_DATA {len(pts)}", "SCALARS phi double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.10e}" for v in ph]
    lines.append("VECTORS velocity double")
    lines += [f"{a:.10e} {b:.10e} 0" for a, b in u]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def read_vtk_point_count(path) -> int:
    for line in Path(path).read_text().splitlines():
        if line.startswith("POINTS"):
            return int(line.split()[1])
    raise ValueError(f"{path} has no POINTS section")
