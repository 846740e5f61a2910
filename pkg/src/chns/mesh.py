"""Structured rectangular meshes with element/edge incidence.

Numbering is fixed so that DOF layouts and fixtures are reproducible:

* elements are row-major, ``e = i + nx * j`` with ``i`` counting along x;
* horizontal edges come first, row by row from the bottom
  (``i + nx * row``), followed by vertical edges (``nH + col + ncols * j``);
* every element lists its edges as (bottom, right, top, left).

Horizontal edges are parametrised along +x and vertical edges along +y,
which coincides with the local parametrisation of every adjacent element.
Stored edge normals are outward on the physical boundary and +y / +x on
interior and periodic edges.  Periodic wraparound identifies edges, so a
periodic edge simply has two incident elements.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOTTOM, RIGHT, TOP, LEFT = 0, 1, 2, 3
SIDE_NAMES = ("bottom", "right", "top", "left")

# Outward unit normals of the reference element sides, in side order.
SIDE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
OPPOSITE_SIDE = np.array([TOP, LEFT, BOTTOM, RIGHT])


class MeshError(ValueError):
    pass


def rotate(n):
    """Rotate a vector (or array of vectors) by +90 degrees."""
    n = np.asarray(n, dtype=float)
    return np.stack([-n[..., 1], n[..., 0]], axis=-1)


@dataclass(frozen=True)
class EdgeGeom:
    normal: np.ndarray
    tangent: np.ndarray
    length: float
    h_perp: float


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    nx: int
    ny: int
    x0: float
    x1: float
    y0: float
    y1: float
    periodic_x: bool = False
    periodic_y: bool = False
    elem_edges: np.ndarray = field(init=False, repr=False)
    elem_signs: np.ndarray = field(init=False, repr=False)
    neighbors: np.ndarray = field(init=False, repr=False)
    edge_normals: np.ndarray = field(init=False, repr=False)
    edge_boundary_side: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise MeshError(f"element counts must be >= 1, got nx={self.nx}, ny={self.ny}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(
                f"degenerate bounds [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )
        self._build_connectivity()

    # geometry -------------------------------------------------------------
    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_hrows(self) -> int:
        return self.ny if self.periodic_y else self.ny + 1

    @property
    def n_vcols(self) -> int:
        return self.nx if self.periodic_x else self.nx + 1

    @property
    def n_hedges(self) -> int:
        return self.nx * self.n_hrows

    @property
    def n_edges(self) -> int:
        return self.n_hedges + self.n_vcols * self.ny

    @property
    def n_vertices(self) -> int:
        return self.n_vcols * self.n_hrows

    def element_origin(self, elements=None) -> np.ndarray:
        """Lower-left corner of the given elements (all by default), shape (n, 2)."""
        e = np.arange(self.n_elements) if elements is None else np.asarray(elements)
        i, j = e % self.nx, e // self.nx
        return np.stack([self.x0 + i * self.hx, self.y0 + j * self.hy], axis=-1)

    def to_physical(self, ref_points, elements=None) -> np.ndarray:
        """Map reference points in [0,1]^2 to physical points, shape (n_el, n_pts, 2)."""
        ref = np.atleast_2d(np.asarray(ref_points, dtype=float))
        org = self.element_origin(elements)
        scale = np.array([self.hx, self.hy])
        return org[:, None, :] + ref[None, :, :] * scale

    def side_length(self, side: int) -> float:
        return self.hx if side in (BOTTOM, TOP) else self.hy

    def side_h_perp(self, side: int) -> float:
        return self.hy if side in (BOTTOM, TOP) else self.hx

    # connectivity ---------------------------------------------------------
    def _hedge(self, i, row):
        return i + self.nx * row

    def _vedge(self, col, j):
        return self.n_hedges + col + self.n_vcols * j

    def _build_connectivity(self):
        nx, ny = self.nx, self.ny
        e = np.arange(nx * ny)
        i, j = e % nx, e // nx
        top_row = (j + 1) % ny if self.periodic_y else j + 1
        right_col = (i + 1) % nx if self.periodic_x else i + 1
        edges = np.stack(
            [self._hedge(i, j), self._vedge(right_col, j), self._hedge(i, top_row), self._vedge(i, j)],
            axis=1,
        )

        normals = np.zeros((self.n_edges, 2))
        bside = np.full(self.n_edges, -1, dtype=int)
        nh = self.n_hedges
        normals[:nh] = (0.0, 1.0)
        normals[nh:] = (1.0, 0.0)
        if not self.periodic_y:
            bot = self._hedge(np.arange(nx), 0)
            top = self._hedge(np.arange(nx), ny)
            normals[bot] = (0.0, -1.0)
            bside[bot], bside[top] = BOTTOM, TOP
        if not self.periodic_x:
            left = self._vedge(0, np.arange(ny))
            right = self._vedge(nx, np.arange(ny))
            normals[left] = (-1.0, 0.0)
            bside[left], bside[right] = LEFT, RIGHT

        signs = np.einsum("esd,sd->es", normals[edges], SIDE_NORMALS).round().astype(int)

        nbr = np.full((nx * ny, 4), -1, dtype=int)
        below = j - 1 if not self.periodic_y else (j - 1) % ny
        above = j + 1 if not self.periodic_y else (j + 1) % ny
        lft = i - 1 if not self.periodic_x else (i - 1) % nx
        rgt = i + 1 if not self.periodic_x else (i + 1) % nx
        nbr[:, BOTTOM] = np.where(below >= 0, i + nx * below, -1)
        nbr[:, TOP] = np.where(above < ny, i + nx * above, -1)
        nbr[:, LEFT] = np.where(lft >= 0, lft + nx * j, -1)
        nbr[:, RIGHT] = np.where(rgt < nx, rgt + nx * j, -1)

        for name, val in (
            ("elem_edges", edges),
            ("elem_signs", signs),
            ("neighbors", nbr),
            ("edge_normals", normals),
            ("edge_boundary_side", bside),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def _check_element(self, element):
        if not 0 <= element < self.n_elements:
            raise IndexError(f"element {element} out of range [0, {self.n_elements})")

    def _check_edge(self, edge):
        if not 0 <= edge < self.n_edges:
            raise IndexError(f"edge {edge} out of range [0, {self.n_edges})")

    def element_edges(self, element: int) -> list[tuple[int, int]]:
        """(edge id, orientation sign) for the bottom, right, top, left edges."""
        self._check_element(element)
        return [(int(g), int(s)) for g, s in zip(self.elem_edges[element], self.elem_signs[element])]

    def edge_elements(self, edge: int) -> list[tuple[int, str]]:
        """Incident (element, side name) pairs; the first one sees the stored normal as outward."""
        self._check_edge(edge)
        hits = np.argwhere(self.elem_edges == edge)
        out = [(int(e), int(s), int(self.elem_signs[e, s])) for e, s in hits]
        out.sort(key=lambda r: -r[2])
        return [(e, SIDE_NAMES[s]) for e, s, _ in out]

    def edge_geom(self, edge: int) -> EdgeGeom:
        self._check_edge(edge)
        n = self.edge_normals[edge].copy()
        horizontal = edge < self.n_hedges
        return EdgeGeom(
            normal=n,
            tangent=rotate(n),
            length=self.hx if horizontal else self.hy,
            h_perp=self.hy if horizontal else self.hx,
        )

    def boundary_edges(self, side: int | None = None) -> np.ndarray:
        if side is None:
            return np.flatnonzero(self.edge_boundary_side >= 0)
        return np.flatnonzero(self.edge_boundary_side == side)

    def vertex_coords(self) -> np.ndarray:
        """Coordinates of the (nx+1) x (ny+1) corner lattice, row-major, ignoring periodicity."""
        xs = np.linspace(self.x0, self.x1, self.nx + 1)
        ys = np.linspace(self.y0, self.y1, self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)


def build_mesh(nx, ny, bounds=(0.0, 1.0, 0.0, 1.0), periodicity=(False, False)) -> StructuredMesh:
    """Build a uniform ``nx`` x ``ny`` mesh of ``bounds = (x0, x1, y0, y1)``."""
    if isinstance(periodicity, bool):
        periodicity = (periodicity, periodicity)
    x0, x1, y0, y1 = (float(b) for b in bounds)
    if int(nx) != nx or int(ny) != ny:
        raise MeshError("element counts must be integers")
    return StructuredMesh(int(nx), int(ny), x0, x1, y0, y1, bool(periodicity[0]), bool(periodicity[1]))
