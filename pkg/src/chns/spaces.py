"""DOF layouts for the discrete spaces and field evaluation.

Kinds:

``W``    discontinuous Q^k, (k+1)^2 element-owned nodal DOFs;
``X``    skeleton-continuous P^k: one DOF per vertex, k-1 per edge;
``Phi``  continuous Q^m stream functions, zero on walls;
``M``    tangential P^m hat velocities, m+1 DOFs per edge, coefficient
         along the stored edge tangent.

Continuous spaces (``X``, ``Phi``) are numbered on the global node lattice
``I + LX * J`` where ``I = m * i + a`` counts Gauss-Lobatto nodes along x.
Periodic directions wrap the lattice, which identifies the DOFs on the
two matching sides.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import BOTTOM, LEFT, RIGHT, SIDE_NAMES, TOP, StructuredMesh
from .quadbasis import eval_edge_basis, eval_element_basis, gll_nodes

KINDS = ("W", "X", "Phi", "M")
WALL_TYPES = ("noslip", "slip", "none")


def default_bc(mesh: StructuredMesh) -> dict[str, str]:
    """No-slip on every non-periodic side."""
    bc = {}
    for s, name in enumerate(SIDE_NAMES):
        periodic = mesh.periodic_y if s in (BOTTOM, TOP) else mesh.periodic_x
        bc[name] = "none" if periodic else "noslip"
    return bc


def _node_grid(m):
    """Local (i, j) of the (m+1)^2 tensor nodes, index a = i + (m+1) j."""
    a = np.arange((m + 1) ** 2)
    return a % (m + 1), a // (m + 1)


def _side_nodes(m):
    """Tensor-node indices on each side, ordered along the side parameter."""
    r = np.arange(m + 1)
    return np.stack([r, m + (m + 1) * r, r + (m + 1) * m, (m + 1) * r])


@dataclass(frozen=True, eq=False)
class DofSpace:
    mesh: StructuredMesh
    kind: str
    degree: int
    ndof: int
    elem_dofs: np.ndarray  # (n_el, n_local) global ids
    mask: np.ndarray  # (ndof,) True where the DOF is fixed to zero
    side_local: np.ndarray | None = None  # (4, n_per_side) local indices per side
    interior_local: np.ndarray | None = None
    boundary_local: np.ndarray | None = None
    local_nodes: np.ndarray | None = None  # reference coordinates of local nodes
    bc: dict | None = None

    @property
    def n_local(self) -> int:
        return self.elem_dofs.shape[1]

    @property
    def n_free(self) -> int:
        return int(self.ndof - self.mask.sum())

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.ndof))


@dataclass
class Field:
    """Coefficient vector bound to a DofSpace."""

    space: DofSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndof,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match {self.space.ndof} DOFs"
            )

    def local(self) -> np.ndarray:
        return self.coeffs[self.space.elem_dofs]

    def copy(self) -> "Field":
        return Field(self.space, self.coeffs.copy())


def _lattice(mesh, m):
    """Global lattice ids of every element's tensor nodes and the lattice shape."""
    LX = m * mesh.nx if mesh.periodic_x else m * mesh.nx + 1
    LY = m * mesh.ny if mesh.periodic_y else m * mesh.ny + 1
    e = np.arange(mesh.n_elements)
    ei, ej = e % mesh.nx, e // mesh.nx
    a, b = _node_grid(m)
    I = m * ei[:, None] + a[None, :]
    J = m * ej[:, None] + b[None, :]
    if mesh.periodic_x:
        I %= LX
    if mesh.periodic_y:
        J %= LY
    return I + LX * J, (LX, LY)


def _wall_nodes(mesh, m, LX, LY, sides):
    """Lattice ids lying on the given non-periodic sides."""
    ids = []
    I = np.arange(LX)
    J = np.arange(LY)
    if BOTTOM in sides and not mesh.periodic_y:
        ids.append(I)
    if TOP in sides and not mesh.periodic_y:
        ids.append(I + LX * (LY - 1))
    if LEFT in sides and not mesh.periodic_x:
        ids.append(LX * J)
    if RIGHT in sides and not mesh.periodic_x:
        ids.append(LX - 1 + LX * J)
    return np.unique(np.concatenate(ids)) if ids else np.array([], dtype=int)


def build_space(mesh: StructuredMesh, kind: str, degree: int, bc: dict | None = None,
                pin: bool | None = None) -> DofSpace:
    """Build the DOF layout of one discrete space.

    ``bc`` maps side names to ``noslip`` / ``slip`` / ``none``; ``Phi`` is
    zero on every wall side, ``M`` is masked on no-slip sides only.  On a
    fully periodic mesh ``Phi`` pins its first DOF (``pin`` overrides).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown space kind {kind!r}")
    if degree < 0 or (kind in ("X", "Phi") and degree < 1):
        raise ValueError(f"invalid degree {degree} for space {kind}")
    bc = dict(default_bc(mesh) if bc is None else bc)
    for side, typ in bc.items():
        if side not in SIDE_NAMES or typ not in WALL_TYPES:
            raise ValueError(f"bad boundary condition {side}={typ}")
    n_el = mesh.n_elements

    if kind == "W":
        n = (degree + 1) ** 2
        dofs = np.arange(n_el * n).reshape(n_el, n)
        a, b = _node_grid(degree)
        nodes = np.stack([gll_nodes(degree)[a], gll_nodes(degree)[b]], axis=-1)
        return DofSpace(mesh, kind, degree, n_el * n, dofs, np.zeros(n_el * n, bool),
                        side_local=_side_nodes(degree), interior_local=np.arange(n),
                        local_nodes=nodes, bc=bc)

    if kind == "M":
        n = degree + 1
        dofs = (mesh.elem_edges[:, :, None] * n + np.arange(n)).reshape(n_el, 4 * n)
        mask = np.zeros(mesh.n_edges * n, bool)
        for s, name in enumerate(SIDE_NAMES):
            if bc.get(name, "none") == "noslip":
                edges = mesh.boundary_edges(s)
                mask[(edges[:, None] * n + np.arange(n)).ravel()] = True
        return DofSpace(mesh, kind, degree, mesh.n_edges * n, dofs, mask,
                        side_local=np.arange(4 * n).reshape(4, n), bc=bc)

    m = degree
    lat, (LX, LY) = _lattice(mesh, m)
    a, b = _node_grid(m)
    on_bdry = (a == 0) | (a == m) | (b == 0) | (b == m)
    nodes = np.stack([gll_nodes(m)[a], gll_nodes(m)[b]], axis=-1)
    side_tensor = _side_nodes(m)

    if kind == "X":
        keep = np.flatnonzero(on_bdry)
        pos = -np.ones((m + 1) ** 2, dtype=int)
        pos[keep] = np.arange(len(keep))
        used = np.unique(lat[:, keep])
        compact = -np.ones(LX * LY, dtype=int)
        compact[used] = np.arange(len(used))
        dofs = compact[lat[:, keep]]
        return DofSpace(mesh, kind, m, len(used), dofs, np.zeros(len(used), bool),
                        side_local=pos[side_tensor], boundary_local=np.arange(len(keep)),
                        local_nodes=nodes[keep], bc=bc)

    # Phi: continuous Q^m with homogeneous Dirichlet on walls
    mask = np.zeros(LX * LY, bool)
    walls = [s for s, name in enumerate(SIDE_NAMES) if bc.get(name, "none") != "none"]
    mask[_wall_nodes(mesh, m, LX, LY, walls)] = True
    if pin is None:
        pin = mesh.periodic_x and mesh.periodic_y
    if pin:
        mask[0] = True
    return DofSpace(mesh, kind, m, LX * LY, lat, mask, side_local=side_tensor,
                    interior_local=np.flatnonzero(~on_bdry), boundary_local=np.flatnonzero(on_bdry),
                    local_nodes=nodes, bc=bc)


def _elements(space, elements):
    return np.arange(space.mesh.n_elements) if elements is None else np.atleast_1d(elements)


def _check_volume_space(space):
    if space.kind not in ("W", "Phi"):
        raise ValueError(f"volume evaluation is undefined for skeleton space {space.kind}")


def eval_field(field: Field, elements, points, grad: bool = False):
    """Values (n_el, n_pts) and optional physical gradients (n_el, n_pts, 2)."""
    space = field.space
    _check_volume_space(space)
    el = _elements(space, elements)
    tab = eval_element_basis(space.degree, points)
    loc = field.coeffs[space.elem_dofs[el]]
    vals = loc @ tab.values.T
    if not grad:
        return vals
    scale = np.array([1.0 / space.mesh.hx, 1.0 / space.mesh.hy])
    g = np.einsum("ea,pad->epd", loc, tab.grads) * scale
    return vals, g


def eval_trace(field: Field, elements, side: int, s):
    """Values of a skeleton field (X or M) on one side of the given elements."""
    space = field.space
    if space.kind not in ("X", "M"):
        raise ValueError("eval_trace expects a skeleton space")
    el = _elements(space, elements)
    vals = eval_edge_basis(space.degree, s).values
    loc = field.coeffs[space.elem_dofs[el][:, space.side_local[side]]]
    return loc @ vals.T


def velocity_from_stream(xi: Field, elements, points):
    """u = (d_y xi, -d_x xi) and its gradient grad_u[..., i, j] = d_j u_i."""
    space = xi.space
    if space.kind != "Phi":
        raise ValueError("velocity is recovered from a stream function in Phi")
    el = _elements(space, elements)
    tab = eval_element_basis(space.degree, points, hessian=True)
    hx, hy = space.mesh.hx, space.mesh.hy
    loc = xi.coeffs[space.elem_dofs[el]]
    gx = loc @ tab.grads[:, :, 0].T / hx
    gy = loc @ tab.grads[:, :, 1].T / hy
    hxx = loc @ tab.hessians[:, :, 0, 0].T / hx**2
    hxy = loc @ tab.hessians[:, :, 0, 1].T / (hx * hy)
    hyy = loc @ tab.hessians[:, :, 1, 1].T / hy**2
    u = np.stack([gy, -gx], axis=-1)
    grad_u = np.stack([np.stack([hxy, hyy], -1), np.stack([-hxx, -hxy], -1)], -2)
    return u, grad_u


def interpolate(space: DofSpace, func) -> Field:
    """Nodal interpolant of ``func(x, y)`` (vectorised) into W, X or Phi."""
    if space.kind == "M":
        raise ValueError("hat velocities are projected, see stepper.project_hat_velocity")
    mesh = space.mesh
    pts = mesh.to_physical(space.local_nodes)
    vals = func(pts[..., 0], pts[..., 1])
    coeffs = np.zeros(space.ndof)
    coeffs[space.elem_dofs] = vals  # shared nodes receive identical values
    coeffs[space.mask] = 0.0
    return Field(space, coeffs)
