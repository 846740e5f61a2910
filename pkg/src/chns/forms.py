"""Element-loop assembly of the HDG/EDG operators.

All loops are vectorised over elements: reference tables are shared by
every element of the uniform mesh and only the coefficients, sampled at
quadrature points, vary.  Local matrices are indexed ``[test, trial]``.

Local orderings:

* scalar EDG pair (W^k, X^k): ``[w nodes (k+1)^2, hat nodes 4k]``;
* velocity pair (Phi^{k+1}, M^{k-1}): ``[stream nodes (k+2)^2, hat 4k]``.

The hat velocity coefficient is taken along the stored edge tangent; the
per-element orientation sign is folded into the local matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import SIDE_NORMALS, StructuredMesh, rotate
from .quadbasis import EdgeProjector, eval_edge_basis, eval_element_basis, gauss_rule, tensor_rule
from .spaces import DofSpace, build_space

SIDE_TANGENTS = rotate(SIDE_NORMALS)


def _side_points(s):
    """Reference points of the four sides, ordered along the side parameter."""
    z, o = np.zeros_like(s), np.ones_like(s)
    return [np.stack(p, -1) for p in ((s, z), (o, s), (s, o), (z, s))]


def _hat_on_sides(space: DofSpace, edge_vals: np.ndarray) -> np.ndarray:
    """Scatter edge basis values into local hat numbering: (4, n_pts, n_local)."""
    n_local = space.n_local
    out = np.zeros((4, edge_vals.shape[0], n_local))
    for s in range(4):
        out[s][:, space.side_local[s]] = edge_vals
    return out


class Discretization:
    """Spaces, quadrature and reference tables for one mesh and degree k."""

    def __init__(self, mesh: StructuredMesh, k: int, bc: dict | None = None,
                 quad_order: int | None = None, alpha: float = 4.0):
        if k < 1:
            raise ValueError("polynomial degree k must be >= 1 (hat velocity degree is k-1)")
        if alpha <= 0:
            raise ValueError("penalty alpha must be positive")
        self.mesh, self.k, self.alpha = mesh, k, float(alpha)
        self.W = build_space(mesh, "W", k, bc)
        self.X = build_space(mesh, "X", k, bc)
        self.Phi = build_space(mesh, "Phi", k + 1, bc)
        self.M = build_space(mesh, "M", k - 1, bc)
        self.bc = self.Phi.bc
        nq1 = quad_order or k + 2
        self.quad_order = nq1
        hx, hy = mesh.hx, mesh.hy
        scale = np.array([1.0 / hx, 1.0 / hy])

        # volume quadrature
        self.qpts, w = tensor_rule(nq1)
        self.wq = w * hx * hy
        # edge quadrature
        erule = gauss_rule(nq1)
        self.erule = erule
        self.epts = erule.points
        self.ws = np.stack([erule.weights * mesh.side_length(s) for s in range(4)])
        self.side_pts = _side_points(self.epts)
        self.h_perp = np.array([mesh.side_h_perp(s) for s in range(4)])
        self.tau = self.alpha * (k + 1) ** 2 / self.h_perp

        # W^k tables
        tw = eval_element_basis(k, self.qpts)
        self.Bw = tw.values
        self.Gw = tw.grads * scale
        side_w = [eval_element_basis(k, p) for p in self.side_pts]
        self.Tw = np.stack([t.values for t in side_w])
        self.Nw = np.stack([(t.grads * scale) @ SIDE_NORMALS[s] for s, t in enumerate(side_w)])
        # X^k hats on the sides
        self.Hx = _hat_on_sides(self.X, eval_edge_basis(k, self.epts).values)

        # Phi^{k+1} tables and the derived velocity basis
        tp = eval_element_basis(k + 1, self.qpts, hessian=True)
        self.Bp = tp.values
        self.U, self.GU = self._curl(tp, hx, hy)
        side_p = [eval_element_basis(k + 1, p, hessian=True) for p in self.side_pts]
        self.Tp = np.stack([t.values for t in side_p])
        curls = [self._curl(t, hx, hy) for t in side_p]
        self.Us = np.stack([c[0] for c in curls])  # (4, ne, np, 2)
        self.GUs = np.stack([c[1] for c in curls])  # (4, ne, np, 2, 2)
        # M^{k-1} hats and the projection onto P^{k-1}
        self.Hm = _hat_on_sides(self.M, eval_edge_basis(k - 1, self.epts).values)
        self.proj = EdgeProjector(k - 1, erule).matrix
        # orientation of the hat velocity DOFs, (n_el, 4k)
        nper = self.M.side_local.shape[1]
        self.hat_sign = np.repeat(mesh.elem_signs, nper, axis=1).astype(float)

        self.nw, self.nx_loc = self.W.n_local, self.X.n_local
        self.np_loc, self.nm_loc = self.Phi.n_local, self.M.n_local
        self._cache = {}

    @staticmethod
    def _curl(tab, hx, hy):
        gx, gy = tab.grads[..., 0] / hx, tab.grads[..., 1] / hy
        hxx = tab.hessians[..., 0, 0] / hx**2
        hxy = tab.hessians[..., 0, 1] / (hx * hy)
        hyy = tab.hessians[..., 1, 1] / hy**2
        u = np.stack([gy, -gx], -1)
        gu = np.stack([np.stack([hxy, hyy], -1), np.stack([-hxx, -hxy], -1)], -2)
        return u, gu

    # sampling helpers -----------------------------------------------------
    def w_at_quad(self, coeffs):
        """W^k field at volume points (n_el, nq) and side points (n_el, 4, ne)."""
        loc = np.asarray(coeffs)[self.W.elem_dofs]
        return loc @ self.Bw.T, np.einsum("ea,sqa->esq", loc, self.Tw)

    def w_grad_at_quad(self, coeffs):
        loc = np.asarray(coeffs)[self.W.elem_dofs]
        return np.einsum("ea,qad->eqd", loc, self.Gw)

    def x_at_sides(self, coeffs):
        loc = np.asarray(coeffs)[self.X.elem_dofs]
        return np.einsum("ea,sqa->esq", loc, self.Hx)

    def velocity_at_quad(self, xi):
        """u at volume points (n_el, nq, 2) and side points (n_el, 4, ne, 2)."""
        loc = np.asarray(xi)[self.Phi.elem_dofs]
        return np.einsum("ea,qad->eqd", loc, self.U), np.einsum("ea,sqad->esqd", loc, self.Us)

    def velocity_grad_at_quad(self, xi):
        loc = np.asarray(xi)[self.Phi.elem_dofs]
        return np.einsum("ea,qaij->eqij", loc, self.GU)

    def physical_quad_points(self):
        return self.mesh.to_physical(self.qpts)

    def physical_side_points(self):
        """(n_el, 4, ne, 2)."""
        return np.stack([self.mesh.to_physical(p) for p in self.side_pts], axis=1)

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


# ---------------------------------------------------------------------------
# block system container


@dataclass
class BlockSystem:
    """Element-local blocks of a hybridised linear system.

    ``K[e]`` and ``b[e]`` use one local ordering; ``interior`` and
    ``skeleton`` pick local positions, ``skel_dofs[e]`` maps skeleton
    positions to global skeleton unknowns (-1 where the DOF is constrained
    to zero and eliminated).
    """

    K: np.ndarray
    b: np.ndarray
    interior: np.ndarray
    skeleton: np.ndarray
    skel_dofs: np.ndarray
    n_skel: int

    @property
    def n_elements(self) -> int:
        return self.K.shape[0]

    def blocks(self):
        I, S = self.interior, self.skeleton
        K = self.K
        return (K[:, I][:, :, I], K[:, I][:, :, S], K[:, S][:, :, I], K[:, S][:, :, S],
                self.b[:, I], self.b[:, S])

    def global_ids(self) -> np.ndarray:
        """Global unknown ids of every local position (interior block first), -1 if fixed."""
        n_el, nI = self.n_elements, len(self.interior)
        ids = np.empty((n_el, self.K.shape[1]), dtype=int)
        ids[:, self.interior] = np.arange(n_el * nI).reshape(n_el, nI)
        ids[:, self.skeleton] = np.where(self.skel_dofs >= 0, self.skel_dofs + n_el * nI, -1)
        return ids

    def to_sparse(self):
        """Uncondensed global matrix and right-hand side (for oracles and debugging)."""
        ids = self.global_ids()
        n = self.n_elements * len(self.interior) + self.n_skel
        rows = np.broadcast_to(ids[:, :, None], self.K.shape)
        cols = np.broadcast_to(ids[:, None, :], self.K.shape)
        keep = (rows >= 0) & (cols >= 0)
        A = sp.coo_matrix((self.K[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
        rhs = np.zeros(n)
        kb = ids >= 0
        np.add.at(rhs, ids[kb], self.b[kb])
        return A, rhs

    def to_dense(self):
        A, rhs = self.to_sparse()
        return A.toarray(), rhs


# ---------------------------------------------------------------------------
# scalar EDG operators on (W^k, X^k)


def _check_alpha(alpha):
    if alpha <= 0:
        raise ValueError(f"penalty alpha must be positive, got {alpha}")


def assemble_diffusion(d: Discretization, c_vol, c_side, alpha: float | None = None):
    """Symmetric interior-penalty EDG form D_h((c, mu, mu_hat), (psi, psi_hat))."""
    alpha = d.alpha if alpha is None else alpha
    _check_alpha(alpha)
    tau = alpha * (d.k + 1) ** 2 / d.h_perp
    c_vol = np.broadcast_to(c_vol, (d.mesh.n_elements, len(d.wq)))
    c_side = np.broadcast_to(c_side, (d.mesh.n_elements, 4, len(d.epts)))

    def tables():
        GG = np.einsum("qad,qbd->qab", d.Gw, d.Gw)
        n = d.nw + d.nx_loc
        Q = np.zeros((4, len(d.epts), n, n))
        for s in range(4):
            J = np.concatenate([d.Tw[s], -d.Hx[s]], axis=1)
            F = np.concatenate([d.Nw[s], np.zeros_like(d.Hx[s])], axis=1)
            Q[s] = (-np.einsum("qa,qb->qab", J, F) - np.einsum("qa,qb->qab", F, J)
                    + tau[s] * np.einsum("qa,qb->qab", J, J))
        return GG, Q

    GG, Q = d.cached(("diffusion", alpha), tables)
    n = d.nw + d.nx_loc
    K = np.zeros((d.mesh.n_elements, n, n))
    K[:, :d.nw, :d.nw] = np.einsum("eq,qab->eab", c_vol * d.wq, GG)
    K += np.einsum("esq,sqab->eab", c_side * d.ws, Q)
    return K


def assemble_phase_convection(d: Discretization, u_vol, u_side):
    """Upwind EDG convection C1_h((u, phi, phi_hat), (psi, psi_hat)).

    Volume part -(u phi, grad psi); edge part (u.n) phi_up (psi - psi_hat)
    with phi_up the interior trace on outflow and the hat on inflow.
    """
    n_el = d.mesh.n_elements
    n = d.nw + d.nx_loc
    K = np.zeros((n_el, n, n))
    ug = np.einsum("eqd,qbd->eqb", u_vol, d.Gw) * d.wq[:, None]
    K[:, :d.nw, :d.nw] = -np.einsum("eqb,qa->eba", ug, d.Bw)
    for s in range(4):
        un = u_side[:, s] @ SIDE_NORMALS[s]  # (n_el, ne)
        out = un >= 0.0
        J = np.concatenate([d.Tw[s], -d.Hx[s]], axis=1)  # test
        wun = un * d.ws[s]
        # trial: interior trace on outflow points, hat on inflow points
        K[:, :, :d.nw] += np.einsum("eq,qb,qa->eba", wun * out, J, d.Tw[s])
        K[:, :, d.nw:] += np.einsum("eq,qb,qa->eba", wun * ~out, J, d.Hx[s])
    return K


def assemble_weighted_mass(d: Discretization, c_vol, space: str = "W"):
    """(c u, v) on W^k, or on the velocity basis curl(Phi^{k+1}) for space='Phi'."""
    c_vol = np.broadcast_to(np.asarray(c_vol, dtype=float), (d.mesh.n_elements, len(d.wq)))
    if np.any(c_vol <= 0):
        e, q = np.argwhere(c_vol <= 0)[0]
        raise ValueError(f"non-positive mass weight {c_vol[e, q]} in element {e}")
    if space == "W":
        BB = d.cached("massW", lambda: np.einsum("qa,qb->qab", d.Bw, d.Bw))
    elif space == "Phi":
        BB = d.cached("massU", lambda: np.einsum("qad,qbd->qab", d.U, d.U))
    else:
        raise ValueError(f"no mass matrix for space {space!r}")
    return np.einsum("eq,qab->eab", c_vol * d.wq, BB)


def assemble_weighted_mass_signed(d: Discretization, c_vol):
    """(c u, v) on W^k for a coefficient of any sign (linearised reaction terms)."""
    BB = d.cached("massW", lambda: np.einsum("qa,qb->qab", d.Bw, d.Bw))
    c_vol = np.broadcast_to(np.asarray(c_vol, dtype=float), (d.mesh.n_elements, len(d.wq)))
    return np.einsum("eq,qab->eab", c_vol * d.wq, BB)


def assemble_load(d: Discretization, f_vol, rho_vol=None, space: str = "W"):
    """(f, psi) on W^k or (rho f, v) on the velocity basis; returns (n_el, n_local)."""
    if space == "W":
        return np.einsum("eq,qa->ea", np.asarray(f_vol) * d.wq, d.Bw)
    if space == "Phi":
        rho = 1.0 if rho_vol is None else np.asarray(rho_vol)[..., None]
        return np.einsum("eqd,qad->ea", rho * f_vol * d.wq[:, None], d.U)
    raise ValueError(f"no load vector for space {space!r}")


# ---------------------------------------------------------------------------
# velocity operators on (Phi^{k+1}, M^{k-1})


def _sym(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def assemble_viscous(d: Discretization, c_vol, c_side, alpha: float | None = None):
    """HDG viscous form B_h with projected tangential jumps.

    2 sum_T [ (c D(u), D(v))_T - <c D(u)n, tang(Pi v - v_hat)> - <c D(v)n, tang(Pi u - u_hat)>
              + <c tau tang(Pi u - u_hat), tang(Pi v - v_hat)> ]

    The tangential traces of curl Q^{k+1} have degree k+1, so the unprojected
    consistency terms would see the two top trace modes that the hat space
    cannot match; that costs a full order for k = 2.  Projecting them as
    well keeps the form symmetric and exact on velocities of degree <= k
    (for which D(u)n is already of degree k-1 along the edge).
    """
    alpha = d.alpha if alpha is None else alpha
    _check_alpha(alpha)
    tau = alpha * (d.k + 1) ** 2 / d.h_perp
    n_el = d.mesh.n_elements
    c_vol = np.broadcast_to(c_vol, (n_el, len(d.wq)))
    c_side = np.broadcast_to(c_side, (n_el, 4, len(d.epts)))

    def tables():
        D = _sym(d.GU)
        DD = 2.0 * np.einsum("qaij,qbij->qab", D, D)
        n = d.np_loc + d.nm_loc
        Q = np.zeros((4, len(d.epts), n, n))
        for s in range(4):
            nrm, tng = SIDE_NORMALS[s], SIDE_TANGENTS[s]
            ut = d.Us[s] @ tng  # (ne, np)
            flux = np.einsum("qaij,j,i->qa", _sym(d.GUs[s]), nrm, tng)
            PJ = np.concatenate([d.proj @ ut, -d.Hm[s]], axis=1)
            F = np.concatenate([flux, np.zeros_like(d.Hm[s])], axis=1)
            Q[s] = 2.0 * (-np.einsum("qa,qb->qab", PJ, F) - np.einsum("qa,qb->qab", F, PJ)
                          + tau[s] * np.einsum("qa,qb->qab", PJ, PJ))
        return DD, Q

    DD, Q = d.cached(("viscous", alpha), tables)
    n = d.np_loc + d.nm_loc
    K = np.zeros((n_el, n, n))
    K[:, :d.np_loc, :d.np_loc] = np.einsum("eq,qab->eab", c_vol * d.wq, DD)
    K += np.einsum("esq,sqab->eab", c_side * d.ws, Q)
    sign = np.concatenate([np.ones((n_el, d.np_loc)), d.hat_sign], axis=1)
    return K * sign[:, :, None] * sign[:, None, :]


@dataclass
class ConvectionOperator:
    """Frozen-coefficient DG upwind convection C2_h as element blocks.

    ``own[e]`` couples element e to itself, ``nbr[e, s]`` couples test
    functions of e to the trial functions of its neighbour across side s.
    """

    own: np.ndarray
    nbr: np.ndarray
    neighbors: np.ndarray
    space: DofSpace

    def apply(self, xi) -> np.ndarray:
        """Local residual vectors (n_el, n_local) for stream coefficients xi."""
        loc = np.asarray(xi)[self.space.elem_dofs]
        r = np.einsum("eba,ea->eb", self.own, loc)
        for s in range(4):
            nb = self.neighbors[:, s]
            has = nb >= 0
            r[has] += np.einsum("eba,ea->eb", self.nbr[has, s], loc[nb[has]])
        return r

    def to_sparse(self):
        dofs = self.space.elem_dofs
        n_el, n = dofs.shape
        rows, cols, vals = [], [], []
        rows.append(np.broadcast_to(dofs[:, :, None], (n_el, n, n)).ravel())
        cols.append(np.broadcast_to(dofs[:, None, :], (n_el, n, n)).ravel())
        vals.append(self.own.ravel())
        for s in range(4):
            nb = self.neighbors[:, s]
            has = np.flatnonzero(nb >= 0)
            rows.append(np.broadcast_to(dofs[has][:, :, None], (len(has), n, n)).ravel())
            cols.append(np.broadcast_to(dofs[nb[has]][:, None, :], (len(has), n, n)).ravel())
            vals.append(self.nbr[has, s].ravel())
        N = self.space.ndof
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N)).tocsr()


def assemble_momentum_convection(d: Discretization, rho_vol, rho_side, w_vol, w_side, w_grad=None):
    """Upwind convection C2_h((rho, w, u), v), bilinear in (u, v) for frozen rho, w.

    Volume term (rho div(w (x) u), v) = (rho (w.grad) u, v) since div w = 0;
    edge term <rho (w.n) (u_up - u), v> where u_up is the trace from the
    element the flow leaves.  ``w_grad`` is unused (kept for symmetry with
    callers that already hold it).
    """
    n_el = d.mesh.n_elements
    rho_vol = np.broadcast_to(rho_vol, (n_el, len(d.wq)))
    rho_side = np.broadcast_to(rho_side, (n_el, 4, len(d.epts)))
    # (w.grad) U_a at volume points: (n_el, nq, np, 2)
    wgu = np.einsum("eqj,qaij->eqai", w_vol, d.GU)
    own = np.einsum("eq,eqai,qbi->eba", rho_vol * d.wq, wgu, d.U)
    nbr = np.zeros((n_el, 4) + own.shape[1:])
    opp = np.array([2, 3, 0, 1])
    for s in range(4):
        wn = w_side[:, s] @ SIDE_NORMALS[s]
        inflow = (wn < 0.0) & (d.mesh.neighbors[:, s] >= 0)[:, None]
        coef = np.where(inflow, rho_side[:, s] * wn * d.ws[s], 0.0)
        UU = np.einsum("qbi,qai->qba", d.Us[s], d.Us[s])
        own -= np.einsum("eq,qba->eba", coef, UU)
        # neighbour trace on the shared edge, same parametrisation
        UN = np.einsum("qbi,qai->qba", d.Us[s], d.Us[opp[s]])
        nbr[:, s] = np.einsum("eq,qba->eba", coef, UN)
    return ConvectionOperator(own, nbr, d.mesh.neighbors, d.Phi)


def surface_tension_vector(d: Discretization, phi_vol, phihat_side, mu_vol_grad, mu_side):
    """C3_h((phi, phi_hat, mu), v) for every velocity basis function: (n_el, np)."""
    vol = -np.einsum("eq,eqd,qad->ea", phi_vol * d.wq, mu_vol_grad, d.U)
    for s in range(4):
        un = d.Us[s] @ SIDE_NORMALS[s]  # (ne, np)
        vol += np.einsum("eq,qa->ea", phihat_side[:, s] * mu_side[:, s] * d.ws[s], un)
    return vol


def assemble_surface_tension(d: Discretization, phi, phihat, mu):
    """C3_h for W/X coefficient vectors phi, phi_hat, mu."""
    phi_vol, _ = d.w_at_quad(phi)
    _, mu_side = d.w_at_quad(mu)
    mu_grad = d.w_grad_at_quad(mu)
    return surface_tension_vector(d, phi_vol, d.x_at_sides(phihat), mu_grad, mu_side)


def scatter_vector(space: DofSpace, local: np.ndarray) -> np.ndarray:
    out = np.zeros(space.ndof)
    np.add.at(out, space.elem_dofs, local)
    return out
