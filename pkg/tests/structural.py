"""Structural checks of the discrete operators, shared by the unit and acceptance suites.

Every function returns a non-negative error measure (or an eigenvalue)
so callers can compare it against their own tolerance.
"""
import numpy as np
import sympy as sp_

from chns import forms
from chns.forms import Discretization
from chns.linalg import solve_blocks
from chns.materials import PhaseParams
from chns.mesh import SIDE_NORMALS, build_mesh
from chns.quadbasis import EdgeProjector, gauss_rule
from chns.spaces import Field, build_space, eval_field, interpolate
from chns.stepper import StepConfig, Stepper, project_hat_velocity

OPEN = {"bottom": "none", "right": "none", "top": "none", "left": "none"}
x_, y_ = sp_.symbols("x y")


def lam(expr):
    f = sp_.lambdify((x_, y_), expr, "numpy")
    return lambda x, y: np.broadcast_to(np.asarray(f(x, y), dtype=float), np.shape(x)).copy()


def assemble_dense(K, ids, n):
    A = np.zeros((n, n))
    np.add.at(A, (ids[:, :, None], ids[:, None, :]), K)
    return A


def scalar_ids(d):
    return np.concatenate([d.W.elem_dofs, d.W.ndof + d.X.elem_dofs], axis=1), d.W.ndof + d.X.ndof


def velocity_ids(d):
    return np.concatenate([d.Phi.elem_dofs, d.Phi.ndof + d.M.elem_dofs], axis=1), d.Phi.ndof + d.M.ndof


def scatter(ids, n, local):
    out = np.zeros(n)
    np.add.at(out, ids, local)
    return out


def node_coords(space):
    """Physical coordinates of every DOF of a lattice space (W, X or Phi)."""
    pts = space.mesh.to_physical(space.local_nodes)
    xy = np.zeros((space.ndof, 2))
    xy[space.elem_dofs] = pts
    return xy


def _rel(r, ref, scale=None):
    """Max residual relative to the size of the terms that produced it.

    ``scale`` holds row sums of |K| |x|; the measure is then a backward
    error and does not grow with the penalty or the mesh size.
    """
    den = max(1.0, np.abs(ref).max(), 0.0 if scale is None else np.abs(scale).max())
    return float(np.abs(r).max() / den)


def _abs_apply(ids, N, K, xl):
    return scatter(ids, N, np.einsum("eab,eb->ea", np.abs(K), np.abs(xl)))


def _smooth_coeff(d, rng):
    """A positive, element-varying coefficient at volume and side points."""
    a = rng.uniform(0.5, 2.0, (d.mesh.n_elements, 1))
    vol = a * (1.0 + 0.3 * np.sin(7 * d.physical_quad_points()[..., 0]))
    side = a[:, :, None] * (1.0 + 0.3 * np.cos(5 * d.physical_side_points()[..., 1]))
    return vol, side


# ---------------------------------------------------------------------------
def divergence_error(k, seed=0, n=4):
    m = build_mesh(n, n, bounds=(0.0, 1.0, 0.0, 2.0))
    d = Discretization(m, k)
    xi = np.random.default_rng(seed).normal(size=d.Phi.ndof)
    xi[d.Phi.mask] = 0.0
    gu = d.velocity_grad_at_quad(xi)
    return float(np.abs(gu[..., 0, 0] + gu[..., 1, 1]).max() / np.abs(gu).max())


def pressure_orthogonality(k, seed=0, n=4):
    """max |(grad p, v)| over wall-free velocity basis functions, p continuous Q^k."""
    m = build_mesh(n, n)
    d = Discretization(m, k)
    Pk = build_space(m, "Phi", k, OPEN)
    p = Field(Pk, np.random.default_rng(seed).normal(size=Pk.ndof))
    _, gp = eval_field(p, None, d.qpts, grad=True)
    r = forms.scatter_vector(d.Phi, forms.assemble_load(d, gp, None, "Phi"))
    return float(np.abs(r[~d.Phi.mask]).max())


def symmetry_errors(k, seed=0, n=3):
    """Relative asymmetry of the local D_h and B_h blocks."""
    m = build_mesh(n, n, bounds=(0.0, 1.0, 0.0, 1.5))
    d = Discretization(m, k)
    cv, cs = _smooth_coeff(d, np.random.default_rng(seed))
    D = forms.assemble_diffusion(d, cv, cs)
    B = forms.assemble_viscous(d, cv, cs)
    asym = lambda K: float(np.abs(K - K.transpose(0, 2, 1)).max() / np.abs(K).max())  # noqa: E731
    return asym(D), asym(B)


def definiteness(k, seed=0):
    """(min eig of D_h / max eig, min eig of B_h on free DOFs / max eig) on a 2x2 mesh."""
    m = build_mesh(2, 2)
    d = Discretization(m, k)
    cv, cs = _smooth_coeff(d, np.random.default_rng(seed))
    ids, n = scalar_ids(d)
    ev = np.linalg.eigvalsh(assemble_dense(forms.assemble_diffusion(d, cv, cs), ids, n))
    vids, vn = velocity_ids(d)
    B = assemble_dense(forms.assemble_viscous(d, cv, cs), vids, vn)
    free = ~np.concatenate([d.Phi.mask, d.M.mask])
    eb = np.linalg.eigvalsh(B[np.ix_(free, free)])
    return ev[0] / ev[-1], eb[0] / eb[-1]


def constant_kernel_error(k):
    """D_h applied to (1, 1): the constants span its kernel."""
    m = build_mesh(2, 2)
    d = Discretization(m, k)
    ids, n = scalar_ids(d)
    A = assemble_dense(forms.assemble_diffusion(d, 1.0, 1.0), ids, n)
    return float(np.abs(A @ np.ones(n)).max() / np.abs(A).max())


def projector_idempotence(k):
    P = EdgeProjector(k - 1, gauss_rule(k + 2)).matrix
    return float(np.abs(P @ P - P).max())


# ---------------------------------------------------------------------------
def small_stepper(k=2, n=3, periodic=False, seed=0):
    m = build_mesh(n, n, periodicity=periodic)
    d = Discretization(m, k)
    p = PhaseParams(rho1=3.0, rho2=1.0, nu1=0.5, nu2=0.1, sigma=1.0, eps=0.1, gamma=0.05)
    st = Stepper(d, p, StepConfig(dt=0.01), force=(0.0, -1.0))
    rng = np.random.default_rng(seed)
    state = st.initialize(lambda x, y: np.tanh((0.3 - np.hypot(x - 0.5, y - 0.5)) / 0.14))
    state.xi = rng.normal(scale=0.05, size=d.Phi.ndof)
    state.xi[d.Phi.mask] = 0.0
    state.uhat = project_hat_velocity(d, state.xi)
    return st, state


def condensed_vs_dense(k=2, n=3):
    """Max relative difference between the condensed solve and a dense uncondensed solve."""
    st, s = small_stepper(k, n)
    d = st.d
    errs = []
    ch = st.ch_blocks(s, 0.01, s.xi, s.phi)
    mu = np.zeros(d.W.ndof)
    ns = st.ns_blocks(s, 0.01, s.xi, s.phi, s.phihat, mu)
    for blocks in (ch, ns):
        loc, _, _ = solve_blocks(blocks)
        A, rhs = blocks.to_dense()
        x = np.linalg.solve(A, rhs)
        ids = blocks.global_ids()
        ref = np.where(ids >= 0, x[np.maximum(ids, 0)], 0.0)
        errs.append(float(np.abs(loc - ref).max() / np.abs(ref).max()))
    return max(errs)


# ---------------------------------------------------------------------------
# patch tests: exact polynomial data in the discrete spaces reproduce the
# strong form of each operator


def _poly(k, seed):
    rng = np.random.default_rng(seed)
    return sum(rng.uniform(-1, 1) * x_**i * y_**j for i in range(k + 1) for j in range(k + 1))


def patch_diffusion(k, seed=0, n=3):
    m = build_mesh(n, n, bounds=(0.0, 1.0, -0.5, 0.5))
    d = Discretization(m, k)
    mu = _poly(k, seed)
    c = 1.0 + 0.5 * x_ - 0.3 * y_
    strong = -(sp_.diff(c * sp_.diff(mu, x_), x_) + sp_.diff(c * sp_.diff(mu, y_), y_))
    xq, xs = d.physical_quad_points(), d.physical_side_points()
    cf = lam(c)
    K = forms.assemble_diffusion(d, cf(xq[..., 0], xq[..., 1]), cf(xs[..., 0], xs[..., 1]))
    ids, N = scalar_ids(d)
    x = np.concatenate([interpolate(d.W, lam(mu)).coeffs, interpolate(d.X, lam(mu)).coeffs])
    F = scatter(d.W.elem_dofs, d.W.ndof, forms.assemble_load(d, lam(strong)(xq[..., 0], xq[..., 1])))
    r = scatter(ids, N, np.einsum("eab,eb->ea", K, x[ids]))
    rows = np.concatenate([np.ones(d.W.ndof, bool), _interior_x(d)])
    F = np.concatenate([F, np.zeros(d.X.ndof)])
    return _rel((r - F)[rows], F, _abs_apply(ids, N, K, x[ids])[rows])


def _interior_x(d):
    xy = node_coords(d.X)
    m = d.mesh
    b = (m.x0, m.x1, m.y0, m.y1)
    tol = 1e-12
    return ~((np.abs(xy[:, 0] - b[0]) < tol) | (np.abs(xy[:, 0] - b[1]) < tol)
             | (np.abs(xy[:, 1] - b[2]) < tol) | (np.abs(xy[:, 1] - b[3]) < tol))


def patch_phase_convection(k, seed=0, n=3):
    m = build_mesh(n, n)
    d = Discretization(m, k)
    phi = _poly(k, seed)
    ux, uy = 1.0 + y_, 0.5 - x_
    strong = ux * sp_.diff(phi, x_) + uy * sp_.diff(phi, y_)
    xq, xs = d.physical_quad_points(), d.physical_side_points()
    uv = np.stack([lam(ux)(xq[..., 0], xq[..., 1]), lam(uy)(xq[..., 0], xq[..., 1])], -1)
    us = np.stack([lam(ux)(xs[..., 0], xs[..., 1]), lam(uy)(xs[..., 0], xs[..., 1])], -1)
    K = forms.assemble_phase_convection(d, uv, us)
    ids, N = scalar_ids(d)
    x = np.concatenate([interpolate(d.W, lam(phi)).coeffs, interpolate(d.X, lam(phi)).coeffs])
    F = scatter(d.W.elem_dofs, d.W.ndof, forms.assemble_load(d, lam(strong)(xq[..., 0], xq[..., 1])))
    r = scatter(ids, N, np.einsum("eab,eb->ea", K, x[ids]))
    rows = np.concatenate([np.ones(d.W.ndof, bool), _interior_x(d)])
    F = np.concatenate([F, np.zeros(d.X.ndof)])
    return _rel((r - F)[rows], F, _abs_apply(ids, N, K, x[ids])[rows])


def _stream(k, seed):
    """Stream function of total degree k+1: velocity of degree k, D(u) of degree k-1."""
    rng = np.random.default_rng(seed)
    return sum(rng.uniform(-1, 1) * x_**i * y_**j
               for i in range(k + 2) for j in range(k + 2) if i + j == k + 1 or i + j == k)


def _velocity_setup(k, n):
    m = build_mesh(n, n, bounds=(0.0, 1.0, 0.0, 1.25))
    d = Discretization(m, k, bc=OPEN)
    walls = Discretization(m, k)
    rows = ~np.concatenate([walls.Phi.mask, walls.M.mask])
    return d, rows


def patch_viscous(k, seed=0, n=3, c=1.7):
    d, rows = _velocity_setup(k, n)
    xi = _stream(k, seed)
    ux, uy = sp_.diff(xi, y_), -sp_.diff(xi, x_)
    lap = lambda f: sp_.diff(f, x_, 2) + sp_.diff(f, y_, 2)  # noqa: E731
    xq = d.physical_quad_points()
    f = np.stack([lam(-c * lap(ux))(xq[..., 0], xq[..., 1]), lam(-c * lap(uy))(xq[..., 0], xq[..., 1])], -1)
    K = forms.assemble_viscous(d, c, c)
    ids, N = velocity_ids(d)
    xc = interpolate(d.Phi, lam(xi)).coeffs
    x = np.concatenate([xc, project_hat_velocity(d, xc)])
    r = scatter(ids, N, np.einsum("eab,eb->ea", K, x[ids]))
    F = np.concatenate([forms.scatter_vector(d.Phi, forms.assemble_load(d, f, None, "Phi")), np.zeros(d.M.ndof)])
    return _rel((r - F)[rows], F, _abs_apply(ids, N, K, x[ids])[rows])


def patch_momentum_convection(k, seed=0, n=3):
    d, _ = _velocity_setup(k, n)
    xi, w = _stream(k, seed), _stream(k, seed + 1)
    ux, uy = sp_.diff(xi, y_), -sp_.diff(xi, x_)
    wx, wy = sp_.diff(w, y_), -sp_.diff(w, x_)
    rho = 2.0 + x_ - 0.5 * y_
    fx = wx * sp_.diff(ux, x_) + wy * sp_.diff(ux, y_)
    fy = wx * sp_.diff(uy, x_) + wy * sp_.diff(uy, y_)
    xq, xs = d.physical_quad_points(), d.physical_side_points()
    ev = lambda e, p: lam(e)(p[..., 0], p[..., 1])  # noqa: E731
    wc = interpolate(d.Phi, lam(w)).coeffs
    wv, wsd = d.velocity_at_quad(wc)
    op = forms.assemble_momentum_convection(d, ev(rho, xq), ev(rho, xs), wv, wsd)
    r = op.apply(interpolate(d.Phi, lam(xi)).coeffs)
    F = forms.assemble_load(d, np.stack([ev(fx, xq), ev(fy, xq)], -1), ev(rho, xq), "Phi")
    return _rel(r - F, F)


def patch_surface_tension(k, seed=0, n=3):
    d, rows = _velocity_setup(k, n)
    phi, mu = _poly(k, seed), _poly(k, seed + 7)
    xq = d.physical_quad_points()
    ev = lambda e: lam(e)(xq[..., 0], xq[..., 1])  # noqa: E731
    f = np.stack([ev(phi * sp_.diff(mu, x_)), ev(phi * sp_.diff(mu, y_))], -1)
    loc = forms.assemble_surface_tension(d, interpolate(d.W, lam(phi)).coeffs,
                                         interpolate(d.X, lam(phi)).coeffs, interpolate(d.W, lam(mu)).coeffs)
    r = forms.scatter_vector(d.Phi, loc)
    F = -forms.scatter_vector(d.Phi, forms.assemble_load(d, f, None, "Phi"))
    keep = rows[:d.Phi.ndof]
    return _rel((r - F)[keep], F)


PATCH_TESTS = {
    "D_h": patch_diffusion,
    "C1_h": patch_phase_convection,
    "B_h": patch_viscous,
    "C2_h": patch_momentum_convection,
    "C3_h": patch_surface_tension,
}
