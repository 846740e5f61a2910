"""Linear, decoupled IMEX time stepping (Crank-Nicolson / Adams-Bashforth).

One step from t_j to t_{j+1}:

1. choose dt_j from the CFL rule (or use the fixed step);
2. extrapolate u, phi, phi_hat to t_{j+1/2} from levels j-1 and j;
3. solve the linearised Cahn-Hilliard system for phi^{j+1}, phi_hat^{j+1},
   mu^{j+1/2}, mu_hat^{j+1/2};
4. solve the momentum system for the stream function xi^{j+1} and the
   hat velocity u_hat^{j+1}.

Both solves go through static condensation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import forms
from .forms import BlockSystem, Discretization
from .linalg import SolverError, nested_dissection, solve_blocks
from .materials import PhaseParams, density_star, double_well, mobility, viscosity_star
from .mesh import SIDE_NORMALS
from .spaces import interpolate

log = logging.getLogger(__name__)


@dataclass
class StepConfig:
    """Time-step control and solver regularisation knobs.

    Exactly one of ``cfl`` and ``dt`` is set.  ``mobility_floor`` is added
    to (phi^2 - 1)^2 inside the mobility and ``diffusion_floor`` to the
    interface diffusion coefficient; both keep the hat unknowns determined
    in pure-phase regions and are far below any physical scale.
    """

    cfl: float | None = None
    dt: float | None = None
    dt_max: float = 0.1
    v_floor: float = 1e-8
    mobility_floor: float = 1e-6
    diffusion_floor: float = 1e-12
    solver: str = "auto"

    def __post_init__(self):
        if self.solver not in ("auto", "pardiso", "superlu"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if (self.cfl is None) == (self.dt is None):
            raise ValueError("set exactly one of cfl and dt")
        if self.cfl is not None and self.cfl <= 0:
            raise ValueError("cfl must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class SimState:
    t: float
    dt_prev: float | None
    phi: np.ndarray
    phihat: np.ndarray
    xi: np.ndarray
    uhat: np.ndarray
    phi_old: np.ndarray
    phihat_old: np.ndarray
    xi_old: np.ndarray
    uhat_old: np.ndarray
    mu: np.ndarray | None = None
    muhat: np.ndarray | None = None
    step: int = 0

    def copy(self) -> "SimState":
        return replace(self, **{k: (v.copy() if isinstance(v, np.ndarray) else v)
                                for k, v in self.__dict__.items()})


@dataclass
class StepRecord:
    t: float
    dt: float
    vmax: float
    mass: float
    ch_residual: float = 0.0
    ns_residual: float = 0.0


def extrapolate_half(f_old, f_new, dt_prev, dt):
    """f^j + dt_j / (2 dt_{j-1}) (f^j - f^{j-1})."""
    if dt_prev is None or dt_prev <= 0:
        raise ValueError(f"previous step must be positive, got {dt_prev}")
    return f_new + dt / (2.0 * dt_prev) * (f_new - f_old)


def _as_force(f):
    if f is None:
        return lambda t, x, y: np.zeros(x.shape + (2,))
    if callable(f):
        return f
    const = np.asarray(f, dtype=float)
    return lambda t, x, y: np.broadcast_to(const, x.shape + (2,))


class Stepper:
    """Fully discrete scheme bound to one discretisation and parameter set."""

    def __init__(self, disc: Discretization, params: PhaseParams, config: StepConfig,
                 force=None, phase_source: Callable | None = None):
        self.d = disc
        self.params = params
        self.config = config
        self.force = _as_force(force)
        self.phase_source = phase_source
        self.xq = disc.physical_quad_points()
        self.mass_w = forms.assemble_weighted_mass(disc, 1.0, "W")
        self._build_maps()
        self.records: list[StepRecord] = []
        self._ch_res = self._ns_res = 0.0

    # ------------------------------------------------------------------
    def _build_maps(self):
        d = self.d
        Phi, M = d.Phi, d.M
        bl = Phi.boundary_local
        lat = np.unique(Phi.elem_dofs[:, bl])
        lat = lat[~Phi.mask[lat]]
        skel_of = -np.ones(Phi.ndof, dtype=int)
        skel_of[lat] = np.arange(len(lat))
        free_m = np.flatnonzero(~M.mask)
        m_of = -np.ones(M.ndof, dtype=int)
        m_of[free_m] = len(lat) + np.arange(len(free_m))
        self._xi_skel_ids = lat
        self._m_free = free_m
        self._ns_skel = np.concatenate([skel_of[Phi.elem_dofs[:, bl]], m_of[M.elem_dofs]], axis=1)
        self._ns_interior = Phi.interior_local
        self._ns_skeleton = np.concatenate([bl, d.np_loc + np.arange(d.nm_loc)])
        self._ns_nskel = len(lat) + len(free_m)
        mesh = d.mesh
        e = np.arange(mesh.n_elements)
        ij = np.stack([e % mesh.nx, e // mesh.nx], axis=1)
        X = d.X
        ch_skel = np.concatenate([X.elem_dofs, X.elem_dofs + X.ndof], axis=1)
        self._ch_perm = nested_dissection(ch_skel, 2 * X.ndof, ij)
        self._ns_perm = nested_dissection(self._ns_skel, self._ns_nskel, ij)

    # ------------------------------------------------------------------
    def initialize(self, phi0: Callable, stream0: Callable | None = None, t0: float = 0.0,
                   phihat0: Callable | None = None) -> SimState:
        """Nodal interpolation of the initial phase field (and stream function)."""
        d = self.d
        phi = interpolate(d.W, phi0).coeffs
        phihat = interpolate(d.X, phihat0 or phi0).coeffs
        if stream0 is None:
            xi = np.zeros(d.Phi.ndof)
        else:
            xi = interpolate(d.Phi, stream0).coeffs
        uhat = project_hat_velocity(d, xi)
        return SimState(t0, None, phi, phihat, xi, uhat, phi.copy(), phihat.copy(), xi.copy(), uhat.copy())

    def vmax(self, xi) -> float:
        u, _ = self.d.velocity_at_quad(xi)
        return float(np.sqrt((u**2).sum(-1)).max())

    def compute_dt(self, state: SimState) -> float:
        c = self.config
        if c.dt is not None:
            return c.dt
        v = max(self.vmax(state.xi), c.v_floor)
        return min(c.cfl * self.d.mesh.h / v, c.dt_max)

    def mass(self, phi) -> float:
        vol, _ = self.d.w_at_quad(phi)
        return float((vol * self.d.wq).sum())

    # ------------------------------------------------------------------
    def ch_blocks(self, state: SimState, dt: float, xi_tilde, phi_tilde) -> BlockSystem:
        d, p, cfg = self.d, self.params, self.config
        nw, nxl = d.nw, d.nx_loc
        u_vol, u_side = d.velocity_at_quad(xi_tilde)
        pt_vol, pt_side = d.w_at_quad(phi_tilde)
        mob_vol = p.gamma * ((pt_vol**2 - 1.0) ** 2 + cfg.mobility_floor)
        mob_side = p.gamma * ((pt_side**2 - 1.0) ** 2 + cfg.mobility_floor)
        s_eps = p.sigma_tilde * p.eps + cfg.diffusion_floor
        s_over_eps = p.sigma_tilde / p.eps

        C = forms.assemble_phase_convection(d, u_vol, u_side)
        DM = forms.assemble_diffusion(d, mob_vol, mob_side)
        DS = forms.assemble_diffusion(d, s_eps, s_eps)
        pj_vol, _ = d.w_at_quad(state.phi)
        _, dW, d2W = double_well(pj_vol)
        react = forms.assemble_weighted_mass_signed(d, 0.5 * s_over_eps * d2W)

        n = 2 * nw + 2 * nxl
        P = np.concatenate([np.arange(nw), 2 * nw + np.arange(nxl)])
        Mu = np.concatenate([nw + np.arange(nw), 2 * nw + nxl + np.arange(nxl)])
        n_el = d.mesh.n_elements
        K = np.zeros((n_el, n, n))
        K[:, P[:, None], P[None, :]] = 0.5 * C
        K[:, :nw, :nw] += self.mass_w / dt
        K[:, P[:, None], Mu[None, :]] = DM
        K[:, Mu[:, None], P[None, :]] = 0.5 * DS
        K[:, nw:2 * nw, :nw] += react
        K[:, nw:2 * nw, nw:2 * nw] = -self.mass_w

        phi_loc = state.phi[d.W.elem_dofs]
        xP = np.concatenate([phi_loc, state.phihat[d.X.elem_dofs]], axis=1)
        b = np.zeros((n_el, n))
        b[:, P] = -0.5 * np.einsum("eab,eb->ea", C, xP)
        b[:, :nw] += np.einsum("eab,eb->ea", self.mass_w, phi_loc) / dt
        if self.phase_source is not None:
            t_mid = state.t + 0.5 * dt
            fq = self.phase_source(t_mid, self.xq[..., 0], self.xq[..., 1])
            b[:, :nw] += forms.assemble_load(d, fq)
        b[:, Mu] = -0.5 * np.einsum("eab,eb->ea", DS, xP)
        b[:, nw:2 * nw] -= forms.assemble_load(d, s_over_eps * (dW - 0.5 * d2W * pj_vol))

        X = d.X
        skel = np.concatenate([X.elem_dofs, X.elem_dofs + X.ndof], axis=1)
        return BlockSystem(K, b, np.arange(2 * nw), np.arange(2 * nw, n), skel, 2 * X.ndof)

    def ch_step(self, state: SimState, dt: float, xi_tilde, phi_tilde):
        """Returns phi^{j+1}, phi_hat^{j+1}, mu^{j+1/2}, mu_hat^{j+1/2}."""
        d = self.d
        blocks = self.ch_blocks(state, dt, xi_tilde, phi_tilde)
        try:
            sol, xs, self._ch_res = solve_blocks(blocks, self._ch_perm, self.config.solver)
        except SolverError as exc:
            raise SolverError(f"Cahn-Hilliard solve failed at step {state.step + 1} "
                              f"(t={state.t:.6g}, dt={dt:.3g}): {exc}") from exc
        nw, nX = d.nw, d.X.ndof
        return sol[:, :nw].ravel(), xs[:nX].copy(), sol[:, nw:2 * nw].ravel(), xs[nX:].copy()

    # ------------------------------------------------------------------
    def ns_blocks(self, state: SimState, dt: float, xi_tilde, phi_new, phihat_new, mu) -> BlockSystem:
        d, p = self.d, self.params
        npl = d.np_loc
        phi_half = 0.5 * (state.phi + phi_new)
        phihat_half = 0.5 * (state.phihat + phihat_new)
        ph_vol, ph_side = d.w_at_quad(phi_half)
        rho_vol, rho_side = density_star(ph_vol, p), density_star(ph_side, p)
        nu_vol, nu_side = viscosity_star(ph_vol, p), viscosity_star(ph_side, p)

        mass_u = forms.assemble_weighted_mass(d, rho_vol, "Phi")
        B = forms.assemble_viscous(d, nu_vol, nu_side)
        w_vol, w_side = d.velocity_at_quad(xi_tilde)
        conv = forms.assemble_momentum_convection(d, rho_vol, rho_side, w_vol, w_side).apply(xi_tilde)
        _, mu_side = d.w_at_quad(mu)
        st = forms.surface_tension_vector(d, ph_vol, d.x_at_sides(phihat_half),
                                          d.w_grad_at_quad(mu), mu_side)
        t_mid = state.t + 0.5 * dt
        fq = self.force(t_mid, self.xq[..., 0], self.xq[..., 1])
        load = forms.assemble_load(d, fq, rho_vol, "Phi")

        K = 0.5 * B
        K[:, :npl, :npl] += mass_u / dt
        xi_loc = state.xi[d.Phi.elem_dofs]
        x_loc = np.concatenate([xi_loc, state.uhat[d.M.elem_dofs]], axis=1)
        b = -0.5 * np.einsum("eab,eb->ea", B, x_loc)
        b[:, :npl] += np.einsum("eab,eb->ea", mass_u, xi_loc) / dt - conv + st + load
        return BlockSystem(K, b, self._ns_interior, self._ns_skeleton, self._ns_skel, self._ns_nskel)

    def momentum_step(self, state: SimState, dt: float, xi_tilde, phi_new, phihat_new, mu):
        """Returns xi^{j+1}, u_hat^{j+1}."""
        d = self.d
        blocks = self.ns_blocks(state, dt, xi_tilde, phi_new, phihat_new, mu)
        try:
            sol, xs, self._ns_res = solve_blocks(blocks, self._ns_perm, self.config.solver)
        except SolverError as exc:
            raise SolverError(f"momentum solve failed at step {state.step + 1} "
                              f"(t={state.t:.6g}, dt={dt:.3g}): {exc}") from exc
        xi = np.zeros(d.Phi.ndof)
        il = d.Phi.interior_local
        xi[d.Phi.elem_dofs[:, il]] = sol[:, il]
        nxs = len(self._xi_skel_ids)
        xi[self._xi_skel_ids] = xs[:nxs]
        uhat = np.zeros(d.M.ndof)
        uhat[self._m_free] = xs[nxs:]
        return xi, uhat

    # ------------------------------------------------------------------
    def advance(self, state: SimState, dt: float | None = None) -> SimState:
        """One full step; returns a new state (the input is left untouched)."""
        if dt is None:
            dt = self.compute_dt(state)
        vmax = self.vmax(state.xi)
        dt_prev = state.dt_prev if state.dt_prev is not None else dt
        xi_t = extrapolate_half(state.xi_old, state.xi, dt_prev, dt)
        phi_t = extrapolate_half(state.phi_old, state.phi, dt_prev, dt)
        phi_new, phihat_new, mu, muhat = self.ch_step(state, dt, xi_t, phi_t)
        xi_new, uhat_new = self.momentum_step(state, dt, xi_t, phi_new, phihat_new, mu)
        new = SimState(
            t=state.t + dt, dt_prev=dt,
            phi=phi_new, phihat=phihat_new, xi=xi_new, uhat=uhat_new,
            phi_old=state.phi, phihat_old=state.phihat, xi_old=state.xi, uhat_old=state.uhat,
            mu=mu, muhat=muhat, step=state.step + 1,
        )
        self.records.append(StepRecord(new.t, dt, vmax, self.mass(phi_new), self._ch_res, self._ns_res))
        return new


def project_hat_velocity(d: Discretization, xi) -> np.ndarray:
    """Edge-wise L2 projection of the tangential velocity trace onto M^{k-1}.

    Interior edges average the projections from both sides.
    """
    from .quadbasis import EdgeProjector

    proj = EdgeProjector(d.k - 1, d.erule)
    _, u_side = d.velocity_at_quad(xi)
    M = d.M
    nper = M.side_local.shape[1]
    acc = np.zeros(M.ndof)
    cnt = np.zeros(M.ndof)
    for s in range(4):
        ut = u_side[:, s] @ forms.SIDE_TANGENTS[s]  # (n_el, ne), along the side tangent
        coef = (proj.to_coeffs @ ut.T).T * d.mesh.elem_signs[:, s:s + 1]
        ids = M.elem_dofs[:, s * nper:(s + 1) * nper]
        np.add.at(acc, ids, coef)
        np.add.at(cnt, ids, 1.0)
    out = acc / np.maximum(cnt, 1.0)
    out[M.mask] = 0.0
    return out
