"""Benchmark drivers: manufactured convergence, rising bubble, Rayleigh-Taylor."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import postproc as pp
from .config import RunConfig, dump_config
from .forms import Discretization
from .manufactured import manufactured
from .materials import PhaseParams
from .mesh import build_mesh
from .spaces import Field
from .stepper import SimState, StepConfig, Stepper

log = logging.getLogger(__name__)


def phase_params(cfg: RunConfig) -> PhaseParams:
    p = cfg.physics
    return PhaseParams(rho1=p.rho1, rho2=p.rho2, nu1=p.nu1, nu2=p.nu2, sigma=cfg.sigma,
                       eps=cfg.eps, gamma=cfg.gamma)


def make_discretization(cfg: RunConfig, nx=None, ny=None, k=None) -> Discretization:
    m = cfg.mesh
    mesh = build_mesh(nx or m.nx, ny or m.ny, bounds=tuple(m.bounds),
                      periodicity=(m.periodic_x, m.periodic_y))
    bc = {"bottom": m.bottom, "right": m.right, "top": m.top, "left": m.left}
    if m.periodic_x:
        bc["left"] = bc["right"] = "none"
    if m.periodic_y:
        bc["bottom"] = bc["top"] = "none"
    return Discretization(mesh, k or cfg.disc.k, bc=bc, quad_order=cfg.disc.quad_order,
                          alpha=cfg.disc.alpha)


def make_stepper(cfg: RunConfig, d: Discretization, params: PhaseParams, dt=None, force=None,
                 phase_source=None) -> Stepper:
    t = cfg.time
    sc = StepConfig(cfl=None if dt is not None else t.cfl, dt=dt if dt is not None else t.dt,
                    dt_max=t.dt_max, v_floor=t.v_floor, mobility_floor=cfg.phase.mobility_floor,
                    solver=cfg.disc.solver)
    if force is None:
        force = np.asarray(cfg.physics.g, dtype=float)
    return Stepper(d, params, sc, force=force, phase_source=phase_source)


def _fields(st: Stepper, s: SimState):
    return Field(st.d.W, s.phi), Field(st.d.Phi, s.xi)


def _prepare_out(cfg: RunConfig, out_dir):
    if out_dir is None:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(dump_config(cfg))
    return out


# ---------------------------------------------------------------------------
# manufactured convergence
# ---------------------------------------------------------------------------
@dataclass
class ConvergenceRow:
    k: int
    n: int
    steps: int
    dt: float
    err_u: float
    err_phi: float
    err_mu: float
    order_u: float = math.nan
    order_phi: float = math.nan
    order_mu: float = math.nan


def manufactured_errors(cfg: RunConfig, k: int, n: int, dt: float | None = None):
    """Run the manufactured problem on an n x n periodic mesh to convergence.t_end.

    Returns (steps, dt, err_u, err_phi, err_mu).  The chemical potential is a
    midpoint quantity, so it is compared with the exact field at t_N - dt/2.
    """
    params = phase_params(cfg)
    ms = manufactured(params)
    d = make_discretization(cfg, n, n, k)
    T = cfg.convergence.t_end
    if dt is None:
        power = cfg.convergence.dt_power or (k + 1) / 2
        dt = (1.0 / n) ** power
    steps = int(math.ceil(T / dt - 1e-9))
    dt = T / steps
    st = make_stepper(cfg, d, params, dt=dt, force=ms.f, phase_source=ms.f_phi)
    s = st.initialize(lambda x, y: ms.phi(0.0, x, y), lambda x, y: ms.stream(0.0, x, y))
    for _ in range(steps):
        s = st.advance(s)
    t = s.t
    e_u = pp.l2_error_velocity(Field(d.Phi, s.xi), lambda x, y: ms.u(t, x, y))
    e_phi = pp.l2_error(Field(d.W, s.phi), lambda x, y: ms.phi(t, x, y))
    e_mu = pp.l2_error(Field(d.W, s.mu), lambda x, y: ms.mu(t - 0.5 * dt, x, y))
    return steps, dt, e_u, e_phi, e_mu


def run_convergence(cfg: RunConfig, out_dir=None) -> list[ConvergenceRow]:
    out = _prepare_out(cfg, out_dir)
    rows = []
    for k in cfg.convergence.degrees:
        block = []
        for n in cfg.convergence.resolutions:
            steps, dt, eu, ep, em = manufactured_errors(cfg, k, n)
            row = ConvergenceRow(k, n, steps, dt, eu, ep, em)
            if block:
                prev = block[-1]
                r = math.log(n / prev.n)
                row.order_u = math.log(prev.err_u / eu) / r
                row.order_phi = math.log(prev.err_phi / ep) / r
                row.order_mu = math.log(prev.err_mu / em) / r
            block.append(row)
            log.info("k=%d 1/h=%d steps=%d  u %.3e (%.2f)  phi %.3e (%.2f)  mu %.3e (%.2f)",
                     k, n, steps, eu, row.order_u, ep, row.order_phi, em, row.order_mu)
        rows += block
    if out is not None:
        names = list(ConvergenceRow.__dataclass_fields__)
        lines = [",".join(names)]
        lines += [",".join(str(getattr(r, f)) if f in ("k", "n", "steps") else "%.10e" % getattr(r, f)
                           for f in names) for r in rows]
        (out / "convergence.csv").write_text("\n".join(lines) + "\n")
    return rows


def format_convergence(rows) -> str:
    out = [f"{'k':>2} {'1/h':>4} {'steps':>6} {'|u-uh|':>10} {'ord':>5} {'|phi-phih|':>10} {'ord':>5} "
           f"{'|mu-muh|':>10} {'ord':>5}"]
    for r in rows:
        def o(v):
            return "  -- " if math.isnan(v) else f"{v:5.2f}"
        out.append(f"{r.k:>2} {r.n:>4} {r.steps:>6} {r.err_u:10.3e} {o(r.order_u)} {r.err_phi:10.3e} "
                   f"{o(r.order_phi)} {r.err_mu:10.3e} {o(r.order_mu)}")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# time-dependent benchmarks
# ---------------------------------------------------------------------------
@dataclass
class RunResult:
    records: list
    summary: dict
    state: SimState
    stepper: Stepper
    samples: dict = field(default_factory=dict)


def _measure(cfg: RunConfig, st: Stepper, s: SimState, dt: float, vmax: float, with_region: bool):
    phi, xi = _fields(st, s)
    contour = pp.extract_contour(phi, 0.0, cfg.contour_m)
    rec = pp.BenchmarkRecord(t=s.t, dt=dt, vmax=vmax, mass=st.mass(s.phi))
    if not contour.is_empty:
        rec.y_bubble, rec.y_spike = pp.bubble_spike(contour)
    if with_region:
        try:
            rs = pp.region_stats(phi, xi, cfg.disc.region_points)
        except pp.EmptyRegionError:
            rs = None
        if rs is not None:
            rec.y_c, rec.V_c = rs.y_c, rs.V_c
            if contour.length > 0:
                rec.circularity = pp.circularity(phi, contour, n_points=cfg.disc.region_points)
    return rec


def _time_loop(cfg: RunConfig, st: Stepper, s: SimState, out, with_region: bool, stops=(),
               progress_every: int = 50):
    t_end = cfg.time.t_end
    stops = sorted(t for t in stops if 0 < t <= t_end + 1e-12)
    tol = 1e-9 * max(1.0, t_end)
    records = [_measure(cfg, st, s, 0.0, st.vmax(s.xi), with_region)]
    samples = {}
    if cfg.time.dt is not None:
        n_fixed = int(round(t_end / cfg.time.dt))
        if abs(n_fixed * cfg.time.dt - t_end) > tol:
            n_fixed = None
    else:
        n_fixed = None
    while True:
        if n_fixed is not None:
            if s.step >= n_fixed:
                break
            dt = cfg.time.dt
        else:
            if s.t >= t_end - tol:
                break
            dt = st.compute_dt(s)
            nxt = next((t for t in stops if t > s.t + tol), t_end)
            if s.t + dt > nxt - tol:
                dt = nxt - s.t
        s = st.advance(s, dt)
        rec = st.records[-1]
        hit = [t for t in stops if abs(s.t - t) <= tol or (n_fixed is not None and abs(s.t - t) < 0.5 * dt)]
        if s.step % cfg.output.series_every == 0 or hit or s.t >= t_end - tol:
            m = _measure(cfg, st, s, rec.dt, rec.vmax, with_region)
            records.append(m)
            for t in hit:
                samples[t] = m
        if out is not None and cfg.output.vtk_every and s.step % cfg.output.vtk_every == 0:
            phi, xi = _fields(st, s)
            pp.write_fields(out / f"fields_{s.step:06d}.vtk", phi, xi)
        if not np.all(np.isfinite(s.phi)) or not np.all(np.isfinite(s.xi)):
            raise FloatingPointError(f"non-finite fields at step {s.step} (t={s.t:.6g})")
        if progress_every and s.step % progress_every == 0:
            log.info("step %d t=%.4f dt=%.3e vmax=%.3e mass=%.12e", s.step, s.t, rec.dt, rec.vmax, rec.mass)
    if out is not None:
        pp.write_series(records, out / cfg.output.csv)
        phi, xi = _fields(st, s)
        pp.write_fields(out / "fields_final.vtk", phi, xi)
    return s, records, samples


def bubble_initial(eps: float, center=(0.5, 0.5), radius=0.25):
    def phi0(x, y):
        r = np.hypot(x - center[0], y - center[1])
        return np.tanh((r - radius) / (math.sqrt(2.0) * eps))
    return phi0


def summarize_bubble(records, t_window: float | None = None) -> dict:
    recs = [r for r in records if t_window is None or r.t <= t_window + 1e-9]
    t = np.array([r.t for r in recs])
    c = np.array([r.circularity for r in recs])
    v = np.array([r.V_c for r in recs])
    y = np.array([r.y_c for r in recs])
    ic, iv = int(np.nanargmin(c)), int(np.nanargmax(v))
    m0 = records[0].mass
    return {
        "c_min": float(c[ic]), "t_c_min": float(t[ic]),
        "V_c_max": float(v[iv]), "t_V_c_max": float(t[iv]),
        "y_c_final": float(y[-1]), "t_final": float(t[-1]),
        "max_mass_drift": float(max(abs(r.mass - m0) for r in records)),
        "steps": len(records) - 1,
    }


def run_bubble(cfg: RunConfig, out_dir=None) -> RunResult:
    if cfg.kind not in ("bubble1", "bubble2"):
        raise ValueError(f"run_bubble expects a bubble case, got {cfg.kind}")
    out = _prepare_out(cfg, out_dir)
    params = phase_params(cfg)
    d = make_discretization(cfg)
    st = make_stepper(cfg, d, params)
    s = st.initialize(bubble_initial(cfg.eps))
    log.info("%s: %dx%d elements, k=%d, eps=%.4g, gamma=%.3g, sigma=%.4g", cfg.kind, d.mesh.nx,
             d.mesh.ny, d.k, params.eps, params.gamma, params.sigma)
    s, records, _ = _time_loop(cfg, st, s, out, with_region=True)
    window = min(2.0, cfg.time.t_end) if cfg.kind == "bubble2" else None
    summary = summarize_bubble(records, window)
    summary["mass_initial"] = records[0].mass
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return RunResult(records, summary, s, st)


def rt_initial(eps: float, amp: float = 0.1):
    def phi0(x, y):
        return np.tanh((y + amp * np.cos(2 * np.pi * x)) / (math.sqrt(2.0) * eps))
    return phi0


def run_rt(cfg: RunConfig, out_dir=None) -> RunResult:
    if cfg.kind != "rayleigh-taylor":
        raise ValueError(f"run_rt expects the rayleigh-taylor case, got {cfg.kind}")
    out = _prepare_out(cfg, out_dir)
    params = phase_params(cfg)
    d = make_discretization(cfg)
    st = make_stepper(cfg, d, params)
    s = st.initialize(rt_initial(cfg.eps))
    log.info("rayleigh-taylor: %dx%d elements, k=%d, nu=%.4g, eps=%.4g, sigma=%.4g", d.mesh.nx,
             d.mesh.ny, d.k, params.nu1, params.eps, params.sigma)
    s, records, samples = _time_loop(cfg, st, s, out, with_region=False, stops=cfg.time.sample_times)
    summary = {
        "steps": s.step,
        "t_final": s.t,
        "samples": {f"{t:g}": {"y_bubble": r.y_bubble, "y_spike": r.y_spike} for t, r in sorted(samples.items())},
        "max_mass_drift": float(max(abs(r.mass - records[0].mass) for r in records)),
    }
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return RunResult(records, summary, s, st, samples)
