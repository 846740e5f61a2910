"""Manufactured solution on the periodic unit square and its source terms.

Exact fields:

    phi = sin(pi t) sin(2 pi x) sin(2 pi y)
    u   = 0.2 sin(pi t) (sin(2 pi x) cos(2 pi y), -cos(2 pi x) sin(2 pi y))
    mu  = sigma_tilde (W'(phi) / eps - eps lap(phi))

The sources are derived symbolically.  The momentum source absorbs the
pressure choice p = 0; any gradient added to it is invisible to a
divergence-free test space.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as s

from .materials import PhaseParams


def default_params() -> PhaseParams:
    eps = 0.04
    return PhaseParams(rho1=100.0, rho2=10.0, nu1=10.0, nu2=1.0, sigma=10.0, eps=eps, gamma=1e-3 * eps)


@dataclass
class ManufacturedSolution:
    phi: callable
    mu: callable
    u: callable  # returns (..., 2)
    stream: callable
    f_phi: callable
    f: callable  # returns (..., 2), already divided by rho(phi)


def _vec(fx, fy):
    def f(t, x, y):
        x = np.asarray(x, dtype=float)
        return np.stack(np.broadcast_arrays(fx(t, x, y), fy(t, x, y)), axis=-1)
    return f


def _scalar(fn):
    def f(t, x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(fn(t, x, y), np.broadcast(x, y).shape).astype(float)
    return f


@lru_cache(maxsize=8)
def manufactured(params: PhaseParams | None = None) -> ManufacturedSolution:
    p = params or default_params()
    t, x, y = s.symbols("t x y", real=True)
    pi = s.pi
    st = s.sin(pi * t)
    phi = st * s.sin(2 * pi * x) * s.sin(2 * pi * y)
    xi = 0.2 * st * s.sin(2 * pi * x) * s.sin(2 * pi * y) / (2 * pi)
    u1, u2 = s.diff(xi, y), -s.diff(xi, x)
    sig_t = s.Rational(3, 2) * p.sigma / s.sqrt(2)
    eps = s.Float(p.eps)
    lap = lambda g: s.diff(g, x, 2) + s.diff(g, y, 2)  # noqa: E731
    mu = sig_t * ((phi**3 - phi) / eps - eps * lap(phi))
    mob = p.gamma * (phi**2 - 1) ** 2
    f_phi = (s.diff(phi, t) + u1 * s.diff(phi, x) + u2 * s.diff(phi, y)
             - s.diff(mob * s.diff(mu, x), x) - s.diff(mob * s.diff(mu, y), y))

    rho = p.rho1 * (1 + phi) / 2 + p.rho2 * (1 - phi) / 2
    nu = p.nu1 * (1 + phi) / 2 + p.nu2 * (1 - phi) / 2
    grad = lambda g: (s.diff(g, x), s.diff(g, y))  # noqa: E731
    gu = [grad(u1), grad(u2)]
    D = [[(gu[i][j] + gu[j][i]) / 2 for j in range(2)] for i in range(2)]
    vel = (u1, u2)
    F = []
    for i in range(2):
        acc = s.diff(vel[i], t) + vel[0] * gu[i][0] + vel[1] * gu[i][1]
        visc = s.diff(2 * nu * D[i][0], x) + s.diff(2 * nu * D[i][1], y)
        F.append((rho * acc - visc - mu * grad(phi)[i]) / rho)

    lam = lambda e: s.lambdify((t, x, y), e, "numpy")  # noqa: E731
    return ManufacturedSolution(
        phi=_scalar(lam(phi)),
        mu=_scalar(lam(mu)),
        u=_vec(lam(u1), lam(u2)),
        stream=_scalar(lam(xi)),
        f_phi=_scalar(lam(f_phi)),
        f=_vec(lam(F[0]), lam(F[1])),
    )
