"""The symbolic sources are checked against a finite-difference oracle."""
import numpy as np
import pytest

from chns.materials import density, double_well, mobility, viscosity
from chns.manufactured import default_params, manufactured

P = default_params()
MS = manufactured(P)
H = 1e-3


def d(f, i, h=H):
    """Fourth-order central difference of f(t, x, y) in argument i."""
    def g(*a):
        def at(s):
            b = list(a)
            b[i] = b[i] + s
            return f(*b)
        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    return g


def comp(f, c):
    return lambda *a: f(*a)[..., c]


@pytest.fixture(scope="module")
def pts():
    rng = np.random.default_rng(0)
    return 0.1 + 0.8 * rng.random(6), rng.random(6), rng.random(6)


def test_velocity_is_curl_of_stream_and_divergence_free(pts):
    t, x, y = pts
    np.testing.assert_allclose(MS.u(t, x, y)[..., 0], d(MS.stream, 2)(t, x, y), atol=1e-10)
    np.testing.assert_allclose(MS.u(t, x, y)[..., 1], -d(MS.stream, 1)(t, x, y), atol=1e-10)
    div = d(comp(MS.u, 0), 1)(t, x, y) + d(comp(MS.u, 1), 2)(t, x, y)
    np.testing.assert_allclose(div, 0.0, atol=1e-9)


def test_chemical_potential_definition(pts):
    t, x, y = pts
    phi = MS.phi(t, x, y)
    lap = d(d(MS.phi, 1), 1)(t, x, y) + d(d(MS.phi, 2), 2)(t, x, y)
    want = P.sigma_tilde * (double_well(phi)[1] / P.eps - P.eps * lap)
    np.testing.assert_allclose(MS.mu(t, x, y), want, rtol=1e-6, atol=1e-6)


def test_phase_source(pts):
    t, x, y = pts
    u = MS.u(t, x, y)

    def flux(i):
        return lambda *a: mobility(MS.phi(*a), P.gamma) * d(MS.mu, i)(*a)

    div_flux = d(flux(1), 1)(t, x, y) + d(flux(2), 2)(t, x, y)
    res = (d(MS.phi, 0)(t, x, y) + u[..., 0] * d(MS.phi, 1)(t, x, y) + u[..., 1] * d(MS.phi, 2)(t, x, y)
           - div_flux)
    np.testing.assert_allclose(MS.f_phi(t, x, y), res, rtol=1e-5, atol=1e-7)


def test_momentum_source(pts):
    t, x, y = pts
    phi = MS.phi(t, x, y)
    rho, u = density(phi, P), MS.u(t, x, y)

    def stress(i, j):
        def s(*a):
            gij = d(comp(MS.u, i), j + 1)(*a)
            gji = d(comp(MS.u, j), i + 1)(*a)
            return viscosity(MS.phi(*a), P) * (gij + gji)
        return s

    for i in range(2):
        ui = comp(MS.u, i)
        acc = d(ui, 0)(t, x, y) + u[..., 0] * d(ui, 1)(t, x, y) + u[..., 1] * d(ui, 2)(t, x, y)
        visc = d(stress(i, 0), 1)(t, x, y) + d(stress(i, 1), 2)(t, x, y)
        cap = MS.mu(t, x, y) * d(MS.phi, i + 1)(t, x, y)
        np.testing.assert_allclose(MS.f(t, x, y)[..., i], (rho * acc - visc - cap) / rho, rtol=1e-5, atol=1e-5)


def test_periodic_and_initially_at_rest():
    x = np.linspace(0, 1, 7)
    np.testing.assert_allclose(MS.phi(0.3, x, 0.0), MS.phi(0.3, x, 1.0), atol=1e-14)
    np.testing.assert_allclose(MS.u(0.3, 0.0, x), MS.u(0.3, 1.0, x), atol=1e-14)
    np.testing.assert_allclose(MS.u(0.0, x, x), 0.0, atol=1e-15)
