"""Gauss quadrature, nodal Lagrange bases and the edge L2 projection.

Everything lives on the reference interval [0, 1] or square [0, 1]^2.
Element bases are tensor products of 1D Lagrange polynomials on
Gauss-Lobatto nodes; local index ``a = i + (m + 1) * j`` with ``i`` along x.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L


@dataclass(frozen=True)
class QuadRule1D:
    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def exactness(self) -> int:
        return 2 * self.n - 1

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)))


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadRule1D:
    """n-point Gauss-Legendre rule on [0, 1], exact to degree 2n-1."""
    if n < 1:
        raise ValueError(f"need at least one quadrature point, got n={n}")
    x, w = L.leggauss(n)
    pts, wts = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule1D(pts, wts)


def tensor_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on [0,1]^2: points (n*n, 2) with x fastest, weights (n*n,)."""
    r = gauss_rule(n)
    X, Y = np.meshgrid(r.points, r.points)
    WX, WY = np.meshgrid(r.weights, r.weights)
    return np.stack([X.ravel(), Y.ravel()], axis=-1), (WX * WY).ravel()


@lru_cache(maxsize=None)
def gll_nodes(m: int) -> np.ndarray:
    """The m+1 Gauss-Lobatto nodes on [0, 1]; the midpoint for m = 0."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    if m == 0:
        return np.array([0.5])
    interior = L.Legendre.basis(m).deriv().roots() if m > 1 else np.array([])
    x = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    return 0.5 * (x + 1.0)


class Lagrange1D:
    """Lagrange basis of degree m on the Gauss-Lobatto nodes of [0, 1]."""

    def __init__(self, m: int):
        self.m = m
        self.nodes = gll_nodes(m)
        V = L.legvander(2.0 * self.nodes - 1.0, m)
        # column i holds the Legendre coefficients of the i-th cardinal function
        self.coef = np.linalg.inv(V)

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        """Values of the d-th derivative, shape (len(x), m + 1)."""
        t = 2.0 * np.asarray(x, dtype=float) - 1.0
        c = self.coef
        if deriv:
            c = L.legder(c, deriv, axis=0) * 2.0**deriv
            if c.shape[0] == 0:
                return np.zeros((np.size(t), self.m + 1))
        return np.atleast_2d(L.legval(t, c).T) if np.ndim(t) else L.legval(t, c)[None, :]


@lru_cache(maxsize=None)
def lagrange1d(m: int) -> Lagrange1D:
    return Lagrange1D(m)


@dataclass(frozen=True)
class BasisTable:
    """Values, reference gradients and (optionally) Hessians of a nodal basis.

    values: (n_pts, n_basis); grads: (n_pts, n_basis, dim);
    hessians: (n_pts, n_basis, 2, 2) for element bases, None otherwise.
    """

    degree: int
    values: np.ndarray
    grads: np.ndarray
    hessians: np.ndarray | None = None

    @property
    def n_basis(self) -> int:
        return self.values.shape[1]


def eval_element_basis(k: int, points2d, hessian: bool = False) -> BasisTable:
    """Tensor-product Q^k Lagrange basis at reference points (n, 2)."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    p = np.atleast_2d(np.asarray(points2d, dtype=float))
    lag = lagrange1d(k)
    vx, vy = lag(p[:, 0]), lag(p[:, 1])
    dx, dy = lag(p[:, 0], 1), lag(p[:, 1], 1)
    # a = i + (k+1) j  ->  outer product with y index slow
    def tp(a, b):
        return np.einsum("pj,pi->pji", b, a).reshape(len(p), -1)

    values = tp(vx, vy)
    grads = np.stack([tp(dx, vy), tp(vx, dy)], axis=-1)
    hess = None
    if hessian:
        dxx, dyy = lag(p[:, 0], 2), lag(p[:, 1], 2)
        hxy = tp(dx, dy)
        hess = np.stack(
            [np.stack([tp(dxx, vy), hxy], axis=-1), np.stack([hxy, tp(vx, dyy)], axis=-1)],
            axis=-2,
        )
    return BasisTable(k, values, grads, hess)


def eval_edge_basis(k: int, points1d) -> BasisTable:
    """P^k Lagrange basis on [0, 1] at the given points; grads has shape (n, k+1, 1)."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    lag = lagrange1d(k)
    s = np.atleast_1d(np.asarray(points1d, dtype=float))
    return BasisTable(k, lag(s), lag(s, 1)[..., None])


class EdgeProjector:
    """L2(F) projection onto P^target(F) from samples at quadrature points.

    Inputs are assumed to be polynomials of degree <= target + 2 (the
    tangential trace of the stream-function velocity), so the rule must
    integrate degree 2 * target + 2 exactly.
    """

    def __init__(self, target_degree: int, rule: QuadRule1D):
        if rule.exactness < 2 * target_degree + 2:
            raise ValueError(
                f"{rule.n}-point rule is too weak for projection onto P^{target_degree}"
            )
        self.target_degree = target_degree
        self.rule = rule
        self.theta = eval_edge_basis(target_degree, rule.points).values
        gram = self.theta.T @ (rule.weights[:, None] * self.theta)
        # samples -> coefficients
        self.to_coeffs = np.linalg.solve(gram, self.theta.T * rule.weights)
        # samples -> projected samples
        self.matrix = self.theta @ self.to_coeffs

    def __call__(self, samples) -> np.ndarray:
        """Coefficients of the projection; samples along the last-but-zero axis 0."""
        return self.to_coeffs @ np.asarray(samples)


def project_edge(target_degree: int, samples_at_quadrature, rule: QuadRule1D | None = None) -> np.ndarray:
    samples = np.asarray(samples_at_quadrature, dtype=float)
    if rule is None:
        rule = gauss_rule(samples.shape[0])
    return EdgeProjector(target_degree, rule)(samples)
