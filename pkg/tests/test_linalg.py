import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from chns.forms import BlockSystem
from chns.linalg import (
    SingularBlockError,
    SolverError,
    available_backends,
    condense,
    export_matrix_market,
    nested_dissection,
    recover,
    solve,
    solve_blocks,
)


def poisson_1d_blocks(n_el):
    """Linear FEM for -u'' = 1 on (0, 1), u(0) = u(1) = 0, one midpoint bubble per element.

    Local order [bubble, left, right]; the midpoint node is the interior DOF.
    """
    h = 1.0 / n_el
    # quadratic Lagrange element on nodes (mid, left, right)
    K = np.array([[16, -8, -8], [-8, 7, 1], [-8, 1, 7]]) / (3 * h)
    b = np.array([4, 1, 1]) * h / 6
    skel = np.stack([np.arange(n_el) - 1, np.arange(n_el)], axis=1)
    skel[skel == n_el - 1] = -1
    return BlockSystem(np.repeat(K[None], n_el, 0), np.repeat(b[None], n_el, 0),
                       np.array([0]), np.array([1, 2]), skel, n_el - 1)


def test_identity_blocks():
    n = 5
    K = np.repeat(np.eye(2)[None], n, 0)
    b = np.arange(2 * n, dtype=float).reshape(n, 2)
    bs = BlockSystem(K, b, np.array([0]), np.array([1]), np.arange(n)[:, None], n)
    loc, xs, res = solve_blocks(bs)
    np.testing.assert_allclose(loc, b)
    np.testing.assert_allclose(xs, b[:, 1])
    assert res == 0.0


@pytest.mark.parametrize("backend", available_backends())
def test_poisson_nodal_exact(backend):
    """Quadratic FEM is nodally exact for u = x (1 - x) / 2."""
    n = 8
    bs = poisson_1d_blocks(n)
    loc, xs, res = solve_blocks(bs, backend=backend)
    x = np.arange(1, n) / n
    np.testing.assert_allclose(xs, x * (1 - x) / 2, atol=1e-13)
    mids = (np.arange(n) + 0.5) / n
    np.testing.assert_allclose(loc[:, 0], mids * (1 - mids) / 2, atol=1e-13)
    assert res < 1e-13


def test_condensed_equals_uncondensed():
    bs = poisson_1d_blocks(6)
    A, rhs = bs.to_dense()
    x = np.linalg.solve(A, rhs)
    loc, _, _ = solve_blocks(bs)
    ids = bs.global_ids()
    ref = np.where(ids >= 0, x[np.maximum(ids, 0)], 0.0)
    np.testing.assert_allclose(loc, ref, atol=1e-14)


def test_schur_complement_formula():
    rng = np.random.default_rng(0)
    K = rng.normal(size=(1, 4, 4)) + 4 * np.eye(4)
    bs = BlockSystem(K, rng.normal(size=(1, 4)), np.array([0, 1]), np.array([2, 3]),
                     np.array([[0, 1]]), 2)
    cs = condense(bs)
    A = K[0]
    S = A[2:, 2:] - A[2:, :2] @ np.linalg.solve(A[:2, :2], A[:2, 2:])
    np.testing.assert_allclose(cs.S.toarray(), S, atol=1e-13)
    xs = np.linalg.solve(S, cs.g)
    full = recover(cs, xs)[0]
    np.testing.assert_allclose(A @ full, bs.b[0], atol=1e-12)


def test_singular_block_names_element():
    K = np.repeat(np.eye(3)[None], 4, 0)
    K[2, 0, 0] = 0.0
    bs = BlockSystem(K, np.ones((4, 3)), np.array([0, 1]), np.array([2]), np.arange(4)[:, None], 4)
    with pytest.raises(SingularBlockError) as info:
        condense(bs)
    assert info.value.element == 2
    assert "element 2" in str(info.value)


def test_zero_matrix_rejected():
    with pytest.raises(SolverError):
        solve(sp.csr_matrix((3, 3)), np.ones(3), backend="superlu")


def test_non_square_rejected():
    with pytest.raises(SolverError):
        solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(sp.eye(2), np.ones(2), backend="magic")


def test_empty_system():
    assert solve(sp.csr_matrix((0, 0)), np.zeros(0)).shape == (0,)


@pytest.mark.parametrize("use_perm", [False, True])
def test_superlu_paths_agree(use_perm):
    rng = np.random.default_rng(1)
    A = sp.random(40, 40, density=0.1, random_state=2) + 5 * sp.eye(40)
    b = rng.normal(size=40)
    perm = rng.permutation(40) if use_perm else None
    x = solve(A, b, perm=perm, backend="superlu")
    np.testing.assert_allclose(A @ x, b, atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 9), ny=st.integers(1, 9), per=st.booleans(), leaf=st.integers(1, 40))
def test_nested_dissection_is_permutation(nx, ny, per, leaf):
    e = np.arange(nx * ny)
    ij = np.stack([e % nx, e // nx], 1)
    # vertex unknowns of a quad mesh, optionally wrapped in x
    vx = nx if per else nx + 1
    i, j = ij[:, 0], ij[:, 1]
    corners = [(i, j), ((i + 1), j), (i, j + 1), (i + 1, j + 1)]
    skel = np.stack([(a % vx) + vx * b for a, b in corners], 1)
    n = vx * (ny + 1)
    perm = nested_dissection(skel, n, ij, leaf=leaf)
    assert sorted(perm.tolist()) == list(range(n))


def test_nested_dissection_separator_last():
    nx = ny = 8
    e = np.arange(nx * ny)
    ij = np.stack([e % nx, e // nx], 1)
    i, j = ij[:, 0], ij[:, 1]
    skel = np.stack([(a + 9 * b) for a, b in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]], 1)
    perm = nested_dissection(skel, 81, ij, leaf=4)
    # the top-level separator is the vertex column x = 4
    np.testing.assert_array_equal(np.sort(perm[-9:]), 4 + 9 * np.arange(9))


def test_matrix_market_export(tmp_path):
    from scipy.io import mmread

    A = sp.random(6, 6, density=0.4, random_state=0)
    export_matrix_market(tmp_path / "a.mtx", A, comment="test")
    np.testing.assert_allclose(mmread(str(tmp_path / "a.mtx")).toarray(), A.toarray())
