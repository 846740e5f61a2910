"""Static condensation, sparse direct solves and interior recovery."""
from __future__ import annotations

import glob
import os
import sys
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from .forms import BlockSystem


_PARDISO = None


def _find_mkl_rt():
    for root in (os.path.join(sys.prefix, "lib"), "/usr/local/lib", "/usr/lib"):
        hits = sorted(glob.glob(os.path.join(root, "libmkl_rt.so*")))
        if hits:
            return hits[-1]
    return None


def _pardiso():
    """The optional PARDISO backend module, or None when it cannot be loaded."""
    global _PARDISO
    if _PARDISO is None:
        _PARDISO = False
        if "PYPARDISO_MKL_RT" not in os.environ:
            lib = _find_mkl_rt()
            if lib:
                os.environ["PYPARDISO_MKL_RT"] = lib
        try:
            import pypardiso
            _PARDISO = pypardiso
        except (ImportError, OSError):
            pass
    return _PARDISO or None


def available_backends() -> list[str]:
    return (["pardiso"] if _pardiso() is not None else []) + ["superlu"]


class SolverError(RuntimeError):
    pass


class SingularBlockError(SolverError):
    def __init__(self, element, msg=""):
        self.element = int(element)
        super().__init__(f"interior block of element {self.element} is singular{msg}")


@dataclass
class CondensedSystem:
    S: sp.csr_matrix
    g: np.ndarray
    # per-element recovery data: x_I = xb - XS @ x_S_local
    XS: np.ndarray
    xb: np.ndarray
    blocks: BlockSystem


def _assemble_skeleton(S_loc, g_loc, skel_dofs, n):
    rows = np.broadcast_to(skel_dofs[:, :, None], S_loc.shape)
    cols = np.broadcast_to(skel_dofs[:, None, :], S_loc.shape)
    keep = (rows >= 0) & (cols >= 0)
    S = sp.csr_matrix((S_loc[keep], (rows[keep], cols[keep])), shape=(n, n))
    S.sum_duplicates()
    g = np.zeros(n)
    kb = skel_dofs >= 0
    np.add.at(g, skel_dofs[kb], g_loc[kb])
    return S, g


def _batched_solve(A, B):
    try:
        X = np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        X = None
    if X is None or not np.all(np.isfinite(X)):
        for e in range(A.shape[0]):
            try:
                xe = np.linalg.solve(A[e], B[e])
            except np.linalg.LinAlgError:
                raise SingularBlockError(e) from None
            if not np.all(np.isfinite(xe)):
                raise SingularBlockError(e, " (non-finite solution)")
    return X


def condense(blocks: BlockSystem) -> CondensedSystem:
    """Eliminate element interiors: S = A_SS - A_SI A_II^-1 A_IS."""
    AII, AIS, ASI, ASS, bI, bS = blocks.blocks()
    nS = AIS.shape[2]
    if AII.shape[1] == 0:
        XS = np.zeros((blocks.n_elements, 0, nS))
        xb = np.zeros((blocks.n_elements, 0))
        S_loc, g_loc = ASS, bS
    else:
        X = _batched_solve(AII, np.concatenate([AIS, bI[:, :, None]], axis=2))
        XS, xb = X[:, :, :nS], X[:, :, nS]
        S_loc = ASS - ASI @ XS
        g_loc = bS - np.einsum("eij,ej->ei", ASI, xb)
    S, g = _assemble_skeleton(S_loc, g_loc, blocks.skel_dofs, blocks.n_skel)
    return CondensedSystem(S, g, XS, xb, blocks)


def nested_dissection(skel_dofs, n_skel: int, elem_ij, leaf: int = 64) -> np.ndarray:
    """Fill-reducing ordering of skeleton unknowns by recursive element bisection.

    ``elem_ij`` holds the integer (i, j) lattice position of each element.  A
    skeleton unknown goes into the separator of the first bisection that
    splits the elements it touches, so unknowns on periodic seams end up in
    the top-level separator.
    """
    elem_ij = np.asarray(elem_ij, dtype=int)
    sd = np.asarray(skel_dofs)
    big = np.iinfo(int).max
    lo = np.full((n_skel, 2), big)
    hi = np.full((n_skel, 2), -1)
    for c in range(sd.shape[1]):
        m = sd[:, c] >= 0
        np.minimum.at(lo, sd[m, c], elem_ij[m])
        np.maximum.at(hi, sd[m, c], elem_ij[m])
    order = []

    def rec(dofs, box):
        ext = (box[1] - box[0], box[3] - box[2])
        if len(dofs) <= leaf or max(ext) <= 1:
            order.append(dofs)
            return
        ax = 0 if ext[0] >= ext[1] else 1
        mid = (box[2 * ax] + box[2 * ax + 1]) // 2
        left = hi[dofs, ax] < mid
        right = lo[dofs, ax] >= mid
        lbox, rbox = list(box), list(box)
        lbox[2 * ax + 1] = mid
        rbox[2 * ax] = mid
        rec(dofs[left], lbox)
        rec(dofs[right], rbox)
        order.append(dofs[~left & ~right])

    box = [elem_ij[:, 0].min(), elem_ij[:, 0].max() + 1, elem_ij[:, 1].min(), elem_ij[:, 1].max() + 1]
    rec(np.arange(n_skel), box)
    perm = np.concatenate(order) if order else np.zeros(0, dtype=int)
    if len(perm) != n_skel:
        raise SolverError("nested dissection lost unknowns")
    return perm


def _residual_ok(S, x, g, normS):
    r = np.linalg.norm(S @ x - g)
    bound = 1e-10 * (normS * np.linalg.norm(x) + np.linalg.norm(g))
    return r <= bound or r == 0, r, bound


def solve(S, g, check: bool = True, perm=None, backend: str = "auto") -> np.ndarray:
    """Sparse LU solve with a relative residual check.

    ``backend`` is "pardiso", "superlu" or "auto" (PARDISO when installed).
    Any PARDISO failure falls through to SuperLU.  With ``perm`` the matrix is factorised in that symmetric ordering with
    relaxed pivoting; one step of iterative refinement follows, and a
    residual failure falls back to a COLAMD factorisation with partial
    pivoting.
    """
    S = sp.csc_matrix(S)
    g = np.asarray(g, dtype=float)
    if S.shape[0] != S.shape[1]:
        raise SolverError(f"matrix is not square: {S.shape}")
    if S.shape[0] == 0:
        return np.zeros(0)
    normS = spla.norm(S, 1)
    if backend not in ("auto", "pardiso", "superlu"):
        raise ValueError(f"unknown solver backend {backend!r}")
    if backend != "superlu":
        par = _pardiso()
        if par is None and backend == "pardiso":
            raise SolverError("PARDISO backend requested but pypardiso is not importable")
        if par is not None:
            try:
                x = par.spsolve(sp.csr_matrix(S), g)
            except Exception:  # noqa: BLE001 - any backend failure falls back
                x = None
            if x is not None and np.all(np.isfinite(x)):
                if not check or _residual_ok(S, x, g, normS)[0]:
                    return x
    if perm is not None:
        perm = np.asarray(perm)
        Sp = S[perm][:, perm].tocsc()
        try:
            lu = spla.splu(Sp, permc_spec="NATURAL", diag_pivot_thresh=0.01)
            x = np.empty_like(g)
            x[perm] = lu.solve(g[perm])
            x[perm] += lu.solve((g - S @ x)[perm])
        except RuntimeError:
            x = None
        if x is not None and np.all(np.isfinite(x)):
            if not check or _residual_ok(S, x, g, normS)[0]:
                return x
    try:
        x = spla.splu(S).solve(g)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorisation failed ({S.shape[0]} unknowns): {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse solve produced non-finite values")
    if check:
        ok, r, bound = _residual_ok(S, x, g, normS)
        if not ok:
            raise SolverError(f"residual {r:.3e} exceeds tolerance {bound:.3e}")
    return x


def recover(cs: CondensedSystem, x_skel: np.ndarray) -> np.ndarray:
    """Full local solution vectors (n_el, n_local) from the skeleton solution."""
    blocks = cs.blocks
    if cs.XS is None:
        raise SolverError("condensed system carries no recovery data")
    sd = blocks.skel_dofs
    xs_loc = np.where(sd >= 0, np.asarray(x_skel)[np.maximum(sd, 0)], 0.0)
    out = np.zeros(blocks.b.shape)
    out[:, blocks.skeleton] = xs_loc
    if len(blocks.interior):
        out[:, blocks.interior] = cs.xb - np.einsum("eij,ej->ei", cs.XS, xs_loc)
    return out


def solve_blocks(blocks: BlockSystem, perm=None, backend: str = "auto"):
    """Condense, solve and recover.

    Returns (local solution, skeleton solution, relative skeleton residual).
    """
    cs = condense(blocks)
    xs = solve(cs.S, cs.g, perm=perm, backend=backend)
    gn = np.linalg.norm(cs.g)
    res = float(np.linalg.norm(cs.S @ xs - cs.g) / gn) if gn > 0 else 0.0
    return recover(cs, xs), xs, res


def export_matrix_market(path, A, comment: str = "") -> None:
    mmwrite(str(path), sp.coo_matrix(A), comment=comment)
