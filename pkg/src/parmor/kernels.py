"""Sparse numerical kernels shared by the reduction engines.

Everything in :mod:`parmor.reducers` is assembled from four primitives:
a sparse LU factorization that also supports transpose solves (so the
adjoint operator ``-G0^-T C0^T`` reuses the one factorization of
``G0``), raw block-Krylov chains, block Gram-Schmidt with deflation,
and a matrix-implicit randomized truncated SVD.

A process-wide :data:`STATS` counter records factorizations, solves and
operator applications. Engines snapshot it around a run so every
reduced model can prove its cost profile (for example: a low-rank
reduction performs exactly one factorization regardless of the number
of parameters).

Reference computations stay out of this module on purpose: the oracles
in :mod:`parmor.analysis` and in the test suite use dense LAPACK paths,
keeping implementation and oracle independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "STATS",
    "KernelStats",
    "SingularMatrixError",
    "LuFactors",
    "lu_factor",
    "solve",
    "solve_transpose",
    "block_orthonormalize",
    "krylov_block",
    "LowRankFactor",
    "implicit_truncated_svd",
]


class SingularMatrixError(RuntimeError):
    """Factorization hit an exactly (or numerically) singular matrix."""

    def __init__(self, message, column=None, node_names=None):
        super().__init__(message)
        self.column = column
        self.node_names = tuple(node_names) if node_names else ()


@dataclass
class KernelStats:
    """Process-wide operation counters for cost-profile assertions."""

    factorizations: int = 0
    solves: int = 0
    transpose_solves: int = 0
    operator_applies: int = 0

    def snapshot(self):
        return {
            "factorizations": self.factorizations,
            "solves": self.solves,
            "transpose_solves": self.transpose_solves,
            "operator_applies": self.operator_applies,
        }

    def delta(self, before):
        now = self.snapshot()
        return {key: now[key] - before[key] for key in now}


STATS = KernelStats()


def _diagnose_singular_column(matrix):
    """Best-effort zero-pivot column index for an error message.

    Dense elimination is affordable at the scale this package targets;
    above that we report singularity without a column.
    """
    n = matrix.shape[0]
    if n > 2000:
        return None
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    _, _, u = scipy.linalg.lu(dense)
    diag = np.abs(np.diag(u))
    scale = diag.max() if diag.size else 0.0
    bad = np.nonzero(diag <= 1e-14 * max(scale, 1e-300))[0]
    return int(bad[0]) if bad.size else None


class LuFactors:
    """Sparse LU factors of a square matrix with transpose-solve support.

    Wraps SuperLU with a fill-reducing column ordering. Construction
    counts as one factorization in :data:`STATS` whether or not it
    succeeds, so attempted factorizations are visible to cost tests.
    """

    def __init__(self, matrix):
        STATS.factorizations += 1
        mat = sp.csc_matrix(matrix, dtype=float)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"matrix must be square, got shape {mat.shape}")
        self.n = mat.shape[0]
        try:
            self._lu = spla.splu(mat)
        except RuntimeError as exc:
            column = _diagnose_singular_column(mat)
            msg = f"matrix of order {self.n} is singular"
            if column is not None:
                msg += f" (zero pivot in column {column})"
            raise SingularMatrixError(msg, column=column) from exc

    def solve(self, rhs):
        """Solve A x = rhs for a dense vector or block rhs."""
        STATS.solves += 1
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def solve_transpose(self, rhs):
        """Solve A^T x = rhs, reusing the same factors."""
        STATS.transpose_solves += 1
        return self._lu.solve(np.asarray(rhs, dtype=float), trans="T")


def lu_factor(matrix) -> LuFactors:
    """Factor a square sparse matrix once; raises SingularMatrixError."""
    return LuFactors(matrix)


def solve(factors: LuFactors, rhs):
    return factors.solve(rhs)


def solve_transpose(factors: LuFactors, rhs):
    return factors.solve_transpose(rhs)


def _as_block(array):
    block = np.asarray(array, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    if block.ndim != 2:
        raise ValueError(f"expected a vector or 2-D block, got ndim={block.ndim}")
    return block


def block_orthonormalize(blocks, defl_tol=1e-10):
    """Orthonormalize an ordered list of n x k_i blocks with deflation.

    Classical Gram-Schmidt against the accumulated basis, applied twice,
    followed by a rank-revealing SVD inside each block. Columns are
    normalized first, so ``defl_tol`` is relative to each column's own
    norm: directions whose residual falls below it are deflated, zero
    columns silently so. Deterministic for a fixed input order.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks to orthonormalize")
    n = _as_block(blocks[0]).shape[0]
    basis = np.empty((n, 0))
    for raw in blocks:
        work = _as_block(raw)
        if work.shape[0] != n:
            raise ValueError("blocks disagree on row dimension")
        norms = np.linalg.norm(work, axis=0)
        live = norms > 0.0
        if not live.any():
            continue
        work = work[:, live] / norms[live]
        if basis.shape[1]:
            for _ in range(2):
                work = work - basis @ (basis.T @ work)
        left, sing, _ = np.linalg.svd(work, full_matrices=False)
        keep = sing > defl_tol
        if keep.any():
            basis = np.hstack([basis, left[:, keep]])
    return basis


def krylov_block(apply_a, seed_block, depth):
    """Return the raw chain [R, A R, ..., A^depth R] as a list of blocks.

    ``apply_a`` maps an n x k block to an n x k block; orthonormalization
    is the caller's job.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    current = _as_block(seed_block)
    chain = [current]
    for _ in range(depth):
        current = _as_block(apply_a(current))
        chain.append(current)
    return chain


@dataclass(frozen=True)
class LowRankFactor:
    """Truncated SVD of an implicit operator M ~= u_hat @ v_hat.T.

    ``u_hat`` carries the singular values (columns are sigma_j * u_j),
    ``v_hat`` has orthonormal columns, ``sigma`` is non-increasing and
    strictly positive. ``target`` is a free-form label of the operator
    the factor approximates.
    """

    u_hat: np.ndarray
    v_hat: np.ndarray
    sigma: np.ndarray
    target: str = ""

    @property
    def rank(self):
        return int(self.sigma.size)

    def matrix(self):
        """Dense reconstruction u_hat @ v_hat.T (test/oracle use)."""
        if self.rank == 0:
            n = self.u_hat.shape[0]
            return np.zeros((n, self.v_hat.shape[0]))
        return self.u_hat @ self.v_hat.T


def _empty_factor(n, target):
    return LowRankFactor(
        u_hat=np.zeros((n, 0)),
        v_hat=np.zeros((n, 0)),
        sigma=np.zeros(0),
        target=target,
    )


def _orth(block):
    q, _ = np.linalg.qr(block)
    return q


def implicit_truncated_svd(apply_m, apply_mt, n, rank, iters=6, oversample=4,
                           seed=0, target=""):
    """Randomized truncated SVD of an operator given only by its action.

    Subspace iteration with Gaussian sketching: ``iters`` power steps
    with re-orthonormalization, then an exact SVD of the projected
    matrix. Deterministic for a fixed seed. Singular vectors follow a
    sign convention (largest-magnitude entry of each right vector is
    positive), though verification should compare subspaces rather than
    raw vectors. Trailing singular values below 1e-13 of sigma_1 are
    dropped, so the returned rank can be smaller than requested; an
    operator whose sketch vanishes yields a rank-0 factor.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    width = min(n, rank + oversample)
    rng = np.random.default_rng(seed)
    sketch = rng.standard_normal((n, width))
    probe = _as_block(apply_m(sketch))
    if not np.any(probe):
        return _empty_factor(n, target)
    left = _orth(probe)
    for _ in range(iters):
        right = _orth(_as_block(apply_mt(left)))
        left = _orth(_as_block(apply_m(right)))
    # B = Q^T M recovered through the adjoint: B^T = M^T Q.
    bt = _as_block(apply_mt(left))
    u_small, sigma, vt = np.linalg.svd(bt.T, full_matrices=False)
    keep = min(rank, sigma.size)
    cutoff = 1e-13 * sigma[0] if sigma.size else 0.0
    while keep > 0 and sigma[keep - 1] <= cutoff:
        keep -= 1
    if keep == 0:
        return _empty_factor(n, target)
    u = left @ u_small[:, :keep]
    v = vt[:keep].T
    sigma = sigma[:keep].copy()
    for j in range(keep):
        anchor = np.argmax(np.abs(v[:, j]))
        if v[anchor, j] < 0.0:
            v[:, j] = -v[:, j]
            u[:, j] = -u[:, j]
    return LowRankFactor(
        u_hat=u * sigma,
        v_hat=v,
        sigma=sigma,
        target=target,
    )
