"""Minimal linear algebra: scalar, dense vector and fixed-pattern CSR matrix,
plus CG / BiCGStab (optionally Jacobi preconditioned) and a dense LU solve."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from femkit.errors import (IndexOutOfRange, MissingPattern, NoConvergence, OutsidePattern,
                           ShapeMismatch, SingularMatrix)

log = logging.getLogger(__name__)

LU_MAX_SIZE = 2000
REORTHOGONALIZE_MAX_SIZE = 2000


@dataclass(frozen=True)
class SparsityPattern:
    """Compressed-row nonzero structure with sorted unique columns per row."""

    indptr: np.ndarray
    indices: np.ndarray
    shape: tuple

    @classmethod
    def from_keys(cls, keys, nrows, ncols):
        """Pattern from flat ``row * ncols + col`` keys (duplicates allowed)."""
        keys = np.unique(np.asarray(keys, dtype=np.int64))
        rows, cols = np.divmod(keys, ncols)
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=indptr[1:])
        return cls(indptr, cols.astype(np.int64), (int(nrows), int(ncols)))

    @classmethod
    def from_rows(cls, rows, ncols=None):
        """Pattern from a list of per-row column iterables."""
        ncols = (max((max(r) for r in rows if len(r)), default=-1) + 1) if ncols is None else ncols
        keys = [i * ncols + np.asarray(list(r), dtype=np.int64) for i, r in enumerate(rows)]
        keys = np.concatenate(keys) if keys else np.zeros(0, dtype=np.int64)
        return cls.from_keys(keys, len(rows), ncols)

    @property
    def nnz(self):
        return len(self.indices)

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def keys(self):
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return rows * self.shape[1] + self.indices

    def rows(self):
        return [self.row(i) for i in range(self.shape[0])]


class GenericTensor:
    rank: int

    def finalize(self):
        self._finalized = True
        return self


class Scalar(GenericTensor):
    rank = 0

    def __init__(self, value=0.0):
        self.value = float(value)
        self._finalized = False

    def add_local(self, block, *indices):
        self.value += float(np.sum(block))

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"Scalar({self.value!r})"


class Vector(GenericTensor):
    rank = 1

    def __init__(self, size_or_array):
        if np.ndim(size_or_array) == 0:
            self.array = np.zeros(int(size_or_array))
        else:
            self.array = np.array(size_or_array, dtype=float)
        self._finalized = False

    @property
    def size(self):
        return len(self.array)

    def __len__(self):
        return len(self.array)

    def add_local(self, block, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.size):
            raise IndexOutOfRange("vector index out of range")
        self.array += np.bincount(rows.reshape(-1), weights=np.asarray(block, dtype=float).reshape(-1),
                                  minlength=self.size)

    def norm(self):
        return float(np.linalg.norm(self.array))

    def copy(self):
        return Vector(self.array.copy())

    def __repr__(self):
        return f"Vector(size={self.size})"


class Matrix(GenericTensor):
    """CSR matrix over a fixed :class:`SparsityPattern`."""

    rank = 2

    def __init__(self, pattern: SparsityPattern):
        self.pattern = pattern
        self.data = np.zeros(pattern.nnz)
        self._keys = pattern.keys()
        self._finalized = False

    @property
    def shape(self):
        return self.pattern.shape

    @property
    def indptr(self):
        return self.pattern.indptr

    @property
    def indices(self):
        return self.pattern.indices

    def locate(self, rows, cols):
        """Positions in ``data`` of entries (rows, cols); OutsidePattern on a miss."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        nr, nc = self.shape
        if rows.size and (rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc):
            raise IndexOutOfRange("matrix index out of range")
        k = rows * nc + cols
        pos = np.searchsorted(self._keys, k)
        pos_c = np.minimum(pos, len(self._keys) - 1)
        if len(self._keys) == 0 or np.any(self._keys[pos_c] != k):
            bad = np.nonzero((len(self._keys) == 0) | (self._keys[pos_c] != k))[0][0] if len(self._keys) else 0
            raise OutsidePattern(f"entry ({int(rows.reshape(-1)[bad])}, {int(cols.reshape(-1)[bad])}) "
                                 "is not in the sparsity pattern")
        return pos_c

    def add_local(self, block, rows, cols):
        """Accumulate a dense block, or a batch of blocks ``(B, m, n)`` with
        ``rows (B, m)`` and ``cols (B, n)``."""
        block = np.asarray(block, dtype=float)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        R = np.broadcast_to(rows[..., :, None], block.shape)
        C = np.broadcast_to(cols[..., None, :], block.shape)
        pos = self.locate(R.reshape(-1), C.reshape(-1))
        self.data += np.bincount(pos, weights=block.reshape(-1), minlength=len(self.data))

    def get(self, i, j):
        k = i * self.shape[1] + j
        p = np.searchsorted(self._keys, k)
        return float(self.data[p]) if p < len(self._keys) and self._keys[p] == k else 0.0

    def row_positions(self, i):
        return np.arange(self.indptr[i], self.indptr[i + 1])

    def diagonal(self):
        n = min(self.shape)
        d = np.zeros(n)
        k = np.arange(n) * self.shape[1] + np.arange(n)
        p = np.minimum(np.searchsorted(self._keys, k), max(len(self._keys) - 1, 0))
        hit = self._keys[p] == k if len(self._keys) else np.zeros(n, bool)
        d[hit] = self.data[p[hit]]
        return d

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != self.shape[1]:
            raise ShapeMismatch("matvec dimension mismatch")
        return self._csr() @ x

    def _csr(self):
        """scipy CSR view sharing ``data`` (rebuilt if ``data`` was replaced)."""
        cached = getattr(self, "_csr_cache", None)
        if cached is None or cached.data is not self.data:
            import scipy.sparse
            cached = scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape,
                                             copy=False)
            if cached.data is not self.data:
                cached.data = self.data
            self._csr_cache = cached
        return cached

    def __matmul__(self, x):
        return self.matvec(x.array if isinstance(x, Vector) else x)

    def transpose_dense(self):
        return self.to_dense().T

    def to_dense(self):
        A = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        np.add.at(A, (rows, self.indices), self.data)
        return A

    def to_scipy(self):
        """Independent ``scipy.sparse.csr_matrix`` copy."""
        import scipy.sparse
        return scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape,
                                       copy=True)

    def copy(self):
        M = Matrix(self.pattern)
        M.data = self.data.copy()
        M._finalized = self._finalized
        return M

    def __repr__(self):
        return f"Matrix(shape={self.shape}, nnz={self.pattern.nnz})"


def create_tensor(rank, pattern_or_sizes=None):
    if rank == 0:
        return Scalar()
    if rank == 1:
        n = pattern_or_sizes
        if isinstance(n, (tuple, list)):
            n = n[0]
        if n is None:
            raise ShapeMismatch("rank-1 tensor requires a size")
        return Vector(int(n))
    if rank == 2:
        if not isinstance(pattern_or_sizes, SparsityPattern):
            raise MissingPattern("rank-2 tensor requires a sparsity pattern")
        return Matrix(pattern_or_sizes)
    raise ShapeMismatch(f"unsupported tensor rank {rank}")


def add_local(tensor, block, *indices):
    tensor.add_local(block, *indices)


def finalize(tensor):
    return tensor.finalize()


def _jacobi(A):
    d = A.diagonal()
    d = np.where(d == 0.0, 1.0, d)
    return lambda r: r / d


def _cg(A, b, x, M, tol, maxit, reorthogonalize=False):
    """Preconditioned CG.

    With ``reorthogonalize`` every new residual is made M^-1-orthogonal to
    all earlier ones (Gram-Schmidt in the preconditioned inner product).
    The iterates are unchanged in exact arithmetic, but rounding no longer
    delays the finite termination of CG past N steps.
    """
    r = b - A.matvec(x)
    z = M(r)
    p = z.copy()
    rz = r @ z
    rn = np.linalg.norm(r)
    if rn <= tol:
        return x, 0, rn
    basis_r, basis_z = [], []
    for it in range(1, maxit + 1):
        if reorthogonalize and rz > 0.0:
            s = 1.0 / np.sqrt(rz)
            basis_r.append(r * s)
            basis_z.append(z * s)
        Ap = A.matvec(p)
        pAp = p @ Ap
        if pAp == 0.0:
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rn = np.linalg.norm(r)
        if rn <= tol:
            return x, it, rn
        if basis_r:
            R, Z = np.array(basis_r), np.array(basis_z)
            r = r - (Z @ r) @ R
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(maxit, float(rn))


def _bicgstab(A, b, x, M, tol, maxit):
    r = b - A.matvec(x)
    rn = np.linalg.norm(r)
    if rn <= tol:
        return x, 0, rn
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxit + 1):
        rho_new = rhat @ r
        if rho_new == 0.0:
            rhat = r.copy()
            rho_new = rhat @ r
            p = np.zeros_like(b)
            v = np.zeros_like(b)
            rho = alpha = omega = 1.0
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = M(p)
        v = A.matvec(phat)
        denom = rhat @ v
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol:
            x = x + alpha * phat
            return x, it, np.linalg.norm(b - A.matvec(x))
        shat = M(s)
        t = A.matvec(shat)
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        rn = np.linalg.norm(r)
        if rn <= tol:
            # guard against recurrence drift in the updated residual
            rn = np.linalg.norm(b - A.matvec(x))
            if rn <= tol:
                return x, it, rn
            r = b - A.matvec(x)
        if omega == 0.0:
            break
    raise NoConvergence(maxit, float(np.linalg.norm(b - A.matvec(x))))


def _lu(A, b):
    n = A.shape[0]
    if n > LU_MAX_SIZE:
        raise ShapeMismatch(f"lu is limited to N <= {LU_MAX_SIZE} (got {n})")
    D = A.to_dense()
    maxabs = np.abs(D).max() if D.size else 0.0
    with warnings.catch_warnings():
        # singularity is reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(D, check_finite=True)
    if maxabs == 0.0 or np.min(np.abs(np.diag(lu))) < 1e-14 * maxabs:
        raise SingularMatrix("matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), b)


def solve_linear(A, b, method="cg", precond="jacobi", rtol=1e-10, atol=1e-50, maxit=None, x0=None,
                 reorthogonalize=None):
    """Solve ``A x = b``; returns ``(x, iterations)``.

    Stops when ``||b - A x|| <= max(rtol * ||b||, atol)``. ``lu`` reports 1
    iteration. CG keeps its residuals orthogonal when ``reorthogonalize`` is
    true, which by default means ``N <= REORTHOGONALIZE_MAX_SIZE``.
    """
    b = b.array if isinstance(b, Vector) else np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or len(b) != n:
        raise ShapeMismatch("solve_linear dimension mismatch")
    if method == "lu":
        return _lu(A, b), 1
    maxit = 10 * n if maxit is None else int(maxit)
    tol = max(rtol * np.linalg.norm(b), atol)
    if precond == "jacobi":
        M = _jacobi(A)
    elif precond in (None, "none"):
        M = lambda r: r  # noqa: E731
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if method == "cg":
        if reorthogonalize is None:
            reorthogonalize = n <= REORTHOGONALIZE_MAX_SIZE
        x, it, res = _cg(A, b, x, M, tol, maxit, reorthogonalize)
    elif method == "bicgstab":
        x, it, res = _bicgstab(A, b, x, M, tol, maxit)
    else:
        raise ValueError(f"unknown method {method!r}")
    log.debug("%s converged in %d iterations, residual %.3e", method, it, res)
    return x, it
