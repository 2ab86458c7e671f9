"""Linear-algebra kernels shared by the section, 1D and 3D solvers.

Dense Hermitian problems go through LAPACK (``scipy.linalg.eigh``); the
sparse generalized problems use ARPACK in shift-invert mode with a sparse
LU of ``A - shift*M``.  Every routine checks its residuals before returning.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CROSSOVER = 2000


class SolverError(RuntimeError):
    """An eigensolver failed to converge or missed its residual bound."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = None if residuals is None else np.asarray(residuals)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def check_hermitian(a, tol=1e-14):
    """Raise ValueError unless ``a`` is Hermitian entrywise within ``tol``.

    ``tol`` is relative to the largest entry.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    err = np.abs(a - a.conj().T).max(initial=0.0)
    if err > tol * scale:
        raise ValueError(f"matrix is not Hermitian (max |A - A^H| = {err:.3e})")


def eigh_dense(a, k=None, vectors=False, check=True, residual_tol=1e-10):
    """Smallest ``k`` eigenvalues of a dense Hermitian matrix, ascending.

    Returns ``w`` or ``(w, v)`` when ``vectors`` is true.  With ``check`` the
    Hermitian property and the per-pair residual
    ``|A x - w x| <= residual_tol * |A|`` are verified.
    """
    a = np.asarray(a)
    if check:
        check_hermitian(a)
    n = a.shape[0]
    k = n if k is None else int(k)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    subset = None if k == n else (0, k - 1)
    need_vectors = vectors or check
    try:
        if need_vectors:
            w, v = scipy.linalg.eigh(a, subset_by_index=subset, driver="evr")
        else:
            w = scipy.linalg.eigh(a, subset_by_index=subset, eigvals_only=True, driver="evr")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SolverError(f"dense eigensolver failed: {exc}") from exc
    if check:
        # 1-norm bounds the 2-norm of a Hermitian matrix and costs O(n^2)
        norm = max(np.abs(a).sum(axis=0).max(), 1e-300)
        res = np.linalg.norm(a @ v - v * w, axis=0)
        if np.any(res > residual_tol * norm):
            raise SolverError(
                f"dense residual bound violated (max {res.max():.3e}, |A| = {norm:.3e})", res
            )
    return (w, v) if vectors else w


@dataclass(frozen=True)
class HermitianPencil:
    """Sparse Hermitian ``A`` with a diagonal positive mass ``M``."""

    a: sp.csr_matrix
    m: np.ndarray

    def __post_init__(self):
        n = self.a.shape[0]
        if self.a.shape != (n, n) or self.m.shape != (n,):
            raise ValueError("pencil dimensions do not match")
        if not np.all(self.m > 0):
            raise ValueError("mass matrix must be strictly positive")
        pattern = (self.a != 0).astype(np.int8)
        if (pattern != pattern.T).nnz:
            raise ValueError("sparsity pattern of A is not symmetric")

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def _residuals(a, m, w, v):
    av = a @ v
    mv = m[:, None] * v
    return np.linalg.norm(av - mv * w, axis=0) / np.linalg.norm(mv, axis=0)


def eig_sparse_smallest(a, m, k, shift, *, seed=0, tol=1e-8, vectors=False,
                        max_restarts=4, ncv=None, maxiter=None):
    """``k`` smallest eigenvalues of ``A x = E M x`` with ``M`` diagonal.

    Shift-invert Lanczos (ARPACK) around ``shift``, which must lie below the
    lowest eigenvalue.  If an eigenvalue below ``shift`` turns up, the shift
    is lowered and the solve repeated; on ARPACK breakdown the shift is
    perturbed.  The start vector comes from ``numpy.random.default_rng(seed)``.

    Residuals ``|A x - E M x| / |M x|`` above ``tol`` raise SolverError.
    """
    a = sp.csc_matrix(a)
    m = np.asarray(m, dtype=float)
    n = a.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < {n}")
    if n <= 0 or np.any(m <= 0):
        raise ValueError("mass diagonal must be positive")
    rng = np.random.default_rng(seed)
    dtype = np.complex128 if np.iscomplexobj(a.data) else np.float64
    v0 = rng.standard_normal(n).astype(dtype)
    mmat = sp.diags(m, format="csc")
    sigma = float(shift)
    ncv = ncv or min(n - 1, max(2 * k + 1, 20))
    last_error = None
    for attempt in range(max_restarts + 1):
        try:
            # the pencil is Hermitian, so order on the pattern of A + A^T
            lu = spla.splu((a - sigma * mmat).tocsc(), permc_spec="MMD_AT_PLUS_A",
                           options={"SymmetricMode": True})
        except RuntimeError as exc:  # exactly singular: shift hit an eigenvalue
            last_error = exc
            sigma -= 1e-3 * max(1.0, abs(sigma))
            continue
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=dtype)
        try:
            w, v = spla.eigsh(a, k=k, M=mmat, sigma=sigma, OPinv=opinv, v0=v0,
                              which="LM", ncv=ncv, maxiter=maxiter, tol=0)
        except spla.ArpackNoConvergence as exc:
            last_error = exc
            sigma -= 1e-2 * max(1.0, abs(sigma)) * (attempt + 1)
            continue
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        if w[0] < sigma:
            spread = max(w[-1] - w[0], 1.0)
            sigma = w[0] - spread
            last_error = SolverError("shift was above the lowest eigenvalue")
            continue
        res = _residuals(a, m, w, v)
        if np.any(res > tol):
            raise SolverError(f"sparse residual bound violated (max {res.max():.3e})", res)
        return (w, v) if vectors else w
    raise SolverError(f"shift-invert Lanczos failed after {max_restarts} restarts: {last_error}")


def fft_periodic(samples):
    """Modes ``c_m`` with ``f(s_j) = sum_m c_m exp(2 pi i m j / N)``.

    Output is in numpy FFT order (``m = 0, 1, ..., -1``); the length must
    be a power of two.  Multiply by ``sqrt(L)`` to get the coefficients of
    the ``exp(2 pi i n s / L) / sqrt(L)`` expansion used for potentials.
    """
    x = np.asarray(samples)
    if not is_power_of_two(x.shape[-1]):
        raise ValueError(f"sample count {x.shape[-1]} is not a power of two")
    return np.fft.fft(x, axis=-1) / x.shape[-1]


def ifft_periodic(modes):
    """Inverse of :func:`fft_periodic`."""
    c = np.asarray(modes)
    if not is_power_of_two(c.shape[-1]):
        raise ValueError(f"mode count {c.shape[-1]} is not a power of two")
    return np.fft.ifft(c, axis=-1) * c.shape[-1]
