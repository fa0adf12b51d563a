"""Smallest eigenpairs of sparse symmetric matrices via shift-invert Lanczos.

The shifted matrix ``A - shift*I`` is factorized with SuperLU in symmetric mode with
diagonal pivoting, i.e. an LDL^T-type factorization P(A - sI)P^T = L D L^T. Its pivot
signs give the inertia (Sylvester), which tells whether any eigenvalue lies below the
shift. If one does, the shift is moved under the bottom of the spectrum before the
k eigenvalues nearest to it are taken as the k smallest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import EigenConvergenceError, FactorizationError, InvalidArgumentError

log = logging.getLogger(__name__)

DEFAULT_SHIFT = -1e-6
DENSE_LIMIT = 600
SINGULAR_NUDGE = 1e-8


@dataclass(frozen=True)
class EigenResult:
    """Ascending eigenvalues, matching orthonormal eigenvectors and residual norms."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray


@dataclass(frozen=True)
class LanczosOptions:
    """Krylov settings; ``ncv=None`` means max(2k + 10, 20)."""

    ncv: int | None = None
    max_restarts: int = 300
    tol: float = 1e-14
    seed: int = 0


class _ShiftedFactor:
    def __init__(self, a: sp.csc_matrix, shift: float):
        n = a.shape[0]
        shifted = (a - shift * sp.identity(n, format="csc")).tocsc()
        try:
            self.lu = splu(
                shifted,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise FactorizationError(f"factorization of A - ({shift:g}) I failed: {exc}") from exc
        self.shift = shift
        self.n = n

    def negative_count(self) -> int | None:
        """Eigenvalues of A strictly below the shift, or None if pivoting broke symmetry."""
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c):
            return None
        return int(np.count_nonzero(self.lu.U.diagonal() < 0.0))

    def operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.lu.solve, dtype=float)


def _factor(a: sp.csc_matrix, shift: float) -> _ShiftedFactor:
    try:
        return _ShiftedFactor(a, shift)
    except FactorizationError:
        log.debug("shift %g is singular, retrying at %g", shift, shift - SINGULAR_NUDGE)
        return _ShiftedFactor(a, shift - SINGULAR_NUDGE)


def _gershgorin_lower(a: sp.csc_matrix) -> float:
    diag = a.diagonal()
    radius = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius))


def _residuals(a, vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a @ vecs - vecs * vals, axis=0)


def _lanczos(a, factor: _ShiftedFactor, k: int, v0: np.ndarray, opts: LanczosOptions):
    n = a.shape[0]
    ncv = opts.ncv or max(2 * k + 10, 20)
    ncv = min(ncv, n)
    try:
        vals, vecs = eigsh(
            a,
            k=k,
            sigma=factor.shift,
            which="LM",
            OPinv=factor.operator(),
            v0=v0,
            ncv=ncv,
            maxiter=opts.max_restarts,
            tol=opts.tol,
        )
    except ArpackNoConvergence as exc:
        res = _residuals(a, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else ()
        raise EigenConvergenceError(
            f"Lanczos did not converge in {opts.max_restarts} restarts", res
        ) from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def smallest_eigenpairs(
    a,
    k: int,
    shift: float = DEFAULT_SHIFT,
    *,
    v0: np.ndarray | None = None,
    method: str = "auto",
    options: LanczosOptions | None = None,
) -> EigenResult:
    """The ``k`` algebraically smallest eigenpairs of the symmetric matrix ``a``.

    Args:
        a: symmetric scipy sparse matrix or dense ndarray.
        k: number of eigenpairs, 1 <= k <= 6.
        shift: shift-invert target; should sit just below the expected bottom of
            the spectrum.
        v0: optional starting vector (or block whose column sum is used) for
            warm starts.
        method: "dense", "sparse" or "auto" (dense when the order is <= 600).
        options: Krylov settings.

    Raises:
        InvalidArgumentError: bad k or shape.
        FactorizationError: the shifted matrix is singular even after a nudge.
        EigenConvergenceError: the Lanczos restart budget ran out.
    """
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidArgumentError("operator must be square")
    if not 1 <= k <= 6 or k > n:
        raise InvalidArgumentError(f"k must be in [1, min(6, {n})], got {k}")
    if method not in ("auto", "dense", "sparse"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    opts = options or LanczosOptions()

    if method == "dense" or (method == "auto" and n <= DENSE_LIMIT) or k >= n - 1:
        dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[0, k - 1])
        return EigenResult(vals, vecs, _residuals(dense, vals, vecs))

    a = sp.csc_matrix(a, dtype=float)
    if v0 is None:
        v0 = np.random.default_rng(opts.seed).standard_normal(n)
    else:
        v0 = np.asarray(v0, dtype=float)
        if v0.ndim == 2:
            v0 = v0.sum(axis=1)
        if not np.any(v0):
            v0 = np.random.default_rng(opts.seed).standard_normal(n)

    factor = _factor(a, shift)
    neg = factor.negative_count()
    if neg is None or neg > 0:
        # Some eigenvalue lies below the shift: locate the bottom of the spectrum
        # from a guaranteed lower bound, then re-center just beneath it.
        low = _factor(a, _gershgorin_lower(a) - 1e-3)
        bottom, _ = _lanczos(a, low, 1, v0, opts)
        gap = max(1e-6, 1e-6 * abs(bottom[0]))
        factor = _factor(a, float(bottom[0]) - gap)
        if factor.negative_count() not in (0, None):
            factor = low
    vals, vecs = _lanczos(a, factor, k, v0, opts)
    return EigenResult(vals, vecs, _residuals(a, vals, vecs))


def min_eigenvalue(a, shift: float = DEFAULT_SHIFT, **kwargs) -> float:
    """Smallest eigenvalue of the symmetric matrix ``a``."""
    return float(smallest_eigenpairs(a, 1, shift, **kwargs).eigenvalues[0])
