"""Primal-dual rotation averaging with per-iteration duality certificates.

The dual variable starts at the noise-free multiplier (D + I) kron I_3. Each
iteration takes the bottom-3 eigenvectors of Lambda - R~ as a Stiefel point, fixes
the gauge by anchoring node 0, projects every block onto SO(3), and rebuilds Lambda
from the symmetrized first-order optimality condition. The three bottom eigenvalues
double as the certificate: when one of them reaches zero the pair is stationary and
Lambda - R~ is positive semidefinite.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .eigen import DEFAULT_SHIFT, EigenResult, LanczosOptions, min_eigenvalue, smallest_eigenpairs
from .errors import InvalidArgumentError
from .graph import (
    MeasurementGraph,
    PairwiseMatrix,
    build_pairwise_matrix,
    is_connected,
    lambda_noise_free,
    matvec,
)
from .so3 import project_blocks, project_to_rotation

log = logging.getLogger(__name__)

GAUGE_SINGULAR_TOL = 1e-8
TRACE_HEADER = ("iteration", "min_abs_lambda", "cost", "wall_ms")


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve`.

    Attributes:
        max_iterations: iteration cap.
        epsilon: stop once min |lambda_i| over the bottom three eigenvalues is below this.
        shift: eigensolver shift-invert target.
        relative_epsilon: scale ``epsilon`` by the largest block-row 1-norm of
            Lambda_nf - R~ (an absolute 1e-15 is below rounding for large degrees).
        certify_tol: tolerance of the independent certificate run on the result.
        method: eigensolver path, "auto", "dense" or "sparse".
    """

    max_iterations: int = 100
    epsilon: float = 1e-15
    shift: float = DEFAULT_SHIFT
    relative_epsilon: bool = False
    certify_tol: float = 1e-8
    method: str = "auto"
    lanczos: LanczosOptions = field(default_factory=LanczosOptions)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")


@dataclass(frozen=True)
class Certificate:
    min_eig: float
    stationarity_residual: float
    certified: bool


@dataclass(frozen=True)
class SolveReport:
    rotations: np.ndarray
    multiplier: np.ndarray
    iterations: int
    min_eigenvalue_history: list[float]
    final_cost: float
    certified: bool
    wall_time: float
    converged: bool
    certificate: Certificate
    gauge_fallbacks: int = 0
    cost_history: list[float] = field(default_factory=list)
    wall_ms_history: list[float] = field(default_factory=list)

    def write_trace(self, fh: IO[str]) -> None:
        """Per-iteration CSV: iteration, min_abs_lambda, cost, wall_ms."""
        write_trace(fh, self.min_eigenvalue_history, self.cost_history, self.wall_ms_history)


def write_trace(fh: IO[str], min_abs: list[float], costs: list[float], wall_ms: list[float]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t, (lam, c, ms) in enumerate(zip(min_abs, costs, wall_ms), start=1):
        w.writerow([t, repr(float(lam)), repr(float(c)), f"{ms:.3f}"])


def _as_blocks(r: np.ndarray, n: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.size != 9 * n:
        raise InvalidArgumentError(f"expected {n} rotation blocks, got array of shape {r.shape}")
    return r.reshape(n, 3, 3)


def cost(g: MeasurementGraph, r: np.ndarray) -> float:
    """-3n - 2 * sum over edges of tr(R~_ij R_j R_i^T)."""
    r = _as_blocks(r, g.n)
    rel = np.einsum("eab,ecb->eac", r[g.i], r[g.j])  # R_i R_j^T
    return float(-3.0 * g.n - 2.0 * np.einsum("eab,eab->", g.measurements, rel))


def _neighbor_sums(g: MeasurementGraph, r: np.ndarray) -> np.ndarray:
    # S_i = sum_{j~i} R~_ij R_j R_i^T, with R~_ji = R~_ij^T.
    r = _as_blocks(r, g.n)
    fwd = np.einsum("eab,ebc,edc->ead", g.measurements, r[g.j], r[g.i])
    bwd = np.einsum("eba,ebc,edc->ead", g.measurements, r[g.i], r[g.j])
    s = np.zeros((g.n, 3, 3))
    np.add.at(s, g.i, fwd)
    np.add.at(s, g.j, bwd)
    return s


def dual_update(g: MeasurementGraph, r: np.ndarray) -> np.ndarray:
    """Symmetrized multiplier: block i = I + (S_i + S_i^T) / 2."""
    s = _neighbor_sums(g, r)
    return np.eye(3) + 0.5 * (s + np.transpose(s, (0, 2, 1)))


def kkt_multiplier(g: MeasurementGraph, r: np.ndarray) -> np.ndarray:
    """Lagrange multiplier recovered from a candidate solution, for certification."""
    return dual_update(g, r)


@dataclass(frozen=True)
class PrimalStep:
    rotations: np.ndarray
    eig: EigenResult
    gauge_fallback: bool


def _gauge_and_project(x: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    xb = x.reshape(n, 3, 3)
    first = xb[0]
    fallback = np.linalg.svd(first, compute_uv=False)[-1] < GAUGE_SINGULAR_TOL
    if fallback:
        gauge = project_to_rotation(first).T
    else:
        gauge = np.linalg.inv(first)
    rots = project_blocks(xb @ gauge)
    # Anchor node 0 exactly; a no-op up to rounding on the regular path.
    rots = rots @ rots[0].T
    rots[0] = np.eye(3)
    return rots, bool(fallback)


def primal_step(
    m: PairwiseMatrix,
    dual: np.ndarray,
    *,
    shift: float = DEFAULT_SHIFT,
    v0: np.ndarray | None = None,
    method: str = "auto",
    options: LanczosOptions | None = None,
) -> PrimalStep:
    """Bottom-3 eigenvectors of dual - R~, gauge-fixed and projected onto SO(3)^n."""
    if m.n == 1:
        eye = np.eye(3)[None].copy()
        vals = np.linalg.eigvalsh(np.asarray(dual, dtype=float)[0] - np.eye(3))
        return PrimalStep(eye, EigenResult(vals, np.eye(3), np.zeros(3)), False)
    op = m.to_sparse(dual)
    eig = smallest_eigenpairs(op, 3, shift, v0=v0, method=method, options=options)
    rots, fallback = _gauge_and_project(eig.eigenvectors, m.n)
    if fallback:
        log.warning("first eigenvector block is near-singular; used its Procrustes projection as gauge")
    return PrimalStep(rots, eig, fallback)


def primal_update(m: PairwiseMatrix, dual: np.ndarray, **kwargs) -> np.ndarray:
    """Rotations from one primal step; see :func:`primal_step`."""
    return primal_step(m, dual, **kwargs).rotations


def certify(
    m: PairwiseMatrix, r: np.ndarray, lam: np.ndarray, tol: float, *, method: str = "auto"
) -> Certificate:
    """Check PSD-ness of lam - R~ and the stationarity (lam - R~) R = 0.

    The stationarity residual is ||(lam - R~) R||_F / ||R||_F. The pair is certified
    when min_eig >= -tol and the residual is at most tol * sqrt(n).
    """
    r = _as_blocks(r, m.n)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (m.n, 3, 3):
        raise InvalidArgumentError("multiplier must have shape (n, 3, 3)")
    flat = r.reshape(3 * m.n, 3)
    resid = float(np.linalg.norm(matvec(m, flat, lam)) / np.linalg.norm(flat))
    lo = min_eigenvalue(m.to_sparse(lam), method=method)
    ok = lo >= -tol and resid <= tol * np.sqrt(m.n)
    return Certificate(lo, resid, bool(ok))


def certify_solution(g: MeasurementGraph, r: np.ndarray, tol: float = 1e-8, **kwargs) -> Certificate:
    """Certify externally supplied rotations using their KKT multiplier."""
    return certify(build_pairwise_matrix(g), r, kkt_multiplier(g, r), tol, **kwargs)


def _max_block_row_norm(m: PairwiseMatrix, dual: np.ndarray) -> float:
    # Largest absolute row sum of dual - R~.
    return float(np.max(np.abs(m.to_sparse(dual)).sum(axis=1)))


def solve(g: MeasurementGraph, cfg: SolverConfig | None = None) -> SolveReport:
    """Run primal-dual iterations from the noise-free multiplier.

    Non-convergence is reported through ``certified=False`` rather than raised.

    Raises:
        InvalidArgumentError: fewer than two nodes or a disconnected graph.
    """
    cfg = cfg or SolverConfig()
    if g.n < 2:
        raise InvalidArgumentError("solve needs at least two nodes")
    if not is_connected(g):
        raise InvalidArgumentError("measurement graph is not connected")

    start = time.perf_counter()
    m = build_pairwise_matrix(g)
    dual = lambda_noise_free(g)
    eps = cfg.epsilon * (_max_block_row_norm(m, dual) if cfg.relative_epsilon else 1.0)

    history: list[float] = []
    costs: list[float] = []
    wall: list[float] = []
    v0 = None
    fallbacks = 0
    converged = False
    rots = np.broadcast_to(np.eye(3), (g.n, 3, 3)).copy()
    for t in range(cfg.max_iterations):
        step = primal_step(m, dual, shift=cfg.shift, v0=v0, method=cfg.method, options=cfg.lanczos)
        rots = step.rotations
        fallbacks += step.gauge_fallback
        v0 = step.eig.eigenvectors
        dual = dual_update(g, rots)
        lam = float(np.min(np.abs(step.eig.eigenvalues)))
        history.append(lam)
        costs.append(cost(g, rots))
        wall.append(1e3 * (time.perf_counter() - start))
        log.debug("iter %d  min|lambda| %.3e  cost %.9f", t + 1, lam, costs[-1])
        if lam < eps:
            converged = True
            break

    cert = certify(m, rots, dual, cfg.certify_tol, method=cfg.method)
    elapsed = time.perf_counter() - start
    return SolveReport(
        rotations=rots,
        multiplier=dual,
        iterations=len(history),
        min_eigenvalue_history=history,
        final_cost=costs[-1],
        certified=converged and cert.certified,
        wall_time=elapsed,
        converged=converged,
        certificate=cert,
        gauge_fallbacks=fallbacks,
        cost_history=costs,
        wall_ms_history=wall,
    )


def principal_angle_cosine(u: np.ndarray, u_nf: np.ndarray) -> float:
    """Cosine of the principal angle between two 3-dim subspaces: sqrt(tr(U^T W W^T U) / 3)."""
    u = np.asarray(u, dtype=float)
    u_nf = np.asarray(u_nf, dtype=float)
    for name, x in (("u", u), ("u_nf", u_nf)):
        if x.ndim != 2 or x.shape[1] != 3 or np.linalg.norm(x.T @ x - np.eye(3)) > 1e-8:
            raise InvalidArgumentError(f"{name} must have three orthonormal columns")
    if u.shape != u_nf.shape:
        raise InvalidArgumentError("subspace bases must have equal shapes")
    c = u.T @ u_nf
    return float(np.sqrt(np.clip(np.sum(c * c) / 3.0, 0.0, 1.0)))
