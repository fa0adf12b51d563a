"""Closed-form rotation averaging on cycle graphs.

Nodes are visited 0, 1, ..., n-1 and back to 0. ``measurements[k]`` is the relative
rotation on the edge from node k to node k+1 (the last one closes the cycle at node 0),
approximating R_k R_{k+1}^T. The cycle error E is their left-to-right product.

Writing U_k for the transposed prefix product of the measurements, the pairwise
matrix in the block basis U has identity blocks everywhere except the wrap corner,
which holds E. Every rotation about E's axis then gives a one-parameter problem whose
stationary points are R_k = U_k E_j^k for the n-th roots E_j of E, and E_0 is optimal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .graph import MeasurementGraph, build_pairwise_matrix, degree_matrix, is_connected
from .so3 import angles_of, exp_batch, is_rotation, log_rotation


@dataclass(frozen=True)
class CycleProblem:
    measurements: np.ndarray

    def __post_init__(self):
        meas = np.asarray(self.measurements, dtype=float)
        if meas.ndim != 3 or meas.shape[1:] != (3, 3):
            raise InvalidArgumentError("measurements must have shape (n, 3, 3)")
        if meas.shape[0] < 3:
            raise InvalidArgumentError("a cycle needs at least 3 nodes")
        for k, r in enumerate(meas):
            if not is_rotation(r, 1e-9):
                raise InvalidArgumentError(f"measurement {k} is not a rotation")
        object.__setattr__(self, "measurements", meas)

    @property
    def n(self) -> int:
        return self.measurements.shape[0]

    def to_graph(self) -> MeasurementGraph:
        n = self.n
        edges = [(k, (k + 1) % n, self.measurements[k]) for k in range(n)]
        return MeasurementGraph.from_edges(n, edges)

    @classmethod
    def from_graph(cls, g: MeasurementGraph) -> tuple["CycleProblem", np.ndarray]:
        """Read a simple cycle out of a general graph.

        Returns the problem and ``order``, where cycle position k is graph node
        ``order[k]``. The walk starts at node 0 towards its smaller-id neighbour.

        Raises:
            InvalidArgumentError: if ``g`` is not a single simple cycle.
        """
        if g.n < 3 or g.m != g.n or np.any(degree_matrix(g) != 2) or not is_connected(g):
            raise InvalidArgumentError("graph is not a simple cycle")
        adj = g.neighbors()
        lookup = {}
        for a, b, r in zip(g.i.tolist(), g.j.tolist(), g.measurements):
            lookup[(a, b)] = r
            lookup[(b, a)] = r.T
        order = [0]
        prev, cur = -1, 0
        nxt = min(adj[0])
        meas = []
        for _ in range(g.n):
            meas.append(lookup[(cur, nxt)])
            prev, cur = cur, nxt
            if cur == 0:
                break
            order.append(cur)
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        return cls(np.array(meas)), np.array(order)


@dataclass(frozen=True)
class CycleSolution:
    """Stationary point ``root_index`` of a cycle problem; root 0 is the global optimum."""

    rotations: np.ndarray
    root_index: int
    cost: float
    gamma: float
    is_global: bool


def cycle_error(p: CycleProblem) -> np.ndarray:
    """Left-to-right product of the measurements around the cycle."""
    e = np.eye(3)
    for r in p.measurements:
        e = e @ r
    return e


def change_of_basis(p: CycleProblem) -> np.ndarray:
    """Blocks U_0 = I, U_k = M_{k-1}^T U_{k-1}; shape (n, 3, 3)."""
    u = np.empty((p.n, 3, 3))
    u[0] = np.eye(3)
    for k in range(1, p.n):
        u[k] = p.measurements[k - 1].T @ u[k - 1]
    return u


def stationary_cost(n: int, gamma: float, k: int) -> float:
    """Cost at stationary point k: -3n - 2n (1 + 2 cos(gamma/n - 2 k pi / n))."""
    return -3.0 * n - 2.0 * n * (1.0 + 2.0 * np.cos(gamma / n - 2.0 * k * np.pi / n))


def stationary_point(p: CycleProblem, k: int) -> CycleSolution:
    """Stationary point built from the k-th n-th root of the cycle error.

    Powers of the root are evaluated as rotations by a multiple of its angle rather
    than by repeated multiplication, so they do not drift for long cycles.
    """
    n = p.n
    if not 0 <= k < n:
        raise InvalidArgumentError(f"root index must be in [0, {n}), got {k}")
    aa = log_rotation(cycle_error(p))
    step = aa.angle / n - 2.0 * np.pi * k / n
    powers = exp_batch(aa.axis, step * np.arange(n))
    rots = change_of_basis(p) @ powers
    rots[0] = np.eye(3)
    return CycleSolution(rots, k, stationary_cost(n, aa.angle, k), aa.angle, k == 0)


def solve_cycle(p: CycleProblem) -> CycleSolution:
    """Globally optimal rotations for a cycle, anchored at R_0 = I."""
    return stationary_point(p, 0)


def residual_angles(p: CycleProblem, s: CycleSolution) -> np.ndarray:
    """Angle of M_k R_{k+1} R_k^T for each edge, wrap edge last."""
    r = np.asarray(s.rotations)
    if r.shape != (p.n, 3, 3):
        raise InvalidArgumentError("solution does not match the problem size")
    nxt = np.roll(r, -1, axis=0)
    res = p.measurements @ nxt @ np.transpose(r, (0, 2, 1))
    return angles_of(res)


@dataclass(frozen=True)
class BasisCheck:
    """Outcome of :func:`transformed_matrix_check`; truthy when the structure holds."""

    ok: bool
    violation: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def transformed_matrix_check(p: CycleProblem, u: np.ndarray, tol: float = 1e-10) -> BasisCheck:
    """Verify U^T R~ U densely: identity diagonal and chain blocks, E in the wrap corner."""
    n = p.n
    u = np.asarray(u, dtype=float)
    if u.shape != (n, 3, 3):
        return BasisCheck(False, f"basis has shape {u.shape}, expected {(n, 3, 3)}")
    dense = build_pairwise_matrix(p.to_graph()).to_dense()
    big = np.zeros((3 * n, 3 * n))
    for k in range(n):
        big[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = u[k]
    rp = (big.T @ dense @ big).reshape(n, 3, n, 3).transpose(0, 2, 1, 3)
    e = cycle_error(p)
    for a in range(n):
        for b in range(n):
            if a == b or abs(a - b) == 1:
                want = np.eye(3)
            elif (a, b) == (n - 1, 0):
                want = e
            elif (a, b) == (0, n - 1):
                want = e.T
            else:
                want = np.zeros((3, 3))
            dev = float(np.max(np.abs(rp[a, b] - want)))
            if dev > tol:
                return BasisCheck(False, f"block ({a}, {b}) deviates by {dev:.3e}")
    return BasisCheck(True)


def closed_form_spectrum(p: CycleProblem) -> np.ndarray:
    """The 3n eigenvalues of R~ in construction order.

    First 1 + 2cos(gamma/n - 2k pi/n) for k = 0..n-1, each listed twice, then
    1 + 2cos(2k pi/n) for k = 0..n-1 once each. Not sorted.
    """
    n = p.n
    gamma = log_rotation(cycle_error(p)).angle
    k = np.arange(n)
    twisted = 1.0 + 2.0 * np.cos(gamma / n - 2.0 * k * np.pi / n)
    axial = 1.0 + 2.0 * np.cos(2.0 * k * np.pi / n)
    return np.concatenate([np.repeat(twisted, 2), axial])
