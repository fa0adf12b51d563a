"""Measurement graphs and the block-sparse pairwise matrix built from them.

Conventions: node ids are 0-based; an edge (i, j, M) means M approximates R_i R_j^T,
so the pairwise matrix holds M at block (i, j) and M^T at block (j, i). Block
vectors of rotations are arrays of shape (n, 3, 3); ``x.reshape(3 * n, 3)`` gives
the stacked 3n x 3 form without copying.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateEdgeError, InvalidArgumentError
from .so3 import project_blocks

log = logging.getLogger(__name__)

# Orthogonality error above which an incoming measurement is rejected outright.
REPROJECT_TOL = 1e-6
# Dense eigendecomposition is used for Laplacians up to this many nodes.
DENSE_FIEDLER_LIMIT = 2000


@dataclass(frozen=True)
class MeasurementGraph:
    """Simple undirected graph with one relative-rotation measurement per edge.

    Attributes:
        n: number of nodes.
        i, j: int arrays of shape (m,), with ``i < j`` elementwise.
        measurements: array of shape (m, 3, 3); ``measurements[e]`` approximates
            ``R_i R_j^T`` for edge e.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    measurements: np.ndarray

    @property
    def m(self) -> int:
        return int(self.i.shape[0])

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int, np.ndarray]],
        *,
        check_duplicates: bool = True,
    ) -> "MeasurementGraph":
        """Build a graph, normalizing every edge so that i < j.

        Edges given as (j, i, M) with j > i are stored as (i, j, M^T). Measurements
        within 1e-6 of SO(3) are re-projected onto it; anything farther is rejected.

        Raises:
            InvalidArgumentError: self-loop, node id out of range, or a measurement
                that is not close to a rotation.
            DuplicateEdgeError: two edges on the same unordered pair.
        """
        n = int(n)
        if n < 1:
            raise InvalidArgumentError("graph needs at least one node")
        src, dst, blocks = [], [], []
        for a, b, rot in edges:
            a, b = int(a), int(b)
            rot = np.asarray(rot, dtype=float)
            if rot.shape != (3, 3):
                raise InvalidArgumentError(f"edge ({a}, {b}): measurement must be 3x3")
            if a == b:
                raise InvalidArgumentError(f"self-loop on node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise InvalidArgumentError(f"edge ({a}, {b}) references a node outside [0, {n})")
            if a > b:
                a, b, rot = b, a, rot.T
            src.append(a)
            dst.append(b)
            blocks.append(rot)
        i = np.asarray(src, dtype=np.int64)
        j = np.asarray(dst, dtype=np.int64)
        meas = np.asarray(blocks, dtype=float).reshape(-1, 3, 3)
        meas = _validated_rotations(meas)
        graph = cls(n, i, j, meas)
        if check_duplicates:
            graph._check_duplicates()
        return graph

    def _check_duplicates(self) -> None:
        keys = self.i * self.n + self.j
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            k = int(uniq[np.argmax(counts > 1)])
            raise DuplicateEdgeError(f"duplicate edge ({k // self.n}, {k % self.n})")

    def degrees(self) -> np.ndarray:
        return degree_matrix(self)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in zip(self.i.tolist(), self.j.tolist()):
            adj[a].append(b)
            adj[b].append(a)
        return adj


def _validated_rotations(meas: np.ndarray) -> np.ndarray:
    if meas.shape[0] == 0:
        return meas
    if not np.all(np.isfinite(meas)):
        raise InvalidArgumentError("measurement contains non-finite entries")
    gram = np.einsum("eki,ekj->eij", meas, meas) - np.eye(3)
    err = np.linalg.norm(gram, axis=(1, 2))
    dets = np.linalg.det(meas)
    bad = (err > REPROJECT_TOL) | (dets <= 0.0)
    if np.any(bad):
        e = int(np.flatnonzero(bad)[0])
        raise InvalidArgumentError(
            f"measurement {e} is not a rotation (orthogonality error {err[e]:.3g})"
        )
    # Re-projection is idempotent on exact rotations, so apply it unconditionally
    # to anything carrying rounding noise.
    noisy = err > 0.0
    if np.any(noisy):
        meas = meas.copy()
        meas[noisy] = project_blocks(meas[noisy])
    return meas


@dataclass(frozen=True)
class PairwiseMatrix:
    """Symmetric 3n x 3n block matrix: identity diagonal, measurements off-diagonal.

    Off-diagonal blocks are stored once, for i < j, in block-CSR order (sorted by row,
    then column); the lower triangle is implied by transposition.
    """

    n: int
    indptr: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    blocks: np.ndarray

    @property
    def dimension(self) -> int:
        return 3 * self.n

    @property
    def stored_blocks(self) -> int:
        return int(self.rows.shape[0])

    def block(self, a: int, b: int) -> np.ndarray | None:
        """Block (a, b), or None for a null block."""
        if a == b:
            return np.eye(3)
        t = a > b
        if t:
            a, b = b, a
        lo, hi = self.indptr[a], self.indptr[a + 1]
        k = lo + int(np.searchsorted(self.cols[lo:hi], b))
        if k < hi and self.cols[k] == b:
            return self.blocks[k].T if t else self.blocks[k]
        return None

    def to_dense(self) -> np.ndarray:
        n = self.n
        dense = np.zeros((n, 3, n, 3))
        idx = np.arange(n)
        dense[idx, :, idx, :] = np.eye(3)
        dense[self.rows, :, self.cols, :] = self.blocks
        dense[self.cols, :, self.rows, :] = np.transpose(self.blocks, (0, 2, 1))
        return dense.reshape(3 * n, 3 * n)

    def to_sparse(self, dual: np.ndarray | None = None) -> sp.csc_matrix:
        """Scipy CSC form of R~, or of ``blockdiag(dual) - R~`` when ``dual`` is given."""
        n = self.n
        diag = np.broadcast_to(np.eye(3), (n, 3, 3)) if dual is None else np.asarray(dual) - np.eye(3)
        sign = 1.0 if dual is None else -1.0
        data = np.concatenate(
            [diag, sign * self.blocks, sign * np.transpose(self.blocks, (0, 2, 1))]
        )
        brow = np.concatenate([np.arange(n), self.rows, self.cols])
        bcol = np.concatenate([np.arange(n), self.cols, self.rows])
        r = (3 * brow[:, None, None] + np.arange(3)[None, :, None]).repeat(3, axis=2)
        c = (3 * bcol[:, None, None] + np.arange(3)[None, None, :]).repeat(3, axis=1)
        return sp.csc_matrix((data.ravel(), (r.ravel(), c.ravel())), shape=(3 * n, 3 * n))


def build_pairwise_matrix(g: MeasurementGraph) -> PairwiseMatrix:
    """Assemble the pairwise block matrix of ``g``.

    Raises:
        DuplicateEdgeError: if ``g`` has two edges on one node pair.
    """
    order = np.lexsort((g.j, g.i))
    rows, cols = g.i[order], g.j[order]
    if rows.size and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
        k = int(np.flatnonzero((np.diff(rows) == 0) & (np.diff(cols) == 0))[0])
        raise DuplicateEdgeError(f"duplicate edge ({rows[k]}, {cols[k]})")
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return PairwiseMatrix(g.n, indptr, rows, cols, g.measurements[order])


def degree_matrix(g: MeasurementGraph) -> np.ndarray:
    """Degree of every node, as an int vector of length n."""
    return np.bincount(np.concatenate([g.i, g.j]), minlength=g.n).astype(np.int64)


def lambda_noise_free(g: MeasurementGraph) -> np.ndarray:
    """Multiplier that is optimal for noise-free data: block i is (deg(i) + 1) I."""
    return (degree_matrix(g) + 1.0)[:, None, None] * np.eye(3)


def matvec(m: PairwiseMatrix, v: np.ndarray, dual: np.ndarray | None = None) -> np.ndarray:
    """Multiply by R~, or by ``blockdiag(dual) - R~`` when ``dual`` is given.

    ``v`` may be a 3n vector or a 3n x k block; the result has the same shape.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != 3 * m.n:
        raise InvalidArgumentError(f"dimension mismatch: operator is {3 * m.n}, vector is {v.shape[0]}")
    vb = v.reshape(m.n, 3, -1)
    out = np.einsum("eab,ebk->eak", m.blocks, vb[m.cols])
    acc = np.zeros_like(vb)
    np.add.at(acc, m.rows, out)
    np.add.at(acc, m.cols, np.einsum("eba,ebk->eak", m.blocks, vb[m.rows]))
    if dual is None:
        acc += vb
    else:
        dual = np.asarray(dual, dtype=float)
        if dual.shape != (m.n, 3, 3):
            raise InvalidArgumentError("dual must have shape (n, 3, 3)")
        acc = np.einsum("iab,ibk->iak", dual, vb) - vb - acc
    return acc.reshape(v.shape)


def is_connected(g: MeasurementGraph) -> bool:
    """Breadth-first reachability from node 0."""
    if g.n <= 1:
        return True
    adj = g.neighbors()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if not seen[b]:
                seen[b] = True
                queue.append(b)
    return bool(seen.all())


def laplacian(g: MeasurementGraph) -> sp.csr_matrix:
    """Combinatorial graph Laplacian D - A."""
    a = sp.coo_matrix(
        (np.ones(2 * g.m), (np.concatenate([g.i, g.j]), np.concatenate([g.j, g.i]))),
        shape=(g.n, g.n),
    ).tocsr()
    return (sp.diags(degree_matrix(g).astype(float)) - a).tocsr()


def fiedler_value(g: MeasurementGraph) -> float:
    """Algebraic connectivity: second-smallest Laplacian eigenvalue (0 if disconnected)."""
    if g.n < 2:
        raise InvalidArgumentError("Fiedler value needs at least two nodes")
    if not is_connected(g):
        return 0.0
    lap = laplacian(g)
    if g.n <= DENSE_FIEDLER_LIMIT:
        vals = np.linalg.eigvalsh(lap.toarray())
        return float(max(vals[1], 0.0))
    from .eigen import smallest_eigenpairs

    res = smallest_eigenpairs(lap.tocsc(), 2, shift=-1e-3, method="sparse")
    return float(max(res.eigenvalues[1], 0.0))
