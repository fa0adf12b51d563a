"""g2o ingestion and text outputs (solutions, benchmark rows).

Only the 3D quaternion tags are read::

    VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
    EDGE_SE3:QUAT   i j tx ty tz qx qy qz qw I11 I12 ... I66   (21 information entries)

Quaternions are scalar-last on input, as g2o writes them. Solution files are
scalar-first: ``id qw qx qy qz``. An edge quaternion q gives the measurement
R~_ij = rot(q), i.e. the solver's R_i are the transposes of g2o's vertex orientations.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DataError, EmptyDatasetError, G2OParseError, InvalidArgumentError
from .graph import MeasurementGraph

log = logging.getLogger(__name__)

VERTEX_TAG = "VERTEX_SE3:QUAT"
EDGE_TAG = "EDGE_SE3:QUAT"
QUAT_NORM_TOL = 1e-3
_UPPER_INFO = " ".join(
    "1" if a == b else "0" for a in range(6) for b in range(a, 6)
)


@dataclass
class Dataset:
    """A parsed g2o file.

    ``node_ids[k]`` is the original g2o id of compacted node k.
    """

    name: str
    graph: MeasurementGraph
    source_path: str
    dropped_duplicate_edges: int
    dropped_translation_fields: bool
    ignored_lines: int
    node_ids: list[int]


def quat_to_rotation(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    """Rotation from a scalar-last quaternion; rejects norms off by more than 1e-3."""
    q = np.array([qx, qy, qz, qw], dtype=float)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or abs(norm - 1.0) > QUAT_NORM_TOL:
        raise InvalidArgumentError(f"quaternion norm {norm:.6g} is not within {QUAT_NORM_TOL} of 1")
    return Rotation.from_quat(q / norm).as_matrix()


def rotation_to_quat(r: np.ndarray) -> np.ndarray:
    """Scalar-first quaternion (qw, qx, qy, qz) with qw >= 0; ties broken on qx, qy, qz."""
    x, y, z, w = Rotation.from_matrix(np.asarray(r, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    for c in q:
        if c != 0.0:
            if c < 0.0:
                q = -q
            break
    return q + 0.0  # drop negative zeros


def parse_g2o(path: str | os.PathLike) -> Dataset:
    """Read relative-rotation measurements from a g2o file.

    Node ids are compacted to [0, n) in order of first appearance. Repeated edges
    (in either direction) keep the first measurement. Unknown tags are skipped and
    counted.

    Raises:
        G2OParseError: malformed line (message carries the line number).
        DataError: bad quaternion or self-loop.
        EmptyDatasetError: no edges.
    """
    path = Path(path)
    ids: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int, np.ndarray]] = []
    duplicates = 0
    ignored = 0
    ignored_tags: set[str] = set()

    def node(raw: str, lineno: int) -> int:
        try:
            key = int(raw)
        except ValueError:
            raise G2OParseError(f"bad vertex id {raw!r}", lineno) from None
        return ids.setdefault(key, len(ids))

    def floats(tokens: list[str], lineno: int) -> list[float]:
        try:
            return [float(t) for t in tokens]
        except ValueError:
            raise G2OParseError("non-numeric field", lineno) from None

    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag == VERTEX_TAG:
                if len(tokens) != 9:
                    raise G2OParseError(f"{VERTEX_TAG} needs 8 fields, got {len(tokens) - 1}", lineno)
                floats(tokens[2:], lineno)
                node(tokens[1], lineno)
            elif tag == EDGE_TAG:
                if len(tokens) != 31:
                    raise G2OParseError(f"{EDGE_TAG} needs 30 fields, got {len(tokens) - 1}", lineno)
                vals = floats(tokens[3:], lineno)
                a, b = node(tokens[1], lineno), node(tokens[2], lineno)
                if a == b:
                    raise DataError("self-loop edge", lineno)
                try:
                    rot = quat_to_rotation(*vals[3:7])
                except InvalidArgumentError as exc:
                    raise DataError(str(exc), lineno) from None
                key = (min(a, b), max(a, b))
                if key in seen:
                    duplicates += 1
                    continue
                seen.add(key)
                edges.append((a, b, rot))
            else:
                ignored += 1
                ignored_tags.add(tag)

    if ignored_tags:
        log.warning("%s: ignored %d lines with unsupported tags %s", path, ignored, sorted(ignored_tags))
    if not edges:
        raise EmptyDatasetError(f"{path}: no {EDGE_TAG} edges")
    graph = MeasurementGraph.from_edges(len(ids), edges)
    order = sorted(ids, key=ids.get)
    return Dataset(path.stem, graph, str(path), duplicates, True, ignored, order)


def write_g2o(path: str | os.PathLike, graph: MeasurementGraph, rotations: np.ndarray | None = None) -> None:
    """Write ``graph`` as a g2o file with zero translations and identity information.

    Vertex orientations are the transposes of ``rotations`` (identity if omitted), so
    that parsing the file back reproduces the same measurements.
    """
    with open(path, "w") as fh:
        for k in range(graph.n):
            rv = np.eye(3) if rotations is None else np.asarray(rotations[k]).T
            x, y, z, w = Rotation.from_matrix(rv).as_quat().tolist()
            fh.write(f"{VERTEX_TAG} {k} 0 0 0 {x!r} {y!r} {z!r} {w!r}\n")
        for a, b, r in zip(graph.i.tolist(), graph.j.tolist(), graph.measurements):
            x, y, z, w = Rotation.from_matrix(r).as_quat().tolist()
            fh.write(f"{EDGE_TAG} {a} {b} 0 0 0 {x!r} {y!r} {z!r} {w!r} {_UPPER_INFO}\n")


def _fmt(v: float) -> str:
    return f"{v + 0.0:.17g}"


def write_solution(path: str | os.PathLike, rotations: np.ndarray, ids: Iterable[int] | None = None) -> None:
    """One line per node: ``id qw qx qy qz`` with 17 significant digits."""
    rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    ids = range(rotations.shape[0]) if ids is None else list(ids)
    with open(path, "w") as fh:
        for k, r in zip(ids, rotations):
            fh.write(f"{k} " + " ".join(_fmt(c) for c in rotation_to_quat(r)) + "\n")


def read_solution(path: str | os.PathLike) -> dict[int, np.ndarray]:
    """Inverse of :func:`write_solution`: maps id to rotation."""
    out: dict[int, np.ndarray] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if len(tokens) != 5:
                raise G2OParseError("solution lines need 'id qw qx qy qz'", lineno)
            try:
                k = int(tokens[0])
                w, x, y, z = (float(t) for t in tokens[1:])
            except ValueError:
                raise G2OParseError("non-numeric field", lineno) from None
            try:
                out[k] = quat_to_rotation(x, y, z, w)
            except InvalidArgumentError as exc:
                raise DataError(str(exc), lineno) from None
    return out


def solution_for(dataset: Dataset, solution: dict[int, np.ndarray]) -> np.ndarray:
    """Order a solution by the dataset's compacted node index."""
    missing = [k for k in dataset.node_ids if k not in solution]
    if missing:
        raise DataError(f"solution lacks node ids {missing[:5]}")
    return np.stack([solution[k] for k in dataset.node_ids])


@dataclass
class BenchRow:
    """One benchmark line: graph size, certificate, cost and timing."""

    dataset: str
    n: int
    m: int
    min_eig: float
    cost: float
    wall_time_s: float
    iterations: int
    certified: bool


BENCH_COLUMNS = ("dataset", "n", "m", "min_eig", "cost", "wall_time_s", "iterations", "certified")


def write_bench_csv(fh: IO[str], rows: Iterable[BenchRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow(
            [r.dataset, r.n, r.m, f"{r.min_eig:.6e}", f"{r.cost:.6f}", f"{r.wall_time_s:.4f}", r.iterations, int(r.certified)]
        )


def bench_row_json(row: BenchRow) -> str:
    return json.dumps(asdict(row), indent=2)
