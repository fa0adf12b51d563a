"""Seeded generators for synthetic cycle and random-graph experiments.

Randomness comes from numpy's Philox counter-based bit generator. Every stream is
derived from a ``SeedSequence`` built from the user seed plus a spawn key, so trial t
of an experiment is reproducible on its own regardless of which other trials run.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .cycle import CycleProblem
from .errors import GenerationError, InvalidArgumentError
from .graph import MeasurementGraph, PairwiseMatrix, build_pairwise_matrix, fiedler_value, is_connected
from .graph import lambda_noise_free
from .eigen import smallest_eigenpairs
from .so3 import exp_axes_angles, exp_batch, random_rotations, random_unit_vectors
from .solver import principal_angle_cosine

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy-Philox4x64-SeedSequence/v1"
FIEDLER_BINS = (0.0, 1.0, 3.0, 10.0, np.inf)
MAX_CONNECT_ATTEMPTS = 100


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional stream path such as (trial, sigma)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class CycleSpec:
    n: int
    sigma: float
    seed: int

    def __post_init__(self):
        if self.n < 3:
            raise InvalidArgumentError("cycle needs n >= 3")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")


@dataclass(frozen=True)
class GraphSpec:
    n: int
    edge_probability: float
    seed: int
    sigma: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidArgumentError("graph needs n >= 2")
        if not 0.0 < self.edge_probability <= 1.0:
            raise InvalidArgumentError("edge_probability must be in (0, 1]")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")


def perturbations(rng: np.random.Generator, count: int, sigma: float) -> np.ndarray:
    """Rotations about uniform random axes by angles drawn from N(0, sigma^2)."""
    axes = random_unit_vectors(rng, count)
    angles = rng.normal(0.0, sigma, count) if sigma > 0 else np.zeros(count)
    return exp_axes_angles(axes, angles)


def _perturb(rng: np.random.Generator, clean: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.array(clean, dtype=float)
    return perturbations(rng, clean.shape[0], sigma) @ clean


def generate_cycle(spec: CycleSpec) -> tuple[CycleProblem, np.ndarray]:
    """Planar circular trajectory R_k = rot_z(2 pi k / n) with noisy relative rotations."""
    rng = make_rng(spec.seed)
    n = spec.n
    truth = exp_batch(np.array([0.0, 0.0, 1.0]), 2.0 * np.pi * np.arange(n) / n)
    clean = truth @ np.transpose(np.roll(truth, -1, axis=0), (0, 2, 1))
    return CycleProblem(_perturb(rng, clean, spec.sigma)), truth


def _erdos_renyi(rng: np.random.Generator, n: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return iu[keep], ju[keep]


def generate_graph(spec: GraphSpec) -> tuple[MeasurementGraph, np.ndarray, PairwiseMatrix]:
    """Connected Erdos-Renyi graph with Haar-random ground truth and noisy measurements.

    Returns the noisy graph, the ground-truth rotations and the noise-free pairwise
    matrix on the same edges.

    Raises:
        GenerationError: no connected sample within 100 attempts.
    """
    rng = make_rng(spec.seed)
    for _ in range(MAX_CONNECT_ATTEMPTS):
        i, j = _erdos_renyi(rng, spec.n, spec.edge_probability)
        probe = MeasurementGraph(spec.n, i, j, np.broadcast_to(np.eye(3), (i.size, 3, 3)))
        if is_connected(probe):
            break
    else:
        raise GenerationError(
            f"no connected graph with n={spec.n}, p={spec.edge_probability} "
            f"after {MAX_CONNECT_ATTEMPTS} attempts"
        )
    truth = random_rotations(rng, spec.n)
    clean = truth[i] @ np.transpose(truth[j], (0, 2, 1))
    noisy = _perturb(rng, clean, spec.sigma)
    graph = MeasurementGraph(spec.n, i, j, noisy)
    clean_matrix = build_pairwise_matrix(MeasurementGraph(spec.n, i, j, clean))
    return graph, truth, clean_matrix


def generate_grid(side: int, sigma: float, seed: int, dims: int = 2) -> tuple[MeasurementGraph, np.ndarray]:
    """Lattice graph (``side`` ** ``dims`` nodes, nearest-neighbour edges) with noisy measurements."""
    rng = make_rng(seed)
    shape = (side,) * dims
    n = int(np.prod(shape))
    ids = np.arange(n).reshape(shape)
    src, dst = [], []
    for ax in range(dims):
        a = np.take(ids, range(side - 1), axis=ax).ravel()
        b = np.take(ids, range(1, side), axis=ax).ravel()
        src.append(a)
        dst.append(b)
    i, j = np.concatenate(src), np.concatenate(dst)
    truth = random_rotations(rng, n)
    clean = truth[i] @ np.transpose(truth[j], (0, 2, 1))
    return MeasurementGraph(n, i, j, _perturb(rng, clean, sigma)), truth


def fiedler_bin(rho: float) -> int:
    """Index of the bin [0,1), [1,3), [3,10), [10,inf) containing ``rho``."""
    return int(np.searchsorted(FIEDLER_BINS, rho, side="right") - 1)


def fiedler_bin_label(b: int) -> str:
    lo, hi = FIEDLER_BINS[b], FIEDLER_BINS[b + 1]
    return f"[{lo:g},{hi:g})"


@dataclass(frozen=True)
class TrialRow:
    trial: int
    n: int
    sigma: float
    fiedler: float
    cosine: float


@dataclass(frozen=True)
class BinRow:
    fiedler_bin: str
    sigma: float
    mean_cosine: float
    count: int


@dataclass
class ExperimentResult:
    trials: list[TrialRow]
    bins: list[BinRow]
    failures: int
    rng_algorithm: str = RNG_ALGORITHM


def bottom_subspace_cosine(graph: MeasurementGraph, truth: np.ndarray) -> float:
    """Principal-angle cosine between the ground-truth kernel and bottom-3 eigenspace of Lambda_nf - R~."""
    m = build_pairwise_matrix(graph)
    eig = smallest_eigenpairs(m.to_sparse(lambda_noise_free(graph)), 3)
    # The kernel of Lambda_nf - R~_nf is spanned by the stacked ground truth; scaling
    # by 1/sqrt(n) makes its columns orthonormal.
    u_nf = truth.reshape(-1, 3) / np.sqrt(graph.n)
    return principal_angle_cosine(eig.eigenvectors, u_nf)


def principal_angle_experiment(
    n: int,
    sigmas: Sequence[float],
    trials: int,
    seed: int,
    edge_probability: tuple[float, float] = (0.06, 0.6),
) -> ExperimentResult:
    """Subspace-closeness study over random graphs of varying connectivity.

    Each trial draws an edge probability uniformly from ``edge_probability``, a
    connected Erdos-Renyi topology and ground truth, then one noise realisation per
    sigma on that topology. Failed generations are counted and skipped.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    rows: list[TrialRow] = []
    failures = 0
    for t in range(trials):
        rng = make_rng(seed, t)
        p = float(rng.uniform(*edge_probability))
        try:
            graph, truth, _ = generate_graph(GraphSpec(n, p, int(rng.integers(2**63)), 0.0))
        except GenerationError:
            failures += 1
            continue
        rho = fiedler_value(graph)
        for s_idx, sigma in enumerate(sigmas):
            noisy = _perturb(make_rng(seed, t, s_idx + 1), graph.measurements, float(sigma))
            trial_graph = MeasurementGraph(graph.n, graph.i, graph.j, noisy)
            rows.append(TrialRow(t, n, float(sigma), rho, bottom_subspace_cosine(trial_graph, truth)))
    return ExperimentResult(rows, aggregate_by_bin(rows), failures)


def aggregate_by_bin(rows: Sequence[TrialRow]) -> list[BinRow]:
    out = []
    sigmas = sorted({r.sigma for r in rows})
    for sigma in sigmas:
        for b in range(len(FIEDLER_BINS) - 1):
            vals = [r.cosine for r in rows if r.sigma == sigma and fiedler_bin(r.fiedler) == b]
            if vals:
                out.append(BinRow(fiedler_bin_label(b), sigma, float(np.mean(vals)), len(vals)))
    return out


def write_trials_csv(fh: IO[str], rows: Sequence[TrialRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["trial", "n", "sigma", "fiedler", "cosine"])
    for r in rows:
        w.writerow([r.trial, r.n, repr(r.sigma), repr(r.fiedler), repr(r.cosine)])


def write_bins_csv(fh: IO[str], rows: Sequence[BinRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["fiedler_bin", "sigma", "mean_cosine", "count"])
    for r in rows:
        w.writerow([r.fiedler_bin, repr(r.sigma), repr(r.mean_cosine), r.count])
