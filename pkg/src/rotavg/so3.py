"""Kernels for 3D rotations: exp/log, angles, n-th roots and Procrustes projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjectionError, InvalidArgumentError

SMALL_ANGLE = 1e-6
# Above this angle the axis is read from the symmetric part of R.
_NEAR_PI = np.pi - 1e-3
_ROTATION_TOL = 1e-6
_CANONICAL_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class AxisAngle:
    """A rotation as a unit axis and an angle in [0, pi]."""

    axis: np.ndarray
    angle: float

    def as_rotvec(self) -> np.ndarray:
        return self.axis * self.angle


@dataclass(frozen=True)
class RootSet:
    """The n rotations E_k with E_k^n = E, sharing E's axis.

    ``roots[k]`` is the rotation by ``base_angle / n - 2*pi*k / n`` about ``axis``.
    """

    roots: np.ndarray
    axis: np.ndarray
    base_angle: float

    @property
    def n(self) -> int:
        return self.roots.shape[0]

    def root_angle(self, k: int) -> float:
        """Signed angle of root ``k`` about ``axis``."""
        return self.base_angle / self.n - 2.0 * np.pi * k / self.n


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix [v]_x such that [v]_x @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat` applied to the skew part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def canonical_axis_sign(axis: np.ndarray) -> np.ndarray:
    """Flip ``axis`` so that its first nonzero component is positive."""
    for c in axis:
        if c != 0.0:
            return axis if c > 0.0 else -axis
    return axis


def is_rotation(r: np.ndarray, tol: float = 1e-12) -> bool:
    """True if ``r`` is 3x3 with ||R^T R - I||_F <= tol and |det R - 1| <= tol."""
    r = np.asarray(r)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return bool(
        np.linalg.norm(r.T @ r - np.eye(3)) <= tol and abs(np.linalg.det(r) - 1.0) <= tol
    )


def _check_rotation(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if not is_rotation(r, _ROTATION_TOL):
        raise InvalidArgumentError("input is not a rotation matrix")
    return r


def exp_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation by ``angle`` radians about the unit vector ``axis``.

    Any real angle is accepted; negative angles rotate clockwise about ``axis``.

    Raises:
        InvalidArgumentError: if ``axis`` is not unit length (tolerance 1e-9).
    """
    axis = np.asarray(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"axis must be a unit vector, got norm {np.linalg.norm(axis)}")
    k = hat(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def exp_batch(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotations about one fixed unit axis by each of ``angles``; shape (len(angles), 3, 3)."""
    k = hat(axis)
    k2 = k @ k
    angles = np.asarray(angles, dtype=float)
    return (
        np.eye(3)
        + np.sin(angles)[:, None, None] * k
        + (1.0 - np.cos(angles))[:, None, None] * k2
    )


def exp_rotvec(v: np.ndarray) -> np.ndarray:
    """Exponential map of a rotation vector (axis * angle)."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = float(np.linalg.norm(v))
    if theta < SMALL_ANGLE:
        k = hat(v)
        return np.eye(3) + k + 0.5 * (k @ k)
    return exp_axis_angle(v / theta, theta)


def angle_of(r: np.ndarray) -> float:
    """Rotation angle in [0, pi].

    Equals arccos((tr R - 1) / 2); evaluated as atan2 of the skew and trace parts,
    which stays accurate near 0 and pi where arccos loses half the digits.
    """
    r = np.asarray(r, dtype=float)
    c = 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)
    s = float(np.linalg.norm(vee(r)))
    return float(np.arctan2(s, c))


def angles_of(rs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`angle_of` over a stack of shape (m, 3, 3)."""
    rs = np.asarray(rs, dtype=float)
    c = 0.5 * (np.trace(rs, axis1=1, axis2=2) - 1.0)
    w = 0.5 * np.stack(
        [rs[:, 2, 1] - rs[:, 1, 2], rs[:, 0, 2] - rs[:, 2, 0], rs[:, 1, 0] - rs[:, 0, 1]],
        axis=1,
    )
    return np.arctan2(np.linalg.norm(w, axis=1), c)


def log_rotation(r: np.ndarray) -> AxisAngle:
    """Axis and angle of a rotation, with angle in [0, pi].

    The identity maps to axis (0, 0, 1). At angle pi the two axis signs describe the
    same rotation and the one with a positive first nonzero component is returned.

    Raises:
        InvalidArgumentError: if ``r`` is not a rotation (tolerance 1e-6).
    """
    r = _check_rotation(r)
    w = vee(r)
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(r) - 1.0)
    theta = float(np.arctan2(s, c))

    if theta < SMALL_ANGLE:
        if s == 0.0:
            return AxisAngle(_CANONICAL_AXIS.copy(), 0.0)
        # Rescale first: squaring tiny components underflows to subnormals.
        u = w / np.max(np.abs(w))
        return AxisAngle(u / np.linalg.norm(u), theta)

    if theta > _NEAR_PI:
        # sym(R) - cos(theta) I = (1 - cos(theta)) n n^T
        b = 0.5 * (r + r.T) - c * np.eye(3)
        col = int(np.argmax(np.diag(b)))
        axis = b[:, col] / np.sqrt(b[col, col])
        axis /= np.linalg.norm(axis)
        d = float(axis @ w)
        if abs(d) > 1e-14:
            axis = axis if d > 0.0 else -axis
        else:
            theta = np.pi
            axis = canonical_axis_sign(axis)
        return AxisAngle(axis, theta)

    return AxisAngle(w / s, theta)


def nth_roots(e: np.ndarray, n: int) -> RootSet:
    """All n rotations E_k about E's axis with E_k^n = E.

    With (axis, gamma) = log_rotation(E), root k rotates by gamma/n - 2*k*pi/n.
    Root 0 is the one closest to the identity.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    n = int(n)
    aa = log_rotation(e)
    angles = aa.angle / n - 2.0 * np.pi * np.arange(n) / n
    return RootSet(exp_batch(aa.axis, angles), aa.axis, aa.angle)


def project_to_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``m`` in Frobenius norm (SVD with determinant fix).

    Raises:
        InvalidArgumentError: non-finite or non-3x3 input.
        DegenerateProjectionError: two or more vanishing singular values.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise InvalidArgumentError("expected a finite 3x3 matrix")
    return project_blocks(m[None])[0]


def project_blocks(blocks: np.ndarray) -> np.ndarray:
    """Batched :func:`project_to_rotation` over shape (n, 3, 3)."""
    blocks = np.asarray(blocks, dtype=float)
    u, s, vt = np.linalg.svd(blocks)
    scale = np.maximum(s[:, 0], np.finfo(float).tiny)
    if np.any(s[:, 1] <= 1e-12 * scale):
        bad = int(np.flatnonzero(s[:, 1] <= 1e-12 * scale)[0])
        raise DegenerateProjectionError(f"block {bad} has rank <= 1; nearest rotation is not unique")
    d = np.sign(np.linalg.det(u @ vt))
    u[:, :, 2] *= d[:, None]
    return u @ vt


def exp_axes_angles(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Batched Rodrigues formula for unit ``axes`` (m, 3) and ``angles`` (m,)."""
    axes = np.asarray(axes, dtype=float)
    angles = np.asarray(angles, dtype=float)
    k = np.zeros((axes.shape[0], 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -axes[:, 2], axes[:, 1]
    k[:, 1, 0], k[:, 1, 2] = axes[:, 2], -axes[:, 0]
    k[:, 2, 0], k[:, 2, 1] = -axes[:, 1], axes[:, 0]
    return (
        np.eye(3)
        + np.sin(angles)[:, None, None] * k
        + (1.0 - np.cos(angles))[:, None, None] * (k @ k)
    )


def random_rotations(rng: np.random.Generator, count: int) -> np.ndarray:
    """Haar-uniform rotations from QR decompositions of Gaussian matrices."""
    q, r = np.linalg.qr(rng.standard_normal((count, 3, 3)))
    q = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    flip = np.linalg.det(q) < 0
    q[flip, :, 0] *= -1.0
    return q


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """A single Haar-uniform rotation."""
    return random_rotations(rng, 1)[0]


def random_unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform directions on the sphere from normalized standard Gaussians."""
    v = rng.standard_normal((count, 3))
    norm = np.linalg.norm(v, axis=1)
    while np.any(norm < 1e-12):
        bad = norm < 1e-12
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norm = np.linalg.norm(v, axis=1)
    return v / norm[:, None]


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    return random_unit_vectors(rng, 1)[0]


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Angle of the relative rotation a^T b."""
    return angle_of(np.asarray(a).T @ np.asarray(b))
