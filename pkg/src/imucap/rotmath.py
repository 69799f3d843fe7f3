"""
Rotation representations and conversions.

Every function is batch-vectorized: leading dimensions are batch dimensions,
rotation matrices have shape ``(*, 3, 3)`` and 6D rotations ``(*, 6)``.

6D layout: the first two *columns* of the matrix, concatenated,
``(R[0,0], R[1,0], R[2,0], R[0,1], R[1,1], R[2,1])``.
"""

import numpy as np

from .errors import DegenerateInput

_EPS = 1e-8


def rot6d_to_matrix(r6d, strict=True):
    """
    Convert 6D rotations to rotation matrices by Gram-Schmidt.

    Parameters
    ----------
    r6d : array_like, shape (*, 6)
        Two (not necessarily orthonormal) columns.
    strict : bool
        If True, raise :class:`DegenerateInput` when the first column is
        near zero or the columns are near parallel. If False, degenerate
        columns are repaired with a fixed fallback axis so the result is
        always a valid rotation (used on raw network outputs).

    Returns
    -------
    ndarray, shape (*, 3, 3)
    """
    r6d = np.asarray(r6d, dtype=np.float64)
    c1 = r6d[..., 0:3]
    c2 = r6d[..., 3:6]

    n1 = np.linalg.norm(c1, axis=-1, keepdims=True)
    bad1 = n1 < _EPS
    if strict and np.any(bad1):
        raise DegenerateInput("first 6D column is (near) zero")
    if np.any(bad1):
        c1 = np.where(bad1, np.array([1.0, 0.0, 0.0]), c1)
        n1 = np.where(bad1, 1.0, n1)
    x = c1 / n1

    y = c2 - np.sum(x * c2, axis=-1, keepdims=True) * x
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    n2 = np.linalg.norm(c2, axis=-1, keepdims=True)
    bad2 = ny < _EPS * np.maximum(n2, 1.0)
    if strict and np.any(bad2):
        raise DegenerateInput("6D columns are (near) parallel")
    if np.any(bad2):
        # any axis not parallel to x works; pick the one least aligned with it
        axis = np.eye(3)[np.argmin(np.abs(x), axis=-1)]
        alt = axis - np.sum(x * axis, axis=-1, keepdims=True) * x
        y = np.where(bad2, alt, y)
        ny = np.linalg.norm(y, axis=-1, keepdims=True)
    y = y / ny
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=-1)


def matrix_to_rot6d(R):
    """Drop the third column: ``(*, 3, 3) -> (*, 6)``."""
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def compose(Ra, Rb):
    """Matrix product ``Ra @ Rb`` (apply ``Rb`` first)."""
    return np.matmul(Ra, Rb)


def inverse(R):
    return np.swapaxes(np.asarray(R), -1, -2)


def geodesic_angle_deg(Ra, Rb):
    """
    Angle of the relative rotation ``Ra^T Rb`` in degrees, in [0, 180].

    Uses ``atan2(|skew part| / 2, (trace - 1) / 2)``, which stays accurate
    near 0 and 180 degrees where the plain arccos of the trace does not.
    """
    Ra = np.asarray(Ra, dtype=np.float64)
    Rb = np.asarray(Rb, dtype=np.float64)
    M = np.swapaxes(Ra, -1, -2) @ Rb
    cos = (np.trace(M, axis1=-2, axis2=-1) - 1.0) / 2.0
    v = np.stack([M[..., 2, 1] - M[..., 1, 2],
                  M[..., 0, 2] - M[..., 2, 0],
                  M[..., 1, 0] - M[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(v, axis=-1) / 2.0
    return np.degrees(np.arctan2(sin, cos))


def axis_angle_to_matrix(aa):
    """Rodrigues formula, ``(*, 3) -> (*, 3, 3)``; the vector norm is the angle in radians."""
    aa = np.asarray(aa, dtype=np.float64)
    theta = np.linalg.norm(aa, axis=-1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    k = aa / safe[..., None]
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack([
        np.stack([zero, -kz, ky], axis=-1),
        np.stack([kz, zero, -kx], axis=-1),
        np.stack([-ky, kx, zero], axis=-1),
    ], axis=-2)
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    R = np.eye(3) + s * K + (1.0 - c) * (K @ K)
    return np.where(small[..., None, None], np.eye(3), R)


def matrix_to_axis_angle(R):
    """Inverse of :func:`axis_angle_to_matrix` (angle in [0, pi])."""
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    v = np.stack([R[..., 2, 1] - R[..., 1, 2],
                  R[..., 0, 2] - R[..., 2, 0],
                  R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    s = np.sin(theta)
    out = np.empty(R.shape[:-2] + (3,))
    regular = s > 1e-6
    out[regular] = (v[regular] * (theta[regular] / (2.0 * s[regular]))[..., None])
    near_zero = (~regular) & (theta < 1.0)
    out[near_zero] = 0.5 * v[near_zero]
    near_pi = (~regular) & (theta >= 1.0)
    if np.any(near_pi):
        Rp = R[near_pi]
        B = (Rp + np.eye(3)) / 2.0
        idx = np.argmax(np.diagonal(B, axis1=-2, axis2=-1), axis=-1)
        axis = B[np.arange(len(Rp)), :, idx]
        axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
        out[near_pi] = axis * theta[near_pi][..., None]
    return out


def rot_x(angle):
    return _elementary(angle, 0)


def rot_y(angle):
    return _elementary(angle, 1)


def rot_z(angle):
    return _elementary(angle, 2)


def _elementary(angle, axis):
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == 0:
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == 1:
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def project_to_rotation(M):
    """Nearest rotation matrix in Frobenius norm (SVD with a determinant fix)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.ones(U.shape[:-1])
    D[..., -1] = d
    return (U * D[..., None, :]) @ Vt


def chordal_mean(Rs, axis=0):
    """Rotation average: arithmetic mean of matrices projected to SO(3)."""
    Rs = np.asarray(Rs, dtype=np.float64)
    return project_to_rotation(Rs.mean(axis=axis))


def random_rotation(rng, size=()):
    """Uniformly distributed rotations (via unit quaternions)."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    q = rng.normal(size=shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=np.float64)
    eye_err = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max(initial=0.0)
    det_err = np.abs(np.linalg.det(R) - 1.0).max(initial=0.0)
    return bool(eye_err <= tol and det_err <= tol)
