"""SE(3) / screw algebra kernel.

Conventions used throughout the package:

- A pose is a 4x4 homogeneous transform ``C`` mapping body-frame
  coordinates to the inertial frame.
- A twist / screw is a 6-vector ordered (angular; linear).
- ``adjoint(C)`` maps body-frame screws to inertial-frame screws, so the
  two forms of a joint screw are related by ``Y = adjoint(C) @ X``.
- ``ad(X) @ Y`` is the screw product (Lie bracket) of two 6-vectors.

All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricWeights:
    """Weights of the left-invariant twist norm ``alpha*|w| + beta*|v|``.

    There is no bi-invariant metric on SE(3); the relative scaling of the
    rotational and translational parts is a modelling choice.  Both weights
    default to 1, which is adequate for mechanisms of roughly unit size.
    """

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("metric weights must be non-negative")
        if self.alpha == 0.0 and self.beta == 0.0:
            raise ValueError("metric weights must not both be zero")


def skew(v):
    """3x3 skew-symmetric matrix of a 3-vector, so that skew(a) @ b = a x b."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m):
    """Inverse of :func:`skew` (uses the strictly lower/upper triangle)."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def hat(x):
    """se(3) matrix of a 6-vector (angular; linear)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = skew(x[:3])
    out[:3, 3] = x[3:]
    return out


def vee(m, tol=1e-12):
    """6-vector of an se(3) matrix; rejects input that is not se(3).

    The upper-left 3x3 block must be skew-symmetric and the last row zero,
    to within ``tol``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError("vee expects a 4x4 matrix")
    if np.abs(m[:3, :3] + m[:3, :3].T).max() > tol or np.abs(m[3, :]).max() > tol:
        raise ValueError("matrix is not in se(3) within tolerance")
    return np.concatenate([unskew(m[:3, :3]), m[:3, 3]])


def _exp_coeffs(phi):
    # sin(phi)/phi, (1-cos(phi))/phi^2, (phi-sin(phi))/phi^3, Taylor for small phi
    if phi < 1e-6:
        phi2 = phi * phi
        a = 1.0 - phi2 / 6.0 * (1.0 - phi2 / 20.0)
        b = 0.5 - phi2 / 24.0 * (1.0 - phi2 / 30.0)
        c = 1.0 / 6.0 - phi2 / 120.0 * (1.0 - phi2 / 42.0)
        return a, b, c
    s, co = np.sin(phi), np.cos(phi)
    return s / phi, (1.0 - co) / phi**2, (phi - s) / phi**3


def exp_se3(screw, theta=1.0):
    """Matrix exponential exp(theta * hat(screw)) as a 4x4 pose.

    Closed form (Rodrigues for the rotation block); the coefficient
    functions switch to their Taylor series when ``theta*|angular|`` is
    small to avoid cancellation.
    """
    xi = theta * np.asarray(screw, dtype=float)
    w, v = xi[:3], xi[3:]
    phi = np.linalg.norm(w)
    out = np.eye(4)
    if phi == 0.0:
        out[:3, 3] = v
        return out
    a, b, c = _exp_coeffs(phi)
    wx = skew(w)
    wx2 = wx @ wx
    out[:3, :3] = np.eye(3) + a * wx + b * wx2
    out[:3, 3] = (np.eye(3) + b * wx + c * wx2) @ v
    return out


def pose(rotation, translation):
    """Assemble a 4x4 pose from a 3x3 rotation and a 3-vector."""
    out = np.eye(4)
    out[:3, :3] = rotation
    out[:3, 3] = translation
    return out


def pose_inverse(c):
    """Inverse of a pose, using the rotation-block transpose."""
    r = c[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ c[:3, 3]
    return out


def pose_compose(c1, c2):
    """Composition c1 @ c2 (kept as a named op for API symmetry)."""
    return c1 @ c2


def is_rotation(r, tol=1e-9):
    """Check orthogonality and det +1 of a 3x3 block within tol."""
    return np.abs(r.T @ r - np.eye(3)).max() <= tol and np.linalg.det(r) > 0.0


def adjoint(c):
    """6x6 adjoint of a pose: blocks [[R, 0], [skew(p) R, R]]."""
    r = c[:3, :3]
    p = c[:3, 3]
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[3:, :3] = skew(p) @ r
    out[3:, 3:] = r
    return out


def adjoint_inverse(c):
    """Adjoint of the inverse pose, without forming the inverse."""
    r = c[:3, :3]
    p = c[:3, 3]
    out = np.zeros((6, 6))
    rt = r.T
    out[:3, :3] = rt
    out[3:, :3] = -rt @ skew(p)
    out[3:, 3:] = rt
    return out


def ad(x):
    """6x6 matrix of the screw product: ad(X) @ Y = [X, Y]."""
    x = np.asarray(x, dtype=float)
    wx = skew(x[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = wx
    out[3:, :3] = skew(x[3:])
    out[3:, 3:] = wx
    return out


def twist_norm(x, weights=MetricWeights()):
    """Left-invariant norm alpha*|angular| + beta*|linear| of a 6-vector."""
    x = np.asarray(x, dtype=float)
    return weights.alpha * np.linalg.norm(x[:3]) + weights.beta * np.linalg.norm(x[3:])


def revolute_screw(point, axis):
    """Screw coordinates (e; y x e) of a zero-pitch axis through ``point``."""
    e = np.asarray(axis, dtype=float)
    y = np.asarray(point, dtype=float)
    return np.concatenate([e, np.cross(y, e)])


def prismatic_screw(axis):
    """Screw coordinates (0; e) of a pure translation along ``axis``."""
    return np.concatenate([np.zeros(3), np.asarray(axis, dtype=float)])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
