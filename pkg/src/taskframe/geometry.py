"""Rotations, poses and screws: the exact small-matrix kinematics core.

Conventions used throughout the package:

* a rotation matrix ``R`` holds the basis vectors of the described frame as
  columns, expressed in the reference frame;
* a ``Pose`` ``(R, p)`` is the pose of a frame with respect to a reference
  frame, i.e. it maps coordinates of that frame into the reference frame;
* a ``Screw`` is a 6-vector ``(directional, moment)`` whose moment component
  is referenced at the origin of the expression frame.  Twists are
  ``(omega, v)``, wrenches ``(f, m)`` and displacement screws ``(r, u)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


class FrameTag(enum.Enum):
    """Viewpoint a task-frame component can be rigidly fixed to."""

    WORLD = "world"
    TOOL = "tool"


class ScrewKind(enum.Enum):
    TWIST = "twist"
    WRENCH = "wrench"
    DISPLACEMENT = "displacement"


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`; antisymmetrizes its input first."""
    return 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])


def check_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Validate that ``R`` is a right-handed orthonormal 3x3 matrix."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation matrix must be 3x3, got {R.shape}")
    if not np.allclose(R @ R.T, np.eye(3), atol=tol, rtol=0.0):
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation matrix is not right-handed")
    return R


@dataclass
class Pose:
    """Rigid-body pose: rotation matrix plus origin position [m]."""

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        self.rotation = check_rotation(self.rotation)
        self.position = np.asarray(self.position, dtype=float).reshape(3)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4) or not np.allclose(T[3], [0, 0, 0, 1], atol=1e-12):
            raise ValueError("not a homogeneous 4x4 pose matrix")
        return Pose(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.position)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.position + self.position)

    def transform_point(self, q: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(q, dtype=float) + self.position


@dataclass
class Screw:
    """General screw: directional part plus moment part at the frame origin.

    The kind is fixed at construction; arithmetic between screws of
    different kinds is rejected.
    """

    directional: np.ndarray
    moment: np.ndarray
    kind: ScrewKind

    def __post_init__(self):
        self.directional = np.asarray(self.directional, dtype=float).reshape(3)
        self.moment = np.asarray(self.moment, dtype=float).reshape(3)
        if not isinstance(self.kind, ScrewKind):
            self.kind = ScrewKind(self.kind)

    @staticmethod
    def twist(omega, v) -> "Screw":
        return Screw(omega, v, ScrewKind.TWIST)

    @staticmethod
    def wrench(f, m) -> "Screw":
        return Screw(f, m, ScrewKind.WRENCH)

    @staticmethod
    def displacement(r, u) -> "Screw":
        return Screw(r, u, ScrewKind.DISPLACEMENT)

    @staticmethod
    def from_array(s: np.ndarray, kind: ScrewKind) -> "Screw":
        s = np.asarray(s, dtype=float).reshape(6)
        return Screw(s[:3], s[3:], kind)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.directional, self.moment])

    def _check_kind(self, other: "Screw"):
        if self.kind is not other.kind:
            raise ValueError(f"cannot mix screw kinds {self.kind.value} and {other.kind.value}")

    def __add__(self, other: "Screw") -> "Screw":
        self._check_kind(other)
        return Screw(self.directional + other.directional, self.moment + other.moment, self.kind)

    def __sub__(self, other: "Screw") -> "Screw":
        self._check_kind(other)
        return Screw(self.directional - other.directional, self.moment - other.moment, self.kind)

    def __mul__(self, c: float) -> "Screw":
        return Screw(self.directional * c, self.moment * c, self.kind)

    __rmul__ = __mul__

    def pitch(self) -> float:
        """Screw pitch a.b / |a|^2; undefined (raises) for vanishing direction."""
        n2 = float(self.directional @ self.directional)
        if n2 < 1e-18:
            raise ValueError("pitch undefined for vanishing directional part")
        return float(self.directional @ self.moment) / n2


# --- exponential and logarithmic maps -------------------------------------

def rot_exp(r: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation vector (Rodrigues form)."""
    r = np.asarray(r, dtype=float).reshape(3)
    theta = np.linalg.norm(r)
    W = hat(r)
    if theta < 1e-4:
        # series of sin(t)/t and (1-cos t)/t^2; avoids cancellation
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * W + b * (W @ W)


def rot_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix, with norm in [0, pi].

    The branch near pi recovers the axis from the symmetric part of R,
    which stays well-conditioned where the sin-based formula degenerates.
    """
    R = np.asarray(R, dtype=float)
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(tr)
    s = vee(R - R.T)  # = sin(theta) * axis
    if theta < 1e-6:
        return s * (1.0 + theta**2 / 6.0)
    if theta > np.pi - 1e-6:
        # axis magnitudes from the diagonal, relative signs from the
        # symmetric off-diagonals, overall sign from the skew part when
        # it is still informative
        d = np.clip((np.diag(R) + 1.0) / 2.0, 0.0, 1.0)
        k = int(np.argmax(d))
        n = np.zeros(3)
        n[k] = np.sqrt(d[k])
        one_minus_cos = 1.0 - tr
        for j in range(3):
            if j != k:
                n[j] = (R[k, j] + R[j, k]) / (2.0 * one_minus_cos * n[k])
        n /= np.linalg.norm(n)
        if s @ n < 0.0:
            n = -n
        return theta * n
    return s * theta / np.sin(theta)


def _translation_factor(r: np.ndarray) -> np.ndarray:
    # V(r) such that exp of the displacement screw has position V(r) u
    theta = np.linalg.norm(r)
    W = hat(r)
    if theta < 1e-4:
        b = 0.5 - theta**2 / 24.0
        c = 1.0 / 6.0 - theta**2 / 120.0
    else:
        b = (1.0 - np.cos(theta)) / theta**2
        c = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + b * W + c * (W @ W)


def _translation_factor_inv(r: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(r)
    W = hat(r)
    if theta < 1e-4:
        c = 1.0 / 12.0 + theta**2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
        c = (1.0 - a / (2.0 * b)) / theta**2
    return np.eye(3) - 0.5 * W + c * (W @ W)


def pose_exp(d: Screw) -> Pose:
    """Pose for a displacement screw (matrix exponential of its 4x4 form)."""
    if d.kind is not ScrewKind.DISPLACEMENT:
        raise ValueError("pose_exp expects a displacement screw")
    R = rot_exp(d.directional)
    return Pose(R, _translation_factor(d.directional) @ d.moment)


def pose_log(T: Pose) -> Screw:
    """Displacement screw of a pose; inverse of :func:`pose_exp`."""
    r = rot_log(T.rotation)
    u = _translation_factor_inv(r) @ T.position
    return Screw.displacement(r, u)


# --- frame changes ---------------------------------------------------------

def similarity_transform(T_ba: Pose, T_ca: Pose) -> Pose:
    """Relative pose ``T_ba`` observed from frame c: ``T_ca^-1 T_ba T_ca``."""
    return T_ca.inverse() @ T_ba @ T_ca


def screw_transform_matrix(T_ba: Pose) -> np.ndarray:
    """6x6 matrix mapping screws expressed in frame b to frame a."""
    S = np.zeros((6, 6))
    S[:3, :3] = T_ba.rotation
    S[3:, 3:] = T_ba.rotation
    S[3:, :3] = hat(T_ba.position) @ T_ba.rotation
    return S


def screw_transform(T_ba: Pose, s_b: Screw) -> Screw:
    """Express a screw given in frame b in frame a; the kind is preserved."""
    a = T_ba.rotation @ s_b.directional
    b = T_ba.rotation @ s_b.moment + np.cross(T_ba.position, a)
    return Screw(a, b, s_b.kind)


def change_reference_point(s: Screw, p_from: np.ndarray, p_to: np.ndarray) -> Screw:
    """Reference-point change of the moment component, all in one frame.

    Moment correction is cross(p_to - p_from, directional); the directional
    part is untouched.
    """
    delta = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    return Screw(s.directional, s.moment + np.cross(delta, s.directional), s.kind)


def moment_at(s: Screw, point: np.ndarray) -> np.ndarray:
    """Moment field of the screw evaluated at ``point``.

    For a twist this is the velocity of the body point there, for a wrench
    the moment about that point.
    """
    return s.moment + np.cross(s.directional, np.asarray(point, dtype=float))


# --- batched array helpers --------------------------------------------------
# Trajectory-scale code works on stacked arrays: rotations (N,3,3),
# positions (N,3), screws (N,6).

def transform_screws(rotations: np.ndarray, positions: np.ndarray,
                     screws: np.ndarray) -> np.ndarray:
    """Apply the screw transformation sample-wise to an (N,6) array."""
    screws = np.atleast_2d(np.asarray(screws, dtype=float))
    rotations = np.asarray(rotations, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if rotations.ndim == 2:
        a = screws[:, :3] @ rotations.T
        b = screws[:, 3:] @ rotations.T + np.cross(positions[None, :], a)
    else:
        a = np.einsum("nij,nj->ni", rotations, screws[:, :3])
        b = np.einsum("nij,nj->ni", rotations, screws[:, 3:]) + np.cross(positions, a)
    return np.hstack([a, b])


def moments_at_points(screws: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Moment field of each screw at the matching point ((N,6),(N,3) or (3,))."""
    screws = np.asarray(screws, dtype=float)
    return screws[:, 3:] + np.cross(screws[:, :3], np.asarray(points, dtype=float))


def _three_point_weights(t0: float, t1: float, t2: float, at: float) -> np.ndarray:
    # derivative of the Lagrange basis on nodes (t0,t1,t2) evaluated at `at`
    w0 = (2.0 * at - t1 - t2) / ((t0 - t1) * (t0 - t2))
    w1 = (2.0 * at - t0 - t2) / ((t1 - t0) * (t1 - t2))
    w2 = (2.0 * at - t0 - t1) / ((t2 - t0) * (t2 - t1))
    return np.array([w0, w1, w2])


def differentiate_pose_arrays(rotations: np.ndarray, positions: np.ndarray,
                              times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-frame twists (omega, v at the frame origin) from pose samples.

    Second-order differences: central in the interior, one-sided 3-point at
    both ends.  Requires at least 3 samples and strictly increasing times.
    """
    rotations = np.asarray(rotations, dtype=float)
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    n = len(times)
    if n < 3:
        raise ValueError("insufficient samples: pose differentiation needs >= 3")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be strictly increasing")

    dR = np.empty_like(rotations)
    dp = np.empty_like(positions)
    # interior: nonuniform central stencil (k-1, k, k+1)
    t0, t1, t2 = times[:-2], times[1:-1], times[2:]
    w0 = (t1 - t2) / ((t0 - t1) * (t0 - t2))
    w1 = (2 * t1 - t0 - t2) / ((t1 - t0) * (t1 - t2))
    w2 = (t1 - t0) / ((t2 - t0) * (t2 - t1))
    dR[1:-1] = (w0[:, None, None] * rotations[:-2]
                + w1[:, None, None] * rotations[1:-1]
                + w2[:, None, None] * rotations[2:])
    dp[1:-1] = w0[:, None] * positions[:-2] + w1[:, None] * positions[1:-1] \
        + w2[:, None] * positions[2:]
    # one-sided ends
    wl = _three_point_weights(times[0], times[1], times[2], times[0])
    wr = _three_point_weights(times[-3], times[-2], times[-1], times[-1])
    dR[0] = wl[0] * rotations[0] + wl[1] * rotations[1] + wl[2] * rotations[2]
    dp[0] = wl[0] * positions[0] + wl[1] * positions[1] + wl[2] * positions[2]
    dR[-1] = wr[0] * rotations[-3] + wr[1] * rotations[-2] + wr[2] * rotations[-1]
    dp[-1] = wr[0] * positions[-3] + wr[1] * positions[-2] + wr[2] * positions[-1]

    # [omega]x = skew part of dR R^T ; v at origin = dp - omega x p
    M = np.einsum("nij,nkj->nik", dR, rotations)
    omega = 0.5 * np.stack([M[:, 2, 1] - M[:, 1, 2],
                            M[:, 0, 2] - M[:, 2, 0],
                            M[:, 1, 0] - M[:, 0, 1]], axis=1)
    v = dp - np.cross(omega, positions)
    return omega, v


def differentiate_poses(poses, times) -> list[Screw]:
    """Numerically differentiate a pose sequence into world-frame twists."""
    rotations = np.stack([p.rotation for p in poses])
    positions = np.stack([p.position for p in poses])
    omega, v = differentiate_pose_arrays(rotations, positions, np.asarray(times, dtype=float))
    return [Screw.twist(w, vv) for w, vv in zip(omega, v)]
