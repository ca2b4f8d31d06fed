"""Task-frame derivation pipeline.

Reduces a batch of demonstrated twist/wrench data to a task frame:

1. origin: eight intersection-point estimates ({twist, wrench} x
   {as-is, mean-subtracted} x {world, tool}) are reduced by covariance
   determinant comparisons and inverse-covariance fusion;
2. orientation: four direction-frame estimates (motion/wrench vector of
   interest x viewpoint) are aligned, optionally reweighted, and averaged
   on the rotation group;
3. the vectors of interest and the progress-rate definition follow from
   the selected decoupling models.

Every binary decision carries a significance ratio (square root of the
covariance determinant ratio); all candidates are kept for reporting.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .estimators import AsipResult, AvofResult, asip, avof, mean_subtract
from .geometry import FrameTag, Pose, hat, moments_at_points, rot_exp, rot_log

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


class ScrewModel(enum.Enum):
    """Ideal decoupling model a screw set is fitted against.

    MINIMAL_MOMENT: the moment field (near) vanishes at some point (pure
    rotation about a point / pure force through a point).
    CONSTANT_MOMENT: the moment field is (near) constant at some point
    (constant point translation / constant moment through a point).
    """

    MINIMAL_MOMENT = "minimal_moment"
    CONSTANT_MOMENT = "constant_moment"


class MotionVector(enum.Enum):
    OMEGA = "omega"
    V = "v"


class WrenchVector(enum.Enum):
    FORCE = "f"
    MOMENT = "m"


class ProgressKind(enum.Enum):
    ROTATION_ANGLE = "rotation_angle"
    ARC_LENGTH = "arc_length"


@dataclass
class WeightingConfig:
    """Reference magnitudes for the optional orientation reweighting.

    A candidate whose mean squared vector norm falls below the squared
    reference gets its covariance inflated accordingly, discounting
    orientation information from near-silent channels.
    """

    omega_ref: float = 0.05   # rad/s
    v_ref: float = 0.005      # m/s
    f_ref: float = 1.0        # N
    m_ref: float = 0.1        # N*m
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and min(self.omega_ref, self.v_ref, self.f_ref, self.m_ref) <= 0.0:
            raise ValueError("weighting references must be > 0 when enabled")

    def reference_for(self, vector) -> float:
        return {MotionVector.OMEGA: self.omega_ref, MotionVector.V: self.v_ref,
                WrenchVector.FORCE: self.f_ref, WrenchVector.MOMENT: self.m_ref}[vector]


def significance_ratio(C1: np.ndarray, C2: np.ndarray) -> float:
    """Square root of the determinant ratio of two covariance candidates.

    Always >= 1; returns +inf when one determinant vanishes (an exact fit
    is infinitely more significant than any noisy alternative).
    """
    d1, d2 = float(np.linalg.det(C1)), float(np.linalg.det(C2))
    d1, d2 = max(d1, 0.0), max(d2, 0.0)
    lo, hi = min(d1, d2), max(d1, d2)
    if lo == 0.0:
        if hi == 0.0:
            log.warning("both covariance candidates are degenerate (det = 0)")
        return float("inf")
    return float(np.sqrt(hi / lo))


# --- origin selection -------------------------------------------------------

@dataclass
class OriginCandidate:
    viewpoint: FrameTag
    screw: str                 # "twist" | "wrench"
    model: ScrewModel
    result: AsipResult
    det: float


@dataclass
class FusedOrigin:
    viewpoint: FrameTag
    point: np.ndarray
    covariance: np.ndarray
    det: float


@dataclass
class OriginDecision:
    viewpoint: FrameTag
    origin: np.ndarray
    covariance: np.ndarray
    motion_model: ScrewModel
    wrench_model: ScrewModel
    ratios: dict[str, float]
    candidates: list[OriginCandidate] = field(default_factory=list)
    fused: dict[FrameTag, FusedOrigin] = field(default_factory=dict)


def _information(result: AsipResult) -> np.ndarray:
    # forming inv(C) via the normal matrix stays well-conditioned for
    # arbitrarily small residual variance
    return result.normal_matrix / result.sigma_hat_sq


def _fuse_pair(t: AsipResult, w: AsipResult, viewpoint: FrameTag) -> FusedOrigin:
    """Inverse-covariance average of the surviving twist and wrench origins.

    Exact fits (zero residual variance) carry infinite weight: a single
    exact candidate wins outright; two exact candidates are combined with
    their normal matrices, the limit of equal residual scales.
    """
    t_exact, w_exact = t.sigma_hat_sq == 0.0, w.sigma_hat_sq == 0.0
    if t_exact and w_exact:
        W_t, W_w = t.normal_matrix, w.normal_matrix
        cov = np.zeros((3, 3))
    elif t_exact or w_exact:
        winner = t if t_exact else w
        return FusedOrigin(viewpoint, winner.point.copy(), np.zeros((3, 3)), 0.0)
    else:
        W_t, W_w = _information(t), _information(w)
        cov = np.linalg.inv(W_t + W_w)
    point = np.linalg.solve(W_t + W_w, W_t @ t.point + W_w @ w.point)
    det = float(np.linalg.det(cov))
    return FusedOrigin(viewpoint, point, cov, det)


def _pick_model(minimal: OriginCandidate, constant: OriginCandidate) -> OriginCandidate:
    # ties resolve to the minimal-moment model
    return constant if constant.det < minimal.det else minimal


def derive_origin(batch, epsilon: float = 0.0, p0: np.ndarray | None = None) -> OriginDecision:
    """Select the task-frame origin, its viewpoint and the decoupling models.

    ``batch`` must provide ``screw_set(kind, viewpoint) -> (N,6)`` with
    ``kind`` in {"twist", "wrench"} and ``viewpoint`` a :class:`FrameTag`;
    screws must be expressed in the named viewpoint with the moment at its
    origin, concatenated over all trials.
    """
    candidates: list[OriginCandidate] = []
    per_view: dict[FrameTag, dict[str, dict[ScrewModel, OriginCandidate]]] = {}
    for viewpoint in (FrameTag.WORLD, FrameTag.TOOL):
        per_view[viewpoint] = {}
        for kind in ("twist", "wrench"):
            screws = batch.screw_set(kind, viewpoint)
            per_view[viewpoint][kind] = {}
            for model in ScrewModel:
                data = screws if model is ScrewModel.MINIMAL_MOMENT else mean_subtract(screws)
                try:
                    result = asip(data, epsilon=epsilon, p0=p0)
                except ValueError as err:
                    raise ValueError(
                        f"origin candidate failed ({viewpoint.value} {kind} "
                        f"{model.value}): {err}") from err
                cand = OriginCandidate(viewpoint, kind, model, result,
                                       float(np.linalg.det(result.covariance)))
                candidates.append(cand)
                per_view[viewpoint][kind][model] = cand

    fused: dict[FrameTag, FusedOrigin] = {}
    winners: dict[FrameTag, dict[str, OriginCandidate]] = {}
    for viewpoint in (FrameTag.WORLD, FrameTag.TOOL):
        kinds = per_view[viewpoint]
        winners[viewpoint] = {
            kind: _pick_model(kinds[kind][ScrewModel.MINIMAL_MOMENT],
                              kinds[kind][ScrewModel.CONSTANT_MOMENT])
            for kind in ("twist", "wrench")}
        fused[viewpoint] = _fuse_pair(winners[viewpoint]["twist"].result,
                                      winners[viewpoint]["wrench"].result, viewpoint)

    # ties resolve to the tool viewpoint
    viewpoint = (FrameTag.WORLD
                 if fused[FrameTag.WORLD].det < fused[FrameTag.TOOL].det
                 else FrameTag.TOOL)
    chosen = fused[viewpoint]
    sel = winners[viewpoint]
    ratios = {
        "viewpoint": significance_ratio(fused[FrameTag.WORLD].covariance,
                                        fused[FrameTag.TOOL].covariance),
        "motion_model": significance_ratio(
            per_view[viewpoint]["twist"][ScrewModel.MINIMAL_MOMENT].result.covariance,
            per_view[viewpoint]["twist"][ScrewModel.CONSTANT_MOMENT].result.covariance),
        "wrench_model": significance_ratio(
            per_view[viewpoint]["wrench"][ScrewModel.MINIMAL_MOMENT].result.covariance,
            per_view[viewpoint]["wrench"][ScrewModel.CONSTANT_MOMENT].result.covariance),
    }
    return OriginDecision(viewpoint=viewpoint, origin=chosen.point,
                          covariance=chosen.covariance,
                          motion_model=sel["twist"].model,
                          wrench_model=sel["wrench"].model,
                          ratios=ratios, candidates=candidates, fused=fused)


@dataclass
class VectorChoice:
    motion_vector: MotionVector
    wrench_vector: WrenchVector
    progress: ProgressKind


def select_vectors_of_interest(decision: OriginDecision) -> VectorChoice:
    """Vectors of interest and progress variable implied by the models.

    Minimal-moment motion leaves only the rotational velocity informative
    (progress = accumulated rotation angle); constant-moment motion makes
    the origin's translational velocity the signal (progress = arc length).
    The wrench channel picks force or moment the same way.
    """
    if decision.motion_model is ScrewModel.MINIMAL_MOMENT:
        motion, progress = MotionVector.OMEGA, ProgressKind.ROTATION_ANGLE
    else:
        motion, progress = MotionVector.V, ProgressKind.ARC_LENGTH
    wrench = (WrenchVector.FORCE if decision.wrench_model is ScrewModel.MINIMAL_MOMENT
              else WrenchVector.MOMENT)
    return VectorChoice(motion, wrench, progress)


# --- orientation selection --------------------------------------------------

def align_frames(U1: np.ndarray, U2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relabel the columns of U2 (greedy, with sign flips) to best match U1.

    Column correspondence is chosen per column of U2^T U1 by largest
    absolute entry with row exclusion; signs make the picked entries
    positive.  Returns (R1, R2) with R1 = U1.
    """
    R1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    delta = U2.T @ R1
    P = np.zeros((3, 3))
    scratch = delta.copy()
    for c in range(3):
        r = int(np.argmax(np.abs(scratch[:, c])))
        P[r, c] = 1.0 if scratch[r, c] >= 0.0 else -1.0
        scratch[r, :] = 0.0
    return R1, U2 @ P


def average_rotations(R1: np.ndarray, R2: np.ndarray, C1: np.ndarray, C2: np.ndarray,
                      tol: float = 1e-10, max_iter: int = 100
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Covariance-weighted average of two rotations, with combined covariance.

    Fixed-point iteration on the rotation group; requires invertible
    covariances and inputs not separated by a half turn (guaranteed after
    :func:`align_frames`).  The combined covariance is the information sum
    and does not depend on the iteration.
    """
    for C in (C1, C2):
        if np.linalg.cond(C) > CONDITION_LIMIT:
            raise ValueError("rotation averaging needs invertible covariances")
    info = np.linalg.inv(C1) + np.linalg.inv(C2)
    combined = np.linalg.inv(info)
    lam1 = combined @ np.linalg.inv(C1)
    lam2 = combined @ np.linalg.inv(C2)
    R = R1.copy()
    for _ in range(max_iter):
        delta = lam1 @ rot_log(R1 @ R.T) + lam2 @ rot_log(R2 @ R.T)
        R = rot_exp(delta) @ R
        if np.linalg.norm(delta) < tol:
            return R, combined
    raise ValueError(f"rotation averaging did not converge; last step {np.linalg.norm(delta):.3e}")


@dataclass
class OrientationCandidate:
    viewpoint: FrameTag
    source: str                # "motion" | "wrench"
    vector: MotionVector | WrenchVector
    result: AvofResult
    weighted_covariance: np.ndarray


@dataclass
class CombinedOrientation:
    viewpoint: FrameTag
    rotation: np.ndarray
    covariance: np.ndarray
    det: float


@dataclass
class OrientationDecision:
    viewpoint: FrameTag
    rotation: np.ndarray
    covariance: np.ndarray
    motion_vector: MotionVector
    wrench_vector: WrenchVector
    ratio: float
    weighting_applied: bool
    candidates: list[OrientationCandidate] = field(default_factory=list)
    combined: dict[FrameTag, CombinedOrientation] = field(default_factory=dict)


def _origin_positions(batch, origin: OriginDecision, viewpoint: FrameTag) -> np.ndarray:
    """Task-frame origin coordinates in `viewpoint`, per concatenated sample."""
    n = batch.screw_set("twist", viewpoint).shape[0]
    if viewpoint is origin.viewpoint:
        return np.broadcast_to(origin.origin, (n, 3))
    rotations, positions = batch.tool_kinematics()
    if origin.viewpoint is FrameTag.TOOL:   # tool-fixed point seen from world
        return np.einsum("nij,j->ni", rotations, origin.origin) + positions
    # world-fixed point seen from the tool
    return np.einsum("nji,nj->ni", rotations, origin.origin[None, :] - positions)


def _interest_vectors(batch, origin: OriginDecision, vectors: VectorChoice,
                      viewpoint: FrameTag) -> tuple[np.ndarray, np.ndarray]:
    """Motion and wrench vectors of interest in one viewpoint.

    Translational velocity and moment are evaluated at the selected origin
    (the screw moment field at that point); directional vectors are used
    as recorded.
    """
    twists = batch.screw_set("twist", viewpoint)
    wrenches = batch.screw_set("wrench", viewpoint)
    points = None
    if MotionVector.V is vectors.motion_vector or WrenchVector.MOMENT is vectors.wrench_vector:
        points = _origin_positions(batch, origin, viewpoint)
    motion = (twists[:, :3] if vectors.motion_vector is MotionVector.OMEGA
              else moments_at_points(twists, points))
    wrench = (wrenches[:, :3] if vectors.wrench_vector is WrenchVector.FORCE
              else moments_at_points(wrenches, points))
    return motion, wrench


def derive_orientation(batch, origin: OriginDecision, vectors: VectorChoice,
                       weighting: WeightingConfig | None = None) -> OrientationDecision:
    """Select the task-frame orientation and its viewpoint.

    Per viewpoint the motion and wrench vector-of-interest frames are
    estimated, aligned, optionally reweighted by reference magnitudes, and
    averaged; the viewpoint with the smaller combined covariance
    determinant wins (ties resolve to the tool viewpoint).
    """
    weighting = weighting or WeightingConfig()
    candidates: list[OrientationCandidate] = []
    combined: dict[FrameTag, CombinedOrientation] = {}
    for viewpoint in (FrameTag.WORLD, FrameTag.TOOL):
        motion_vecs, wrench_vecs = _interest_vectors(batch, origin, vectors, viewpoint)
        pair = []
        for source, vecs, which in (("motion", motion_vecs, vectors.motion_vector),
                                    ("wrench", wrench_vecs, vectors.wrench_vector)):
            result = avof(vecs)
            cov = result.covariance
            if weighting.enabled:
                cov = cov * weighting.reference_for(which)**2 / result.mean_sq_norm
            cand = OrientationCandidate(viewpoint, source, which, result, cov)
            candidates.append(cand)
            pair.append(cand)
        R1, R2 = align_frames(pair[0].result.frame, pair[1].result.frame)
        R_avg, C = average_rotations(R1, R2, pair[0].weighted_covariance,
                                     pair[1].weighted_covariance)
        combined[viewpoint] = CombinedOrientation(viewpoint, R_avg, C,
                                                  float(np.linalg.det(C)))

    viewpoint = (FrameTag.WORLD
                 if combined[FrameTag.WORLD].det < combined[FrameTag.TOOL].det
                 else FrameTag.TOOL)
    ratio = significance_ratio(combined[FrameTag.WORLD].covariance,
                               combined[FrameTag.TOOL].covariance)
    chosen = combined[viewpoint]
    return OrientationDecision(viewpoint=viewpoint, rotation=chosen.rotation,
                               covariance=chosen.covariance,
                               motion_vector=vectors.motion_vector,
                               wrench_vector=vectors.wrench_vector,
                               ratio=ratio, weighting_applied=weighting.enabled,
                               candidates=candidates, combined=combined)


# --- assembly ---------------------------------------------------------------

@dataclass
class TaskFrame:
    """Complete task-frame parameterization: origin, orientation, progress."""

    origin: OriginDecision
    orientation: OrientationDecision
    progress: ProgressKind
    vectors: VectorChoice

    def __post_init__(self):
        expected = (ProgressKind.ROTATION_ANGLE
                    if self.origin.motion_model is ScrewModel.MINIMAL_MOMENT
                    else ProgressKind.ARC_LENGTH)
        if self.progress is not expected:
            raise ValueError("progress kind inconsistent with the motion model")


def assemble_task_frame(origin: OriginDecision, orientation: OrientationDecision,
                        ref: FrameTag, pose_world_tool: Pose | None = None) -> Pose:
    """Instantaneous task-frame pose with respect to ``ref``.

    When either component's viewpoint differs from ``ref``, the current
    world-tool pose must be supplied; the result is then time-varying and
    this is evaluated per sample.
    """
    needs_kinematics = origin.viewpoint is not ref or orientation.viewpoint is not ref
    if needs_kinematics and pose_world_tool is None:
        raise ValueError("viewpoints differ from ref: instantaneous kinematics required")

    def rot_ref_from(viewpoint: FrameTag) -> np.ndarray:
        if viewpoint is ref:
            return np.eye(3)
        if viewpoint is FrameTag.TOOL:     # ref is world
            return pose_world_tool.rotation
        return pose_world_tool.rotation.T  # viewpoint world, ref tool

    R = rot_ref_from(orientation.viewpoint) @ orientation.rotation
    if origin.viewpoint is ref:
        p = origin.origin.copy()
    elif origin.viewpoint is FrameTag.TOOL:
        p = pose_world_tool.transform_point(origin.origin)
    else:
        p = pose_world_tool.inverse().transform_point(origin.origin)
    return Pose(R, p)


def derive_task_frame(batch, weighting: WeightingConfig | None = None,
                      epsilon: float = 0.0, p0: np.ndarray | None = None) -> TaskFrame:
    """Full derivation pass: origin, vectors of interest, orientation."""
    origin = derive_origin(batch, epsilon=epsilon, p0=p0)
    vectors = select_vectors_of_interest(origin)
    orientation = derive_orientation(batch, origin, vectors, weighting)
    return TaskFrame(origin=origin, orientation=orientation,
                     progress=vectors.progress, vectors=vectors)
