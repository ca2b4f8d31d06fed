"""Ground-truth demonstration generator.

Builds trials that satisfy one of the ideal decoupling patterns exactly
before noise is added:

* rotation about a fixed point  -- the anchor never moves;
* constant translation of a point -- the anchor's world velocity is constant;
* pure force through a point    -- the wrench moment vanishes at the anchor;
* constant moment through a point -- the wrench moment at the anchor is constant.

Axis and force directions precess on a cone so every component of the
anchor stays observable.  Inter-trial variation (world placement or tool
grasp randomization) is what drives the viewpoint decisions; all
randomness is seeded.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import FrameTag, rot_exp, transform_screws
from .trajectory import Trial

log = logging.getLogger(__name__)


class MotionPattern(enum.Enum):
    ROTATION_ABOUT_POINT = "rotation_about_point"
    POINT_TRANSLATION = "point_translation"


class WrenchPattern(enum.Enum):
    FORCE_THROUGH_POINT = "force_through_point"
    MOMENT_THROUGH_POINT = "moment_through_point"


@dataclass
class NoiseSpec:
    pose_pos_m: float = 0.0
    pose_rot_rad: float = 0.0
    wrench_f_n: float = 0.0
    wrench_m_nm: float = 0.0


@dataclass
class VariationSpec:
    """Inter-trial randomization: placement re-seats the whole task in the
    world, grasp re-seats the tool relative to the anchors."""

    placement_rot_rad: float = 0.0
    placement_trans_m: float = 0.0
    grasp_rot_rad: float = 0.0
    grasp_trans_m: float = 0.0
    magnitude_jitter: float = 0.0


@dataclass
class ScenarioSpec:
    motion: MotionPattern
    wrench: WrenchPattern
    motion_anchor_frame: FrameTag = FrameTag.TOOL
    wrench_anchor_frame: FrameTag = FrameTag.TOOL
    motion_anchor_m: tuple = (0.15, -0.05, 0.10)
    wrench_anchor_m: tuple | None = None      # defaults to the motion anchor
    direction_frame: FrameTag = FrameTag.TOOL
    motion_axis: tuple = (0.0, 0.0, 1.0)      # rotation-cone center / travel direction
    wrench_axis: tuple = (1.0, 0.0, 0.0)      # force/moment cone center
    omega_rad_s: float = 0.6
    v_m_s: float = 0.05
    secondary_omega_rad_s: float = 0.5        # spin accompanying a translation
    force_n: float = 8.0
    moment_nm: float = 0.8
    axis_wobble_rad: float = 0.7
    wrench_wobble_rad: float = 0.6
    wobble_cycles: float = 2.0                # integer keeps the mean on the cone axis
    site_m: tuple = (0.4, 0.0, 0.3)           # world location of tool-anchored tasks
    grasp_offset_m: tuple = (0.15, -0.05, 0.10)  # nominal tool offset for world anchors
    duration_s: float = 8.0
    rate_hz: float = 10.0
    contact_window_s: tuple | None = None
    ramp_s: float = 0.2
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    variation: VariationSpec = field(default_factory=VariationSpec)
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.motion, MotionPattern):
            self.motion = MotionPattern(self.motion)
        if not isinstance(self.wrench, WrenchPattern):
            self.wrench = WrenchPattern(self.wrench)
        for name in ("motion_anchor_frame", "wrench_anchor_frame", "direction_frame"):
            value = getattr(self, name)
            if not isinstance(value, FrameTag):
                setattr(self, name, FrameTag(value))
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        if isinstance(self.variation, dict):
            self.variation = VariationSpec(**self.variation)

    def validate(self):
        if self.duration_s <= 0.0:
            raise ValueError("duration_s must be > 0")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be > 0")
        for name in ("omega_rad_s", "v_m_s", "secondary_omega_rad_s",
                     "force_n", "moment_nm"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("pose_pos_m", "pose_rot_rad", "wrench_f_n", "wrench_m_nm"):
            if getattr(self.noise, name) < 0.0:
                raise ValueError(f"noise.{name} must be >= 0")
        if self.contact_window_s is not None:
            t0, t1 = self.contact_window_s
            if not (0.0 <= t0 < t1 <= self.duration_s):
                raise ValueError("contact_window_s must satisfy 0 <= t0 < t1 <= duration_s")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["motion"] = self.motion.value
        d["wrench"] = self.wrench.value
        for name in ("motion_anchor_frame", "wrench_anchor_frame", "direction_frame"):
            d[name] = getattr(self, name).value
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScenarioSpec":
        known = set(ScenarioSpec.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        for name in ("noise", "variation"):
            if name in d and isinstance(d[name], dict):
                sub = NoiseSpec if name == "noise" else VariationSpec
                extra = set(d[name]) - set(sub.__dataclass_fields__)
                if extra:
                    raise ValueError(f"unknown {name} keys: {sorted(extra)}")
        for name in ("motion_anchor_m", "wrench_anchor_m", "motion_axis", "wrench_axis",
                     "site_m", "grasp_offset_m", "contact_window_s"):
            if d.get(name) is not None:
                d = {**d, name: tuple(d[name])}
        return ScenarioSpec(**d).validate()


@dataclass
class GroundTruth:
    """What the derivation pipeline is expected to recover."""

    motion_pattern: str
    wrench_pattern: str
    motion_anchor_frame: str
    motion_anchor_m: list
    wrench_anchor_frame: str
    wrench_anchor_m: list
    direction_frame: str
    motion_direction: list
    wrench_direction: list
    expected_origin_viewpoint: str | None
    expected_orientation_viewpoint: str | None
    expected_motion_model: str
    expected_wrench_model: str
    expected_motion_vector: str
    expected_wrench_vector: str
    expected_progress: str
    seed: int
    n_trials: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "GroundTruth":
        return GroundTruth(**json.loads(text))


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero direction vector")
    return v / n


def _cone_directions(axis, wobble: float, cycles: float, phase: float,
                     t: np.ndarray, duration: float) -> np.ndarray:
    """Unit vectors precessing on a cone of half-angle ``wobble`` about ``axis``."""
    n = _unit(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(n, helper))
    e2 = np.cross(n, e1)
    phi = 2.0 * np.pi * cycles * t / duration + phase
    return (np.cos(wobble) * n[None, :]
            + np.sin(wobble) * (np.cos(phi)[:, None] * e1[None, :]
                                + np.sin(phi)[:, None] * e2[None, :]))


def _random_pose(rng: np.random.Generator, max_rot: float, max_trans: float
                 ) -> tuple[np.ndarray, np.ndarray]:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    R = rot_exp(axis * rng.uniform(0.0, max_rot)) if max_rot > 0.0 else np.eye(3)
    p = rng.uniform(-max_trans, max_trans, size=3) if max_trans > 0.0 else np.zeros(3)
    return R, p


def _contact_envelope(t: np.ndarray, window, ramp: float) -> np.ndarray:
    if window is None:
        return np.ones_like(t)
    t0, t1 = window
    env = np.zeros_like(t)
    rising = np.clip((t - t0) / max(ramp, 1e-9), 0.0, 1.0)
    falling = np.clip((t1 - t) / max(ramp, 1e-9), 0.0, 1.0)
    inside = (t >= t0) & (t <= t1)
    env[inside] = (0.5 - 0.5 * np.cos(np.pi * rising[inside])) \
        * (0.5 - 0.5 * np.cos(np.pi * falling[inside]))
    return env


def ground_truth(spec: ScenarioSpec, n_trials: int) -> GroundTruth:
    """Expected decisions and geometry for a scenario, from its construction."""
    placement = (spec.variation.placement_rot_rad > 0.0
                 or spec.variation.placement_trans_m > 0.0)
    grasp = spec.variation.grasp_rot_rad > 0.0 or spec.variation.grasp_trans_m > 0.0
    anchors_tool = (spec.motion_anchor_frame is FrameTag.TOOL
                    and spec.wrench_anchor_frame is FrameTag.TOOL)
    anchors_world = (spec.motion_anchor_frame is FrameTag.WORLD
                     and spec.wrench_anchor_frame is FrameTag.WORLD)
    if anchors_tool and placement:
        origin_view = FrameTag.TOOL.value
    elif anchors_world and grasp and not placement:
        origin_view = FrameTag.WORLD.value
    else:
        origin_view = None
    if spec.direction_frame is FrameTag.TOOL and placement:
        orient_view = FrameTag.TOOL.value
    elif spec.direction_frame is FrameTag.WORLD and grasp and not placement:
        orient_view = FrameTag.WORLD.value
    else:
        orient_view = None

    motion_minimal = spec.motion is MotionPattern.ROTATION_ABOUT_POINT
    wrench_minimal = spec.wrench is WrenchPattern.FORCE_THROUGH_POINT
    wrench_anchor = spec.wrench_anchor_m if spec.wrench_anchor_m is not None \
        else spec.motion_anchor_m
    return GroundTruth(
        motion_pattern=spec.motion.value,
        wrench_pattern=spec.wrench.value,
        motion_anchor_frame=spec.motion_anchor_frame.value,
        motion_anchor_m=list(spec.motion_anchor_m),
        wrench_anchor_frame=spec.wrench_anchor_frame.value,
        wrench_anchor_m=list(wrench_anchor),
        direction_frame=spec.direction_frame.value,
        motion_direction=_unit(spec.motion_axis).tolist(),
        wrench_direction=_unit(spec.wrench_axis).tolist(),
        expected_origin_viewpoint=origin_view,
        expected_orientation_viewpoint=orient_view,
        expected_motion_model="minimal_moment" if motion_minimal else "constant_moment",
        expected_wrench_model="minimal_moment" if wrench_minimal else "constant_moment",
        expected_motion_vector="omega" if motion_minimal else "v",
        expected_wrench_vector="f" if wrench_minimal else "m",
        expected_progress="rotation_angle" if motion_minimal else "arc_length",
        seed=spec.seed,
        n_trials=n_trials,
    )


def _generate_trial(spec: ScenarioSpec, rng: np.random.Generator, index: int) -> Trial:
    n = int(round(spec.duration_s * spec.rate_hz)) + 1
    t = np.arange(n) / spec.rate_hz
    dt = 1.0 / spec.rate_hz
    var = spec.variation

    P_R, P_p = _random_pose(rng, var.placement_rot_rad, var.placement_trans_m)
    G_R, G_p = _random_pose(rng, var.grasp_rot_rad, var.grasp_trans_m)
    jitter = 1.0 + var.magnitude_jitter * rng.uniform(-1.0, 1.0)
    phase_m = rng.uniform(0.0, 2.0 * np.pi)
    phase_w = rng.uniform(0.0, 2.0 * np.pi)

    # anchors: tool coordinates of the motion anchor, world/setup position q0
    if spec.motion_anchor_frame is FrameTag.TOOL:
        c_tl = np.asarray(spec.motion_anchor_m, dtype=float)
        q0 = np.asarray(spec.site_m, dtype=float)
    else:
        c_tl = np.asarray(spec.grasp_offset_m, dtype=float)
        q0 = np.asarray(spec.motion_anchor_m, dtype=float)
        if var.placement_rot_rad > 0.0 or var.placement_trans_m > 0.0:
            log.warning("world-anchored scenario with placement randomization: "
                        "the anchor will not stay fixed in the world across trials")
    R0 = G_R
    p0 = q0 - R0 @ c_tl + G_p
    c_tl = R0.T @ (q0 - p0)  # actual tool-frame anchor after grasp jitter

    # body rotation profile: precessing axis, constant rate
    rate = (spec.omega_rad_s if spec.motion is MotionPattern.ROTATION_ABOUT_POINT
            else spec.secondary_omega_rad_s) * jitter
    axis_dirs = _cone_directions(spec.motion_axis, spec.axis_wobble_rad,
                                 spec.wobble_cycles, phase_m,
                                 t[:-1] + 0.5 * dt, spec.duration_s)
    rotations = np.empty((n, 3, 3))
    rotations[0] = R0
    for k in range(n - 1):
        step = rot_exp(rate * dt * axis_dirs[k])
        if spec.direction_frame is FrameTag.TOOL:
            rotations[k + 1] = rotations[k] @ step
        else:
            rotations[k + 1] = step @ rotations[k]

    # anchor path: fixed point or constant-velocity point
    if spec.motion is MotionPattern.ROTATION_ABOUT_POINT:
        q = np.broadcast_to(q0, (n, 3)).copy()
    else:
        direction = (_unit(R0 @ np.asarray(spec.motion_axis, dtype=float))
                     if spec.direction_frame is FrameTag.TOOL
                     else _unit(spec.motion_axis))
        q = q0[None, :] + (spec.v_m_s * jitter) * t[:, None] * direction[None, :]
    positions = q - np.einsum("nij,j->ni", rotations, c_tl)

    # world placement of the whole setup
    rotations = np.einsum("ij,njk->nik", P_R, rotations)
    positions = positions @ P_R.T + P_p

    # wrench: force on a precessing direction through the wrench anchor
    force_dirs = _cone_directions(spec.wrench_axis, spec.wrench_wobble_rad,
                                  spec.wobble_cycles, phase_w, t, spec.duration_s)
    if spec.direction_frame is FrameTag.TOOL:
        f = spec.force_n * jitter * np.einsum("nij,nj->ni", rotations, force_dirs)
    else:
        f = spec.force_n * jitter * force_dirs
    if spec.wrench_anchor_frame is FrameTag.TOOL:
        cf = np.asarray(spec.wrench_anchor_m if spec.wrench_anchor_m is not None
                        else spec.motion_anchor_m, dtype=float)
        qf = np.einsum("nij,j->ni", rotations, cf) + positions
    else:
        qf0 = P_R @ np.asarray(spec.wrench_anchor_m if spec.wrench_anchor_m is not None
                               else spec.motion_anchor_m, dtype=float) + P_p
        qf = np.broadcast_to(qf0, (n, 3))
    m = np.cross(qf, f)
    if spec.wrench is WrenchPattern.MOMENT_THROUGH_POINT:
        m_base = spec.moment_nm * jitter * _unit(spec.wrench_axis)
        if spec.direction_frame is FrameTag.TOOL:
            m = m + np.einsum("nij,j->ni", rotations, m_base)
        else:
            m = m + m_base[None, :]
    envelope = _contact_envelope(t, spec.contact_window_s, spec.ramp_s)
    wrench_world = np.hstack([f, m]) * envelope[:, None]

    # measurement: wrench in the (true) tool frame, then additive noise
    inv_rot = np.transpose(rotations, (0, 2, 1))
    inv_pos = -np.einsum("nij,nj->ni", inv_rot, positions)
    wrench_tool = transform_screws(inv_rot, inv_pos, wrench_world)
    noise = spec.noise
    if noise.wrench_f_n > 0.0:
        wrench_tool[:, :3] += rng.normal(0.0, noise.wrench_f_n, (n, 3))
    if noise.wrench_m_nm > 0.0:
        wrench_tool[:, 3:] += rng.normal(0.0, noise.wrench_m_nm, (n, 3))
    if noise.pose_rot_rad > 0.0:
        for k in range(n):
            rotations[k] = rot_exp(rng.normal(0.0, noise.pose_rot_rad, 3)) @ rotations[k]
    if noise.pose_pos_m > 0.0:
        positions = positions + rng.normal(0.0, noise.pose_pos_m, (n, 3))

    # back to the internal convention using the recorded (noisy) pose, the
    # same conversion ingestion performs
    inv_rot = np.transpose(rotations, (0, 2, 1))
    inv_pos = -np.einsum("nij,nj->ni", inv_rot, positions)
    wrench_world = transform_screws(rotations, positions, wrench_tool)
    return Trial(time=t, rotation=rotations, position=positions,
                 wrench_world=wrench_world, source=f"synthetic[{index}]")


def generate(spec: ScenarioSpec, n_trials: int) -> tuple[list[Trial], GroundTruth]:
    """Generate seeded demonstration trials plus their ground-truth record."""
    spec.validate()
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(spec.seed)
    trials = [_generate_trial(spec, rng, k) for k in range(n_trials)]
    return trials, ground_truth(spec, n_trials)


def model_predicate_residual(spec: ScenarioSpec, trial: Trial) -> dict[str, float]:
    """Defining-model residuals of one (noise-free) trial.

    Rotation about a point: spread of the anchor's world position;
    constant point translation: deviation from a straight constant-speed
    path; the wrench patterns: deviation of the moment at the anchor from
    zero / from its mean.  Useful as an exactness check.
    """
    if spec.motion_anchor_frame is FrameTag.TOOL:
        c = np.asarray(spec.motion_anchor_m, dtype=float)
    else:
        c = trial.rotation[0].T @ (np.asarray(spec.motion_anchor_m, dtype=float)
                                   - trial.position[0])
    anchor_path = np.einsum("nij,j->ni", trial.rotation, c) + trial.position
    if spec.motion is MotionPattern.ROTATION_ABOUT_POINT:
        motion_residual = float(np.linalg.norm(anchor_path - anchor_path[0], axis=1).max())
    else:
        t = (trial.time - trial.time[0])[:, None]
        span = float(trial.time[-1] - trial.time[0])
        velocity = (anchor_path[-1] - anchor_path[0]) / span
        motion_residual = float(np.linalg.norm(
            anchor_path - anchor_path[0] - t * velocity, axis=1).max())

    if spec.wrench_anchor_frame is FrameTag.TOOL:
        cf = np.asarray(spec.wrench_anchor_m if spec.wrench_anchor_m is not None
                        else spec.motion_anchor_m, dtype=float)
        qf = np.einsum("nij,j->ni", trial.rotation, cf) + trial.position
    else:
        qf = np.broadcast_to(np.asarray(spec.wrench_anchor_m, dtype=float),
                             (len(trial), 3))
    f, m0 = trial.wrench_world[:, :3], trial.wrench_world[:, 3:]
    m_at_anchor = m0 + np.cross(f, qf)
    if spec.wrench is WrenchPattern.FORCE_THROUGH_POINT:
        wrench_residual = float(np.linalg.norm(m_at_anchor, axis=1).max())
    else:
        # constancy holds in the direction frame the moment was built in
        if spec.direction_frame is FrameTag.TOOL:
            m_at_anchor = np.einsum("nji,nj->ni", trial.rotation, m_at_anchor)
        live = np.linalg.norm(f, axis=1) > 1e-9
        ref = m_at_anchor[live] if live.any() else m_at_anchor
        wrench_residual = float(np.linalg.norm(ref - ref.mean(axis=0), axis=1).max())
    return {"motion": motion_residual, "wrench": wrench_residual}
