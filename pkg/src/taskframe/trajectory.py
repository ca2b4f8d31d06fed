"""Demonstration ingestion, preprocessing and task-model construction.

A trial CSV holds time, tool pose (position + scalar-first unit quaternion)
and the measured interaction wrench.  A comment header declares where the
wrench is expressed; ingestion converts everything to one internal
convention: world-frame screws with the moment at the world origin.

Preprocessing smooths the wrench, differentiates poses into twists,
segments the motion-in-contact part and expands the screws into both the
world and tool viewpoints.  After the task frame is derived the data is
re-expressed in it, reparameterized to a nondimensional progress grid and
averaged over trials into a reusable task model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import UnivariateSpline

from .geometry import (FrameTag, Pose, differentiate_pose_arrays, moments_at_points,
                       transform_screws)
from .pipeline import (MotionVector, ProgressKind, ScrewModel, TaskFrame, WrenchVector)

log = logging.getLogger(__name__)

TRIAL_COLUMNS = "t,px,py,pz,qw,qx,qy,qz,fx,fy,fz,mx,my,mz"


# --- quaternion helpers (file-format boundary only) -------------------------

def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a scalar-first unit quaternion."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Scalar-first unit quaternion of a rotation matrix (Shepperd)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return q / np.linalg.norm(q)


# --- trial containers --------------------------------------------------------

@dataclass
class Trial:
    """One demonstration trial in the internal convention.

    ``rotation``/``position`` give the tool pose in the world frame;
    ``wrench_world`` is world-expressed with the moment at the world
    origin.  Twist and tool-viewpoint series are filled by preprocessing.
    """

    time: np.ndarray
    rotation: np.ndarray
    position: np.ndarray
    wrench_world: np.ndarray
    twist_world: np.ndarray | None = None
    twist_tool: np.ndarray | None = None
    wrench_tool: np.ndarray | None = None
    source: str = ""

    def __len__(self):
        return len(self.time)

    def sliced(self, start: int, stop: int) -> "Trial":
        pick = lambda a: None if a is None else a[start:stop]
        return Trial(self.time[start:stop], self.rotation[start:stop],
                     self.position[start:stop], self.wrench_world[start:stop],
                     pick(self.twist_world), pick(self.twist_tool),
                     pick(self.wrench_tool), self.source)

    def pose(self, k: int) -> Pose:
        return Pose(self.rotation[k], self.position[k])


@dataclass
class TrialBatch:
    """Preprocessed trials, exposing concatenated per-viewpoint screw sets."""

    trials: list[Trial]

    def __post_init__(self):
        if not self.trials:
            raise ValueError("empty trial batch")
        for t in self.trials:
            if t.twist_world is None or t.twist_tool is None or t.wrench_tool is None:
                raise ValueError(f"trial {t.source!r} is not preprocessed")
            n = len(t)
            for name in ("rotation", "position", "wrench_world",
                         "twist_world", "twist_tool", "wrench_tool"):
                if len(getattr(t, name)) != n:
                    raise ValueError(f"trial {t.source!r}: series length mismatch on {name}")

    def screw_set(self, kind: str, viewpoint: FrameTag) -> np.ndarray:
        attr = {("twist", FrameTag.WORLD): "twist_world",
                ("twist", FrameTag.TOOL): "twist_tool",
                ("wrench", FrameTag.WORLD): "wrench_world",
                ("wrench", FrameTag.TOOL): "wrench_tool"}[(kind, viewpoint)]
        return np.vstack([getattr(t, attr) for t in self.trials])

    def tool_kinematics(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.vstack([t.rotation for t in self.trials]),
                np.vstack([t.position for t in self.trials]))


# --- trial file format -------------------------------------------------------

def load_trial(path) -> Trial:
    """Read a trial CSV and convert the wrench to the internal convention."""
    header: dict[str, str] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    header[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 14:
                raise ValueError(f"{path}:{lineno}: expected 14 columns, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from err
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if header.get("frame_pose", "w->tl") != "w->tl":
        raise ValueError(f"{path}: unsupported frame_pose {header.get('frame_pose')!r}")
    if header.get("gravity_compensated", "true").lower() not in ("true", "1", "yes"):
        raise ValueError(f"{path}: wrench data must be gravity-compensated")

    data = np.array(rows)
    time = data[:, 0]
    quats = data[:, 4:8]
    norms = np.linalg.norm(quats, axis=1)
    bad = np.where(np.abs(norms - 1.0) > 1e-6)[0]
    if bad.size:
        raise ValueError(f"{path}: non-unit quaternion at data row {bad[0] + 1}")
    rotation = np.stack([quat_to_rot(q) for q in quats])
    position = data[:, 1:4]
    wrench = data[:, 8:14]

    wrench_frame = header.get("wrench_frame", "w")
    if wrench_frame not in ("w", "tl"):
        raise ValueError(f"{path}: wrench_frame must be 'w' or 'tl'")
    point = np.array([float(x) for x in header.get("wrench_point", "0 0 0").split()])
    # move the moment to the declared frame's origin, then express in world
    f, m = wrench[:, :3], wrench[:, 3:]
    m = m - np.cross(f, point[None, :])
    wrench = np.hstack([f, m])
    if wrench_frame == "tl":
        wrench = transform_screws(rotation, position, wrench)
    return Trial(time=time, rotation=rotation, position=position,
                 wrench_world=wrench, source=str(path))


def save_trial(path, trial: Trial, wrench_frame: FrameTag = FrameTag.TOOL,
               wrench_point: np.ndarray = (0.0, 0.0, 0.0)) -> None:
    """Write a trial CSV, declaring the wrench in the requested frame/point."""
    point = np.asarray(wrench_point, dtype=float)
    wrench = trial.wrench_world
    tag = "w"
    if wrench_frame is FrameTag.TOOL:
        tag = "tl"
        inv_rot = np.transpose(trial.rotation, (0, 2, 1))
        inv_pos = -np.einsum("nij,nj->ni", inv_rot, trial.position)
        wrench = transform_screws(inv_rot, inv_pos, wrench)
    f, m = wrench[:, :3], wrench[:, 3:]
    m = m + np.cross(f, point[None, :])  # moment seen at the declared point

    quats = np.stack([rot_to_quat(R) for R in trial.rotation])
    # hemisphere continuity keeps the written series smooth
    for k in range(1, len(quats)):
        if quats[k] @ quats[k - 1] < 0.0:
            quats[k] = -quats[k]
    table = np.hstack([trial.time[:, None], trial.position, quats, f, m])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# frame_pose=w->tl\n")
        fh.write(f"# wrench_frame={tag}\n")
        fh.write("# wrench_point=" + " ".join(f"{x:.17g}" for x in point) + "\n")
        fh.write("# gravity_compensated=true\n")
        fh.write(f"# columns: {TRIAL_COLUMNS}\n")
        for row in table:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


# --- preprocessing -----------------------------------------------------------

@dataclass
class PreprocessConfig:
    smoothing_sigma_s: float = 0.1
    force_threshold_n: float = 0.5
    moment_threshold_nm: float = 0.05
    omega_threshold_rad_s: float = 0.0
    v_threshold_m_s: float = 0.0


def smooth_wrench(series: np.ndarray, sigma_s: float, dt: float) -> np.ndarray:
    """Gaussian-weighted moving average, truncated at 3 sigma.

    The kernel is renormalized near the boundaries so constants pass
    through unchanged everywhere.
    """
    if sigma_s <= 0.0:
        raise ValueError("smoothing sigma must be > 0")
    series = np.asarray(series, dtype=float)
    half = int(np.ceil(3.0 * sigma_s / dt))
    if half < 1:
        return series.copy()
    x = np.arange(-half, half + 1) * dt
    kernel = np.exp(-0.5 * (x / sigma_s)**2)
    norm = np.convolve(np.ones(series.shape[0]), kernel, mode="same")
    flat = series.reshape(series.shape[0], -1)
    out = np.stack([np.convolve(col, kernel, mode="same") / norm for col in flat.T], axis=1)
    return out.reshape(series.shape)


def segment_contact(trial: Trial, force_threshold_n: float, moment_threshold_nm: float,
                    omega_threshold_rad_s: float, v_threshold_m_s: float
                    ) -> tuple[int, int]:
    """Index range [start, stop) of the motion-in-contact part of a trial.

    First the longest contiguous run with significant wrench magnitude is
    kept, then its ends are trimmed where the tool barely moves.  The
    velocity test uses the tool-origin velocity, not the world-origin
    moment component.
    """
    if trial.twist_world is None:
        raise ValueError("segment_contact needs twists; run pose differentiation first")
    f = np.linalg.norm(trial.wrench_world[:, :3], axis=1)
    m = np.linalg.norm(trial.wrench_world[:, 3:], axis=1)
    contact = (f > force_threshold_n) | (m > moment_threshold_nm)
    if not contact.any():
        raise ValueError("no contact segment found")
    # longest contiguous run
    padded = np.diff(np.concatenate([[0], contact.astype(int), [0]]))
    starts, stops = np.where(padded == 1)[0], np.where(padded == -1)[0]
    longest = int(np.argmax(stops - starts))
    start, stop = int(starts[longest]), int(stops[longest])

    omega = np.linalg.norm(trial.twist_world[:, :3], axis=1)
    tool_v = moments_at_points(trial.twist_world, trial.position)
    v = np.linalg.norm(tool_v, axis=1)
    still = (omega <= omega_threshold_rad_s) & (v <= v_threshold_m_s)
    while start < stop and still[start]:
        start += 1
    while stop > start and still[stop - 1]:
        stop -= 1
    if stop - start < 3:
        raise ValueError("no contact segment found")
    return start, stop


def expand_viewpoints(trial: Trial) -> Trial:
    """Fill the tool-viewpoint screw series from the world-frame ones."""
    if trial.twist_world is None:
        raise ValueError("expand_viewpoints needs world twists")
    inv_rot = np.transpose(trial.rotation, (0, 2, 1))
    inv_pos = -np.einsum("nij,nj->ni", inv_rot, trial.position)
    trial.twist_tool = transform_screws(inv_rot, inv_pos, trial.twist_world)
    trial.wrench_tool = transform_screws(inv_rot, inv_pos, trial.wrench_world)
    return trial


def preprocess_trial(trial: Trial, config: PreprocessConfig | None = None) -> Trial:
    """Smooth, differentiate, segment and viewpoint-expand one trial."""
    config = config or PreprocessConfig()
    dt = float(np.median(np.diff(trial.time)))
    trial = Trial(trial.time, trial.rotation, trial.position,
                  smooth_wrench(trial.wrench_world, config.smoothing_sigma_s, dt),
                  source=trial.source)
    omega, v = differentiate_pose_arrays(trial.rotation, trial.position, trial.time)
    trial.twist_world = np.hstack([omega, v])
    start, stop = segment_contact(trial, config.force_threshold_n,
                                  config.moment_threshold_nm,
                                  config.omega_threshold_rad_s,
                                  config.v_threshold_m_s)
    return expand_viewpoints(trial.sliced(start, stop))


# --- task-frame re-expression -------------------------------------------------

@dataclass
class TaskFrameTrial:
    """One trial's signals expressed in the derived task frame."""

    time: np.ndarray
    pose_rotation: np.ndarray   # tool pose relative to its initial pose, in tf
    pose_position: np.ndarray
    twist: np.ndarray
    wrench: np.ndarray


def _task_frame_in_world(task_frame: TaskFrame, rotation: np.ndarray,
                         position: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample task-frame pose in world coordinates."""
    n = rotation.shape[0]
    origin, orientation = task_frame.origin, task_frame.orientation
    if orientation.viewpoint is FrameTag.TOOL:
        R = np.einsum("nij,jk->nik", rotation, orientation.rotation)
    else:
        R = np.broadcast_to(orientation.rotation, (n, 3, 3))
    if origin.viewpoint is FrameTag.TOOL:
        p = np.einsum("nij,j->ni", rotation, origin.origin) + position
    else:
        p = np.broadcast_to(origin.origin, (n, 3))
    return R, p


def express_in_task_frame(trial: Trial, task_frame: TaskFrame) -> TaskFrameTrial:
    """Express twists, wrenches and the relative pose trajectory in the task frame.

    Screws are screw-transformed sample-wise; the pose relative to the
    initial tool pose is conjugated with the (possibly time-varying) task
    frame so it reads the same regardless of where the tool started.
    """
    R_wtf, p_wtf = _task_frame_in_world(task_frame, trial.rotation, trial.position)
    inv_rot = np.transpose(R_wtf, (0, 2, 1))
    inv_pos = -np.einsum("nij,nj->ni", inv_rot, p_wtf)
    twist_tf = transform_screws(inv_rot, inv_pos, trial.twist_world)
    wrench_tf = transform_screws(inv_rot, inv_pos, trial.wrench_world)

    R0, p0 = trial.rotation[0], trial.position[0]
    # relative tool trajectory, then task-frame pose, both w.r.t. the start pose
    R_rel = np.einsum("ji,njk->nik", R0, trial.rotation)
    p_rel = (trial.position - p0) @ R0
    R_tf0 = np.einsum("ji,njk->nik", R0, R_wtf)
    p_tf0 = (p_wtf - p0) @ R0
    # conjugation: T_tf0^-1 * T_rel * T_tf0, sample-wise
    Rc = np.einsum("nji,njk,nkl->nil", R_tf0, R_rel, R_tf0)
    pc = np.einsum("nji,nj->ni", R_tf0,
                   np.einsum("nij,nj->ni", R_rel, p_tf0) + p_rel - p_tf0)
    return TaskFrameTrial(time=trial.time.copy(), pose_rotation=Rc, pose_position=pc,
                          twist=twist_tf, wrench=wrench_tf)


# --- progress reparameterization ----------------------------------------------

@dataclass
class ProgressTrial:
    """Task-frame signals resampled on a uniform nondimensional progress grid."""

    grid: np.ndarray
    xi_max: float
    duration: float
    pose_rotation: np.ndarray
    pose_position: np.ndarray
    twist: np.ndarray          # per unit progress
    wrench: np.ndarray


def progress_rate(twist: np.ndarray, kind: ProgressKind) -> np.ndarray:
    """Instantaneous progress rate: rotational or translational speed."""
    part = twist[:, :3] if kind is ProgressKind.ROTATION_ANGLE else twist[:, 3:]
    return np.linalg.norm(part, axis=1)


def _interp_rotation(Ra: np.ndarray, Rb: np.ndarray, alpha: float) -> np.ndarray:
    from .geometry import rot_exp, rot_log
    return Ra @ rot_exp(alpha * rot_log(Ra.T @ Rb))


def reparameterize(trial: TaskFrameTrial, kind: ProgressKind, n: int = 100) -> ProgressTrial:
    """Resample a trial from the time domain to a uniform progress grid.

    Progress is the integrated rate (rotation angle or arc length), with
    the rate clamped to 1e-9 so the mapping stays invertible through
    dwells; twists are converted to per-unit-progress before resampling.
    """
    raw_rate = progress_rate(trial.twist, kind)
    dwell = float(np.mean(raw_rate < 1e-9))
    if dwell > 0.05:
        log.warning("dwell covers %.0f%% of the segment; progress is ill-conditioned",
                    100 * dwell)
    rate = np.maximum(raw_rate, 1e-9)
    dt = np.diff(trial.time)
    xi = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * dt)])
    xi_max = float(xi[-1])
    if xi_max < 1e-6:
        raise ValueError("degenerate progress: total traveled angle/length < 1e-6")
    xi_bar = xi / xi_max

    twist_xi = trial.twist / rate[:, None]
    grid = np.linspace(0.0, 1.0, n)
    idx = np.clip(np.searchsorted(xi_bar, grid, side="right") - 1, 0, len(xi_bar) - 2)
    span = xi_bar[idx + 1] - xi_bar[idx]
    alpha = np.clip((grid - xi_bar[idx]) / np.where(span > 0, span, 1.0), 0.0, 1.0)

    lerp = lambda a: a[idx] + alpha[..., None] * (a[idx + 1] - a[idx])
    rotations = np.stack([
        _interp_rotation(trial.pose_rotation[i], trial.pose_rotation[i + 1], al)
        for i, al in zip(idx, alpha)])
    return ProgressTrial(grid=grid, xi_max=xi_max,
                         duration=float(trial.time[-1] - trial.time[0]),
                         pose_rotation=rotations,
                         pose_position=lerp(trial.pose_position),
                         twist=lerp(twist_xi), wrench=lerp(trial.wrench))


# --- multi-trial averaging ------------------------------------------------------

def _aligned_quaternions(trials: list[ProgressTrial]) -> np.ndarray:
    """(n_trials, n, 4) quaternion series, hemisphere-aligned for averaging."""
    all_q = []
    for trial in trials:
        q = np.stack([rot_to_quat(R) for R in trial.pose_rotation])
        for k in range(1, len(q)):
            if q[k] @ q[k - 1] < 0.0:
                q[k] = -q[k]
        if all_q and q[0] @ all_q[0][0] < 0.0:
            q = -q
        all_q.append(q)
    return np.stack(all_q)


def _smooth_columns(grid: np.ndarray, data: np.ndarray, smoothing: float) -> np.ndarray:
    if smoothing <= 0.0:
        return data
    out = np.empty_like(data)
    for j in range(data.shape[1]):
        out[:, j] = UnivariateSpline(grid, data[:, j], k=3, s=smoothing)(grid)
    return out


@dataclass
class ReferenceSignals:
    grid: np.ndarray
    pose_position: np.ndarray
    pose_quaternion: np.ndarray
    twist: np.ndarray
    wrench: np.ndarray
    xi_max_avg: float
    duration_avg: float


def average_trials(trials: list[ProgressTrial], smoothing: float = 0.0) -> ReferenceSignals:
    """Average resampled trials into one reference per signal.

    Componentwise mean over trials per grid point, then an optional cubic
    smoothing spline per signal column (smoothing 0 keeps the plain mean).
    Quaternions are hemisphere-aligned before averaging and renormalized
    afterwards.
    """
    if not trials:
        raise ValueError("no trials to average")
    grid = trials[0].grid
    for t in trials[1:]:
        if len(t.grid) != len(grid) or not np.allclose(t.grid, grid, atol=1e-12):
            raise ValueError("trials must share one progress grid")

    position = _smooth_columns(grid, np.mean([t.pose_position for t in trials], axis=0),
                               smoothing)
    twist = _smooth_columns(grid, np.mean([t.twist for t in trials], axis=0), smoothing)
    wrench = _smooth_columns(grid, np.mean([t.wrench for t in trials], axis=0), smoothing)
    quats = _smooth_columns(grid, _aligned_quaternions(trials).mean(axis=0), smoothing)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return ReferenceSignals(grid=grid, pose_position=position, pose_quaternion=quats,
                            twist=twist, wrench=wrench,
                            xi_max_avg=float(np.mean([t.xi_max for t in trials])),
                            duration_avg=float(np.mean([t.duration for t in trials])))


# --- task model ------------------------------------------------------------------

@dataclass
class TaskModel:
    """Derived task-frame parameters plus averaged reference signals."""

    origin_viewpoint: FrameTag
    origin: np.ndarray
    origin_covariance: np.ndarray
    orientation_viewpoint: FrameTag
    rotation: np.ndarray
    orientation_covariance: np.ndarray
    motion_model: ScrewModel
    wrench_model: ScrewModel
    motion_vector: MotionVector
    wrench_vector: WrenchVector
    progress: ProgressKind
    ratios: dict[str, float]
    weighting_applied: bool
    grid: np.ndarray
    pose_position: np.ndarray
    pose_quaternion: np.ndarray
    twist: np.ndarray
    wrench: np.ndarray
    xi_max_avg: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task_frame": {
                "origin_viewpoint": self.origin_viewpoint.value,
                "origin_m": self.origin.tolist(),
                "origin_covariance_m2": self.origin_covariance.tolist(),
                "orientation_viewpoint": self.orientation_viewpoint.value,
                "rotation_row_major": self.rotation.reshape(-1).tolist(),
                "orientation_covariance": self.orientation_covariance.tolist(),
                "motion_model": self.motion_model.value,
                "wrench_model": self.wrench_model.value,
                "motion_vector": self.motion_vector.value,
                "wrench_vector": self.wrench_vector.value,
                "progress": self.progress.value,
                "ratios": self.ratios,
                "weighting_applied": self.weighting_applied,
            },
            "grid": self.grid.tolist(),
            "pose_ref": {
                "position_m": self.pose_position.tolist(),
                "quaternion_wxyz": self.pose_quaternion.tolist(),
            },
            "twist_ref": self.twist.tolist(),
            "wrench_ref": self.wrench.tolist(),
            "xi_max_avg": self.xi_max_avg,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @staticmethod
    def from_dict(d: dict) -> "TaskModel":
        tf = d["task_frame"]
        return TaskModel(
            origin_viewpoint=FrameTag(tf["origin_viewpoint"]),
            origin=np.array(tf["origin_m"]),
            origin_covariance=np.array(tf["origin_covariance_m2"]),
            orientation_viewpoint=FrameTag(tf["orientation_viewpoint"]),
            rotation=np.array(tf["rotation_row_major"]).reshape(3, 3),
            orientation_covariance=np.array(tf["orientation_covariance"]),
            motion_model=ScrewModel(tf["motion_model"]),
            wrench_model=ScrewModel(tf["wrench_model"]),
            motion_vector=MotionVector(tf["motion_vector"]),
            wrench_vector=WrenchVector(tf["wrench_vector"]),
            progress=ProgressKind(tf["progress"]),
            ratios=dict(tf["ratios"]),
            weighting_applied=bool(tf["weighting_applied"]),
            grid=np.array(d["grid"]),
            pose_position=np.array(d["pose_ref"]["position_m"]),
            pose_quaternion=np.array(d["pose_ref"]["quaternion_wxyz"]),
            twist=np.array(d["twist_ref"]),
            wrench=np.array(d["wrench_ref"]),
            xi_max_avg=float(d["xi_max_avg"]),
            provenance=dict(d.get("provenance", {})),
        )

    @staticmethod
    def from_json(text: str) -> "TaskModel":
        return TaskModel.from_dict(json.loads(text))

    def rotation_series(self) -> np.ndarray:
        return np.stack([quat_to_rot(q) for q in self.pose_quaternion])


def build_task_model(task_frame: TaskFrame, signals: ReferenceSignals,
                     provenance: dict | None = None) -> TaskModel:
    """Assemble the persistent task model from a derivation and its signals."""
    provenance = dict(provenance or {})
    provenance.setdefault("duration_avg_s", signals.duration_avg)
    ratios = dict(task_frame.origin.ratios)
    ratios["orientation_viewpoint"] = task_frame.orientation.ratio
    return TaskModel(
        origin_viewpoint=task_frame.origin.viewpoint,
        origin=task_frame.origin.origin,
        origin_covariance=task_frame.origin.covariance,
        orientation_viewpoint=task_frame.orientation.viewpoint,
        rotation=task_frame.orientation.rotation,
        orientation_covariance=task_frame.orientation.covariance,
        motion_model=task_frame.origin.motion_model,
        wrench_model=task_frame.origin.wrench_model,
        motion_vector=task_frame.vectors.motion_vector,
        wrench_vector=task_frame.vectors.wrench_vector,
        progress=task_frame.progress,
        ratios=ratios,
        weighting_applied=task_frame.orientation.weighting_applied,
        grid=signals.grid,
        pose_position=signals.pose_position,
        pose_quaternion=signals.pose_quaternion,
        twist=signals.twist,
        wrench=signals.wrench,
        xi_max_avg=signals.xi_max_avg,
        provenance=provenance,
    )
