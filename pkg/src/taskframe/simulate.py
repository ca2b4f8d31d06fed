"""Kinematic closed-loop validation of a task model.

A velocity-resolved tool tracks the task model's reference pose, twist and
wrench inside a spring-compliance environment.  Two constraint controllers
each produce a desired twist (pose tracking and wrench tracking); their
weighted blend is integrated at a fixed control rate.  All control happens
in the derived task frame; the environment reacts in the world frame.

The blend ``w_p t_p + w_w t_w`` is the closed form of the weighted
least-squares twist for two full-rank twist constraints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import FrameTag, Pose, pose_exp, pose_log, rot_exp, rot_log, Screw
from .trajectory import TaskModel, quat_to_rot, rot_to_quat

DIVERGENCE_LIMIT_M = 1.0


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class ControllerConfig:
    k_p: float = 3.0              # 1/s
    k_w: float = 3.0              # 1/s
    c_f: float = 5e-4             # m/N
    c_m: float = 5e-4             # rad/(N*m)
    w_p: float = 0.03
    w_w: float = 0.97
    control_rate_hz: float = 100.0

    def __post_init__(self):
        if min(self.k_p, self.k_w, self.c_f, self.c_m) <= 0.0:
            raise ValueError("controller gains and compliances must be > 0")
        if self.control_rate_hz <= 0.0:
            raise ValueError("control_rate_hz must be > 0")
        if abs(self.w_p + self.w_w - 1.0) > 1e-9:
            raise ValueError("constraint weights must satisfy w_p + w_w = 1")


# --- environments ------------------------------------------------------------

@dataclass
class Spring1D:
    """Linear spring along one axis, acting on the tool origin."""

    stiffness_n_m: float
    axis: tuple = (1.0, 0.0, 0.0)
    rest_position_m: tuple = (0.0, 0.0, 0.0)

    def wrench_at(self, rotation: np.ndarray, position: np.ndarray) -> np.ndarray:
        axis = np.asarray(self.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        stretch = (position - np.asarray(self.rest_position_m)) @ axis
        f = -self.stiffness_n_m * stretch * axis
        return np.concatenate([f, np.cross(position, f)])


@dataclass
class PointOnPlane:
    """One-sided normal spring between a tool-fixed tip and a plane."""

    stiffness_n_m: float
    point_m: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (0.0, 0.0, 1.0)
    tip_offset_tool_m: tuple = (0.0, 0.0, 0.0)

    def wrench_at(self, rotation: np.ndarray, position: np.ndarray) -> np.ndarray:
        normal = np.asarray(self.normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        tip = rotation @ np.asarray(self.tip_offset_tool_m) + position
        depth = (tip - np.asarray(self.point_m)) @ normal
        if depth >= 0.0:
            return np.zeros(6)
        f = -self.stiffness_n_m * depth * normal
        return np.concatenate([f, np.cross(tip, f)])


@dataclass
class RevoluteJoint:
    """Radial and axial springs tying a tool-fixed grip point to a hinge.

    With zero radius the radial spring pulls the grip onto the hinge axis;
    radius/height default to the values captured at simulation start so the
    initial configuration is on the constraint manifold.
    """

    radial_stiffness_n_m: float
    axial_stiffness_n_m: float
    hinge_m: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    grip_offset_tool_m: tuple = (0.0, 0.0, 0.0)
    radius_m: float | None = None
    height_m: float | None = None

    def capture(self, rotation: np.ndarray, position: np.ndarray) -> "RevoluteJoint":
        if self.radius_m is None or self.height_m is None:
            axis = np.asarray(self.axis, dtype=float)
            axis = axis / np.linalg.norm(axis)
            grip = rotation @ np.asarray(self.grip_offset_tool_m) + position
            rel = grip - np.asarray(self.hinge_m)
            h = rel @ axis
            rho = float(np.linalg.norm(rel - h * axis))
            if self.radius_m is None:
                self.radius_m = rho
            if self.height_m is None:
                self.height_m = float(h)
        return self

    def wrench_at(self, rotation: np.ndarray, position: np.ndarray) -> np.ndarray:
        axis = np.asarray(self.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        grip = rotation @ np.asarray(self.grip_offset_tool_m) + position
        rel = grip - np.asarray(self.hinge_m)
        h = rel @ axis
        radial = rel - h * axis
        rho = float(np.linalg.norm(radial))
        radius = self.radius_m or 0.0
        height = self.height_m or 0.0
        if radius == 0.0:
            f_rad = -self.radial_stiffness_n_m * radial
        elif rho > 1e-12:
            f_rad = -self.radial_stiffness_n_m * (rho - radius) * radial / rho
        else:
            f_rad = np.zeros(3)
        f = f_rad - self.axial_stiffness_n_m * (h - height) * axis
        return np.concatenate([f, np.cross(grip, f)])


def environment_wrench(env, tool_pose: Pose) -> Screw:
    """Reaction wrench on the tool, world frame, moment at the world origin."""
    if env is None:
        return Screw.wrench(np.zeros(3), np.zeros(3))
    w = env.wrench_at(tool_pose.rotation, tool_pose.position)
    return Screw.wrench(w[:3], w[3:])


# --- constraint controllers ---------------------------------------------------

def pose_constraint_twist(actual: Pose, desired: Pose, desired_twist: np.ndarray,
                          k_p: float) -> np.ndarray:
    """Feedback on the displacement screw of the pose error, plus feedforward."""
    error = pose_log(actual.inverse() @ desired)
    return k_p * error.as_array() + np.asarray(desired_twist, dtype=float)


def wrench_constraint_twist(actual_wrench: np.ndarray, desired_wrench: np.ndarray,
                            desired_twist: np.ndarray, k_w: float,
                            c_f: float, c_m: float) -> np.ndarray:
    """Compliance feedback: force error drives translation, moment error rotation."""
    err = np.asarray(desired_wrench, dtype=float) - np.asarray(actual_wrench, dtype=float)
    feedback = np.concatenate([k_w * c_m * err[3:], k_w * c_f * err[:3]])
    return feedback + np.asarray(desired_twist, dtype=float)


def blend_twists(t_p: np.ndarray, t_w: np.ndarray, w_p: float, w_w: float) -> np.ndarray:
    return w_p * np.asarray(t_p, dtype=float) + w_w * np.asarray(t_w, dtype=float)


def step_pose(pose: Pose, twist: np.ndarray, dt: float) -> Pose:
    """Integrate a twist (expressed in the same frame as the pose) for dt."""
    twist = np.asarray(twist, dtype=float)
    step = pose_exp(Screw.displacement(dt * twist[:3], dt * twist[3:]))
    return step @ pose


# --- scenario ------------------------------------------------------------------

@dataclass
class ScenarioOverrides:
    speed_scale: float = 1.0
    wrench_scale: float = 1.0
    initial_offset_m: tuple = (0.0, 0.0, 0.0)
    initial_offset_rotvec: tuple = (0.0, 0.0, 0.0)
    frame_origin_offset_m: tuple = (0.0, 0.0, 0.0)
    frame_rotation_offset_rotvec: tuple = (0.0, 0.0, 0.0)


@dataclass
class Scenario:
    environment: object | None
    controller: ControllerConfig
    initial_pose: Pose
    progress_rate: float | None = None   # rad/s or m/s; None = demonstrated average
    max_duration_s: float | None = None
    overrides: ScenarioOverrides = field(default_factory=ScenarioOverrides)

    config_echo: dict = field(default_factory=dict)


_ENV_KINDS = {
    "spring1d": (Spring1D, {"stiffness_n_m", "axis", "rest_position_m"}),
    "point_on_plane": (PointOnPlane, {"stiffness_n_m", "point_m", "normal",
                                      "tip_offset_tool_m"}),
    "revolute_joint": (RevoluteJoint, {"radial_stiffness_n_m", "axial_stiffness_n_m",
                                       "hinge_m", "axis", "grip_offset_tool_m",
                                       "radius_m", "height_m"}),
}

_CONTROLLER_KEYS = {
    "k_p_1_s": "k_p", "k_w_1_s": "k_w", "c_f_m_n": "c_f", "c_m_rad_nm": "c_m",
    "w_p": "w_p", "w_w": "w_w", "control_rate_hz": "control_rate_hz",
}


def load_scenario(text: str) -> Scenario:
    """Parse a scenario JSON document; unknown keys are rejected."""
    doc = json.loads(text)
    known_top = {"environment", "controller", "initial_pose", "progress_rate",
                 "max_duration_s", "overrides"}
    unknown = set(doc) - known_top
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")

    env = None
    if doc.get("environment") is not None:
        spec = dict(doc["environment"])
        kind = spec.pop("kind", None)
        if kind not in _ENV_KINDS:
            raise ValueError(f"unknown environment kind {kind!r}")
        cls, allowed = _ENV_KINDS[kind]
        extra = set(spec) - allowed
        if extra:
            raise ValueError(f"unknown {kind} keys: {sorted(extra)}")
        env = cls(**spec)

    ctrl_spec = dict(doc.get("controller", {}))
    extra = set(ctrl_spec) - set(_CONTROLLER_KEYS)
    if extra:
        raise ValueError(f"unknown controller keys: {sorted(extra)}")
    controller = ControllerConfig(**{_CONTROLLER_KEYS[k]: v for k, v in ctrl_spec.items()})

    pose_spec = doc.get("initial_pose", {})
    extra = set(pose_spec) - {"position_m", "quaternion_wxyz"}
    if extra:
        raise ValueError(f"unknown initial_pose keys: {sorted(extra)}")
    initial = Pose(quat_to_rot(np.asarray(pose_spec.get("quaternion_wxyz", [1, 0, 0, 0]))),
                   np.asarray(pose_spec.get("position_m", [0.0, 0.0, 0.0])))

    ov_spec = dict(doc.get("overrides", {}))
    extra = set(ov_spec) - set(ScenarioOverrides.__dataclass_fields__)
    if extra:
        raise ValueError(f"unknown override keys: {sorted(extra)}")
    for key in ("initial_offset_m", "initial_offset_rotvec",
                "frame_origin_offset_m", "frame_rotation_offset_rotvec"):
        if key in ov_spec:
            ov_spec[key] = tuple(ov_spec[key])
    overrides = ScenarioOverrides(**ov_spec)

    rate = doc.get("progress_rate")
    if rate is not None and rate != "auto":
        rate = float(rate)
    elif rate == "auto":
        rate = None
    return Scenario(environment=env, controller=controller, initial_pose=initial,
                    progress_rate=rate, max_duration_s=doc.get("max_duration_s"),
                    overrides=overrides, config_echo=doc)


# --- simulation -----------------------------------------------------------------

SIMLOG_COLUMNS = (
    "t,xi_bar,"
    "des_px,des_py,des_pz,des_qw,des_qx,des_qy,des_qz,"
    "act_px,act_py,act_pz,act_qw,act_qx,act_qy,act_qz,"
    "des_wx,des_wy,des_wz,des_vx,des_vy,des_vz,"
    "act_wx,act_wy,act_wz,act_vx,act_vy,act_vz,"
    "des_fx,des_fy,des_fz,des_mx,des_my,des_mz,"
    "act_fx,act_fy,act_fz,act_mx,act_my,act_mz"
)


@dataclass
class SimLog:
    time: np.ndarray
    xi_bar: np.ndarray
    desired_pose: np.ndarray     # (K,7) position + quaternion wxyz
    actual_pose: np.ndarray
    desired_twist: np.ndarray    # (K,6)
    actual_twist: np.ndarray
    desired_wrench: np.ndarray
    actual_wrench: np.ndarray
    rmse: dict[str, float] = field(default_factory=dict)

    def compute_rmse(self) -> dict[str, float]:
        """Six tracking RMSEs: rotation [deg], position [mm], rotational and
        translational velocity [deg/s, mm/s], force [N], moment [N*m]."""
        rot_err = np.empty(len(self.time))
        for k in range(len(self.time)):
            Rd = quat_to_rot(self.desired_pose[k, 3:])
            Ra = quat_to_rot(self.actual_pose[k, 3:])
            rot_err[k] = np.linalg.norm(rot_log(Ra.T @ Rd))
        rms = lambda x: float(np.sqrt(np.mean(x**2)))
        pos_err = np.linalg.norm(self.desired_pose[:, :3] - self.actual_pose[:, :3], axis=1)
        omega_err = np.linalg.norm(self.desired_twist[:, :3] - self.actual_twist[:, :3], axis=1)
        v_err = np.linalg.norm(self.desired_twist[:, 3:] - self.actual_twist[:, 3:], axis=1)
        f_err = np.linalg.norm(self.desired_wrench[:, :3] - self.actual_wrench[:, :3], axis=1)
        m_err = np.linalg.norm(self.desired_wrench[:, 3:] - self.actual_wrench[:, 3:], axis=1)
        self.rmse = {
            "rotation_deg": rms(np.degrees(rot_err)),
            "position_mm": rms(1e3 * pos_err),
            "omega_deg_s": rms(np.degrees(omega_err)),
            "v_mm_s": rms(1e3 * v_err),
            "force_n": rms(f_err),
            "moment_nm": rms(m_err),
        }
        return self.rmse

    def write_csv(self, path) -> None:
        table = np.hstack([self.time[:, None], self.xi_bar[:, None],
                           self.desired_pose, self.actual_pose,
                           self.desired_twist, self.actual_twist,
                           self.desired_wrench, self.actual_wrench])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# columns: {SIMLOG_COLUMNS}\n")
            for row in table:
                fh.write(",".join(f"{x:.10g}" for x in row) + "\n")
            fh.write("# rmse: " + json.dumps(self.rmse, sort_keys=True) + "\n")


def _interpolate_references(model: TaskModel, xi_bar: float
                            ) -> tuple[Pose, np.ndarray, np.ndarray]:
    grid = model.grid
    x = np.clip(xi_bar, 0.0, 1.0) * (len(grid) - 1)
    i = min(int(np.floor(x)), len(grid) - 2)
    a = x - i
    pos = (1 - a) * model.pose_position[i] + a * model.pose_position[i + 1]
    q = (1 - a) * model.pose_quaternion[i] + a * model.pose_quaternion[i + 1]
    q = q / np.linalg.norm(q)
    twist = (1 - a) * model.twist[i] + a * model.twist[i + 1]
    wrench = (1 - a) * model.wrench[i] + a * model.wrench[i + 1]
    return Pose(quat_to_rot(q), pos), twist, wrench


def _perturbed_frame(model: TaskModel, overrides: ScenarioOverrides
                     ) -> tuple[np.ndarray, np.ndarray, TaskModel]:
    """Apply task-frame perturbations, re-expressing the references consistently.

    The perturbation is a fixed pose offset in the frame's own viewpoint, so
    the physical reference trajectory is unchanged; only the control frame
    moves.  Requires origin and orientation to share one viewpoint.
    """
    d_p = np.asarray(overrides.frame_origin_offset_m, dtype=float)
    d_r = np.asarray(overrides.frame_rotation_offset_rotvec, dtype=float)
    if not d_p.any() and not d_r.any():
        return model.rotation, model.origin, model
    if model.origin_viewpoint is not model.orientation_viewpoint:
        raise ValueError("frame perturbation needs matching origin/orientation viewpoints")
    R_new = model.rotation @ rot_exp(d_r)
    p_new = model.origin + d_p
    # relative pose of the perturbed frame in the original one
    E = Pose(model.rotation, model.origin).inverse() @ Pose(R_new, p_new)
    E_inv = E.inverse()
    n = len(model.grid)
    pose_pos = np.empty_like(model.pose_position)
    pose_quat = np.empty_like(model.pose_quaternion)
    twist = np.empty_like(model.twist)
    wrench = np.empty_like(model.wrench)
    for k in range(n):
        T = Pose(quat_to_rot(model.pose_quaternion[k]), model.pose_position[k])
        Tp = E_inv @ T @ E
        pose_pos[k] = Tp.position
        pose_quat[k] = rot_to_quat(Tp.rotation)
        for src, dst in ((model.twist, twist), (model.wrench, wrench)):
            a = E_inv.rotation @ src[k, :3]
            b = E_inv.rotation @ src[k, 3:] + np.cross(E_inv.position, a)
            dst[k] = np.concatenate([a, b])
    for k in range(1, n):
        if pose_quat[k] @ pose_quat[k - 1] < 0.0:
            pose_quat[k] = -pose_quat[k]
    import copy
    adjusted = copy.copy(model)
    adjusted.pose_position, adjusted.pose_quaternion = pose_pos, pose_quat
    adjusted.twist, adjusted.wrench = twist, wrench
    return R_new, p_new, adjusted


def _task_frame_pose(rotation_tf: np.ndarray, origin_tf: np.ndarray,
                     origin_view: FrameTag, orient_view: FrameTag,
                     tool_pose: Pose) -> Pose:
    R = rotation_tf if orient_view is FrameTag.WORLD else tool_pose.rotation @ rotation_tf
    p = origin_tf if origin_view is FrameTag.WORLD else tool_pose.transform_point(origin_tf)
    return Pose(R, p)


def run_simulation(model: TaskModel, scenario: Scenario) -> SimLog:
    """Track the task model's references in the scenario's environment."""
    config = scenario.controller
    overrides = scenario.overrides
    dt = 1.0 / config.control_rate_hz

    rotation_tf, origin_tf, model = _perturbed_frame(model, overrides)
    rate_nominal = scenario.progress_rate
    if rate_nominal is None:
        duration = model.provenance.get("duration_avg_s")
        if not duration:
            raise ValueError("scenario needs progress_rate: model lacks duration_avg_s")
        rate_nominal = model.xi_max_avg / float(duration)
    rate_cmd = rate_nominal * overrides.speed_scale

    tool = Pose(scenario.initial_pose.rotation @ rot_exp(overrides.initial_offset_rotvec),
                scenario.initial_pose.position + np.asarray(overrides.initial_offset_m))
    start = tool
    env = scenario.environment
    if isinstance(env, RevoluteJoint):
        env = env.capture(tool.rotation, tool.position)

    max_duration = scenario.max_duration_s
    if max_duration is None:
        max_duration = 3.0 * model.xi_max_avg / max(rate_cmd, 1e-9) + 2.0
    n_steps = int(np.ceil(max_duration / dt))

    rows: list[list[np.ndarray]] = []
    xi = 0.0
    for k in range(n_steps):
        xi_bar = min(xi / model.xi_max_avg, 1.0)
        pose_des, twist_ref, wrench_ref = _interpolate_references(model, xi_bar)
        twist_des = twist_ref * rate_cmd
        wrench_des = wrench_ref * overrides.wrench_scale

        tf_pose = _task_frame_pose(rotation_tf, origin_tf, model.origin_viewpoint,
                                   model.orientation_viewpoint, tool)
        X = start.inverse() @ tf_pose                  # task frame w.r.t. initial tool
        rel = start.inverse() @ tool
        pose_act = X.inverse() @ rel @ X

        w_env = environment_wrench(env, tool)
        tf_inv = tf_pose.inverse()
        a = tf_inv.rotation @ w_env.directional
        wrench_act = np.concatenate([a, tf_inv.rotation @ w_env.moment
                                     + np.cross(tf_inv.position, a)])

        t_p = pose_constraint_twist(pose_act, pose_des, twist_des, config.k_p)
        t_w = wrench_constraint_twist(wrench_act, wrench_des, twist_des,
                                      config.k_w, config.c_f, config.c_m)
        t_cmd = blend_twists(t_p, t_w, config.w_p, config.w_w)

        pos_err = np.linalg.norm(pose_des.position - pose_act.position)
        if pos_err > DIVERGENCE_LIMIT_M:
            raise SimulationDiverged(
                f"position error {pos_err:.3f} m at t={k * dt:.3f} s (xi_bar={xi_bar:.3f})")

        rows.append([np.array([k * dt, xi_bar]),
                     np.concatenate([pose_des.position, rot_to_quat(pose_des.rotation)]),
                     np.concatenate([pose_act.position, rot_to_quat(pose_act.rotation)]),
                     twist_des, t_cmd, wrench_des, wrench_act])

        # integrate in the world frame; the commanded twist is realized exactly
        a = tf_pose.rotation @ t_cmd[:3]
        b = tf_pose.rotation @ t_cmd[3:] + np.cross(tf_pose.position, a)
        tool = step_pose(tool, np.concatenate([a, b]), dt)

        rate_part = t_cmd[:3] if model.progress.value == "rotation_angle" else t_cmd[3:]
        xi += dt * float(np.linalg.norm(rate_part))
        if xi >= model.xi_max_avg:
            break

    cols = [np.stack([r[i] for r in rows]) for i in range(7)]
    log = SimLog(time=cols[0][:, 0], xi_bar=cols[0][:, 1],
                 desired_pose=cols[1], actual_pose=cols[2],
                 desired_twist=cols[3], actual_twist=cols[4],
                 desired_wrench=cols[5], actual_wrench=cols[6])
    log.compute_rmse()
    return log
