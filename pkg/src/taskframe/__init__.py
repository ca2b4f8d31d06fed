"""Automatic task-frame derivation from demonstrated motion and wrench data.

The package derives an optimal task frame (origin, orientation, viewpoints,
progress variable) from recorded pose and wrench trajectories using
screw-axis least squares, expresses the demonstrations in that frame as a
reusable task model, and validates the model with a constraint-based
tracking controller against synthetic spring-contact environments.
"""

from .geometry import (FrameTag, Pose, Screw, ScrewKind, change_reference_point,
                       differentiate_poses, hat, moment_at, pose_exp, pose_log,
                       rot_exp, rot_log, screw_transform, screw_transform_matrix,
                       similarity_transform, vee)
from .estimators import (AsipResult, AvofResult, asip, avof, avof_asip_consistency,
                         mean_subtract)
from .pipeline import (MotionVector, OriginDecision, OrientationDecision, ProgressKind,
                       ScrewModel, TaskFrame, VectorChoice, WeightingConfig,
                       WrenchVector, align_frames, assemble_task_frame,
                       average_rotations, derive_orientation, derive_origin,
                       derive_task_frame, select_vectors_of_interest,
                       significance_ratio)
from .trajectory import (PreprocessConfig, ProgressTrial, TaskFrameTrial, TaskModel,
                         Trial, TrialBatch, average_trials, build_task_model,
                         expand_viewpoints, express_in_task_frame, load_trial,
                         preprocess_trial, reparameterize, save_trial, segment_contact,
                         smooth_wrench)
from .synthetic import (GroundTruth, MotionPattern, NoiseSpec, ScenarioSpec,
                        VariationSpec, WrenchPattern, generate, ground_truth)
from .simulate import (ControllerConfig, PointOnPlane, RevoluteJoint, Scenario,
                       ScenarioOverrides, SimLog, SimulationDiverged, Spring1D,
                       blend_twists, environment_wrench, load_scenario,
                       pose_constraint_twist, run_simulation, step_pose,
                       wrench_constraint_twist)

__version__ = "0.1.0"
