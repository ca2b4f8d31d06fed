"""Command-line surface: synth, derive, simulate, report.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure
(estimator degeneracy, non-convergence, simulation divergence).  Every
output artifact embeds the sha256 of its inputs and the full configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .estimators import as_screw_array
from .geometry import FrameTag
from .pipeline import TaskFrame, WeightingConfig, derive_task_frame
from .simulate import SimulationDiverged, load_scenario, run_simulation
from .synthetic import ScenarioSpec, generate
from .trajectory import (PreprocessConfig, TaskModel, TrialBatch, average_trials,
                         build_task_model, express_in_task_frame, load_trial,
                         preprocess_trial, reparameterize, save_trial)

log = logging.getLogger("taskframe")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise InputError(f"{path}: {err}") from err


# --- derive configuration ----------------------------------------------------

_DERIVE_KEYS = {
    "smoothing_sigma_s", "force_threshold_n", "moment_threshold_nm",
    "omega_threshold_rad_s", "v_threshold_m_s", "epsilon_regularization",
    "prior_origin_m", "grid_samples", "spline_smoothing", "weighting",
}
_WEIGHT_KEYS = {"enabled", "omega_ref_rad_s", "v_ref_m_s", "f_ref_n", "m_ref_nm"}


def _parse_derive_config(doc: dict) -> dict:
    unknown = set(doc) - _DERIVE_KEYS
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    weighting = doc.get("weighting", {})
    extra = set(weighting) - _WEIGHT_KEYS
    if extra:
        raise InputError(f"unknown weighting keys: {sorted(extra)}")
    return {
        "preprocess": PreprocessConfig(
            smoothing_sigma_s=doc.get("smoothing_sigma_s", 0.1),
            force_threshold_n=doc.get("force_threshold_n", 0.5),
            moment_threshold_nm=doc.get("moment_threshold_nm", 0.05),
            omega_threshold_rad_s=doc.get("omega_threshold_rad_s", 0.0),
            v_threshold_m_s=doc.get("v_threshold_m_s", 0.0)),
        "weighting": WeightingConfig(
            omega_ref=weighting.get("omega_ref_rad_s", 0.05),
            v_ref=weighting.get("v_ref_m_s", 0.005),
            f_ref=weighting.get("f_ref_n", 1.0),
            m_ref=weighting.get("m_ref_nm", 0.1),
            enabled=weighting.get("enabled", False)),
        "epsilon": float(doc.get("epsilon_regularization", 0.0)),
        "prior": np.asarray(doc.get("prior_origin_m", (0.0, 0.0, 0.0)), dtype=float),
        "grid_samples": int(doc.get("grid_samples", 100)),
        "spline_smoothing": float(doc.get("spline_smoothing", 0.0)),
    }


# --- report serialization ------------------------------------------------------

def _report_dict(tf: TaskFrame) -> dict:
    origin, orient = tf.origin, tf.orientation
    return {
        "origin": {
            "candidates": [
                {"viewpoint": c.viewpoint.value, "screw": c.screw,
                 "model": c.model.value, "point_m": c.result.point.tolist(),
                 "covariance_m2": c.result.covariance.tolist(),
                 "det_m6": c.det, "sigma_hat_sq": c.result.sigma_hat_sq}
                for c in origin.candidates],
            "fused": {tag.value: {"point_m": f.point.tolist(),
                                  "covariance_m2": f.covariance.tolist(),
                                  "det_m6": f.det}
                      for tag, f in origin.fused.items()},
            "viewpoint": origin.viewpoint.value,
            "origin_m": origin.origin.tolist(),
            "covariance_m2": origin.covariance.tolist(),
            "motion_model": origin.motion_model.value,
            "wrench_model": origin.wrench_model.value,
            "ratios": origin.ratios,
        },
        "orientation": {
            "candidates": [
                {"viewpoint": c.viewpoint.value, "source": c.source,
                 "vector": c.vector.value,
                 "frame_row_major": c.result.frame.reshape(-1).tolist(),
                 "covariance": c.result.covariance.tolist(),
                 "weighted_covariance": c.weighted_covariance.tolist(),
                 "singular_values": c.result.singular_values.tolist(),
                 "mean_sq_norm": c.result.mean_sq_norm}
                for c in orient.candidates],
            "combined": {tag.value: {"rotation_row_major": c.rotation.reshape(-1).tolist(),
                                     "covariance": c.covariance.tolist(), "det": c.det}
                         for tag, c in orient.combined.items()},
            "viewpoint": orient.viewpoint.value,
            "rotation_row_major": orient.rotation.reshape(-1).tolist(),
            "covariance": orient.covariance.tolist(),
            "ratio": orient.ratio,
            "weighting_applied": orient.weighting_applied,
        },
        "vectors_of_interest": {
            "motion": tf.vectors.motion_vector.value,
            "wrench": tf.vectors.wrench_vector.value,
            "progress": tf.progress.value,
        },
    }


# --- subcommands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    doc = _read_json(args.spec)
    try:
        spec = ScenarioSpec.from_dict(doc)
    except (TypeError, ValueError) as err:
        raise InputError(f"{args.spec}: {err}") from err
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trials, truth = generate(spec, args.trials)
    provenance = {"spec_sha256": _sha256(args.spec), "config": spec.to_dict(),
                  "n_trials": args.trials}
    for k, trial in enumerate(trials):
        save_trial(out / f"trial_{k:02d}.csv", trial)
    (out / "ground_truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    (out / "provenance.json").write_text(
        json.dumps(provenance, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(trials)} trials + ground_truth.json to {out}")
    return EXIT_OK


def cmd_derive(args) -> int:
    config_doc = _read_json(args.config) if args.config else {}
    cfg = _parse_derive_config(config_doc)
    if not args.trials:
        raise InputError("derive needs at least one trial file")
    raw = [load_trial(p) for p in args.trials]

    pre = [preprocess_trial(t, cfg["preprocess"]) for t in raw]
    batch = TrialBatch(pre)
    tf = derive_task_frame(batch, weighting=cfg["weighting"],
                           epsilon=cfg["epsilon"], p0=cfg["prior"])
    expressed = [express_in_task_frame(t, tf) for t in pre]
    resampled = [reparameterize(t, tf.progress, n=cfg["grid_samples"])
                 for t in expressed]
    signals = average_trials(resampled, smoothing=cfg["spline_smoothing"])

    provenance = {"inputs": {str(p): _sha256(p) for p in args.trials},
                  "config": config_doc}
    model = build_task_model(tf, signals, provenance)
    report = _report_dict(tf)
    report["provenance"] = dict(provenance)
    report["provenance"]["duration_avg_s"] = signals.duration_avg

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "task_model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    (out / "taskframe_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"origin viewpoint: {tf.origin.viewpoint.value} "
          f"(ratio {tf.origin.ratios['viewpoint']:.3g})")
    print(f"orientation viewpoint: {tf.orientation.viewpoint.value} "
          f"(ratio {tf.orientation.ratio:.3g})")
    print(f"vectors of interest: {tf.vectors.motion_vector.value}, "
          f"{tf.vectors.wrench_vector.value}; progress: {tf.progress.value}")
    print(f"wrote task_model.json + taskframe_report.json to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        model = TaskModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as err:
        raise InputError(f"{args.model}: {err}") from err
    try:
        scenario = load_scenario(Path(args.scenario).read_text(encoding="utf-8"))
    except (OSError, TypeError, ValueError, json.JSONDecodeError) as err:
        raise InputError(f"{args.scenario}: {err}") from err

    result = run_simulation(model, scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "simlog.csv")
    summary = {"rmse": result.rmse, "steps": int(len(result.time)),
               "final_xi_bar": float(result.xi_bar[-1]),
               "provenance": {"model_sha256": _sha256(args.model),
                              "scenario_sha256": _sha256(args.scenario),
                              "config": scenario.config_echo}}
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    for key, value in result.rmse.items():
        print(f"rmse {key}: {value:.4g}")
    print(f"wrote simlog.csv + summary.json to {out}")
    return EXIT_OK


def _fmt_ratio(x: float) -> str:
    return "inf" if np.isinf(x) else f"{x:.3g}"


def _line_distance(p1, d1, p2, d2) -> float:
    """Magnitude of the common normal between two lines (point, direction)."""
    n = np.cross(d1, d2)
    if np.linalg.norm(n) < 1e-12:
        rel = np.asarray(p2) - np.asarray(p1)
        return float(np.linalg.norm(rel - (rel @ d1) * np.asarray(d1)))
    return float(abs((np.asarray(p2) - np.asarray(p1)) @ n) / np.linalg.norm(n))


def _report_taskframe(doc: dict, truth: dict | None) -> int:
    for section in ("origin", "orientation", "vectors_of_interest"):
        if section not in doc:
            raise InputError(f"report is missing section {section!r}")
    origin, orient = doc["origin"], doc["orientation"]
    print("origin candidates (det in m^6):")
    for c in origin["candidates"]:
        print(f"  {c['viewpoint']:<5} {c['screw']:<6} {c['model']:<15} "
              f"det={c['det_m6']:.3e} point=({', '.join(f'{x:+.4f}' for x in c['point_m'])})")
    print("fused origins:")
    for tag, f in sorted(origin["fused"].items()):
        print(f"  {tag:<5} det={f['det_m6']:.3e} "
              f"point=({', '.join(f'{x:+.4f}' for x in f['point_m'])})")
    print(f"origin: viewpoint={origin['viewpoint']} "
          f"models=({origin['motion_model']}, {origin['wrench_model']}) "
          f"ratios: " + ", ".join(f"{k}={_fmt_ratio(v)}" for k, v in origin["ratios"].items()))
    print("orientation candidates:")
    for c in orient["candidates"]:
        sv = ", ".join(f"{x:.3g}" for x in c["singular_values"])
        print(f"  {c['viewpoint']:<5} {c['source']:<6} vector={c['vector']:<5} "
              f"singular values=({sv})")
    print(f"orientation: viewpoint={orient['viewpoint']} ratio={_fmt_ratio(orient['ratio'])} "
          f"weighting={'on' if orient['weighting_applied'] else 'off'}")
    voi = doc["vectors_of_interest"]
    print(f"vectors of interest: motion={voi['motion']} wrench={voi['wrench']} "
          f"progress={voi['progress']}")

    if truth is not None:
        print("comparison with ground truth:")
        for key in ("origin_viewpoint", "orientation_viewpoint"):
            expected = truth.get(f"expected_{key}")
            got = origin["viewpoint"] if "origin" in key else orient["viewpoint"]
            verdict = "-" if expected is None else ("ok" if expected == got else "MISMATCH")
            print(f"  {key}: derived={got} expected={expected} [{verdict}]")
        for key, got in (("motion_model", origin["motion_model"]),
                         ("wrench_model", origin["wrench_model"]),
                         ("motion_vector", voi["motion"]),
                         ("wrench_vector", voi["wrench"]),
                         ("progress", voi["progress"])):
            expected = truth.get(f"expected_{key}")
            verdict = "ok" if expected == got else "MISMATCH"
            print(f"  {key}: derived={got} expected={expected} [{verdict}]")
        if origin["viewpoint"] == truth["motion_anchor_frame"]:
            p = np.asarray(origin["origin_m"])
            anchor = np.asarray(truth["motion_anchor_m"])
            print(f"  origin error: {np.linalg.norm(p - anchor) * 1e3:.2f} mm")
        else:
            print("  origin error: n/a (viewpoint differs from anchor frame)")
        if orient["viewpoint"] == truth["direction_frame"]:
            R = np.asarray(orient["rotation_row_major"]).reshape(3, 3)
            axis = R[:, 0]
            motion_dir = np.asarray(truth["motion_direction"])
            angle = np.degrees(np.arccos(np.clip(abs(axis @ motion_dir), -1.0, 1.0)))
            print(f"  main-axis angle to motion direction: {angle:.2f} deg")
            if origin["viewpoint"] == truth["motion_anchor_frame"] \
                    and orient["viewpoint"] == origin["viewpoint"]:
                offset = _line_distance(np.asarray(origin["origin_m"]), axis,
                                        np.asarray(truth["motion_anchor_m"]), motion_dir)
                print(f"  common normal between main axes: {offset * 1e3:.2f} mm")
        else:
            print("  axis angle: n/a (viewpoint differs from direction frame)")
    return EXIT_OK


def _report_simlog(path: Path, out: Path | None) -> int:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rmse = None
    data = []
    for line in lines:
        if line.startswith("# rmse:"):
            rmse = json.loads(line.split(":", 1)[1])
        elif not line.startswith("#") and line.strip():
            data.append([float(x) for x in line.split(",")])
    if rmse is None or not data:
        raise InputError(f"{path}: not a simulation log (missing rmse summary)")
    table = np.asarray(data)
    print("tracking RMSE:")
    for key, value in sorted(rmse.items()):
        print(f"  {key}: {value:.4g}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        xi = table[:, 1]
        blocks = {"pose_position": (2, 5, 9, 12), "twist": (16, 22, 22, 28),
                  "wrench": (28, 34, 34, 40)}
        for name, (d0, d1, a0, a1) in blocks.items():
            sig = np.hstack([xi[:, None], table[:, d0:d1], table[:, a0:a1]])
            header = "xi_bar," + ",".join(f"des_{i}" for i in range(d1 - d0)) \
                + "," + ",".join(f"act_{i}" for i in range(a1 - a0))
            with open(out / f"signal_{name}.csv", "w", encoding="utf-8") as fh:
                fh.write(f"# columns: {header}\n")
                for row in sig:
                    fh.write(",".join(f"{x:.10g}" for x in row) + "\n")
        print(f"wrote per-signal tables to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    if path.suffix == ".csv":
        return _report_simlog(path, Path(args.out) if args.out else None)
    doc = _read_json(path)
    truth = _read_json(args.truth) if args.truth else None
    return _report_taskframe(doc, truth)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskframe",
        description="Derive optimal task frames from demonstrations and validate "
                    "them in closed-loop simulation.")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic demonstration trials")
    p.add_argument("--spec", required=True, help="scenario spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("derive", help="derive a task frame and task model from trials")
    p.add_argument("trials", nargs="*", help="trial CSV files")
    p.add_argument("--config", default=None, help="derivation config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("simulate", help="track a task model in a synthetic environment")
    p.add_argument("--model", required=True, help="task model JSON")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render a derivation report or simulation log")
    p.add_argument("input", help="taskframe_report.json or simlog.csv")
    p.add_argument("--truth", default=None, help="ground truth JSON for comparison")
    p.add_argument("--out", default=None, help="directory for plot-data tables")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationDiverged as err:
        print(f"simulation diverged: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
