"""Walk batches, per-case scoring and aggregate error reports."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InputError, IOFailure
from .files import (ensure_dir, load_document, read_truth, scene_from_document, scene_to_dict,
                    trajectory_from_document, trajectory_to_dict, truth_to_dict, write_csv,
                    write_json)
from .detector import estimate_distance
from .geometry import PHONES, estimate_radius, rim_distance
from .pipeline import ObstacleWatch, RunConfig, TrackRecord
from .simulator import (DEFAULT_CLEARANCE, Clutter, GroundTruth, Obstacle, Pose, Scene,
                        Trajectory, synthesize_walk, walk_truth)

SCENE_FILE = "scene.json"
TRAJECTORY_FILE = "trajectory.json"
TRUTH_FILE = "truth.json"

#: A reported track is matched to an obstacle when its d1 is this close to the truth.
MATCH_GATE = 0.3
#: Reported tracks this close to a clutter/body distance, and far from any obstacle, are leaks.
CLUTTER_GATE = 0.03
BASELINE_DISTANCE = 4.0


@dataclass
class Case:
    name: str
    scene: Scene
    trajectory: Trajectory
    seed: int = 0
    truth: Optional[GroundTruth] = None


@dataclass
class CaseResult:
    name: str
    collision: bool
    alert: bool
    baseline_alert: bool
    clutter_leaks: int
    records: List[TrackRecord] = field(default_factory=list, repr=False)
    errors: List[dict] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {"name": self.name, "collision": self.collision, "alert": self.alert,
                "baseline_alert": self.baseline_alert, "clutter_leaks": self.clutter_leaks,
                "n_records": len(self.records), "n_errors": len(self.errors)}


@dataclass
class EvaluationReport:
    tp_rate: float
    tn_rate: float
    distance_error: Dict[str, List[float]]
    angle_error: List[float]
    radius_error: List[float]
    baseline_false_alert_rate: float
    false_alert_rate: float
    clutter_leaks: int
    cases: List[dict]
    config: dict
    errors: List[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "tp_rate": self.tp_rate,
            "tn_rate": self.tn_rate,
            "false_alert_rate": self.false_alert_rate,
            "baseline_false_alert_rate": self.baseline_false_alert_rate,
            "clutter_leaks": self.clutter_leaks,
            "percentiles": [50, 80, 90],
            "distance_error_m": self.distance_error,
            "angle_error_deg": self.angle_error,
            "radius_error_m": self.radius_error,
            "cases": self.cases,
            "config": self.config,
        }


def approach_walk(offset: float, radius: float, *, start_distance: float = 6.5,
                  stop_distance: float = 1.2, speed: float = 1.4, rotation: float = 0.0,
                  reflectivity: float = 0.8, ping_period: float = 0.09,
                  **scene_kwargs) -> tuple:
    """Straight walk past (or into) one obstacle.

    The obstacle sits ``start_distance`` ahead of the first pose and
    ``offset`` to the side of the walking line; the walk ends when the
    obstacle is ``stop_distance`` ahead along the line. Everything is rotated
    by ``rotation`` radians about the origin.
    """
    n = int(math.floor((start_distance - stop_distance) / (speed * ping_period))) + 1
    rot = np.array([[math.cos(rotation), -math.sin(rotation)],
                    [math.sin(rotation), math.cos(rotation)]])
    center = rot @ np.array([start_distance, offset])
    traj = Trajectory.straight((0.0, 0.0), rotation, speed, n, ping_period)
    scene = Scene(obstacles=(Obstacle(tuple(center), radius, reflectivity),), **scene_kwargs)
    return scene, traj


def standard_batch(n_collide: int = 100, n_miss: int = 100, seed: int = 2024,
                   clearance: float = DEFAULT_CLEARANCE) -> List[Case]:
    """The acceptance batch of single-obstacle walks.

    Colliding walks aim within the obstacle's radius; near misses pass
    between 0.25 m and 1.0 m beyond ``radius + clearance``. Geometry, phone,
    body, clutter and SNR (10 or 20 dB) are randomised per case.
    """
    rng = np.random.default_rng(seed)
    phones = list(PHONES.values())
    cases = []
    for i in range(n_collide + n_miss):
        collide = i < n_collide
        radius = rng.uniform(0.15, 0.5)
        if collide:
            offset = rng.uniform(0.0, radius)
        else:
            offset = radius + clearance + rng.uniform(0.25, 1.0)
        offset *= rng.choice([-1.0, 1.0])
        clutter = [Clutter(rng.uniform(2.2, 2.8), rng.uniform(0.02, 0.06))]
        if rng.random() < 0.5:
            clutter.append(Clutter(rng.uniform(4.5, 6.0), rng.uniform(0.01, 0.03)))
        scene, traj = approach_walk(
            offset, radius,
            speed=rng.uniform(1.0, 1.6),
            rotation=rng.uniform(-math.pi, math.pi),
            reflectivity=rng.uniform(0.5, 0.9),
            body_gap=rng.uniform(0.10, 0.20),
            body_reflectivity=rng.uniform(0.3, 0.6),
            static_clutter=tuple(clutter),
            noise_snr_db=float(rng.choice([10.0, 20.0])),
            phone=phones[i % len(phones)],
        )
        cases.append(Case(f"{'collide' if collide else 'miss'}_{i:03d}", scene, traj,
                          seed=seed + i))
    return cases


def match_obstacle(d1: float, truth_row: np.ndarray) -> Optional[int]:
    if truth_row.size == 0:
        return None
    j = int(np.argmin(np.abs(truth_row - d1)))
    return j if abs(truth_row[j] - d1) <= MATCH_GATE else None


def run_case(case: Case, config: RunConfig = RunConfig(), frames=None) -> CaseResult:
    """Run one walk; the scene's phone overrides ``config.phone``."""
    config = replace(config, phone=case.scene.phone)
    if frames is None:
        frames, truth = synthesize_walk(case.scene, case.trajectory, config.beep, case.seed)
    else:
        truth = case.truth
    if truth is None:
        raise InputError(f"case {case.name} has no ground truth")
    watch = ObstacleWatch(config)
    warmup = config.detector.static_history
    records: List[TrackRecord] = []
    errors = []
    leaks = 0
    baseline = False
    alert = False
    # mic1 hears the body over speaker -> body -> mic1, i.e. at body_gap + l_mic
    static_d = list(truth.clutter_distances) + [truth.body_gap,
                                                truth.body_gap + case.scene.phone.l_mic]
    for frame in frames:
        recs = watch.process(frame)
        records.extend(recs)
        i = frame.frame_index
        alert = alert or watch.alert
        for r in recs:
            d = r.estimate.d1 if r.estimate else None
            track = next(t for t in watch.tracker.tracks if t.track_id == r.track_id)
            dist = d if d is not None else track.distance
            if dist < BASELINE_DISTANCE:
                baseline = True
            j = match_obstacle(dist, truth.d1[i])
            if i >= warmup and j is None and any(abs(dist - s) <= CLUTTER_GATE for s in static_d):
                leaks += 1
            if r.estimate is not None and j is not None:
                e = r.estimate
                errors.append({
                    "frame_index": i, "track_id": r.track_id,
                    "d1_error": e.d1 - truth.d1[i, j], "d2_error": e.d2 - truth.d2[i, j],
                    "angle_error_deg": math.degrees(e.theta - truth.bearing[i, j]),
                    "radius_error": e.radius - truth.radius[i, j],
                })
    return CaseResult(case.name, bool(truth.collision), alert, baseline, leaks, records, errors)


def percentiles(values: Sequence[float], qs=(50, 80, 90)) -> List[float]:
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        return [math.nan] * len(qs)
    return [float(x) for x in np.percentile(v, qs)]


def rates(results: Sequence[CaseResult]) -> dict:
    pos = [r for r in results if r.collision]
    neg = [r for r in results if not r.collision]
    return {
        "tp_rate": sum(r.alert for r in pos) / len(pos) if pos else math.nan,
        "tn_rate": sum(not r.alert for r in neg) / len(neg) if neg else math.nan,
        "false_alert_rate": sum(r.alert for r in neg) / len(neg) if neg else math.nan,
        "baseline_false_alert_rate": sum(r.baseline_alert for r in neg) / len(neg) if neg else math.nan,
    }


def build_report(results: Sequence[CaseResult], config: RunConfig) -> EvaluationReport:
    if not results:
        raise InputError("empty batch")
    errs = [e for r in results for e in r.errors]
    agg = rates(results)
    return EvaluationReport(
        tp_rate=agg["tp_rate"], tn_rate=agg["tn_rate"],
        distance_error={"mic1": percentiles([e["d1_error"] for e in errs]),
                        "mic2": percentiles([e["d2_error"] for e in errs])},
        angle_error=percentiles([e["angle_error_deg"] for e in errs]),
        radius_error=percentiles([e["radius_error"] for e in errs]),
        baseline_false_alert_rate=agg["baseline_false_alert_rate"],
        false_alert_rate=agg["false_alert_rate"],
        clutter_leaks=sum(r.clutter_leaks for r in results),
        cases=[r.summary() for r in results],
        config=config.to_dict(),
        errors=[dict(e, case=r.name) for r in results for e in r.errors],
    )


def evaluate(cases: Sequence[Case], config: RunConfig = RunConfig(), workers: int = 1) -> EvaluationReport:
    if not cases:
        raise InputError("empty batch")
    return build_report(run_cases(cases, config, workers), config)


def run_cases(cases: Sequence[Case], config: RunConfig = RunConfig(),
              workers: int = 1) -> List[CaseResult]:
    """Cases are independent, so they may run in worker processes; order is kept."""
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(run_case, cases, [config] * len(cases)))
    return [run_case(c, config) for c in cases]


# --- batch directories -------------------------------------------------------------------

def write_batch(cases: Sequence[Case], directory: str) -> None:
    """One sub-directory per case holding scene, trajectory and truth documents."""
    ensure_dir(directory)
    for case in cases:
        sub = ensure_dir(os.path.join(directory, case.name))
        truth = case.truth or walk_truth(case.scene, case.trajectory)
        write_json(os.path.join(sub, SCENE_FILE), scene_to_dict(case.scene))
        write_json(os.path.join(sub, TRAJECTORY_FILE), trajectory_to_dict(case.trajectory))
        write_json(os.path.join(sub, TRUTH_FILE), truth_to_dict(truth, case.seed))


def load_case(directory: str) -> Case:
    scene = scene_from_document(load_document(os.path.join(directory, SCENE_FILE)))
    traj = trajectory_from_document(load_document(os.path.join(directory, TRAJECTORY_FILE)))
    truth_path = os.path.join(directory, TRUTH_FILE)
    if os.path.exists(truth_path):
        truth, seed = read_truth(truth_path)
    else:
        truth, seed = walk_truth(scene, traj), 0
    return Case(os.path.basename(os.path.normpath(directory)), scene, traj, seed, truth)


def load_batch(directory: str) -> List[Case]:
    """Every sub-directory containing a scene document, in name order."""
    if not os.path.isdir(directory):
        raise IOFailure(f"batch directory {directory} does not exist")
    names = sorted(n for n in os.listdir(directory)
                   if os.path.isfile(os.path.join(directory, n, SCENE_FILE)))
    if not names:
        raise InputError(f"batch directory {directory} holds no cases")
    return [load_case(os.path.join(directory, n)) for n in names]


def write_report(report: EvaluationReport, directory: str) -> None:
    """``report.json`` plus plot-ready CSV tables."""
    ensure_dir(directory)
    write_json(os.path.join(directory, "report.json"), report.to_dict())
    rows = [{"metric": "d1_error_m", **_pct_row(report.distance_error["mic1"])},
            {"metric": "d2_error_m", **_pct_row(report.distance_error["mic2"])},
            {"metric": "angle_error_deg", **_pct_row(report.angle_error)},
            {"metric": "radius_error_m", **_pct_row(report.radius_error)}]
    write_csv(os.path.join(directory, "percentiles.csv"), rows, ("metric", "p50", "p80", "p90"))
    write_csv(os.path.join(directory, "rates.csv"),
              [{"metric": k, "value": v} for k, v in report.to_dict().items()
               if k.endswith("_rate") or k == "clutter_leaks"], ("metric", "value"))
    write_csv(os.path.join(directory, "cases.csv"), report.cases,
              ("name", "collision", "alert", "baseline_alert", "clutter_leaks",
               "n_records", "n_errors"))
    write_csv(os.path.join(directory, "errors.csv"), report.errors,
              ("case", "frame_index", "track_id", "d1_error", "d2_error", "angle_error_deg",
               "radius_error"))


def _pct_row(values: Sequence[float]) -> dict:
    return dict(zip(("p50", "p80", "p90"), values))


# --- single-ping accuracy trials ---------------------------------------------------------

def _placement(distance: float, bearing: float, radius: float, phone, **scene_kwargs) -> tuple:
    """Scene with one obstacle ``distance`` from mic1 at ``bearing`` off the walking axis.

    The phone sits at the origin heading along +x, so mic1 is at ``(l_mic, 0)``.
    """
    pose = Pose((0.0, 0.0), 0.0)
    center = np.array([phone.l_mic, 0.0]) + distance * np.array([math.cos(bearing),
                                                                 math.sin(bearing)])
    scene = Scene(obstacles=(Obstacle(tuple(center), radius),), phone=phone, **scene_kwargs)
    return scene, pose


def placement_trials(n: int, *, distance=(1.5, 1.5), bearing_deg=(0.0, 45.0),
                     radius=(0.05, 0.3), body_gap=(0.10, 0.20), snr_db: float = 10.0,
                     config: RunConfig = RunConfig(), seed: int = 0) -> dict:
    """Per-ping estimation errors over random single-obstacle placements.

    Each trial draws distance, bearing, radius and body gap uniformly from the
    given ranges, renders one ping and runs the full pipeline on it. Returns
    arrays of signed ``d1_error``, ``d2_error`` (meters) and
    ``angle_error_deg`` for the trials where the obstacle was detected and its
    geometry was feasible, plus the count of ``failures``.
    """
    from .errors import ObstacleWatchError
    from .simulator import obstacle_truth, synthesize_ping
    rng = np.random.default_rng(seed)
    phones = list(PHONES.values())
    out = {"d1_error": [], "d2_error": [], "angle_error_deg": []}
    failures = 0
    for i in range(n):
        phone = phones[i % len(phones)]
        scene, pose = _placement(rng.uniform(*distance), math.radians(rng.uniform(*bearing_deg)),
                                 rng.uniform(*radius), phone, body_gap=rng.uniform(*body_gap),
                                 noise_snr_db=snr_db)
        d1, d2, bearing = obstacle_truth(scene.obstacles[0], pose, phone)
        watch = ObstacleWatch(replace(config, phone=phone))
        frame = synthesize_ping(scene, pose, config.beep, np.random.default_rng([seed, i]))
        try:
            analysis = watch.analyze(frame)
            peaks = [p for p in analysis.peaks if abs(p.geometric_distance - d1) <= MATCH_GATE]
            if not peaks:
                raise InputError("obstacle not detected")
            est = watch.estimate(analysis, min(peaks, key=lambda p: abs(p.geometric_distance - d1)),
                                 analysis.body_gap)
        except ObstacleWatchError:
            failures += 1
            continue
        out["d1_error"].append(est.d1 - d1)
        out["d2_error"].append(est.d2 - d2)
        out["angle_error_deg"].append(math.degrees(est.theta - bearing))
    result = {k: np.asarray(v) for k, v in out.items()}
    result["failures"] = failures
    return result


def radius_sweep(radii: Sequence[float], *, distance: float = 2.0, pings: int = 5,
                 snr_db: float = 20.0, config: RunConfig = RunConfig(), seed: int = 0) -> np.ndarray:
    """Median radius estimate per true radius, over ``pings`` noisy renderings each.

    Obstacles sit dead ahead at ``distance``; a radius with no usable
    estimate in any ping yields ``nan``.
    """
    from .errors import ObstacleWatchError
    from .simulator import synthesize_ping
    est = []
    for k, r in enumerate(radii):
        scene, pose = _placement(distance, 0.0, float(r), config.phone, noise_snr_db=snr_db)
        watch = ObstacleWatch(config)
        vals = []
        for t in range(pings):
            frame = synthesize_ping(scene, pose, config.beep, np.random.default_rng([seed, k, t]))
            try:
                analysis = watch.analyze(frame)
                peaks = [p for p in analysis.peaks
                         if abs(p.geometric_distance - distance) <= MATCH_GATE]
                if peaks:
                    # the size cue needs mic1 only, so collinear mic2 geometry does not matter
                    d1 = estimate_distance(peaks[0], config.beep)
                    d_f = rim_distance(d1, watch.crest(analysis, peaks[0]), config.beep)
                    vals.append(estimate_radius(d1, d_f))
            except ObstacleWatchError:
                continue
        est.append(float(np.median(vals)) if vals else math.nan)
    return np.asarray(est)
