"""On-disk formats: stereo WAV, scene/trajectory documents, truth sidecars, CSV tables.

Scene, trajectory and config documents are YAML (JSON is accepted, being a
subset). Every document carries ``schema_version``; violations are reported
with the line of the offending entry.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import fields, is_dataclass, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from scipy.io import wavfile

from .correlator import StereoFrame
from .errors import ConfigError, InputError, IOFailure, SceneError
from .geometry import PHONES, PhoneProfile
from .pipeline import RunConfig
from .simulator import Clutter, GroundTruth, Obstacle, Pose, Scene, Trajectory

SCHEMA_VERSION = 1

DETECTION_COLUMNS = ("frame_index", "track_id", "classification", "d1", "d2", "theta_deg",
                     "w_p", "d_f", "delta_deg", "radius", "decision", "alert")


# --- audio -------------------------------------------------------------------------------

def write_wav(path: str, data: np.ndarray, sample_rate: int, dtype: str = "float32") -> None:
    """Write ``(n,)`` or ``(n, channels)`` samples; int16 output is clipped to [-1, 1]."""
    data = np.asarray(data, dtype=float)
    if dtype == "int16":
        out = np.round(np.clip(data, -1.0, 1.0) * 32767).astype(np.int16)
    elif dtype == "float32":
        out = data.astype(np.float32)
    else:
        raise ConfigError(f"unsupported WAV sample type {dtype!r}")
    try:
        wavfile.write(path, int(sample_rate), out)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_wav(path: str) -> Tuple[np.ndarray, int]:
    """Samples as float in [-1, 1] (integer formats rescaled) and the rate."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    except (ValueError, EOFError) as exc:
        raise InputError(f"{path} is not a readable WAV file: {exc}") from exc
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(float) - 128) / 128.0
    return np.asarray(data, dtype=float), int(rate)


def stereo_frames(data: np.ndarray, sample_rate: int, period_samples: int) -> List[StereoFrame]:
    """Cut a two-channel recording into ping periods; a trailing partial period is dropped."""
    if data.ndim != 2 or data.shape[1] != 2:
        shape = data.shape if data.ndim == 2 else (data.size,)
        raise InputError(f"expected a 2-channel recording, got shape {shape}")
    n = data.shape[0] // period_samples
    return [StereoFrame.from_array(data[i * period_samples:(i + 1) * period_samples],
                                   sample_rate, i) for i in range(n)]


def frames_to_array(frames: Sequence[StereoFrame]) -> np.ndarray:
    if not frames:
        return np.zeros((0, 2))
    return np.concatenate([np.column_stack([f.mic1.samples, f.mic2.samples]) for f in frames])


# --- structured documents ----------------------------------------------------------------

class Document:
    """Parsed YAML plus the source line of every mapping key and sequence item."""

    def __init__(self, data: Any, lines: Dict[Tuple, int], source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def line(self, path: Tuple) -> Optional[int]:
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def error(self, path: Tuple, message: str, cls=SceneError):
        where = ".".join(str(p) for p in path) or "<root>"
        line = self.line(path)
        at = f"{self.source}:{line}" if line else self.source
        return cls(f"{at}: {where}: {message}")


def _walk_lines(node: yaml.Node, path: Tuple, lines: Dict[Tuple, int]) -> None:
    lines.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            sub = path + (key.value,)
            lines[sub] = key.start_mark.line + 1
            _walk_lines(value, sub, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _walk_lines(item, path + (i,), lines)


def parse_document(text: str, source: str = "<string>", error_cls=SceneError) -> Document:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = f":{mark.line + 1}" if mark is not None else ""
        raise error_cls(f"{source}{line}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise error_cls(f"{source}: {exc}") from exc
    lines: Dict[Tuple, int] = {}
    if node is not None:
        _walk_lines(node, (), lines)
    return Document(data, lines, source)


def load_document(path: str, error_cls=SceneError) -> Document:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    return parse_document(text, path, error_cls)


def _check_version(doc: Document, kind: str) -> dict:
    if not isinstance(doc.data, dict):
        raise doc.error((), f"{kind} document must be a mapping")
    version = doc.data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise doc.error(("schema_version",),
                        f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    return doc.data


def _number(doc: Document, path: Tuple, value, allow_none=False) -> float:
    if value is None and allow_none:
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error(path, f"expected a number, got {value!r}")
    return float(value)


def _point(doc: Document, path: Tuple, value) -> Tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise doc.error(path, f"expected [x, y], got {value!r}")
    return (_number(doc, path + (0,), value[0]), _number(doc, path + (1,), value[1]))


def _mapping(doc: Document, path: Tuple, value, allowed: Iterable[str]) -> dict:
    if not isinstance(value, dict):
        raise doc.error(path, "expected a mapping")
    unknown = set(value) - set(allowed)
    if unknown:
        key = sorted(map(str, unknown))[0]
        raise doc.error(path + (key,), f"unknown field {key!r}")
    return value


_SCENE_NUMBERS = ("body_gap", "body_reflectivity", "direct_path_strength", "mic2_directivity",
                  "echo_gain", "band_edge_db")


def scene_from_document(doc: Document) -> Scene:
    data = _check_version(doc, "scene")
    _mapping(doc, (), data, ("schema_version", "obstacles", "static_clutter", "phone",
                             "noise_snr_db", "n_scatterers") + _SCENE_NUMBERS)
    kwargs: Dict[str, Any] = {}
    obstacles = []
    for i, item in enumerate(data.get("obstacles") or []):
        path = ("obstacles", i)
        item = _mapping(doc, path, item, ("center", "radius", "reflectivity"))
        if "center" not in item or "radius" not in item:
            raise doc.error(path, "obstacle needs center and radius")
        try:
            obstacles.append(Obstacle(_point(doc, path + ("center",), item["center"]),
                                      _number(doc, path + ("radius",), item["radius"]),
                                      _number(doc, path + ("reflectivity",),
                                              item.get("reflectivity", 0.8))))
        except SceneError as exc:
            raise doc.error(path, str(exc)) from None
    clutter = []
    for i, item in enumerate(data.get("static_clutter") or []):
        path = ("static_clutter", i)
        item = _mapping(doc, path, item, ("path_length", "strength"))
        try:
            clutter.append(Clutter(_number(doc, path + ("path_length",), item.get("path_length")),
                                   _number(doc, path + ("strength",), item.get("strength"))))
        except SceneError as exc:
            raise doc.error(path, str(exc)) from None
    for name in _SCENE_NUMBERS:
        if name in data:
            kwargs[name] = _number(doc, (name,), data[name])
    if "noise_snr_db" in data:
        kwargs["noise_snr_db"] = _number(doc, ("noise_snr_db",), data["noise_snr_db"], True)
    if "n_scatterers" in data:
        if not isinstance(data["n_scatterers"], int):
            raise doc.error(("n_scatterers",), "expected an integer")
        kwargs["n_scatterers"] = data["n_scatterers"]
    if "phone" in data:
        if data["phone"] not in PHONES:
            raise doc.error(("phone",), f"unknown phone {data['phone']!r}; "
                                        f"choose from {sorted(PHONES)}")
        kwargs["phone"] = PHONES[data["phone"]]
    try:
        return Scene(obstacles=tuple(obstacles), static_clutter=tuple(clutter), **kwargs)
    except SceneError as exc:
        raise doc.error((), str(exc)) from None


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "obstacles": [{"center": list(o.center), "radius": o.radius,
                       "reflectivity": o.reflectivity} for o in scene.obstacles],
        "static_clutter": [{"path_length": c.path_length, "strength": c.strength}
                           for c in scene.static_clutter],
        "phone": scene.phone.name,
        "noise_snr_db": None if math.isinf(scene.noise_snr_db) else scene.noise_snr_db,
        "n_scatterers": scene.n_scatterers,
        **{name: getattr(scene, name) for name in _SCENE_NUMBERS},
    }


def trajectory_from_document(doc: Document) -> Trajectory:
    """Either an explicit ``poses`` list or a ``straight`` walk; headings in degrees."""
    data = _check_version(doc, "trajectory")
    _mapping(doc, (), data, ("schema_version", "ping_period", "poses", "straight"))
    kwargs = {}
    if "ping_period" in data:
        kwargs["ping_period"] = _number(doc, ("ping_period",), data["ping_period"])
    if ("poses" in data) == ("straight" in data):
        raise doc.error((), "trajectory needs exactly one of 'poses' or 'straight'")
    try:
        if "straight" in data:
            s = _mapping(doc, ("straight",), data["straight"],
                         ("start", "heading_deg", "speed", "n_pings"))
            n = s.get("n_pings")
            if not isinstance(n, int) or n < 1:
                raise doc.error(("straight", "n_pings"), "expected a positive integer")
            return Trajectory.straight(
                _point(doc, ("straight", "start"), s.get("start", [0.0, 0.0])),
                math.radians(_number(doc, ("straight", "heading_deg"), s.get("heading_deg", 0.0))),
                _number(doc, ("straight", "speed"), s.get("speed")), n, **kwargs)
        poses = []
        if not isinstance(data["poses"], list):
            raise doc.error(("poses",), "expected a list of poses")
        for i, item in enumerate(data["poses"]):
            path = ("poses", i)
            item = _mapping(doc, path, item, ("position", "heading_deg"))
            poses.append(Pose(_point(doc, path + ("position",), item.get("position")),
                              math.radians(_number(doc, path + ("heading_deg",),
                                                   item.get("heading_deg", 0.0)))))
        return Trajectory(tuple(poses), **kwargs)
    except SceneError as exc:
        if str(exc).startswith(doc.source):
            raise
        raise doc.error((), str(exc)) from None


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "ping_period": traj.ping_period,
        "poses": [{"position": list(p.position), "heading_deg": math.degrees(p.heading)}
                  for p in traj.poses],
    }


def write_json(path: str, data: dict) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=False, default=_json_default)
            fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return None
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def truth_to_dict(truth: GroundTruth, seed: int) -> dict:
    return {"schema_version": SCHEMA_VERSION, "seed": seed, **truth.to_dict()}


def read_truth(path: str) -> Tuple[GroundTruth, int]:
    doc = load_document(path, InputError)
    data = _check_version(doc, "ground-truth")
    try:
        return GroundTruth.from_dict(data), int(data.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise doc.error((), f"malformed ground truth: {exc}", InputError) from None


# --- detections --------------------------------------------------------------------------

def detection_rows(records) -> List[dict]:
    rows = []
    for r in records:
        e = r.estimate
        row = {"frame_index": r.frame_index, "track_id": r.track_id,
               "classification": r.classification}
        if e is not None:
            row.update(d1=e.d1, d2=e.d2, theta_deg=math.degrees(e.theta), w_p=e.w_p, d_f=e.d_f,
                       delta_deg=math.degrees(e.delta), radius=e.radius)
        row["decision"] = "" if r.decision is None else int(r.decision)
        row["alert"] = int(r.alert)
        rows.append(row)
    return rows


def write_csv(path: str, rows: Sequence[dict], columns: Sequence[str]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(columns), restval="")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return value


# --- run configuration -------------------------------------------------------------------

def _coerce(current, raw: str, key: str):
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def override(config, key: str, value):
    """Return ``config`` with the dotted field ``key`` set; strings are coerced.

    ``phone`` takes a profile name; every other leaf must already exist.
    """
    head, _, rest = key.partition(".")
    if not is_dataclass(config) or head not in {f.name for f in fields(config)}:
        raise ConfigError(f"unknown configuration field {key!r}")
    current = getattr(config, head)
    if head == "phone" and not rest:
        if isinstance(value, PhoneProfile):
            new = value
        elif value in PHONES:
            new = PHONES[value]
        else:
            raise ConfigError(f"unknown phone {value!r}; choose from {sorted(PHONES)}")
    elif rest:
        new = override(current, rest, value)
    elif is_dataclass(current):
        raise ConfigError(f"{key} is a section; set one of its fields")
    else:
        new = _coerce(current, value, key) if isinstance(value, str) else value
    try:
        return replace(config, **{head: new})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _flatten(data: dict, prefix: str = "") -> Iterable[Tuple[str, Any]]:
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def load_config(path: Optional[str], overrides: Sequence[str] = (), base=None):
    """Resolve a run configuration: defaults, then the file, then ``key=value`` overrides."""
    config = base if base is not None else RunConfig()
    if path:
        doc = load_document(path, ConfigError)
        data = doc.data or {}
        if not isinstance(data, dict):
            raise doc.error((), "config must be a mapping", ConfigError)
        if isinstance(data.get("phone"), dict):
            data = dict(data, phone=data["phone"].get("name"))
        for key, value in _flatten(data):
            if key == "schema_version":
                continue
            try:
                config = override(config, key, value)
            except ConfigError as exc:
                raise doc.error(tuple(key.split(".")), str(exc), ConfigError) from None
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        config = override(config, key.strip(), value.strip())
    return config


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise IOFailure(f"{path} is not writable")
    return path
