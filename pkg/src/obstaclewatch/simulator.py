"""Synthetic two-microphone ping recordings with analytic ground truth.

Geometry is planar. A pose places the bottom microphone (mic2) at
``position``; the top microphone and the speaker share the point
``position + l_mic * heading``. The user's body is a plane ``body_gap``
behind mic2.

Each extended obstacle is drawn as a flat strip of ``n_scatterers`` point
reflectors, centred on the obstacle and perpendicular to the line of sight
from mic1, with half-width equal to the radius. Reflectors sit at the centres
of equal sub-segments and are weighted ``(1 - u^2)^2`` in their normalised
lateral offset ``u``, a specular falloff that keeps the centre return
dominant as on a convex surface. Delays are rendered exactly (fractional-sample
shifts in the frequency domain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from .correlator import StereoFrame
from .errors import SceneError
from .geometry import PHONES, PhoneProfile
from .signal_core import BeepConfig, SampleBuffer, generate_chirp

#: Structure-borne arrival on mic2 relative to mic1, samples.
MIC2_STRUCTURE_DELAY = 4.0
#: Obstacle echo scale; per-scatterer amplitude is gain * reflectivity * (2r/n) / path^2.
ECHO_GAIN = 32.0
MIC1_BODY_FACTOR = 0.1
DEFAULT_CLEARANCE = 0.25

REFLECTIVITY_PRESETS = {
    "wall": 0.9,
    "car": 0.8,
    "dumpster": 0.8,
    "sign": 0.6,
    "pedestrian": 0.4,
}


@dataclass(frozen=True)
class Obstacle:
    center: Tuple[float, float]
    radius: float
    reflectivity: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise SceneError(f"obstacle radius must be positive, got {self.radius}")
        if not 0 <= self.reflectivity <= 1:
            raise SceneError(f"reflectivity must be in [0, 1], got {self.reflectivity}")


@dataclass(frozen=True)
class Clutter:
    """A reflector whose echo path does not change as the user walks (ground, ceiling)."""

    path_length: float
    strength: float

    def __post_init__(self):
        if not self.path_length > 0:
            raise SceneError("clutter path_length must be positive")
        if not 0 <= self.strength <= 1:
            raise SceneError("clutter strength must be in [0, 1]")


@dataclass(frozen=True)
class Scene:
    obstacles: Tuple[Obstacle, ...] = ()
    body_gap: float = 0.12
    body_reflectivity: float = 0.5
    static_clutter: Tuple[Clutter, ...] = ()
    noise_snr_db: float = math.inf
    phone: PhoneProfile = PHONES["S5"]
    direct_path_strength: float = 1.0
    mic2_directivity: float = 0.3
    echo_gain: float = ECHO_GAIN
    n_scatterers: int = 9
    band_edge_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "static_clutter", tuple(self.static_clutter))
        if self.body_gap < 0.05:
            raise SceneError(f"body_gap must be at least 0.05 m, got {self.body_gap}")
        for name in ("body_reflectivity", "direct_path_strength", "mic2_directivity"):
            if not 0 <= getattr(self, name) <= 1:
                raise SceneError(f"{name} must be in [0, 1]")
        if self.n_scatterers < 1:
            raise SceneError("n_scatterers must be >= 1")


@dataclass(frozen=True)
class Pose:
    position: Tuple[float, float]
    heading: float = 0.0

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass(frozen=True)
class Trajectory:
    poses: Tuple[Pose, ...]
    ping_period: float = BeepConfig().ping_period

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        for p in self.poses:
            if not all(math.isfinite(v) for v in (*p.position, p.heading)):
                raise SceneError("trajectory poses must be finite")

    def __len__(self):
        return len(self.poses)

    @classmethod
    def straight(cls, start: Sequence[float], heading: float, speed: float, n_pings: int,
                 ping_period: float = BeepConfig().ping_period) -> "Trajectory":
        """Constant-velocity walk; ``heading`` in radians."""
        step = speed * ping_period
        d = np.array([math.cos(heading), math.sin(heading)])
        start = np.asarray(start, dtype=float)
        poses = [Pose(tuple(start + i * step * d), heading) for i in range(n_pings)]
        return cls(tuple(poses), ping_period)


@dataclass
class GroundTruth:
    """Per-ping truth for every obstacle (rows = pings, columns = obstacles)."""

    d1: np.ndarray
    d2: np.ndarray
    bearing: np.ndarray
    radius: np.ndarray
    collision: Optional[bool] = None
    body_gap: float = 0.0
    clutter_distances: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "d1": self.d1.tolist(),
            "d2": self.d2.tolist(),
            "bearing_deg": np.degrees(self.bearing).tolist(),
            "radius": self.radius.tolist(),
            "collision": self.collision,
            "body_gap": self.body_gap,
            "clutter_distances": list(self.clutter_distances),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(np.asarray(data["d1"], float), np.asarray(data["d2"], float),
                   np.radians(np.asarray(data["bearing_deg"], float)),
                   np.asarray(data["radius"], float), data.get("collision"),
                   float(data.get("body_gap", 0.0)), list(data.get("clutter_distances", [])))


def mic_positions(pose: Pose, phone: PhoneProfile) -> Tuple[np.ndarray, np.ndarray]:
    """(mic1, mic2) positions; the speaker is co-located with mic1."""
    mic2 = np.asarray(pose.position, dtype=float)
    return mic2 + phone.l_mic * pose.direction, mic2


def obstacle_truth(obstacle: Obstacle, pose: Pose, phone: PhoneProfile) -> Tuple[float, float, float]:
    """(d1, d2, bearing) of the obstacle centre for one pose."""
    mic1, mic2 = mic_positions(pose, phone)
    c = np.asarray(obstacle.center)
    v1 = c - mic1
    d1 = float(np.hypot(*v1))
    d2 = float(np.hypot(*(c - mic2)))
    cos_b = float(np.dot(v1, pose.direction) / d1)
    return d1, d2, math.acos(max(-1.0, min(1.0, cos_b)))


def scatterers(obstacle: Obstacle, mic1: np.ndarray, n: int) -> np.ndarray:
    """Points of the strip facing ``mic1``, shape ``(n, 2)``."""
    c = np.asarray(obstacle.center)
    los = (c - mic1) / np.hypot(*(c - mic1))
    perp = np.array([-los[1], los[0]])
    return c + obstacle.radius * strip_offsets(n)[:, None] * perp


def strip_offsets(n: int) -> np.ndarray:
    """Normalised lateral offsets in (-1, 1), one per equal sub-segment."""
    return (np.arange(n) + 0.5) / n * 2 - 1


def scatterer_weights(n: int) -> np.ndarray:
    """Specular falloff, normalised to unit mean."""
    w = (1 - strip_offsets(n) ** 2) ** 2
    return w / w.mean()


class _Renderer:
    """Sums delayed, scaled chirp copies via one inverse FFT per channel."""

    def __init__(self, config: BeepConfig, frame_length: int, band_edge_db: float = 0.0):
        self.config = config
        self.n = frame_length
        chirp = generate_chirp(config).samples
        self.nfft = sp_fft.next_fast_len(frame_length + chirp.size)
        self.spectrum = sp_fft.rfft(chirp, self.nfft)
        freqs = sp_fft.rfftfreq(self.nfft, 1.0 / config.sample_rate)
        if band_edge_db:
            ramp = np.clip((freqs - 22000.0) / 2000.0, 0.0, 1.0)
            self.spectrum = self.spectrum * 10 ** (-band_edge_db * ramp / 20)
        self.omega = -2j * np.pi * np.arange(freqs.size) / self.nfft
        self.chirp_len = chirp.size

    def render(self, delays: np.ndarray, amps: np.ndarray) -> np.ndarray:
        if delays.size == 0:
            return np.zeros(self.n)
        phasors = np.exp(np.outer(self.omega, delays)) @ amps
        return sp_fft.irfft(self.spectrum * phasors, self.nfft)[:self.n]


def _echo_lists(scene: Scene, pose: Pose, config: BeepConfig):
    """Delays (samples, relative to mic1's direct arrival) and amplitudes per channel."""
    fs, v = config.sample_rate, config.speed_of_sound
    mic1, mic2 = mic_positions(pose, scene.phone)
    ch1: List[Tuple[float, float]] = [(0.0, scene.direct_path_strength)]
    ch2: List[Tuple[float, float]] = [(MIC2_STRUCTURE_DELAY, scene.direct_path_strength)]
    ch2.append((MIC2_STRUCTURE_DELAY + 2 * scene.body_gap / v * fs, scene.body_reflectivity))
    ch1.append((2 * (scene.body_gap + scene.phone.l_mic) / v * fs,
                MIC1_BODY_FACTOR * scene.body_reflectivity))
    for clutter in scene.static_clutter:
        ch1.append((clutter.path_length / v * fs, clutter.strength))
        ch2.append((clutter.path_length / v * fs, clutter.strength))
    per_obstacle = []
    for obstacle in scene.obstacles:
        c = np.asarray(obstacle.center)
        if min(np.hypot(*(c - mic1)), np.hypot(*(c - mic2))) <= obstacle.radius:
            raise SceneError(f"obstacle at {obstacle.center} overlaps the user")
        pts = scatterers(obstacle, mic1, scene.n_scatterers)
        out = np.hypot(*(pts - mic1).T)
        back2 = np.hypot(*(pts - mic2).T)
        weight = (scene.echo_gain * obstacle.reflectivity * 2 * obstacle.radius / scene.n_scatterers
                  * scatterer_weights(scene.n_scatterers))
        path1 = 2 * out
        # mic2 faces the body: its obstacle return arrives via the body, two extra gap legs
        path2 = out + back2 + 2 * scene.body_gap
        per_obstacle.append((path1 / v * fs, weight / path1 ** 2,
                             path2 / v * fs, scene.mic2_directivity * weight / path2 ** 2))
    return ch1, ch2, per_obstacle


def synthesize_ping(scene: Scene, pose: Pose, config: BeepConfig = BeepConfig(),
                    rng: Optional[np.random.Generator] = None, frame_index: int = 0,
                    _renderer: Optional[_Renderer] = None) -> StereoFrame:
    renderer = _renderer or _Renderer(config, config.ping_period_samples, scene.band_edge_db)
    ch1, ch2, per_obstacle = _echo_lists(scene, pose, config)
    d1 = np.array([d for d, _ in ch1] + [x for o in per_obstacle for x in o[0]])
    a1 = np.array([a for _, a in ch1] + [x for o in per_obstacle for x in o[1]])
    d2 = np.array([d for d, _ in ch2] + [x for o in per_obstacle for x in o[2]])
    a2 = np.array([a for _, a in ch2] + [x for o in per_obstacle for x in o[3]])
    x1 = renderer.render(d1, a1)
    x2 = renderer.render(d2, a2)

    if math.isfinite(scene.noise_snr_db):
        if per_obstacle:
            ref = max(_echo_power(renderer, o[0], o[1]) for o in per_obstacle)
        else:
            ref = _echo_power(renderer, np.zeros(1), np.array([scene.direct_path_strength]))
        sigma = math.sqrt(ref / 10 ** (scene.noise_snr_db / 10))
        rng = rng if rng is not None else np.random.default_rng(0)
        x1 = x1 + rng.normal(0.0, sigma, x1.size)
        x2 = x2 + rng.normal(0.0, sigma, x2.size)
    fs = config.sample_rate
    return StereoFrame(SampleBuffer(x1, fs), SampleBuffer(x2, fs), frame_index)


def _echo_power(renderer: _Renderer, delays: np.ndarray, amps: np.ndarray) -> float:
    """Mean power of an echo over one beep length, rendered from its earliest arrival."""
    start = int(math.floor(delays.min()))
    x = renderer.render(delays - start, amps)
    return float(np.mean(np.square(x[:renderer.chirp_len])))


def synthesize_walk(scene: Scene, traj: Trajectory, config: BeepConfig = BeepConfig(),
                    seed: int = 0) -> Tuple[List[StereoFrame], GroundTruth]:
    if len(traj) == 0:
        raise SceneError("trajectory has no poses")
    if not math.isclose(traj.ping_period, config.ping_period, rel_tol=1e-9):
        raise SceneError(f"trajectory ping period {traj.ping_period} s does not match "
                         f"beep config {config.ping_period} s")
    renderer = _Renderer(config, config.ping_period_samples, scene.band_edge_db)
    frames = [synthesize_ping(scene, pose, config, np.random.default_rng([seed, i]), i, renderer)
              for i, pose in enumerate(traj.poses)]
    return frames, walk_truth(scene, traj)


def walk_truth(scene: Scene, traj: Trajectory, clearance: float = DEFAULT_CLEARANCE) -> GroundTruth:
    n, m = len(traj), len(scene.obstacles)
    d1, d2, bearing = np.zeros((n, m)), np.zeros((n, m)), np.zeros((n, m))
    for i, pose in enumerate(traj.poses):
        for j, obstacle in enumerate(scene.obstacles):
            d1[i, j], d2[i, j], bearing[i, j] = obstacle_truth(obstacle, pose, scene.phone)
    radius = np.tile([o.radius for o in scene.obstacles], (n, 1)) if m else np.zeros((n, 0))
    collision = ground_truth_collision(scene, traj, clearance) if m else False
    return GroundTruth(d1, d2, bearing, radius, collision, scene.body_gap,
                       [c.path_length / 2 for c in scene.static_clutter])


def ray_distance(origin: Sequence[float], direction: Sequence[float], point: Sequence[float]) -> float:
    """Distance from ``point`` to the ray ``origin + t * direction``, ``t >= 0``."""
    o, d, p = (np.asarray(a, dtype=float) for a in (origin, direction, point))
    d = d / np.hypot(*d)
    t = max(0.0, float(np.dot(p - o, d)))
    return float(np.hypot(*(p - (o + t * d))))


def ground_truth_collision(scene: Scene, traj: Trajectory, clearance: float = DEFAULT_CLEARANCE) -> bool:
    """Would the user, continuing from the final pose, pass within ``radius + clearance``?

    The boundary counts as a collision.
    """
    if not scene.obstacles:
        raise SceneError("collision truth needs at least one obstacle")
    last = traj.poses[-1]
    return any(ray_distance(last.position, last.direction, o.center) <= o.radius + clearance
               for o in scene.obstacles)
