"""Echo peak picking, static-clutter tracking and echo ranging."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .correlator import EnvelopeSeries, local_maxima, refine_peak
from .errors import ConfigError, InputError
from .signal_core import BeepConfig

STATIC = "static"
APPROACHING = "approaching"
RECEDING = "receding"
TENTATIVE = "tentative"


@dataclass(frozen=True)
class DetectorConfig:
    """Peak detection and clutter tracking tunables.

    ``lam`` scales the mean in-range envelope into the detection threshold.
    Distances are meters, ``peak_window`` is seconds.
    """

    lam: float = 3.0
    target_range: float = 7.0
    peak_window: float = 0.0005
    merge_distance: float = 0.10
    top_k: int = 5
    static_epsilon: float = 0.02
    static_history: int = 5
    gate: float = 0.3
    max_misses: int = 3

    def __post_init__(self):
        for name in ("lam", "target_range", "peak_window", "merge_distance",
                     "static_epsilon", "gate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.top_k < 1 or self.static_history < 2 or self.max_misses < 0:
            raise ConfigError("top_k >= 1, static_history >= 2 and max_misses >= 0 required")


@dataclass(frozen=True)
class EchoPeak:
    """A thresholded envelope peak.

    ``delay_samples`` counts from the direct-path anchor; ``offset`` is the
    parabolic sub-sample correction in [-0.5, 0.5].
    """

    channel: str
    delay_samples: int
    magnitude: float
    crest_width_samples: int
    path_length: float
    geometric_distance: float
    offset: float = 0.0

    @property
    def delay(self) -> float:
        return self.delay_samples + self.offset

    @classmethod
    def at(cls, delay_samples: int, config: BeepConfig, *, channel: str = "mic1",
           magnitude: float = 1.0, crest_width_samples: int = 1, offset: float = 0.0) -> "EchoPeak":
        path = (delay_samples + offset) * config.speed_of_sound / config.sample_rate
        return cls(channel, int(delay_samples), float(magnitude), int(crest_width_samples),
                   path, path / 2, float(offset))


def range_samples(config: DetectorConfig, beep: BeepConfig) -> int:
    """Delay (samples) of the longest echo path considered, ``2 * target_range``."""
    return int(np.floor(2 * config.target_range * beep.sample_rate / beep.speed_of_sound))


def compute_threshold(env: EnvelopeSeries, config: DetectorConfig,
                      beep: BeepConfig = BeepConfig()) -> float:
    """``lam`` times the mean envelope over echo delays in ``(0, 2 * target_range]``."""
    if env.direct_path_index is None:
        raise InputError("envelope has no direct-path anchor")
    start = env.direct_path_index + 1
    stop = min(len(env), env.direct_path_index + range_samples(config, beep) + 1)
    if stop <= start:
        raise InputError("no envelope samples inside the target range")
    return config.lam * float(env.values[start:stop].mean())


def run_above(values: np.ndarray, index: int, threshold: float) -> Tuple[int, int]:
    """Half-open ``[lo, hi)`` of the contiguous run above ``threshold`` containing ``index``."""
    if values[index] <= threshold:
        return index, index
    above = values > threshold
    below_left = np.flatnonzero(~above[:index])
    lo = below_left[-1] + 1 if below_left.size else 0
    below_right = np.flatnonzero(~above[index:])
    hi = index + below_right[0] if below_right.size else values.size
    return int(lo), int(hi)


def detect_peaks(env: EnvelopeSeries, threshold: float, config: DetectorConfig,
                 beep: BeepConfig = BeepConfig(), channel: str = "mic1") -> List[EchoPeak]:
    """Windowed peak picking over the target range.

    Each non-overlapping ``peak_window`` contributes its maximum if that
    sample exceeds ``threshold`` and is a local maximum of the envelope
    (a window maximum sitting on a slope belongs to the neighbouring window's
    peak). Runs of peaks spanning less than ``merge_distance`` of echo path
    are merged into the strongest, with the crest spanning all of them.
    """
    if env.direct_path_index is None:
        raise InputError("envelope has no direct-path anchor")
    values = env.values
    anchor = env.direct_path_index
    start = anchor + 1
    stop = min(values.size, anchor + range_samples(config, beep) + 1)
    width = max(1, int(round(config.peak_window * beep.sample_rate)))
    is_peak = np.zeros(values.size, dtype=bool)
    is_peak[local_maxima(values)] = True

    candidates = []
    for lo in range(start, stop, width):
        hi = min(lo + width, stop)
        i = lo + int(np.argmax(values[lo:hi]))
        if values[i] > threshold and is_peak[i]:
            candidates.append(i)

    res = beep.speed_of_sound / beep.sample_rate
    groups: List[List[int]] = []
    for i in candidates:
        # span from the group's first peak, so a higher threshold can never split a group
        if groups and (i - groups[-1][0]) * res < config.merge_distance:
            groups[-1].append(i)
        else:
            groups.append([i])

    peaks = []
    for group in groups:
        best = max(group, key=lambda j: values[j])
        spans = [run_above(values, j, threshold) for j in group]
        crest = max(s[1] for s in spans) - min(s[0] for s in spans)
        offset = refine_peak(values, best)
        peaks.append(EchoPeak.at(best - anchor, beep, channel=channel, magnitude=float(values[best]),
                                 crest_width_samples=max(1, crest), offset=offset))
    return peaks


def estimate_distance(peak: EchoPeak, config: BeepConfig = BeepConfig()) -> float:
    """Geometric (one-way) distance of an echo: half its path ``m * v / f``."""
    return (peak.delay_samples + peak.offset) * config.speed_of_sound / config.sample_rate / 2


@dataclass
class ObstacleTrack:
    track_id: int
    history: List[Tuple[int, EchoPeak]] = field(default_factory=list)
    classification: str = TENTATIVE
    misses: int = 0

    @property
    def last_frame(self) -> int:
        return self.history[-1][0]

    @property
    def peak(self) -> EchoPeak:
        return self.history[-1][1]

    @property
    def distance(self) -> float:
        return self.history[-1][1].geometric_distance

    def distances(self) -> np.ndarray:
        return np.array([p.geometric_distance for _, p in self.history])

    def predict(self, frame_index: int) -> float:
        if len(self.history) < 2:
            return self.distance
        (f0, p0), (f1, p1) = self.history[-2], self.history[-1]
        velocity = (p1.geometric_distance - p0.geometric_distance) / max(1, f1 - f0)
        return self.distance + velocity * (frame_index - f1)

    def classify(self, config: DetectorConfig) -> str:
        """Label from the last ``static_history`` observations.

        static: distance spread below ``static_epsilon``; approaching /
        receding: monotone with a total change of at least ``static_epsilon``;
        anything else (including short histories) stays tentative.
        """
        if len(self.history) < config.static_history:
            return TENTATIVE
        d = self.distances()[-config.static_history:]
        if d.max() - d.min() < config.static_epsilon:
            return STATIC
        steps = np.diff(d)
        if np.all(steps <= 0) and d[0] - d[-1] >= config.static_epsilon:
            return APPROACHING
        if np.all(steps >= 0) and d[-1] - d[0] >= config.static_epsilon:
            return RECEDING
        return TENTATIVE


@dataclass
class TrackerState:
    """Single-owner tracker; feed frames strictly in order."""

    config: DetectorConfig = field(default_factory=DetectorConfig)
    tracks: List[ObstacleTrack] = field(default_factory=list)
    frame_index: Optional[int] = None
    reported: List[ObstacleTrack] = field(default_factory=list)
    next_id: int = 1

    def update(self, peaks: List[EchoPeak], frame_index: int) -> List[ObstacleTrack]:
        if self.frame_index is not None and frame_index <= self.frame_index:
            raise InputError(f"frame {frame_index} after {self.frame_index}: frames must increase")
        cfg = self.config
        pairs = []
        for ti, track in enumerate(self.tracks):
            expected = track.predict(frame_index)
            for pi, peak in enumerate(peaks):
                cost = abs(peak.geometric_distance - expected)
                if cost <= cfg.gate:
                    pairs.append((cost, ti, pi))
        pairs.sort()
        used_tracks, used_peaks = set(), set()
        for _, ti, pi in pairs:
            if ti in used_tracks or pi in used_peaks:
                continue
            used_tracks.add(ti)
            used_peaks.add(pi)
            self.tracks[ti].history.append((frame_index, peaks[pi]))
            self.tracks[ti].misses = 0

        survivors = []
        for ti, track in enumerate(self.tracks):
            if ti not in used_tracks:
                track.misses += 1
                if track.misses > cfg.max_misses:
                    continue
            survivors.append(track)
        for pi, peak in enumerate(peaks):
            if pi not in used_peaks:
                survivors.append(ObstacleTrack(self.next_id, [(frame_index, peak)]))
                self.next_id += 1
        for track in survivors:
            track.classification = track.classify(cfg)
        self.tracks = survivors
        self.frame_index = frame_index
        self.reported = reported_tracks(self.tracks, frame_index, cfg.top_k)
        return self.reported


def reported_tracks(tracks: List[ObstacleTrack], frame_index: int, top_k: int) -> List[ObstacleTrack]:
    """The ``top_k`` nearest moving tracks observed in ``frame_index``."""
    live = [t for t in tracks if t.last_frame == frame_index
            and t.classification in (APPROACHING, RECEDING)]
    live.sort(key=lambda t: t.distance)
    return live[:top_k]


def update_tracks(state: TrackerState, peaks: List[EchoPeak], frame_index: int) -> TrackerState:
    state.update(peaks, frame_index)
    return state
