"""Per-ping processing: envelopes, detection, tracking, geometry and voting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .correlator import EnvelopeSeries, MatchedFilter, StereoFrame, find_direct_path
from .detector import (APPROACHING, DetectorConfig, EchoPeak, ObstacleTrack, TrackerState,
                       compute_threshold, detect_peaks, estimate_distance)
from .errors import BodyGapUnavailable, FrameRejected, GeometryInfeasible, InputError
from .geometry import (PHONES, CollisionVerdict, ObstacleEstimate, PhoneProfile, crest_width,
                       estimate_body_gap, estimate_obstacle, locate_mic2_echo, vote_alert)
from .signal_core import BeepConfig, bandpass, generate_chirp

log = logging.getLogger(__name__)

BODY_GAP_FALLBACK_PINGS = 3


@dataclass(frozen=True)
class RunConfig:
    beep: BeepConfig = field(default_factory=BeepConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    phone: PhoneProfile = PHONES["S5"]
    evaluation_distance: float = 5.0
    alert_distance: float = 3.0
    #: subtract the crest an ideal point echo would have before applying the rim formula
    point_spread_correction: bool = False
    #: measure the crest at the detection threshold (lam x mean) instead of the mean itself
    crest_at_detection_threshold: bool = False

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


@dataclass
class FrameAnalysis:
    """Stateless per-frame products."""

    frame_index: int
    env1: EnvelopeSeries
    env2: EnvelopeSeries
    threshold: float
    peaks: List[EchoPeak]
    body_gap: Optional[float]


@dataclass
class TrackRecord:
    frame_index: int
    track_id: int
    classification: str
    estimate: Optional[ObstacleEstimate]
    decision: Optional[bool]
    alert: bool


class PointSpread:
    """Above-threshold width of an isolated point echo, by peak-to-threshold ratio."""

    def __init__(self, matched: MatchedFilter, sample_rate: int):
        t = matched.template
        auto = matched.envelope(np.concatenate([t, np.zeros(t.size)]), sample_rate).values
        self.profile = auto[:t.size] / auto[0]

    def width(self, magnitude: float, threshold: float) -> int:
        if not magnitude > threshold:
            return 0
        level = threshold / magnitude
        below = np.flatnonzero(self.profile <= level)
        half = below[0] if below.size else self.profile.size
        return int(2 * half - 1)


class ObstacleWatch:
    """Stateful detector for one walk; feed frames in ping order."""

    def __init__(self, config: RunConfig = RunConfig()):
        self.config = config
        beep = config.beep
        self.matched = MatchedFilter(generate_chirp(beep))
        self.point_spread = PointSpread(self.matched, beep.sample_rate)
        self.tracker = TrackerState(config.detector)
        self.verdicts: Dict[int, CollisionVerdict] = {}
        self._body_gap: Optional[float] = None
        self._body_gap_age = 0
        self.rejected_frames: List[int] = []

    def analyze(self, frame: StereoFrame) -> FrameAnalysis:
        beep, det = self.config.beep, self.config.detector
        if frame.sample_rate != beep.sample_rate:
            raise InputError(f"frame rate {frame.sample_rate} Hz != configured {beep.sample_rate} Hz")
        x1 = bandpass(frame.mic1, beep.f_low, beep.f_high).samples
        x2 = bandpass(frame.mic2, beep.f_low, beep.f_high).samples
        env1 = self.matched.envelope(x1, beep.sample_rate)
        analytic2 = self.matched.analytic(x2)
        env2 = EnvelopeSeries(np.abs(analytic2), beep.sample_rate)
        env1 = env1.anchored(find_direct_path(env1))
        threshold = compute_threshold(env1, det, beep)
        peaks = detect_peaks(env1, threshold, det, beep)
        body_gap = None
        try:
            env2 = env2.anchored(find_direct_path(env2))
            residual = EnvelopeSeries(np.abs(self.matched.cancel(analytic2, env2.direct_path_index)),
                                      beep.sample_rate)
            body_gap = estimate_body_gap(env2, beep, residual=residual)
        except (FrameRejected, BodyGapUnavailable) as exc:
            log.debug("frame %d: %s", frame.frame_index, exc)
        return FrameAnalysis(frame.frame_index, env1, env2, threshold, peaks, body_gap)

    def _current_body_gap(self, measured: Optional[float]) -> Optional[float]:
        if measured is not None:
            self._body_gap, self._body_gap_age = measured, 0
            return measured
        if self._body_gap is not None and self._body_gap_age < BODY_GAP_FALLBACK_PINGS:
            self._body_gap_age += 1
            return self._body_gap
        return None

    def estimate(self, analysis: FrameAnalysis, peak: EchoPeak,
                 body_gap: Optional[float]) -> ObstacleEstimate:
        """Geometry for one mic1 peak; raises when this ping cannot support it."""
        beep, phone = self.config.beep, self.config.phone
        if body_gap is None:
            raise BodyGapUnavailable("no body gap measured recently")
        d1 = estimate_distance(peak, beep)
        anchor = analysis.env1.direct_path_index
        path2 = locate_mic2_echo(analysis.env2, anchor, d1, body_gap, phone, beep)
        if path2 is None:
            raise GeometryInfeasible("no mic2 echo in the expected window")
        return estimate_obstacle(d1, path2 - d1, body_gap, self.crest(analysis, peak), phone, beep)

    def crest(self, analysis: FrameAnalysis, peak: EchoPeak) -> int:
        """Crest width W_p of a mic1 peak, in samples.

        Counted against the mean in-range envelope, the level the detection
        threshold scales by ``lam``.
        """
        level = analysis.threshold
        if not self.config.crest_at_detection_threshold:
            level /= self.config.detector.lam
        w_p = crest_width(analysis.env1, peak, level)
        if self.config.point_spread_correction:
            w_p = max(0, w_p - self.point_spread.width(peak.magnitude, level))
        return w_p

    def process(self, frame: StereoFrame) -> List[TrackRecord]:
        try:
            analysis = self.analyze(frame)
        except FrameRejected as exc:
            log.info("frame %d skipped: %s", frame.frame_index, exc)
            self.rejected_frames.append(frame.frame_index)
            return []
        body_gap = self._current_body_gap(analysis.body_gap)
        reported = self.tracker.update(analysis.peaks, frame.frame_index)
        live = {t.track_id for t in self.tracker.tracks}
        for tid in list(self.verdicts):
            if tid not in live:
                del self.verdicts[tid]

        records = []
        for track in reported:
            verdict = self.verdicts.setdefault(
                track.track_id,
                CollisionVerdict(self.config.evaluation_distance, self.config.alert_distance))
            estimate = decision = None
            try:
                estimate = self.estimate(analysis, track.peak, body_gap)
            except (GeometryInfeasible, BodyGapUnavailable) as exc:
                log.debug("frame %d track %d: %s", frame.frame_index, track.track_id, exc)
            if track.classification != APPROACHING:
                verdict.reset()
            elif estimate is not None:
                decision = estimate.theta <= estimate.delta
                vote_alert(verdict, decision, estimate.d1)
            records.append(TrackRecord(frame.frame_index, track.track_id, track.classification,
                                       estimate, decision, verdict.alert))
        return records

    def run(self, frames) -> List[TrackRecord]:
        out = []
        for frame in frames:
            out.extend(self.process(frame))
        return out

    @property
    def alert(self) -> bool:
        return any(v.alert for v in self.verdicts.values())
