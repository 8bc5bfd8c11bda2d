"""Walking angle, obstacle size and the voted collision verdict."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Optional

import numpy as np

from .correlator import EnvelopeSeries, local_maxima, refine_peak
from .detector import EchoPeak, run_above
from .errors import BodyGapUnavailable, ConfigError, GeometryInfeasible, InputError
from .signal_core import BeepConfig

#: Tolerance on the law-of-cosines argument before it is declared infeasible.
ARCCOS_TOLERANCE = 0.01
BODY_WINDOW = 0.003
#: A body reflection must reach this fraction of the direct-path peak.
BODY_PEAK_RATIO = 0.1
VOTE_WINDOW = 9
VOTE_QUORUM = 5


@dataclass(frozen=True)
class PhoneProfile:
    name: str
    l_mic: float

    def __post_init__(self):
        if not self.l_mic > 0:
            raise ConfigError(f"l_mic must be positive, got {self.l_mic}")


PHONES = {
    "S5": PhoneProfile("S5", 0.141),
    "Note5": PhoneProfile("Note5", 0.153),
    "S8+": PhoneProfile("S8+", 0.160),
}


@dataclass(frozen=True)
class ObstacleEstimate:
    """Per-ping geometry of one obstacle. Angles in radians, lengths in meters."""

    d1: float
    d2: float
    d3: float
    body_gap: float
    theta: float
    w_p: float
    d_f: float
    delta: float
    radius: float


def estimate_body_gap(env_mic2: EnvelopeSeries, config: BeepConfig = BeepConfig(),
                      window: float = BODY_WINDOW, ratio: float = BODY_PEAK_RATIO,
                      residual: Optional[EnvelopeSeries] = None) -> float:
    """Phone-to-body distance from the bottom microphone's first two peaks.

    The body echo is the first local maximum after the direct arrival that
    reaches ``ratio`` of it within ``window`` seconds; the sample gap ``dm``
    between the two is an extra path of ``2 * d_b`` so ``d_b = dm * v / (2 f)``.

    ``residual`` is the same envelope with the direct arrival cancelled
    (:meth:`MatchedFilter.cancel`). When given, the body peak is located on
    it, free of the direct peak's flank which otherwise drags it later.
    """
    anchor = env_mic2.direct_path_index
    if anchor is None:
        raise InputError("mic2 envelope has no direct-path anchor")
    values = env_mic2.values
    stop = min(values.size, anchor + int(round(window * config.sample_rate)) + 1)
    level = ratio * values[anchor]
    search = residual.values[:stop] if residual is not None else values[:stop]
    direct = anchor + refine_peak(values, anchor)
    for i in local_maxima(search):
        if i <= anchor or search[i] < level:
            continue
        if residual is None and not _has_dip(search, anchor, i):
            continue
        return body_gap_from_samples(i + refine_peak(search, i) - direct, config)
    raise BodyGapUnavailable("no body reflection behind the mic2 direct arrival")


def _has_dip(values: np.ndarray, a: int, b: int) -> bool:
    """True if the envelope between peaks ``a`` and ``b`` falls below both."""
    return values[a:b + 1].min() < min(values[a], values[b])


def body_gap_from_samples(dm: float, config: BeepConfig = BeepConfig()) -> float:
    if not dm > 0:
        raise BodyGapUnavailable("direct and body peaks coincide")
    return dm * config.speed_of_sound / (2 * config.sample_rate)


def correct_bottom_distance(d3: float, d_b: float) -> float:
    """Remove the double phone-to-body leg from the bottom-mic echo distance."""
    if not d3 > 2 * d_b:
        raise GeometryInfeasible(f"d3={d3:.4f} m does not exceed twice the body gap {d_b:.4f} m")
    return d3 - 2 * d_b


def estimate_walk_angle(d1: float, d2: float, profile: PhoneProfile) -> float:
    """Bearing of the obstacle off the phone's mic axis at the top mic.

    Law of cosines in the (mic1, mic2, obstacle) triangle; 0 means dead ahead
    along the axis, pi/2 broadside.
    """
    l = profile.l_mic
    if not (d1 > 0 and d2 > 0):
        raise GeometryInfeasible("distances must be positive")
    cos_arg = (d1 * d1 + l * l - d2 * d2) / (2 * d1 * l)
    if abs(cos_arg) > 1 + ARCCOS_TOLERANCE:
        raise GeometryInfeasible(f"law-of-cosines argument {cos_arg:.4f} outside [-1, 1]")
    return math.pi - math.acos(min(1.0, max(-1.0, cos_arg)))


def crest_width(env: EnvelopeSeries, peak: EchoPeak, threshold: float) -> int:
    """Samples in the contiguous above-threshold run containing the peak."""
    index = env.direct_path_index + peak.delay_samples
    lo, hi = run_above(env.values, index, threshold)
    return hi - lo


def farthest_reflection(d1: float, w_p: float, config: BeepConfig = BeepConfig()) -> float:
    if w_p < 0:
        raise InputError("crest width must be non-negative")
    return d1 + (w_p / 2) * (config.speed_of_sound / config.sample_rate)


def rim_distance(d1: float, w_p: float, config: BeepConfig = BeepConfig()) -> float:
    """One-way distance to the obstacle's rim from the crest width.

    :func:`farthest_reflection` is written for distances counted as echo
    path, ``m * v / f``. Applied to the path ``2 * d1`` and halved, the rim
    lies ``(w_p / 4) * v / f`` beyond ``d1``; the ratio ``d1 / d_f`` and so
    the collision angle are then the same in either unit.
    """
    return farthest_reflection(2 * d1, w_p, config) / 2


def collision_angle(d1: float, d_f: float) -> float:
    """Half-angle the obstacle's rim subtends, ``arccos(d1 / d_f)``.

    The printed form ``arccos(D_f / D_1)`` has its argument inverted; with
    ``d_f >= d1`` it would leave the arccos domain.
    """
    if not (d1 > 0 and d_f >= d1):
        raise GeometryInfeasible(f"need d_f >= d1 > 0, got d1={d1}, d_f={d_f}")
    return math.acos(d1 / d_f)


def estimate_radius(d1: float, d_f: float) -> float:
    if not (d1 > 0 and d_f >= d1):
        raise GeometryInfeasible(f"need d_f >= d1 > 0, got d1={d1}, d_f={d_f}")
    return math.sqrt(d_f * d_f - d1 * d1)


def decide_collision(theta: float, delta: float) -> bool:
    return theta <= delta


@dataclass
class CollisionVerdict:
    """Sliding 5-of-9 vote for one track.

    Decisions are only recorded within ``evaluation_distance``; the alert
    additionally needs the obstacle inside ``alert_distance`` and then
    latches until :meth:`reset`.
    """

    evaluation_distance: float = 5.0
    alert_distance: float = 3.0
    decisions: Deque[bool] = field(default_factory=lambda: deque(maxlen=VOTE_WINDOW))
    alert: bool = False

    @property
    def votes(self) -> int:
        return sum(self.decisions)

    def reset(self) -> None:
        self.decisions.clear()
        self.alert = False


def vote_alert(verdict: CollisionVerdict, decision: bool, distance: float) -> CollisionVerdict:
    if distance <= verdict.evaluation_distance:
        verdict.decisions.append(bool(decision))
    if (not verdict.alert and verdict.votes >= VOTE_QUORUM
            and distance <= verdict.alert_distance):
        verdict.alert = True
    return verdict


def alert_rule(window, distance: float, alert_distance: float = 3.0) -> bool:
    """Stateless form of the vote: the most recent nine decisions decide."""
    recent = list(window)[-VOTE_WINDOW:]
    return sum(bool(d) for d in recent) >= VOTE_QUORUM and distance <= alert_distance


def estimate_obstacle(d1: float, d3: float, d_b: float, w_p: float, profile: PhoneProfile,
                      config: BeepConfig = BeepConfig()) -> ObstacleEstimate:
    d2 = correct_bottom_distance(d3, d_b)
    theta = estimate_walk_angle(d1, d2, profile)
    d_f = rim_distance(d1, w_p, config)
    return ObstacleEstimate(d1=d1, d2=d2, d3=d3, body_gap=d_b, theta=theta, w_p=w_p, d_f=d_f,
                            delta=collision_angle(d1, d_f), radius=estimate_radius(d1, d_f))


def mic2_search_window(d1: float, d_b: float, profile: PhoneProfile, margin: float = 0.05):
    """Echo-path interval on mic2 consistent with an obstacle at ``d1`` from mic1.

    mic2 hears the top speaker's echo after a return leg ``d2 + 2 d_b`` with
    ``|d2 - d1| <= l_mic``.
    """
    lo = 2 * d1 + 2 * d_b - profile.l_mic - margin
    hi = 2 * d1 + 2 * d_b + profile.l_mic + margin
    return lo, hi


def locate_mic2_echo(env_mic2: EnvelopeSeries, anchor: int, d1: float, d_b: float,
                     profile: PhoneProfile, config: BeepConfig = BeepConfig()) -> Optional[float]:
    """Echo path (meters) of the strongest mic2 return in the expected window.

    ``anchor`` is the shared time zero (mic1's direct arrival). Returns
    ``None`` when the window holds no local maximum.
    """
    res = config.speed_of_sound / config.sample_rate
    lo_path, hi_path = mic2_search_window(d1, d_b, profile)
    lo = max(anchor + 1, anchor + int(math.floor(lo_path / res)))
    hi = min(env_mic2.values.size - 1, anchor + int(math.ceil(hi_path / res)) + 1)
    if hi <= lo:
        return None
    seg = env_mic2.values[lo:hi]
    i = lo + int(np.argmax(seg))
    if i in (lo, hi - 1) or not seg.max() > 0:
        return None
    return (i + refine_peak(env_mic2.values, i) - anchor) * res
