"""Acoustic obstacle detection and collision prediction for a walking phone user.

The phone's speaker emits a near-ultrasonic chirp every ping period; the top
(mic1) and bottom (mic2) microphones record the echoes. Matched filtering
gives per-path envelopes, echo peaks are tracked across pings to discard
static clutter, the two microphones' distances give the bearing, the crest
width gives the obstacle's angular size, and a 5-of-9 vote raises the alert.
"""

from .correlator import EnvelopeSeries, MatchedFilter, StereoFrame, correlate, envelope, find_direct_path
from .detector import DetectorConfig, EchoPeak, ObstacleTrack, TrackerState, detect_peaks
from .errors import (BodyGapUnavailable, ConfigError, FrameRejected, GeometryInfeasible,
                     InputError, IOFailure, ObstacleWatchError, SceneError)
from .evaluation import Case, EvaluationReport, evaluate, run_case, standard_batch
from .geometry import PHONES, CollisionVerdict, ObstacleEstimate, PhoneProfile, estimate_walk_angle
from .pipeline import ObstacleWatch, RunConfig
from .signal_core import BeepConfig, SampleBuffer, bandpass, generate_chirp
from .simulator import Clutter, GroundTruth, Obstacle, Pose, Scene, Trajectory, synthesize_ping, synthesize_walk

__version__ = "0.1.0"
