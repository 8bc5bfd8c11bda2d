"""Beep waveform, ping schedule and band-pass prefiltering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import ConfigError

#: Chirp amplitude before the Hanning taper; leaves headroom for resampling.
CHIRP_AMPLITUDE = 0.9
#: Bandpass transition width on each side of the band, Hz.
TRANSITION_HZ = 2000.0
#: Stopband attenuation the FIR is designed for, dB.
STOPBAND_DB = 60.0

SUPPORTED_RATES = (192000, 48000, 44100)


@dataclass(frozen=True)
class BeepConfig:
    """Transmitted beep and ping timing.

    Defaults are the 18-23 kHz, 50 ms linear chirp with a 40 ms listening gap
    sampled at 192 kHz.
    """

    f_low: float = 18000.0
    f_high: float = 23000.0
    duration: float = 0.050
    sample_rate: int = 192000
    interval: float = 0.040
    speed_of_sound: float = 343.0

    def __post_init__(self):
        if not (self.sample_rate > 0):
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        check_band(self.f_low, self.f_high, self.sample_rate)
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if not self.interval >= 0:
            raise ConfigError(f"interval must be non-negative, got {self.interval}")
        if not self.speed_of_sound > 0:
            raise ConfigError(f"speed_of_sound must be positive, got {self.speed_of_sound}")

    @property
    def chirp_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def ping_period(self) -> float:
        return self.duration + self.interval

    @property
    def ping_period_samples(self) -> int:
        return int(round(self.ping_period * self.sample_rate))

    @property
    def path_resolution(self) -> float:
        """Echo path length represented by one sample, meters."""
        return self.speed_of_sound / self.sample_rate

    def with_band(self, preset: str) -> "BeepConfig":
        if preset not in BAND_PRESETS:
            raise ConfigError(f"unknown band preset {preset!r}; choose from {sorted(BAND_PRESETS)}")
        f_low, f_high = BAND_PRESETS[preset]
        return BeepConfig(f_low, f_high, self.duration, self.sample_rate,
                          self.interval, self.speed_of_sound)


BAND_PRESETS = {
    "18-23k": (18000.0, 23000.0),
    "16-23k": (16000.0, 23000.0),
}


@dataclass(frozen=True)
class SampleBuffer:
    samples: np.ndarray = field(repr=False)
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("SampleBuffer holds a single channel")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite sample values")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def check_band(f_low: float, f_high: float, sample_rate: float) -> None:
    nyquist = sample_rate / 2
    if not (0 < f_low < f_high):
        raise ConfigError(f"invalid band [{f_low}, {f_high}] Hz: need 0 < f_low < f_high")
    if f_high > nyquist:
        raise ConfigError(f"f_high={f_high} Hz exceeds Nyquist ({nyquist} Hz)")


def generate_chirp(config: BeepConfig) -> SampleBuffer:
    """Hanning-tapered linear up-chirp from ``f_low`` to ``f_high``.

    The sweep reaches ``f_high`` on the last sample. Both end samples are zero
    because the taper spans the whole beep.
    """
    n = config.chirp_samples
    if n < 2:
        raise ConfigError(f"beep of {n} samples is too short")
    t = np.arange(n) / config.sample_rate
    sweep = signal.chirp(t, f0=config.f_low, t1=t[-1], f1=config.f_high,
                         method="linear", phi=0.0)
    return SampleBuffer(CHIRP_AMPLITUDE * np.hanning(n) * sweep, config.sample_rate)


@lru_cache(maxsize=32)
def bandpass_taps(f_low: float, f_high: float, sample_rate: int) -> np.ndarray:
    """Linear-phase FIR taps (odd length) for the band ``[f_low, f_high]``.

    Cutoffs sit half a transition width outside the band so the band itself
    is in the flat passband. Sides that would cross 0 Hz or Nyquist are left
    open, degrading to a high- or low-pass design.
    """
    check_band(f_low, f_high, sample_rate)
    nyquist = sample_rate / 2
    numtaps, beta = signal.kaiserord(STOPBAND_DB, TRANSITION_HZ / nyquist)
    numtaps |= 1
    lo = f_low - TRANSITION_HZ / 2
    hi = f_high + TRANSITION_HZ / 2
    has_lo = lo - TRANSITION_HZ / 2 > 0
    has_hi = hi + TRANSITION_HZ / 2 < nyquist
    window = ("kaiser", beta)
    if has_lo and has_hi:
        taps = signal.firwin(numtaps, [lo, hi], window=window, pass_zero=False, fs=sample_rate)
    elif has_lo:
        taps = signal.firwin(numtaps, lo, window=window, pass_zero=False, fs=sample_rate)
    elif has_hi:
        taps = signal.firwin(numtaps, hi, window=window, pass_zero=True, fs=sample_rate)
    else:
        taps = np.zeros(numtaps)
        taps[numtaps // 2] = 1.0
    taps.setflags(write=False)
    return taps


def bandpass(buffer: SampleBuffer, f_low: float, f_high: float) -> SampleBuffer:
    """Zero-delay band-pass: output sample ``i`` lines up with input sample ``i``."""
    taps = bandpass_taps(float(f_low), float(f_high), int(buffer.sample_rate))
    x = buffer.samples
    if not np.any(x):
        return SampleBuffer(np.zeros_like(x), buffer.sample_rate)
    y = signal.oaconvolve(x, taps, mode="full")
    delay = taps.size // 2
    return SampleBuffer(y[delay:delay + x.size], buffer.sample_rate)


def build_ping_schedule(config: BeepConfig, n_pings: int) -> SampleBuffer:
    if n_pings < 1:
        raise ConfigError(f"n_pings must be >= 1, got {n_pings}")
    period = np.zeros(config.ping_period_samples)
    chirp = generate_chirp(config).samples
    period[:chirp.size] = chirp[:period.size]
    return SampleBuffer(np.tile(period, n_pings), config.sample_rate)


def spectral_fraction(samples: np.ndarray, sample_rate: float, f_low: float, f_high: float) -> float:
    """Fraction of a signal's energy whose frequency lies in ``[f_low, f_high]``."""
    power = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(samples.size, 1.0 / sample_rate)
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[(freqs >= f_low) & (freqs <= f_high)].sum() / total)


def path_resolution(speed_of_sound: float, sample_rate: float) -> float:
    """Echo path length per sample, meters."""
    return speed_of_sound / sample_rate


def samples_for_path(path: float, config: BeepConfig) -> float:
    return path * config.sample_rate / config.speed_of_sound


def rms_db(samples: np.ndarray) -> float:
    rms = math.sqrt(float(np.mean(np.square(samples))))
    return 20 * math.log10(rms) if rms > 0 else -math.inf
