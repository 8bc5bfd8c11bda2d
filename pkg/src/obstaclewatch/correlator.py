"""Matched filtering, correlation envelopes and the direct-path time anchor."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from .errors import FrameRejected, InputError
from .signal_core import SampleBuffer

#: Frames at least this long are correlated in the frequency domain.
FFT_MIN_LENGTH = 4096
DIRECT_PATH_WINDOW = 0.005
DIRECT_PATH_RATIO = 0.5


@dataclass(frozen=True)
class StereoFrame:
    """One ping period of two-channel audio: mic1 is the top microphone."""

    mic1: SampleBuffer
    mic2: SampleBuffer
    frame_index: int = 0

    def __post_init__(self):
        if len(self.mic1) != len(self.mic2):
            raise InputError("mic1 and mic2 differ in length")
        if self.mic1.sample_rate != self.mic2.sample_rate:
            raise InputError("mic1 and mic2 differ in sample rate")

    @property
    def sample_rate(self) -> int:
        return self.mic1.sample_rate

    def __len__(self):
        return len(self.mic1)

    @classmethod
    def from_array(cls, data: np.ndarray, sample_rate: int, frame_index: int = 0) -> "StereoFrame":
        """Build from an ``(n, 2)`` array, column 0 = mic1."""
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise InputError(f"expected (n, 2) samples, got shape {data.shape}")
        return cls(SampleBuffer(data[:, 0], sample_rate), SampleBuffer(data[:, 1], sample_rate),
                   frame_index)


@dataclass(frozen=True)
class EnvelopeSeries:
    values: np.ndarray = field(repr=False)
    sample_rate: int
    direct_path_index: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or np.any(values < 0):
            raise ValueError("envelope must be a non-negative 1-D series")
        if self.direct_path_index is not None and not 0 <= self.direct_path_index < values.size:
            raise ValueError(f"direct_path_index {self.direct_path_index} outside the frame")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def anchored(self, index: int) -> "EnvelopeSeries":
        return replace(self, direct_path_index=int(index))


def correlate(channel: SampleBuffer, template: SampleBuffer) -> np.ndarray:
    """Matched-filter response of ``channel`` against ``template``.

    ``out[t] = sum_k channel[t + k] * template[k]``, i.e. a copy of the
    template starting at sample ``t`` peaks at index ``t``. Output has the
    channel's length; lags running off the end see zeros.
    """
    x = np.asarray(getattr(channel, "samples", channel), dtype=float)
    h = np.asarray(getattr(template, "samples", template), dtype=float)
    if h.size > x.size:
        raise InputError(f"template ({h.size}) longer than channel ({x.size})")
    method = "fft" if x.size >= FFT_MIN_LENGTH else "direct"
    full = signal.correlate(x, h, mode="full", method=method)
    return full[h.size - 1:h.size - 1 + x.size]


class MatchedFilter:
    """:func:`correlate` plus envelope with the template spectrum cached.

    Used on the per-ping path where the frame length never changes.
    """

    def __init__(self, template: SampleBuffer):
        self.template = np.asarray(template.samples, dtype=float)
        self._cache = {}

    def _spectrum(self, n: int):
        if n not in self._cache:
            nfft = sp_fft.next_fast_len(n + self.template.size - 1)
            spec = np.conj(sp_fft.fft(self.template, nfft))
            # analytic-signal weights folded into the filter: envelope = |ifft(X * H * w)|
            w = np.zeros(nfft)
            w[0] = 1.0
            if nfft % 2 == 0:
                w[nfft // 2] = 1.0
                w[1:nfft // 2] = 2.0
            else:
                w[1:(nfft + 1) // 2] = 2.0
            self._cache[n] = (nfft, spec, spec * w, w)
        return self._cache[n]

    def correlate(self, samples: np.ndarray) -> np.ndarray:
        n = samples.size
        if self.template.size > n:
            raise InputError(f"template ({self.template.size}) longer than channel ({n})")
        nfft, spec = self._spectrum(n)[:2]
        return sp_fft.irfft(sp_fft.rfft(samples, nfft) * spec[:nfft // 2 + 1], nfft)[:n]

    def analytic(self, samples: np.ndarray) -> np.ndarray:
        """Complex analytic matched-filter output; its magnitude is the envelope."""
        n = samples.size
        if self.template.size > n:
            raise InputError(f"template ({self.template.size}) longer than channel ({n})")
        nfft, _, analytic, _ = self._spectrum(n)
        return sp_fft.ifft(sp_fft.fft(samples, nfft) * analytic)[:n]

    def envelope(self, samples: np.ndarray, sample_rate: int) -> EnvelopeSeries:
        return EnvelopeSeries(np.abs(self.analytic(samples)), sample_rate)

    def point_response(self, n: int, delay: float) -> np.ndarray:
        """Analytic output for a unit template copy starting at fractional ``delay``."""
        nfft, spec, _, w = self._spectrum(n)
        ramp = np.exp(-2j * np.pi * np.arange(nfft) * delay / nfft)
        return sp_fft.ifft(np.abs(spec) ** 2 * w * ramp)[:n]

    def cancel(self, analytic: np.ndarray, index: int) -> np.ndarray:
        """Remove the isolated arrival peaking near ``index`` from an analytic output.

        Delay comes from a parabolic fit to the envelope, complex gain from
        the sample nearest the peak.
        """
        env = np.abs(analytic)
        delay = index + refine_peak(env, index)
        response = self.point_response(analytic.size, delay)
        gain = analytic[index] / response[index]
        return analytic - gain * response


def envelope(correlation, sample_rate: int = 1) -> EnvelopeSeries:
    """Upper envelope: magnitude of the analytic signal, unsmoothed."""
    c = np.asarray(correlation, dtype=float)
    if c.size == 0 or not np.any(c):
        return EnvelopeSeries(np.zeros(c.size), sample_rate)
    return EnvelopeSeries(np.abs(signal.hilbert(c)), sample_rate)


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices that are >= both neighbours (edges compare to their one neighbour)."""
    v = values
    if v.size == 0:
        return np.zeros(0, dtype=int)
    if v.size == 1:
        return np.array([0])
    left = np.concatenate(([True], v[1:] >= v[:-1]))
    right = np.concatenate((v[:-1] >= v[1:], [True]))
    return np.flatnonzero(left & right & (v > 0))


def find_direct_path(env: EnvelopeSeries, search_window: float = DIRECT_PATH_WINDOW,
                     ratio: float = DIRECT_PATH_RATIO) -> int:
    """Earliest strong local maximum near the frame start.

    Returns the first local maximum within ``search_window`` seconds whose
    magnitude is at least ``ratio`` times the window maximum.
    """
    if search_window <= 0:
        raise ValueError("search_window must be positive")
    n = min(len(env), max(1, int(round(search_window * env.sample_rate))))
    head = env.values[:n]
    peak = head.max() if n else 0.0
    if not peak > 0:
        raise FrameRejected("no energy in the direct-path search window")
    # the maximum itself may sit on the window edge; allow one sample of lookahead
    extended = env.values[:n + 1]
    for i in local_maxima(extended):
        if i < n and extended[i] >= ratio * peak:
            return int(i)
    raise FrameRejected("no qualifying direct-path peak")


def refine_peak(values: np.ndarray, index: int) -> float:
    """Parabolic sub-sample offset of a peak, in [-0.5, 0.5]."""
    if index <= 0 or index >= values.size - 1:
        return 0.0
    a, b, c = values[index - 1], values[index], values[index + 1]
    denom = a - 2 * b + c
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
