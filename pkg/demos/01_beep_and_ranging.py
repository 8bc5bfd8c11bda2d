r"""
Beep and ranging
================

The transmitted beep is a Hanning-tapered 18-23 kHz linear chirp. Matched
filtering a recording against it compresses each echo into a narrow envelope
peak whose delay from the direct arrival gives the round-trip path.
"""

import numpy as np

from obstaclewatch import BeepConfig, MatchedFilter, bandpass, find_direct_path, generate_chirp
from obstaclewatch.correlator import refine_peak
from obstaclewatch.signal_core import SampleBuffer, build_ping_schedule, path_resolution, spectral_fraction

beep = BeepConfig()
chirp = generate_chirp(beep)
print(f"chirp: {len(chirp)} samples, ping period {beep.ping_period_samples} samples")
print(f"in-band energy: {spectral_fraction(chirp.samples, beep.sample_rate, beep.f_low, beep.f_high):.4f}")
print(f"one sample of delay = {100 * path_resolution(beep.speed_of_sound, beep.sample_rate):.4f} cm "
      f"of path ({100 * path_resolution(beep.speed_of_sound, 44100):.4f} cm at 44.1 kHz)")

train = build_ping_schedule(beep, 3)
print(f"three pings: {len(train)} samples")

######################################################################
# A synthetic recording: the direct arrival plus an echo 2.4 m of path
# later, 30 dB weaker, buried in low-frequency hum and white noise.

rng = np.random.default_rng(0)
n = beep.ping_period_samples
t = np.arange(n) / beep.sample_rate
x = np.zeros(n)
x[:chirp.samples.size] += chirp.samples
delay = 2.4 / path_resolution(beep.speed_of_sound, beep.sample_rate)
k = int(delay)
x[k:k + chirp.samples.size] += 10 ** (-30 / 20) * chirp.samples
x += 0.05 * np.sin(2 * np.pi * 200 * t) + rng.normal(0, 0.01, n)

filtered = bandpass(SampleBuffer(np.clip(x, -1, 1), beep.sample_rate), beep.f_low, beep.f_high)
env = MatchedFilter(chirp).envelope(filtered.samples, beep.sample_rate)
anchor = find_direct_path(env)
search = env.values[anchor + 200:]
i = anchor + 200 + int(np.argmax(search))
path = (i + refine_peak(env.values, i) - anchor) * path_resolution(beep.speed_of_sound, beep.sample_rate)
print(f"direct path at sample {anchor}; echo path {path:.4f} m (true {k * path_resolution(beep.speed_of_sound, beep.sample_rate):.4f} m)")
