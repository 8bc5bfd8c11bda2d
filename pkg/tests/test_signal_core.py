import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import signal

from obstaclewatch.errors import ConfigError
from obstaclewatch.signal_core import (BAND_PRESETS, BeepConfig, SampleBuffer, bandpass,
                                       bandpass_taps, build_ping_schedule, generate_chirp,
                                       path_resolution, spectral_fraction)


def tone(freq, fs=192000, n=19200):
    return SampleBuffer(np.sin(2 * np.pi * freq * np.arange(n) / fs), fs)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


class TestBeepConfig:
    def test_defaults(self, beep):
        assert (beep.f_low, beep.f_high, beep.duration) == (18000, 23000, 0.05)
        assert beep.sample_rate == 192000 and beep.interval == 0.04
        assert beep.ping_period_samples == 17280

    @pytest.mark.parametrize("kwargs", [
        dict(f_low=23000, f_high=18000),
        dict(f_low=18000, f_high=18000),
        dict(f_high=30000, sample_rate=48000),
        dict(f_low=0.0),
        dict(duration=0.0),
        dict(interval=-0.01),
        dict(speed_of_sound=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            BeepConfig(**kwargs)

    def test_band_preset(self, beep):
        wide = beep.with_band("16-23k")
        assert (wide.f_low, wide.f_high) == BAND_PRESETS["16-23k"]
        with pytest.raises(ConfigError):
            beep.with_band("nope")


class TestChirp:
    def test_paper_length(self, beep):
        assert len(generate_chirp(beep)) == 9600

    def test_length_at_44k1(self):
        # the default 18-23 kHz band exceeds 44.1 kHz Nyquist; length only depends on duration
        cfg = BeepConfig(f_low=16000, f_high=20000, sample_rate=44100)
        assert len(generate_chirp(cfg)) == 2205

    def test_rejects_band_above_nyquist_at_44k1(self):
        with pytest.raises(ConfigError):
            BeepConfig(sample_rate=44100)

    def test_endpoints_zero_and_bounded(self, beep):
        x = generate_chirp(beep).samples
        assert x[0] == 0.0 and abs(x[-1]) < 1e-12
        assert np.max(np.abs(x)) <= 1.0

    def test_instantaneous_frequency_linear(self, beep):
        x = generate_chirp(beep).samples
        phase = np.unwrap(np.angle(signal.hilbert(x)))
        f = np.diff(phase) * beep.sample_rate / (2 * np.pi)
        t = np.arange(f.size) / beep.sample_rate
        core = slice(f.size // 10, -f.size // 10)   # Hilbert edge effects at the taper ends
        expected = beep.f_low + (beep.f_high - beep.f_low) * t / beep.duration
        assert np.max(np.abs(f[core] - expected[core])) < 150

    def test_spectral_concentration(self, beep):
        x = generate_chirp(beep).samples
        assert spectral_fraction(x, beep.sample_rate, beep.f_low, beep.f_high) >= 0.95

    def test_autocorrelation_sharp(self, beep):
        x = generate_chirp(beep).samples
        ac = np.abs(signal.hilbert(signal.correlate(x, x, mode="full", method="fft")))
        ac /= ac.max()
        zero = x.size - 1
        assert np.argmax(ac) == zero
        # outside the main lobe (first null near 1/B) nothing reaches half the peak
        lobe = int(2 * beep.sample_rate / (beep.f_high - beep.f_low))
        side = np.concatenate([ac[:zero - lobe], ac[zero + lobe + 1:]])
        assert side.max() < 0.5

    def test_deterministic(self, beep):
        a, b = generate_chirp(beep).samples, generate_chirp(BeepConfig()).samples
        assert a.tobytes() == b.tobytes()


class TestBandpass:
    def test_stopband_10k(self, beep):
        x = tone(10000)
        y = bandpass(x, beep.f_low, beep.f_high).samples
        core = slice(2000, -2000)
        assert 20 * np.log10(rms(y[core]) / rms(x.samples[core])) <= -40

    @pytest.mark.parametrize("freq", [14000, 27000])
    def test_stopband_beyond_transition(self, beep, freq):
        x = tone(freq)
        y = bandpass(x, beep.f_low, beep.f_high).samples
        assert 20 * np.log10(rms(y[2000:-2000]) / rms(x.samples[2000:-2000])) <= -40

    def test_zero_in_zero_out(self, beep):
        y = bandpass(SampleBuffer(np.zeros(5000), 192000), beep.f_low, beep.f_high)
        assert not np.any(y.samples)

    def test_chirp_passes(self, beep):
        x = generate_chirp(beep)
        y = bandpass(x, beep.f_low, beep.f_high)
        assert len(y) == len(x)
        assert rms(y.samples) / rms(x.samples) >= 0.9

    def test_linear_phase_keeps_alignment(self, beep):
        x = np.zeros(20000)
        x[5000:5000 + 9600] = generate_chirp(beep).samples
        y = bandpass(SampleBuffer(x, 192000), beep.f_low, beep.f_high).samples
        lag = np.argmax(signal.correlate(y, x, mode="full", method="fft")) - (x.size - 1)
        assert lag == 0

    def test_taps_odd_symmetric(self, beep):
        h = bandpass_taps(beep.f_low, beep.f_high, beep.sample_rate)
        assert h.size % 2 == 1
        np.testing.assert_allclose(h, h[::-1])

    def test_invalid_band(self):
        with pytest.raises(ConfigError):
            bandpass(tone(1000), 23000, 18000)


class TestSchedule:
    def test_one_ping(self, beep):
        assert len(build_ping_schedule(beep, 1)) == 17280

    def test_three_pings_silence(self, beep):
        x = build_ping_schedule(beep, 3).samples
        n, c = beep.ping_period_samples, beep.chirp_samples
        assert x.size == 3 * n
        chirp = generate_chirp(beep).samples
        for k in range(3):
            np.testing.assert_array_equal(x[k * n:k * n + c], chirp)
            assert not np.any(x[k * n + c:(k + 1) * n])

    def test_rejects_zero_pings(self, beep):
        with pytest.raises(ValueError):
            build_ping_schedule(beep, 0)


def test_path_resolution_values():
    assert round(path_resolution(343, 192000) * 100, 4) == pytest.approx(0.1786, abs=1e-4)
    assert round(path_resolution(343, 44100) * 100, 4) == pytest.approx(0.7778, abs=1e-4)


@given(f_low=st.floats(1000, 40000), width=st.floats(500, 40000),
       duration=st.floats(0.002, 0.06))
def test_chirp_properties(f_low, width, duration):
    fs = 192000
    f_high = f_low + width
    if f_high > fs / 2:
        with pytest.raises(ConfigError):
            BeepConfig(f_low=f_low, f_high=f_high, duration=duration)
        return
    cfg = BeepConfig(f_low=f_low, f_high=f_high, duration=duration)
    x = generate_chirp(cfg).samples
    assert x.size == round(duration * fs)
    assert np.all(np.isfinite(x)) and np.max(np.abs(x)) <= 1.0
    assert x[0] == 0.0
