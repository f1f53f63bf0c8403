import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emod.exceptions import InvalidBand, TooFewChannels
from emod.signal import (
    RawRecording,
    average_rereference,
    bandpass,
    resample,
    segment,
    window_fft_magnitude,
)


def tone(freq, fs=200.0, seconds=10.0, channels=1):
    t = np.arange(int(fs * seconds)) / fs
    return RawRecording([f"c{i}" for i in range(channels)], fs, np.tile(np.sin(2 * np.pi * freq * t), (channels, 1)))


def rms(x):
    return np.sqrt(np.mean(np.square(x)))


class TestBandpass:
    def test_passes_10hz(self):
        rec = tone(10.0)
        out = bandpass(rec)
        edge = int(rec.sampling_rate)
        assert abs(rms(out.samples[:, edge:-edge]) / rms(rec.samples[:, edge:-edge]) - 1) < 0.05

    def test_rejects_60hz(self):
        rec = tone(60.0)
        assert rms(bandpass(rec).samples) < 0.1 * rms(rec.samples)

    def test_zero_input(self):
        rec = RawRecording(["a", "b"], 200.0, np.zeros((2, 2000)))
        assert np.all(bandpass(rec).samples == 0)

    def test_zero_phase(self):
        rec = tone(8.0)
        out = bandpass(rec).samples[0]
        inp = rec.samples[0]
        lags = np.arange(-20, 21)
        mid = slice(400, -400)
        xc = [np.dot(inp[mid], np.roll(out, -k)[mid]) for k in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_edges_are_flagged(self):
        out = bandpass(tone(10.0))
        assert out.edge_samples > 0

    @pytest.mark.parametrize("low,high", [(0.0, 40.0), (30.0, 20.0), (1.0, 100.0), (1.0, 150.0)])
    def test_invalid_band(self, low, high):
        with pytest.raises(InvalidBand):
            bandpass(tone(10.0), low, high)


class TestRereference:
    def test_hand_case(self):
        rec = RawRecording(["a", "b"], 100.0, np.array([[1.0], [3.0]]))
        np.testing.assert_array_equal(average_rereference(rec).samples, [[-1.0], [1.0]])

    def test_zero_mean_columns(self, rng):
        rec = RawRecording(list("abcde"), 100.0, rng.standard_normal((5, 300)) * 10 + 4)
        assert np.abs(average_rereference(rec).samples.mean(axis=0)).max() < 1e-12

    def test_idempotent_and_linear(self, rng):
        x = rng.standard_normal((4, 50))
        y = rng.standard_normal((4, 50))
        ref = lambda a: average_rereference(RawRecording(list("abcd"), 10.0, a)).samples  # noqa: E731
        once = ref(x)
        np.testing.assert_allclose(ref(once), once, atol=1e-14)
        np.testing.assert_allclose(ref(2 * x + 3 * y), 2 * ref(x) + 3 * ref(y), atol=1e-12)

    def test_single_channel(self):
        with pytest.raises(TooFewChannels):
            average_rereference(RawRecording(["a"], 10.0, np.zeros((1, 10))))


class TestResample:
    def test_identity(self, rng):
        rec = RawRecording(["a"], 256.0, rng.standard_normal((1, 512)))
        assert resample(rec, 256.0) is rec

    def test_halving(self, rng):
        out = resample(RawRecording(["a"], 256.0, rng.standard_normal((1, 1024))), 128.0)
        assert out.n_samples == 512 and out.sampling_rate == 128.0

    def test_frequency_preserved(self):
        rec = tone(5.0, fs=256.0, seconds=8.0)
        out = resample(rec, 200.0)
        assert out.n_samples == 1600
        mag = np.abs(np.fft.rfft(out.samples[0]))
        freqs = np.fft.rfftfreq(out.n_samples, 1 / 200.0)
        assert abs(freqs[np.argmax(mag)] - 5.0) <= freqs[1]


class TestSegment:
    @pytest.mark.parametrize("seconds,expected", [(35.0, 3), (10.0, 1), (9.9, 0)])
    def test_counts(self, seconds, expected):
        rec = RawRecording(["a", "b"], 200.0, np.zeros((2, int(round(seconds * 200)))))
        assert len(segment(rec, 10.0)) == expected

    def test_exact_slices(self, rng):
        rec = RawRecording(["a", "b"], 100.0, rng.standard_normal((2, 1234)))
        segs = segment(rec, 2.5)
        joined = np.concatenate([s.data for s in segs], axis=1)
        assert np.array_equal(joined, rec.samples[:, : joined.shape[1]])
        assert all(s.n_samples == 250 for s in segs)


class TestFFTMagnitude:
    def test_dc(self):
        out = window_fft_magnitude(np.ones(8))
        assert out.shape == (5,)
        assert out[0] == pytest.approx(8.0)
        assert np.abs(out[1:]).max() < 1e-12

    @pytest.mark.parametrize("k", [1, 5, 17, 31])
    def test_sinusoid_bin(self, k):
        p = 64
        out = window_fft_magnitude(np.sin(2 * np.pi * k * np.arange(p) / p))
        assert out[k] == pytest.approx(32.0, abs=1e-9)
        assert np.delete(out, k).max() < 1e-9

    def test_odd_length(self, rng):
        x = rng.standard_normal(25)
        brute = np.abs([np.sum(x * np.exp(-2j * np.pi * k * np.arange(25) / 25)) for k in range(13)])
        np.testing.assert_allclose(window_fft_magnitude(x), brute, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 128), st.integers(0, 2**31 - 1))
def test_parseval(half, seed):
    p = 2 * half
    x = np.random.default_rng(seed).standard_normal(p)
    mag = window_fft_magnitude(x)
    rhs = (mag[0] ** 2 + 2 * np.sum(mag[1:-1] ** 2) + mag[-1] ** 2) / p
    assert abs(np.sum(x**2) - rhs) / np.sum(x**2) < 1e-10
