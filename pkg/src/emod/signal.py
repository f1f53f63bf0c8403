"""EEG preprocessing: band-pass, average reference, resampling, segmentation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy import signal as sps

from .exceptions import InvalidBand, TooFewChannels

DEFAULT_LOW_HZ = 0.3
DEFAULT_HIGH_HZ = 49.0
FILTER_ORDER = 4


@dataclass(frozen=True)
class RawRecording:
    channels: tuple
    sampling_rate: float
    samples: np.ndarray
    subject_id: int = 0
    # samples within one filter settling time of either edge; kept, not cut
    edge_samples: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"samples must be (C, N), got shape {samples.shape}")
        if len(self.channels) != samples.shape[0]:
            raise ValueError(f"{len(self.channels)} channel names for {samples.shape[0]} rows")
        if not self.sampling_rate > 0:
            raise ValueError("sampling_rate must be positive")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class EegSegment:
    data: np.ndarray
    sampling_rate: float
    channels: tuple
    dataset_id: str = ""
    subject_id: int = 0
    label: Any = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"segment data must be (C, T), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("segment contains NaN or Inf")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


def bandpass(x: RawRecording, low_hz: float = DEFAULT_LOW_HZ, high_hz: float = DEFAULT_HIGH_HZ) -> RawRecording:
    """Zero-phase Butterworth band-pass (order 4, applied forward and backward).

    Edges are reflection-padded by one second.
    """
    nyq = x.sampling_rate / 2.0
    if not (0 < low_hz < high_hz < nyq):
        raise InvalidBand(f"need 0 < {low_hz} < {high_hz} < {nyq} (Nyquist)")
    sos = sps.butter(FILTER_ORDER, [low_hz, high_hz], btype="bandpass", fs=x.sampling_rate, output="sos")
    pad = min(int(round(x.sampling_rate)), x.n_samples - 1)
    out = sps.sosfiltfilt(sos, x.samples, axis=-1, padtype="even" if pad > 0 else None, padlen=max(pad, 0))
    settle = int(np.ceil(x.sampling_rate / low_hz))
    return replace(x, samples=out, edge_samples=min(settle, x.n_samples // 2))


def average_rereference(x: RawRecording) -> RawRecording:
    if x.samples.shape[0] < 2:
        raise TooFewChannels("average reference needs at least two channels")
    return replace(x, samples=x.samples - x.samples.mean(axis=0, keepdims=True))


def resample(x: RawRecording, target_hz: float) -> RawRecording:
    """FFT-domain resampling; output length is ``floor(N * target / source)``."""
    if not target_hz > 0:
        raise ValueError("target_hz must be positive")
    if target_hz == x.sampling_rate:
        return x
    n_out = int(np.floor(x.n_samples * target_hz / x.sampling_rate))
    out = sps.resample(x.samples, n_out, axis=-1)
    return replace(x, samples=out, sampling_rate=float(target_hz), edge_samples=0)


def segment(x: RawRecording, seconds: float, dataset_id: str = "", label=None) -> list[EegSegment]:
    """Cut into non-overlapping windows; the trailing remainder is dropped."""
    width = int(round(seconds * x.sampling_rate))
    if width < 1:
        raise ValueError("window shorter than one sample")
    count = x.n_samples // width
    return [
        EegSegment(
            data=x.samples[:, k * width : (k + 1) * width],
            sampling_rate=x.sampling_rate,
            channels=x.channels,
            dataset_id=dataset_id,
            subject_id=x.subject_id,
            label=label,
        )
        for k in range(count)
    ]


def window_fft_magnitude(x: np.ndarray) -> np.ndarray:
    """Unnormalised magnitude of the real DFT along the last axis."""
    x = np.asarray(x)
    if x.shape[-1] < 2:
        raise ValueError("window needs at least two samples")
    return np.abs(np.fft.rfft(x, axis=-1))


def preprocess(x: RawRecording, low_hz=DEFAULT_LOW_HZ, high_hz=DEFAULT_HIGH_HZ, target_hz=None) -> RawRecording:
    """Band-pass, re-reference and optionally resample, in that order."""
    out = average_rereference(bandpass(x, low_hz, high_hz))
    if target_hz is not None:
        out = resample(out, target_hz)
    return out
