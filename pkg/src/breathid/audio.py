"""Waveform loading, energy normalization and framing."""

from __future__ import annotations

import math
import os
import wave
from dataclasses import dataclass

import numpy as np

PCM_SCALE = 32768.0


class AudioError(ValueError):
    """Base class for audio input problems."""


class UnsupportedFormatError(AudioError):
    pass


class ChannelCountError(AudioError):
    pass


class SilentInputError(AudioError):
    pass


class InputTooShortError(AudioError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioError("waveform samples must be one-dimensional")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def load_wav(path) -> Waveform:
    """Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        with wave.open(path, "rb") as fh:
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        # the stdlib reader rejects anything that is not integer PCM
        raise UnsupportedFormatError(f"{path}: unsupported encoding ({exc})") from exc
    except EOFError as exc:
        raise UnsupportedFormatError(f"{path}: truncated or empty RIFF container") from exc
    if n_channels != 1:
        raise ChannelCountError(f"{path}: unsupported channel count {n_channels}")
    if width != 2:
        raise UnsupportedFormatError(
            f"{path}: unsupported sample width {8 * width} bits, expected 16-bit PCM")
    ints = np.frombuffer(raw, dtype="<i2")
    return Waveform(ints.astype(np.float64) / PCM_SCALE, rate)


def energy_normalize(w: Waveform) -> Waveform:
    """Scale the signal to unit mean-square amplitude."""
    x = w.samples
    if x.size == 0 or not np.any(x):
        raise SilentInputError("silent input: cannot energy-normalize an all-zero signal")
    gain = 1.0 / math.sqrt(float(np.mean(x * x)))
    return Waveform(x * gain, w.sample_rate)


def _ms_to_samples(ms: float, rate: int) -> int:
    return int(math.floor(ms * rate / 1000.0 + 0.5))


def frame_bounds(n_samples: int, rate: int, frame_ms: float, hop_ms: float):
    """Return (frame_len, starts) for a signal of `n_samples` samples.

    A trailing frame is added (zero-padded) when at least one hop's worth
    of samples remains after the last full frame.
    """
    if not 0 < hop_ms <= frame_ms:
        raise ValueError(f"need 0 < hop_ms <= frame_ms, got hop={hop_ms}, frame={frame_ms}")
    frame_len = _ms_to_samples(frame_ms, rate)
    hop_len = _ms_to_samples(hop_ms, rate)
    if frame_len < 1 or hop_len < 1:
        raise ValueError("frame and hop must span at least one sample")
    if n_samples < frame_len:
        raise InputTooShortError(
            f"input too short: {n_samples} samples, one frame needs {frame_len}")
    n_frames = (n_samples - frame_len) // hop_len + 1
    covered = _ms_to_samples((n_frames - 1) * hop_ms, rate) + frame_len
    if n_samples - covered >= hop_len:
        n_frames += 1
    starts = np.array([_ms_to_samples(t * hop_ms, rate) for t in range(n_frames)], dtype=np.int64)
    return frame_len, starts


def frame_signal(w: Waveform, frame_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Cut the waveform into overlapping frames, one per row."""
    x = w.samples
    frame_len, starts = frame_bounds(x.shape[0], w.sample_rate, frame_ms, hop_ms)
    need = int(starts[-1]) + frame_len
    padded = np.zeros(max(need, x.shape[0]))
    padded[: x.shape[0]] = x
    idx = starts[:, None] + np.arange(frame_len)[None, :]
    return padded[idx]
