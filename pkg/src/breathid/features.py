"""Constant-Q spectrograms, MFCCs and elastic-transform augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dct
from scipy.ndimage import gaussian_filter, map_coordinates

from .audio import Waveform, frame_bounds, frame_signal

MAGNITUDE_FLOOR = 1e-10
MEL_FLOOR = 1e-10


@dataclass(frozen=True)
class CqtConfig:
    """Constant-Q analysis parameters.

    ``f_max`` defaults to the Nyquist frequency. Bins are numbered
    k = 1..K with centre ``f_0 * 2**(k/b)``.
    """

    f_s: float
    f_0: float = 27.5
    f_max: float | None = None
    b: int = 48
    window_kind: str = "hann"

    def __post_init__(self):
        if self.f_max is None:
            object.__setattr__(self, "f_max", self.f_s / 2.0)
        if self.f_s <= 0 or self.f_0 <= 0 or self.b < 1:
            raise ValueError("f_s, f_0 and b must be positive")
        if self.f_max > self.f_s / 2.0 or self.f_max <= self.f_0:
            raise ValueError(f"need f_0 < f_max <= f_s/2, got f_0={self.f_0}, f_max={self.f_max}")
        if self.window_kind not in _WINDOWS:
            raise ValueError(f"unknown window kind {self.window_kind!r}")
        if self.K < 1:
            raise ValueError("configuration yields no frequency bins")

    @property
    def K(self) -> int:
        # small epsilon guards exact octave ratios against log2 round-off
        return int(math.floor(self.b * math.log2(self.f_max / self.f_0) + 1e-9))

    @property
    def Q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.b) - 1.0)

    @cached_property
    def freqs(self) -> np.ndarray:
        k = np.arange(1, self.K + 1)
        # whole octaves via ldexp so that f[k + b] == 2 * f[k] bit for bit
        octaves, step = np.divmod(k, self.b)
        return np.ldexp(self.f_0 * 2.0 ** (step / self.b), octaves)

    @cached_property
    def bandwidths(self) -> np.ndarray:
        return self.freqs * (2.0 ** (1.0 / self.b) - 1.0)

    @cached_property
    def window_lengths(self) -> np.ndarray:
        return np.floor(self.Q * self.f_s / self.freqs + 0.5).astype(np.int64)

    def kernel(self, k: int) -> np.ndarray:
        """Complex analysis kernel w[n] exp(-2j pi n Q / N_k) for bin k (1-based)."""
        n_k = int(self.window_lengths[k - 1])
        n = np.arange(n_k)
        return _WINDOWS[self.window_kind](n_k) * np.exp(-2j * np.pi * n * self.Q / n_k)


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


_WINDOWS = {"hann": _hann, "rect": np.ones}


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray
    freq_axis: np.ndarray
    frame_hop: float
    source_config: CqtConfig | None = None

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "Spectrogram":
        return Spectrogram(values, self.freq_axis, self.frame_hop, self.source_config)


@dataclass(frozen=True)
class MfccConfig:
    n_mel_filters: int = 40
    n_ceps: int = 13
    include_deltas: bool = True
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    pre_emphasis: float = 0.97
    f_low: float = 0.0
    f_high: float | None = None

    def __post_init__(self):
        if self.n_ceps > self.n_mel_filters:
            raise ValueError("n_ceps cannot exceed n_mel_filters")

    @property
    def dim(self) -> int:
        return self.n_ceps * (1 + 2 * int(self.include_deltas))


def _bin_responses(signal: np.ndarray, centers: np.ndarray, cfg: CqtConfig,
                   bins=None) -> np.ndarray:
    """Complex CQT coefficients, shape (len(bins), len(centers))."""
    n_sig = signal.shape[0]
    bins = range(1, cfg.K + 1) if bins is None else bins
    out = np.zeros((len(bins), centers.shape[0]), dtype=np.complex128)
    for row, k in enumerate(bins):
        n_k = int(cfg.window_lengths[k - 1])
        kern = cfg.kernel(k)
        starts = centers - n_k // 2
        # only the window positions that can touch the signal contribute
        lo = int(max(0, -starts.max()))
        hi = int(min(n_k, n_sig - starts.min()))
        if hi <= lo:
            continue
        span = hi - lo
        first = starts + lo
        pad_left = int(max(0, -first.min()))
        pad_right = int(max(0, first.max() + span - n_sig))
        padded = np.concatenate([np.zeros(pad_left), signal, np.zeros(pad_right)])
        idx = first + pad_left
        windows = np.lib.stride_tricks.sliding_window_view(padded, span)[idx]
        acc = windows @ kern[lo:hi]
        if n_k > n_sig:
            # window longer than the whole recording: renormalize by the
            # number of window taps that actually land on samples
            count = np.minimum(starts + n_k, n_sig) - np.maximum(starts, 0)
            norm = np.maximum(count, 1).astype(np.float64)
        else:
            norm = float(n_k)
        out[row] = acc / norm
    return out


def cqt_frame(signal, center: int, cfg: CqtConfig) -> np.ndarray:
    """Constant-Q coefficients of one frame, windows centred on `center`."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0:
        raise ValueError("empty signal")
    return _bin_responses(signal, np.array([int(center)]), cfg)[:, 0]


def frame_centers(w: Waveform, frame_ms: float, hop_ms: float) -> np.ndarray:
    frame_len, starts = frame_bounds(len(w), w.sample_rate, frame_ms, hop_ms)
    return starts + frame_len // 2


def cqt_spectrogram(w: Waveform, cfg: CqtConfig, frame_ms: float = 25.0,
                    hop_ms: float = 10.0) -> Spectrogram:
    """Log-magnitude constant-Q spectrogram, one column per frame."""
    if abs(cfg.f_s - w.sample_rate) > 1e-9:
        raise ValueError(f"config sample rate {cfg.f_s} does not match waveform rate {w.sample_rate}")
    centers = frame_centers(w, frame_ms, hop_ms)
    coeffs = _bin_responses(w.samples, centers, cfg)
    values = np.log(np.maximum(np.abs(coeffs), MAGNITUDE_FLOOR))
    return Spectrogram(values, cfg.freqs.copy(), hop_ms / 1000.0, cfg)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, rate: int, f_low=0.0, f_high=None) -> np.ndarray:
    """Triangular filters on the mel scale, shape (n_filters, n_fft//2 + 1)."""
    f_high = rate / 2.0 if f_high is None else f_high
    mel_pts = np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_filters + 2)
    hz_pts = mel_to_hz(mel_pts)
    fft_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    fb = np.zeros((n_filters, fft_freqs.size))
    for m in range(n_filters):
        left, mid, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - left) / (mid - left)
        down = (right - fft_freqs) / (right - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def deltas(feats: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-width frames with edge replication."""
    n = feats.shape[0]
    padded = np.pad(feats, ((width, width), (0, 0)), mode="edge")
    denom = 2.0 * sum(i * i for i in range(1, width + 1))
    out = np.zeros_like(feats)
    for i in range(1, width + 1):
        out += i * (padded[width + i: width + i + n] - padded[width - i: width - i + n])
    return out / denom


def mfcc_sequence(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """MFCC matrix of shape (frames, cfg.dim)."""
    x = w.samples
    emphasized = np.append(x[:1], x[1:] - cfg.pre_emphasis * x[:-1])
    frames = frame_signal(Waveform(emphasized, w.sample_rate), cfg.frame_ms, cfg.hop_ms)
    frame_len = frames.shape[1]
    n_fft = 1 << max(0, (frame_len - 1).bit_length())
    frames = frames * np.hamming(frame_len)
    # unscaled periodogram: for unit-energy input the energy term c0 dominates
    power = np.abs(np.fft.rfft(frames, n_fft)) ** 2
    fb = mel_filterbank(cfg.n_mel_filters, n_fft, w.sample_rate, cfg.f_low, cfg.f_high)
    log_mel = np.log(np.maximum(power @ fb.T, MEL_FLOOR))
    ceps = dct(log_mel, type=2, axis=1, norm="ortho")[:, : cfg.n_ceps]
    if cfg.include_deltas:
        d1 = deltas(ceps)
        ceps = np.hstack([ceps, d1, deltas(d1)])
    return ceps


def elastic_transform(x: Spectrogram | np.ndarray, sigma: float = 2.0, alpha: float = 15.0,
                      seed: int = 0):
    """Smooth random warp of a 2-D array (or spectrogram).

    Both axes get a displacement field drawn uniform in [-1, 1] per cell,
    Gaussian-smoothed with std `sigma` and scaled by `alpha`; the input is
    then resampled bilinearly with clamped borders.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    values = x.values if isinstance(x, Spectrogram) else np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    shape = values.shape
    dr = gaussian_filter(rng.uniform(-1.0, 1.0, shape), sigma, mode="constant", truncate=4.0) * alpha
    dc = gaussian_filter(rng.uniform(-1.0, 1.0, shape), sigma, mode="constant", truncate=4.0) * alpha
    rows, cols = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    if alpha == 0:
        warped = values.copy()
    else:
        warped = map_coordinates(values, [rows + dr, cols + dc], order=1, mode="nearest")
    return x.with_values(warped) if isinstance(x, Spectrogram) else warped


def augment(spec, n_copies: int = 2, base_seed: int = 0, sigma: float = 2.0,
            alpha: float = 15.0) -> list:
    """Elastic copies of one spectrogram; copy i uses seed base_seed * n_copies + i."""
    return [elastic_transform(spec, sigma, alpha, base_seed * n_copies + i) for i in range(n_copies)]
