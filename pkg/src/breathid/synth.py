"""Synthetic breath corpus: shaped turbulent noise with per-speaker resonances."""

from __future__ import annotations

import csv
import math
import os
import wave
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import PCM_SCALE, Waveform

BAND_LOW = 300.0
BAND_HIGH = 4000.0
TARGET_RMS = 0.1
PEAK_LIMIT = 0.99
JITTER = 0.03


@dataclass(frozen=True)
class Resonance:
    center: float
    bandwidth: float
    gain: float


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    resonances: tuple
    duration_range: tuple = (0.2, 0.6)
    attack: float = 0.15
    decay: float = 0.25

    def validate(self, rate: int = 16000):
        if not 3 <= len(self.resonances) <= 5:
            raise ValueError("a profile needs 3 to 5 resonances")
        centers = sorted(r.center for r in self.resonances)
        for r in self.resonances:
            if not 0 < r.center < rate / 2:
                raise ValueError(f"resonance {r.center} Hz outside (0, {rate / 2})")
            if r.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
        if any(b - a < 50.0 for a, b in zip(centers, centers[1:])):
            raise ValueError("resonance centres must be at least 50 Hz apart")


@dataclass(frozen=True)
class CorpusManifest:
    rows: list
    rate: int
    seed: int
    path: Path | None = None


def _speaker_seed(speaker_id, seed: int) -> np.random.SeedSequence:
    key = zlib.crc32(str(speaker_id).encode("utf-8"))
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key])


def make_speaker_profile(speaker_id, seed: int) -> SpeakerProfile:
    """Deterministic resonance profile for one speaker.

    [300, 4000] Hz is cut into one equal sub-band per resonance; each
    centre is drawn from the middle 60% of its own sub-band so that
    neighbouring peaks stay resolvable.
    """
    rng = np.random.default_rng(_speaker_seed(speaker_id, seed))
    n_res = int(rng.integers(3, 6))
    edges = np.linspace(BAND_LOW, BAND_HIGH, n_res + 1)
    resonances = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        width = hi - lo
        center = rng.uniform(lo + 0.2 * width, hi - 0.2 * width)
        bandwidth = rng.uniform(80.0, 250.0)
        gain = rng.uniform(0.5, 1.0)
        resonances.append(Resonance(float(center), float(bandwidth), float(gain)))
    lo_dur = rng.uniform(0.2, 0.35)
    hi_dur = rng.uniform(lo_dur + 0.1, 0.6)
    return SpeakerProfile(
        speaker_id=str(speaker_id),
        resonances=tuple(resonances),
        duration_range=(float(lo_dur), float(hi_dur)),
        attack=float(rng.uniform(0.1, 0.25)),
        decay=float(rng.uniform(0.2, 0.35)),
    )


def resonator_coefficients(center: float, bandwidth: float, rate: int, gain: float = 1.0):
    """Two-pole resonator scaled to `gain` at its centre frequency."""
    r = math.exp(-math.pi * bandwidth / rate)
    theta = 2.0 * math.pi * center / rate
    a = np.array([1.0, -2.0 * r * math.cos(theta), r * r])
    z = np.exp(-1j * theta)
    peak = abs(1.0 / (a[0] + a[1] * z + a[2] * z * z))
    return np.array([gain / peak]), a


def envelope(n: int, attack: float, decay: float) -> np.ndarray:
    """Raised-cosine attack and decay ramps, zero at both ends."""
    env = np.ones(n)
    n_att = max(2, int(attack * n))
    n_dec = max(2, int(decay * n))
    env[:n_att] = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_att) / n_att)
    env[n - n_dec:] = 0.5 + 0.5 * np.cos(np.pi * (np.arange(n_dec) + 1) / n_dec)
    return env


def quantize(x: np.ndarray) -> np.ndarray:
    """Snap samples onto the 16-bit PCM grid."""
    ints = np.clip(np.round(x * PCM_SCALE), -32768, 32767)
    # + 0.0 turns -0.0 into 0.0 so that the grid matches what a reader returns
    return ints / PCM_SCALE + 0.0


def synth_breath(profile: SpeakerProfile, instance_seed: int, rate: int = 16000) -> Waveform:
    """Render one breath instance of `profile`.

    The result has a fixed RMS of TARGET_RMS (peak-limited) and already
    lies on the 16-bit grid, so a write/read cycle is lossless.
    """
    if rate < 8000:
        raise ValueError("rate must be at least 8000 Hz")
    rng = np.random.default_rng(np.random.SeedSequence(
        [int(instance_seed) & 0xFFFFFFFF, zlib.crc32(profile.speaker_id.encode("utf-8"))]))
    duration = rng.uniform(*profile.duration_range)
    n = int(round(duration * rate))
    x = rng.standard_normal(n)
    for res in profile.resonances:
        center = res.center * (1.0 + rng.uniform(-JITTER, JITTER))
        center = min(center, 0.45 * rate)
        b, a = resonator_coefficients(center, res.bandwidth, rate, res.gain)
        x = lfilter(b, a, x)
    x = x * envelope(n, profile.attack, profile.decay)
    x *= TARGET_RMS / math.sqrt(float(np.mean(x * x)))
    peak = float(np.max(np.abs(x)))
    if peak > PEAK_LIMIT:
        x *= PEAK_LIMIT / peak
    return Waveform(quantize(x), rate)


def write_wav(path, w: Waveform) -> None:
    """Write mono 16-bit PCM; samples are clipped to the representable range."""
    ints = np.clip(np.round(w.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(w.sample_rate))
        fh.writeframes(ints.tobytes())


def speaker_name(index: int) -> str:
    return f"spk{index:03d}"


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "speaker", "split"])
        writer.writerows(rows)


def read_manifest(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["path", "speaker", "split"]:
            raise ValueError(f"{path}: manifest header must be path,speaker,split")
        return [(r["path"], r["speaker"], r["split"]) for r in reader]


def generate_corpus(n_speakers: int, n_instances: int, rate: int = 16000, seed: int = 0,
                    out_dir="corpus", fractions=(0.7, 0.2, 0.1)) -> CorpusManifest:
    """Write `n_speakers * n_instances` WAV files plus ``manifest.csv``.

    Paths in the manifest are relative to `out_dir`.
    """
    from .classify import make_split

    out = Path(out_dir)
    try:
        (out / "wav").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc
    files, speakers = [], []
    for s in range(n_speakers):
        name = speaker_name(s)
        profile = make_speaker_profile(name, seed)
        for i in range(n_instances):
            rel = f"wav/{name}_{i:04d}.wav"
            wav = synth_breath(profile, seed * 1_000_003 + i, rate)
            try:
                write_wav(out / rel, wav)
            except OSError as exc:
                raise OSError(f"failed writing {out / rel}: {exc}") from exc
            files.append(rel)
            speakers.append(name)
    split = make_split(speakers, fractions, seed)
    rows = [(f, spk, tag) for f, spk, tag in zip(files, speakers, split.tags)]
    manifest_path = out / "manifest.csv"
    write_manifest(manifest_path, rows)
    return CorpusManifest(rows, rate, seed, manifest_path)
