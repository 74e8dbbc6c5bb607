import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from breathid.audio import (ChannelCountError, InputTooShortError, SilentInputError,
                            UnsupportedFormatError, Waveform, energy_normalize, frame_bounds,
                            frame_signal, load_wav)
from breathid.synth import make_speaker_profile, synth_breath, write_wav


def _write_raw(path, ints, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(width)
        fh.setframerate(rate)
        fh.writeframes(np.asarray(ints, dtype=f"<i{width}").tobytes())


class TestLoadWav:
    def test_scaling(self, tmp_path):
        p = tmp_path / "three.wav"
        _write_raw(p, [0, 16384, -32768])
        w = load_wav(p)
        assert w.sample_rate == 16000
        np.testing.assert_array_equal(w.samples, [0.0, 0.5, -1.0])

    def test_stereo_rejected(self, tmp_path):
        p = tmp_path / "stereo.wav"
        _write_raw(p, [0, 1, 2, 3], channels=2)
        with pytest.raises(ChannelCountError, match="unsupported channel count"):
            load_wav(p)

    def test_non_16_bit_rejected(self, tmp_path):
        p = tmp_path / "wide.wav"
        _write_raw(p, [0, 1, 2], width=4)
        with pytest.raises(UnsupportedFormatError):
            load_wav(p)

    def test_float_encoding_rejected(self, tmp_path):
        # IEEE-float WAV (format tag 3)
        data = np.array([0.0, 0.5], dtype="<f4").tobytes()
        fmt = struct.pack("<HHIIHH", 3, 1, 16000, 64000, 4, 32)
        body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        body += b"data" + struct.pack("<I", len(data)) + data
        p = tmp_path / "float.wav"
        p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(UnsupportedFormatError):
            load_wav(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_wav(tmp_path / "nope.wav")

    def test_synth_round_trip_is_bitwise(self, tmp_path):
        w = synth_breath(make_speaker_profile("spk000", 3), 11, 16000)
        write_wav(tmp_path / "b.wav", w)
        back = load_wav(tmp_path / "b.wav")
        assert back.sample_rate == w.sample_rate
        assert back.samples.tobytes() == w.samples.tobytes()


class TestEnergyNormalize:
    def test_constant(self):
        out = energy_normalize(Waveform(np.full(37, 0.5), 8000))
        np.testing.assert_allclose(out.samples, 1.0, rtol=0, atol=1e-12)

    def test_alternating_unchanged(self):
        x = np.array([1.0, -1.0, 1.0, -1.0])
        np.testing.assert_allclose(energy_normalize(Waveform(x, 8000)).samples, x, atol=1e-9)

    def test_silent(self):
        with pytest.raises(SilentInputError, match="silent input"):
            energy_normalize(Waveform(np.zeros(10), 8000))

    @given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_unit_energy_and_idempotent(self, values):
        x = np.array(values)
        if not np.any(np.abs(x) > 1e-100):
            return
        once = energy_normalize(Waveform(x, 16000))
        assert abs(np.mean(once.samples ** 2) - 1.0) < 1e-9
        twice = energy_normalize(once)
        np.testing.assert_allclose(twice.samples, once.samples, rtol=1e-12, atol=1e-12)


class TestFrameSignal:
    def test_exact_fit(self):
        frames = frame_signal(Waveform(np.ones(400), 16000), 25, 10)
        assert frames.shape == (1, 400)

    def test_two_frames(self):
        x = np.arange(560, dtype=float)
        frames = frame_signal(Waveform(x, 16000), 25, 10)
        assert frames.shape == (2, 400)
        np.testing.assert_array_equal(frames[0], x[:400])
        np.testing.assert_array_equal(frames[1], x[160:560])

    def test_hop_longer_than_frame(self):
        with pytest.raises(ValueError):
            frame_signal(Waveform(np.ones(1000), 16000), 10, 25)

    def test_too_short(self):
        with pytest.raises(InputTooShortError, match="input too short"):
            frame_signal(Waveform(np.ones(100), 16000), 25, 10)

    @given(st.integers(480, 5000), st.sampled_from([(25, 10), (20, 10), (30, 15), (25, 25)]))
    @settings(max_examples=200, deadline=None)
    def test_frames_cover_signal_within_one_hop(self, n, frame_hop):
        frame_ms, hop_ms = frame_hop
        frame_len, starts = frame_bounds(n, 16000, frame_ms, hop_ms)
        hop_len = round(hop_ms * 16)
        covered = starts[-1] + frame_len
        assert starts[0] == 0
        assert covered >= n - hop_len + 1
        assert covered - frame_len < n
