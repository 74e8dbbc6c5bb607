import itertools

import numpy as np
import pytest
from scipy.signal import welch

from breathid.audio import load_wav
from breathid.features import CqtConfig, cqt_spectrogram
from breathid.synth import (Resonance, SpeakerProfile, envelope, generate_corpus,
                            make_speaker_profile, read_manifest, resonator_coefficients,
                            speaker_name, synth_breath)


class TestProfiles:
    def test_deterministic(self):
        assert make_speaker_profile("spk001", 3) == make_speaker_profile("spk001", 3)

    def test_ids_differ(self):
        a, b = make_speaker_profile("spk001", 3), make_speaker_profile("spk002", 3)
        diffs = [abs(x.center - y.center) for x, y in zip(a.resonances, b.resonances)]
        assert len(a.resonances) != len(b.resonances) or max(diffs) >= 50

    def test_fifty_profiles_valid(self):
        for i in range(50):
            p = make_speaker_profile(speaker_name(i), 11)
            p.validate(16000)
            assert 3 <= len(p.resonances) <= 5
            for r in p.resonances:
                assert 300 <= r.center <= 4000
                assert 80 <= r.bandwidth <= 250
            assert 0.2 <= p.duration_range[0] < p.duration_range[1] <= 0.6

    def test_validation_rejects(self):
        close = SpeakerProfile("x", (Resonance(500, 100, 1), Resonance(530, 100, 1),
                                     Resonance(2000, 100, 1)))
        with pytest.raises(ValueError):
            close.validate()
        with pytest.raises(ValueError):
            SpeakerProfile("x", (Resonance(500, 100, 1),)).validate()


class TestSynthBreath:
    def test_bitwise_deterministic(self):
        p = make_speaker_profile("spk000", 1)
        assert synth_breath(p, 5).samples.tobytes() == synth_breath(p, 5).samples.tobytes()
        assert synth_breath(p, 5).samples.tobytes() != synth_breath(p, 6).samples.tobytes()

    def test_rate_floor(self):
        with pytest.raises(ValueError):
            synth_breath(make_speaker_profile("spk000", 1), 0, rate=4000)

    def test_duration_in_range(self):
        p = make_speaker_profile("spk003", 2)
        for s in range(10):
            n = len(synth_breath(p, s))
            assert p.duration_range[0] * 16000 - 1 <= n <= p.duration_range[1] * 16000 + 1

    def test_resonator_peak_gain(self):
        b, a = resonator_coefficients(1000.0, 100.0, 16000, gain=0.7)
        z = np.exp(-2j * np.pi * 1000.0 / 16000)
        assert abs(b[0] / (a[0] + a[1] * z + a[2] * z * z)) == pytest.approx(0.7)
        assert abs(a[2]) == pytest.approx(np.exp(-2 * np.pi * 100.0 / 16000))

    def test_spectrum_peaks_near_resonances(self):
        # one bin at 24 bins/octave (2.9%) matches the +-3% per-instance jitter
        cfg = CqtConfig(16000, 110, b=24)
        tol_ratio = 2 ** (1 / cfg.b) - 1
        for i in range(20):
            p = make_speaker_profile(speaker_name(i), 7)
            f, power = welch(synth_breath(p, i).samples, 16000, nperseg=2048)
            peaks = f[np.flatnonzero((power[1:-1] > power[:-2]) & (power[1:-1] > power[2:])) + 1]
            for r in p.resonances:
                tol = r.center * tol_ratio + (f[1] - f[0]) / 2
                assert np.any(np.abs(peaks - r.center) <= tol), (i, r)

    def test_envelope_ends(self):
        env = envelope(1000, 0.15, 0.25)
        assert env[0] < 0.05 and env[-1] < 0.05
        assert env.max() == 1.0
        p = make_speaker_profile("spk004", 3)
        x = synth_breath(p, 2).samples
        assert abs(x[0]) < 0.05 * np.abs(x).max() and abs(x[-1]) < 0.05 * np.abs(x).max()

    def test_level(self):
        x = synth_breath(make_speaker_profile("spk005", 3), 9).samples
        assert np.sqrt(np.mean(x * x)) == pytest.approx(0.1, rel=0.01)
        assert np.abs(x).max() <= 0.99 + 1 / 32768


def test_speakers_are_separable():
    cfg = CqtConfig(16000, 110, b=24)
    means, spreads = [], []
    for s in range(10):
        p = make_speaker_profile(speaker_name(s), 7)
        spectra = np.array([cqt_spectrogram(synth_breath(p, 7 * 1_000_003 + i), cfg).values.mean(axis=1)
                            for i in range(8)])
        centre = spectra.mean(axis=0)
        means.append(centre)
        spreads.append(np.mean(np.linalg.norm(spectra - centre, axis=1)))
    within = float(np.mean(spreads))
    for a, b in itertools.combinations(range(10), 2):
        assert np.linalg.norm(means[a] - means[b]) > within, (a, b)


class TestCorpus:
    def test_ten_by_forty(self, tmp_path):
        m = generate_corpus(10, 40, seed=7, out_dir=tmp_path)
        assert len(m.rows) == 400
        assert len({r[0] for r in m.rows}) == 400
        rows = read_manifest(tmp_path / "manifest.csv")
        assert rows == [tuple(r) for r in m.rows]
        for spk in {r[1] for r in rows}:
            tags = [r[2] for r in rows if r[1] == spk]
            assert (tags.count("train"), tags.count("validation"), tags.count("test")) == (28, 8, 4)
        w = load_wav(tmp_path / rows[0][0])
        assert w.sample_rate == 16000

    def test_regeneration_identical(self, tmp_path):
        generate_corpus(2, 10, seed=3, out_dir=tmp_path / "a")
        generate_corpus(2, 10, seed=3, out_dir=tmp_path / "b")
        for f in sorted((tmp_path / "a").rglob("*")):
            if f.is_file():
                assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()

    def test_manifest_header_checked(self, tmp_path):
        bad = tmp_path / "m.csv"
        bad.write_text("file,label,split\n")
        with pytest.raises(ValueError):
            read_manifest(bad)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            generate_corpus(1, 10, out_dir=blocker / "sub")
