import math

import numpy as np
import pytest

from tse.audio import AudioSegment, load_audio, locate, read_manifest
from tse.simulate import (
    MixSpec,
    SimConfig,
    SpeakerProfile,
    build_corpus,
    generate_profiles,
    measured_snr_db,
    mix_at_snr,
    synth_noise,
    synth_utterance,
)


def xcorr_peak(a, b):
    n = len(a) + len(b) - 1
    spec = np.fft.rfft(a, n) * np.conj(np.fft.rfft(b, n))
    xc = np.fft.irfft(spec, n)
    return float(np.abs(xc).max() / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestProfiles:
    def test_deterministic_and_distinct(self):
        a = generate_profiles(6, seed=3)
        b = generate_profiles(6, seed=3)
        assert [p.speaker_id for p in a] == [p.speaker_id for p in b]
        assert all(pa.f0_base == pb.f0_base for pa, pb in zip(a, b))
        f0s = [p.f0_base for p in a]
        assert len(set(f0s)) == len(f0s)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError, match="f0_base"):
            SpeakerProfile("x", 50.0, 10.0, -6.0, [500, 1500, 2500], 1)
        with pytest.raises(ValueError, match="formant"):
            SpeakerProfile("x", 120.0, 10.0, -6.0, [500, 400, 2500], 1)
        with pytest.raises(ValueError, match="formant"):
            SpeakerProfile("x", 120.0, 10.0, -6.0, [500, 1500, 4200], 1)


class TestSynthUtterance:
    def test_bit_identical_repeat(self):
        prof = generate_profiles(1, seed=5)[0]
        a = synth_utterance(prof, 1.5, 42)
        b = synth_utterance(prof, 1.5, 42)
        assert np.array_equal(a.samples, b.samples)

    def test_two_seconds_is_16000_samples(self):
        prof = generate_profiles(1, seed=5)[0]
        assert len(synth_utterance(prof, 2.0, 0)) == 16000

    def test_rms_normalized(self):
        prof = generate_profiles(1, seed=5)[0]
        u = synth_utterance(prof, 1.0, 9)
        assert math.sqrt(float(np.mean(u.samples**2))) == pytest.approx(0.1, rel=1e-9)

    def test_different_seeds_are_decorrelated(self):
        prof = generate_profiles(1, seed=5)[0]
        for s1, s2 in [(0, 1), (2, 3), (10, 99)]:
            a = synth_utterance(prof, 2.0, s1)
            b = synth_utterance(prof, 2.0, s2)
            assert xcorr_peak(a.samples, b.samples) < 0.9

    def test_bad_duration(self):
        prof = generate_profiles(1, seed=5)[0]
        with pytest.raises(ValueError, match="duration"):
            synth_utterance(prof, 0.0, 1)


class TestMixAtSnr:
    def test_equal_power_zero_snr_is_identity_gain(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(4000) * 0.05
        sig = AudioSegment(x)
        other = AudioSegment(x[::-1].copy())  # same power, different signal
        mixture, scaled = mix_at_snr(sig, other, 0.0)
        assert np.allclose(scaled.samples, other.samples, rtol=0, atol=1e-15)
        assert np.array_equal(mixture.samples, sig.samples + scaled.samples)

    def test_requested_snr_is_realized(self):
        rng = np.random.default_rng(3)
        for snr in (-7.3, 0.0, 2.5, 11.0):
            sig = AudioSegment(rng.standard_normal(3000) * 0.1)
            other = AudioSegment(rng.standard_normal(3000) * 0.03)
            _, scaled = mix_at_snr(sig, other, snr)
            assert measured_snr_db(sig.samples, scaled.samples) == pytest.approx(snr, abs=1e-6)

    def test_zero_energy_rejected(self):
        sig = AudioSegment(np.ones(100) * 0.1)
        with pytest.raises(ValueError, match="zero-energy"):
            mix_at_snr(sig, AudioSegment(np.zeros(100)), 0.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            mix_at_snr(AudioSegment(np.ones(10) * 0.1), AudioSegment(np.ones(11) * 0.1), 0.0)


class TestMixSpec:
    def test_needs_interferer(self):
        prof = generate_profiles(2, seed=1)
        with pytest.raises(ValueError, match="interferer"):
            MixSpec(prof[0], [], 0.0, None, 1.0)


def small_corpus(tmp_path, **overrides):
    kwargs = dict(duration_s=0.5, reference_s=0.5, test_speakers=2, seed=11)
    kwargs.update(overrides)
    cfg = SimConfig(**kwargs)
    profiles = generate_profiles(6, seed=cfg.seed)
    manifests = build_corpus(profiles, 4, 2, 3, cfg, tmp_path)
    return cfg, manifests


class TestBuildCorpus:
    def test_records_satisfy_invariants(self, tmp_path):
        _, manifests = small_corpus(tmp_path)
        for path in manifests.values():
            for rec in read_manifest(path):
                assert rec.target_speaker_id not in rec.interference_speaker_ids
                assert rec.reference_path != rec.target_path

    def test_open_condition_split(self, tmp_path):
        _, manifests = small_corpus(tmp_path)
        train_ids = {r.target_speaker_id for r in read_manifest(manifests["train"])}
        test_ids = {r.target_speaker_id for r in read_manifest(manifests["test"])}
        assert train_ids & test_ids == set()

    def test_snr_remeasured_from_files(self, tmp_path):
        _, manifests = small_corpus(tmp_path, noise=True)
        for split, manifest in manifests.items():
            for rec in read_manifest(manifest):
                target = load_audio(locate(rec.target_path, manifest)).samples
                interf_name = rec.mixture_path.replace("_mix.wav", "_interf.wav")
                if rec.target_path.endswith("_interf.wav"):
                    interf_name = rec.mixture_path.replace("_mix.wav", "_target.wav")
                interf = load_audio(locate(interf_name, manifest)).samples
                assert measured_snr_db(target, interf) == pytest.approx(rec.mix_snr_db, abs=1e-6)

    def test_mixture_is_exact_sum(self, tmp_path):
        _, manifests = small_corpus(tmp_path, noise=True)
        manifest = manifests["train"]
        for rec in read_manifest(manifest):
            mix = load_audio(locate(rec.mixture_path, manifest)).samples
            total = load_audio(locate(rec.target_path, manifest)).samples.copy()
            total += load_audio(locate(rec.mixture_path.replace("_mix", "_interf"), manifest)).samples
            total += load_audio(locate(rec.mixture_path.replace("_mix", "_noise"), manifest)).samples
            assert np.array_equal(mix, total)

    def test_byte_identical_regeneration(self, tmp_path):
        _, m1 = small_corpus(tmp_path / "a")
        _, m2 = small_corpus(tmp_path / "b")
        files1 = sorted((tmp_path / "a").rglob("*"))
        files2 = sorted((tmp_path / "b").rglob("*"))
        assert [f.name for f in files1 if f.is_file()] == [f.name for f in files2 if f.is_file()]
        for f1, f2 in zip(files1, files2):
            if f1.is_file():
                assert f1.read_bytes() == f2.read_bytes(), f1.name

    def test_both_targets_expansion(self, tmp_path):
        cfg = SimConfig(duration_s=0.5, reference_s=0.5, test_speakers=0, seed=4,
                        both_targets=True)
        profiles = generate_profiles(4, seed=4)
        manifests = build_corpus(profiles, 3, 1, 1, cfg, tmp_path)
        records = read_manifest(manifests["train"])
        assert len(records) == 6
        by_mix = {}
        for rec in records:
            by_mix.setdefault(rec.mixture_path, []).append(rec)
        for pair in by_mix.values():
            assert len(pair) == 2
            assert pair[0].target_speaker_id == pair[1].interference_speaker_ids[0]

    def test_too_few_profiles(self, tmp_path):
        with pytest.raises(ValueError, match="at least 2"):
            build_corpus(generate_profiles(1, seed=0), 1, 1, 1,
                         SimConfig(test_speakers=0), tmp_path)

    def test_noise_snr_recorded(self, tmp_path):
        _, manifests = small_corpus(tmp_path, noise=True)
        manifest = manifests["valid"]
        for rec in read_manifest(manifest):
            assert rec.noise_snr_db is not None
            speech = load_audio(locate(rec.target_path, manifest)).samples.copy()
            speech += load_audio(locate(rec.mixture_path.replace("_mix", "_interf"), manifest)).samples
            noise = load_audio(locate(rec.mixture_path.replace("_mix", "_noise"), manifest)).samples
            assert measured_snr_db(speech, noise) == pytest.approx(rec.noise_snr_db, abs=1e-6)


class TestSynthNoise:
    def test_deterministic(self):
        assert np.array_equal(synth_noise(0.5, 3).samples, synth_noise(0.5, 3).samples)

    def test_rms(self):
        u = synth_noise(1.0, 8)
        assert math.sqrt(float(np.mean(u.samples**2))) == pytest.approx(0.1, rel=1e-9)
