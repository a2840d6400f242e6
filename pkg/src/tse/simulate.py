"""Desk-scale synthetic two-speaker corpus: speaker models, mixing, manifests.

Clean speech stand-ins are harmonic utterances: a random F0 trajectory
excites a harmonic series shaped by per-speaker spectral tilt, filtered
through the speaker's three formant resonators, gated by a randomized
voiced/pause energy envelope, RMS-normalized to 0.1. The optional noise
track is pink noise with a random band emphasis.

Exactness contract: every component WAV is quantized to the int16 grid
first, the manifest SNRs are measured on the quantized components, and
each mixture file is the integer-exact sum of its stored components.
Component files sit beside the mixture: ex######_{mix,target,interf,
ref,refb,noise}.wav.

All randomness fans out of (seed, split, example_index) so regeneration
is byte-identical and examples are independent of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import (
    SAMPLE_RATE,
    AudioSegment,
    ExampleRecord,
    PCM_SCALE,
    quantize,
    save_audio,
    write_manifest,
)

SYNTH_RMS = 0.1
PEAK_HEADROOM = 0.97


@dataclass
class SpeakerProfile:
    """Acoustic parameters of one synthetic speaker."""

    speaker_id: str
    f0_base: float
    f0_range: float
    spectral_tilt: float
    formant_centers: list[float]
    seed: int

    def __post_init__(self):
        if not 70.0 <= self.f0_base <= 300.0:
            raise ValueError(f"f0_base {self.f0_base} outside [70, 300] Hz")
        fc = list(self.formant_centers)
        if len(fc) != 3 or any(b <= a for a, b in zip(fc, fc[1:])) or fc[-1] >= 4000.0:
            raise ValueError(f"formant_centers must be 3 increasing values below 4 kHz, got {fc}")


@dataclass
class MixSpec:
    """Recipe for one mixture: who talks, at what levels, for how long."""

    target: SpeakerProfile
    interferers: list[SpeakerProfile]
    mix_snr_db: float
    noise_snr_db: float | None
    duration_s: float

    def __post_init__(self):
        if len(self.interferers) < 1:
            raise ValueError("need at least one interferer")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")


@dataclass
class SimConfig:
    """Corpus generation knobs (defaults documented in the README)."""

    snr_range: tuple[float, float] = (-5.0, 5.0)
    noise: bool = False
    noise_snr_range: tuple[float, float] = (-3.0, 6.0)
    duration_s: float = 4.0
    reference_s: float = 4.0
    test_speakers: int = 2
    both_targets: bool = False
    seed: int = 0
    # corpus sizing used by the CLI (build_corpus takes explicit counts)
    profiles: int = 10
    n_train: int = 50
    n_valid: int = 10
    n_test: int = 10


def generate_profiles(n: int, seed: int) -> list[SpeakerProfile]:
    """n distinct speaker profiles drawn deterministically from `seed`."""
    profiles = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1000 + i]))
        profiles.append(
            SpeakerProfile(
                speaker_id=f"spk{i:03d}",
                f0_base=float(rng.uniform(85.0, 255.0)),
                f0_range=float(rng.uniform(8.0, 30.0)),
                spectral_tilt=float(rng.uniform(-12.0, -4.0)),
                formant_centers=[
                    float(rng.uniform(300.0, 900.0)),
                    float(rng.uniform(1000.0, 2200.0)),
                    float(rng.uniform(2400.0, 3400.0)),
                ],
                seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return profiles


def _resonator(freq_hz: float, bandwidth_hz: float):
    r = math.exp(-math.pi * bandwidth_hz / SAMPLE_RATE)
    omega = 2.0 * math.pi * freq_hz / SAMPLE_RATE
    b = [1.0 - r]
    a = [1.0, -2.0 * r * math.cos(omega), r * r]
    return b, a


def synth_utterance(profile: SpeakerProfile, duration_s: float, seed: int) -> AudioSegment:
    """Deterministic synthetic utterance for (profile, duration, seed)."""
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * SAMPLE_RATE))
    rng = np.random.default_rng(np.random.SeedSequence([profile.seed, seed]))

    # F0 trajectory: control points every 200 ms, linear interpolation
    n_ctrl = max(2, n // (SAMPLE_RATE // 5) + 2)
    ctrl = rng.uniform(profile.f0_base - profile.f0_range,
                       profile.f0_base + profile.f0_range, size=n_ctrl)
    ctrl = np.clip(ctrl, 50.0, 350.0)
    f0 = np.interp(np.arange(n), np.linspace(0, n - 1, n_ctrl), ctrl)

    # harmonic series with per-speaker tilt, capped below Nyquist
    n_harm = max(1, int(3700.0 / float(f0.max())))
    phase = 2.0 * math.pi * np.cumsum(f0) / SAMPLE_RATE
    tilt_exp = profile.spectral_tilt / (20.0 * math.log10(2.0))
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        x += h**tilt_exp * np.sin(h * phase + rng.uniform(0, 2 * math.pi))

    # formant shaping: cascade of three resonators
    for freq, bw in zip(profile.formant_centers, (90.0, 120.0, 160.0)):
        b, a = _resonator(freq, bw * float(rng.uniform(0.8, 1.3)))
        x = lfilter(b, a, x)

    # voiced/pause gating with 10 ms cosine ramps and per-burst gains
    env = np.zeros(n)
    ramp = SAMPLE_RATE // 100
    t = 0
    first = True
    while t < n:
        voiced = int(rng.uniform(0.15, 0.45) * SAMPLE_RATE)
        pause = int(rng.uniform(0.04, 0.18) * SAMPLE_RATE)
        if first:
            pause_first = 0 if n <= SAMPLE_RATE // 4 else int(rng.uniform(0.0, 0.05) * SAMPLE_RATE)
            t += pause_first
            first = False
        gain = rng.uniform(0.55, 1.0)
        seg = np.ones(min(voiced, n - t)) * gain
        if len(seg) > 2 * ramp:
            win = 0.5 - 0.5 * np.cos(np.linspace(0, math.pi, ramp))
            seg[:ramp] *= win
            seg[-ramp:] *= win[::-1]
        env[t : t + len(seg)] = seg
        t += voiced + pause
    if not env.any():
        env[:] = 1.0

    x = x * env + rng.standard_normal(n) * 0.004 * env
    rms = math.sqrt(float(np.mean(x * x)))
    x *= SYNTH_RMS / rms
    return AudioSegment(x)


def synth_noise(duration_s: float, seed: int) -> AudioSegment:
    """Pink noise with a random band emphasis, RMS 0.1."""
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * SAMPLE_RATE))
    rng = np.random.default_rng(np.random.SeedSequence([987654321, seed]))
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 30.0))
    shape[0] = 0.0
    fc = math.exp(rng.uniform(math.log(200.0), math.log(3000.0)))
    sigma_oct = rng.uniform(0.5, 1.5)
    gain = 10.0 ** (rng.uniform(3.0, 12.0) / 20.0)
    with np.errstate(divide="ignore"):
        octaves = np.log2(np.maximum(freqs, 1.0) / fc)
    shape *= 1.0 + (gain - 1.0) * np.exp(-(octaves**2) / (2.0 * sigma_oct**2))
    x = np.fft.irfft(spectrum * shape, n=n)
    rms = math.sqrt(float(np.mean(x * x)))
    x *= SYNTH_RMS / rms
    return AudioSegment(x)


def _sum_square(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def measured_snr_db(signal: np.ndarray, other: np.ndarray) -> float:
    return 10.0 * math.log10(_sum_square(signal) / _sum_square(other))


def mix_at_snr(signal: AudioSegment, other: AudioSegment, snr_db: float):
    """Scale `other` so the signal-to-other ratio is exactly `snr_db`; return (mixture, scaled_other)."""
    if len(signal) != len(other):
        raise ValueError(f"length mismatch: {len(signal)} vs {len(other)}")
    p_sig = _sum_square(signal.samples)
    p_oth = _sum_square(other.samples)
    if p_sig == 0.0 or p_oth == 0.0:
        raise ValueError("zero-energy input")
    g = math.sqrt(p_sig / (p_oth * 10.0 ** (snr_db / 10.0)))
    scaled = AudioSegment(g * other.samples)
    return AudioSegment(signal.samples + scaled.samples), scaled


def _grid(q16: np.ndarray) -> np.ndarray:
    return q16.astype(np.float64) / PCM_SCALE


@dataclass
class _RenderedExample:
    record: ExampleRecord
    extra_record: ExampleRecord | None


def _render_example(spec: MixSpec, out_dir: Path, stem: str,
                    rng: np.random.Generator, cfg: SimConfig) -> _RenderedExample:
    target_prof = spec.target
    interf_prof = spec.interferers[0]
    seed_t = int(rng.integers(0, 2**31 - 1))
    seed_i = int(rng.integers(0, 2**31 - 1))
    seed_r = int(rng.integers(0, 2**31 - 1))
    while seed_r == seed_t:
        seed_r = int(rng.integers(0, 2**31 - 1))

    t = synth_utterance(target_prof, spec.duration_s, seed_t)
    i = synth_utterance(interf_prof, spec.duration_s, seed_i)
    ref = synth_utterance(target_prof, cfg.reference_s, seed_r)

    _, i_scaled = mix_at_snr(t, i, spec.mix_snr_db)
    components = [t.samples, i_scaled.samples]
    if spec.noise_snr_db is not None:
        noise = synth_noise(spec.duration_s, int(rng.integers(0, 2**31 - 1)))
        speech_mix = t.samples + i_scaled.samples
        g_n = math.sqrt(_sum_square(speech_mix) /
                        (_sum_square(noise.samples) * 10.0 ** (spec.noise_snr_db / 10.0)))
        components.append(g_n * noise.samples)

    # quantize components to the int16 grid, with shared pre-quantization headroom
    peak = max(float(np.abs(c).max()) for c in [sum(components)] + components)
    if peak > PEAK_HEADROOM:
        scale = PEAK_HEADROOM / peak
        components = [c * scale for c in components]
    q = [quantize(c) for c in components]
    mix_q = np.sum([c.astype(np.int32) for c in q], axis=0)
    if np.abs(mix_q).max() > 32767:
        raise RuntimeError("mixture clipped after quantization; headroom too small")
    mix_q = mix_q.astype(np.int16)

    names = {"mix": mix_q, "target": q[0], "interf": q[1]}
    if len(q) == 3:
        names["noise"] = q[2]
    paths = {}
    for kind, data in names.items():
        rel = f"{stem}_{kind}.wav"
        save_audio(AudioSegment(_grid(data)), out_dir / rel)
        paths[kind] = rel
    ref_rel = f"{stem}_ref.wav"
    save_audio(ref, out_dir / ref_rel)

    snr_meas = measured_snr_db(_grid(q[0]), _grid(q[1]))
    noise_meas = None
    if len(q) == 3:
        noise_meas = measured_snr_db(_grid(q[0]) + _grid(q[1]), _grid(q[2]))

    record = ExampleRecord(
        mixture_path=paths["mix"],
        target_path=paths["target"],
        reference_path=ref_rel,
        target_speaker_id=target_prof.speaker_id,
        interference_speaker_ids=[interf_prof.speaker_id],
        mix_snr_db=snr_meas,
        noise_snr_db=noise_meas,
    )

    extra = None
    if cfg.both_targets:
        ref_b = synth_utterance(interf_prof, cfg.reference_s, int(rng.integers(0, 2**31 - 1)))
        refb_rel = f"{stem}_refb.wav"
        save_audio(ref_b, out_dir / refb_rel)
        extra = ExampleRecord(
            mixture_path=paths["mix"],
            target_path=paths["interf"],
            reference_path=refb_rel,
            target_speaker_id=interf_prof.speaker_id,
            interference_speaker_ids=[target_prof.speaker_id],
            mix_snr_db=measured_snr_db(_grid(q[1]), _grid(q[0])),
            noise_snr_db=noise_meas,
        )
    return _RenderedExample(record, extra)


def build_corpus(profiles: list[SpeakerProfile], n_train: int, n_valid: int, n_test: int,
                 config: SimConfig, out_dir) -> dict[str, Path]:
    """Synthesize the three splits under out_dir; returns split -> manifest path.

    Test examples draw speakers from the held-out tail of `profiles`
    (`config.test_speakers` of them) so test speakers never appear in
    train or valid (open condition). Set test_speakers=0 for a closed
    test split.
    """
    if len(profiles) < 2:
        raise ValueError("need at least 2 speaker profiles")
    if config.test_speakers < 0 or config.test_speakers >= len(profiles):
        raise ValueError("test_speakers must leave at least one training speaker")
    out_dir = Path(out_dir)
    if config.test_speakers > 0:
        main_pool = profiles[: len(profiles) - config.test_speakers]
        test_pool = profiles[len(profiles) - config.test_speakers :]
    else:
        main_pool = profiles
        test_pool = profiles
    counts = {"train": n_train, "valid": n_valid, "test": n_test}
    pools = {"train": main_pool, "valid": main_pool, "test": test_pool}
    manifests = {}
    for split_idx, (split, count) in enumerate(counts.items()):
        pool = pools[split]
        if count > 0 and len(pool) < 2:
            raise ValueError(f"{split} split needs at least 2 speakers, have {len(pool)}")
        records = []
        for idx in range(count):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, split_idx, idx]))
            pair = rng.choice(len(pool), size=2, replace=False)
            target, interferer = pool[pair[0]], pool[pair[1]]
            spec = MixSpec(
                target=target,
                interferers=[interferer],
                mix_snr_db=float(rng.uniform(*config.snr_range)),
                noise_snr_db=float(rng.uniform(*config.noise_snr_range)) if config.noise else None,
                duration_s=config.duration_s,
            )
            rendered = _render_example(spec, out_dir, f"{split}/ex{idx:06d}", rng, config)
            records.append(rendered.record)
            if rendered.extra_record is not None:
                records.append(rendered.extra_record)
        manifest_path = out_dir / f"{split}.jsonl"
        write_manifest(records, manifest_path)
        manifests[split] = manifest_path
    return manifests
