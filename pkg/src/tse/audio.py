"""Audio file I/O, fixed-length segmentation, and corpus manifests.

Every waveform in the pipeline is mono 8 kHz. On disk: 16-bit linear PCM
WAV. In memory: float64 samples on the int16 grid scale (value / 32768),
nominal range [-1, 1]. Non-8 kHz input is rejected, never resampled.
"""

from __future__ import annotations

import json
import math
import wave
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np

SAMPLE_RATE = 8000
PCM_SCALE = 32768.0


@dataclass(eq=False)
class AudioSegment:
    """Mono waveform at 8 kHz with finite samples."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono 1-D samples, got shape {self.samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(
                f"unsupported sample rate {self.sample_rate} (pipeline is fixed at {SAMPLE_RATE} Hz)"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def quantize(samples: np.ndarray) -> np.ndarray:
    """Round float samples to the int16 grid (round-half-even, clipped)."""
    q = np.rint(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(q, -32768, 32767).astype(np.int16)


def load_audio(path) -> AudioSegment:
    """Read a mono 16-bit PCM WAV at 8 kHz."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise ValueError(f"multi-channel input not supported: {path} has {wav.getnchannels()} channels")
        if wav.getsampwidth() != 2:
            raise ValueError(f"unsupported sample format in {path}: expected 16-bit PCM")
        if wav.getframerate() != SAMPLE_RATE:
            raise ValueError(f"unsupported sample rate {wav.getframerate()} in {path}: expected {SAMPLE_RATE}")
        raw = wav.readframes(wav.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioSegment(samples, SAMPLE_RATE)


def save_audio(segment: AudioSegment, path) -> None:
    """Write a mono 16-bit PCM WAV at 8 kHz (samples quantized to int16)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = quantize(segment.samples)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(SAMPLE_RATE)
        wav.writeframes(data.astype("<i2").tobytes())


def segment_fixed(segment: AudioSegment, seconds: float) -> list[AudioSegment]:
    """Cut into non-overlapping windows of `seconds`; the final remainder is zero-padded."""
    if seconds <= 0:
        raise ValueError(f"window length must be positive, got {seconds}")
    if len(segment) == 0:
        raise ValueError("cannot segment empty audio")
    window = int(round(seconds * SAMPLE_RATE))
    n = math.ceil(len(segment) / window)
    out = []
    for i in range(n):
        chunk = segment.samples[i * window : (i + 1) * window]
        if len(chunk) < window:
            chunk = np.concatenate([chunk, np.zeros(window - len(chunk))])
        out.append(AudioSegment(chunk, segment.sample_rate))
    return out


@dataclass
class ExampleRecord:
    """One corpus item: the mixture, its target component, and an enrollment utterance."""

    mixture_path: str
    target_path: str
    reference_path: str
    target_speaker_id: str
    interference_speaker_ids: list[str] = field(default_factory=list)
    mix_snr_db: float = 0.0
    noise_snr_db: float | None = None

    def validate(self) -> None:
        if self.reference_path == self.target_path:
            raise ValueError(
                f"reference must be a different utterance than the target: {self.target_path}"
            )
        if self.target_speaker_id in self.interference_speaker_ids:
            raise ValueError(f"target speaker {self.target_speaker_id!r} listed as interference")
        if not math.isfinite(self.mix_snr_db):
            raise ValueError("mix_snr_db must be finite")
        if self.noise_snr_db is not None and not math.isfinite(self.noise_snr_db):
            raise ValueError("noise_snr_db must be finite")


_RECORD_KEYS = tuple(f.name for f in fields(ExampleRecord))


def write_manifest(records: list[ExampleRecord], path) -> None:
    """One JSON object per line, keys exactly the ExampleRecord field names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        rec.validate()
        lines.append(json.dumps(asdict(rec)))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path) -> list[ExampleRecord]:
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
        if not isinstance(data, dict) or set(data) != set(_RECORD_KEYS):
            raise ValueError(f"{path}:{lineno}: manifest keys must be exactly {_RECORD_KEYS}")
        rec = ExampleRecord(**data)
        rec.validate()
        records.append(rec)
    return records


def locate(path_str: str, manifest_path) -> Path:
    """Resolve a manifest-relative path against the manifest's directory."""
    p = Path(path_str)
    return p if p.is_absolute() else Path(manifest_path).parent / p
