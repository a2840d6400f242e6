"""Full extraction model: codec + speaker net + masker, with embedding refinement.

The forward pass runs the refinement recursion unrolled a fixed number of
times. Iteration 0 conditions the masker on the reference-derived
embedding; each further iteration re-encodes the previous masked latents
through the shared speaker net, fuses old and new embeddings through the
refinement FC, and re-runs the masker. With zero iterations the model has
no refinement FC at all and is the plain single-shot extractor.

`iterative_refine` is the same recursion over opaque extraction/auxiliary
functions with an additive scale instead of the learned fusion:
a_n = a_{n-1} + mu * A(x_{n-1}), x_n = F(y, a_n).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .audio import SAMPLE_RATE, AudioSegment
from .auxnet import AuxConfig, EmbeddingRefiner, SpeakerClassifier, SpeakerEncoder
from .codec import Decoder, Encoder, EncoderConfig, LatentFrames, frame_count
from .extractor import ExtractorConfig, MaskNet, apply_mask

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    aux: AuxConfig = field(default_factory=AuxConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    refine_iters: int = 0
    loss_lambda: float = 0.5

    def __post_init__(self):
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ModelConfig":
        data = dict(data)
        return ModelConfig(
            encoder=EncoderConfig(**data.pop("encoder", {})),
            aux=AuxConfig(**data.pop("aux", {})),
            extractor=ExtractorConfig(**data.pop("extractor", {})),
            **data,
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class GenericIRAConfig:
    mu: float = 1.0
    iterations: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def iterative_refine(y, r, extract_fn, aux_fn, cfg: GenericIRAConfig):
    """Generic refinement recursion; returns the estimate after cfg.iterations."""
    a = aux_fn(r)
    x = extract_fn(y, a)
    for _ in range(cfg.iterations):
        a = a + cfg.mu * aux_fn(x)
        x = extract_fn(y, a)
    return x


@dataclass
class IterationStep:
    """Trace of one refinement iteration."""

    embedding: np.ndarray
    mask: np.ndarray
    latent: LatentFrames
    estimate: AudioSegment


@dataclass
class ExtractionResult:
    iterations: list[IterationStep]

    @property
    def final(self) -> AudioSegment:
        return self.iterations[-1].estimate


class ForwardTrace:
    """Per-iteration tensors from a forward pass (training-side view)."""

    def __init__(self, embeddings, masks, latents, estimates, logits):
        self.embeddings = embeddings
        self.masks = masks
        self.latents = latents
        self.estimates = estimates
        self.logits = logits


class TargetExtractor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.aux.num_speakers is None:
            raise ValueError("num_speakers must be set before building the model")
        self.cfg = cfg
        self.encoder = Encoder(cfg.encoder)
        self.decoder = Decoder(cfg.encoder)
        self.speaker_net = SpeakerEncoder(cfg.encoder.channels, cfg.aux)
        self.classifier = SpeakerClassifier(cfg.aux.embedding_dim, cfg.aux.num_speakers)
        self.mask_net = MaskNet(cfg.encoder.channels, cfg.aux.embedding_dim, cfg.extractor)
        self.refiner = EmbeddingRefiner(cfg.aux.embedding_dim) if cfg.refine_iters >= 1 else None

    def forward(self, mixture: torch.Tensor, reference: torch.Tensor,
                n: int | None = None) -> ForwardTrace:
        """mixture [B, T], reference [B, Tr] -> trace of n+1 iterations."""
        if n is None:
            n = self.cfg.refine_iters
        if n > 0 and self.refiner is None:
            raise ValueError("model was built without a refinement layer; cannot run n > 0")
        length = mixture.shape[-1]
        mix_latent = self.encoder(mixture)
        ref_latent = self.encoder(reference)  # same filterbank: weight-shared twins
        v = self.speaker_net(ref_latent)
        embeddings, masks, latents, estimates = [v], [], [], []
        for i in range(n + 1):
            if i > 0:
                a = self.speaker_net(latents[-1])
                v = self.refiner(embeddings[-1], a)
                embeddings.append(v)
            m = self.mask_net(v, mix_latent)
            d = apply_mask(mix_latent, m)
            masks.append(m)
            latents.append(d)
            estimates.append(self.decoder(d, length))
        return ForwardTrace(embeddings, masks, latents, estimates,
                            self.classifier(embeddings[0]))


def extract(model: TargetExtractor, mixture: AudioSegment, reference: AudioSegment,
            n: int | None = None) -> ExtractionResult:
    """Run one utterance through the model, tracing every iteration."""
    if mixture.sample_rate != SAMPLE_RATE or reference.sample_rate != SAMPLE_RATE:
        raise ValueError("mixture and reference must be 8 kHz")
    enc_cfg = model.cfg.encoder
    if len(reference) < enc_cfg.filter_length:
        raise ValueError(f"reference shorter than one filter length ({enc_cfg.filter_length} samples)")
    frame_count(len(mixture), enc_cfg)  # validates mixture length too
    dtype = next(model.parameters()).dtype
    mix = torch.from_numpy(mixture.samples).to(dtype).unsqueeze(0)
    ref = torch.from_numpy(reference.samples).to(dtype).unsqueeze(0)
    model.eval()
    with torch.no_grad():
        trace = model(mix, ref, n=n)
    steps = []
    for i, (m, d, s) in enumerate(zip(trace.masks, trace.latents, trace.estimates)):
        steps.append(
            IterationStep(
                embedding=trace.embeddings[i][0].numpy().copy(),
                mask=m[0].numpy().copy(),
                latent=LatentFrames(d[0].numpy().copy(), enc_cfg),
                estimate=AudioSegment(s[0].numpy().astype(np.float64)),
            )
        )
    return ExtractionResult(steps)


def count_parameters(module: nn.Module) -> int:
    """Exact count of trainable scalars."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


@dataclass
class CheckpointMeta:
    epoch: int = 0
    train_loss: float = float("nan")
    valid_loss: float = float("nan")
    current_lr: float = float("nan")
    config_hash: str = ""


def save_checkpoint(path, model: TargetExtractor, meta: CheckpointMeta,
                    speakers: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "model_config": model.cfg.to_dict(),
            "state_dict": model.state_dict(),
            "meta": asdict(meta),
            "speakers": list(speakers),
        },
        path,
    )


def load_checkpoint(path) -> tuple[TargetExtractor, CheckpointMeta, list[str]]:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = blob.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    cfg = ModelConfig.from_dict(blob["model_config"])
    model = TargetExtractor(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, CheckpointMeta(**blob["meta"]), list(blob["speakers"])
