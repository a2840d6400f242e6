"""Speaker embedding network: residual conv trunk, classifier head, refinement FC.

One SpeakerEncoder instance embeds both the reference latents and the
fed-back masked-mixture latents (shared parameters). Normalization inside
the residual blocks is global layer norm, so the trunk has no train/eval
behavior split and tolerates the different value distributions of the two
input kinds. Mean pooling over time collapses frames to one vector per
utterance before the projection to the embedding dimension.

The refinement layer fuses the previous embedding with a freshly
re-encoded one through a single affine map on their concatenation:
v_new = concat(v_prev, a_new) @ W + B with W [2D x D], B [D].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .layers import GlobalLayerNorm

NORM_KINDS = ("global_layer_norm",)


@dataclass
class AuxConfig:
    resnet_blocks: int = 3
    block_channels: int = 128
    embedding_dim: int = 128
    num_speakers: int | None = None
    norm_kind: str = "global_layer_norm"

    def __post_init__(self):
        if self.resnet_blocks < 1:
            raise ValueError("need at least one residual block")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}; choose from {NORM_KINDS}")


class ResidualBlock(nn.Module):
    """Pre-activation residual block: two kernel-3 convs along time."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm1 = GlobalLayerNorm(channels)
        self.act1 = nn.PReLU()
        self.conv1 = nn.Conv1d(channels, channels, 3, padding=1)
        self.norm2 = GlobalLayerNorm(channels)
        self.act2 = nn.PReLU()
        self.conv2 = nn.Conv1d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv1(self.act1(self.norm1(x)))
        y = self.conv2(self.act2(self.norm2(y)))
        return x + y


class SpeakerEncoder(nn.Module):
    def __init__(self, in_channels: int, cfg: AuxConfig):
        super().__init__()
        self.cfg = cfg
        self.in_proj = nn.Conv1d(in_channels, cfg.block_channels, 1)
        self.blocks = nn.ModuleList(ResidualBlock(cfg.block_channels)
                                    for _ in range(cfg.resnet_blocks))
        self.out_proj = nn.Linear(cfg.block_channels, cfg.embedding_dim)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """[B, N, K] -> [B, D] (mean pooling over the K frames)."""
        if frames.dim() != 3 or frames.shape[-1] < 1:
            raise ValueError(f"expected [batch, channels, frames] with frames >= 1, got {tuple(frames.shape)}")
        x = self.in_proj(frames)
        for block in self.blocks:
            x = block(x)
        return self.out_proj(x.mean(dim=-1))


class SpeakerClassifier(nn.Module):
    def __init__(self, embedding_dim: int, num_speakers: int):
        super().__init__()
        if num_speakers < 1:
            raise ValueError("need at least one speaker class")
        self.fc = nn.Linear(embedding_dim, num_speakers)

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        """[B, D] -> [B, num_speakers] log-probabilities."""
        return torch.log_softmax(self.fc(embedding), dim=-1)


class EmbeddingRefiner(nn.Module):
    """Affine fusion of (previous embedding, re-encoded embedding) back to D."""

    def __init__(self, embedding_dim: int):
        super().__init__()
        self.fc = nn.Linear(2 * embedding_dim, embedding_dim)

    def forward(self, v_prev: torch.Tensor, a_new: torch.Tensor) -> torch.Tensor:
        if v_prev.shape != a_new.shape:
            raise ValueError(f"embedding shape mismatch: {tuple(v_prev.shape)} vs {tuple(a_new.shape)}")
        return self.fc(torch.cat([v_prev, a_new], dim=-1))

    def force_identity_sum(self) -> None:
        """Pin the FC to W=[I; I], B=0 (pass-through sum of the two inputs)."""
        d = self.fc.out_features
        with torch.no_grad():
            eye = torch.eye(d, dtype=self.fc.weight.dtype)
            self.fc.weight.copy_(torch.cat([eye, eye], dim=1))
            self.fc.bias.zero_()

    def force_keep_previous(self) -> None:
        """Pin the FC to W=[I; 0], B=0 (refinement disabled)."""
        d = self.fc.out_features
        with torch.no_grad():
            self.fc.weight.zero_()
            self.fc.weight[:, :d].copy_(torch.eye(d, dtype=self.fc.weight.dtype))
            self.fc.bias.zero_()
