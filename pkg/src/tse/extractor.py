"""Dual-path RNN mask estimator conditioned on a speaker embedding.

The mixture latents are globally layer-normalized, the embedding is
broadcast along time and concatenated once on the feature axis before the
first dual-path block (never re-injected later), projected to the internal
width, then processed as 50%-overlapping chunks: each block runs a
bidirectional LSTM within chunks and another across chunks, each followed
by a linear projection, global layer norm, and a residual connection.
A final 1x1 convolution with rectification yields the nonnegative mask,
applied element-wise to the (unnormalized) mixture latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .layers import GlobalLayerNorm, chunk_sequence, default_chunk_size, overlap_add_chunks


@dataclass
class ExtractorConfig:
    dprnn_blocks: int = 6
    rnn_hidden: int = 128
    chunk_size: int | None = None  # None: nearest even to sqrt(2K) per input
    feature_dim: int = 64

    def __post_init__(self):
        if self.dprnn_blocks < 1:
            raise ValueError("need at least one dual-path block")
        if self.chunk_size is not None and (self.chunk_size < 2 or self.chunk_size % 2):
            raise ValueError("chunk size must be even and >= 2")


class DualPathBlock(nn.Module):
    def __init__(self, feature_dim: int, hidden: int):
        super().__init__()
        self.intra_rnn = nn.LSTM(feature_dim, hidden, batch_first=True, bidirectional=True)
        self.intra_proj = nn.Linear(2 * hidden, feature_dim)
        self.intra_norm = GlobalLayerNorm(feature_dim)
        self.inter_rnn = nn.LSTM(feature_dim, hidden, batch_first=True, bidirectional=True)
        self.inter_proj = nn.Linear(2 * hidden, feature_dim)
        self.inter_norm = GlobalLayerNorm(feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[B, F, S, P] -> [B, F, S, P]."""
        b, f, s, p = x.shape
        # within-chunk pass: sequences of length S
        y = x.permute(0, 3, 2, 1).reshape(b * p, s, f)
        y = self.intra_proj(self.intra_rnn(y)[0])
        y = y.reshape(b, p, s, f).permute(0, 3, 2, 1)
        x = x + self.intra_norm(y)
        # across-chunk pass: sequences of length P
        y = x.permute(0, 2, 3, 1).reshape(b * s, p, f)
        y = self.inter_proj(self.inter_rnn(y)[0])
        y = y.reshape(b, s, p, f).permute(0, 3, 1, 2)
        return x + self.inter_norm(y)


class MaskNet(nn.Module):
    def __init__(self, in_channels: int, embedding_dim: int, cfg: ExtractorConfig):
        super().__init__()
        self.cfg = cfg
        self.in_channels = in_channels
        self.embedding_dim = embedding_dim
        self.mix_norm = GlobalLayerNorm(in_channels)
        self.in_proj = nn.Conv1d(in_channels + embedding_dim, cfg.feature_dim, 1)
        self.blocks = nn.ModuleList(DualPathBlock(cfg.feature_dim, cfg.rnn_hidden)
                                    for _ in range(cfg.dprnn_blocks))
        self.mask_proj = nn.Conv1d(cfg.feature_dim, in_channels, 1)

    def forward(self, embedding: torch.Tensor, mix_latent: torch.Tensor) -> torch.Tensor:
        """([B, D], [B, N, K]) -> nonnegative mask [B, N, K]."""
        if embedding.shape[-1] != self.embedding_dim:
            raise ValueError(f"embedding dim {embedding.shape[-1]} != {self.embedding_dim}")
        if mix_latent.shape[1] != self.in_channels:
            raise ValueError(f"latent channels {mix_latent.shape[1]} != {self.in_channels}")
        k = mix_latent.shape[-1]
        cond = embedding.unsqueeze(-1).expand(-1, -1, k)
        x = torch.cat([cond, self.mix_norm(mix_latent)], dim=1)
        x = self.in_proj(x)
        s = self.cfg.chunk_size or default_chunk_size(k)
        x = chunk_sequence(x, s)
        for block in self.blocks:
            x = block(x)
        x = overlap_add_chunks(x, k)
        return torch.relu(self.mask_proj(x))


def apply_mask(mix_latent: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Element-wise product; shapes must match exactly."""
    if mix_latent.shape != mask.shape:
        raise ValueError(f"shape mismatch: {tuple(mix_latent.shape)} vs {tuple(mask.shape)}")
    return mix_latent * mask
