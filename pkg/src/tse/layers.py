"""Shared neural building blocks: global layer norm and chunk segmentation."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

EPS = 1e-8


class GlobalLayerNorm(nn.Module):
    """Normalize over channel and time jointly, with per-channel affine.

    Statistics use every non-batch dimension, so train and eval behavior
    are identical (no running batch statistics). The channel axis is dim 1.
    """

    def __init__(self, channels: int, eps: float = EPS):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        dims = tuple(range(1, x.dim()))
        mean = x.mean(dim=dims, keepdim=True)
        var = x.var(dim=dims, unbiased=False, keepdim=True)
        shape = [1, -1] + [1] * (x.dim() - 2)
        y = (x - mean) / torch.sqrt(var + self.eps)
        return y * self.gain.view(shape) + self.bias.view(shape)


def default_chunk_size(n_frames: int) -> int:
    """Nearest even chunk length to sqrt(2K), never below 2."""
    s = int(round(math.sqrt(2.0 * n_frames)))
    if s % 2:
        s += 1
    return max(s, 2)


def chunk_sequence(x: torch.Tensor, chunk_size: int) -> torch.Tensor:
    """[..., K] -> [..., S, P]: 50%-overlapping chunks, zero-padded at the end.

    P = ceil(K / (S/2)); a chunk longer than the padded sequence degenerates
    to a single chunk.
    """
    if chunk_size < 2 or chunk_size % 2:
        raise ValueError(f"chunk size must be even and >= 2, got {chunk_size}")
    hop = chunk_size // 2
    k = x.shape[-1]
    if k == 0:
        raise ValueError("cannot chunk an empty sequence")
    p = max(1, math.ceil(k / hop))
    padded = (p - 1) * hop + chunk_size
    x = F.pad(x, (0, padded - k))
    chunks = x.unfold(-1, chunk_size, hop)  # [..., P, S]
    return chunks.transpose(-2, -1).contiguous()


def overlap_add_chunks(chunks: torch.Tensor, length: int) -> torch.Tensor:
    """Inverse of chunk_sequence: average overlapped regions, trim to `length`."""
    *lead, s, p = chunks.shape
    hop = s // 2
    padded = (p - 1) * hop + s
    flat = chunks.reshape(-1, s, p)
    summed = F.fold(flat, output_size=(1, padded), kernel_size=(1, s), stride=(1, hop))
    counts = F.fold(torch.ones_like(flat), output_size=(1, padded),
                    kernel_size=(1, s), stride=(1, hop))
    out = (summed / counts).reshape(*lead, padded)
    return out[..., :length]
