"""Twin weight-shared learned-filterbank encoder and overlap-sum decoder.

The encoder is a single-scale 1-D convolutional filterbank of length L at
stride L/2 with rectification; the mixture and the reference pass through
the same instance (weight sharing). The decoder is a purely linear 1-D
transposed convolution whose overlapping synthesis frames sum back to a
waveform, trimmed or zero-padded to the original length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class EncoderConfig:
    filter_length: int = 16
    channels: int = 64
    stride: int | None = None

    def __post_init__(self):
        if self.filter_length % 2:
            raise ValueError(f"filter length must be even, got {self.filter_length}")
        if self.stride is None:
            self.stride = self.filter_length // 2
        if self.stride != self.filter_length // 2:
            raise ValueError("stride must equal filter_length / 2")
        if self.channels < 1:
            raise ValueError("need at least one filter channel")


def frame_count(n_samples: int, cfg: EncoderConfig) -> int:
    """K = floor((T - L) / (L/2)) + 1; requires T >= L."""
    if n_samples < cfg.filter_length:
        raise ValueError(f"input of {n_samples} samples shorter than filter length {cfg.filter_length}")
    return (n_samples - cfg.filter_length) // cfg.stride + 1


@dataclass
class LatentFrames:
    """Filterbank output: [channels x frames]."""

    values: np.ndarray
    config: EncoderConfig

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] != self.config.channels:
            raise ValueError(f"expected [channels x frames], got shape {self.values.shape}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


class Encoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.filterbank = nn.Conv1d(1, cfg.channels, cfg.filter_length,
                                    stride=cfg.stride, bias=False)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        """[B, T] -> [B, N, K], T >= L."""
        if wave.shape[-1] < self.cfg.filter_length:
            raise ValueError(
                f"input of {wave.shape[-1]} samples shorter than filter length {self.cfg.filter_length}"
            )
        return F.relu(self.filterbank(wave.unsqueeze(1)))


class Decoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.synthesis = nn.ConvTranspose1d(cfg.channels, 1, cfg.filter_length,
                                            stride=cfg.stride, bias=False)

    def forward(self, latent: torch.Tensor, length: int) -> torch.Tensor:
        """[B, N, K] -> [B, length] via overlap-and-sum of synthesis frames."""
        wave = self.synthesis(latent).squeeze(1)
        t = wave.shape[-1]
        if t >= length:
            return wave[..., :length]
        return F.pad(wave, (0, length - t))
