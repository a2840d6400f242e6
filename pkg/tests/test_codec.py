import numpy as np
import pytest
import torch

from tse.codec import Decoder, Encoder, EncoderConfig, LatentFrames, frame_count


class TestEncoderConfig:
    def test_stride_must_be_half_length(self):
        with pytest.raises(ValueError, match="stride"):
            EncoderConfig(filter_length=16, stride=4)

    def test_odd_filter_length_rejected(self):
        with pytest.raises(ValueError, match="even"):
            EncoderConfig(filter_length=15)

    def test_default_stride(self):
        assert EncoderConfig(filter_length=16).stride == 8


class TestFrameCount:
    def test_four_seconds_at_l16(self):
        assert frame_count(32000, EncoderConfig(filter_length=16)) == 3999

    def test_single_frame(self):
        assert frame_count(16, EncoderConfig(filter_length=16)) == 1

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter"):
            frame_count(15, EncoderConfig(filter_length=16))


@pytest.fixture
def codec():
    torch.manual_seed(0)
    cfg = EncoderConfig(filter_length=16, channels=20)
    return cfg, Encoder(cfg), Decoder(cfg)


class TestEncoder:
    def test_output_shape_matches_formula(self, codec):
        cfg, enc, _ = codec
        for t in (16, 100, 32000):
            out = enc(torch.randn(2, t))
            assert out.shape == (2, cfg.channels, frame_count(t, cfg))

    def test_nonnegative(self, codec):
        _, enc, _ = codec
        assert (enc(torch.randn(1, 500)) >= 0).all()

    def test_weight_sharing_same_input_same_output(self, codec):
        _, enc, _ = codec
        x = torch.randn(1, 300)
        assert torch.equal(enc(x), enc(x.clone()))

    def test_too_short_input(self, codec):
        _, enc, _ = codec
        with pytest.raises(ValueError, match="shorter"):
            enc(torch.randn(1, 15))


class TestDecoder:
    def test_single_frame_gives_filter_length(self, codec):
        _, _, dec = codec
        out = dec(torch.randn(1, 20, 1), 16)
        assert out.shape == (1, 16)

    def test_length_inverse_of_encode(self, codec):
        cfg, enc, dec = codec
        for t in (16, 317, 32000):
            x = torch.randn(1, t)
            assert dec(enc(x), t).shape == (1, t)

    def test_zero_latent_zero_wave(self, codec):
        _, _, dec = codec
        assert torch.equal(dec(torch.zeros(1, 20, 9), 80), torch.zeros(1, 80))

    def test_linearity(self):
        torch.manual_seed(1)
        cfg = EncoderConfig(filter_length=8, channels=6)
        dec = Decoder(cfg).double()
        d1 = torch.randn(1, 6, 12, dtype=torch.float64)
        d2 = torch.randn(1, 6, 12, dtype=torch.float64)
        a, b = 1.7, -0.3
        combined = dec(a * d1 + b * d2, 52)
        separate = a * dec(d1, 52) + b * dec(d2, 52)
        assert torch.allclose(combined, separate, atol=1e-10, rtol=0)


class TestLatentFrames:
    def test_shape_validation(self):
        cfg = EncoderConfig(filter_length=16, channels=4)
        LatentFrames(np.zeros((4, 10)), cfg)
        with pytest.raises(ValueError, match="channels"):
            LatentFrames(np.zeros((5, 10)), cfg)
