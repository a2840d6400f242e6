"""Target-speaker extraction toolkit.

Extracts one speaker's waveform from a two-speaker (plus optional noise)
mixture, guided by an enrollment utterance, using a learned-filterbank
codec, a dual-path RNN mask estimator, and a residual-conv speaker
embedding network with an optional iterative embedding-refinement loop.
Ships with a synthetic corpus simulator, a multi-task trainer, SI-SDR
based evaluation, and a reporting CLI.
"""

__version__ = "0.1.0"

from .audio import AudioSegment, ExampleRecord, load_audio, read_manifest, save_audio, segment_fixed, write_manifest
from .codec import EncoderConfig, LatentFrames, frame_count
from .auxnet import AuxConfig
from .extractor import ExtractorConfig
from .metrics import (
    MetricReport,
    badcase_histogram,
    multitask_loss,
    sdr,
    sdr_improvement,
    si_sdr,
    si_sdr_improvement,
)
from .model import (
    ExtractionResult,
    GenericIRAConfig,
    ModelConfig,
    TargetExtractor,
    count_parameters,
    extract,
    iterative_refine,
    load_checkpoint,
    save_checkpoint,
)
from .simulate import SimConfig, SpeakerProfile, build_corpus, generate_profiles, mix_at_snr, synth_utterance
from .training import TrainConfig, lr_step, train, validate

__all__ = [
    "AudioSegment", "ExampleRecord", "load_audio", "save_audio", "segment_fixed",
    "read_manifest", "write_manifest",
    "EncoderConfig", "LatentFrames", "frame_count", "AuxConfig", "ExtractorConfig",
    "MetricReport", "badcase_histogram", "multitask_loss",
    "sdr", "sdr_improvement", "si_sdr", "si_sdr_improvement",
    "ExtractionResult", "GenericIRAConfig", "ModelConfig", "TargetExtractor",
    "count_parameters", "extract", "iterative_refine", "load_checkpoint", "save_checkpoint",
    "SimConfig", "SpeakerProfile", "build_corpus", "generate_profiles",
    "mix_at_snr", "synth_utterance",
    "TrainConfig", "lr_step", "train", "validate",
]
