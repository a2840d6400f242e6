"""Multi-task training loop, plateau lr schedule, checkpointing, validation.

The objective is the negative scale-invariant ratio of the final
iteration's estimate plus a weighted speaker-classification cross-entropy
on the reference-derived embedding. Optimization uses Adam with gradient
clipping at global norm 5 (betas/eps below; the paper-level recipe fixes
only the initial rate, segment length, and the halve-on-plateau rule).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from .audio import AudioSegment, load_audio, locate, read_manifest, save_audio
from .metrics import MetricReport, ExampleMetrics, si_sdr, sdr
from .model import (
    CheckpointMeta,
    ModelConfig,
    TargetExtractor,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)

LOSS_MODES = ("final", "all")


@dataclass
class TrainConfig:
    lr0: float = 0.0005
    epochs: int = 100
    steps_per_epoch: int | None = None  # None: one pass over the train split
    batch_size: int = 12
    segment_s: float = 4.0
    patience: int = 2
    lr_factor: float = 0.5
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    loss_mode: str = "final"  # "all": average the signal loss over iterations
    ce_on_refined: bool = False

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")


def lr_step(history: list[float], current_lr: float, cfg: TrainConfig) -> float:
    """Halve when the last `patience` epochs all failed to beat the best loss.

    Pure replay of the rule over the whole history: the stall counter
    resets after every halving, and improvement means strictly beating the
    best validation loss seen so far. Returns the rate for the next epoch
    given the rate used for the last one.
    """
    if not history:
        raise ValueError("empty loss history")
    best = math.inf
    stall = 0
    halve_now = False
    for loss in history:
        if loss < best:
            best = loss
            stall = 0
            halve_now = False
        else:
            stall += 1
            halve_now = stall >= cfg.patience
            if halve_now:
                stall = 0
    return current_lr * cfg.lr_factor if halve_now else current_lr


def si_sdr_loss(est: torch.Tensor, target: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Differentiable -SI-SDR, mean over the batch. est/target: [B, T]."""
    est = est - est.mean(dim=-1, keepdim=True)
    target = target - target.mean(dim=-1, keepdim=True)
    dot = (est * target).sum(dim=-1, keepdim=True)
    energy = (target * target).sum(dim=-1, keepdim=True)
    scaled = dot / (energy + eps) * target
    err = est - scaled
    ratio = (scaled * scaled).sum(dim=-1) / ((err * err).sum(dim=-1) + eps)
    return (-10.0 * torch.log10(ratio + eps)).mean()


def multitask_loss_torch(trace, target: torch.Tensor, labels: torch.Tensor | None,
                         model: TargetExtractor, cfg: TrainConfig) -> torch.Tensor:
    """Signal loss on the trace per cfg.loss_mode plus weighted CE when labels given."""
    if cfg.loss_mode == "all":
        signal = torch.stack([si_sdr_loss(est, target) for est in trace.estimates]).mean()
    else:
        signal = si_sdr_loss(trace.estimates[-1], target)
    lam = model.cfg.loss_lambda
    if labels is None or lam == 0:
        return signal
    if cfg.ce_on_refined:
        ce = torch.stack(
            [torch.nn.functional.nll_loss(model.classifier(v), labels) for v in trace.embeddings]
        ).mean()
    else:
        ce = torch.nn.functional.nll_loss(trace.logits, labels)
    return signal + lam * ce


class ManifestDataset:
    """In-memory desk-scale dataset over one manifest."""

    def __init__(self, manifest_path, speakers: list[str] | None = None):
        self.manifest_path = Path(manifest_path)
        self.records = read_manifest(self.manifest_path)
        if not self.records:
            raise ValueError(f"empty manifest: {manifest_path}")
        self.mixtures, self.targets, self.references = [], [], []
        for rec in self.records:
            self.mixtures.append(load_audio(locate(rec.mixture_path, self.manifest_path)).samples)
            self.targets.append(load_audio(locate(rec.target_path, self.manifest_path)).samples)
            self.references.append(load_audio(locate(rec.reference_path, self.manifest_path)).samples)
        if speakers is None:
            speakers = sorted({rec.target_speaker_id for rec in self.records})
        self.speakers = list(speakers)
        self._index = {s: i for i, s in enumerate(self.speakers)}

    def __len__(self) -> int:
        return len(self.records)

    def label(self, i: int) -> int | None:
        return self._index.get(self.records[i].target_speaker_id)

    def sample_batch(self, rng: np.random.Generator, batch_size: int, segment_len: int,
                     dtype=torch.float32):
        """Random examples, random aligned crops of mixture/target, full references."""
        idx = rng.integers(0, len(self.records), size=batch_size)
        mixes, tgts, refs, labels = [], [], [], []
        ref_len = min(len(self.references[i]) for i in idx)
        for i in idx:
            mix, tgt = self.mixtures[i], self.targets[i]
            if len(mix) > segment_len:
                off = int(rng.integers(0, len(mix) - segment_len + 1))
                mix, tgt = mix[off : off + segment_len], tgt[off : off + segment_len]
            elif len(mix) < segment_len:
                pad = segment_len - len(mix)
                mix = np.concatenate([mix, np.zeros(pad)])
                tgt = np.concatenate([tgt, np.zeros(pad)])
            mixes.append(mix)
            tgts.append(tgt)
            refs.append(self.references[i][:ref_len])
            labels.append(self.label(i))
        batch_labels = None
        if all(l is not None for l in labels):
            batch_labels = torch.tensor(labels, dtype=torch.long)
        to = lambda arrs: torch.from_numpy(np.stack(arrs)).to(dtype)
        return to(mixes), to(tgts), to(refs), batch_labels


def _epoch_valid_loss(model: TargetExtractor, dataset: ManifestDataset,
                      cfg: TrainConfig) -> float:
    """Mean multitask loss over whole validation utterances."""
    model.eval()
    dtype = next(model.parameters()).dtype
    losses = []
    with torch.no_grad():
        for i in range(len(dataset)):
            mix = torch.from_numpy(dataset.mixtures[i]).to(dtype).unsqueeze(0)
            tgt = torch.from_numpy(dataset.targets[i]).to(dtype).unsqueeze(0)
            ref = torch.from_numpy(dataset.references[i]).to(dtype).unsqueeze(0)
            label = dataset.label(i)
            labels = None if label is None else torch.tensor([label])
            trace = model(mix, ref)
            losses.append(float(multitask_loss_torch(trace, tgt, labels, model, cfg)))
    model.train()
    return sum(losses) / len(losses)


def train(train_manifest, valid_manifest, model_cfg: ModelConfig, train_cfg: TrainConfig,
          out_dir, log=print) -> Path:
    """Full training run; returns the path of the best checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = ManifestDataset(train_manifest)
    valid_set = ManifestDataset(valid_manifest, speakers=train_set.speakers)

    if model_cfg.aux.num_speakers is None:
        model_cfg.aux.num_speakers = len(train_set.speakers)
    torch.manual_seed(train_cfg.seed)
    model = TargetExtractor(model_cfg)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.lr0,
                                 betas=train_cfg.adam_betas, eps=train_cfg.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 0xB41C]))

    segment_len = int(round(train_cfg.segment_s * 8000))
    steps = train_cfg.steps_per_epoch or max(1, math.ceil(len(train_set) / train_cfg.batch_size))
    log(f"training {count_parameters(model)} parameters on {len(train_set)} examples "
        f"({len(train_set.speakers)} speakers), {steps} steps/epoch")

    log_path = out_dir / "train_log.csv"
    with open(log_path, "w", newline="") as fh:
        fh.write(f"# adam_betas={train_cfg.adam_betas} adam_eps={train_cfg.adam_eps} "
                 f"grad_clip={train_cfg.grad_clip} loss_mode={train_cfg.loss_mode} "
                 f"seed={train_cfg.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "valid_loss", "lr"])

    best_valid = math.inf
    best_path = out_dir / "checkpoint_best.pt"
    history: list[float] = []
    current_lr = train_cfg.lr0
    for epoch in range(1, train_cfg.epochs + 1):
        t0 = time.time()
        epoch_losses = []
        for _ in range(steps):
            mix, tgt, ref, labels = train_set.sample_batch(rng, train_cfg.batch_size, segment_len)
            trace = model(mix, ref)
            loss = multitask_loss_torch(trace, tgt, labels, model, train_cfg)
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            optimizer.step()
            epoch_losses.append(float(loss))
        train_loss = sum(epoch_losses) / len(epoch_losses)
        valid_loss = _epoch_valid_loss(model, valid_set, train_cfg)
        history.append(valid_loss)

        meta = CheckpointMeta(epoch=epoch, train_loss=train_loss, valid_loss=valid_loss,
                              current_lr=current_lr, config_hash=model_cfg.hash())
        save_checkpoint(out_dir / "checkpoint_last.pt", model, meta, train_set.speakers)
        if valid_loss < best_valid:
            best_valid = valid_loss
            save_checkpoint(best_path, model, meta, train_set.speakers)
        with open(log_path, "a", newline="") as fh:
            csv.writer(fh).writerow([epoch, repr(train_loss), repr(valid_loss), repr(current_lr)])
        log(f"epoch {epoch}: train {train_loss:.3f} valid {valid_loss:.3f} "
            f"lr {current_lr:.2e} ({time.time() - t0:.1f}s)")

        new_lr = lr_step(history, current_lr, train_cfg)
        if new_lr != current_lr:
            current_lr = new_lr
            for group in optimizer.param_groups:
                group["lr"] = current_lr
    if not best_path.exists():
        raise RuntimeError("no checkpoint written")
    return best_path


def validate(manifest_path, checkpoint, n: int | None = None,
             estimates_dir=None) -> MetricReport:
    """Full-utterance extraction and metrics for every manifest record.

    With `estimates_dir` set, each estimate is also written there as
    est_######.wav (for external scorers such as a PESQ tool).
    """
    if isinstance(checkpoint, TargetExtractor):
        model = checkpoint
    else:
        model, _, _ = load_checkpoint(checkpoint)
    manifest_path = Path(manifest_path)
    records = read_manifest(manifest_path)
    if not records:
        raise ValueError(f"empty manifest: {manifest_path}")
    model.eval()
    dtype = next(model.parameters()).dtype
    rows = []
    with torch.no_grad():
        for i, rec in enumerate(records):
            mix = load_audio(locate(rec.mixture_path, manifest_path)).samples
            tgt = load_audio(locate(rec.target_path, manifest_path)).samples
            ref = load_audio(locate(rec.reference_path, manifest_path)).samples
            trace = model(torch.from_numpy(mix).to(dtype).unsqueeze(0),
                          torch.from_numpy(ref).to(dtype).unsqueeze(0), n=n)
            est = trace.estimates[-1][0].numpy().astype(np.float64)
            if estimates_dir is not None:
                save_audio(AudioSegment(np.clip(est, -1.0, 1.0)),
                           Path(estimates_dir) / f"est_{i:06d}.wav")
            s = si_sdr(est, tgt)
            rows.append(
                ExampleMetrics(
                    example_id=rec.mixture_path,
                    si_sdr_db=s,
                    si_sdri_db=s - si_sdr(mix, tgt),
                    sdr_db=sdr(est, tgt),
                    sdri_db=sdr(est, tgt) - sdr(mix, tgt),
                )
            )
    return MetricReport(rows)
