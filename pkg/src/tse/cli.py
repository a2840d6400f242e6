"""Command-line tool: simulate, train, evaluate, extract, report.

Every command echoes its effective config (file keys merged with flag
overrides) into the output directory and exits non-zero with a one-line
`error: <kind>: <message>` on any failure.
"""

from __future__ import annotations

import argparse
import shlex
import subprocess
import sys
from pathlib import Path

from . import __version__
from .audio import load_audio, locate, read_manifest, save_audio
from .config import RunConfig, load_run_config
from .metrics import MetricReport, badcase_histogram, summary_table
from .model import count_parameters, extract, load_checkpoint
from .simulate import build_corpus, generate_profiles
from .training import train, validate


def _apply_overrides(obj, args, mapping: dict[str, str]) -> None:
    for attr, flag in mapping.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(obj, attr, value)


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    sim = cfg.simulate
    _apply_overrides(sim, args, {
        "profiles": "profiles", "n_train": "train", "n_valid": "valid", "n_test": "test",
        "duration_s": "duration", "reference_s": "ref_duration",
        "test_speakers": "test_speakers", "seed": "seed", "noise": "noise",
        "both_targets": "both_targets",
    })
    if args.snr_range is not None:
        sim.snr_range = tuple(args.snr_range)
    if args.noise_snr_range is not None:
        sim.noise_snr_range = tuple(args.noise_snr_range)
    out_dir = Path(args.out_dir)
    profiles = generate_profiles(sim.profiles, sim.seed)
    manifests = build_corpus(profiles, sim.n_train, sim.n_valid, sim.n_test, sim, out_dir)
    cfg.echo(out_dir)
    for split, path in manifests.items():
        print(f"{split}: {path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    _apply_overrides(cfg.train, args, {
        "epochs": "epochs", "steps_per_epoch": "steps_per_epoch",
        "batch_size": "batch_size", "segment_s": "segment", "lr0": "lr", "seed": "seed",
    })
    _apply_overrides(cfg.model, args, {"refine_iters": "iterations", "loss_lambda": "lam"})
    _apply_overrides(cfg.model.encoder, args, {"filter_length": "filter_length",
                                               "channels": "channels"})
    _apply_overrides(cfg.model.aux, args, {"embedding_dim": "embedding_dim",
                                           "resnet_blocks": "aux_blocks",
                                           "block_channels": "aux_channels"})
    _apply_overrides(cfg.model.extractor, args, {"dprnn_blocks": "dprnn_blocks",
                                                 "rnn_hidden": "rnn_hidden",
                                                 "feature_dim": "feature_dim"})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.echo(out_dir)
    best = train(args.train_manifest, args.valid_manifest, cfg.model, cfg.train, out_dir)
    print(f"best checkpoint: {best}")
    return 0


def _run_pesq(cmd_template: str, ref_path: Path, est_path: Path) -> float:
    cmd = [part.format(ref=str(ref_path), est=str(est_path))
           for part in shlex.split(cmd_template)]
    out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout.strip()
    return float(out.split()[-1])


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    iteration_choices = args.iterations if args.iterations else [None]
    entries = []
    for ckpt_path in args.checkpoint:
        model, _, _ = load_checkpoint(ckpt_path)
        for n in iteration_choices:
            n_eff = model.cfg.refine_iters if n is None else n
            name = f"{Path(ckpt_path).stem}@n{n_eff}"
            est_dir = out_dir / f"estimates_{name}" if args.pesq_cmd else None
            report = validate(args.manifest, model, n=n, estimates_dir=est_dir)
            if args.pesq_cmd:
                records = read_manifest(args.manifest)
                for i, (rec, row) in enumerate(zip(records, report.rows)):
                    est_path = est_dir / f"est_{i:06d}.wav"
                    row.pesq = _run_pesq(args.pesq_cmd,
                                         locate(rec.target_path, Path(args.manifest)), est_path)
            csv_path = out_dir / f"metrics_{name}.csv"
            report.to_csv(csv_path)
            entries.append((name, count_parameters(model), report))
            print(f"wrote {csv_path}")
    summary = summary_table(entries)
    (out_dir / "summary.txt").write_text(summary + "\n")
    print(summary)
    return 0


def cmd_extract(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    mixture = load_audio(args.mixture)
    reference = load_audio(args.reference)
    result = extract(model, mixture, reference, n=args.iterations)
    save_audio(result.final, args.output)
    print(f"wrote {args.output} ({len(result.final)} samples, "
          f"{len(result.iterations)} iteration(s))")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    named = []
    for item in args.metrics:
        name, _, path = item.rpartition("=")
        path = Path(path)
        named.append((name or path.stem, MetricReport.from_csv(path)))
    hists = [(name, badcase_histogram([rep], args.threshold, args.bin_width))
             for name, rep in named]
    n_bins = max(len(h.bins) for _, h in hists)
    lo0 = args.threshold - n_bins * args.bin_width

    import csv as _csv
    csv_path = out_dir / "histogram.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["lo_db", "hi_db"] + [name for name, _ in hists])
        for i in range(n_bins):
            lo = lo0 + i * args.bin_width
            row = [repr(lo), repr(lo + args.bin_width)]
            for _, h in hists:
                pad = n_bins - len(h.bins)
                row.append(h.bins[i - pad].count if i >= pad else 0)
            writer.writerow(row)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    width = args.bin_width / (len(hists) + 1)
    for j, (name, h) in enumerate(hists):
        pad = n_bins - len(h.bins)
        xs = [lo0 + (pad + i) * args.bin_width + (j + 0.5) * width for i in range(len(h.bins))]
        ax.bar(xs, [b.count for b in h.bins], width=width, align="edge",
               label=f"{name} (total {h.total_below})")
    ax.set_xlabel("SI-SDR (dB)")
    ax.set_ylabel(f"utterances below {args.threshold:g} dB")
    ax.legend()
    fig.tight_layout()
    png_path = out_dir / "histogram.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)

    for name, h in hists:
        print(f"{name}: {h.total_below} utterance(s) below {args.threshold:g} dB")
    print(f"wrote {csv_path} and {png_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tse",
                                     description="target-speaker extraction toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic two-speaker corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--profiles", type=int)
    p.add_argument("--train", type=int)
    p.add_argument("--valid", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--snr-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--noise", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--noise-snr-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--duration", type=float)
    p.add_argument("--ref-duration", type=float)
    p.add_argument("--test-speakers", type=int)
    p.add_argument("--both-targets", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("train", help="train an extraction model")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--valid-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--segment", type=float, help="training segment length in seconds")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int, help="refinement iterations to unroll")
    p.add_argument("--lam", type=float, help="classification loss weight")
    p.add_argument("--filter-length", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--aux-blocks", type=int)
    p.add_argument("--aux-channels", type=int)
    p.add_argument("--dprnn-blocks", type=int)
    p.add_argument("--rnn-hidden", type=int)
    p.add_argument("--feature-dim", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score checkpoints on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--iterations", type=int, action="append",
                   help="refinement iterations at test time (repeatable)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pesq-cmd",
                   help="external scorer invoked per example with {ref} and {est} placeholders")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("extract", help="extract one target utterance")
    p.add_argument("--mixture", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("report", help="bad-case histogram and plot from metric CSVs")
    p.add_argument("--metrics", action="append", required=True,
                   metavar="[NAME=]CSV")
    p.add_argument("--threshold", type=float, default=15.0)
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single machine-parsable error line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
