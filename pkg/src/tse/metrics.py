"""Objective separation measures, the multi-task objective, and report plumbing.

SI-SDR follows the scale-invariant definition: both signals are
mean-centered, the reference is rescaled by the least-squares projection
coefficient, and the ratio of projected energy to residual energy is
reported in dB. Exact proportionality and exact orthogonality map to the
+inf / -inf sentinels; sentinels are excluded from means with a reported
exclusion count.

The SDR here is the simplified (unfiltered) ratio
10*log10(||target||^2 / ||target - est||^2); no distortion filter is
applied, which is documented wherever the number is reported.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioSegment


def _as_samples(x) -> np.ndarray:
    if isinstance(x, AudioSegment):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def _check_pair(est: np.ndarray, ref: np.ndarray) -> None:
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: est {est.shape} vs ref {ref.shape}")
    if est.ndim != 1 or len(est) == 0:
        raise ValueError("expected non-empty 1-D signals")


def si_sdr(est, ref) -> float:
    """Scale-invariant source-to-distortion ratio in dB (sentinels: +-inf)."""
    e = _as_samples(est)
    r = _as_samples(ref)
    _check_pair(e, r)
    e = e - e.mean()
    r = r - r.mean()
    rr = float(np.dot(r, r))
    if rr == 0.0:
        raise ValueError("zero-energy reference")
    alpha = float(np.dot(e, r)) / rr
    if alpha == 0.0:
        return float("-inf")
    err = alpha * r - e
    err_energy = float(np.dot(err, err))
    if err_energy == 0.0:
        return float("inf")
    return 10.0 * math.log10(alpha * alpha * rr / err_energy)


def sdr(est, ref) -> float:
    """Simplified (unfiltered) source-to-distortion ratio in dB."""
    e = _as_samples(est)
    r = _as_samples(ref)
    _check_pair(e, r)
    rr = float(np.dot(r, r))
    if rr == 0.0:
        raise ValueError("zero-energy reference")
    err = r - e
    err_energy = float(np.dot(err, err))
    if err_energy == 0.0:
        return float("inf")
    return 10.0 * math.log10(rr / err_energy)


def si_sdr_improvement(est, mixture, target) -> float:
    return si_sdr(est, target) - si_sdr(mixture, target)


def sdr_improvement(est, mixture, target) -> float:
    return sdr(est, target) - sdr(mixture, target)


def cross_entropy(logits, true_class: int) -> float:
    """CE of a single class index against unnormalized logits."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= true_class < len(z):
        raise ValueError(f"class index {true_class} out of range for {len(z)} classes")
    m = float(z.max())
    return m + math.log(float(np.exp(z - m).sum())) - float(z[true_class])


def multitask_loss(est, target, logits, true_class: int, lam: float = 0.5) -> float:
    """-SI-SDR plus lam * cross-entropy of the speaker classification head."""
    return -si_sdr(est, target) + lam * cross_entropy(logits, true_class)


@dataclass
class ExampleMetrics:
    example_id: str
    si_sdr_db: float
    si_sdri_db: float
    sdr_db: float
    sdri_db: float
    pesq: float | None = None


_CSV_COLUMNS = ("example_id", "si_sdr_db", "si_sdri_db", "sdr_db", "sdri_db", "pesq")


@dataclass
class MetricReport:
    """Per-example scores plus aggregation helpers."""

    rows: list[ExampleMetrics] = field(default_factory=list)

    @staticmethod
    def from_triples(triples) -> "MetricReport":
        """Build from (example_id, est, mixture, target) tuples."""
        rows = []
        for example_id, est, mixture, target in triples:
            s = si_sdr(est, target)
            rows.append(
                ExampleMetrics(
                    example_id=str(example_id),
                    si_sdr_db=s,
                    si_sdri_db=s - si_sdr(mixture, target),
                    sdr_db=sdr(est, target),
                    sdri_db=sdr_improvement(est, mixture, target),
                )
            )
        return MetricReport(rows)

    def values(self, name: str) -> list[float]:
        return [getattr(row, name) for row in self.rows]

    def mean(self, name: str) -> tuple[float, int]:
        """Mean over finite values; returns (mean, excluded_count)."""
        vals = [v for v in self.values(name) if v is not None]
        finite = [v for v in vals if math.isfinite(v)]
        excluded = len(vals) - len(finite)
        if not finite:
            return float("nan"), excluded
        return sum(finite) / len(finite), excluded

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [row.example_id, repr(row.si_sdr_db), repr(row.si_sdri_db),
                     repr(row.sdr_db), repr(row.sdri_db),
                     "" if row.pesq is None else repr(row.pesq)]
                )

    @staticmethod
    def from_csv(path) -> "MetricReport":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected metric CSV columns {reader.fieldnames}")
            for rec in reader:
                rows.append(
                    ExampleMetrics(
                        example_id=rec["example_id"],
                        si_sdr_db=float(rec["si_sdr_db"]),
                        si_sdri_db=float(rec["si_sdri_db"]),
                        sdr_db=float(rec["sdr_db"]),
                        sdri_db=float(rec["sdri_db"]),
                        pesq=float(rec["pesq"]) if rec["pesq"] else None,
                    )
                )
        return MetricReport(rows)


def _format_params(count: int | None) -> str:
    if count is None:
        return "-"
    return f"{count / 1e6:.2f}M"


def summary_table(entries: list[tuple[str, int | None, MetricReport]]) -> str:
    """Text table with one row per system: Params, SI-SDRi, SDRi (plus PESQ when present)."""
    have_pesq = any(any(r.pesq is not None for r in rep.rows) for _, _, rep in entries)
    header = ["System", "Params", "SI-SDRi", "SDRi"] + (["PESQ"] if have_pesq else [])
    lines = []
    for name, params, report in entries:
        si, si_excl = report.mean("si_sdri_db")
        sd, _ = report.mean("sdri_db")
        cells = [name, _format_params(params), f"{si:.2f}", f"{sd:.2f}"]
        if have_pesq:
            pesq_vals = [r.pesq for r in report.rows if r.pesq is not None]
            cells.append(f"{sum(pesq_vals) / len(pesq_vals):.2f}" if pesq_vals else "-")
        if si_excl:
            cells[0] += f" ({si_excl} non-finite excluded)"
        lines.append(cells)
    widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h)
              for i, h in enumerate(header)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [fmt(header), fmt(["-" * w for w in widths])]
    out.extend(fmt(row) for row in lines)
    out.append("")
    out.append("(SDR is the simplified unfiltered ratio; SI-SDRi/SDRi are means over finite values.)")
    return "\n".join(out)


@dataclass
class HistogramBin:
    lo_db: float
    hi_db: float
    count: int


@dataclass
class BadCaseHistogram:
    threshold_db: float
    bin_width_db: float
    bins: list[HistogramBin]
    total_below: int

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lo_db", "hi_db", "count"])
            for b in self.bins:
                writer.writerow([repr(b.lo_db), repr(b.hi_db), b.count])


def badcase_histogram(reports: list[MetricReport], threshold_db: float = 15.0,
                      bin_width_db: float = 1.0) -> BadCaseHistogram:
    """Binned counts of examples with SI-SDR strictly below the threshold.

    Bins ascend in `bin_width_db` steps and end at the threshold; -inf scores
    land in the lowest bin.
    """
    if bin_width_db <= 0:
        raise ValueError("bin width must be positive")
    scores = [row.si_sdr_db for rep in reports for row in rep.rows]
    if not scores:
        raise ValueError("no examples to histogram")
    below = [s for s in scores if s < threshold_db]
    finite_below = [s for s in below if math.isfinite(s)]
    if finite_below:
        span = threshold_db - min(finite_below)
        n_bins = max(1, math.ceil(span / bin_width_db))
        # floor rounding can park the minimum exactly on the lowest edge
        if min(finite_below) < threshold_db - n_bins * bin_width_db:
            n_bins += 1
    else:
        n_bins = 1
    bins = [
        HistogramBin(threshold_db - (n_bins - i) * bin_width_db,
                     threshold_db - (n_bins - i - 1) * bin_width_db, 0)
        for i in range(n_bins)
    ]
    for s in below:
        if math.isfinite(s):
            idx = n_bins - 1 - int((threshold_db - s) // bin_width_db)
            idx = min(max(idx, 0), n_bins - 1)
        else:
            idx = 0
        bins[idx].count += 1
    return BadCaseHistogram(threshold_db, bin_width_db, bins, len(below))
