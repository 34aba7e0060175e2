"""Pixel-level scores for masks and reconstructed backgrounds."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .imagio import Frame


class ScoreError(ValueError):
    pass


@dataclass
class MaskScore:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f_measure: float

    @classmethod
    def from_counts(cls, tp, fp, fn, tn) -> "MaskScore":
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f = _ratio(2 * precision * recall, precision + recall)
        return cls(int(tp), int(fp), int(fn), int(tn), precision, recall, f)


@dataclass
class BgScore:
    mad: float
    max_err: int
    mismatched_pixels: int


def _ratio(a, b):
    return a / b if b else 0.0


def _arr(x):
    return x.data if isinstance(x, Frame) else np.asarray(x)


def mask_metrics(pred, gt) -> MaskScore:
    """Confusion counts with 255 (any nonzero value) as foreground."""
    p, g = _arr(pred), _arr(gt)
    if p.shape != g.shape:
        raise ScoreError(f"dims mismatch: prediction {p.shape}, ground truth {g.shape}")
    p, g = p > 0, g > 0
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    return MaskScore.from_counts(tp, fp, fn, tn)


def background_error(est, gt) -> BgScore:
    e, g = _arr(est), _arr(gt)
    if e.shape != g.shape:
        raise ScoreError(f"dims mismatch: estimate {e.shape}, ground truth {g.shape}")
    diff = np.abs(e.astype(np.int16) - g.astype(np.int16))
    return BgScore(float(diff.mean()), int(diff.max()), int((diff > 0).sum()))


def to_keyvalue(score, prefix: str = "") -> str:
    return "".join(f"{prefix}{k}={v}\n" for k, v in asdict(score).items())


def to_csv(rows, names=None) -> str:
    """CSV with a ``name`` column followed by the score fields."""
    rows = list(rows)
    if not rows:
        return ""
    out = io.StringIO()
    fields = list(asdict(rows[0]).keys())
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["name", *fields])
    for k, row in enumerate(rows):
        name = names[k] if names else str(k + 1)
        writer.writerow([name, *asdict(row).values()])
    return out.getvalue()
