"""Label similarity: correlation coefficient and mean absolute difference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedCorrelation(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityParams:
    t1: float = 0.8  # correlation must exceed this
    t2: float = 3.0  # MAD (gray levels) must stay below this
    sigma_floor: float = 1e-6

    def __post_init__(self):
        if not -1.0 <= self.t1 <= 1.0:
            raise ValueError("t1 must lie in [-1, 1]")
        if self.t2 < 0:
            raise ValueError("t2 must be non-negative")


def _values(x):
    return x.values if hasattr(x, "values") else np.asarray(x)


def _stats(x):
    if hasattr(x, "mean") and hasattr(x, "std") and not isinstance(x, np.ndarray):
        return x.mean, x.std
    v = np.asarray(x, dtype=np.float64)
    return float(v.mean()), float(v.std())


def _check_lengths(va, vb):
    if va.shape != vb.shape:
        raise ValueError(f"labels differ in length: {va.size} vs {vb.size}")


def correlation(a, b, sigma_floor: float = 1e-6) -> float:
    """Pearson correlation between two labels (or plain vectors)."""
    va, vb = _values(a), _values(b)
    _check_lengths(va, vb)
    ma, sa = _stats(a)
    mb, sb = _stats(b)
    if sa <= sigma_floor or sb <= sigma_floor:
        raise UndefinedCorrelation("undefined correlation: flat label")
    cov = np.dot(va.astype(np.float64) - ma, vb.astype(np.float64) - mb) / va.size
    return float(cov / (sa * sb))


def mad(a, b) -> float:
    va, vb = _values(a), _values(b)
    _check_lengths(va, vb)
    return float(np.abs(va.astype(np.float64) - vb).mean())


def similar(a, b, p: SimilarityParams = SimilarityParams()) -> bool:
    """Whether two labels show the same content.

    Textured pairs need correlation > t1 and MAD < t2. Two flat labels
    (std <= sigma_floor) match when their means differ by less than t2; a
    flat label never matches a textured one.
    """
    ma, sa = _stats(a)
    mb, sb = _stats(b)
    flat_a, flat_b = sa <= p.sigma_floor, sb <= p.sigma_floor
    if flat_a or flat_b:
        _check_lengths(_values(a), _values(b))
        return flat_a and flat_b and abs(ma - mb) < p.t2
    # MAD first: it is cheaper and rejects most non-matching pairs
    if not mad(a, b) < p.t2:
        return False
    return correlation(a, b, p.sigma_floor) > p.t1
