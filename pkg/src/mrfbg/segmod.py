"""Block-based foreground segmentation against per-location Gaussians.

Each overlapping block location gets a diagonal Gaussian over its DCT
descriptor. Training fits a two-component mixture per location and keeps
the dominant component when the weights differ by more than 0.5,
otherwise a single Gaussian over all samples. The means can afterwards be
replaced by the descriptors of a reconstructed background image, keeping
the variances. Frames are classified block by block through three
classifiers (Gaussian, cosine, temporal) and the overlapping decisions are
voted into a pixel mask.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .blocks import descriptors, lattice_blocks, lattice_origins
from .imagio import Frame, FrameSequence, atomic_write_bytes

log = logging.getLogger(__name__)

GAUSSIAN, COSINE, TEMPORAL, REJECTED = "gaussian", "cosine", "temporal", None
_STAGE_CODES = {0: REJECTED, 1: GAUSSIAN, 2: COSINE, 3: TEMPORAL}


# with step N/2 each pixel sits under four blocks; at 0.5 the two blocks
# that merely graze an object edge carry the vote and dilate the mask by ~N/2
DEFAULT_VOTE = 0.75


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SegConfig:
    n: int = 16
    step: int = 8
    d: int = 4
    th_mahal: float | None = None  # None: chi-square 0.999 quantile at d * channels dof
    th_cos: float = 0.005
    th_temporal: float = 3.0
    vote: float = DEFAULT_VOTE
    var_floor: float = 1e-4
    em_iters: int = 100
    em_tol: float = 1e-6

    def mahal_threshold(self, channels: int) -> float:
        if self.th_mahal is not None:
            return float(self.th_mahal)
        return float(stats.chi2.ppf(0.999, self.d * channels))


@dataclass
class BlockModel:
    mean: np.ndarray
    var: np.ndarray
    trained_on: int = 0


@dataclass
class BackgroundModel:
    """Gaussians on the overlapping-block lattice of ``width`` x ``height`` frames.

    ``mean`` and ``var`` have shape (len(ys), len(xs), d * channels).
    """

    mean: np.ndarray
    var: np.ndarray
    trained_on: int
    width: int
    height: int
    channels: int
    n: int = 16
    step: int = 8
    d: int = 4
    th_mahal: float = 18.47
    th_cos: float = 0.005
    th_temporal: float = 3.0
    vote: float = DEFAULT_VOTE
    dominant: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    @property
    def xs(self):
        return lattice_origins(self.width, self.n, self.step)

    @property
    def ys(self):
        return lattice_origins(self.height, self.n, self.step)

    @property
    def grid(self):
        return self.mean.shape[:2]

    def block(self, r: int, c: int) -> BlockModel:
        return BlockModel(self.mean[r, c], self.var[r, c], self.trained_on)

    def frame_descriptors(self, data: np.ndarray) -> np.ndarray:
        blocks, _, _ = lattice_blocks(data, self.n, self.step)
        return descriptors(blocks, self.d)


@dataclass
class SegState:
    descriptors: np.ndarray | None = None
    foreground: np.ndarray | None = None


# ------------------------------------------------------------------ training

def _diag_logpdf(x, mu, var):
    # x: (L, F, d); mu, var: (L, K, d) -> (L, F, K)
    diff = x[:, :, None, :] - mu[:, None, :, :]
    return -0.5 * (np.log(2 * np.pi * var)[:, None] + diff ** 2 / var[:, None]).sum(-1)


def fit_two_gaussians(x: np.ndarray, var_floor=1e-4, iters=100, tol=1e-6):
    """Batched EM for a two-component diagonal mixture at every location.

    ``x`` has shape (L, F, d). Returns weights (L, 2), means and variances
    (L, 2, d) and a degenerate flag per location (a component that ends
    with less than one sample's worth of responsibility, or non-finite
    parameters).
    """
    x = np.asarray(x, dtype=np.float64)
    nloc, nf, _ = x.shape
    centre = x.mean(axis=1, keepdims=True)
    # deterministic two-seed start: the sample nearest the mean, then the one farthest from it
    first = np.argmin(((x - centre) ** 2).sum(-1), axis=1)
    seed1 = x[np.arange(nloc), first]
    second = np.argmax(((x - seed1[:, None]) ** 2).sum(-1), axis=1)
    seed2 = x[np.arange(nloc), second]
    mu = np.stack([seed1, seed2], axis=1)
    var = np.maximum(x.var(axis=1), var_floor)[:, None, :].repeat(2, axis=1)
    w = np.full((nloc, 2), 0.5)
    nk = np.full((nloc, 2), nf / 2)
    prev = np.full(nloc, np.nan)
    # each location stops on its own once its log-likelihood settles
    active = np.arange(nloc)
    for it in range(iters):
        xa, mua, vara = x[active], mu[active], var[active]
        logp = _diag_logpdf(xa, mua, vara) + np.log(np.maximum(w[active], 1e-300))[:, None, :]
        ll_f = logsumexp(logp, axis=2)
        resp = np.exp(logp - ll_f[..., None])
        ll = ll_f.sum(axis=1)
        nka = resp.sum(axis=1)
        safe = np.maximum(nka, 1e-12)[..., None]
        mu_new = np.einsum("lfk,lfd->lkd", resp, xa) / safe
        var_new = np.einsum("lfk,lfkd->lkd", resp, (xa[:, :, None, :] - mu_new[:, None]) ** 2) / safe
        # empty components keep their previous parameters
        keep = (nka < 1e-12)[..., None]
        mu[active] = np.where(keep, mua, mu_new)
        var[active] = np.maximum(np.where(keep, vara, var_new), var_floor)
        w[active] = nka / nf
        nk[active] = nka
        last = prev[active]
        done = np.abs(ll - last) <= tol * np.maximum(np.abs(last), 1e-300)
        prev[active] = ll
        active = active[~done]
        if not len(active):
            break
    degenerate = (nk < 1.0).any(axis=1) | ~np.isfinite(mu).all(axis=(1, 2)) | ~np.isfinite(var).all(axis=(1, 2))
    return w, mu, var, degenerate


def train_model(seq: FrameSequence, cfg: SegConfig = SegConfig()) -> BackgroundModel:
    """Dual-Gaussian background model from a training sequence."""
    if len(seq) < 2:
        raise ModelError("training needs at least two frames")
    desc = np.stack([descriptors(lattice_blocks(fr.data, cfg.n, cfg.step)[0], cfg.d) for fr in seq])
    nf, ny, nx, dim = desc.shape
    x = desc.reshape(nf, ny * nx, dim).transpose(1, 0, 2)
    w, mu, var, degenerate = fit_two_gaussians(x, cfg.var_floor, cfg.em_iters, cfg.em_tol)
    dominant = (np.abs(w[:, 0] - w[:, 1]) > 0.5) & ~degenerate
    top = np.argmax(w, axis=1)
    idx = np.arange(len(x))
    mean = np.where(dominant[:, None], mu[idx, top], x.mean(axis=1))
    variance = np.where(dominant[:, None], var[idx, top], np.maximum(x.var(axis=1), cfg.var_floor))
    if degenerate.any():
        log.info("EM degenerate at %d locations; single Gaussian used there", int(degenerate.sum()))
    return BackgroundModel(
        mean=mean.reshape(ny, nx, dim), var=variance.reshape(ny, nx, dim), trained_on=nf,
        width=seq.width, height=seq.height, channels=seq.channels, n=cfg.n, step=cfg.step,
        d=cfg.d, th_mahal=cfg.mahal_threshold(seq.channels), th_cos=cfg.th_cos,
        th_temporal=cfg.th_temporal, vote=cfg.vote,
        dominant=dominant.reshape(ny, nx), degenerate=degenerate.reshape(ny, nx),
    )


def apply_mrf_means(model: BackgroundModel, bg: Frame) -> BackgroundModel:
    """Replace the means by the descriptors of a background image; variances stay.

    ``bg`` may be smaller than the model frame (a reconstruction cropped to
    whole blocks); locations whose block does not fit inside it keep their
    trained mean.
    """
    if bg.channels != model.channels or bg.width > model.width or bg.height > model.height:
        raise ModelError(
            f"model/background mismatch: model {model.width}x{model.height}x{model.channels}, "
            f"background {bg.width}x{bg.height}x{bg.channels}"
        )
    xs, ys = np.asarray(model.xs), np.asarray(model.ys)
    fit_x = xs + model.n <= bg.width
    fit_y = ys + model.n <= bg.height
    if not fit_x.any() or not fit_y.any():
        raise ModelError("model/background mismatch: background smaller than one block")
    mean = model.mean.copy()
    sub = bg.data
    for r in np.flatnonzero(fit_y):
        y = ys[r]
        blocks = np.stack([sub[y:y + model.n, x:x + model.n] for x in xs[fit_x]])
        mean[r, fit_x] = descriptors(blocks, model.d)
    return replace(model, mean=mean, var=model.var.copy())


# ------------------------------------------------------------ classification

def classify_block(model: BlockModel, d, prev=None, th_mahal=18.47, th_cos=0.005, th_temporal=3.0):
    """Run one block through the classifier cascade.

    ``prev`` is the co-located (descriptor, was_foreground) pair of the
    previous frame, or None. Returns (is_foreground, stage) where stage
    names the classifier that accepted the block as background, or None.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.sum((d - model.mean) ** 2 / model.var) <= th_mahal:
        return False, GAUSSIAN
    nd, nm = np.linalg.norm(d), np.linalg.norm(model.mean)
    if nd > 0 and nm > 0 and 1.0 - np.dot(d, model.mean) / (nd * nm) <= th_cos:
        return False, COSINE
    if prev is not None:
        prev_d, prev_fg = prev
        if not prev_fg and np.abs(d - prev_d).mean() <= th_temporal:
            return False, TEMPORAL
    return True, REJECTED


def classify_blocks(model: BackgroundModel, desc: np.ndarray, state: SegState | None = None):
    """Vectorised cascade over the whole lattice.

    Returns (foreground bool grid, stage code grid) with codes 1/2/3 for the
    gaussian/cosine/temporal classifier and 0 for foreground.
    """
    mu, var = model.mean, model.var
    stage = np.zeros(desc.shape[:2], dtype=np.int8)
    a = ((desc - mu) ** 2 / var).sum(-1) <= model.th_mahal
    stage[a] = 1
    nd = np.linalg.norm(desc, axis=-1)
    nm = np.linalg.norm(mu, axis=-1)
    ok = (nd > 0) & (nm > 0)
    cos = np.where(ok, (desc * mu).sum(-1) / np.where(ok, nd * nm, 1.0), -np.inf)
    b = ~a & ok & (1.0 - cos <= model.th_cos)
    stage[b] = 2
    if state is not None and state.descriptors is not None:
        c = (stage == 0) & ~state.foreground & (np.abs(desc - state.descriptors).mean(-1) <= model.th_temporal)
        stage[c] = 3
    return stage == 0, stage


def vote_mask(foreground: np.ndarray, xs, ys, n: int, width: int, height: int, vote: float = DEFAULT_VOTE) -> Frame:
    decisions = [((x, y), bool(foreground[r, c])) for r, y in enumerate(ys) for c, x in enumerate(xs)]
    return generate_mask(decisions, width, height, n, vote)


def generate_mask(decisions, width: int, height: int, n: int, vote: float = DEFAULT_VOTE) -> Frame:
    """Pixel mask from ((x, y), is_foreground) block decisions.

    A pixel is foreground when at least ``vote`` of the blocks covering it
    are foreground.
    """
    fg = np.zeros((height, width), dtype=np.int32)
    cover = np.zeros((height, width), dtype=np.int32)
    for (x, y), is_fg in decisions:
        cover[y:y + n, x:x + n] += 1
        if is_fg:
            fg[y:y + n, x:x + n] += 1
    if (cover == 0).any():
        raise ModelError("decisions leave pixels uncovered")
    return Frame(np.where(fg >= vote * cover, 255, 0).astype(np.uint8))


def segment(model: BackgroundModel, frame: Frame, state: SegState | None = None):
    """Foreground mask of one frame; returns (mask, new state)."""
    if (frame.width, frame.height, frame.channels) != (model.width, model.height, model.channels):
        raise ModelError(
            f"model/frame mismatch: model {model.width}x{model.height}x{model.channels}, "
            f"frame {frame.width}x{frame.height}x{frame.channels}"
        )
    desc = model.frame_descriptors(frame.data)
    fg, _ = classify_blocks(model, desc, state)
    mask = vote_mask(fg, model.xs, model.ys, model.n, model.width, model.height, model.vote)
    mask.index = frame.index
    return mask, SegState(desc, fg)


def check_reinit(history, k: int = 3, fraction: float = 0.7) -> bool:
    """True when each of the last ``k`` foreground fractions exceeds ``fraction``."""
    if len(history) < k:
        return False
    return all(h > fraction for h in list(history)[-k:])


# -------------------------------------------------------------- model files

MAGIC = b"BGM1"
_HEADER = struct.Struct("<4sIIIIIIIIIIdddd")


def encode_model(model: BackgroundModel) -> bytes:
    ny, nx, dim = model.mean.shape
    head = _HEADER.pack(
        MAGIC, 1, model.n, model.step, model.d, model.channels, nx, ny, model.width, model.height,
        model.trained_on, model.th_mahal, model.th_cos, model.th_temporal, model.vote,
    )
    body = np.concatenate([model.mean, model.var], axis=-1).astype("<f8").tobytes()
    return head + body


def decode_model(buf: bytes) -> BackgroundModel:
    if len(buf) < _HEADER.size or buf[:4] != MAGIC:
        raise ModelError("not a background model file (bad magic)")
    (_, version, n, step, d, channels, nx, ny, width, height, trained_on,
     th_mahal, th_cos, th_temporal, vote) = _HEADER.unpack_from(buf)
    if version != 1:
        raise ModelError(f"unsupported model version {version}")
    dim = d * channels
    body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if body.size != ny * nx * 2 * dim:
        raise ModelError("model file truncated or corrupt")
    if (len(lattice_origins(width, n, step)), len(lattice_origins(height, n, step))) != (nx, ny):
        raise ModelError("model lattice does not match its frame size")
    body = body.reshape(ny, nx, 2 * dim).astype(np.float64)
    return BackgroundModel(
        mean=body[..., :dim].copy(), var=body[..., dim:].copy(), trained_on=trained_on,
        width=width, height=height, channels=channels, n=n, step=step, d=d,
        th_mahal=th_mahal, th_cos=th_cos, th_temporal=th_temporal, vote=vote,
    )


def save_model(model: BackgroundModel, path):
    atomic_write_bytes(path, encode_model(model))


def load_model(path) -> BackgroundModel:
    with open(path, "rb") as fh:
        return decode_model(fh.read())
