"""Command-line driver: estimate-bg, train, segment, synth, eval.

Configuration comes from built-in defaults, then an optional ``key = value``
file given with ``--config``, then command-line flags. Exit status is 0 on
success, 1 for usage errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import metrics, mrf, repset, segmod, synth
from .imagio import FrameSequence, atomic_write_bytes, native_format, read_image, read_sequence, sequence_paths, write_image
from .similarity import SimilarityParams

log = logging.getLogger("mrfbg")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class Config:
    # background estimation
    block_size: int = 16
    t1: float = 0.8
    t2: float = 3.0
    sigma_floor: float = 1e-6
    f_min: int = 3
    temperature: float = 1024.0
    w_max: float = 150.0
    eta: float = 3.0
    max_iters: int = 20
    frames: int = 200
    # segmentation; step 0 means block_size // 2, th_mahal 0 the chi-square default
    step: int = 0
    d: int = 4
    th_mahal: float = 0.0
    th_cos: float = 0.005
    th_temporal: float = 3.0
    vote: float = segmod.DEFAULT_VOTE
    var_floor: float = 1e-4
    em_iters: int = 100
    em_tol: float = 1e-6
    reinit_k: int = 3
    reinit_fraction: float = 0.7
    reinit_frames: int = 20
    # io
    pattern: str = "*"
    seed: int = -1  # synth only; -1 keeps the scene file's seed
    input: str = ""
    output: str = ""
    model: str = ""
    gt: str = ""
    debug_dir: str = ""

    def sim_params(self) -> SimilarityParams:
        return SimilarityParams(self.t1, self.t2, self.sigma_floor)

    def mrf_params(self) -> mrf.MrfParams:
        return mrf.MrfParams(self.temperature, self.w_max, self.eta, self.max_iters, self.f_min, self.sim_params())

    def seg_config(self) -> segmod.SegConfig:
        return segmod.SegConfig(
            n=self.block_size, step=self.step or max(1, self.block_size // 2), d=self.d,
            th_mahal=self.th_mahal or None, th_cos=self.th_cos, th_temporal=self.th_temporal,
            vote=self.vote, var_floor=self.var_floor, em_iters=self.em_iters, em_tol=self.em_tol,
        )

    def validate(self):
        try:
            self.mrf_params()
            repset.CollectorParams(self.f_min, self.sim_params())
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if self.block_size < 2:
            raise UsageError("block_size must be at least 2")
        if self.frames < 1:
            raise UsageError("frames must be positive")
        if not 0 < self.vote <= 1:
            raise UsageError("vote must lie in (0, 1]")
        if self.d < 1 or self.d > self.block_size ** 2:
            raise UsageError("d must lie in [1, block_size^2]")
        if self.step < 0:
            raise UsageError("step must be non-negative")
        if self.reinit_frames < self.f_min:
            raise UsageError("reinit_frames must be at least f_min")
        return self


_FIELDS = {f.name: f for f in fields(Config)}
# config-file spellings of the path fields
_ALIASES = {"in": "input", "out": "output", "block": "block_size", "debug-dir": "debug_dir"}


def _coerce(name, text):
    kind = type(getattr(Config(), name))
    try:
        return kind(text)
    except ValueError as exc:
        raise UsageError(f"config key {name}: cannot parse {text!r} as {kind.__name__}") from exc


def load_config(path) -> dict:
    """Overrides from a ``key = value`` file; unknown keys are rejected."""
    try:
        with open(path, encoding="utf-8") as fh:
            kv = synth.parse_kv(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except synth.SceneError as exc:
        raise UsageError(f"config {path}: {exc}") from exc
    out = {}
    for key, value in kv.items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELDS:
            raise UsageError(f"unknown config key {key!r} in {path}")
        out[name] = _coerce(name, value)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file of parameters")
    common.add_argument("--in", dest="input", help="input directory (or file for eval/synth)")
    common.add_argument("--out", dest="output", help="output path")
    common.add_argument("--frames", type=int, help="use at most this many frames (default 200)")
    common.add_argument("--block-size", dest="block_size", type=int, help="block side N (default 16)")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--pattern", help="glob for frame files (default *)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mrfbg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate-bg", parents=[common], help="reconstruct the background of a cluttered sequence")
    p.add_argument("--debug-dir", dest="debug_dir", help="write per-pass snapshots and contact sheets here")

    p = sub.add_parser("train", parents=[common], help="fit the segmentation model")
    p.add_argument("--no-mrf", dest="no_mrf", action="store_true", help="keep the EM means (baseline model)")

    p = sub.add_parser("segment", parents=[common], help="write one foreground mask per frame")
    p.add_argument("--model", help="model file from train")
    p.add_argument("--reinit", action="store_true", help="re-seed the model when the scene changes wholesale")

    sub.add_parser("synth", parents=[common], help="render a scene file with ground truth")

    p = sub.add_parser("eval", parents=[common], help="score masks or a background against ground truth")
    p.add_argument("--gt", help="ground truth file or directory")
    return parser


def resolve(args) -> Config:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for name in ("input", "output", "frames", "block_size", "seed", "pattern", "model", "gt", "debug_dir"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return Config(**values).validate()


def _log_config(cfg: Config, command: str):
    log.info("%s config: %s", command, " ".join(f"{k}={v}" for k, v in vars(cfg).items()))


def _need(value, flag):
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _read_frames(cfg: Config, limit=None):
    seq = read_sequence(_need(cfg.input, "--in"), cfg.pattern, limit)
    log.info("read %d frames of %dx%dx%d from %s", len(seq), seq.width, seq.height, seq.channels, cfg.input)
    return seq


def _debug_snapshots(cfg: Config):
    if not cfg.debug_dir:
        return None
    os.makedirs(cfg.debug_dir, exist_ok=True)

    def on_pass(k, bg):
        write_image(bg.to_frame(), os.path.join(cfg.debug_dir, f"pass_{k:02d}.{native_format(bg.channels)}"))

    return on_pass


def cmd_estimate_bg(cfg: Config, args) -> int:
    out = _need(cfg.output, "--out")
    seq = _read_frames(cfg, cfg.frames)
    p = cfg.mrf_params()
    states = repset.collect(seq, cfg.block_size, p.collector)
    bg = mrf.icm(states, p, on_pass=_debug_snapshots(cfg))
    if cfg.debug_dir:
        for row in states:
            for st in row:
                if st.size > 1:
                    sheet = repset.contact_sheet(st)
                    name = f"reps_{st.node.j:03d}_{st.node.i:03d}.{native_format(sheet.channels)}"
                    write_image(sheet, os.path.join(cfg.debug_dir, name))
    log.info("ICM label changes per sweep: %s", bg.trace.pass_changes)
    write_image(bg.to_frame(), out)
    return 0


def cmd_train(cfg: Config, args) -> int:
    out = _need(cfg.output, "--out")
    seq = _read_frames(cfg, cfg.frames)
    model = segmod.train_model(seq, cfg.seg_config())
    if not args.no_mrf:
        bg = mrf.estimate_background(seq, cfg.block_size, cfg.mrf_params())
        model = segmod.apply_mrf_means(model, bg)
    segmod.save_model(model, out)
    log.info("model %dx%d locations written to %s", model.grid[1], model.grid[0], out)
    return 0


def _mask_name(k: int) -> str:
    return f"mask_{k:05d}.pgm"


def cmd_segment(cfg: Config, args) -> int:
    model = segmod.load_model(_need(cfg.model, "--model"))
    out = _need(cfg.output, "--out")
    # --frames caps segmentation only when given explicitly
    seq = _read_frames(cfg, args.frames)
    os.makedirs(out, exist_ok=True)
    state, history, buffer = None, [], None
    for fr in seq:
        mask, state = segmod.segment(model, fr, state)
        write_image(mask, os.path.join(out, _mask_name(fr.index)))
        if not args.reinit:
            continue
        if buffer is not None:
            buffer.append(fr)
            if len(buffer) >= cfg.reinit_frames:
                model = _rebuild(model, buffer, cfg)
                state, history, buffer = None, [], None
            continue
        history.append(float((mask.data > 0).mean()))
        if segmod.check_reinit(history, cfg.reinit_k, cfg.reinit_fraction):
            log.warning("frame %d: foreground above %.2f for %d frames; rebuilding from the next %d frames",
                        fr.index, cfg.reinit_fraction, cfg.reinit_k, cfg.reinit_frames)
            buffer = []
    log.info("%d masks written to %s", len(seq), out)
    return 0


def _rebuild(model, frames, cfg: Config):
    try:
        bg = mrf.estimate_background(FrameSequence(frames), cfg.block_size, cfg.mrf_params())
    except (mrf.UncoveredNode, repset.SequenceTooShort) as exc:
        log.warning("model kept: rebuild failed (%s)", exc)
        return model
    log.info("model means replaced from frames %d-%d", frames[0].index, frames[-1].index)
    return segmod.apply_mrf_means(model, bg)


def _truncate(spec, frames: int):
    """The first ``frames`` frames of a scene; objects appearing later are dropped."""
    obs = [replace(ob, visible=(ob.visible[0], min(ob.visible[1], frames)))
           for ob in spec.objects if ob.visible[0] <= frames]
    return replace(spec, frames=frames, objects=obs)


def cmd_synth(cfg: Config, args) -> int:
    path = _need(cfg.input, "--in")
    out = _need(cfg.output, "--out")
    try:
        with open(path, encoding="utf-8") as fh:
            spec = synth.scene_from_text(fh.read(), os.path.dirname(os.path.abspath(path)))
    except OSError as exc:
        raise DataError(f"cannot read scene {path}: {exc}") from exc
    if cfg.seed >= 0:
        spec = replace(spec, seed=cfg.seed)
    if args.frames is not None:
        spec = _truncate(spec, args.frames)
    scene = synth.generate(spec)
    ext = native_format(spec.channels)
    for sub in ("frames", "gt_masks"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    for fr, m in zip(scene.frames, scene.masks):
        write_image(fr, os.path.join(out, "frames", f"frame_{fr.index:05d}.{ext}"))
        write_image(m, os.path.join(out, "gt_masks", _mask_name(fr.index)))
    write_image(scene.background, os.path.join(out, f"gt_background.{ext}"))
    with open(os.path.join(out, "scene.txt"), "w", encoding="utf-8") as fh:
        fh.write(synth.scene_to_text(spec))
    log.info("%d frames written to %s", spec.frames, out)
    return 0


def _write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def cmd_eval(cfg: Config, args) -> int:
    pred, gt = _need(cfg.input, "--in"), _need(cfg.gt, "--gt")
    if os.path.isfile(pred):
        score = metrics.background_error(read_image(pred), read_image(gt))
        sys.stdout.write(metrics.to_keyvalue(score))
        if cfg.output:
            _write_text(cfg.output, metrics.to_csv([score], [os.path.basename(pred)]))
        return 0
    preds = read_sequence(pred, cfg.pattern, args.frames)
    truths = read_sequence(gt, cfg.pattern, args.frames)
    if len(preds) != len(truths):
        raise DataError(f"frame count mismatch: {len(preds)} predictions, {len(truths)} ground truth")
    names = [os.path.basename(p) for p in sequence_paths(pred, cfg.pattern, args.frames)]
    rows = [metrics.mask_metrics(p, g) for p, g in zip(preds, truths)]
    total = metrics.MaskScore.from_counts(*(sum(getattr(r, k) for r in rows) for k in ("tp", "fp", "fn", "tn")))
    sys.stdout.write(metrics.to_keyvalue(total))
    sys.stdout.write(f"mean_f_measure={np.mean([r.f_measure for r in rows])}\nframes={len(rows)}\n")
    if cfg.output:
        _write_text(cfg.output, metrics.to_csv(rows, names))
    return 0


COMMANDS = {
    "estimate-bg": cmd_estimate_bg, "train": cmd_train, "segment": cmd_segment,
    "synth": cmd_synth, "eval": cmd_eval,
}

# every module error derives from ValueError
_DATA_ERRORS = (DataError, OSError, ValueError)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        cfg = resolve(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mrfbg: error: {exc}", file=sys.stderr)
        return 1
    _log_config(cfg, args.command)
    try:
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"mrfbg: error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"mrfbg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
