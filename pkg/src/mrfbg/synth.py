"""Deterministic synthetic scenes with ground-truth backgrounds and masks.

A scene is a procedural background plus textured objects that appear,
move along piecewise-linear paths, park, and leave. Everything is drawn
from one seed, so a spec always renders the same frames.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .imagio import Frame, FrameSequence, read_image


class SceneError(ValueError):
    pass


@dataclass
class ObjectSpec:
    width: int
    height: int
    path: list  # keyframes (frame, x, y) of the top-left corner
    visible: tuple  # (first, last) frame, inclusive, 1-based
    shape: str = "rect"  # rect | ellipse
    texture: str = "noise"  # noise | blob | stripes | flat
    level: float = 60.0
    contrast: float = 60.0
    cell: int = 2

    def position(self, t: int):
        ts = [k[0] for k in self.path]
        x = np.interp(t, ts, [k[1] for k in self.path])
        y = np.interp(t, ts, [k[2] for k in self.path])
        return int(round(x)), int(round(y))


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    channels: int = 1
    frames: int = 200
    seed: int = 0
    noise: int = 0  # per-pixel uniform integer noise in [-noise, noise]
    background: str = "smooth"  # smooth | checker | flat | file:<path>
    background_level: float = 128.0
    background_contrast: float = 40.0
    background_grain: float = 8.0
    background_cell: int = 8
    objects: list = field(default_factory=list)

    def validate(self):
        if self.width < 2 or self.height < 2:
            raise SceneError("scene must be at least 2x2 pixels")
        if self.channels not in (1, 3):
            raise SceneError("channels must be 1 or 3")
        if self.frames < 1:
            raise SceneError("frames must be positive")
        if self.noise < 0:
            raise SceneError("noise amplitude must be non-negative")
        kind = self.background.split(":", 1)[0]
        if kind not in ("smooth", "checker", "flat", "file"):
            raise SceneError(f"unknown background {self.background!r}")
        for k, ob in enumerate(self.objects):
            first, last = ob.visible
            if not 1 <= first <= last <= self.frames:
                raise SceneError(f"object {k}: visible interval {ob.visible} outside [1, {self.frames}]")
            if ob.shape not in ("rect", "ellipse"):
                raise SceneError(f"object {k}: unknown shape {ob.shape!r}")
            if ob.texture not in ("noise", "blob", "stripes", "flat"):
                raise SceneError(f"object {k}: unknown texture {ob.texture!r}")
            if not ob.path:
                raise SceneError(f"object {k}: empty path")
            if ob.width < 1 or ob.height < 1 or ob.width > self.width or ob.height > self.height:
                raise SceneError(f"object {k}: size {ob.width}x{ob.height} does not fit the frame")
            for t in range(first, last + 1):
                x, y = ob.position(t)
                if x < 0 or y < 0 or x + ob.width > self.width or y + ob.height > self.height:
                    raise SceneError(f"object {k}: leaves the frame at frame {t}")


def _smooth_field(rng, h, w, wavelengths=(24.0, 64.0), waves=3):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    for _ in range(waves):
        lam = rng.uniform(*wavelengths)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        out += np.cos(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / lam + phase)
    out += (xx / max(w - 1, 1) - 0.5) * rng.uniform(-1, 1) + (yy / max(h - 1, 1) - 0.5) * rng.uniform(-1, 1)
    span = np.abs(out).max()
    return out / span if span > 0 else out


def _cells(rng, h, w, cell):
    gh, gw = -(-h // cell), -(-w // cell)
    return np.kron(rng.uniform(-1, 1, (gh, gw)), np.ones((cell, cell)))[:h, :w]


def render_background(spec: SceneSpec, rng) -> np.ndarray:
    h, w, c = spec.height, spec.width, spec.channels
    kind, _, arg = spec.background.partition(":")
    if kind == "file":
        img = read_image(arg).data.astype(np.float64)
        if img.shape != (h, w, c):
            raise SceneError(f"background image {arg} is {img.shape}, scene is {(h, w, c)}")
        return img
    planes = []
    for _ in range(c):
        if kind == "flat":
            plane = np.full((h, w), spec.background_level)
        elif kind == "checker":
            yy, xx = np.mgrid[0:h, 0:w]
            sign = np.where(((yy // spec.background_cell) + (xx // spec.background_cell)) % 2 == 0, 1.0, -1.0)
            plane = spec.background_level + spec.background_contrast * sign
        else:
            plane = spec.background_level + spec.background_contrast * _smooth_field(rng, h, w)
            if spec.background_grain > 0:
                plane = plane + spec.background_grain * _cells(rng, h, w, 1)
        planes.append(plane)
    return np.clip(np.rint(np.stack(planes, axis=-1)), 0, 255)


def object_texture(ob: ObjectSpec, rng, channels: int) -> np.ndarray:
    h, w = ob.height, ob.width
    planes = []
    for _ in range(channels):
        if ob.texture == "flat":
            plane = np.zeros((h, w))
        elif ob.texture == "stripes":
            plane = np.where((np.arange(w) // max(ob.cell, 1)) % 2 == 0, 1.0, -1.0)[None, :].repeat(h, 0)
        elif ob.texture == "blob":
            plane = 0.8 * _smooth_field(rng, h, w, wavelengths=(20.0, 40.0)) + 0.2 * _cells(rng, h, w, ob.cell)
        else:
            plane = _cells(rng, h, w, ob.cell)
        planes.append(ob.level + ob.contrast * plane)
    return np.clip(np.rint(np.stack(planes, axis=-1)), 0, 255)


def object_mask(ob: ObjectSpec) -> np.ndarray:
    if ob.shape == "rect":
        return np.ones((ob.height, ob.width), dtype=bool)
    yy, xx = np.mgrid[0:ob.height, 0:ob.width]
    cy, cx = (ob.height - 1) / 2, (ob.width - 1) / 2
    return ((yy - cy) / (ob.height / 2)) ** 2 + ((xx - cx) / (ob.width / 2)) ** 2 <= 1.0


@dataclass
class Scene:
    frames: FrameSequence
    background: Frame
    masks: list  # one Frame per input frame, 0 / 255
    spec: SceneSpec


def generate(spec: SceneSpec) -> Scene:
    """Render every frame of a scene with its ground truth."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    bg = render_background(spec, rng)
    textures = [object_texture(ob, rng, spec.channels) for ob in spec.objects]
    shapes = [object_mask(ob) for ob in spec.objects]
    noise_rng = np.random.default_rng([spec.seed, 1])
    frames, masks = [], []
    for t in range(1, spec.frames + 1):
        img = bg.copy()
        gt = np.zeros((spec.height, spec.width), dtype=bool)
        for ob, tex, shp in zip(spec.objects, textures, shapes):
            if not ob.visible[0] <= t <= ob.visible[1]:
                continue
            x, y = ob.position(t)
            region = img[y:y + ob.height, x:x + ob.width]
            region[shp] = tex[shp]
            gt[y:y + ob.height, x:x + ob.width] |= shp
        if spec.noise:
            img = img + noise_rng.integers(-spec.noise, spec.noise + 1, size=img.shape)
        frames.append(Frame(np.clip(img, 0, 255).astype(np.uint8), index=t))
        masks.append(Frame(np.where(gt, 255, 0).astype(np.uint8), index=t))
    return Scene(FrameSequence(frames), Frame(bg.astype(np.uint8)), masks, spec)


def node_visibility(masks, n: int) -> np.ndarray:
    """Fraction of frames in which each n x n node shows no object pixel.

    Returns an array indexed [row, column] over the cropped grid.
    """
    occ = np.stack([m.data[:, :, 0] > 0 for m in masks])
    f, h, w = occ.shape
    rows, cols = h // n, w // n
    tiles = occ[:, :rows * n, :cols * n].reshape(f, rows, n, cols, n)
    return 1.0 - tiles.any(axis=(2, 4)).mean(axis=0)


# ---------------------------------------------------------------- scene files

def _parse_path(text: str):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        t, xy = item.split(":")
        x, y = xy.split(",")
        out.append((int(t), float(x), float(y)))
    return sorted(out)


def _format_path(path):
    return "; ".join(f"{int(t)}:{x:g},{y:g}" for t, x, y in path)


_SCENE_KEYS = {
    "width": int, "height": int, "channels": int, "frames": int, "seed": int, "noise": int,
    "background": str, "background_level": float, "background_contrast": float,
    "background_grain": float, "background_cell": int,
}
_OBJECT_KEYS = {
    "width": int, "height": int, "shape": str, "texture": str, "level": float,
    "contrast": float, "cell": int,
}


def parse_kv(text: str) -> dict:
    """``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise SceneError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def scene_from_text(text: str, base_dir: str = ".") -> SceneSpec:
    """Parse a scene file.

    Scene-level keys are plain (``width = 64``); object keys are prefixed
    ``object.<k>.`` and include ``path = t:x,y; t:x,y`` and
    ``visible = first-last``.
    """
    kv = parse_kv(text)
    spec, objects = {}, {}
    for key, value in kv.items():
        try:
            if key.startswith("object."):
                _, idx, name = key.split(".", 2)
                ob = objects.setdefault(int(idx), {})
                if name == "path":
                    ob["path"] = _parse_path(value)
                elif name == "visible":
                    first, last = value.split("-")
                    ob["visible"] = (int(first), int(last))
                elif name in _OBJECT_KEYS:
                    ob[name] = _OBJECT_KEYS[name](value)
                else:
                    raise SceneError(f"unknown object key {name!r}")
            elif key in _SCENE_KEYS:
                spec[key] = _SCENE_KEYS[key](value)
            else:
                raise SceneError(f"unknown key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(f"bad value for {key}: {value!r}") from exc
    bg = spec.get("background", "smooth")
    if bg.startswith("file:") and not os.path.isabs(bg[5:]):
        spec["background"] = "file:" + os.path.join(base_dir, bg[5:])
    obs = []
    for idx in sorted(objects):
        fields = objects[idx]
        for required in ("width", "height", "path", "visible"):
            if required not in fields:
                raise SceneError(f"object {idx}: missing {required}")
        obs.append(ObjectSpec(**fields))
    out = SceneSpec(**spec, objects=obs)
    out.validate()
    return out


def scene_to_text(spec: SceneSpec) -> str:
    lines = [f"{k} = {getattr(spec, k)}" for k in _SCENE_KEYS]
    for idx, ob in enumerate(spec.objects):
        for k in _OBJECT_KEYS:
            lines.append(f"object.{idx}.{k} = {getattr(ob, k)}")
        lines.append(f"object.{idx}.path = {_format_path(ob.path)}")
        lines.append(f"object.{idx}.visible = {ob.visible[0]}-{ob.visible[1]}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------- ready-made scenes

def _edge_point(rng, width, height, w, h):
    side = rng.integers(4)
    if side == 0:
        return 0, int(rng.integers(0, height - h + 1))
    if side == 1:
        return width - w, int(rng.integers(0, height - h + 1))
    if side == 2:
        return int(rng.integers(0, width - w + 1)), 0
    return int(rng.integers(0, width - w + 1)), height - h


def clutter_scene(seed: int, size: int = 64, frames: int = 200, n: int = 16, noise: int = 0,
                  objects: int | None = None, park=(120, 160), speed: float = 4.0) -> SceneSpec:
    """Scene where objects park over interior nodes longer than the background shows.

    Each object enters at the frame edge, travels to a spot that touches
    only interior nodes, stays for ``park`` frames and leaves again. With
    several objects each parks inside its own interior node.
    """
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, 3)) if objects is None else objects
    interior = [(j, i) for j in range(1, size // n - 1) for i in range(1, size // n - 1)]
    if count > len(interior):
        raise SceneError("more objects than interior nodes")
    cells = [interior[k] for k in rng.permutation(len(interior))[:count]]
    obs = []
    for j, i in cells:
        if count == 1:
            # a lone object may straddle interior nodes
            lo, hi = n, size - n
            w, h = (int(v) for v in rng.integers(10, 21, size=2))
            x = int(rng.integers(lo, hi - w + 1))
            y = int(rng.integers(lo, hi - h + 1))
        else:
            w, h = (int(v) for v in rng.integers(8, n + 1, size=2))
            x = i * n + int(rng.integers(0, n - w + 1))
            y = j * n + int(rng.integers(0, n - h + 1))
        dwell = int(rng.integers(park[0], park[1] + 1))
        ex0, ey0 = _edge_point(rng, size, size, w, h)
        ex1, ey1 = _edge_point(rng, size, size, w, h)
        t_in = max(1, int(np.ceil(np.hypot(x - ex0, y - ey0) / speed)))
        t_out = max(1, int(np.ceil(np.hypot(x - ex1, y - ey1) / speed)))
        start = int(rng.integers(1, frames - dwell - t_in - t_out + 2)) + t_in
        end = start + dwell - 1
        path = [(start - t_in, ex0, ey0), (start, x, y), (end, x, y), (end + t_out, ex1, ey1)]
        vis = (max(1, start - t_in), min(frames, end + t_out))
        obs.append(ObjectSpec(
            width=w, height=h, path=path, visible=vis, texture="noise",
            level=float(rng.uniform(40, 215)), contrast=float(rng.uniform(40, 80)), cell=2,
        ))
    return SceneSpec(width=size, height=size, frames=frames, seed=seed, noise=noise, objects=obs)


def parked_then_moving_scene(seed: int, width: int = 288, height: int = 192, train: int = 200,
                             test: int = 60, park=(160, 170), noise: int = 2, speed: float = 5.0,
                             texture: str = "noise", cell: int = 8, level=(30, 60), contrast=(60, 80),
                             size=(64, 80)):
    """Object parked for most of the training frames, then wandering.

    Returns (spec, parking rectangle (x, y, w, h)). Frames 1..train are the
    training part; the object keeps moving through the test frames.
    """
    rng = np.random.default_rng(seed)
    w, h = (int(v) for v in rng.integers(size[0], size[1] + 1, size=2))
    px = int(rng.integers(16, width - w - 16 + 1))
    py = int(rng.integers(16, height - h - 16 + 1))
    dwell = int(rng.integers(park[0], park[1] + 1))
    total = train + test
    path = [(1, px, py), (dwell, px, py)]
    t, x, y = dwell, px, py
    # waypoints never overlap the parking spot
    while t < total:
        for _ in range(100):
            nx = int(rng.integers(0, width - w + 1))
            ny = int(rng.integers(0, height - h + 1))
            far = abs(nx - px) > w + 8 or abs(ny - py) > h + 8
            if far:
                break
        dt = max(2, int(np.ceil(np.hypot(nx - x, ny - y) / speed)))
        t += dt
        path.append((t, nx, ny))
        x, y = nx, ny
    spec = SceneSpec(
        width=width, height=height, frames=total, seed=seed, noise=noise,
        objects=[ObjectSpec(width=w, height=h, path=path, visible=(1, total), texture=texture,
                            level=float(rng.uniform(*level)), contrast=float(rng.uniform(*contrast)), cell=cell)],
    )
    return spec, (px, py, w, h)
