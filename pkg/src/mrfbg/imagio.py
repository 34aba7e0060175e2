"""Reading and writing frames as binary PGM/PPM or 8-bit PNG."""

from __future__ import annotations

import glob
import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image


class ImageIOError(ValueError):
    pass


@dataclass
class Frame:
    """One 8-bit raster of a sequence.

    ``data`` has shape (height, width, channels) and dtype uint8; ``index``
    is the 1-based position in the sequence (0 when the frame stands alone).
    """

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ImageIOError(f"frame must be HxWx1 or HxWx3, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ImageIOError("frame samples must lie in [0, 255]")
            data = data.astype(np.uint8)
        self.data = np.ascontiguousarray(data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.data, other.data)


@dataclass
class FrameSequence:
    frames: list

    def __post_init__(self):
        if not self.frames:
            raise ImageIOError("no frames")
        shape = self.frames[0].data.shape
        for fr in self.frames:
            if fr.data.shape != shape:
                raise ImageIOError(
                    f"dimension mismatch: frame {fr.index} is {fr.data.shape}, expected {shape}"
                )

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, k):
        return self.frames[k]

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def channels(self) -> int:
        return self.frames[0].channels

    def stack(self) -> np.ndarray:
        """All frames as one (F, H, W, channels) uint8 array."""
        return np.stack([fr.data for fr in self.frames])

    @classmethod
    def from_arrays(cls, arrays) -> "FrameSequence":
        return cls([Frame(a, index=k + 1) for k, a in enumerate(arrays)])


def _pnm_tokens(buf: bytes, count: int):
    # Header tokens of a PNM file; '#' comments run to end of line.
    tokens = []
    pos = 2
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageIOError("truncated PNM header")
        tokens.append(int(buf[start:pos]))
    # exactly one whitespace byte separates header from raster
    return tokens, pos + 1


def _decode_pnm(buf: bytes) -> np.ndarray:
    channels = 1 if buf[:2] == b"P5" else 3
    (width, height, maxval), offset = _pnm_tokens(buf, 3)
    if maxval != 255:
        raise ImageIOError(f"unsupported maxval {maxval}")
    nbytes = width * height * channels
    raster = buf[offset:offset + nbytes]
    if len(raster) != nbytes:
        raise ImageIOError("truncated PNM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)


def decode_image(buf: bytes) -> np.ndarray:
    if buf[:2] in (b"P5", b"P6"):
        return _decode_pnm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        with Image.open(io.BytesIO(buf)) as im:
            if im.mode not in ("L", "RGB"):
                raise ImageIOError(f"unsupported PNG mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
        return arr if arr.ndim == 3 else arr[:, :, None]
    raise ImageIOError("unrecognised image format")


def read_image(path, index: int = 0) -> Frame:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
        arr = decode_image(buf)
    except (ImageIOError, OSError, ValueError) as exc:
        raise ImageIOError(f"decode error in {path}: {exc}") from exc
    return Frame(arr.copy(), index=index)


def sequence_paths(dir_path, pattern: str = "*", limit: int | None = None) -> list:
    """Files of ``dir_path`` matching ``pattern``, in lexicographic order."""
    if not os.path.isdir(dir_path):
        raise ImageIOError(f"not a directory: {dir_path}")
    paths = sorted(p for p in glob.glob(os.path.join(dir_path, pattern)) if os.path.isfile(p))
    if limit is not None:
        paths = paths[:limit]
    if not paths:
        raise ImageIOError(f"no frames in {dir_path} matching {pattern!r}")
    return paths


def read_sequence(dir_path, pattern: str = "*", limit: int | None = None) -> FrameSequence:
    """Read all files in ``dir_path`` matching ``pattern`` as one sequence.

    Frames are numbered from 1. With ``limit`` only the first ``limit``
    files are decoded.
    """
    paths = sequence_paths(dir_path, pattern, limit)
    return FrameSequence([read_image(p, index=k + 1) for k, p in enumerate(paths)])


def encode_image(frame: Frame, fmt: str) -> bytes:
    fmt = fmt.lower()
    data = frame.data
    if fmt == "pgm":
        if frame.channels != 1:
            raise ImageIOError("format/channel mismatch: pgm needs one channel")
        return b"P5\n%d %d\n255\n" % (frame.width, frame.height) + data.tobytes()
    if fmt == "ppm":
        if frame.channels != 3:
            raise ImageIOError("format/channel mismatch: ppm needs three channels")
        return b"P6\n%d %d\n255\n" % (frame.width, frame.height) + data.tobytes()
    if fmt == "png":
        im = Image.fromarray(data[:, :, 0] if frame.channels == 1 else data)
        out = io.BytesIO()
        im.save(out, format="PNG")
        return out.getvalue()
    raise ImageIOError(f"unknown format {fmt!r}")


def atomic_write_bytes(path, payload: bytes):
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_for_path(path) -> str:
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext not in ("pgm", "ppm", "png"):
        raise ImageIOError(f"cannot infer image format from {path}")
    return ext


def write_image(frame: Frame, path, fmt: str | None = None):
    if not isinstance(frame, Frame):
        frame = Frame(frame)
    atomic_write_bytes(path, encode_image(frame, fmt or format_for_path(path)))


def native_format(channels: int) -> str:
    return "pgm" if channels == 1 else "ppm"
