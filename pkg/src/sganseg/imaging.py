"""Gray-level raster primitives.

Images are plain numpy arrays: a gray image is a 2-D ``float32`` array of
shape ``(height, width)`` with nominal range [0, 1]; a multi-channel image
is a 3-D array ``(channels, height, width)`` with 1 to 4 planes.  Every
operation returns a new array and never mutates its input.  Borders are
handled by edge replication throughout.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FormatError, LengthError, ParameterError

DTYPE = np.float32
RESAMPLE_METHODS = ("nearest", "bilinear", "bicubic")


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"rect extents must be >= 1, got {self.w}x{self.h}")


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, a sequence of ints or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def as_gray(img) -> np.ndarray:
    """Validate and convert ``img`` to a finite 2-D float32 array."""
    arr = np.asarray(img, dtype=DTYPE)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("image contains non-finite pixels")
    return arr


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header")
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode binary PGM bytes into a [0, 1] float32 image."""
    if data[:2] != b"P5":
        raise FormatError(f"unsupported PGM magic {data[:2]!r}; only binary P5 is read")
    tokens, offset = _read_header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"non-integer PGM header field: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise LengthError(f"PGM payload has {len(payload)} bytes, expected {need}")
    raw = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return (raw.astype(np.float64) / maxval).astype(DTYPE)


def encode_pgm(img, bit_depth: int = 8) -> bytes:
    """Encode an image as binary PGM, clamping to [0, 1] and rounding half up."""
    if bit_depth not in (8, 16):
        raise ParameterError(f"bit_depth must be 8 or 16, got {bit_depth}")
    arr = as_gray(img).astype(np.float64)
    maxval = 255 if bit_depth == 8 else 65535
    q = np.floor(np.clip(arr, 0.0, 1.0) * maxval + 0.5)
    dtype = np.dtype("u1") if bit_depth == 8 else np.dtype(">u2")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    return header + q.astype(dtype).tobytes()


def write_bytes_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv_atomic(path, header, rows) -> None:
    """Write a header row and data rows as CSV through a temp file and rename."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    write_bytes_atomic(path, buf.getvalue().encode("utf-8"))


def load_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def save_pgm(img, path, bit_depth: int = 8) -> None:
    write_bytes_atomic(path, encode_pgm(img, bit_depth))


def window(img, center: float, width: float) -> np.ndarray:
    """Map raw intensities (e.g. Hounsfield units) through a display window."""
    if not width > 0:
        raise ParameterError(f"window width must be > 0, got {width}")
    arr = np.asarray(img, dtype=np.float64)
    out = (arr - (center - width / 2.0)) / width
    return np.clip(out, 0.0, 1.0).astype(DTYPE)


def _cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    # Keys kernel evaluated at offsets 1+t, t, 1-t, 2-t
    d = np.stack([1 + t, t, 1 - t, 2 - t], axis=-1)
    w = np.where(
        d <= 1,
        (a + 2) * d**3 - (a + 3) * d**2 + 1,
        a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a,
    )
    return w


def _interp_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """Row-stochastic matrix mapping ``n_in`` samples to ``n_out`` samples."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if method == "nearest":
        idx = np.clip(np.floor(src + 0.5).astype(int), 0, n_in - 1)
        m[rows, idx] = 1.0
    elif method == "bilinear":
        i0 = np.floor(src).astype(int)
        t = src - i0
        np.add.at(m, (rows, np.clip(i0, 0, n_in - 1)), 1 - t)
        np.add.at(m, (rows, np.clip(i0 + 1, 0, n_in - 1)), t)
    elif method == "bicubic":
        i0 = np.floor(src).astype(int)
        w = _cubic_weights(src - i0)
        for k, off in enumerate((-1, 0, 1, 2)):
            np.add.at(m, (rows, np.clip(i0 + off, 0, n_in - 1)), w[:, k])
    else:
        raise ParameterError(f"unknown resampling method {method!r}")
    return m


def resize(img, height: int, width: int, method: str = "bilinear") -> np.ndarray:
    """Resample to an explicit output size using pixel-center alignment."""
    arr = as_gray(img)
    if height < 1 or width < 1:
        raise ParameterError(f"degenerate output size {height}x{width}")
    h, w = arr.shape
    if (h, w) == (height, width) and method in RESAMPLE_METHODS:
        return arr.copy()
    ry = _interp_matrix(h, height, method)
    rx = _interp_matrix(w, width, method)
    return (ry @ arr.astype(np.float64) @ rx.T).astype(DTYPE)


def resample(img, scale: float, method: str = "bilinear") -> np.ndarray:
    """Scale an image by ``scale`` in both axes; output is round(h*scale) x round(w*scale)."""
    if not scale > 0:
        raise ParameterError(f"scale must be > 0, got {scale}")
    arr = as_gray(img)
    h, w = arr.shape
    return resize(arr, int(round(h * scale)), int(round(w * scale)), method)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    arr = as_gray(img)
    if sigma == 0:
        return arr.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(arr.astype(np.float64), k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return out.astype(DTYPE)


def add_gaussian_noise(img, sigma_255: float, seed) -> np.ndarray:
    """Add white Gaussian noise with std ``sigma_255/255``; the result is not clamped."""
    if not 0 < sigma_255 <= 50:
        raise ParameterError(f"noise sigma must be in (0, 50] on the 0-255 scale, got {sigma_255}")
    arr = as_gray(img)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(arr.shape) * (sigma_255 / 255.0)
    return (arr + noise).astype(DTYPE)


def contrast_compress(img, kappa: float) -> np.ndarray:
    """Shrink deviations from the image mean by a factor ``kappa``."""
    if not 1 <= kappa <= 3:
        raise ParameterError(f"kappa must be in [1, 3], got {kappa}")
    arr = as_gray(img).astype(np.float64)
    m = arr.mean()
    return (m + (arr - m) / kappa).astype(DTYPE)


def crop(img, rect: Rect) -> np.ndarray:
    arr = np.asarray(img)
    h, w = arr.shape[-2:]
    if rect.x0 < 0 or rect.y0 < 0 or rect.x0 + rect.w > w or rect.y0 + rect.h > h:
        raise ParameterError(f"{rect} lies outside a {w}x{h} image")
    return arr[..., rect.y0 : rect.y0 + rect.h, rect.x0 : rect.x0 + rect.w].copy()


def random_crop(img, w: int, h: int, seed) -> np.ndarray:
    arr = np.asarray(img)
    ih, iw = arr.shape[-2:]
    if w < 1 or h < 1 or w > iw or h > ih:
        raise ParameterError(f"cannot crop {w}x{h} from a {iw}x{ih} image")
    rng = np.random.default_rng(seed)
    x0 = int(rng.integers(0, iw - w + 1))
    y0 = int(rng.integers(0, ih - h + 1))
    return crop(arr, Rect(x0, y0, w, h))


def stack_channels(*imgs) -> np.ndarray:
    """Stack 1 to 4 equally sized gray images into a (C, H, W) array, order preserved."""
    if not 1 <= len(imgs) <= 4:
        raise ParameterError(f"can stack 1 to 4 channels, got {len(imgs)}")
    planes = [as_gray(im) for im in imgs]
    if any(p.shape != planes[0].shape for p in planes):
        raise ParameterError(f"channel shapes differ: {[p.shape for p in planes]}")
    return np.stack(planes)


def clamp01(img) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=DTYPE), 0.0, 1.0)
