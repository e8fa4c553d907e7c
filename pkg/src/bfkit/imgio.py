"""Image grids, foreground normalization and file I/O.

Images are plain 2D ``float64`` arrays indexed ``(row, col)``; masks are 2D
``bool`` arrays of the same shape. Two on-disk formats are supported:

* binary PGM (``P5``), maxval 255 or 65535 (16-bit samples big-endian);
* BF32: ``b"BF32"``, width and height as little-endian ``uint32``, four zero
  bytes, then ``width*height`` little-endian ``float32`` values, row-major.
"""

import os
import struct

import numpy as np

from bfkit.errors import DegenerateInputError, FormatError, ParameterError, RangeError

BF32_MAGIC = b"BF32"
BF32_HEADER = struct.Struct("<4sIII")
MAX_PIXELS = 1 << 28

FORMATS = ("pgm8", "pgm16", "bf32")


def as_image(data):
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ParameterError(f"expected a 2D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise RangeError("image contains non-finite values")
    if np.any(img < 0):
        raise RangeError("image contains negative values")
    return img


def as_mask(data, shape=None):
    m = np.asarray(data)
    if m.ndim != 2:
        raise ParameterError(f"expected a 2D mask, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise ParameterError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    if m.dtype != bool:
        if not np.all((m == 0) | (m == 1)):
            raise ParameterError("mask values must be 0 or 1")
        m = m.astype(bool)
    return m


def _pgm_token(buf, pos):
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", start)
    return buf[start:pos], start, pos


def _read_pgm(buf):
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _pgm_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"bad PGM {name} {tok!r}", start)
        fields.append((int(tok), start))
    (w, w_off), (h, _), (maxval, mv_off) = fields
    if w == 0 or h == 0 or w * h > MAX_PIXELS:
        raise FormatError(f"unsupported PGM dimensions {w}x{h}", w_off)
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported PGM maxval {maxval}", mv_off)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", pos)
    pos += 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(buf) - pos < need:
        raise FormatError(f"PGM payload truncated: need {need} bytes, have {len(buf) - pos}", len(buf))
    raw = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos)
    return raw.astype(np.float64).reshape(h, w)


def _read_bf32(buf):
    if len(buf) < BF32_HEADER.size:
        raise FormatError("truncated BF32 header", len(buf))
    _, w, h, reserved = BF32_HEADER.unpack_from(buf)
    if reserved != 0:
        raise FormatError("nonzero reserved bytes in BF32 header", 12)
    if w == 0 or h == 0 or w * h > MAX_PIXELS:
        raise FormatError(f"unsupported BF32 dimensions {w}x{h}", 4)
    need = 4 * w * h
    have = len(buf) - BF32_HEADER.size
    if have < need:
        raise FormatError(f"BF32 payload truncated: need {need} bytes, have {have}", len(buf))
    raw = np.frombuffer(buf, dtype="<f4", count=w * h, offset=BF32_HEADER.size)
    return raw.astype(np.float64).reshape(h, w)


def read_image(path):
    """Read a PGM (P5) or BF32 file into a float64 array.

    Intensities are returned as stored: 0-255 for 8-bit PGM, 0-65535 for
    16-bit PGM, unchanged for BF32.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] == b"P5":
        img = _read_pgm(buf)
    elif buf[:4] == BF32_MAGIC:
        img = _read_bf32(buf)
    else:
        raise FormatError(f"unrecognized image format in {os.fspath(path)}", 0)
    if not np.all(np.isfinite(img)):
        raise FormatError("non-finite sample in image payload", BF32_HEADER.size)
    return img


def write_image(path, img, format="bf32"):
    """Write ``img`` as ``pgm8``, ``pgm16`` or ``bf32``.

    PGM output rounds to the nearest integer; values outside ``[0, maxval]``
    after rounding raise :class:`RangeError`. BF32 stores float32, so a
    float64 image round-trips exactly only if it is float32-representable.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ParameterError(f"expected a 2D image, got shape {img.shape}")
    h, w = img.shape
    if format == "bf32":
        if not np.all(np.isfinite(img)) or np.abs(img).max() > np.finfo(np.float32).max:
            raise RangeError("values are not representable as finite float32")
        payload = BF32_HEADER.pack(BF32_MAGIC, w, h, 0) + img.astype("<f4").tobytes()
    elif format in ("pgm8", "pgm16"):
        maxval = 255 if format == "pgm8" else 65535
        q = np.rint(img)
        if not np.all(np.isfinite(q)) or q.min() < 0 or q.max() > maxval:
            raise RangeError(f"values outside [0, {maxval}] cannot be stored as {format}")
        dtype = "u1" if maxval == 255 else ">u2"
        payload = f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + q.astype(dtype).tobytes()
    else:
        raise ParameterError(f"unknown format {format!r}; expected one of {FORMATS}")
    with open(path, "wb") as fh:
        fh.write(payload)


def read_mask(path):
    """Read a mask image; any nonzero pixel is foreground."""
    return read_image(path) > 0


def write_mask(path, mask):
    write_image(path, np.where(as_mask(mask), 255.0, 0.0), "pgm8")


def normalize(img, mask):
    """Divide ``img`` by its maximum over the foreground ``mask``."""
    img = as_image(img)
    mask = as_mask(mask, img.shape)
    if not mask.any():
        raise DegenerateInputError("mask is empty")
    peak = img[mask].max()
    if peak <= 0:
        raise DegenerateInputError("foreground maximum is zero")
    return img / peak
