"""Binary PGM (P5) and PPM (P6) reading and writing.

Header: magic, width, height, maxval separated by whitespace (``#``
comments allowed), then exactly one whitespace byte and the row-major
payload.  Samples are one byte for maxval < 256, else two bytes big-endian.
"""
from __future__ import annotations

import numpy as np

from .errors import ImageParseError

_WS = b" \t\n\r\v\f"


def _header_fields(data: bytes):
    """Yield (token, end_offset) for the four header fields."""
    pos = 0
    n = len(data)
    out = []
    while len(out) < 4:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise ImageParseError("truncated header", pos)
        out.append((data[start:pos], start))
    return out, pos


def decode(data: bytes) -> tuple[np.ndarray, int]:
    """Parse P5/P6 bytes into an integer array (h, w, channels) and maxval."""
    if data[:2] not in (b"P5", b"P6"):
        raise ImageParseError(f"bad magic {data[:2]!r}", 0)
    fields, pos = _header_fields(data)
    magic = fields[0][0]
    if magic not in (b"P5", b"P6"):
        raise ImageParseError(f"bad magic {magic!r}", 0)
    vals = []
    for tok, off in fields[1:]:
        try:
            vals.append(int(tok))
        except ValueError:
            raise ImageParseError(f"non-numeric header field {tok!r}", off) from None
    width, height, maxval = vals
    if width <= 0 or height <= 0:
        raise ImageParseError("image dimensions must be positive", fields[1][1])
    if not 0 < maxval <= 65535:
        raise ImageParseError(f"maxval {maxval} outside 1..65535", fields[3][1])
    if pos >= len(data) or data[pos] not in _WS:
        raise ImageParseError("missing whitespace after header", pos)
    pos += 1
    channels = 1 if magic == b"P5" else 3
    width_bytes = 1 if maxval < 256 else 2
    need = width * height * channels * width_bytes
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise ImageParseError(
            f"truncated payload: expected {need} bytes, found {len(payload)}", pos + len(payload)
        )
    dtype = np.uint8 if width_bytes == 1 else np.dtype(">u2")
    arr = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    if np.any(arr > maxval):
        bad = int(np.argmax(arr > maxval))
        raise ImageParseError(f"sample exceeds maxval {maxval}", pos + bad * width_bytes)
    return arr.reshape(height, width, channels), maxval


def encode(samples: np.ndarray, maxval: int = 255) -> bytes:
    """Inverse of :func:`decode` for an integer array (h, w) or (h, w, 1|3)."""
    a = np.asarray(samples)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ValueError("expected (h, w), (h, w, 1) or (h, w, 3) samples")
    h, w, c = a.shape
    magic = b"P5" if c == 1 else b"P6"
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    return header + np.ascontiguousarray(a, dtype=dtype).tobytes()


def read(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return decode(fh.read())


def write(path, samples, maxval: int = 255) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(samples, maxval))
