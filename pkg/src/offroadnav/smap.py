"""SMAP container for score maps and label masks.

Layout (little-endian)::

    b"SMAP"  u16 version  u16 width  u16 height  u8 class_count
    class_count x (u8 byte length, UTF-8 label)
    payload: class_count*height*width f32 scores (plane-major, row-major)
             or height*width u8 class ids

The payload kind is implied by its length.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .perception import LabelMask, ScoreMap, argmax_mask

MAGIC = b"SMAP"
VERSION = 1
_HEADER = struct.Struct("<4sHHHB")


def _header(labels, width, height) -> bytes:
    out = [_HEADER.pack(MAGIC, VERSION, width, height, len(labels))]
    for label in labels:
        raw = label.encode("utf-8")
        if len(raw) > 255:
            raise FormatError(f"label too long: {label!r}")
        out.append(struct.pack("<B", len(raw)) + raw)
    return b"".join(out)


def dumps(obj: ScoreMap | LabelMask) -> bytes:
    if isinstance(obj, ScoreMap):
        payload = obj.scores.astype("<f4").tobytes()
    elif isinstance(obj, LabelMask):
        payload = obj.class_ids.astype(np.uint8).tobytes()
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    return _header(obj.labels, obj.width, obj.height) + payload


def loads(data: bytes) -> ScoreMap | LabelMask:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, width, height, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    pos = _HEADER.size
    labels = []
    for _ in range(count):
        if pos >= len(data):
            raise FormatError("truncated label table")
        n = data[pos]
        labels.append(data[pos + 1:pos + 1 + n].decode("utf-8"))
        pos += 1 + n
    payload = data[pos:]
    pixels = width * height
    if len(payload) == count * pixels * 4:
        scores = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, height, width)
        # undo f32 rounding of the per-pixel sums
        scores /= scores.sum(axis=0, keepdims=True)
        return ScoreMap(tuple(labels), scores)
    if len(payload) == pixels:
        ids = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
        return LabelMask(tuple(labels), ids)
    raise FormatError(f"payload of {len(payload)} bytes fits neither a score map nor a mask")


def save(path, obj) -> None:
    Path(path).write_bytes(dumps(obj))


def load(path) -> ScoreMap | LabelMask:
    return loads(Path(path).read_bytes())


def load_mask(path) -> LabelMask:
    """Load a file as a label mask, taking the argmax of score maps."""
    obj = load(path)
    return argmax_mask(obj) if isinstance(obj, ScoreMap) else obj
