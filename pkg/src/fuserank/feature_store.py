"""Binary feature store: fused per-sample feature rows plus labels.

Layout (bit-exact): ASCII magic ``FRFT0001``; unsigned 32-bit little-endian
header length; UTF-8 JSON header ``{rows, dim, backbone_order, labels}``
(labels are 0/1 with 1 = covid; a ``config_hash`` key ties the store to the
producing pipeline configuration); then ``rows x dim`` little-endian
binary32 values, row-major.  Values are binary32 on disk and promoted to
float64 when read.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .fusion import FeatureMatrix

MAGIC = b"FRFT0001"


@dataclass(frozen=True)
class FeatureStore:
    matrix: FeatureMatrix
    backbone_order: tuple[str, ...]
    config_hash: str | None = None


def write_store(path, matrix: FeatureMatrix, backbone_order,
                config_hash: str | None = None) -> None:
    """Write atomically (temp file + rename) so readers never see a torso."""
    backbone_order = tuple(backbone_order)
    if not backbone_order:
        raise InvalidArgumentError("backbone_order must not be empty")
    header = json.dumps({
        "rows": matrix.rows,
        "dim": matrix.dim,
        "backbone_order": list(backbone_order),
        "labels": matrix.labels.tolist(),
        "config_hash": config_hash,
    }, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def read_store(path) -> FeatureStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4:
        raise FormatError("feature store too short for magic and header length")
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    offset = len(MAGIC) + 4
    if offset + header_len > len(blob):
        raise FormatError("feature store truncated inside the JSON header")
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
        rows = int(header["rows"])
        dim = int(header["dim"])
        backbone_order = tuple(str(v) for v in header["backbone_order"])
        labels = np.asarray(header["labels"], dtype=np.int64)
    except (KeyError, TypeError, ValueError, UnicodeDecodeError,
            json.JSONDecodeError) as exc:
        raise FormatError(f"malformed feature store header: {exc}") from exc
    offset += header_len
    expected = rows * dim * 4
    if len(blob) - offset != expected:
        raise FormatError(
            f"feature payload has {len(blob) - offset} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=offset)
    matrix = FeatureMatrix(values=values.astype(np.float64).reshape(rows, dim),
                           labels=labels)
    return FeatureStore(matrix=matrix, backbone_order=backbone_order,
                        config_hash=header.get("config_hash"))
