"""Versioned checkpoint container: JSON header + flat float64 parameter vector.

Layout (little-endian): magic "DQC1" | u32 header length | UTF-8 JSON header
| params as float64. The header carries the model kind, its constructor spec,
optional extras (schedule fingerprint, RVQ stage count, latent normalization)
and the parameter count, so a file is self-describing and refuses to load
into a mismatched model.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"DQC1"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, spec: dict, params: np.ndarray,
                    extra: dict | None = None):
    params = np.asarray(params, dtype="<f8")
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "spec": spec,
        "extra": extra or {},
        "n_params": int(params.size),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(params.tobytes())


def load_checkpoint(path, expect_kind: str | None = None):
    """Returns (kind, spec, params, extra)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        params = np.frombuffer(f.read(), dtype="<f8")
    if params.size != header["n_params"]:
        raise ValueError(f"{path}: truncated parameter payload")
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ValueError(f"{path}: checkpoint kind {kind!r}, expected {expect_kind!r}")
    return kind, header["spec"], params.astype(np.float64), header["extra"]
