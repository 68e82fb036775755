"""Bit-exact model checkpoint container.

Layout (little-endian throughout):
  magic "DDCK" | format version u32 | layer count u32 | per layer:
    kind tag u8 | dim count u32, dims u32[] | float count u32, payload f32[]

Kind tags: 1 dense, 2 conv2d, 3 relu, 4 global-avg-pool, 5 sigmoid,
6 time-embed, 7 schedule. The schedule entry carries the noise schedule's
beta table as its payload so a denoiser checkpoint is self-contained.
"""

from __future__ import annotations

import struct

import numpy as np

from .layers import LayerSpec

MAGIC = b"DDCK"
VERSION = 1

_KIND_TAGS = {
    "dense": 1,
    "conv2d": 2,
    "relu": 3,
    "global-avg-pool": 4,
    "sigmoid": 5,
    "time-embed": 6,
    "schedule": 7,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class CheckpointError(ValueError):
    pass


def _dims_list(spec: LayerSpec):
    if spec.kind in ("dense", "time-embed"):
        return [spec.dims["in"], spec.dims["out"]]
    if spec.kind == "conv2d":
        return [
            spec.dims["in"], spec.dims["out"], spec.dims["k"],
            spec.dims.get("stride", 1), spec.dims.get("pad", 0),
        ]
    return []


def _spec_from(kind, dims):
    if kind in ("dense", "time-embed"):
        return LayerSpec(kind, {"in": dims[0], "out": dims[1]})
    if kind == "conv2d":
        return LayerSpec(
            "conv2d",
            {"in": dims[0], "out": dims[1], "k": dims[2], "stride": dims[3], "pad": dims[4]},
        )
    return LayerSpec(kind)


def save_checkpoint(path, entries):
    """entries: list of (spec_or_kindstr, dims_list_or_None, payload_float32).

    Convenience: pass (LayerSpec, params_list) pairs via `pack_network`.
    """
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(entries))
    for kind, dims, payload in entries:
        tag = _KIND_TAGS[kind]
        payload = np.asarray(payload, dtype="<f4").reshape(-1)
        blob += struct.pack("<BI", tag, len(dims))
        blob += struct.pack(f"<{len(dims)}I", *dims) if dims else b""
        blob += struct.pack("<I", payload.size)
        blob += payload.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    """Returns list of (kind, dims, payload float32 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, count = struct.unpack_from("<II", blob, off)
        off += 8
        if version != VERSION:
            raise CheckpointError(f"version mismatch: file {version}, supported {VERSION}")
        entries = []
        for _ in range(count):
            tag, ndims = struct.unpack_from("<BI", blob, off)
            off += 5
            dims = list(struct.unpack_from(f"<{ndims}I", blob, off))
            off += 4 * ndims
            (nfloat,) = struct.unpack_from("<I", blob, off)
            off += 4
            payload = np.frombuffer(blob, dtype="<f4", count=nfloat, offset=off).copy()
            off += 4 * nfloat
            entries.append((_TAG_KINDS[tag], dims, payload))
    except (struct.error, ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return entries


def pack_network(specs, params):
    """Flatten (specs, params) into checkpoint entries."""
    entries = []
    i = 0
    for spec in specs:
        if spec.kind in ("dense", "conv2d", "time-embed"):
            w, b = params[i], params[i + 1]
            i += 2
            payload = np.concatenate([np.asarray(w, np.float32).reshape(-1),
                                      np.asarray(b, np.float32).reshape(-1)])
        else:
            payload = np.zeros(0, np.float32)
        entries.append((spec.kind, _dims_list(spec), payload))
    return entries


def unpack_network(entries):
    """Inverse of pack_network; returns (specs, params)."""
    specs, params = [], []
    for kind, dims, payload in entries:
        spec = _spec_from(kind, dims)
        specs.append(spec)
        if kind in ("dense", "time-embed"):
            n_in, n_out = dims
            w = payload[: n_out * n_in].reshape(n_out, n_in)
            b = payload[n_out * n_in :]
            params.extend([w.copy(), b.copy()])
        elif kind == "conv2d":
            c, k_, kk = dims[0], dims[1], dims[2]
            n_w = k_ * c * kk * kk
            w = payload[:n_w].reshape(k_, c, kk, kk)
            b = payload[n_w:]
            params.extend([w.copy(), b.copy()])
    return specs, params
