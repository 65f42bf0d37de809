"""TNC1 file format for MPS/MPO.

Layout::

    TNC1 {"kind": "mps", "n": 6, "d": 2, "bonds": [1, 2, ..., 1]}\\n
    <site tensors as little-endian complex128 (re, im interleaved), row-major>
    <CRC-64/XZ of the payload, 8 bytes little-endian>

MPO headers carry ``d_out``/``d_in`` instead of ``d``.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .mps import Mpo, Mps

MAGIC = b"TNC1"
_LE_COMPLEX = np.dtype("<c16")


class SerializationError(ValueError):
    pass


class VersionError(SerializationError):
    pass


class TruncatedFileError(SerializationError):
    pass


class ChecksumError(SerializationError):
    pass


def _make_table():
    poly = 0xC96C5795D7870F42
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ poly if c & 1 else c >> 1
        table.append(c)
    return table


_CRC_TABLE = _make_table()


def crc64(data: bytes) -> int:
    """CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones)."""
    crc = 0xFFFFFFFFFFFFFFFF
    table = _CRC_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def _uniform(dims):
    return dims[0] if len(set(dims)) == 1 else list(dims)


def dumps(obj) -> bytes:
    if isinstance(obj, Mps):
        header = {
            "kind": "mps",
            "n": obj.n,
            "d": _uniform(obj.phys_dims),
            "bonds": obj.bonds,
            "canonical_form": obj.canonical_form,
        }
    elif isinstance(obj, Mpo):
        dims = _uniform(obj.phys_dims)
        header = {"kind": "mpo", "n": obj.n, "d_out": dims, "d_in": dims, "bonds": obj.bonds}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    payload = b"".join(np.ascontiguousarray(s, dtype=_LE_COMPLEX).tobytes() for s in obj.sites)
    head = MAGIC + b" " + json.dumps(header, separators=(",", ":")).encode("ascii") + b"\n"
    return head + payload + crc64(payload).to_bytes(8, "little")


def _site_shapes(header):
    n, bonds = header["n"], header["bonds"]
    if len(bonds) != n + 1:
        raise SerializationError("bond list length does not match n")
    if header["kind"] == "mps":
        dims = header["d"]
        dims = dims if isinstance(dims, list) else [dims] * n
        return [(bonds[j], dims[j], bonds[j + 1]) for j in range(n)]
    if header["kind"] == "mpo":
        dout, din = header["d_out"], header["d_in"]
        dout = dout if isinstance(dout, list) else [dout] * n
        din = din if isinstance(din, list) else [din] * n
        return [(bonds[j], dout[j], din[j], bonds[j + 1]) for j in range(n)]
    raise SerializationError(f"unknown kind {header['kind']!r}")


def loads(blob: bytes):
    newline = blob.find(b"\n")
    if newline < 0:
        raise TruncatedFileError("missing header line")
    line = blob[:newline]
    magic, _, text = line.partition(b" ")
    if magic != MAGIC:
        raise VersionError(f"unsupported format tag {magic[:16]!r}, expected {MAGIC!r}")
    try:
        header = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"bad header: {exc}") from None
    shapes = _site_shapes(header)
    sizes = [math.prod(s) * _LE_COMPLEX.itemsize for s in shapes]
    start = newline + 1
    end = start + sum(sizes)
    if len(blob) < end + 8:
        raise TruncatedFileError(f"expected {end + 8} bytes, found {len(blob)}")
    payload = blob[start:end]
    stored = int.from_bytes(blob[end : end + 8], "little")
    if crc64(payload) != stored:
        raise ChecksumError("payload checksum mismatch")
    sites, offset = [], 0
    for shape, size in zip(shapes, sizes):
        arr = np.frombuffer(payload, dtype=_LE_COMPLEX, count=math.prod(shape), offset=offset)
        sites.append(arr.reshape(shape).astype(np.complex128))
        offset += size
    if header["kind"] == "mps":
        return Mps(tuple(sites), header.get("canonical_form", "none"))
    return Mpo(tuple(sites))


def serialize(obj, path):
    with open(path, "wb") as fh:
        fh.write(dumps(obj))


def deserialize(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def save_pair(h, psi, path):
    """Store an MPO and an MPS side by side as ``<path>.mpo.tnc`` and
    ``<path>.mps.tnc``."""
    serialize(h, os.fspath(path) + ".mpo.tnc")
    serialize(psi, os.fspath(path) + ".mps.tnc")


def load_pair(path):
    return deserialize(os.fspath(path) + ".mpo.tnc"), deserialize(os.fspath(path) + ".mps.tnc")
