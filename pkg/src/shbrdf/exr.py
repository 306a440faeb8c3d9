"""Minimal OpenEXR reader/writer for float32 scanline images.

Supports the subset this pipeline needs: single-part scanline files,
compression NONE, FLOAT pixel type, RGB ("R", "G", "B") or single-channel
("Y") layouts. Files written here open in any OpenEXR-compliant tool and
round-trip bitwise.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import IoFailure, UnsupportedFormat

MAGIC = 20000630
VERSION = 2
PXTYPE_FLOAT = 2
COMPRESSION_NONE = 0


def _attr(name: bytes, typ: bytes, data: bytes) -> bytes:
    return name + b"\0" + typ + b"\0" + struct.pack("<i", len(data)) + data


def _chlist(names: list[str]) -> bytes:
    out = b""
    for name in sorted(names):
        out += name.encode() + b"\0"
        out += struct.pack("<i", PXTYPE_FLOAT)   # pixel type
        out += struct.pack("<BBBB", 0, 0, 0, 0)  # pLinear + reserved
        out += struct.pack("<ii", 1, 1)          # x/y sampling
    return out + b"\0"


def write_exr(path, image: np.ndarray) -> None:
    """Write a (h, w) or (h, w, 1|3) float array as an uncompressed EXR."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise IoFailure("image must be (h, w), (h, w, 1) or (h, w, 3)")
    h, w, nc = image.shape
    channels = ["Y"] if nc == 1 else ["R", "G", "B"]
    order = sorted(range(nc), key=lambda i: channels[i])

    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header = b""
    header += _attr(b"channels", b"chlist", _chlist(channels))
    header += _attr(b"compression", b"compression",
                    struct.pack("<B", COMPRESSION_NONE))
    header += _attr(b"dataWindow", b"box2i", box)
    header += _attr(b"displayWindow", b"box2i", box)
    header += _attr(b"lineOrder", b"lineOrder", struct.pack("<B", 0))
    header += _attr(b"pixelAspectRatio", b"float", struct.pack("<f", 1.0))
    header += _attr(b"screenWindowCenter", b"v2f", struct.pack("<ff", 0.0, 0.0))
    header += _attr(b"screenWindowWidth", b"float", struct.pack("<f", 1.0))
    header += b"\0"

    preamble = struct.pack("<ii", MAGIC, VERSION) + header
    table_start = len(preamble)
    data_start = table_start + 8 * h
    line_bytes = 8 + nc * w * 4
    offsets = data_start + line_bytes * np.arange(h, dtype=np.uint64)

    try:
        with open(path, "wb") as fh:
            fh.write(preamble)
            fh.write(offsets.astype("<u8").tobytes())
            for y in range(h):
                fh.write(struct.pack("<ii", y, nc * w * 4))
                fh.write(np.ascontiguousarray(
                    image[y, :, order]).astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_attrs(buf: bytes, pos: int) -> tuple[dict, int]:
    attrs = {}
    while buf[pos] != 0:
        end = buf.index(b"\0", pos)
        name = buf[pos:end].decode()
        pos = end + 1
        end = buf.index(b"\0", pos)
        typ = buf[pos:end].decode()
        pos = end + 1
        size, = struct.unpack_from("<i", buf, pos)
        pos += 4
        attrs[name] = (typ, buf[pos:pos + size])
        pos += size
    return attrs, pos + 1


def _parse_chlist(data: bytes) -> list[tuple[str, int]]:
    channels = []
    pos = 0
    while data[pos] != 0:
        end = data.index(b"\0", pos)
        name = data[pos:end].decode()
        pxtype, = struct.unpack_from("<i", data, end + 1)
        channels.append((name, pxtype))
        pos = end + 1 + 16
    return channels


def read_exr(path) -> np.ndarray:
    """Read an uncompressed float EXR; returns (h, w, channels) float32."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(buf) < 8 or struct.unpack_from("<i", buf)[0] != MAGIC:
        raise UnsupportedFormat(f"{path} is not an OpenEXR file")
    version, = struct.unpack_from("<i", buf, 4)
    if version & 0x200:  # multi-part flag
        raise UnsupportedFormat("multi-part EXR files are not supported")
    attrs, pos = _read_attrs(buf, 8)
    if struct.unpack_from("<B", attrs["compression"][1])[0] != COMPRESSION_NONE:
        raise UnsupportedFormat("only uncompressed EXR files are supported")
    channels = _parse_chlist(attrs["channels"][1])
    if any(px != PXTYPE_FLOAT for _, px in channels):
        raise UnsupportedFormat("only FLOAT pixel type is supported")
    x0, y0, x1, y1 = struct.unpack("<iiii", attrs["dataWindow"][1])
    w, h = x1 - x0 + 1, y1 - y0 + 1
    nc = len(channels)

    offsets = np.frombuffer(buf, dtype="<u8", count=h, offset=pos)
    rows = np.empty((h, nc, w), dtype=np.float32)
    for i, off in enumerate(offsets):
        y, size = struct.unpack_from("<ii", buf, int(off))
        if size != nc * w * 4:
            raise UnsupportedFormat("unexpected scanline size")
        rows[y - y0] = np.frombuffer(
            buf, dtype="<f4", count=nc * w, offset=int(off) + 8).reshape(nc, w)

    names = [n for n, _ in channels]
    if set(names) >= {"R", "G", "B"}:
        sel = [names.index(c) for c in ("R", "G", "B")]
    else:
        sel = list(range(nc))
    return np.ascontiguousarray(rows[:, sel].transpose(0, 2, 1))
