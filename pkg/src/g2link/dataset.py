"""Binary dataset format for G2 link samples and deterministic splits.

Layout (little endian):
    magic            8 bytes  b"G2LINKDS"
    version          u32      (currently 1)
    mode             u8       0 = fs, 1 = nn
    upsilon_norm     u8       0 = global, 1 = pointwise
    record_count     u64
    record_width     u32      (128 doubles per record)
    seed             u64
    c_eta            f64
    lam              f64
    kahler_scale     f64
    chart_descr      64 bytes ascii, zero padded
    payload          record_count * record_width f64
    crc32            u32      checksum of the payload bytes

Record layout (doubles): phi[35], psi[35], g_lower[28], vol_g2, vol_cy,
eta[7], input19[19], patch_a, patch_e.  g_lower is the row-wise lower
triangle of the 7x7 metric; form components are in lexicographic multi-index
order of the chart coordinates (u1..u6, theta).
"""
import json
import struct
import zlib
from dataclasses import dataclass, asdict

import numpy as np

from .link import G2Batch

MAGIC = b"G2LINKDS"
VERSION = 1
RECORD_WIDTH = G2Batch.WIDTH
CHART_DESCR = b"u1u2u3u4u5u6theta;interleaved-re-im;lex-multiindex;tril-rowwise"

_MODES = {"fs": 0, "nn": 1}
_MODES_INV = {v: k for k, v in _MODES.items()}
_UPS = {"global": 0, "pointwise": 1}
_UPS_INV = {v: k for k, v in _UPS.items()}


@dataclass
class DatasetHeader:
    mode: str
    upsilon_norm: str
    count: int
    seed: int
    c_eta: float
    lam: float
    kahler_scale: float

    def to_dict(self):
        return asdict(self)


def save_dataset(path, batch, header):
    """Write a G2Batch with its header; payload is checksummed."""
    M = np.ascontiguousarray(batch.to_matrix(), dtype="<f8")
    if M.shape[1] != RECORD_WIDTH:
        raise ValueError(f"record width {M.shape[1]} != {RECORD_WIDTH}")
    payload = M.tobytes()
    descr = CHART_DESCR.ljust(64, b"\0")[:64]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IBBQIQ", VERSION, _MODES[header.mode],
                             _UPS[header.upsilon_norm], len(M), RECORD_WIDTH,
                             header.seed))
        fh.write(struct.pack("<ddd", header.c_eta, header.lam,
                             header.kahler_scale))
        fh.write(descr)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_dataset(path):
    """Read a dataset file; returns (G2Batch, DatasetHeader).

    Rejects unknown magic or version and corrupted payloads.
    """
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a G2 dataset: bad magic {magic!r}")
        version, mode, ups, count, width, seed = struct.unpack(
            "<IBBQIQ", fh.read(struct.calcsize("<IBBQIQ")))
        if version != VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        if width != RECORD_WIDTH:
            raise ValueError(f"unexpected record width {width}")
        c_eta, lam, scale = struct.unpack("<ddd", fh.read(24))
        fh.read(64)  # chart descriptor, fixed by this version
        payload = fh.read(count * width * 8)
        (crc,) = struct.unpack("<I", fh.read(4))
    if zlib.crc32(payload) != crc:
        raise ValueError("dataset payload checksum mismatch")
    M = np.frombuffer(payload, dtype="<f8").reshape(count, width).copy()
    header = DatasetHeader(_MODES_INV[mode], _UPS_INV[ups], count, seed,
                           c_eta, lam, scale)
    return G2Batch.from_matrix(M), header


# ---------------------------------------------------------------------------
# Deterministic splits

def _splitmix64(x):
    """SplitMix64 avalanche; vectorized over uint64 arrays."""
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) \
        & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) \
        & np.uint64(0xFFFFFFFFFFFFFFFF)
    return x ^ (x >> np.uint64(31))


def split_assign(count, seed, fractions=(0.9, 0.05, 0.05)):
    """Split labels (0 train, 1 validation, 2 test), a pure function of
    (record index, seed): membership never depends on the dataset size."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    idx = np.arange(count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix64(idx ^ _splitmix64(np.uint64(seed) + np.uint64(0x5D)))
    u = h.astype(np.float64) / float(2 ** 64)
    labels = np.full(count, 2, dtype=np.int64)
    labels[u < fractions[0] + fractions[1]] = 1
    labels[u < fractions[0]] = 0
    return labels


def parse_fractions(text):
    """Parse a '0.9:0.05:0.05' split specification."""
    parts = [float(p) for p in text.split(":")]
    if len(parts) != 3:
        raise ValueError("split must have three fields train:val:test")
    return tuple(parts)


# ---------------------------------------------------------------------------
# Point files (sampling stage output)

PT_MAGIC = b"G2LINKPT"


def save_points(path, batch, seed):
    """Write a sampled PointBatch (z, patch, weight) with a checksum."""
    z = np.ascontiguousarray(batch.z, dtype="<c16")
    a = np.ascontiguousarray(batch.a, dtype="<u1")
    e = np.ascontiguousarray(batch.e, dtype="<u1")
    wt = np.ascontiguousarray(batch.weight, dtype="<f8")
    payload = z.tobytes() + a.tobytes() + e.tobytes() + wt.tobytes()
    with open(path, "wb") as fh:
        fh.write(PT_MAGIC)
        fh.write(struct.pack("<IQQ", VERSION, len(batch), seed))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_points(path):
    """Read a point file; returns (PointBatch, seed)."""
    from .quintic import PointBatch
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != PT_MAGIC:
            raise ValueError(f"not a point file: bad magic {magic!r}")
        version, count, seed = struct.unpack("<IQQ", fh.read(20))
        if version != VERSION:
            raise ValueError(f"unsupported point file version {version}")
        payload = fh.read()
    crc = struct.unpack("<I", payload[-4:])[0]
    payload = payload[:-4]
    if zlib.crc32(payload) != crc:
        raise ValueError("point file checksum mismatch")
    at = 0
    z = np.frombuffer(payload, dtype="<c16", count=count * 5, offset=at)
    at += count * 80
    a = np.frombuffer(payload, dtype="<u1", count=count, offset=at)
    at += count
    e = np.frombuffer(payload, dtype="<u1", count=count, offset=at)
    at += count
    wt = np.frombuffer(payload, dtype="<f8", count=count, offset=at)
    return PointBatch(z.reshape(count, 5).copy(), a.astype(np.int64),
                      e.astype(np.int64), wt.copy()), seed


def write_manifest(path, command, config, inputs=None):
    """Deterministic JSON manifest: command, config, input hashes, version."""
    import hashlib
    from . import __version__
    hashes = {}
    for name, fpath in (inputs or {}).items():
        digest = hashlib.sha256()
        with open(fpath, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
        hashes[name] = digest.hexdigest()
    doc = {"command": command, "config": config, "inputs": hashes,
           "version": __version__}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
