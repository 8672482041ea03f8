"""On-disk formats: DMX1 matrices, DAE1 checkpoints, labels, CSV, PGM and configs.

All binary fields are little-endian. Matrices are stored row-major; the
package keeps samples as columns, so a data file holds a d x n matrix.
"""
import csv
import hashlib
import io as _io
import json
import struct
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .data import Dataset
from .exceptions import ConfigurationError
from .model import DaeModel

__all__ = [
    "write_dmx",
    "read_dmx",
    "encode_dmx",
    "decode_dmx",
    "write_checkpoint",
    "read_checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "dataset_hash",
    "write_labels",
    "read_labels",
    "write_dataset",
    "read_dataset",
    "write_csv",
    "read_csv",
    "write_pgm",
    "write_pgm_grid",
    "load_schema",
    "validate_config",
    "load_config",
    "write_json",
]

DMX_MAGIC = b"DMX1"
DAE_MAGIC = b"DAE1"
DAE_VERSION = 1
_F64 = np.dtype("<f8")


def encode_dmx(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ConfigurationError(f"DMX1 stores 2-D matrices, got shape {A.shape}")
    rows, cols = A.shape
    return DMX_MAGIC + struct.pack("<II", rows, cols) + np.ascontiguousarray(A, dtype=_F64).tobytes()


def decode_dmx(buf):
    if len(buf) < 12 or buf[:4] != DMX_MAGIC:
        raise ConfigurationError("not a DMX1 file (bad magic)")
    rows, cols = struct.unpack_from("<II", buf, 4)
    expected = 12 + rows * cols * 8
    if len(buf) != expected:
        raise ConfigurationError(f"DMX1 payload length {len(buf)} != expected {expected}")
    return np.frombuffer(buf, dtype=_F64, offset=12).reshape(rows, cols).astype(np.float64)


def write_dmx(path, A):
    Path(path).write_bytes(encode_dmx(A))


def read_dmx(path):
    return decode_dmx(Path(path).read_bytes())


def dataset_hash(X):
    """SHA-256 of the DMX1 encoding of a data matrix."""
    return hashlib.sha256(encode_dmx(X)).hexdigest()


def encode_checkpoint(m: DaeModel, metadata=None):
    """DAE1 bytes: header, W1 payload, W2 payload unless tied, JSON metadata trailer."""
    header = DAE_MAGIC + struct.pack("<HBIId", DAE_VERSION, int(m.tied), m.d, m.p, m.sigma_train)
    body = np.ascontiguousarray(m.W1, dtype=_F64).tobytes()
    if not m.tied:
        body += np.ascontiguousarray(m.W2, dtype=_F64).tobytes()
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return header + body + struct.pack("<I", len(meta)) + meta


_HEADER = struct.Struct("<4sHBIId")


def decode_checkpoint(buf):
    """Returns ``(model, metadata)``."""
    if len(buf) < _HEADER.size:
        raise ConfigurationError("truncated DAE1 header")
    magic, version, tied, d, p, sigma = _HEADER.unpack_from(buf, 0)
    if magic != DAE_MAGIC:
        raise ConfigurationError("not a DAE1 checkpoint (bad magic)")
    if version != DAE_VERSION:
        raise ConfigurationError(f"unsupported DAE1 version {version}")
    if tied not in (0, 1):
        raise ConfigurationError(f"bad tied flag {tied}")
    size = d * p * 8
    off = _HEADER.size
    n_mats = 1 if tied else 2
    if len(buf) < off + n_mats * size + 4:
        raise ConfigurationError("truncated DAE1 payload")
    W1 = np.frombuffer(buf, dtype=_F64, count=d * p, offset=off).reshape(d, p)
    off += size
    W2 = None
    if not tied:
        W2 = np.frombuffer(buf, dtype=_F64, count=d * p, offset=off).reshape(d, p)
        off += size
    (meta_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    if len(buf) != off + meta_len:
        raise ConfigurationError("DAE1 metadata length does not match file size")
    meta = json.loads(buf[off:].decode("utf-8")) if meta_len else {}
    return DaeModel(W1, W2, sigma_train=sigma, tied=bool(tied)), meta


def write_checkpoint(path, m: DaeModel, metadata=None):
    Path(path).write_bytes(encode_checkpoint(m, metadata))


def read_checkpoint(path, expect_hash=None):
    """Load a checkpoint; with ``expect_hash`` the stored dataset hash must match."""
    m, meta = decode_checkpoint(Path(path).read_bytes())
    if expect_hash is not None and meta.get("dataset_sha256") != expect_hash:
        raise ConfigurationError(
            f"checkpoint {path} was trained on dataset {meta.get('dataset_sha256')}, not {expect_hash}"
        )
    return m, meta


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_labels(path, cluster_ids):
    write_json(path, {"cluster_ids": [int(c) for c in cluster_ids]})


def read_labels(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "cluster_ids" not in doc:
        raise ConfigurationError(f"{path}: expected an object with key 'cluster_ids'")
    return np.asarray(doc["cluster_ids"], dtype=np.int64)


def write_dataset(directory, data: Dataset):
    directory = Path(directory)
    write_dmx(directory / "data.dmx", data.X)
    write_labels(directory / "labels.json", data.cluster_ids)


def read_dataset(data_path, labels_path=None):
    X = read_dmx(data_path)
    if labels_path is None:
        candidate = Path(data_path).with_name("labels.json")
        labels_path = candidate if candidate.exists() else None
    ids = read_labels(labels_path) if labels_path is not None else np.ones(X.shape[1], dtype=np.int64)
    return Dataset(X, ids)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """RFC-4180 CSV with a header row; floats use shortest round-trip repr."""
    buf = _io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ConfigurationError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([_fmt(v) for v in row])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def read_csv(path):
    """Returns ``(header, rows)`` with all fields as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path} is empty")
    return rows[0], rows[1:]


def _to_bytes(img):
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = (img - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(img)
    return np.round(scaled).astype(np.uint8), lo, hi


def write_pgm(path, vector, height, width):
    """Binary P5 image of one vector, min-max normalized to 0..255."""
    v = np.asarray(vector, dtype=np.float64).ravel()
    if v.size != height * width:
        raise ConfigurationError(f"vector of length {v.size} cannot be shown as {height}x{width}")
    pix, lo, hi = _to_bytes(v.reshape(height, width))
    head = f"P5\n# min-max normalized per image: min={lo!r} max={hi!r}\n{width} {height}\n255\n"
    Path(path).write_bytes(head.encode("ascii") + pix.tobytes())


def write_pgm_grid(path, vectors, height, width, ncols=10, pad=1):
    """Tile the columns of a d x m matrix into one P5 image, each tile normalized on its own."""
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != height * width:
        raise ConfigurationError(f"expected a ({height * width}, m) matrix, got {V.shape}")
    m = V.shape[1]
    ncols = max(1, min(ncols, m))
    nrows = -(-m // ncols)
    H = nrows * height + (nrows - 1) * pad
    W = ncols * width + (ncols - 1) * pad
    canvas = np.zeros((H, W), dtype=np.uint8)
    for i in range(m):
        r, c = divmod(i, ncols)
        tile, _, _ = _to_bytes(V[:, i].reshape(height, width))
        y, x = r * (height + pad), c * (width + pad)
        canvas[y : y + height, x : x + width] = tile
    head = f"P5\n# min-max normalized per image, {m} tiles in {nrows}x{ncols}\n{W} {H}\n255\n"
    Path(path).write_bytes(head.encode("ascii") + canvas.tobytes())


def load_schema():
    text = resources.files("reludae").joinpath("schema/experiment.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_config(doc):
    """Raise :class:`ConfigurationError` unless ``doc`` matches the experiment schema."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config invalid at {where}: {exc.message}") from None
    return doc


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
    return validate_config(doc)
