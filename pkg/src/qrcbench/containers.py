"""Binary persistence containers shared across the pipeline.

Matrix container (embedding caches, adversarial sets, PCA models):

    bytes 0..7    magic (8 bytes, e.g. b"QRCEMB1\\0")
    bytes 8..11   rows, u32 little-endian
    bytes 12..15  cols, u32 little-endian
    ...           rows*cols f64 little-endian, row-major
    last 4        CRC-32 (zlib) of the f64 payload, u32 little-endian

A PCA model is packed into one matrix under the QRCPCA1 magic with
rows = 3 + retained_dim and cols = P^2:

    row 0         mean vector
    row 1         full descending eigenvalue spectrum
    row 2         [retained_dim, variance_threshold (nan if unset), 0...]
    rows 3..      the retained components, one per row

MLP checkpoint (magic b"QRCMLP1\\0"):

    u32 number of layer sizes, then that many u32 layer sizes
    u32 byte length of the UTF-8 JSON training-config echo, then the JSON
    f64 parameters: W1, b1, W2, b2, ... row-major in layer order
    u32 CRC-32 of everything between the magic and the CRC

Adversarial set dumps reuse the matrix container (magic b"QRCADV1\\0",
one flattened image per row) with a JSON sidecar at <path>.json holding
the attack family, budget, seed and model hash.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .encoding import PcaModel
from .mlp import MlpParams

__all__ = [
    "MAGIC_EMBEDDING", "MAGIC_PCA", "MAGIC_MLP", "MAGIC_ADVERSARIAL",
    "ContainerError",
    "write_matrix", "read_matrix",
    "save_pca", "load_pca",
    "save_checkpoint", "load_checkpoint",
    "save_adversarial", "load_adversarial",
]

MAGIC_EMBEDDING = b"QRCEMB1\x00"
MAGIC_PCA = b"QRCPCA1\x00"
MAGIC_MLP = b"QRCMLP1\x00"
MAGIC_ADVERSARIAL = b"QRCADV1\x00"


class ContainerError(ValueError):
    """Malformed container file: wrong magic, truncation or CRC mismatch."""


def write_matrix(path, matrix: np.ndarray, magic: bytes = MAGIC_EMBEDDING) -> None:
    mat = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, np.float64)))
    if mat.ndim != 2:
        raise ValueError("matrix container holds 2-D arrays")
    payload = mat.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def read_matrix(path, magic: bytes = MAGIC_EMBEDDING) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise ContainerError(f"{path}: truncated container header")
    if raw[:8] != magic:
        raise ContainerError(
            f"{path}: bad magic {raw[:8]!r}, expected {magic!r}")
    rows, cols = struct.unpack("<II", raw[8:16])
    need = 16 + rows * cols * 8 + 4
    if len(raw) != need:
        raise ContainerError(
            f"{path}: expected {need} bytes for {rows}x{cols}, got {len(raw)}")
    payload = raw[16:-4]
    crc, = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise ContainerError(f"{path}: CRC mismatch, payload corrupted")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# PCA model

def save_pca(path, model: PcaModel) -> None:
    p2 = model.input_dim
    packed = np.zeros((3 + model.retained_dim, p2))
    packed[0] = model.mean
    packed[1] = model.eigenvalues
    packed[2, 0] = model.retained_dim
    packed[2, 1] = (np.nan if model.variance_threshold is None
                    else model.variance_threshold)
    packed[3:] = model.components.T
    write_matrix(path, packed, magic=MAGIC_PCA)


def load_pca(path) -> PcaModel:
    packed = read_matrix(path, magic=MAGIC_PCA)
    delta = int(packed[2, 0])
    if packed.shape[0] != 3 + delta:
        raise ContainerError(f"{path}: inconsistent PCA row count")
    thresh = packed[2, 1]
    return PcaModel(mean=packed[0].copy(),
                    components=packed[3:].T.copy(),
                    eigenvalues=packed[1].copy(),
                    retained_dim=delta,
                    variance_threshold=None if np.isnan(thresh) else float(thresh))


# ---------------------------------------------------------------------------
# MLP checkpoint

def save_checkpoint(path, params: MlpParams, train_config_echo: dict) -> None:
    sizes = params.layer_sizes
    config_json = json.dumps(train_config_echo, sort_keys=True).encode()
    flat = np.concatenate(
        [np.concatenate([w.ravel(), b.ravel()])
         for w, b in zip(params.weights, params.biases)]).astype("<f8")
    body = struct.pack("<I", len(sizes))
    body += struct.pack(f"<{len(sizes)}I", *sizes)
    body += struct.pack("<I", len(config_json)) + config_json
    body += flat.tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC_MLP)
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ContainerError(f"{path}: truncated checkpoint")
    if raw[:8] != MAGIC_MLP:
        raise ContainerError(
            f"{path}: bad magic {raw[:8]!r}, expected {MAGIC_MLP!r}")
    body, crc_raw = raw[8:-4], raw[-4:]
    crc, = struct.unpack("<I", crc_raw)
    if zlib.crc32(body) != crc:
        raise ContainerError(f"{path}: CRC mismatch, checkpoint corrupted")
    off = 0
    n_sizes, = struct.unpack_from("<I", body, off)
    off += 4
    sizes = struct.unpack_from(f"<{n_sizes}I", body, off)
    off += 4 * n_sizes
    json_len, = struct.unpack_from("<I", body, off)
    off += 4
    echo = json.loads(body[off:off + json_len].decode())
    off += json_len
    n_params = sum(sizes[i + 1] * sizes[i] + sizes[i + 1]
                   for i in range(len(sizes) - 1))
    flat = np.frombuffer(body, dtype="<f8", count=n_params, offset=off)
    if off + n_params * 8 != len(body):
        raise ContainerError(f"{path}: parameter payload length mismatch")
    weights, biases = [], []
    pos = 0
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        weights.append(flat[pos:pos + fan_out * fan_in]
                       .reshape(fan_out, fan_in).copy())
        pos += fan_out * fan_in
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    return MlpParams(weights, biases), echo


# ---------------------------------------------------------------------------
# adversarial sets

def save_adversarial(path, images: np.ndarray, meta: dict) -> None:
    """Dump a stack of images (one flattened image per row) plus sidecar."""
    arr = np.asarray(images, float)
    write_matrix(path, arr.reshape(arr.shape[0], -1), magic=MAGIC_ADVERSARIAL)
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=1))


def load_adversarial(path) -> tuple[np.ndarray, dict]:
    mat = read_matrix(path, magic=MAGIC_ADVERSARIAL)
    meta = json.loads(Path(str(path) + ".json").read_text())
    return mat, meta
