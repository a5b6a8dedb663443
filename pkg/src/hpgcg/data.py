"""Patch datasets, noise, PGM images and on-disk formats.

Datasets and models are stored as a pair of files sharing a stem: a JSON
manifest ``<stem>.json`` and a raw payload ``<stem>.bin`` of little-endian
float64 values. The manifest carries the CRC32 of the payload.

Dataset payload: for each patch, the ground truth followed by the noisy
patch, each row-major ``p * p`` values. Model payload: the row-major
``(n + 1) x (n + 1)`` matrix, or a single value for a constant model.
"""

from __future__ import annotations

import json
import warnings
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .learning import EIG_RTOL, ConstantModel, DimensionError, QuadraticModel

__all__ = [
    "FORMAT_VERSION",
    "PRNG_NAME",
    "FormatError",
    "DimensionError",
    "DatasetManifest",
    "PatchDataset",
    "read_pgm",
    "write_pgm",
    "extract_patches",
    "add_noise",
    "synthetic_cartoon",
    "make_dataset",
    "save_dataset",
    "load_dataset",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1
PRNG_NAME = "numpy.PCG64"
_DTYPE = np.dtype("<f8")


class FormatError(ValueError):
    """Malformed, truncated or corrupted file."""


@dataclass
class DatasetManifest:
    patch_size: int
    count: int
    noise_variance: float
    seed: int
    source: str = ""
    prng: str = PRNG_NAME
    clipped: bool = False
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("a dataset needs at least one patch")
        if self.patch_size < 2:
            raise ValueError("patch_size must be at least 2")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass
class PatchDataset:
    ground_truth: np.ndarray  # (N, p, p)
    noisy: np.ndarray  # (N, p, p)
    manifest: DatasetManifest

    def __post_init__(self):
        self.ground_truth = np.asarray(self.ground_truth, dtype=float)
        self.noisy = np.asarray(self.noisy, dtype=float)
        shape = self.noisy.shape
        if self.ground_truth.shape != shape or len(shape) != 3 or shape[1] != shape[2]:
            raise ValueError(f"mismatched patch stacks {self.ground_truth.shape} / {shape}")
        if shape[0] != self.manifest.count or shape[1] != self.manifest.patch_size:
            raise ValueError("patch stacks disagree with the manifest")

    def __len__(self):
        return self.noisy.shape[0]

    @property
    def patch_size(self):
        return self.noisy.shape[-1]

    def subset(self, idx):
        idx = np.atleast_1d(idx)
        m = DatasetManifest(**{**asdict(self.manifest), "count": len(idx)})
        return PatchDataset(self.ground_truth[idx], self.noisy[idx], m)

    def payload(self):
        return np.stack([self.ground_truth, self.noisy], axis=1).astype(_DTYPE).tobytes()

    def checksum(self):
        return zlib.crc32(self.payload())


# --- PGM ---------------------------------------------------------------------

def _tokens(data, count, pos):
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path):
    """Read a P2/P5 PGM (8 or 16 bit) as a float image scaled to [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a P2/P5 PGM file")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536) or w < 1 or h < 1:
        raise FormatError(f"{path}: bad PGM header")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = w * h * dtype.itemsize
        raw = data[pos:pos + nbytes]
        if len(raw) < nbytes:
            raise FormatError(f"{path}: truncated PGM raster")
        pixels = np.frombuffer(raw, dtype=dtype)
    else:
        vals, _ = _tokens(data, w * h, pos) if w * h else ([], pos)
        pixels = np.array([int(t) for t in vals])
    return pixels.reshape(h, w).astype(float) / maxval


def write_pgm(path, image, maxval=255):
    """Write a binary PGM; values are clipped to [0, 1] and quantized."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    q = np.rint(np.clip(image, 0.0, 1.0) * maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{w} {h}\n{maxval}\n".encode()
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


# --- patches and noise ---------------------------------------------------------

def extract_patches(image, p, stride):
    """Row-major sliding ``p x p`` windows at ``stride``; incomplete border tiles are dropped."""
    image = np.asarray(image, dtype=float)
    if stride < 1:
        raise ValueError("stride must be at least 1")
    h, w = image.shape
    if h < p or w < p:
        raise ValueError(f"image too small: {h}x{w} for patch size {p}")
    return [image[i:i + p, j:j + p].copy()
            for i in range(0, h - p + 1, stride)
            for j in range(0, w - p + 1, stride)]


def add_noise(u, variance, seed):
    """``u`` plus i.i.d. Gaussian noise of the given variance from a PCG64 stream.

    A pure function of its arguments; values are not clipped.
    """
    u = np.asarray(u, dtype=float)
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return u.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    return u + rng.normal(0.0, np.sqrt(variance), size=u.shape)


def synthetic_cartoon(size, rng, n_shapes=6):
    """Piecewise-constant image of rectangles and discs on a flat background."""
    img = np.full((size, size), rng.uniform(0.0, 1.0))
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(n_shapes):
        level = rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            r0, r1 = np.sort(rng.integers(0, size + 1, 2))
            c0, c1 = np.sort(rng.integers(0, size + 1, 2))
            img[r0:max(r1, r0 + 1), c0:max(c1, c0 + 1)] = level
        else:
            cy, cx = rng.uniform(0, size, 2)
            rad = rng.uniform(size / 10, size / 3)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= rad ** 2] = level
    return img


def make_dataset(images, p, stride, variance, seed, source="", max_patches=None):
    """Cut every image into patches and add noise with a single seeded stream."""
    patches = [q for img in images for q in extract_patches(img, p, stride)]
    if max_patches is not None:
        patches = patches[:max_patches]
    if not patches:
        raise ValueError("no patches extracted")
    gts = np.stack(patches)
    noisy = add_noise(gts, variance, seed)
    manifest = DatasetManifest(p, len(patches), float(variance), int(seed), source)
    return PatchDataset(gts, noisy, manifest)


# --- persistence ---------------------------------------------------------------

def _paths(stem):
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def _read_pair(stem, kind):
    jpath, bpath = _paths(stem)
    try:
        meta = json.loads(jpath.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{jpath}: unreadable manifest ({exc})") from exc
    if not isinstance(meta, dict) or meta.get("kind") != kind:
        raise FormatError(f"{jpath}: not a {kind} manifest")
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{jpath}: unsupported format version {meta.get('format_version')!r}")
    try:
        payload = bpath.read_bytes()
    except OSError as exc:
        raise FormatError(f"{bpath}: unreadable payload ({exc})") from exc
    return meta, payload


def _check_payload(meta, payload, expected, where):
    if len(payload) != expected * _DTYPE.itemsize:
        raise FormatError(f"{where}: payload has {len(payload)} bytes, expected {expected * _DTYPE.itemsize}")
    if zlib.crc32(payload) != meta.get("crc32"):
        raise FormatError(f"{where}: checksum mismatch")


def save_dataset(stem, dataset):
    jpath, bpath = _paths(stem)
    payload = dataset.payload()
    meta = {"kind": "dataset", **asdict(dataset.manifest),
            "layout": "per patch: ground truth then noisy, row-major",
            "dtype": "<f8", "payload": bpath.name, "crc32": zlib.crc32(payload)}
    bpath.write_bytes(payload)
    jpath.write_text(json.dumps(meta, indent=2) + "\n")
    return jpath, bpath


def load_dataset(stem):
    meta, payload = _read_pair(stem, "dataset")
    try:
        p, count = int(meta["patch_size"]), int(meta["count"])
        manifest = DatasetManifest(**{k: meta[k] for k in DatasetManifest.__dataclass_fields__})
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{stem}: invalid manifest ({exc})") from exc
    _check_payload(meta, payload, 2 * count * p * p, str(stem))
    arr = np.frombuffer(payload, dtype=_DTYPE).astype(float).reshape(count, 2, p, p)
    return PatchDataset(arr[:, 0].copy(), arr[:, 1].copy(), manifest)


def _jsonable(meta):
    out = {}
    for k, v in meta.items():
        if isinstance(v, (bool, int, float, str)) or v is None:
            out[k] = v
        elif isinstance(v, np.generic):
            out[k] = v.item()
    return out


def save_model(stem, model):
    """Persist a :class:`QuadraticModel` or :class:`ConstantModel` with its scalar metadata."""
    jpath, bpath = _paths(stem)
    if model.kind == "quadratic":
        values = np.asarray(model.a, dtype=_DTYPE)
        extra = {"size": values.shape[0], "patch_size": model.patch_size}
    else:
        values = np.asarray([model.value], dtype=_DTYPE)
        extra = {"size": 0, "patch_size": None}
    payload = values.tobytes()
    meta = {"kind": "model", "model_kind": model.kind, "format_version": FORMAT_VERSION,
            **extra, "dtype": "<f8", "payload": bpath.name, "crc32": zlib.crc32(payload),
            "training": _jsonable(model.metadata)}
    bpath.write_bytes(payload)
    jpath.write_text(json.dumps(meta, indent=2) + "\n")
    return jpath, bpath


def load_model(stem, patch_size=None):
    """Load a model; ``patch_size`` enforces compatibility with the data it will see."""
    meta, payload = _read_pair(stem, "model")
    kind = meta.get("model_kind")
    training = meta.get("training", {})
    if kind == "constant":
        _check_payload(meta, payload, 1, str(stem))
        return ConstantModel(float(np.frombuffer(payload, dtype=_DTYPE)[0]), training)
    if kind != "quadratic":
        raise FormatError(f"{stem}: unknown model kind {kind!r}")
    try:
        size = int(meta["size"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{stem}: invalid manifest ({exc})") from exc
    _check_payload(meta, payload, size * size, str(stem))
    a = np.frombuffer(payload, dtype=_DTYPE).astype(float).reshape(size, size)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise FormatError(f"{stem}: model matrix is not symmetric")
    model = QuadraticModel(a, training)
    if size and np.linalg.eigvalsh(a).min() < -EIG_RTOL * np.linalg.norm(a):
        warnings.warn(f"{stem}: model matrix is not positive semidefinite", RuntimeWarning)
    if patch_size is not None and model.patch_size != patch_size:
        raise DimensionError(f"model trained for patch size {model.patch_size}, data has {patch_size}")
    return model
