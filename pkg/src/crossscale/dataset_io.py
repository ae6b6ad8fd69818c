"""Reading image datasets and writing models, reports and mode images.

File formats
------------
Manifest (JSON)::

    {"format": "crossscale-manifest", "version": 1,
     "geometry": {"height": 50, "width": 50},
     "entries": [{"class": "c00", "condition": 0,
                  "images": ["c00/0/000.pgm", ...]}, ...]}

Image paths are relative to the manifest's directory.

Model file (binary, little-endian)::

    magic    8 bytes   b"XSCLSUB\\0"
    version  uint32
    height   uint32
    width    uint32
    d        uint32    height * width
    D        uint32    basis columns
    energy   float64
    mean     d   x float64
    basis    d*D x float64, row-major (d rows, D columns)
    crc32    uint32    of every preceding byte

plus a JSON sidecar ``<model>.json`` holding labels and provenance.

Reports are CSV (fixed column order) or JSON with ``schema_version``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import zlib
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import SeparationReport, SimilarityMatrix
from .learning import ImageSet, SubspaceModel
from .matching import MatchResult
from .projection import ImageGeometry, ProjectionMatrix

__all__ = [
    "FormatError",
    "MANIFEST_FORMAT",
    "MODEL_MAGIC",
    "MODEL_VERSION",
    "REPORT_COLUMNS",
    "read_image",
    "write_image",
    "read_pgm",
    "write_pgm",
    "to_greyscale",
    "load_image_sets",
    "write_manifest",
    "save_image_sets",
    "manifest_hash",
    "save_model",
    "load_model",
    "export_modes",
    "rescale_to_bytes",
    "write_report",
    "write_similarity_matrix",
    "write_projection_csv",
    "format_float",
]

MANIFEST_FORMAT = "crossscale-manifest"
MODEL_MAGIC = b"XSCLSUB\0"
MODEL_VERSION = 1
REPORT_SCHEMA_VERSION = 1
REPORT_COLUMNS = (
    "method",
    "kernel",
    "low_geometry",
    "high_geometry",
    "noise_sigma",
    "e_w",
    "e_b",
    "mu",
    "seed",
)
_HEADER = struct.Struct("<8sIIIIId")
_LUMA = np.array([0.299, 0.587, 0.114])


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# -- images -----------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(int(data[start:pos]))
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) 8/16-bit PGM as a float array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"{path}: not a PGM file")
    (width, height, maxval), pos = _pgm_tokens(data, 3, 2)
    if magic == b"P2":
        values, _ = _pgm_tokens(data, width * height, pos)
        return np.array(values, dtype=float).reshape(height, width)
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * dtype.itemsize
    if len(data) - pos < n:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(
        height, width
    ).astype(float)


def write_pgm(path, image) -> None:
    """Write an 8-bit binary PGM; values are rounded and clipped to [0, 255]."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def to_greyscale(image: np.ndarray) -> np.ndarray:
    """Luminance of an RGB(A) image; greyscale input is returned unchanged."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] in (3, 4):
        return img[..., :3] @ _LUMA
    raise FormatError(f"unsupported image shape {img.shape}")


def read_image(path) -> np.ndarray:
    """Read a PGM (always supported) or PNG (needs Pillow) as greyscale floats."""
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return read_pgm(path)
    if suffix == ".png":
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover
            raise FormatError("PNG support requires Pillow (install the 'png' extra)") from exc
        with Image.open(path) as im:
            return to_greyscale(np.asarray(im))
    raise FormatError(f"{path}: unsupported image format {suffix!r}")


def write_image(path, image) -> None:
    if Path(path).suffix.lower() == ".png":
        from PIL import Image

        pixels = np.clip(np.rint(np.asarray(image, float)), 0, 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(path)
    else:
        write_pgm(path, image)


# -- manifests ----------------------------------------------------------------


def manifest_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_image_sets(manifest_path) -> list[ImageSet]:
    """Load every (class, condition) group listed in a manifest.

    Images are converted to greyscale and rasterised row-major.

    Raises
    ------
    FileNotFoundError
        If a listed image is missing.
    FormatError
        On a malformed manifest, an undecodable image, or an image whose
        size differs from the manifest geometry (the message names the file).
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: not a {MANIFEST_FORMAT} file")
    try:
        geometry = ImageGeometry(int(doc["geometry"]["height"]), int(doc["geometry"]["width"]))
        entries = doc["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{manifest_path}: bad manifest ({exc})") from exc
    root = manifest_path.parent
    groups: dict[tuple, list[np.ndarray]] = {}
    for entry in entries:
        key = (entry["class"], entry.get("condition"))
        for rel in entry["images"]:
            path = root / rel
            if not path.exists():
                raise FileNotFoundError(f"missing image {path}")
            img = read_image(path)
            if img.shape != geometry.shape:
                raise FormatError(
                    f"{path}: image is {img.shape[1]}x{img.shape[0]}, manifest geometry is "
                    f"{geometry}"
                )
            groups.setdefault(key, []).append(img.ravel())
    return [
        ImageSet(geometry, np.vstack(rows), class_label=cls, condition_label=cond)
        for (cls, cond), rows in groups.items()
    ]


def write_manifest(path, geometry: ImageGeometry, entries: Sequence[dict], provenance: dict | None = None) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "geometry": {"height": geometry.height, "width": geometry.width},
        "entries": list(entries),
    }
    if provenance:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def save_image_sets(
    sets: Iterable[ImageSet], out_dir, suffix: str = ".pgm", provenance: dict | None = None
) -> Path:
    """Write image sets as 8-bit images plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    geometry = None
    for s in sets:
        geometry = geometry or s.geometry
        sub = Path(str(s.class_label)) / str(s.condition_label)
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
        names = []
        for i, row in enumerate(s.samples):
            rel = sub / f"{i:04d}{suffix}"
            write_image(out_dir / rel, row.reshape(s.geometry.shape))
            names.append(rel.as_posix())
        entries.append({"class": s.class_label, "condition": s.condition_label, "images": names})
    if geometry is None:
        raise ValueError("no image sets to save")
    manifest = out_dir / "manifest.json"
    write_manifest(manifest, geometry, entries, provenance)
    return manifest


# -- models -------------------------------------------------------------------


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def save_model(model: SubspaceModel, path) -> None:
    """Write a model file and its JSON sidecar."""
    path = Path(path)
    d, D = model.basis.shape
    if d != model.geometry.pixels or model.mean.shape != (d,):
        raise ValueError("model arrays do not match its geometry")
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            model.geometry.height,
            model.geometry.width,
            d,
            D,
            float(model.energy_captured),
        )
    )
    buf.write(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(model.basis, dtype="<f8").tobytes())
    payload = buf.getvalue()
    path.write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))
    side = {
        "format_version": MODEL_VERSION,
        "class_label": _jsonable(model.class_label),
        "condition_label": _jsonable(model.condition_label),
        "geometry": str(model.geometry),
        "dim": D,
        "provenance": model.provenance,
    }
    _sidecar(path).write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")


def load_model(path) -> SubspaceModel:
    """Read a model written by :func:`save_model`.

    Raises
    ------
    FormatError
        On bad magic bytes, an unknown version, truncation or a checksum mismatch.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size + 4:
        raise FormatError(f"{path}: truncated model file")
    magic, version, height, width, d, D, energy = _HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic bytes {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    expected = _HEADER.size + 8 * (d + d * D) + 4
    if len(data) != expected:
        raise FormatError(f"{path}: truncated model file ({len(data)} of {expected} bytes)")
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if crc != zlib.crc32(data[: expected - 4]):
        raise FormatError(f"{path}: checksum mismatch")
    if d != height * width:
        raise FormatError(f"{path}: pixel count does not match geometry")
    off = _HEADER.size
    mean = np.frombuffer(data, dtype="<f8", count=d, offset=off).astype(float)
    basis = np.frombuffer(data, dtype="<f8", count=d * D, offset=off + 8 * d).reshape(d, D)
    side_path = _sidecar(path)
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    return SubspaceModel(
        geometry=ImageGeometry(height, width),
        mean=mean,
        basis=basis.astype(float),
        energy_captured=energy,
        class_label=side.get("class_label"),
        condition_label=side.get("condition_label"),
        provenance=side.get("provenance", {}),
    )


# -- mode images --------------------------------------------------------------


def rescale_to_bytes(vector) -> np.ndarray:
    """Affine map ``min -> 0``, ``max -> 255``; a constant vector becomes mid-grey."""
    v = np.asarray(vector, dtype=float)
    lo, hi = v.min(), v.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.full(v.shape, 127.5)
    return (v - lo) * (255.0 / (hi - lo))


def export_modes(
    result: MatchResult,
    mean_hi,
    mean_lo_reconstructed,
    geometry: ImageGeometry,
    path_prefix,
    *,
    add_mean: bool = True,
    count: int | None = None,
    suffix: str = ".pgm",
) -> list[Path]:
    """Write each (reference, reconstructed) mode pair as two greyscale images.

    With ``add_mean`` the respective mean image is added to a mode before
    it is rescaled to the full 8-bit range.  Files are named
    ``<prefix>_mode<i>_reference<suffix>`` and ``..._reconstructed<suffix>``.
    """
    prefix = Path(path_prefix)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    pairs = result.mode_pairs[: count if count is not None else len(result.mode_pairs)]
    written = []
    for i, (ref, rec) in enumerate(pairs):
        for tag, vec, mean in (
            ("reference", ref, mean_hi),
            ("reconstructed", rec, mean_lo_reconstructed),
        ):
            if vec.shape[0] != geometry.pixels:
                raise ValueError(f"mode has {vec.shape[0]} entries, geometry {geometry} needs {geometry.pixels}")
            img = vec + np.asarray(mean) if add_mean and mean is not None else vec
            out = prefix.with_name(f"{prefix.name}_mode{i}_{tag}{suffix}")
            write_image(out, rescale_to_bytes(img).reshape(geometry.shape))
            written.append(out)
    return written


# -- reports ------------------------------------------------------------------


def format_float(x: float) -> str:
    """12 significant digits; infinities as ``inf``/``-inf``."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _row(r: SeparationReport) -> dict:
    return {
        "method": str(r.method) if r.method is not None else "",
        "kernel": str(r.kernel) if r.kernel is not None else "",
        "low_geometry": str(r.low_geometry) if r.low_geometry else "",
        "high_geometry": str(r.high_geometry) if r.high_geometry else "",
        "noise_sigma": r.noise_sigma,
        "e_w": r.within_confidence,
        "e_b": r.between_confidence,
        "mu": r.separation,
        "seed": r.seed,
    }


def write_report(reports: Sequence[SeparationReport], fmt: str, path) -> None:
    """Write separation reports as CSV or JSON.

    Floats carry 12 significant digits.  An infinite separation is the
    string ``inf`` in CSV and ``null`` with ``mu_infinite: true`` in JSON.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    rows = [_row(r) for r in reports]
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    format_float(v) if isinstance(v, float) else ("" if v is None else v)
                    for v in (row[c] for c in REPORT_COLUMNS)
                ]
            )
        Path(path).write_text(out.getvalue())
    elif fmt == "json":
        items = []
        for row in rows:
            item = {}
            for c in REPORT_COLUMNS:
                v = row[c]
                if isinstance(v, float):
                    v = None if math.isinf(v) else float(format_float(v))
                item[c] = v
            item["mu_infinite"] = math.isinf(row["mu"])
            items.append(item)
        doc = {"schema_version": REPORT_SCHEMA_VERSION, "columns": list(REPORT_COLUMNS), "reports": items}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def write_similarity_matrix(sm: SimilarityMatrix, path) -> None:
    """CSV with a header of probe labels and one row per gallery label."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["gallery\\probe", *map(str, sm.probe_labels)])
    for label, row in zip(sm.gallery_labels, sm.values):
        writer.writerow([str(label), *(format_float(float(v)) for v in row)])
    Path(path).write_text(out.getvalue())


def write_projection_csv(P: ProjectionMatrix, path) -> None:
    """One matrix row per line, row-major, full precision."""
    with open(path, "w") as fh:
        for row in np.asarray(P.entries):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def default_output_dir() -> Path:
    """``$CROSSSCALE_OUTPUT_DIR`` if set, else the current directory."""
    return Path(os.environ.get("CROSSSCALE_OUTPUT_DIR", "."))
