# svl/data.py
"""
Dataset and tensor I/O.

SVLT tensor file (little-endian):

    "SVLT" | u8 version = 1 | u8 dtype = 0 (float64) | u32 ndim | ndim × u32 dims | payload

Event CSV: header ``t,x,y,p``; unsigned integer microseconds and pixels,
polarity 0 or 1.

Triplet manifest: JSON lines with ``id``, ``points_file``,
``image_emb_file``, ``text_emb_file`` and an optional ``label``. Paths are
relative to the manifest's directory.
"""

import csv
import hashlib
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from . import autodiff as ad
from .constants import (
    DEFAULT_HOLDOUT,
    DEFAULT_IMAGE_NOISE,
    DEFAULT_POINTS,
    EVENT_CSV_HEADER,
    PROVIDER_CHOICES,
    PROVIDER_FILE,
    PROVIDER_MOCK,
    SVLT_DTYPE_FLOAT64,
    SVLT_MAGIC,
    SVLT_VERSION,
)
from .exceptions import (
    ConfigError,
    DataError,
    DimensionMismatch,
    FormatError,
    NotFoundError,
    ShapeError,
)
from .geometry import EventStream, PointCloud, event_to_cloud, normalize_unit_sphere

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sBBI")

PROVIDER_MODES = tuple(mode for mode, _ in PROVIDER_CHOICES)

MANIFEST_FIELDS = ("id", "points_file", "image_emb_file", "text_emb_file")

# Error lines quoted in a single DataError before the rest are summarized
MAX_REPORTED_ERRORS = 10


# ============================================================================
# SVLT tensors
# ============================================================================


def save_tensor(path: Union[str, Path], t: Union[ad.Tensor, np.ndarray]) -> Path:
    """Write a tensor to an SVLT file, creating parent directories."""
    values = t.data if isinstance(t, ad.Tensor) else np.asarray(t, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(SVLT_MAGIC, SVLT_VERSION, SVLT_DTYPE_FLOAT64, values.ndim)
    dims = struct.pack(f"<{values.ndim}I", *values.shape)
    path.write_bytes(header + dims + values.astype("<f8").tobytes(order="C"))
    return path


def _read_header(blob: bytes, path: Path) -> Tuple[Tuple[int, ...], int]:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated SVLT header")
    magic, version, dtype, ndim = _HEADER.unpack_from(blob)
    if magic != SVLT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, not an SVLT file")
    if version != SVLT_VERSION:
        raise FormatError(f"{path}: unsupported SVLT version {version}")
    if dtype != SVLT_DTYPE_FLOAT64:
        raise FormatError(f"{path}: unsupported SVLT dtype code {dtype}")
    end = _HEADER.size + 4 * ndim
    if len(blob) < end:
        raise FormatError(f"{path}: truncated SVLT dimensions")
    return struct.unpack_from(f"<{ndim}I", blob, _HEADER.size), end


def _read_blob(path: Union[str, Path]) -> Tuple[bytes, Path]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"tensor file not found: {path}")
    return path.read_bytes(), path


def load_tensor(path: Union[str, Path]) -> ad.Tensor:
    """
    Read an SVLT file into a constant tensor, bit-exact.

    Raises:
        NotFoundError: File missing
        FormatError: Bad magic, unsupported version/dtype, truncated or oversized payload
    """
    blob, path = _read_blob(path)
    shape, offset = _read_header(blob, path)
    count = int(np.prod(shape, dtype=np.int64))
    expected = offset + 8 * count
    if len(blob) != expected:
        kind = "truncated" if len(blob) < expected else "oversized"
        raise FormatError(f"{path}: {kind} payload ({len(blob)} bytes, {expected} expected)")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return ad.tensor_new(shape, values.astype(np.float64))


def tensor_shape(path: Union[str, Path]) -> Tuple[int, ...]:
    """Shape recorded in an SVLT header, without reading the payload."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"tensor file not found: {path}")
    with path.open("rb") as f:
        head = f.read(_HEADER.size)
        if len(head) == _HEADER.size:
            head += f.read(4 * _HEADER.unpack_from(head)[3])
    return _read_header(head, path)[0]


def tensor_io(path: Union[str, Path], t: Optional[ad.Tensor] = None) -> Optional[ad.Tensor]:
    """Load when ``t`` is omitted, save otherwise."""
    if t is None:
        return load_tensor(path)
    save_tensor(path, t)
    return None


def _raise_collected(path: Path, errors: List[str], what: str):
    shown = "; ".join(errors[:MAX_REPORTED_ERRORS])
    more = len(errors) - MAX_REPORTED_ERRORS
    if more > 0:
        shown += f"; ... {more} more"
    raise DataError(f"{path}: {len(errors)} invalid {what}: {shown}")


# ============================================================================
# Event files
# ============================================================================


def _parse_unsigned(value: str) -> int:
    number = int(value.strip())
    if number < 0:
        raise ValueError("negative")
    return number


def read_events(path: Union[str, Path]) -> EventStream:
    """
    Parse an event CSV and sort it by timestamp.

    Every malformed row is reported, not just the first.
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"event file not found: {path}")

    rows = []
    errors = []
    with path.open("r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_CSV_HEADER:
            raise FormatError(f"{path}: header must be '{','.join(EVENT_CSV_HEADER)}'")

        for idx, row in enumerate(reader, start=2):  # header is line 1
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                errors.append(f"Line {idx}: expected 4 columns, got {len(row)}")
                continue
            try:
                t, x, y, p = (_parse_unsigned(cell) for cell in row)
            except ValueError:
                errors.append(f"Line {idx}: non-integer or negative value in {row}")
                continue
            if p not in (0, 1):
                errors.append(f"Line {idx}: polarity must be 0 or 1, got {p}")
                continue
            rows.append((t, x, y, p))

    if errors:
        _raise_collected(path, errors, "event rows")
    logger.debug("read %d events from %s", len(rows), path)
    return EventStream.from_rows(rows)


def write_events(path: Union[str, Path], stream: EventStream) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(EVENT_CSV_HEADER)
        for row in zip(stream.t, stream.x, stream.y, stream.p):
            writer.writerow([int(v) for v in row])
    return path


def load_cloud(path: Union[str, Path]) -> PointCloud:
    """
    Load an encoder input.

    ``.svlt``: N×3 coordinates, or N×(3+F) with trailing feature columns.
    ``.csv``: an event file, converted over its full time span and scaled
    into the unit sphere.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return normalize_unit_sphere(event_to_cloud(read_events(path)))
    if suffix != ".svlt":
        raise FormatError(f"{path}: clouds must be .svlt or event .csv files")

    values = load_tensor(path).data
    if values.ndim != 2 or values.shape[1] < 3:
        raise ShapeError(f"{path}: cloud tensor must be N×3 or N×(3+F), got {list(values.shape)}")
    features = values[:, 3:] if values.shape[1] > 3 else None
    return PointCloud(values[:, :3], features)


def read_labels(path: Union[str, Path]) -> List[str]:
    """Ordered class names from a JSON array of strings."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"labels file not found: {path}")
    try:
        labels = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(labels, list) or not all(isinstance(label, str) for label in labels):
        raise FormatError(f"{path}: expected a JSON array of strings")
    if len(set(labels)) != len(labels):
        raise DataError(f"{path}: duplicate labels")
    return labels


# ============================================================================
# Triplet manifests
# ============================================================================


@dataclass(frozen=True)
class TripletRecord:
    id: str
    points_file: Path
    image_emb_file: Path
    text_emb_file: Path
    label: Optional[str] = None

    def as_json(self, root: Path) -> Dict[str, str]:
        data = {
            "id": self.id,
            "points_file": self.points_file.relative_to(root).as_posix(),
            "image_emb_file": self.image_emb_file.relative_to(root).as_posix(),
            "text_emb_file": self.text_emb_file.relative_to(root).as_posix(),
        }
        if self.label is not None:
            data["label"] = self.label
        return data


def _embedding_width(path: Path, record_id: str) -> int:
    shape = tensor_shape(path)
    if len(shape) == 2 and shape[0] == 1:
        shape = shape[1:]
    if len(shape) != 1:
        raise ShapeError(f"record {record_id}: {path.name} is not an embedding vector")
    return shape[0]


def load_manifest(path: Union[str, Path]) -> List[TripletRecord]:
    """
    Read and validate a JSON-lines triplet manifest.

    Structural problems are collected over the whole file. Then every
    referenced file must exist and all image/text embeddings must share one
    width; those errors name the offending record id.
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"manifest not found: {path}")
    root = path.parent

    records = []
    errors = []
    seen = set()
    with path.open("r", encoding="utf-8") as f:
        for idx, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except ValueError:
                errors.append(f"Line {idx}: not valid JSON")
                continue
            if not isinstance(entry, dict):
                errors.append(f"Line {idx}: expected a JSON object")
                continue
            missing = [name for name in MANIFEST_FIELDS if not entry.get(name)]
            if missing:
                errors.append(f"Line {idx}: missing {', '.join(missing)}")
                continue
            unknown = set(entry) - set(MANIFEST_FIELDS) - {"label"}
            if unknown:
                errors.append(f"Line {idx}: unknown fields {', '.join(sorted(unknown))}")
                continue
            record_id = str(entry["id"])
            if record_id in seen:
                errors.append(f"Line {idx}: duplicate id '{record_id}'")
                continue
            seen.add(record_id)
            label = entry.get("label")
            records.append(
                TripletRecord(
                    record_id,
                    root / entry["points_file"],
                    root / entry["image_emb_file"],
                    root / entry["text_emb_file"],
                    None if label is None else str(label),
                )
            )

    if errors:
        _raise_collected(path, errors, "manifest lines")

    width = None
    for record in records:
        for file in (record.points_file, record.image_emb_file, record.text_emb_file):
            if not file.exists():
                raise NotFoundError(f"record {record.id}: missing file {file}")
        for file in (record.image_emb_file, record.text_emb_file):
            w = _embedding_width(file, record.id)
            if width is None:
                width = w
            elif w != width:
                raise DimensionMismatch(
                    f"record {record.id}: embedding width {w} differs from {width}"
                )

    logger.info("manifest %s: %d records, embedding width %s", path, len(records), width)
    return records


def write_manifest(path: Union[str, Path], records: Sequence[TripletRecord]) -> Path:
    path = Path(path)
    root = path.parent
    lines = [json.dumps(record.as_json(root), sort_keys=True) for record in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ============================================================================
# Embedding providers
# ============================================================================


@dataclass(frozen=True)
class EmbeddingProvider:
    """
    Frozen text/image embeddings.

    ``file`` reads precomputed SVLT vectors; ``mock`` derives a unit vector
    from sha256(seed, input id), so it is pure and order independent.
    """

    mode: str
    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PROVIDER_MODES:
            raise ConfigError(f"provider mode must be one of {PROVIDER_MODES}, got '{self.mode}'")
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")

    def embed(self, input_id: Union[str, Path]) -> np.ndarray:
        if self.mode == PROVIDER_MOCK:
            digest = hashlib.sha256(f"{self.seed}:{input_id}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vector = rng.normal(size=self.dim)
            return vector / np.linalg.norm(vector)

        vector = load_tensor(input_id).data.reshape(-1)
        if vector.size != self.dim:
            raise DimensionMismatch(
                f"{input_id}: embedding width {vector.size} differs from provider dim {self.dim}"
            )
        return vector

    def embed_many(self, input_ids: Sequence[Union[str, Path]]) -> np.ndarray:
        return np.stack([self.embed(input_id) for input_id in input_ids])

    def embed_record(self, record: "TripletRecord") -> Tuple[np.ndarray, np.ndarray]:
        """
        (image, text) embeddings of one manifest record.

        The mock keys images by record id and text by label, so records of
        one class share a text embedding.
        """
        if self.mode == PROVIDER_MOCK:
            return (
                self.embed(f"image:{record.id}"),
                self.embed(f"text:{record.label or record.id}"),
            )
        return self.embed(record.image_emb_file), self.embed(record.text_emb_file)


# ============================================================================
# Synthetic triplets
# ============================================================================


def _sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _cube_surface(rng, n):
    points = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    points[np.arange(n), axis] = rng.choice([-1.0, 1.0], size=n)
    return points


def _two_cluster(rng, n):
    side = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)
    points = rng.normal(scale=0.15, size=(n, 3))
    points[:, 0] += side
    return points


def _helix(rng, n):
    s = rng.uniform(0.0, 4.0 * np.pi, size=n)
    return np.column_stack([np.cos(s), np.sin(s), s / (2.0 * np.pi) - 1.0])


def _plane_patch(rng, n):
    xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    return np.column_stack([xy, np.zeros(n)])


def _torus(rng, n):
    a, b = rng.uniform(0.0, 2.0 * np.pi, size=(2, n))
    ring = 1.0 + 0.35 * np.cos(b)
    return np.column_stack([ring * np.cos(a), ring * np.sin(a), 0.35 * np.sin(b)])


def _cylinder(rng, n):
    a = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([0.5 * np.cos(a), 0.5 * np.sin(a), rng.uniform(-1.0, 1.0, size=n)])


def _cone(rng, n):
    a = rng.uniform(0.0, 2.0 * np.pi, size=n)
    h = rng.uniform(0.0, 1.0, size=n)
    r = 1.0 - h
    return np.column_stack([r * np.cos(a), r * np.sin(a), 2.0 * h - 1.0])


PRIMITIVES: List[Tuple[str, Callable[[np.random.Generator, int], np.ndarray]]] = [
    ("sphere", _sphere),
    ("cube", _cube_surface),
    ("two-cluster", _two_cluster),
    ("helix", _helix),
    ("plane", _plane_patch),
    ("torus", _torus),
    ("cylinder", _cylinder),
    ("cone", _cone),
]


def _rotation(axis: int, degrees: float) -> np.ndarray:
    c, s = np.cos(np.radians(degrees)), np.sin(np.radians(degrees))
    i, j = [a for a in range(3) if a != axis]
    r = np.eye(3)
    r[i, i], r[i, j], r[j, i], r[j, j] = c, -s, s, c
    return r


# Fixed orientations; each also stretches one axis so shapes with rotational
# symmetry (the sphere) still yield distinct classes.
ORIENTATIONS = [
    np.eye(3),
    _rotation(0, 90.0) @ np.diag([1.0, 1.0, 0.45]),
    _rotation(2, 90.0) @ _rotation(1, 45.0) @ np.diag([0.45, 1.0, 1.0]),
]

MAX_SYNTH_CLASSES = len(PRIMITIVES) * len(ORIENTATIONS)


def class_names(n_classes: int) -> List[str]:
    return [
        f"{PRIMITIVES[c % len(PRIMITIVES)][0]}-{c // len(PRIMITIVES)}" for c in range(n_classes)
    ]


@dataclass
class SyntheticDataset:
    """
    Desk-scale triplets: class-specific clouds, one orthonormal text
    embedding per class, and per-sample image embeddings near it.
    """

    clouds: np.ndarray  # M×N×3
    image: np.ndarray  # M×C
    text: np.ndarray  # M×C
    labels: np.ndarray  # M class indices
    prompts: np.ndarray  # K×C
    class_names: List[str]
    seed: int
    ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def split(self, holdout: float = DEFAULT_HOLDOUT) -> Tuple[List[int], List[int]]:
        """
        Stratified train/test indices, deterministic under the dataset seed.
        Every class keeps at least one training sample.
        """
        if not 0.0 <= holdout < 1.0:
            raise ConfigError(f"holdout must lie in [0, 1), got {holdout}")
        rng = np.random.default_rng([self.seed, 1])
        train, test = [], []
        for c in range(len(self.class_names)):
            members = np.flatnonzero(self.labels == c)
            members = members[rng.permutation(len(members))]
            n_test = min(int(round(len(members) * holdout)), len(members) - 1)
            test.extend(int(i) for i in members[:n_test])
            train.extend(int(i) for i in members[n_test:])
        return sorted(train), sorted(test)

    def materialize(self, directory: Union[str, Path], holdout: float = DEFAULT_HOLDOUT) -> Path:
        """
        Write the dataset as files: per-sample clouds and embeddings, the
        prompt matrix, ordered labels, the full manifest and its split.

        Returns:
            Path of ``manifest.jsonl``
        """
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        records = []
        for i, sample_id in enumerate(self.ids):
            points_file = save_tensor(root / "clouds" / f"{sample_id}.svlt", self.clouds[i])
            image_file = save_tensor(root / "image" / f"{sample_id}.svlt", self.image[i])
            text_file = save_tensor(root / "text" / f"{sample_id}.svlt", self.text[i])
            label = self.class_names[int(self.labels[i])]
            records.append(TripletRecord(sample_id, points_file, image_file, text_file, label))

        save_tensor(root / "prompts.svlt", self.prompts)
        (root / "labels.json").write_text(
            json.dumps(self.class_names, indent=2) + "\n", encoding="utf-8"
        )
        manifest = write_manifest(root / "manifest.jsonl", records)

        train, test = self.split(holdout)
        write_manifest(root / "train.jsonl", [records[i] for i in train])
        write_manifest(root / "test.jsonl", [records[i] for i in test])
        logger.info(
            "materialized %d triplets (%d train / %d test) into %s",
            len(records),
            len(train),
            len(test),
            root,
        )
        return manifest


def synth_triplets(
    n_classes: int,
    n_per_class: int,
    dim: int,
    seed: int,
    n_points: int = DEFAULT_POINTS,
    noise: float = DEFAULT_IMAGE_NOISE,
    jitter: float = 0.01,
) -> SyntheticDataset:
    """
    Generate a deterministic synthetic triplet dataset.

    Class c uses primitive c mod 8 in orientation c div 8. Text embeddings
    are orthonormal; an image embedding is its class text embedding plus a
    perturbation of norm ``noise``, renormalized. Clouds get Gaussian jitter
    and are scaled into the unit sphere.

    Raises:
        ConfigError: More classes than primitives × orientations, or than dim
    """
    if not 1 <= n_classes <= MAX_SYNTH_CLASSES:
        raise ConfigError(f"synthetic classes must lie in [1, {MAX_SYNTH_CLASSES}], got {n_classes}")
    if n_classes > dim:
        raise ConfigError(f"{n_classes} orthonormal classes need dim >= {n_classes}, got {dim}")
    if n_per_class < 1 or n_points < 1:
        raise ConfigError("per-class count and points per cloud must be >= 1")

    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, n_classes)))
    prompts = basis.T.copy()

    names = class_names(n_classes)
    clouds, image, text, labels, ids = [], [], [], [], []
    for c in range(n_classes):
        generate = PRIMITIVES[c % len(PRIMITIVES)][1]
        orientation = ORIENTATIONS[c // len(PRIMITIVES)]
        for i in range(n_per_class):
            points = generate(rng, n_points) @ orientation.T
            points = points + rng.normal(scale=jitter, size=points.shape)
            clouds.append(normalize_unit_sphere(PointCloud(points)).points)

            perturbation = rng.normal(size=dim)
            perturbation *= noise / np.linalg.norm(perturbation)
            vector = prompts[c] + perturbation
            image.append(vector / np.linalg.norm(vector))
            text.append(prompts[c])
            labels.append(c)
            ids.append(f"{names[c]}-{i:04d}")

    logger.debug("synth_triplets: %d classes x %d samples, dim %d", n_classes, n_per_class, dim)
    return SyntheticDataset(
        clouds=np.stack(clouds),
        image=np.stack(image),
        text=np.stack(text),
        labels=np.asarray(labels, dtype=np.int64),
        prompts=prompts,
        class_names=names,
        seed=seed,
        ids=ids,
    )


# ============================================================================
# In-memory training set
# ============================================================================


@dataclass
class TripletDataset:
    """Stacked clouds and frozen embeddings, ready for batching."""

    clouds: List[PointCloud]
    image: np.ndarray
    text: np.ndarray
    labels: List[Optional[str]]
    ids: List[str]

    def __post_init__(self):
        n = len(self.clouds)
        if n == 0:
            raise DataError("dataset is empty")
        if self.image.shape != self.text.shape or self.image.shape[0] != n:
            raise ShapeError("image and text embeddings must be M×C for M clouds")
        if len(self.labels) != n or len(self.ids) != n:
            raise ShapeError("labels and ids must have one entry per cloud")
        self.image.flags.writeable = False
        self.text.flags.writeable = False

    def __len__(self) -> int:
        return len(self.clouds)

    @property
    def dim(self) -> int:
        return self.image.shape[1]

    @classmethod
    def from_synthetic(
        cls, ds: SyntheticDataset, indices: Optional[Sequence[int]] = None
    ) -> "TripletDataset":
        indices = list(range(len(ds))) if indices is None else list(indices)
        return cls(
            clouds=[PointCloud(ds.clouds[i]) for i in indices],
            image=ds.image[indices].copy(),
            text=ds.text[indices].copy(),
            labels=[ds.class_names[int(ds.labels[i])] for i in indices],
            ids=[ds.ids[i] for i in indices],
        )

    @classmethod
    def from_manifest(
        cls,
        path: Union[str, Path],
        workers: Optional[int] = None,
        provider: Optional[EmbeddingProvider] = None,
    ) -> "TripletDataset":
        """
        Validate the manifest serially, then load records in parallel.

        Embeddings come from ``provider``; the default reads the manifest's
        SVLT files at their common width.
        """
        records = load_manifest(path)
        if not records:
            raise DataError(f"{path}: manifest has no records")
        if provider is None:
            width = tensor_shape(records[0].image_emb_file)[0]
            provider = EmbeddingProvider(PROVIDER_FILE, width)
        workers = workers or getattr(settings, "SVL_THREADS", 1)

        def load(record: TripletRecord):
            return (load_cloud(record.points_file),) + provider.embed_record(record)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            loaded = list(pool.map(load, records))

        return cls(
            clouds=[item[0] for item in loaded],
            image=np.stack([item[1] for item in loaded]),
            text=np.stack([item[2] for item in loaded]),
            labels=[record.label for record in records],
            ids=[record.id for record in records],
        )

    def label_indices(self, names: Sequence[str]) -> np.ndarray:
        """Map labels to positions in ``names``; unknown or missing labels are errors."""
        lookup = {name: i for i, name in enumerate(names)}
        indices = []
        for record_id, label in zip(self.ids, self.labels):
            if label not in lookup:
                raise DataError(f"record {record_id}: label {label!r} is outside the class set")
            indices.append(lookup[label])
        return np.asarray(indices, dtype=np.int64)

    def batches(self, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
        order = rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            yield order[start : start + batch_size]

    def clouds_at(self, indices: Sequence[int]) -> List[PointCloud]:
        return [self.clouds[int(i)] for i in indices]
