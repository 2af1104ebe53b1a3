"""On-disk formats: datasets, annotation logs, and confusion matrices.

A dataset is a directory:

* ``meta.json`` — class names and default parameters;
* ``gt.csv`` — per-image soft labels (``image_id, p_0..p_{K-1}`` and an
  optional trailing ``proposal`` column holding a class name);
* ``annotations.csv`` (optional) — one-hot annotations
  (``image_id, annotator_idx, class``);
* ``acceptance_log.csv`` (optional) — proposal-guided annotation events
  (``image_id, proposal_class, annotated_class``).

When ``gt.csv`` is absent, soft labels are averaged from the raw
annotations.  Confusion matrices live in single JSON files.  All writers
emit a canonical form (sorted JSON keys, ``\\n`` line ends, shortest
round-trip float representation) so saving what was loaded is
byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from ..calibration import AcceptanceRecord, TwoProposalRecord
from ..core import (
    AnnotationSet,
    DatasetMeta,
    LabelDistribution,
    TransitionMatrix,
    soft_gt_from_annotations,
)

__all__ = [
    "FormatError",
    "ImageRecord",
    "Dataset",
    "LogEntry",
    "TransitionMatrixFile",
    "MATRIX_ROW_TOL",
    "load_dataset",
    "save_dataset",
    "load_acceptance_log",
    "save_acceptance_log",
    "acceptance_records_from_log",
    "two_proposal_records_from_log",
    "load_transition_matrix",
    "save_transition_matrix",
    "bundled_transition_matrix",
    "bundled_transition_names",
]

META_NAME = "meta.json"
GT_NAME = "gt.csv"
ANNOTATIONS_NAME = "annotations.csv"
ACCEPTANCE_LOG_NAME = "acceptance_log.csv"

# Published confusion tables round entries to about three decimals, so a
# row may sum to e.g. 0.999; accept that here and renormalize explicitly.
MATRIX_ROW_TOL = 2e-2

_META_KEYS = {"class_names", "delta", "upper_bound", "mu"}
_MATRIX_KEYS = {"class_names", "rows", "metadata"}


class FormatError(ValueError):
    """A file does not parse against its schema."""


def _fmt(x: float) -> str:
    """Shortest exact decimal form of a float (round-trips via repr)."""
    return repr(float(x))


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise FormatError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    return data


@dataclass(frozen=True)
class ImageRecord:
    """One image: its soft label, optional raw annotations and proposal."""

    image_id: str
    gt: LabelDistribution
    annotations: Optional[AnnotationSet] = None
    annotation_classes: tuple = ()
    proposal: Optional[int] = None


@dataclass(frozen=True)
class Dataset:
    """A validated in-memory dataset."""

    meta: DatasetMeta
    images: tuple

    def __post_init__(self):
        images = tuple(self.images)
        seen = set()
        k = self.meta.num_classes
        for img in images:
            if img.image_id in seen:
                raise FormatError(f"duplicate image_id {img.image_id!r}")
            seen.add(img.image_id)
            if img.gt.num_classes != k:
                raise FormatError(
                    f"image {img.image_id!r}: {img.gt.num_classes} classes, "
                    f"metadata declares {k}"
                )
            if img.annotations is not None and img.annotations.num_classes != k:
                raise FormatError(
                    f"image {img.image_id!r}: annotation tally has wrong width"
                )
            if img.proposal is not None and not 0 <= img.proposal < k:
                raise FormatError(
                    f"image {img.image_id!r}: proposal index {img.proposal} "
                    f"out of range"
                )
        object.__setattr__(self, "images", images)

    @property
    def num_classes(self) -> int:
        return self.meta.num_classes

    def image(self, image_id: str) -> ImageRecord:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise KeyError(f"unknown image_id {image_id!r}")

    def gt_by_id(self) -> dict:
        return {img.image_id: img.gt for img in self.images}


class LogEntry(NamedTuple):
    """One proposal-guided annotation event (class indices)."""

    image_id: str
    proposal: int
    annotated: int


def _load_meta(path: Path) -> DatasetMeta:
    data = _read_json(path)
    unknown = set(data) - _META_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown metadata keys {sorted(unknown)}")
    if "class_names" not in data:
        raise FormatError(f"{path}: missing required key 'class_names'")
    names = data["class_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise FormatError(f"{path}: 'class_names' must be a list of strings")
    kwargs = {}
    for key in ("delta", "upper_bound", "mu"):
        if key in data:
            value = data[key]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise FormatError(f"{path}: {key!r} must be a number")
            kwargs[key] = float(value)
    try:
        return DatasetMeta(tuple(names), **kwargs)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def _expect_header(path: Path, got: Optional[list], want: list) -> None:
    if got is None:
        raise FormatError(f"{path}:1: empty file, expected header {want}")
    if [h.strip() for h in got] != want:
        raise FormatError(f"{path}:1: header {got} does not match {want}")


def _class_index(path: Path, line: int, meta: DatasetMeta, name: str) -> int:
    try:
        return meta.index_of(name.strip())
    except KeyError:
        raise FormatError(
            f"{path}:{line}: unknown class name {name.strip()!r}"
        ) from None


def _load_gt(path: Path, meta: DatasetMeta):
    """Parse gt.csv into {image_id: (gt, proposal_or_None)} preserving order."""
    k = meta.num_classes
    base_header = ["image_id"] + [f"p_{i}" for i in range(k)]
    rows = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        has_proposal = header is not None and [
            h.strip() for h in header
        ] == base_header + ["proposal"]
        if not has_proposal:
            _expect_header(path, header, base_header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            expected = len(base_header) + (1 if has_proposal else 0)
            if len(row) != expected:
                raise FormatError(
                    f"{path}:{line}: expected {expected} fields, got {len(row)}"
                )
            image_id = row[0].strip()
            if not image_id:
                raise FormatError(f"{path}:{line}: empty image_id")
            if image_id in rows:
                raise FormatError(f"{path}:{line}: duplicate image_id {image_id!r}")
            try:
                probs = [float(v) for v in row[1 : 1 + k]]
            except ValueError as e:
                raise FormatError(f"{path}:{line}: {e}") from e
            try:
                gt = LabelDistribution(np.asarray(probs))
            except ValueError as e:
                raise FormatError(
                    f"{path}:{line}: non-normalizable soft label ({e})"
                ) from e
            proposal = None
            if has_proposal and row[-1].strip():
                proposal = _class_index(path, line, meta, row[-1])
            rows[image_id] = (gt, proposal)
    return rows


def _load_annotations(path: Path, meta: DatasetMeta):
    """Parse annotations.csv into {image_id: [class index, ...]} in file order."""
    rows = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        _expect_header(path, header, ["image_id", "annotator_idx", "class"])
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(
                    f"{path}:{line}: expected 3 fields, got {len(row)}"
                )
            image_id = row[0].strip()
            if not image_id:
                raise FormatError(f"{path}:{line}: empty image_id")
            try:
                idx = int(row[1])
            except ValueError as e:
                raise FormatError(f"{path}:{line}: {e}") from e
            if idx < 0:
                raise FormatError(f"{path}:{line}: negative annotator_idx")
            cls = _class_index(path, line, meta, row[2])
            rows.setdefault(image_id, []).append(cls)
    return rows


def load_dataset(path) -> Dataset:
    """Read and validate a dataset directory.

    Soft labels are taken from ``gt.csv`` when present, else averaged from
    ``annotations.csv``; at least one of the two must exist.
    """
    root = Path(path)
    if not root.is_dir():
        raise FormatError(f"{root}: not a dataset directory")
    meta_path = root / META_NAME
    if not meta_path.exists():
        raise FormatError(f"{meta_path}: missing metadata file")
    meta = _load_meta(meta_path)

    gt_path = root / GT_NAME
    ann_path = root / ANNOTATIONS_NAME
    gt_rows = _load_gt(gt_path, meta) if gt_path.exists() else None
    ann_rows = _load_annotations(ann_path, meta) if ann_path.exists() else None
    if gt_rows is None and ann_rows is None:
        raise FormatError(f"{root}: need {GT_NAME} or {ANNOTATIONS_NAME}")

    images = []
    if gt_rows is not None:
        for image_id, (gt, proposal) in gt_rows.items():
            classes = tuple((ann_rows or {}).get(image_id, ()))
            annotations = (
                AnnotationSet.tally(classes, meta.num_classes) if classes else None
            )
            images.append(
                ImageRecord(image_id, gt, annotations, classes, proposal)
            )
        orphans = set(ann_rows or {}) - set(gt_rows)
        if orphans:
            raise FormatError(
                f"{ann_path}: image_id {sorted(orphans)[0]!r} not present in "
                f"{GT_NAME}"
            )
    else:
        for image_id, classes in ann_rows.items():
            annotations = AnnotationSet.tally(classes, meta.num_classes)
            try:
                gt = soft_gt_from_annotations(annotations)
            except ValueError as e:
                raise FormatError(f"{ann_path}: image {image_id!r}: {e}") from e
            images.append(
                ImageRecord(image_id, gt, annotations, tuple(classes), None)
            )
    return Dataset(meta, tuple(images))


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset directory in canonical form."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = dataset.meta
    meta_obj = {
        "class_names": list(meta.class_names),
        "delta": meta.delta,
        "upper_bound": meta.upper_bound,
        "mu": meta.mu,
    }
    (root / META_NAME).write_text(_dump_json(meta_obj), encoding="utf-8")

    k = meta.num_classes
    has_proposal = any(img.proposal is not None for img in dataset.images)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["image_id"] + [f"p_{i}" for i in range(k)]
    if has_proposal:
        header.append("proposal")
    writer.writerow(header)
    for img in dataset.images:
        row = [img.image_id] + [_fmt(v) for v in img.gt.probs]
        if has_proposal:
            row.append("" if img.proposal is None else meta.name_of(img.proposal))
        writer.writerow(row)
    (root / GT_NAME).write_text(buf.getvalue(), encoding="utf-8")

    if any(img.annotation_classes for img in dataset.images):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image_id", "annotator_idx", "class"])
        for img in dataset.images:
            for idx, cls in enumerate(img.annotation_classes):
                writer.writerow([img.image_id, idx, meta.name_of(cls)])
        (root / ANNOTATIONS_NAME).write_text(buf.getvalue(), encoding="utf-8")


def load_acceptance_log(path, meta: DatasetMeta):
    """Read an acceptance log into class-index entries, preserving order."""
    p = Path(path)
    entries = []
    with open(p, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        _expect_header(p, header, ["image_id", "proposal_class", "annotated_class"])
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{p}:{line}: expected 3 fields, got {len(row)}")
            image_id = row[0].strip()
            if not image_id:
                raise FormatError(f"{p}:{line}: empty image_id")
            entries.append(
                LogEntry(
                    image_id,
                    _class_index(p, line, meta, row[1]),
                    _class_index(p, line, meta, row[2]),
                )
            )
    return entries


def save_acceptance_log(entries: Sequence[LogEntry], path, meta: DatasetMeta) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "proposal_class", "annotated_class"])
    for e in entries:
        writer.writerow(
            [e.image_id, meta.name_of(e.proposal), meta.name_of(e.annotated)]
        )
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def acceptance_records_from_log(
    entries: Sequence[LogEntry], gt_by_id: Mapping[str, LabelDistribution]
) -> list:
    """Join log entries with their images' soft labels."""
    records = []
    for e in entries:
        gt = gt_by_id.get(e.image_id)
        if gt is None:
            raise FormatError(
                f"acceptance log references unknown image_id {e.image_id!r}"
            )
        records.append(AcceptanceRecord(e.image_id, e.proposal, e.annotated, gt))
    return records


def two_proposal_records_from_log(
    entries: Sequence[LogEntry], num_classes: int
) -> list:
    """Group log entries into two-round records, one per image.

    Every image must appear with exactly two distinct proposals; the
    round order follows first appearance in the log.
    """
    by_image = {}
    for e in entries:
        by_image.setdefault(e.image_id, []).append(e)
    records = []
    for image_id, group in by_image.items():
        proposals = []
        for e in group:
            if e.proposal not in proposals:
                proposals.append(e.proposal)
        if len(proposals) != 2:
            raise FormatError(
                f"image {image_id!r} has {len(proposals)} distinct proposals "
                f"in the log; the two-round protocol needs exactly 2"
            )
        rho_a, rho_b = proposals
        counts_a = [e.annotated for e in group if e.proposal == rho_a]
        counts_b = [e.annotated for e in group if e.proposal == rho_b]
        records.append(
            TwoProposalRecord(
                image_id,
                rho_a,
                rho_b,
                AnnotationSet.tally(counts_a, num_classes),
                AnnotationSet.tally(counts_b, num_classes),
            )
        )
    return records


@dataclass(frozen=True)
class TransitionMatrixFile:
    """A confusion matrix plus the verbatim numbers it was stored with.

    ``raw_rows`` preserves the file's literal values (published tables are
    rounded and may sum to 0.999); ``matrix`` is the validated,
    renormalized form used for computation.
    """

    raw_rows: tuple
    class_names: Optional[tuple] = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.raw_rows)
        object.__setattr__(self, "raw_rows", rows)
        if self.class_names is not None:
            names = tuple(str(n) for n in self.class_names)
            if len(names) != len(rows):
                raise FormatError(
                    f"{len(names)} class names for {len(rows)} matrix rows"
                )
            object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "metadata", dict(self.metadata))
        # validates shape and row sums up front
        self.matrix

    @property
    def matrix(self) -> TransitionMatrix:
        return TransitionMatrix.from_rows(
            np.asarray(self.raw_rows), row_tol=MATRIX_ROW_TOL
        )

    @classmethod
    def from_matrix(
        cls, matrix: TransitionMatrix, class_names=None, metadata=None
    ) -> "TransitionMatrixFile":
        rows = tuple(tuple(float(v) for v in row) for row in matrix.rows)
        return cls(rows, class_names, metadata or {})


def load_transition_matrix(path) -> TransitionMatrixFile:
    p = Path(path)
    data = _read_json(p)
    unknown = set(data) - _MATRIX_KEYS
    if unknown:
        raise FormatError(f"{p}: unknown keys {sorted(unknown)}")
    if "rows" not in data:
        raise FormatError(f"{p}: missing required key 'rows'")
    rows = data["rows"]
    if (
        not isinstance(rows, list)
        or not rows
        or not all(isinstance(r, list) for r in rows)
        or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for r in rows
            for v in r
        )
    ):
        raise FormatError(f"{p}: 'rows' must be a non-empty list of number lists")
    if any(len(r) != len(rows) for r in rows):
        raise FormatError(f"{p}: matrix must be square")
    names = data.get("class_names")
    if names is not None and (
        not isinstance(names, list) or not all(isinstance(n, str) for n in names)
    ):
        raise FormatError(f"{p}: 'class_names' must be a list of strings")
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise FormatError(f"{p}: 'metadata' must be an object")
    try:
        return TransitionMatrixFile(
            tuple(tuple(v for v in r) for r in rows),
            tuple(names) if names is not None else None,
            metadata,
        )
    except ValueError as e:
        raise FormatError(f"{p}: {e}") from e


def save_transition_matrix(tm: TransitionMatrixFile, path) -> None:
    obj = {"rows": [list(row) for row in tm.raw_rows]}
    if tm.class_names is not None:
        obj["class_names"] = list(tm.class_names)
    if tm.metadata:
        obj["metadata"] = dict(tm.metadata)
    Path(path).write_text(_dump_json(obj), encoding="utf-8")


_FIXTURE_PACKAGE = "annobias.data.transitions"


def bundled_transition_names() -> list:
    """Names of the confusion-matrix fixtures shipped with the package."""
    names = []
    for entry in resources.files(_FIXTURE_PACKAGE).iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def bundled_transition_matrix(name: str) -> TransitionMatrixFile:
    """Load a shipped confusion-matrix fixture by name."""
    entry = resources.files(_FIXTURE_PACKAGE) / f"{name}.json"
    if not entry.is_file():
        raise FormatError(
            f"no bundled transition matrix {name!r} "
            f"(available: {', '.join(bundled_transition_names())})"
        )
    with resources.as_file(entry) as p:
        return load_transition_matrix(p)
