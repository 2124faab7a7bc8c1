"""Recording ingestion, epoch extraction, flattening, fusion and splitting.

Nothing in this module changes a sample value: no filtering, detrending,
normalization or resampling. Features handed to the classifier are raw
samples, reordered.

On-disk formats
---------------
Data file
    UTF-8 CSV. The first line is the header of channel names; each following
    line is one sample with one decimal float per channel. There is no time
    column; time is implied by ``sampling_rate_hz``.
Sidecar
    JSON object with ``format_version`` (1), ``modality`` (``FNIRS``,
    ``EEG`` or ``MOCAP``), ``sampling_rate_hz``, ``subject_id``,
    ``schedule`` ({``class_labels``, ``activity_seconds``, ``rest_seconds``,
    ``repetitions``, ``initial_offset_seconds``}) and ``label_map`` (list of
    class names, index = class id).
Epoch CSV (export only)
    Header ``f0,...,f{D-1},label``; one epoch per row.

Block order: every class id in ``class_labels`` is performed ``repetitions``
times in a row before moving to the next class id. Block ``k`` starts at
sample ``floor((initial_offset_seconds + k * (activity + rest)) * fs)`` and
its window holds ``floor(activity_seconds * fs)`` samples.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ColumnCountError,
    EmptyRecordingError,
    EpochBoundsError,
    FusionError,
    NonNumericCellError,
    ScheduleMismatchError,
    ShapeError,
    SidecarError,
    SplitError,
    UnknownModalityError,
)
from .tensor import SeededRng

__all__ = [
    "DEFAULT_CLASS_NAMES",
    "MODALITIES",
    "Epoch",
    "EpochProvenance",
    "EpochSet",
    "LabelMap",
    "Recording",
    "SessionSchedule",
    "concat_epoch_sets",
    "extract_epochs",
    "flatten_epochs",
    "fuse_modalities",
    "load_recording",
    "read_epochs_csv",
    "split_stratified",
    "write_epochs_csv",
    "write_recording",
]

SIDECAR_VERSION = 1
MODALITIES = ("FNIRS", "EEG", "MOCAP")
DEFAULT_CLASS_NAMES = ("right_arm", "left_arm", "right_leg", "left_leg", "both_arms")


@dataclass(frozen=True)
class LabelMap:
    names: tuple = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"class names must be unique: {self.names}")
        if not self.names:
            raise ValueError("label map is empty")

    def __len__(self):
        return len(self.names)

    def id_of(self, name):
        return self.names.index(name)

    def name_of(self, class_id):
        return self.names[class_id]


@dataclass(frozen=True)
class SessionSchedule:
    class_labels: tuple = (0, 1, 2, 3, 4)
    activity_seconds: float = 10.0
    rest_seconds: float = 20.0
    repetitions: int = 5
    initial_offset_seconds: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "class_labels", tuple(int(c) for c in self.class_labels))
        if not self.class_labels:
            raise ValueError("schedule has no class labels")
        if self.activity_seconds <= 0 or self.rest_seconds < 0:
            raise ValueError("activity_seconds must be > 0 and rest_seconds >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")
        if self.initial_offset_seconds < 0:
            raise ValueError("initial_offset_seconds must be >= 0")

    @property
    def block_seconds(self):
        return self.activity_seconds + self.rest_seconds

    def blocks(self):
        """Class id of every activity block in performance order."""
        return [c for c in self.class_labels for _ in range(self.repetitions)]

    @property
    def total_seconds(self):
        return self.initial_offset_seconds + len(self.blocks()) * self.block_seconds

    def block_start(self, k, fs):
        return math.floor((self.initial_offset_seconds + k * self.block_seconds) * fs)

    def window_length(self, fs):
        return math.floor(self.activity_seconds * fs)

    def expected_samples(self, fs):
        return math.floor(self.total_seconds * fs)

    def to_dict(self):
        return {
            "class_labels": list(self.class_labels),
            "activity_seconds": self.activity_seconds,
            "rest_seconds": self.rest_seconds,
            "repetitions": self.repetitions,
            "initial_offset_seconds": self.initial_offset_seconds,
        }


@dataclass
class Recording:
    modality: str
    sampling_rate_hz: float
    channel_names: list
    samples: np.ndarray
    subject_id: str
    schedule: SessionSchedule
    label_map: LabelMap = field(default_factory=LabelMap)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise UnknownModalityError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling_rate_hz must be > 0, got {self.sampling_rate_hz}")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ShapeError(f"samples must be 2-D, got shape {self.samples.shape}")
        if len(self.channel_names) != self.samples.shape[1]:
            raise ColumnCountError(
                f"{len(self.channel_names)} channel names for {self.samples.shape[1]} columns"
            )

    @property
    def n_samples(self):
        return self.samples.shape[0]


def _sidecar_dict(rec):
    return {
        "format_version": SIDECAR_VERSION,
        "modality": rec.modality,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "subject_id": rec.subject_id,
        "schedule": rec.schedule.to_dict(),
        "label_map": list(rec.label_map.names),
    }


def write_recording(rec, data_path, meta_path):
    """Write ``rec`` as CSV plus JSON sidecar. Floats use ``repr`` (lossless)."""
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(rec.channel_names)
        for row in rec.samples:
            writer.writerow([repr(float(v)) for v in row])
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(_sidecar_dict(rec), fh, indent=2)
        fh.write("\n")


def _read_sidecar(meta_path):
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SidecarError(f"{meta_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(meta, dict):
        raise SidecarError(f"{meta_path}: top level must be an object")
    required = ("format_version", "modality", "sampling_rate_hz", "subject_id", "schedule", "label_map")
    for key in required:
        if key not in meta:
            raise SidecarError(f"{meta_path}: missing field '{key}'")
    extra = sorted(set(meta) - set(required))
    if extra:
        raise SidecarError(f"{meta_path}: unknown field '{extra[0]}'")
    if meta["format_version"] != SIDECAR_VERSION:
        raise SidecarError(f"{meta_path}: unsupported format_version {meta['format_version']!r}")
    if meta["modality"] not in MODALITIES:
        raise UnknownModalityError(
            f"{meta_path}: unknown modality {meta['modality']!r}; expected one of {MODALITIES}"
        )
    sched = meta["schedule"]
    keys = {"class_labels", "activity_seconds", "rest_seconds", "repetitions", "initial_offset_seconds"}
    if not isinstance(sched, dict) or set(sched) != keys:
        raise SidecarError(f"{meta_path}: schedule must have exactly the fields {sorted(keys)}")
    try:
        schedule = SessionSchedule(**sched)
        label_map = LabelMap(tuple(meta["label_map"]))
        fs = float(meta["sampling_rate_hz"])
    except (TypeError, ValueError) as exc:
        raise SidecarError(f"{meta_path}: {exc}") from exc
    if not fs > 0:
        raise SidecarError(f"{meta_path}: sampling_rate_hz must be > 0")
    bad = [c for c in schedule.class_labels if not 0 <= c < len(label_map)]
    if bad:
        raise SidecarError(f"{meta_path}: schedule class id {bad[0]} not in label_map")
    return meta, schedule, label_map, fs


def load_recording(data_path, meta_path):
    """Load and validate one recording.

    Raises a distinct ``RecordingError`` subclass for each failure kind, with
    the file and row/column position where one applies.
    """
    meta, schedule, label_map, fs = _read_sidecar(meta_path)
    with open(data_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyRecordingError(f"{data_path}: no samples (file is empty)")
        n_cols = len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                kind = "missing" if len(row) < n_cols else "extra"
                raise ColumnCountError(
                    f"{data_path}: row {line_no} has {len(row)} cells, header has {n_cols} ({kind} columns)"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                col = next(j for j, cell in enumerate(row) if not _is_float(cell))
                raise NonNumericCellError(
                    f"{data_path}: row {line_no}, column {col + 1} ({header[col]!r}): "
                    f"non-numeric value {row[col]!r}"
                ) from None
            rows.append(values)
    if not rows:
        raise EmptyRecordingError(f"{data_path}: no samples")
    samples = np.array(rows, dtype=np.float64)
    bad = np.argwhere(~np.isfinite(samples))
    if bad.size:
        r, c = bad[0]
        raise NonNumericCellError(
            f"{data_path}: row {r + 2}, column {c + 1} ({header[c]!r}): non-finite value"
        )
    expected = schedule.expected_samples(fs)
    tolerance = math.floor(schedule.block_seconds * fs)
    if abs(samples.shape[0] - expected) > tolerance:
        raise ScheduleMismatchError(
            f"{data_path}: {samples.shape[0]} samples but the schedule implies {expected} "
            f"({schedule.total_seconds:g} s at {fs:g} Hz, tolerance {tolerance})"
        )
    return Recording(
        modality=meta["modality"],
        sampling_rate_hz=fs,
        channel_names=list(header),
        samples=samples,
        subject_id=str(meta["subject_id"]),
        schedule=schedule,
        label_map=label_map,
    )


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class Epoch:
    """One activity window cut from a recording."""

    window: np.ndarray
    label: int
    trial: int
    start: int
    subject_id: str
    modality: str


def extract_epochs(rec, labels=None):
    """Cut one window per activity block; rest periods are dropped."""
    labels = rec.label_map if labels is None else labels
    fs = rec.sampling_rate_hz
    sched = rec.schedule
    length = sched.window_length(fs)
    if length < 1:
        raise ShapeError(f"activity of {sched.activity_seconds} s at {fs} Hz is shorter than one sample")
    epochs = []
    for k, class_id in enumerate(sched.blocks()):
        if not 0 <= class_id < len(labels):
            raise ValueError(f"block {k}: class id {class_id} not in label map")
        start = sched.block_start(k, fs)
        stop = start + length
        if stop > rec.n_samples:
            raise EpochBoundsError(
                f"block {k} (class {class_id}) needs samples [{start}, {stop}) "
                f"but the recording has {rec.n_samples}"
            )
        epochs.append(Epoch(rec.samples[start:stop], class_id, k, start, rec.subject_id, rec.modality))
    return epochs


@dataclass(frozen=True)
class EpochProvenance:
    subject_id: str
    trial: int
    modalities: tuple
    starts: tuple
    window_shapes: tuple


@dataclass
class EpochSet:
    features: np.ndarray
    labels: np.ndarray
    provenance: list
    class_names: tuple = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(f"{self.features.shape[0]} feature rows but labels shape {self.labels.shape}")
        if len(self.provenance) != len(self.labels):
            raise ShapeError("provenance length does not match epoch count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        return EpochSet(
            self.features[index],
            self.labels[index],
            [self.provenance[i] for i in index],
            self.class_names,
        )

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


def flatten_epochs(epochs, class_names=DEFAULT_CLASS_NAMES):
    """Flatten each window time-major (sample 0 all channels, sample 1 ...)."""
    if not epochs:
        raise ShapeError("no epochs to flatten")
    shape = epochs[0].window.shape
    for i, ep in enumerate(epochs):
        if ep.window.shape != shape:
            raise ShapeError(f"epoch {i} has window shape {ep.window.shape}, expected {shape}")
    features = np.stack([ep.window.reshape(-1) for ep in epochs])
    provenance = [
        EpochProvenance(ep.subject_id, ep.trial, (ep.modality,), (ep.start,), (shape,))
        for ep in epochs
    ]
    return EpochSet(features, [ep.label for ep in epochs], provenance, tuple(class_names))


def concat_epoch_sets(sets):
    """Stack epoch sets row-wise (e.g. pooling subjects)."""
    if not sets:
        raise ShapeError("no epoch sets to concatenate")
    dims = {s.n_features for s in sets}
    if len(dims) != 1:
        raise ShapeError(f"cannot concatenate epoch sets with feature dims {sorted(dims)}")
    names = {s.class_names for s in sets}
    if len(names) != 1:
        raise ValueError("epoch sets use different label maps")
    return EpochSet(
        np.concatenate([s.features for s in sets]),
        np.concatenate([s.labels for s in sets]),
        [p for s in sets for p in s.provenance],
        sets[0].class_names,
    )


def _modality_key(epoch_set):
    mods = epoch_set.provenance[0].modalities if len(epoch_set) else ()
    return tuple(MODALITIES.index(m) for m in mods)


def fuse_modalities(per_modality):
    """Concatenate per-modality feature rows in FNIRS, EEG, MOCAP order.

    Epochs are aligned by position; subject, trial index and label must
    agree row by row.
    """
    sets = list(per_modality)
    if not sets:
        raise FusionError("no epoch sets to fuse")
    if len(sets) == 1:
        return sets[0]
    sets.sort(key=_modality_key)
    ref = sets[0]
    for s in sets[1:]:
        if len(s) != len(ref):
            raise FusionError(f"epoch count mismatch across modalities: {len(ref)} vs {len(s)}")
        if s.class_names != ref.class_names:
            raise FusionError("modalities use different label maps")
        diff = np.flatnonzero(s.labels != ref.labels)
        if diff.size:
            i = int(diff[0])
            raise FusionError(f"label mismatch at epoch {i}: {ref.labels[i]} vs {s.labels[i]}")
        for i, (a, b) in enumerate(zip(ref.provenance, s.provenance)):
            if (a.subject_id, a.trial) != (b.subject_id, b.trial):
                raise FusionError(
                    f"trial mismatch at epoch {i}: {a.subject_id}/{a.trial} vs {b.subject_id}/{b.trial}"
                )
    provenance = []
    for i in range(len(ref)):
        parts = [s.provenance[i] for s in sets]
        provenance.append(
            EpochProvenance(
                parts[0].subject_id,
                parts[0].trial,
                tuple(m for p in parts for m in p.modalities),
                tuple(x for p in parts for x in p.starts),
                tuple(x for p in parts for x in p.window_shapes),
            )
        )
    features = np.concatenate([s.features for s in sets], axis=1)
    return EpochSet(features, ref.labels.copy(), provenance, ref.class_names)


def _largest_remainder(n, ratios):
    quotas = [r * n for r in ratios]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    # every partition gets at least one epoch, taken from the largest
    for i in range(len(counts)):
        while counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_stratified(epoch_set, ratios=(0.7, 0.15, 0.15), seed=0):
    """Per-class seeded shuffle, then contiguous train/val/test assignment.

    Counts per class use largest-remainder rounding, adjusted so that each
    partition holds at least one epoch of every class present.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(not r > 0 for r in ratios):
        raise SplitError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got {sum(ratios)}")
    rng = SeededRng(seed)
    parts = [[], [], []]
    for c in range(epoch_set.n_classes):
        idx = np.flatnonzero(epoch_set.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 3:
            raise SplitError(f"class {c} has {idx.size} epochs; at least 3 are needed")
        idx = idx[rng.permutation(idx.size)]
        counts = _largest_remainder(idx.size, ratios)
        bounds = np.cumsum([0, *counts])
        for p in range(3):
            parts[p].extend(idx[bounds[p]: bounds[p + 1]].tolist())
    return tuple(epoch_set.subset(sorted(p)) for p in parts)


def write_epochs_csv(epoch_set, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(epoch_set.n_features)] + ["label"])
        for row, label in zip(epoch_set.features, epoch_set.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def read_epochs_csv(path):
    """Read an epoch CSV; returns ``(features, labels_or_None)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise EmptyRecordingError(f"{path}: empty epoch file")
        has_label = header[-1] == "label"
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ColumnCountError(f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise NonNumericCellError(f"{path}: row {line_no} has a non-numeric cell") from None
    if not rows:
        raise EmptyRecordingError(f"{path}: no epochs")
    data = np.array(rows, dtype=np.float64)
    if has_label:
        return data[:, :-1], data[:, -1].astype(np.int64)
    return data, None


def recording_paths(directory, subject_id, modality):
    stem = os.path.join(directory, f"{subject_id}_{modality.lower()}")
    return stem + ".csv", stem + ".json"
