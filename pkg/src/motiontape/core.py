"""Core data model: movement labels, strain and kinematics samples, datasets,
validation, and the columnar dataset file format.

All container types are immutable after construction (arrays are copied and
write-locked), so they can be shared freely across workers.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError

N_CHANNELS = 6
TARGET_T = 300        # processed sample length (~6 s at 20 ms steps)
NOMINAL_DT = 0.020    # seconds per step
SCHEMA_VERSION = "1"

MT_COLUMNS = tuple(f"mt{i}" for i in range(1, N_CHANNELS + 1))
KIN_COLUMNS = tuple(f"kin{i}" for i in range(1, N_CHANNELS + 1))

#: Roles of the six kinematics channels: Euler angles between the lower
#: lumbar segment and the pelvis (x, y, z) followed by the upper-to-lower
#: lumbar angles (x, y, z).
KIN_CHANNEL_ROLES = (
    "lower_pelvis_x", "lower_pelvis_y", "lower_pelvis_z",
    "upper_lower_x", "upper_lower_y", "upper_lower_z",
)


class MovementLabel(IntEnum):
    """The six low-back movements, with a stable 0-5 integer encoding."""

    EXTENSION = 0
    FLEXION = 1
    LATERAL_BEND_LEFT = 2
    LATERAL_BEND_RIGHT = 3
    ROTATION_LEFT = 4
    ROTATION_RIGHT = 5

    @classmethod
    def from_name(cls, name: str) -> "MovementLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DataError(f"unknown movement label: {name!r}") from None


def _frozen_array(values, n_rows: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D channels-by-time array, got ndim={arr.ndim}")
    if n_rows is not None and arr.shape[0] != n_rows:
        # Keep construction permissive for other row counts so that
        # validate_dataset can report the violation instead of us throwing.
        pass
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MTSample:
    """One recorded (or generated) movement repetition.

    ``values`` holds the six normalized-resistance channels as a
    ``(6, T)`` float64 array.  ``provenance`` is ``"real"`` for measured
    data (including simulator ground truth, which stands in for it) and
    ``"synthetic"`` for generator output.
    """

    subject_id: str
    repetition: int
    label: MovementLabel
    values: np.ndarray
    dt: float = NOMINAL_DT
    provenance: str = "real"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "label", MovementLabel(self.label))

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def key(self) -> tuple:
        """Identity triple used for split bookkeeping and leakage checks."""
        return (self.subject_id, int(self.label), self.repetition)


@dataclass(frozen=True)
class KinematicsSample:
    """Six lumbar Euler-angle channels paired with one MTSample.

    Channel order follows :data:`KIN_CHANNEL_ROLES`.  ``provenance`` is
    ``"measured"`` for motion-capture (or simulator ground-truth) angles and
    ``"generated"`` for model-predicted ones.
    """

    values: np.ndarray
    provenance: str = "measured"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of samples with optional paired kinematics.

    ``kinematics``, when present, is aligned index-by-index with
    ``samples`` (entries may be None only for synthetic samples).
    ``metadata`` records at least the generating seed and schema version;
    ``metadata["complete"] = True`` marks a full corpus, which is when the
    per-label balance invariant applies.
    """

    samples: tuple
    kinematics: Optional[tuple] = None
    metadata: dict = field(default_factory=dict)
    processed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.kinematics is not None:
            kin = tuple(self.kinematics)
            if len(kin) != len(self.samples):
                raise DataError(
                    f"kinematics length {len(kin)} does not match "
                    f"{len(self.samples)} samples"
                )
            object.__setattr__(self, "kinematics", kin)

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def subjects(self) -> list:
        """Distinct subject ids in first-appearance order."""
        seen = {}
        for s in self.samples:
            seen.setdefault(s.subject_id, None)
        return list(seen)

    def label_counts(self) -> dict:
        counts = {label: 0 for label in MovementLabel}
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def values_array(self) -> np.ndarray:
        """Stack all samples into an (n, 6, T) array (requires equal T)."""
        return np.stack([s.values for s in self.samples])

    def kinematics_array(self) -> np.ndarray:
        if self.kinematics is None or any(k is None for k in self.kinematics):
            raise DataError("dataset has no complete paired kinematics")
        return np.stack([k.values for k in self.kinematics])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = [int(i) for i in indices]
        samples = tuple(self.samples[i] for i in indices)
        kin = None
        if self.kinematics is not None:
            kin = tuple(self.kinematics[i] for i in indices)
        meta = {k: v for k, v in self.metadata.items() if k != "complete"}
        return Dataset(samples, kin, meta, self.processed)

    def replace(self, **kwargs) -> "Dataset":
        fields = {
            "samples": self.samples,
            "kinematics": self.kinematics,
            "metadata": self.metadata,
            "processed": self.processed,
        }
        fields.update(kwargs)
        return Dataset(**fields)


@dataclass(frozen=True)
class Violation:
    """One failed validation rule; ``index`` is -1 for dataset-level rules."""

    index: int
    rule: str
    detail: str


def validate_dataset(d: Dataset) -> list:
    """Check every type invariant and return the list of violations.

    Validation never raises: a structurally odd dataset yields a non-empty
    report instead.  An empty report means every invariant holds.
    """
    report: list = []

    processed_lengths = set()
    for i, s in enumerate(d.samples):
        if s.values.shape[0] != N_CHANNELS:
            report.append(Violation(i, "channel_count",
                                    f"expected {N_CHANNELS} channels, got {s.values.shape[0]}"))
        if not np.all(np.isfinite(s.values)):
            report.append(Violation(i, "nonfinite", "sample contains non-finite values"))
        if s.repetition < 1:
            report.append(Violation(i, "repetition", f"repetition {s.repetition} < 1"))
        if d.processed:
            processed_lengths.add(s.n_steps)
            if s.values.size and (s.values.min() < -1.0 or s.values.max() > 1.0):
                report.append(Violation(i, "value_range",
                                        f"processed values outside [-1, 1]: "
                                        f"[{s.values.min():.6g}, {s.values.max():.6g}]"))

    if d.processed and len(processed_lengths) > 1:
        report.append(Violation(-1, "length_mismatch",
                                f"processed sample lengths differ: {sorted(processed_lengths)}"))

    if d.kinematics is not None:
        for i, (s, k) in enumerate(zip(d.samples, d.kinematics)):
            if k is None:
                if s.provenance == "real":
                    report.append(Violation(i, "kin_missing",
                                            "real sample lacks paired kinematics"))
                continue
            if k.values.shape[0] != N_CHANNELS:
                report.append(Violation(i, "kin_channel_count",
                                        f"expected {N_CHANNELS} kinematics channels, "
                                        f"got {k.values.shape[0]}"))
            if k.n_steps != s.n_steps:
                report.append(Violation(i, "kin_length",
                                        f"kinematics length {k.n_steps} != sample length {s.n_steps}"))
            if d.processed and k.values.size and (k.values.min() < -1.0 or k.values.max() > 1.0):
                report.append(Violation(i, "kin_value_range",
                                        "processed kinematics outside [-1, 1]"))

    keys = [s.key for s in d.samples]
    if len(set(keys)) != len(keys):
        dupes = sorted({k for k in keys if keys.count(k) > 1})
        report.append(Violation(-1, "duplicate_key", f"duplicate sample keys: {dupes[:3]}"))

    if d.metadata.get("complete"):
        counts = d.label_counts()
        if len(set(counts.values())) > 1:
            report.append(Violation(-1, "unbalanced",
                                    "complete dataset has unequal per-label counts: "
                                    + ", ".join(f"{l.name}={c}" for l, c in counts.items())))

    return report


def dataset_fingerprint(d: Dataset) -> str:
    """Short content hash over sample identities and values."""
    h = hashlib.sha256()
    for s in d.samples:
        h.update(repr(s.key).encode())
        h.update(np.ascontiguousarray(s.values).tobytes())
    if d.kinematics is not None:
        for k in d.kinematics:
            if k is not None:
                h.update(np.ascontiguousarray(k.values).tobytes())
    return h.hexdigest()[:16]


# ------------------------------------------------------------------ #
#  Columnar dataset file format                                       #
# ------------------------------------------------------------------ #
# One CSV per dataset: header row, then one row per time step with
# columns subject_id,movement,repetition,t_index,mt1..mt6[,kin1..kin6].
# Rows are ordered by (subject, movement code, repetition, t_index) so
# the files are reproducible byte for byte.  Floats are written with
# repr(), which round-trips float64 exactly.

def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(d: Dataset, path) -> None:
    path = Path(path)
    include_kin = d.kinematics is not None
    if include_kin and any(k is None for k in d.kinematics):
        raise DataError("cannot write a dataset with partially missing kinematics")

    order = sorted(range(len(d.samples)),
                   key=lambda i: (d.samples[i].subject_id,
                                  int(d.samples[i].label),
                                  d.samples[i].repetition))
    header = ["subject_id", "movement", "repetition", "t_index", *MT_COLUMNS]
    if include_kin:
        header += list(KIN_COLUMNS)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in order:
            s = d.samples[i]
            kin = d.kinematics[i] if include_kin else None
            for t in range(s.n_steps):
                row = [s.subject_id, s.label.name.lower(), str(s.repetition), str(t)]
                row += [_fmt(v) for v in s.values[:, t]]
                if include_kin:
                    row += [_fmt(v) for v in kin.values[:, t]]
                writer.writerow(row)


def read_dataset(path, dt: float = NOMINAL_DT, processed: bool = False,
                 provenance: str = "real", metadata: dict | None = None) -> Dataset:
    """Read the columnar format back into a Dataset.

    Provenance and processing status are not stored in the file, so the
    caller states them (the CLI knows which stage wrote which file).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty dataset file") from None
        base = ["subject_id", "movement", "repetition", "t_index", *MT_COLUMNS]
        if header[:len(base)] != base:
            raise DataError(f"{path}: unexpected header {header[:4]}...")
        has_kin = len(header) == len(base) + N_CHANNELS
        if not has_kin and len(header) != len(base):
            raise DataError(f"{path}: unexpected column count {len(header)}")

        groups: dict = {}
        order: list = []
        for row in reader:
            key = (row[0], MovementLabel.from_name(row[1]), int(row[2]))
            if key not in groups:
                groups[key] = ([], [])
                order.append(key)
            mt_row = [float(v) for v in row[4:4 + N_CHANNELS]]
            groups[key][0].append(mt_row)
            if has_kin:
                groups[key][1].append([float(v) for v in row[4 + N_CHANNELS:]])

    samples = []
    kins = [] if has_kin else None
    for subject_id, label, repetition in order:
        mt_rows, kin_rows = groups[(subject_id, label, repetition)]
        samples.append(MTSample(subject_id, repetition, label,
                                np.array(mt_rows).T, dt=dt, provenance=provenance))
        if has_kin:
            kins.append(KinematicsSample(np.array(kin_rows).T))

    meta = dict(metadata or {})
    meta.setdefault("schema_version", SCHEMA_VERSION)
    return Dataset(tuple(samples), tuple(kins) if has_kin else None, meta, processed)
