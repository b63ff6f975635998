"""Trajectories, labelled datasets and their on-disk formats.

A dataset is stored column-wise: one ``(N, T+1, d)`` state array, a label
vector and the trajectory ids. ``LabeledSample``/``Trajectory`` views are
produced on demand for code that wants per-sample objects.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, LabelError, SchemaError, ShapeError


class Role(str, enum.Enum):
    TRAIN = "train"
    DEP = "dep"
    CAL = "cal"
    TEST = "test"


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    id: str

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ShapeError(f"states must have shape (T+1, d) with T+1, d >= 1; got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError(f"trajectory {self.id!r} has non-finite states")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "id", str(self.id))

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.states, other.states)

    def __hash__(self):
        return hash((self.id, self.states.tobytes()))


@dataclass(frozen=True)
class LabeledSample:
    trajectory: Trajectory
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise LabelError(f"label must be -1 or +1, got {self.label!r}")


class LabeledDataset:
    """Homogeneous collection of labelled trajectories with a split role."""

    def __init__(self, ids: Sequence[str], states, labels, role: Role | str = Role.TRAIN):
        states = np.array(states, dtype=float)
        labels = np.asarray(labels)
        ids = tuple(str(i) for i in ids)
        if len(ids) == 0:
            raise DataError("dataset must be nonempty")
        if states.ndim != 3 or states.shape[1] < 1 or states.shape[2] < 1:
            raise ShapeError(f"states must have shape (N, T+1, d); got {states.shape}")
        if states.shape[0] != len(ids) or labels.shape != (len(ids),):
            raise ShapeError("ids, states and labels disagree on the number of samples")
        if not np.all(np.isfinite(states)):
            raise DataError("dataset contains non-finite states")
        if not np.all(np.isin(labels, (-1, 1))):
            bad = labels[~np.isin(labels, (-1, 1))][0]
            raise LabelError(f"labels must be -1 or +1, found {bad!r}")
        if len(set(ids)) != len(ids):
            raise DataError("trajectory ids must be unique within a dataset")
        states.setflags(write=False)
        labels = labels.astype(int)
        labels.setflags(write=False)
        self.ids = ids
        self.states = states
        self.labels = labels
        self.role = Role(role)

    @classmethod
    def from_samples(cls, samples: Iterable[LabeledSample], role: Role | str = Role.TRAIN):
        samples = list(samples)
        if not samples:
            raise DataError("dataset must be nonempty")
        shapes = {s.trajectory.states.shape for s in samples}
        if len(shapes) != 1:
            raise ShapeError(f"trajectories must share T and d; found shapes {sorted(shapes)}")
        return cls(
            [s.trajectory.id for s in samples],
            np.stack([s.trajectory.states for s in samples]),
            [s.label for s in samples],
            role,
        )

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def T(self) -> int:
        return self.states.shape[1] - 1

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(Trajectory(self.states[i], self.ids[i]), int(self.labels[i]))
            for i in range(len(self))
        ]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.ids[i])

    def subset(self, index, role: Role | str | None = None) -> "LabeledDataset":
        index = np.asarray(index)
        return LabeledDataset(
            [self.ids[i] for i in index], self.states[index], self.labels[index],
            self.role if role is None else role,
        )

    def with_role(self, role: Role | str) -> "LabeledDataset":
        return LabeledDataset(self.ids, self.states, self.labels, role)

    def positive_fraction(self) -> float:
        return float(np.mean(self.labels == 1))

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.role == other.role
            and self.ids == other.ids
            and self.states.shape == other.states.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self):
        return (f"LabeledDataset(role={self.role.value}, n={len(self)}, T={self.T}, "
                f"d={self.d}, positive={self.positive_fraction():.3f})")


def concat(datasets: Sequence[LabeledDataset], role: Role | str) -> LabeledDataset:
    return LabeledDataset(
        [i for ds in datasets for i in ds.ids],
        np.concatenate([ds.states for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets]),
        role,
    )


# ---------------------------------------------------------------- file formats

def _fmt(v: float) -> str:
    return repr(float(v))


def save_csv(dataset: LabeledDataset, path) -> None:
    """Write one row per (trajectory, timestep): ``traj_id,t,x0..x{d-1},label``."""
    if dataset is None or len(dataset) == 0:
        raise DataError("cannot save an empty dataset")
    path = Path(path)
    header = ["traj_id", "t", *(f"x{j}" for j in range(dataset.d)), "label"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, tid in enumerate(dataset.ids):
            label = str(int(dataset.labels[i]))
            for t, row in enumerate(dataset.states[i]):
                w.writerow([tid, t, *(_fmt(v) for v in row), label])


def _column_map(fieldnames: Sequence[str], schema: Mapping | None) -> tuple[str, str, list[str], str]:
    schema = dict(schema or {})
    tid = schema.get("traj_id", "traj_id")
    tcol = schema.get("t", "t")
    lab = schema.get("label", "label")
    xs = schema.get("x")
    if xs is None:
        xs = []
        while f"x{len(xs)}" in fieldnames:
            xs.append(f"x{len(xs)}")
    missing = [c for c in (tid, tcol, *xs, lab) if c not in fieldnames]
    if not xs:
        missing.append("x0")
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    return tid, tcol, list(xs), lab


def _parse_label(raw, tid) -> int:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise LabelError(f"trajectory {tid!r}: label {raw!r} is not a number") from None
    if v not in (-1.0, 1.0):
        raise LabelError(f"trajectory {tid!r}: label must be -1 or +1, got {raw!r}")
    return int(v)


def _assemble(rows: dict[str, dict[int, list[float]]], labels: dict[str, int],
              role) -> LabeledDataset:
    if not rows:
        raise DataError("file contains no trajectories")
    lengths = {tid: len(r) for tid, r in rows.items()}
    for tid, r in rows.items():
        if sorted(r) != list(range(len(r))):
            raise ShapeError(f"trajectory {tid!r}: timesteps are not contiguous from 0")
    if len(set(lengths.values())) != 1:
        raise ShapeError(f"ragged trajectory lengths: {sorted(set(lengths.values()))}")
    ids = list(rows)
    states = np.array([[rows[tid][t] for t in range(lengths[tid])] for tid in ids], dtype=float)
    return LabeledDataset(ids, states, [labels[tid] for tid in ids], role)


def load_csv(path, schema: Mapping | None = None, role: Role | str = Role.TRAIN) -> LabeledDataset:
    """Read a per-timestep CSV file.

    ``schema`` optionally renames columns: keys ``traj_id``, ``t``, ``label``
    map to column names and ``x`` to a list of state columns.
    """
    rows: dict[str, dict[int, list[float]]] = {}
    labels: dict[str, int] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        tid_c, t_c, x_c, lab_c = _column_map(reader.fieldnames or [], schema)
        for line in reader:
            tid = line[tid_c]
            try:
                t = int(float(line[t_c]))
                x = [float(line[c]) for c in x_c]
            except (TypeError, ValueError) as exc:
                raise DataError(f"line {reader.line_num}: {exc}") from None
            label = _parse_label(line[lab_c], tid)
            if labels.setdefault(tid, label) != label:
                raise LabelError(f"trajectory {tid!r}: label changes within the trajectory")
            traj = rows.setdefault(tid, {})
            if t in traj:
                raise ShapeError(f"trajectory {tid!r}: duplicate timestep {t}")
            traj[t] = x
    return _assemble(rows, labels, role)


def save_jsonl(dataset: LabeledDataset, path) -> None:
    if dataset is None or len(dataset) == 0:
        raise DataError("cannot save an empty dataset")
    with Path(path).open("w") as fh:
        for i, tid in enumerate(dataset.ids):
            rec = {"id": tid, "states": dataset.states[i].tolist(), "label": int(dataset.labels[i])}
            fh.write(json.dumps(rec) + "\n")


def load_jsonl(path, role: Role | str = Role.TRAIN) -> LabeledDataset:
    ids, states, labels = [], [], []
    with Path(path).open() as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tid, st, lab = str(rec["id"]), rec["states"], rec["label"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise SchemaError(f"line {n}: {exc}") from None
            ids.append(tid)
            states.append(np.asarray(st, dtype=float))
            labels.append(_parse_label(lab, tid))
    if not ids:
        raise DataError("file contains no trajectories")
    shapes = {s.shape for s in states}
    if len(shapes) != 1:
        raise ShapeError(f"ragged trajectories: shapes {sorted(shapes)}")
    return LabeledDataset(ids, np.stack(states), labels, role)


def load_dataset(path, role: Role | str = Role.TRAIN, schema: Mapping | None = None) -> LabeledDataset:
    """Dispatch on extension: ``.jsonl``/``.json`` -> JSON-lines, else CSV."""
    if not Path(path).is_file():
        raise DataError(f"data file not found: {path}")
    if Path(path).suffix in (".jsonl", ".json"):
        return load_jsonl(path, role)
    return load_csv(path, schema, role)
