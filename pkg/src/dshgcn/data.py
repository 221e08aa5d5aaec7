"""Snapshot datasets: on-disk format, validation, synthetic contagion data, splits.

A dataset file is JSON Lines.  The first line is the manifest::

    {"kind": "manifest", "d_e": 512, "d_a": 49, "d_u": 34, "n_classes": 2,
     "snapshots": 10, "students_per_snapshot": 6, "seed": 0,
     "label_names": ["disengaged", "engaged"]}

followed by one line per snapshot::

    {"kind": "snapshot", "snapshot_id": "s00000",
     "students": [{"index": 0, "label": 1, "emotional": [...],
                   "attentional": [...], "upper_body": [...]}, ...]}

Floats are written with Python's shortest round-trip repr, so a
write/load cycle is bit-exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .encoder import FEATURE_TYPES

DIM_KEYS = {"emotional": "d_e", "attentional": "d_a", "upper_body": "d_u"}
DEFAULT_DIMS = {"emotional": 512, "attentional": 49, "upper_body": 34}
LABEL_NAMES = {2: ["disengaged", "engaged"], 3: ["low", "medium", "high"]}


class DatasetError(ValueError):
    """Dataset file or record fails validation."""


@dataclass
class DatasetManifest:
    d_e: int
    d_a: int
    d_u: int
    n_classes: int
    snapshots: int
    students_per_snapshot: int
    seed: int = 0
    label_names: list = field(default_factory=list)

    @property
    def dims(self) -> dict[str, int]:
        return {t: getattr(self, k) for t, k in DIM_KEYS.items()}

    def validate(self) -> None:
        for key in ("d_e", "d_a", "d_u", "n_classes", "snapshots", "students_per_snapshot"):
            if int(getattr(self, key)) < 1:
                raise DatasetError(f"manifest: {key} must be >= 1")
        if self.n_classes < 2:
            raise DatasetError("manifest: n_classes must be >= 2")
        if self.label_names and len(self.label_names) != self.n_classes:
            raise DatasetError(f"manifest: {len(self.label_names)} label names for {self.n_classes} classes")


@dataclass
class FeatureSnapshot:
    snapshot_id: str
    student_index: np.ndarray      # (N,) ordinals
    labels: np.ndarray             # (N,)
    emotional: np.ndarray          # (N, d_e)
    attentional: np.ndarray        # (N, d_a)
    upper_body: np.ndarray         # (N, d_u)

    @property
    def n_students(self) -> int:
        return len(self.labels)


@dataclass
class Dataset:
    manifest: DatasetManifest
    snapshots: list

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def ids(self) -> list[str]:
        return [s.snapshot_id for s in self.snapshots]

    def subset(self, positions: Sequence[int]) -> "Dataset":
        return Dataset(self.manifest, [self.snapshots[i] for i in positions])

    def labels(self) -> np.ndarray:
        if not self.snapshots:
            return np.zeros(0, dtype=int)
        return np.concatenate([s.labels for s in self.snapshots])

    def batch(self, positions: Optional[Sequence[int]] = None) -> dict:
        """Stack snapshots into the per-student arrays the model consumes."""
        snaps = self.snapshots if positions is None else [self.snapshots[i] for i in positions]
        out = {t: np.concatenate([getattr(s, t) for s in snaps]) for t in FEATURE_TYPES}
        out["student_index"] = np.concatenate([s.student_index for s in snaps])
        out["labels"] = np.concatenate([s.labels for s in snaps])
        out["copies"] = len(snaps)
        return out


# -- validation and I/O ------------------------------------------------------

def validate(dataset: Dataset) -> None:
    m = dataset.manifest
    m.validate()
    if len(dataset.snapshots) != m.snapshots:
        raise DatasetError(f"manifest declares {m.snapshots} snapshots, found {len(dataset.snapshots)}")
    seen = set()
    for snap in dataset.snapshots:
        sid = snap.snapshot_id
        if sid in seen:
            raise DatasetError(f"snapshot {sid}: duplicate snapshot_id")
        seen.add(sid)
        if snap.n_students != m.students_per_snapshot:
            raise DatasetError(f"snapshot {sid}: {snap.n_students} students, expected {m.students_per_snapshot}")
        for t, dim in m.dims.items():
            arr = getattr(snap, t)
            if arr.shape != (m.students_per_snapshot, dim):
                raise DatasetError(f"snapshot {sid}: field {t} has shape {arr.shape}, expected width {dim}")
            if not np.all(np.isfinite(arr)):
                raise DatasetError(f"snapshot {sid}: field {t} has non-finite values")
        bad = np.flatnonzero((snap.labels < 0) | (snap.labels >= m.n_classes))
        if bad.size:
            raise DatasetError(f"snapshot {sid}: field label={int(snap.labels[bad[0]])} "
                               f"of student {int(snap.student_index[bad[0]])} outside [0, {m.n_classes})")
        if len(set(snap.student_index.tolist())) != snap.n_students or snap.student_index.min() < 0:
            raise DatasetError(f"snapshot {sid}: field index must hold distinct non-negative ordinals")


def _snapshot_record(snap: FeatureSnapshot) -> dict:
    students = []
    for k in range(snap.n_students):
        students.append({"index": int(snap.student_index[k]), "label": int(snap.labels[k]),
                         **{t: getattr(snap, t)[k].tolist() for t in FEATURE_TYPES}})
    return {"kind": "snapshot", "snapshot_id": snap.snapshot_id, "students": students}


def write_dataset(dataset: Dataset, path: str) -> None:
    validate(dataset)
    m = dataset.manifest
    header = {"kind": "manifest", "d_e": m.d_e, "d_a": m.d_a, "d_u": m.d_u, "n_classes": m.n_classes,
              "snapshots": m.snapshots, "students_per_snapshot": m.students_per_snapshot,
              "seed": m.seed, "label_names": list(m.label_names)}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for snap in dataset.snapshots:
            fh.write(json.dumps(_snapshot_record(snap)) + "\n")


def _parse_snapshot(rec: dict, m: DatasetManifest) -> FeatureSnapshot:
    sid = str(rec.get("snapshot_id", "?"))
    try:
        students = rec["students"]
        arrays = {}
        for t in FEATURE_TYPES:
            rows = [s[t] for s in students]
            widths = {len(r) for r in rows}
            if widths != {m.dims[t]}:
                raise DatasetError(f"snapshot {sid}: field {t} has width(s) {sorted(widths)}, expected {m.dims[t]}")
            arrays[t] = np.array(rows, dtype=np.float64).reshape(len(students), m.dims[t])
        return FeatureSnapshot(sid, np.array([s["index"] for s in students], dtype=int),
                               np.array([s["label"] for s in students], dtype=int), **arrays)
    except KeyError as exc:
        raise DatasetError(f"snapshot {sid}: missing field {exc.args[0]}") from None


def load_dataset(path: str) -> Dataset:
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    head = json.loads(lines[0])
    if head.get("kind") != "manifest":
        raise DatasetError(f"{path}: first record must be the manifest")
    try:
        manifest = DatasetManifest(**{k: v for k, v in head.items() if k != "kind"})
    except TypeError as exc:
        raise DatasetError(f"{path}: bad manifest ({exc})") from None
    manifest.validate()
    snaps = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        if rec.get("kind") != "snapshot":
            raise DatasetError(f"{path}: unexpected record kind {rec.get('kind')!r}")
        snaps.append(_parse_snapshot(rec, manifest))
    dataset = Dataset(manifest, snaps)
    validate(dataset)
    return dataset


def convert_table(csv_path: str, n_classes: int, dims: Optional[dict] = None,
                  label_names: Optional[list] = None) -> Dataset:
    """Build a dataset from a flat table of pre-extracted per-student vectors.

    Expected columns: ``snapshot_id``, ``student``, ``label`` then feature
    columns prefixed ``e_``, ``a_`` and ``u_`` (in order).  Rows of one
    snapshot need not be contiguous.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        prefixes = {"emotional": "e_", "attentional": "a_", "upper_body": "u_"}
        fcols = {t: [c for c in cols if c.startswith(p)] for t, p in prefixes.items()}
        if dims is not None:
            for t in FEATURE_TYPES:
                if len(fcols[t]) != dims[t]:
                    raise DatasetError(f"{csv_path}: {len(fcols[t])} {t} columns, expected {dims[t]}")
        groups: dict[str, list] = {}
        for row in reader:
            groups.setdefault(row["snapshot_id"], []).append(row)
    snaps = []
    for sid, rows in groups.items():
        rows.sort(key=lambda r: int(r["student"]))
        snaps.append(FeatureSnapshot(
            sid, np.array([int(r["student"]) for r in rows]), np.array([int(r["label"]) for r in rows]),
            **{t: np.array([[float(r[c]) for c in fcols[t]] for r in rows]) for t in FEATURE_TYPES}))
    sizes = {s.n_students for s in snaps}
    if len(sizes) != 1:
        raise DatasetError(f"{csv_path}: snapshots have differing student counts {sorted(sizes)}")
    manifest = DatasetManifest(len(fcols["emotional"]), len(fcols["attentional"]), len(fcols["upper_body"]),
                               n_classes, len(snaps), sizes.pop(), 0,
                               label_names or LABEL_NAMES.get(n_classes, [str(c) for c in range(n_classes)]))
    dataset = Dataset(manifest, snaps)
    validate(dataset)
    return dataset


# -- synthetic contagion classrooms -------------------------------------------

@dataclass
class SyntheticConfig:
    n_students: int = 6
    snapshots: int = 200
    n_classes: int = 2
    rho: float = 0.7
    noise: float = 0.3
    seed: int = 0
    dims: dict = field(default_factory=lambda: dict(DEFAULT_DIMS))
    signal: float = 0.25         # readout gain of the latent engagement z
    deviation: float = 1.0       # readout gain of the individual deviation b - m
    distractors: int = 4         # nuisance directions per feature type
    rho_choices: Optional[list] = None   # per-snapshot rho drawn from this list when set

    def validate(self) -> None:
        if self.n_students < 1 or self.snapshots < 1:
            raise ValueError("n_students and snapshots must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        rhos = self.rho_choices if self.rho_choices is not None else [self.rho]
        if not rhos or any(not 0.0 <= r <= 1.0 for r in rhos):
            raise ValueError("contagion strength rho must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if any(int(d) < 2 for d in self.dims.values()):
            raise ValueError("feature dimensions must be >= 2")


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Classrooms whose engagement mixes an individual level with a shared mood.

    Per snapshot a group mood ``m`` is drawn; student ``i`` has base level
    ``b_i`` and latent engagement ``z_i = (1 - rho) b_i + rho m``.  Labels
    bin ``z`` at the empirical quantiles of the whole dataset.  Each feature
    type reads out ``z_i`` along one direction and ``b_i - m`` along
    another, adds nuisance components and isotropic noise.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, C = config.n_students, config.n_classes
    dims = {t: int(config.dims[t]) for t in FEATURE_TYPES}
    basis = {}
    for t in FEATURE_TYPES:
        basis[t] = (_unit(rng, dims[t]), _unit(rng, dims[t]),
                    np.stack([_unit(rng, dims[t]) for _ in range(config.distractors)], axis=1)
                    if config.distractors else np.zeros((dims[t], 0)))

    S = config.snapshots
    if config.rho_choices is not None:
        rho = rng.choice(np.asarray(config.rho_choices, dtype=float), size=S)
    else:
        rho = np.full(S, float(config.rho))
    mood = rng.normal(size=S)
    base = rng.normal(size=(S, n))
    z = (1.0 - rho)[:, None] * base + (rho * mood)[:, None]
    dev = base - mood[:, None]
    cuts = np.quantile(z.ravel(), np.arange(1, C) / C)
    labels = np.searchsorted(cuts, z, side="right")

    feats = {}
    for t in FEATURE_TYPES:
        u, h, R = basis[t]
        nuisance = rng.normal(size=(S, n, R.shape[1])) @ R.T
        noise = config.noise * rng.normal(size=(S, n, dims[t]))
        feats[t] = (config.signal * z[..., None] * u + config.deviation * dev[..., None] * h
                    + nuisance + noise)

    snaps = [FeatureSnapshot(f"s{k:05d}", np.arange(n), labels[k].astype(int),
                             *(feats[t][k] for t in FEATURE_TYPES)) for k in range(S)]
    manifest = DatasetManifest(dims["emotional"], dims["attentional"], dims["upper_body"], C, S, n,
                               config.seed, LABEL_NAMES.get(C, [str(c) for c in range(C)]))
    return Dataset(manifest, snaps)


def label_agreement(dataset: Dataset) -> float:
    """Mean fraction of students sharing their snapshot's majority label."""
    shares = [np.bincount(s.labels).max() / s.n_students for s in dataset.snapshots]
    return float(np.mean(shares))


# -- class weights and splits -------------------------------------------------

def class_weights(labels: Iterable[int], n_classes: int) -> np.ndarray:
    """Inverse-frequency weights scaled to mean 1."""
    counts = np.bincount(np.asarray(list(labels), dtype=int), minlength=n_classes)[:n_classes]
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DatasetError(f"class {int(missing[0])} absent from training labels")
    inv = 1.0 / counts
    return inv / inv.mean()


def split(n_snapshots: int, train_fraction: float = 0.8, seed: int = 0,
          subsample_fraction: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle snapshot positions and cut into (train, test); subsample the train side only."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if not 0.0 < subsample_fraction <= 1.0:
        raise ValueError(f"subsample_fraction must lie in (0, 1], got {subsample_fraction}")
    order = np.random.default_rng(seed).permutation(n_snapshots)
    n_train = int(round(train_fraction * n_snapshots))
    train, test = order[:n_train], order[n_train:]
    if subsample_fraction < 1.0:
        train = train[:max(1, int(round(subsample_fraction * len(train))))]
    return train, test
