"""Sparse annotation tensor, expertise sets, gold standard, and their file formats.

The tensor holds binary reports indexed by (recording, annotator, species);
absent triples are the unobserved cells (never a sentinel label). Entries are
kept in a canonical sorted order plus two adjacency views -- grouped by
(recording, species) cell and grouped by annotator -- because the samplers
sweep both directions on every iteration.

File formats (UTF-8, comma-delimited, one header line):

    annotations  recording,annotator,species,label      label in {0,1}
    expertise    annotator,species
    gold         recording,species,label
    id map       kind,external_id,index                 kind in {recording,annotator,species}
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

_ANNOTATION_HEADER = ["recording", "annotator", "species", "label"]
_EXPERTISE_HEADER = ["annotator", "species"]
_GOLD_HEADER = ["recording", "species", "label"]
_IDMAP_HEADER = ["kind", "external_id", "index"]


@dataclass(frozen=True)
class AnnotationTensor:
    """Immutable sparse set of (recording, annotator, species) -> {0,1} reports."""

    n_recordings: int
    n_annotators: int
    n_species: int
    recordings: np.ndarray  # int32, sorted by (recording, species, annotator)
    annotators: np.ndarray
    species: np.ndarray
    labels: np.ndarray  # int8

    # adjacency views, computed once at construction
    cell_codes: np.ndarray = field(repr=False, default=None)  # recording * n_species + species
    ann_order: np.ndarray = field(repr=False, default=None)  # entry permutation grouping by annotator
    ann_ptr: np.ndarray = field(repr=False, default=None)  # CSR offsets into ann_order, len n_annotators+1

    @property
    def n_entries(self) -> int:
        return int(self.labels.size)

    @property
    def n_cells(self) -> int:
        return self.n_recordings * self.n_species

    def missing_rate(self) -> float:
        total = self.n_recordings * self.n_annotators * self.n_species
        if total == 0:
            return 1.0
        return 1.0 - self.n_entries / total

    def entry_set(self) -> set:
        return set(
            zip(
                self.recordings.tolist(),
                self.annotators.tolist(),
                self.species.tolist(),
                self.labels.tolist(),
            )
        )

    def votes_for_cell(self, recording: int, species: int):
        """(annotator ids, labels) of everyone who observed this cell."""
        code = recording * self.n_species + species
        lo = np.searchsorted(self.cell_codes, code, side="left")
        hi = np.searchsorted(self.cell_codes, code, side="right")
        return self.annotators[lo:hi], self.labels[lo:hi]

    def entries_for_annotator(self, annotator: int):
        """Indices (into the entry arrays) of one annotator's reports."""
        return self.ann_order[self.ann_ptr[annotator] : self.ann_ptr[annotator + 1]]


def make_tensor(rows, dims=None) -> AnnotationTensor:
    """Build a validated tensor from (recording, annotator, species, label) rows.

    dims, when given, is (n_recordings, n_annotators, n_species) and every
    index must lie inside it; otherwise dimensions are inferred as max+1.
    Rejects duplicate triples and labels outside {0, 1}; never repairs.
    """
    rows = list(rows)
    if rows:
        arr = np.asarray(rows, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise DataError("annotation rows must be (recording, annotator, species, label)")
        rec, ann, spc, lab = arr.T
    else:
        rec = ann = spc = lab = np.empty(0, dtype=np.int64)

    bad = (lab != 0) & (lab != 1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"label must be 0 or 1, got {lab[i]} at row {i}")
    if rows and (rec.min() < 0 or ann.min() < 0 or spc.min() < 0):
        raise DataError("negative index in annotation rows")

    if dims is None:
        n1 = int(rec.max()) + 1 if rows else 0
        n2 = int(ann.max()) + 1 if rows else 0
        n3 = int(spc.max()) + 1 if rows else 0
    else:
        n1, n2, n3 = (int(d) for d in dims)
        if rows:
            for name, idx, n in (("recording", rec, n1), ("annotator", ann, n2), ("species", spc, n3)):
                if idx.max() >= n:
                    raise DataError(f"{name} index {int(idx.max())} outside declared range [0, {n})")

    order = np.lexsort((ann, spc, rec))
    rec, ann, spc, lab = rec[order], ann[order], spc[order], lab[order]

    if rows:
        triple = (rec * n2 + ann) * n3 + spc
        dup = np.flatnonzero(np.diff(triple) == 0)
        if dup.size:
            i = int(dup[0])
            raise DataError(
                f"duplicate annotation triple (recording={int(rec[i])}, "
                f"annotator={int(ann[i])}, species={int(spc[i])})"
            )

    cell_codes = rec * n3 + spc
    ann_order = np.argsort(ann, kind="stable")
    counts = np.bincount(ann, minlength=n2) if rows else np.zeros(n2, dtype=np.int64)
    ann_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    t = AnnotationTensor(
        n_recordings=n1,
        n_annotators=n2,
        n_species=n3,
        recordings=rec.astype(np.int32),
        annotators=ann.astype(np.int32),
        species=spc.astype(np.int32),
        labels=lab.astype(np.int8),
        cell_codes=cell_codes.astype(np.int64),
        ann_order=ann_order.astype(np.int64),
        ann_ptr=ann_ptr,
    )
    for a in (t.recordings, t.annotators, t.species, t.labels, t.cell_codes, t.ann_order, t.ann_ptr):
        a.flags.writeable = False
    return t


def _open_for_read(source):
    if hasattr(source, "read"):
        return source, False
    try:
        return open(source, "r", encoding="utf-8", newline=""), True
    except OSError as exc:
        raise DataError(f"cannot read {source}: {exc}") from exc


def _read_table(source, header):
    stream, needs_close = _open_for_read(source)
    try:
        reader = csv.reader(stream)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"empty file, expected header {','.join(header)}")
        if [h.strip() for h in first] != header:
            raise DataError(f"expected header {','.join(header)!r}, got {','.join(first)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
        return rows
    finally:
        if needs_close:
            stream.close()


def _to_int(value, what, lineno):
    try:
        return int(value)
    except ValueError:
        raise DataError(f"line {lineno}: {what} is not an integer: {value!r}") from None


def load_annotations(source, dims=None) -> AnnotationTensor:
    """Read an annotation file (path or text stream) into a validated tensor."""
    rows = _read_table(source, _ANNOTATION_HEADER)
    parsed = [
        (
            _to_int(r[0], "recording", i + 2),
            _to_int(r[1], "annotator", i + 2),
            _to_int(r[2], "species", i + 2),
            _to_int(r[3], "label", i + 2),
        )
        for i, r in enumerate(rows)
    ]
    return make_tensor(parsed, dims=dims)


def write_annotations(tensor: AnnotationTensor, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_ANNOTATION_HEADER)
        for r, a, s, l in zip(tensor.recordings, tensor.annotators, tensor.species, tensor.labels):
            w.writerow([int(r), int(a), int(s), int(l)])


@dataclass(frozen=True)
class ExpertiseSets:
    """Per-annotator species subsets l_j, stored as a boolean (N2, N3) mask."""

    mask: np.ndarray

    @property
    def n_annotators(self) -> int:
        return self.mask.shape[0]

    @property
    def n_species(self) -> int:
        return self.mask.shape[1]

    def species_for(self, annotator: int) -> set:
        return set(np.flatnonzero(self.mask[annotator]).tolist())

    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @staticmethod
    def full(n_annotators: int, n_species: int) -> "ExpertiseSets":
        m = np.ones((n_annotators, n_species), dtype=bool)
        m.flags.writeable = False
        return ExpertiseSets(m)


def _validate_expertise(sets: ExpertiseSets, tensor: AnnotationTensor) -> None:
    ok = sets.mask[tensor.annotators, tensor.species]
    if not np.all(ok):
        i = int(np.flatnonzero(~ok)[0])
        raise DataError(
            f"annotator {int(tensor.annotators[i])} annotated species "
            f"{int(tensor.species[i])} outside their declared expertise set"
        )


def load_expertise(source, tensor: AnnotationTensor) -> ExpertiseSets:
    """Read an expertise file; with source=None every annotator gets all species."""
    if source is None:
        return ExpertiseSets.full(tensor.n_annotators, tensor.n_species)
    rows = _read_table(source, _EXPERTISE_HEADER)
    mask = np.zeros((tensor.n_annotators, tensor.n_species), dtype=bool)
    for i, r in enumerate(rows):
        a = _to_int(r[0], "annotator", i + 2)
        s = _to_int(r[1], "species", i + 2)
        if not (0 <= a < tensor.n_annotators and 0 <= s < tensor.n_species):
            raise DataError(f"line {i + 2}: expertise pair ({a}, {s}) out of range")
        mask[a, s] = True
    mask.flags.writeable = False
    sets = ExpertiseSets(mask)
    _validate_expertise(sets, tensor)
    return sets


def write_expertise(sets: ExpertiseSets, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_EXPERTISE_HEADER)
        for a in range(sets.n_annotators):
            for s in np.flatnonzero(sets.mask[a]):
                w.writerow([a, int(s)])


@dataclass(frozen=True)
class GoldStandard:
    """Sparse expert truth for (recording, species) cells; evaluation-only."""

    recordings: np.ndarray
    species: np.ndarray
    labels: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.labels.size)

    def cell_codes(self, n_species: int) -> np.ndarray:
        return self.recordings.astype(np.int64) * n_species + self.species


def load_gold(source, n_recordings=None, n_species=None) -> GoldStandard:
    rows = _read_table(source, _GOLD_HEADER)
    rec, spc, lab = [], [], []
    seen = set()
    for i, r in enumerate(rows):
        ri = _to_int(r[0], "recording", i + 2)
        si = _to_int(r[1], "species", i + 2)
        li = _to_int(r[2], "label", i + 2)
        if li not in (0, 1):
            raise DataError(f"line {i + 2}: gold label must be 0 or 1, got {li}")
        if ri < 0 or si < 0:
            raise DataError(f"line {i + 2}: negative index in gold standard")
        if n_recordings is not None and ri >= n_recordings:
            raise DataError(f"line {i + 2}: gold recording {ri} out of range")
        if n_species is not None and si >= n_species:
            raise DataError(f"line {i + 2}: gold species {si} out of range")
        if (ri, si) in seen:
            raise DataError(f"line {i + 2}: duplicate gold cell ({ri}, {si})")
        seen.add((ri, si))
        rec.append(ri)
        spc.append(si)
        lab.append(li)
    return GoldStandard(
        recordings=np.asarray(rec, dtype=np.int32),
        species=np.asarray(spc, dtype=np.int32),
        labels=np.asarray(lab, dtype=np.int8),
    )


def write_gold(gold: GoldStandard, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_GOLD_HEADER)
        for r, s, l in zip(gold.recordings, gold.species, gold.labels):
            w.writerow([int(r), int(s), int(l)])


@dataclass(frozen=True)
class DatasetSummary:
    n_recordings: int
    n_annotators: int
    n_species: int
    n_observed: int
    missing_rate: float
    annotations_per_annotator: np.ndarray
    recordings_per_annotator: np.ndarray
    mean_recordings_per_annotator: float
    positives_per_species: np.ndarray

    def to_text(self) -> str:
        lines = [
            f"recordings            {self.n_recordings}",
            f"annotators            {self.n_annotators}",
            f"species               {self.n_species}",
            f"observed_cells        {self.n_observed}",
            f"missing_rate          {self.missing_rate:.6f}",
            f"mean_recordings_per_annotator {self.mean_recordings_per_annotator:.3f}",
        ]
        return "\n".join(lines) + "\n"


def summarize(tensor: AnnotationTensor) -> DatasetSummary:
    """Pure summary of a tensor; repeated calls are identical."""
    n2 = tensor.n_annotators
    per_ann = np.bincount(tensor.annotators, minlength=n2)
    rec_per_ann = np.zeros(n2, dtype=np.int64)
    for j in range(n2):
        idx = tensor.entries_for_annotator(j)
        rec_per_ann[j] = np.unique(tensor.recordings[idx]).size
    mean_rec = float(rec_per_ann.mean()) if n2 else 0.0
    pos_per_species = np.bincount(
        tensor.species, weights=tensor.labels, minlength=tensor.n_species
    ).astype(np.int64)
    return DatasetSummary(
        n_recordings=tensor.n_recordings,
        n_annotators=tensor.n_annotators,
        n_species=tensor.n_species,
        n_observed=tensor.n_entries,
        missing_rate=tensor.missing_rate(),
        annotations_per_annotator=per_ann,
        recordings_per_annotator=rec_per_ann,
        mean_recordings_per_annotator=mean_rec,
        positives_per_species=pos_per_species,
    )


class IdMap:
    """Bidirectional map between external string ids and dense 0-based indices.

    The samplers only ever see dense indices; this map is persisted alongside
    converted datasets so results can be reported against the original ids.
    """

    KINDS = ("recording", "annotator", "species")

    def __init__(self):
        self._fwd = {k: {} for k in self.KINDS}
        self._rev = {k: [] for k in self.KINDS}

    def index(self, kind: str, external_id: str, create=False) -> int:
        table = self._fwd[kind]
        if external_id not in table:
            if not create:
                raise DataError(f"unknown {kind} id {external_id!r}")
            table[external_id] = len(self._rev[kind])
            self._rev[kind].append(external_id)
        return table[external_id]

    def external(self, kind: str, index: int) -> str:
        return self._rev[kind][index]

    def size(self, kind: str) -> int:
        return len(self._rev[kind])

    def ingest_raw(self, rows, known_species=None):
        """Convert raw (recording, annotator, species, label) string rows.

        New recording/annotator ids are assigned on first appearance. When
        known_species is given, only those species ids are accepted and rows
        for any other species key are dropped (e.g. "unidentified" markers);
        returns (dense rows, n_dropped).
        """
        if known_species is not None:
            for s in known_species:
                self.index("species", s, create=True)
        dense, dropped = [], 0
        for rec, ann, spc, lab in rows:
            if known_species is not None and spc not in self._fwd["species"]:
                dropped += 1
                continue
            dense.append(
                (
                    self.index("recording", rec, create=True),
                    self.index("annotator", ann, create=True),
                    self.index("species", spc, create=known_species is None),
                    int(lab),
                )
            )
        return dense, dropped

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_IDMAP_HEADER)
            for kind in self.KINDS:
                for idx, ext in enumerate(self._rev[kind]):
                    w.writerow([kind, ext, idx])

    @staticmethod
    def read(source) -> "IdMap":
        rows = _read_table(source, _IDMAP_HEADER)
        m = IdMap()
        for i, (kind, ext, idx) in enumerate(rows):
            if kind not in IdMap.KINDS:
                raise DataError(f"line {i + 2}: unknown id kind {kind!r}")
            got = m.index(kind, ext, create=True)
            if got != _to_int(idx, "index", i + 2):
                raise DataError(f"line {i + 2}: id map indices must be dense and in order")
        return m


def tensor_from_text(text: str, dims=None) -> AnnotationTensor:
    """Convenience: parse an annotation file given as a string."""
    return load_annotations(io.StringIO(text), dims=dims)
