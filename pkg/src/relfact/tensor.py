"""Sparse binary third-order tensors over labeled entities and relations.

A dataset of (subject, relation, object) facts is encoded as an N x N x K
adjacency tensor: cell (i, j, k) is 1 iff relation k holds from entity i to
entity j.  Slices are stored as sorted, duplicate-free coordinate lists;
every unstored cell reads as 0 (closed-world encoding).  All types here are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DenseCapError, TripleParseError

# Dense N x N materialization is refused above this many entities unless the
# caller raises the cap explicitly (~200 MB per slice at 8-byte reals).
DENSE_CAP_DEFAULT = 5000


@dataclass(frozen=True)
class Triple:
    """One directed fact: relation holds from subject to object."""

    subject: str
    relation: str
    object: str


class LabelDictionary:
    """Bijective label <-> dense index map.

    Indices are 0..n-1 with no gaps; every index has exactly one label and
    vice versa.  Instances are immutable.
    """

    __slots__ = ("_labels", "_index")

    def __init__(self, labels: Iterable[str] = ()):
        labels = tuple(labels)
        index = {}
        for i, label in enumerate(labels):
            if not label:
                raise ValueError(f"empty label at index {i}")
            if label in index:
                raise ValueError(f"duplicate label {label!r}")
            index[label] = i
        self._labels = labels
        self._index = index

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelDictionary) and self._labels == other._labels

    def __repr__(self) -> str:
        return f"LabelDictionary({len(self)} labels)"

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def index(self, label: str) -> int:
        """Index of ``label``; raises KeyError for unknown labels."""
        return self._index[label]

    def label(self, i: int) -> str:
        if not 0 <= i < len(self._labels):
            raise IndexError(f"index {i} out of range [0, {len(self._labels)})")
        return self._labels[i]

    def to_tsv(self, path: str | Path) -> None:
        """Write the two-column ``index<TAB>label`` export."""
        lines = [f"{i}\t{label}\n" for i, label in enumerate(self._labels)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def from_tsv(cls, path: str | Path) -> "LabelDictionary":
        labels = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected index<TAB>label, got {line!r}")
            idx, label = int(fields[0]), fields[1]
            if idx != len(labels):
                raise ValueError(f"{path}:{lineno}: non-dense index {idx}, expected {len(labels)}")
            labels.append(label)
        return cls(labels)


# Dictionaries for entities and relations share one implementation; the two
# names exist for call-site clarity only.
EntityDictionary = LabelDictionary
RelationDictionary = LabelDictionary


@dataclass(frozen=True)
class SparseAdjacencyTensor:
    """Binary N x N x K tensor stored as per-relation coordinate lists.

    ``slices[k]`` is a sorted tuple of unique (i, j) pairs marking the ones
    of relation k.  Two tensors built from the same fact multiset compare
    equal regardless of input order (canonical form).
    """

    n_entities: int
    n_relations: int
    slices: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        if self.n_entities < 0 or self.n_relations < 0:
            raise ValueError("negative dimensions")
        if len(self.slices) != self.n_relations:
            raise ValueError(
                f"{len(self.slices)} slices for {self.n_relations} relations"
            )
        n = self.n_entities
        for k, coords in enumerate(self.slices):
            prev = None
            for ij in coords:
                i, j = ij
                if not (0 <= i < n and 0 <= j < n):
                    raise IndexError(f"coordinate {ij} out of range for N={n} in slice {k}")
                if prev is not None and ij <= prev:
                    raise ValueError(f"slice {k} not in canonical sorted order")
                prev = ij

    def nnz(self, k: int | None = None) -> int:
        """Number of ones in slice k, or in the whole tensor when k is None."""
        if k is None:
            return sum(len(c) for c in self.slices)
        return len(self.slices[self._check_relation(k)])

    def slice_pairs(self, k: int) -> tuple[tuple[int, int], ...]:
        return self.slices[self._check_relation(k)]

    def slice_set(self, k: int) -> frozenset[tuple[int, int]]:
        return frozenset(self.slices[self._check_relation(k)])

    def dense_slice(self, k: int, *, cap: int = DENSE_CAP_DEFAULT) -> np.ndarray:
        """Materialize slice k as a dense N x N float array of {0, 1}."""
        k = self._check_relation(k)
        if self.n_entities > cap:
            raise DenseCapError(
                f"dense slice of N={self.n_entities} entities exceeds the cap of {cap}; "
                "raise the dense cap explicitly if this is intended"
            )
        out = np.zeros((self.n_entities, self.n_entities))
        coords = self.slices[k]
        if coords:
            idx = np.asarray(coords)
            out[idx[:, 0], idx[:, 1]] = 1.0
        return out

    def mask_cells(self, cells: Iterable[tuple[int, int, int]]) -> "SparseAdjacencyTensor":
        """Return a copy with every listed (i, j, k) cell forced to 0.

        Masking an absent cell is a no-op; the input tensor is unchanged.
        """
        by_relation: dict[int, set[tuple[int, int]]] = {}
        for i, j, k in cells:
            if not (0 <= k < self.n_relations):
                raise IndexError(f"relation index {k} out of range [0, {self.n_relations})")
            if not (0 <= i < self.n_entities and 0 <= j < self.n_entities):
                raise IndexError(f"cell ({i}, {j}, {k}) out of range for N={self.n_entities}")
            by_relation.setdefault(k, set()).add((i, j))
        if not by_relation:
            return self
        new_slices = list(self.slices)
        for k, removed in by_relation.items():
            new_slices[k] = tuple(ij for ij in self.slices[k] if ij not in removed)
        return SparseAdjacencyTensor(self.n_entities, self.n_relations, tuple(new_slices))

    def checksum(self) -> str:
        """SHA-256 over the canonical form; stable across equal tensors."""
        h = hashlib.sha256()
        h.update(f"N={self.n_entities};K={self.n_relations};".encode())
        for k, coords in enumerate(self.slices):
            h.update(f"[{k}]".encode())
            for i, j in coords:
                h.update(f"{i},{j};".encode())
        return h.hexdigest()

    def _check_relation(self, k: int) -> int:
        if not (0 <= k < self.n_relations):
            raise IndexError(f"relation index {k} out of range [0, {self.n_relations})")
        return k


def _clean_label(value: str, position: str, record) -> str:
    label = value.strip()
    if not label:
        raise TripleParseError(f"empty {position} label in triple {record!r}")
    return label


def from_triples(
    triples: Sequence[Triple],
) -> tuple[LabelDictionary, LabelDictionary, SparseAdjacencyTensor]:
    """Index a stream of facts into dictionaries and an adjacency tensor.

    Entity and relation indices follow first appearance in the stream
    (subject before object within a triple), so a fixed input file always
    produces the same indexing.  Duplicate triples collapse to one cell;
    labels are whitespace-trimmed.
    """
    entity_index: dict[str, int] = {}
    relation_index: dict[str, int] = {}
    cells: dict[int, set[tuple[int, int]]] = {}

    for t in triples:
        s = _clean_label(t.subject, "subject", t)
        r = _clean_label(t.relation, "relation", t)
        o = _clean_label(t.object, "object", t)
        i = entity_index.setdefault(s, len(entity_index))
        k = relation_index.setdefault(r, len(relation_index))
        j = entity_index.setdefault(o, len(entity_index))
        cells.setdefault(k, set()).add((i, j))

    n, n_rel = len(entity_index), len(relation_index)
    slices = tuple(tuple(sorted(cells.get(k, ()))) for k in range(n_rel))
    tensor = SparseAdjacencyTensor(n, n_rel, slices)
    return LabelDictionary(entity_index), LabelDictionary(relation_index), tensor


def to_triples(
    tensor: SparseAdjacencyTensor,
    entities: LabelDictionary,
    relations: LabelDictionary,
) -> list[Triple]:
    """Re-emit the distinct facts stored in the tensor, labeled."""
    out = []
    for k in range(tensor.n_relations):
        rel = relations.label(k)
        for i, j in tensor.slice_pairs(k):
            out.append(Triple(entities.label(i), rel, entities.label(j)))
    return out


def read_triples_file(path: str | Path) -> list[Triple]:
    """Parse the TAB-separated triple format.

    One ``subject<TAB>relation<TAB>object`` fact per line; lines starting
    with '#' and blank lines are ignored.
    """
    path = Path(path)
    triples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise TripleParseError(
                    f"{path}:{lineno}: expected 3 TAB-separated fields, got {len(fields)}: {line!r}"
                )
            s, r, o = (f.strip() for f in fields)
            if not (s and r and o):
                raise TripleParseError(f"{path}:{lineno}: empty label in {line!r}")
            triples.append(Triple(s, r, o))
    return triples


def write_triples_file(path: str | Path, triples: Iterable[Triple]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(f"{t.subject}\t{t.relation}\t{t.object}\n")
