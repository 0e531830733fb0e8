"""Sparse instances, text ingestion, and fold splitting.

Feature vectors are stored sparse (sorted index/value arrays) because the
intended inputs are bag-of-words matrices where almost every entry is zero.
All containers are treated as immutable after construction so they can be
shared freely across folds and strategies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

POSITIVE = 1
NEGATIVE = -1


class LibsvmParseError(ValueError):
    """Malformed sparse-text input; carries the 1-based offending line."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse vector: ``indices`` strictly increasing, no zeros stored."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or val.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0:
                raise ValueError("feature indices must be non-negative")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("feature indices must be strictly increasing")
        if np.any(val == 0.0):
            raise ValueError("zero values must not be stored")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, pairs) -> "SparseVector":
        pairs = list(pairs)
        idx = np.array([i for i, _ in pairs], dtype=np.int64)
        val = np.array([v for _, v in pairs], dtype=np.float64)
        return cls(idx, val)

    @classmethod
    def from_dense(cls, dense) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.nonzero(dense)[0]
        return cls(nz, dense[nz])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )


EMPTY_VECTOR = SparseVector(np.empty(0, dtype=np.int64), np.empty(0))


@dataclass(frozen=True)
class LabeledInstance:
    features: SparseVector
    label: int

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be +1 or -1, got {self.label}")


@dataclass(frozen=True)
class Dataset:
    """A pool of labeled instances over a fixed feature space.

    ``texts`` optionally carries one display string per instance for
    annotation UIs; purely synthetic pools leave it as None.
    """

    instances: tuple[LabeledInstance, ...]
    dimension: int
    texts: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.texts is not None:
            object.__setattr__(self, "texts", tuple(self.texts))
            if len(self.texts) != len(self.instances):
                raise ValueError("texts must align one-to-one with instances")
        for inst in self.instances:
            if inst.features.nnz and inst.features.indices[-1] >= self.dimension:
                raise ValueError("feature index exceeds dataset dimension")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=np.float64)

    def text_of(self, index: int) -> str:
        if self.texts is not None:
            return self.texts[index]
        return f"instance {index}"


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-feature-index map over a contiguous 0-based index range."""

    index_of: dict[str, int]
    min_count: int

    def __post_init__(self):
        if self.index_of and sorted(self.index_of.values()) != list(range(len(self.index_of))):
            raise ValueError("vocabulary indices must be contiguous from 0")

    def __len__(self) -> int:
        return len(self.index_of)

    def __contains__(self, token: str) -> bool:
        return token in self.index_of


def parse_libsvm(text: str) -> Dataset:
    """Parse sparse `<label> <idx>:<val> ...` lines into a Dataset.

    Indices are 1-based on disk and converted to 0-based in memory.
    Blank lines are skipped; any malformed line raises LibsvmParseError
    with its line number.
    """
    instances = []
    max_index = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        label_tok = fields[0]
        if label_tok in ("+1", "1"):
            label = POSITIVE
        elif label_tok == "-1":
            label = NEGATIVE
        else:
            raise LibsvmParseError(lineno, f"bad label {label_tok!r}")
        indices: list[int] = []
        values: list[float] = []
        for tok in fields[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"bad feature {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(lineno, f"indices are 1-based, got {idx}")
            if indices and idx - 1 <= indices[-1]:
                raise LibsvmParseError(lineno, "feature indices must be strictly increasing")
            if val != 0.0:
                indices.append(idx - 1)
                values.append(val)
        if indices:
            max_index = max(max_index, indices[-1])
        instances.append(
            LabeledInstance(
                SparseVector(np.array(indices, dtype=np.int64), np.array(values)), label
            )
        )
    return Dataset(tuple(instances), dimension=max_index + 1)


def serialize_libsvm(dataset: Dataset) -> str:
    """Inverse of parse_libsvm; writes indices back to 1-based."""
    lines = []
    for inst in dataset.instances:
        parts = ["+1" if inst.label == POSITIVE else "-1"]
        for idx, val in zip(inst.features.indices, inst.features.values):
            parts.append(f"{idx + 1}:{val:.17g}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_token_corpus(text: str) -> tuple[list[int], list[list[str]]]:
    """Read the one-document-per-line corpus format.

    Each non-empty line is `<label> tok tok ...` with label +1 or -1.
    Returns (labels, token lists).
    """
    labels: list[int] = []
    docs: list[list[str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] in ("+1", "1"):
            labels.append(POSITIVE)
        elif fields[0] == "-1":
            labels.append(NEGATIVE)
        else:
            raise LibsvmParseError(lineno, f"bad label {fields[0]!r}")
        docs.append(fields[1:])
    return labels, docs


def build_vocabulary(docs, min_count: int) -> Vocabulary:
    """Tokens with corpus frequency >= min_count, indexed in first-occurrence order."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    for doc in docs:
        for tok in doc:
            counts[tok] = counts.get(tok, 0) + 1
    index_of: dict[str, int] = {}
    for doc in docs:
        for tok in doc:
            if counts[tok] >= min_count and tok not in index_of:
                index_of[tok] = len(index_of)
    return Vocabulary(index_of, min_count)


def vectorize(doc, vocab: Vocabulary) -> SparseVector:
    """Binary presence features: 1.0 per distinct in-vocabulary token."""
    idx = sorted({vocab.index_of[tok] for tok in doc if tok in vocab.index_of})
    return SparseVector(np.array(idx, dtype=np.int64), np.ones(len(idx)))


def split_folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Partition indices 0..n-1 into k folds whose sizes differ by at most 1."""
    if k < 2 or k > n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def class_balance(dataset: Dataset) -> float:
    """Fraction of positive labels."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return sum(1 for inst in dataset.instances if inst.label == POSITIVE) / len(dataset)


def sparse_dot(x: SparseVector, w: np.ndarray) -> float:
    """Dot product of a sparse vector with a dense weight vector."""
    if x.nnz and x.indices[-1] >= len(w):
        raise ValueError("sparse index out of range of weight vector")
    return float(np.dot(w[x.indices], x.values))


def to_csr(instances, dimension: int) -> sp.csr_matrix:
    """Stack sparse feature vectors into one CSR matrix."""
    feats = [inst.features if isinstance(inst, LabeledInstance) else inst for inst in instances]
    indptr = np.zeros(len(feats) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([f.nnz for f in feats])
    if feats:
        indices = np.concatenate([f.indices for f in feats])
        values = np.concatenate([f.values for f in feats])
    else:
        indices = np.empty(0, dtype=np.int64)
        values = np.empty(0)
    return sp.csr_matrix((values, indices, indptr), shape=(len(feats), dimension))
