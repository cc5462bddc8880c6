"""Corpus loading, message cleanup, tokenization and TF-IDF featurization."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "Document",
    "Vocabulary",
    "FeatureMatrix",
    "DatasetSplit",
    "load_corpus",
    "load_dataset",
    "strip_metadata",
    "tokenize",
    "load_stopwords",
    "TfidfFeaturizer",
]

_HEADER_RE = re.compile(r"^[A-Za-z][A-Za-z0-9-]*:\s")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Document:
    """One text file from the corpus; id is '<label>/<filename>'."""

    id: str
    label: str
    raw: str


@dataclass
class Vocabulary:
    """Term index built from a training split.

    index maps term -> dense feature id in [0, size); doc_freq counts the
    training documents containing each term; n_docs is the number of
    training documents the idf weights were computed against.
    """

    index: dict[str, int]
    doc_freq: np.ndarray
    n_docs: int

    @property
    def size(self) -> int:
        return len(self.index)

    @property
    def terms(self) -> list[str]:
        out = [""] * len(self.index)
        for term, i in self.index.items():
            out[i] = term
        return out

    def idf(self) -> np.ndarray:
        return np.log((1.0 + self.n_docs) / (1.0 + self.doc_freq)) + 1.0


@dataclass
class FeatureMatrix:
    """Sparse instance x feature matrix with optional per-row class labels."""

    X: sp.csr_matrix
    labels: np.ndarray | None = None
    label_names: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def label_of(self, row: int) -> str | None:
        if self.labels is None:
            return None
        return self.label_names[self.labels[row]]


@dataclass
class DatasetSplit:
    train: FeatureMatrix
    dev: FeatureMatrix
    test: FeatureMatrix
    vocab: Vocabulary
    label_names: list[str]


def load_stopwords() -> frozenset[str]:
    """Read the bundled english stopword list (data/stopwords.txt)."""
    text = resources.files("gradrules.data").joinpath("stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


_STOPWORDS = load_stopwords()


def strip_metadata(raw: str) -> str:
    """Remove the header block, quoted/attribution lines and the signature.

    The three passes are ordered so that the whole function is idempotent:
    the signature cut and quote removal run first, then header blocks are
    stripped repeatedly until the first line no longer looks like a
    "Key: value" header field.
    """
    lines = raw.split("\n")

    # signature: drop everything from the first line equal to "--" onward
    for i, line in enumerate(lines):
        if line.rstrip() == "--":
            lines = lines[:i]
            break

    # quoted and attribution lines
    kept = []
    for line in lines:
        if line.startswith((">", "|")):
            continue
        if line.rstrip().endswith(("writes:", "wrote:")):
            continue
        kept.append(line)
    lines = kept

    # header block: everything up to and including the first blank line,
    # as long as the first line matches "Key: value"; iterated to a fixed
    # point so a second application is a no-op
    while lines and _HEADER_RE.match(lines[0]):
        blank = None
        for i, line in enumerate(lines):
            if not line.strip():
                blank = i
                break
        if blank is None:
            lines = []
        else:
            lines = lines[blank + 1 :]

    return "\n".join(lines)


def tokenize(text: str) -> list[str]:
    """Lowercase tokens: runs of [a-z0-9] of length >= 2, stopwords removed."""
    return [
        t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2 and t not in _STOPWORDS
    ]


def load_corpus(root_dir: str | Path) -> list[Document]:
    """Load one Document per file under <root_dir>/<label>/<file>.

    Returns documents in lexicographic id order. A missing root raises;
    an empty class directory only warns.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    docs: list[Document] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in class_dir.iterdir() if p.is_file())
        if not files:
            warnings.warn(f"class directory {class_dir.name!r} has no documents")
            continue
        for path in files:
            raw = path.read_text("utf-8", errors="replace")
            docs.append(Document(id=f"{class_dir.name}/{path.name}", label=class_dir.name, raw=raw))
    if not any(p.is_dir() for p in root.iterdir()):
        warnings.warn(f"corpus root {root} contains no class directories")
    docs.sort(key=lambda d: d.id)
    return docs


def _split_by_label(docs: list[Document], fracs: tuple[float, ...]) -> list[list[Document]]:
    """Deterministic per-class split by id order into len(fracs)+1 parts."""
    by_label: dict[str, list[Document]] = {}
    for d in docs:
        by_label.setdefault(d.label, []).append(d)
    parts: list[list[Document]] = [[] for _ in range(len(fracs) + 1)]
    for label in sorted(by_label):
        group = sorted(by_label[label], key=lambda d: d.id)
        n = len(group)
        start = 0
        for i, frac in enumerate(fracs):
            take = int(n * frac)
            parts[i].extend(group[start : start + take])
            start += take
        parts[-1].extend(group[start:])
    return parts


def split_documents(root_dir: str | Path) -> tuple[list[Document], list[Document], list[Document]]:
    """Produce (train, dev, test) document lists.

    If <root>/train and <root>/test exist they are used as given, with the
    dev set carved from the last 10% of each training class (by id order).
    Otherwise a deterministic per-class 70/7.5/22.5 split by id order is
    applied to the flat layout.
    """
    root = Path(root_dir)
    if (root / "train").is_dir() and (root / "test").is_dir():
        train_all = load_corpus(root / "train")
        test = load_corpus(root / "test")
        by_label: dict[str, list[Document]] = {}
        for d in train_all:
            by_label.setdefault(d.label, []).append(d)
        train: list[Document] = []
        dev: list[Document] = []
        for label in sorted(by_label):
            group = sorted(by_label[label], key=lambda d: d.id)
            cut = len(group) - int(len(group) * 0.10)
            train.extend(group[:cut])
            dev.extend(group[cut:])
        return train, dev, test
    docs = load_corpus(root)
    train, dev, test = _split_by_label(docs, (0.70, 0.075))
    return train, dev, test


class TfidfFeaturizer(BaseEstimator, TransformerMixin):
    """TF-IDF featurizer over cleaned, tokenized documents.

    Weights are tf(t, d) * (ln((1 + N) / (1 + df(t))) + 1) with raw term
    counts and L2-normalized rows; N is the number of training documents.
    Fitting builds the vocabulary; transforming with a fitted vocabulary
    drops unseen terms (test-time mode).
    """

    def __init__(self, strip: bool = True):
        self.strip = strip

    def fit(self, docs: list[Document], y=None):
        tokenized = [self._tokens(d) for d in docs]
        index: dict[str, int] = {}
        df_counts: dict[str, int] = {}
        for toks in tokenized:
            for term in set(toks):
                df_counts[term] = df_counts.get(term, 0) + 1
        if not df_counts:
            raise ValueError("empty vocabulary: no terms survive tokenization")
        for term in sorted(df_counts):
            index[term] = len(index)
        df = np.zeros(len(index), dtype=np.int64)
        for term, i in index.items():
            df[i] = df_counts[term]
        self.vocabulary_ = Vocabulary(index=index, doc_freq=df, n_docs=len(docs))
        # cache fit-time tokens so fit().transform() on the same documents
        # does not tokenize twice
        self._fit_cache = {d.id: t for d, t in zip(docs, tokenized)}
        return self

    def transform(self, docs: list[Document]) -> FeatureMatrix:
        if not hasattr(self, "vocabulary_"):
            raise AttributeError("TfidfFeaturizer must be fitted before transform")
        cache = getattr(self, "_fit_cache", {})
        tokenized = [cache[d.id] if d.id in cache else self._tokens(d) for d in docs]
        vocab = self.vocabulary_
        idf = vocab.idf()

        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for toks in tokenized:
            counts: dict[int, int] = {}
            for term in toks:
                idx = vocab.index.get(term)
                if idx is not None:
                    counts[idx] = counts.get(idx, 0) + 1
            row_idx = sorted(counts)
            row_val = [counts[i] * idf[i] for i in row_idx]
            norm = float(np.sqrt(sum(v * v for v in row_val)))
            if norm > 0:
                row_val = [v / norm for v in row_val]
            indices.extend(row_idx)
            data.extend(row_val)
            indptr.append(len(indices))
        X = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int32), indptr),
            shape=(len(docs), vocab.size),
        )
        label_names = sorted({d.label for d in docs})
        labels = np.asarray([label_names.index(d.label) for d in docs], dtype=np.int64)
        return FeatureMatrix(X=X, labels=labels, label_names=label_names)

    def _tokens(self, doc: Document) -> list[str]:
        text = strip_metadata(doc.raw) if self.strip else doc.raw
        return tokenize(text)


def load_dataset(root_dir: str | Path, strip: bool = True) -> DatasetSplit:
    """Featurize a corpus directory into train/dev/test matrices.

    The vocabulary is built from the training documents only and shared by
    all three parts; label indices follow the sorted class-name order of
    the full corpus.
    """
    train_docs, dev_docs, test_docs = split_documents(root_dir)
    label_names = sorted({d.label for d in train_docs + dev_docs + test_docs})

    featurizer = TfidfFeaturizer(strip=strip)
    featurizer.fit(train_docs)

    def _with_labels(docs: list[Document]) -> FeatureMatrix:
        fm = featurizer.transform(docs)
        labels = np.asarray([label_names.index(d.label) for d in docs], dtype=np.int64)
        return FeatureMatrix(X=fm.X, labels=labels, label_names=label_names)

    train = _with_labels(train_docs)
    dev = _with_labels(dev_docs)
    test = _with_labels(test_docs)
    return DatasetSplit(train=train, dev=dev, test=test, vocab=featurizer.vocabulary_, label_names=label_names)
