"""Versioned on-disk text formats shared by the pipeline stages.

Feature cache (GRADRULES-FM v1) and sign-matrix export (GRADRULES-SM v1)
use the same sparse layout:

    <magic>
    <n_terms>\t<n_rows>\t<n_train_docs>
    term\tdf                        (one line per vocabulary term)
    label\tidx:val idx:val ...      (one line per row; label empty if none)

Floats are serialized with repr() so a write/read/write cycle is
byte-exact. Sign matrices store integer values restricted to -1|1.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import FeatureMatrix, Vocabulary

FM_MAGIC = "GRADRULES-FM v1"
SM_MAGIC = "GRADRULES-SM v1"

__all__ = [
    "FM_MAGIC",
    "SM_MAGIC",
    "write_feature_cache",
    "read_feature_cache",
    "write_sign_matrix",
    "read_sign_matrix",
    "write_selection",
    "read_selection",
    "write_labels",
    "read_labels",
]


def _format_value_float(v: float) -> str:
    return repr(float(v))


def _format_value_sign(v: float) -> str:
    return str(int(v))


def _write_sparse(path: Path, magic: str, fm: FeatureMatrix, vocab: Vocabulary, fmt) -> None:
    X = fm.X.tocsr()
    lines = [magic, f"{vocab.size}\t{X.shape[0]}\t{vocab.n_docs}"]
    for term, df in zip(vocab.terms, vocab.doc_freq):
        lines.append(f"{term}\t{int(df)}")
    for i in range(X.shape[0]):
        sl = slice(X.indptr[i], X.indptr[i + 1])
        cells = " ".join(f"{j}:{fmt(v)}" for j, v in zip(X.indices[sl], X.data[sl]))
        label = fm.label_of(i) or ""
        lines.append(f"{label}\t{cells}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_sparse(path: Path, magic: str, dtype) -> tuple[FeatureMatrix, Vocabulary]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != magic:
        raise ValueError(f"{path}: expected header {magic!r}")
    n_terms, n_rows, n_docs = (int(x) for x in lines[1].split("\t"))
    if len(lines) != 2 + n_terms + n_rows:
        raise ValueError(f"{path}: truncated file")

    index: dict[str, int] = {}
    df = np.zeros(n_terms, dtype=np.int64)
    for i in range(n_terms):
        term, count = lines[2 + i].split("\t")
        index[term] = i
        df[i] = int(count)
    vocab = Vocabulary(index=index, doc_freq=df, n_docs=n_docs)

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    row_labels: list[str] = []
    for i in range(n_rows):
        label, _, cells = lines[2 + n_terms + i].partition("\t")
        row_labels.append(label)
        if cells:
            for cell in cells.split(" "):
                j, _, v = cell.partition(":")
                indices.append(int(j))
                data.append(float(v))
        indptr.append(len(indices))
    X = sp.csr_matrix(
        (np.asarray(data, dtype=dtype), np.asarray(indices, dtype=np.int32), indptr),
        shape=(n_rows, n_terms),
    )
    if any(row_labels):
        if not all(row_labels):
            raise ValueError(f"{path}: mix of labeled and unlabeled rows")
        label_names = sorted(set(row_labels))
        labels = np.asarray([label_names.index(l) for l in row_labels], dtype=np.int64)
    else:
        label_names, labels = [], None
    return FeatureMatrix(X=X, labels=labels, label_names=label_names), vocab


def write_feature_cache(path: str | Path, fm: FeatureMatrix, vocab: Vocabulary) -> None:
    _write_sparse(Path(path), FM_MAGIC, fm, vocab, _format_value_float)


def read_feature_cache(path: str | Path) -> tuple[FeatureMatrix, Vocabulary]:
    return _read_sparse(Path(path), FM_MAGIC, np.float64)


def write_sign_matrix(path: str | Path, fm: FeatureMatrix, vocab: Vocabulary) -> None:
    bad = np.setdiff1d(np.unique(fm.X.data), [-1, 1])
    if bad.size:
        raise ValueError(f"sign matrix contains values outside -1|1: {bad[:5]}")
    _write_sparse(Path(path), SM_MAGIC, fm, vocab, _format_value_sign)


def read_sign_matrix(path: str | Path) -> tuple[FeatureMatrix, Vocabulary]:
    return _read_sparse(Path(path), SM_MAGIC, np.int8)


def write_selection(path: str | Path, indices, terms, scores) -> None:
    """Selected features, one 'index<TAB>term<TAB>score' line per feature."""
    lines = [f"{int(i)}\t{t}\t{repr(float(s))}" for i, t, s in zip(indices, terms, scores)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_selection(path: str | Path) -> tuple[np.ndarray, list[str], np.ndarray]:
    indices: list[int] = []
    terms: list[str] = []
    scores: list[float] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        i, t, s = line.split("\t")
        indices.append(int(i))
        terms.append(t)
        scores.append(float(s))
    return np.asarray(indices, dtype=np.int64), terms, np.asarray(scores, dtype=np.float64)


def write_labels(path: str | Path, names: list[str]) -> None:
    """Class names, one per line (used for model predictions)."""
    Path(path).write_text("\n".join(names) + "\n", encoding="utf-8")


def read_labels(path: str | Path) -> list[str]:
    return [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l]
