"""Clinical note featurization: masking-aware tokenization, document-frequency
vocabulary pruning, tf-idf weighting, and fusion with structured features.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.sparse as sp

# de-identification placeholders look like "[**First Name 123**]"
_MASK_RE = re.compile(r"\[\*\*.*?\*\*\]", re.DOTALL)
_TOKEN_RE = re.compile(r"[a-z0-9]+")
_DIGITS_RE = re.compile(r"[0-9]+\Z")


class TextFeatError(ValueError):
    pass


def load_stopwords(path):
    """One token per line; '#' comment lines and blanks are skipped."""
    out = set()
    with open(path, encoding="utf-8") as f:
        for line in f:
            token = line.strip()
            if token and not token.startswith("#"):
                out.add(token)
    return out


def default_stopwords():
    out = set()
    text = resources.files("icumort.data").joinpath("stopwords.txt").read_text("utf-8")
    for line in text.splitlines():
        token = line.strip()
        if token and not token.startswith("#"):
            out.add(token)
    return out


def preprocess_note(text, stopwords):
    """Mask spans deleted, lowercased, split into letter/digit runs;
    pure-digit tokens and stop words dropped."""
    text = _MASK_RE.sub(" ", text)
    tokens = _TOKEN_RE.findall(text.lower())
    return [t for t in tokens if not _DIGITS_RE.match(t) and t not in stopwords]


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse representation; invariants checked on construction."""

    dimension: int
    indices: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise TextFeatError("indices and weights must align")
        prev = -1
        for i, w in zip(self.indices, self.weights):
            if not prev < i < self.dimension:
                raise TextFeatError(
                    f"index {i} breaks strict ordering within dimension "
                    f"{self.dimension}")
            if not math.isfinite(w) or w == 0.0:
                raise TextFeatError(f"weight {w!r} at index {i} must be finite and non-zero")
            prev = i

    @property
    def nnz(self):
        return len(self.indices)

    def to_dense(self):
        out = np.zeros(self.dimension)
        if self.indices:
            out[list(self.indices)] = self.weights
        return out

    def norm(self):
        return math.sqrt(sum(w * w for w in self.weights))

    @classmethod
    def from_dense(cls, values):
        values = np.asarray(values, dtype=float)
        nz = np.nonzero(values)[0]
        return cls(int(values.size), tuple(int(i) for i in nz),
                   tuple(float(values[i]) for i in nz))


class Vocabulary:
    """Lexicographically ordered retained tokens with document frequencies."""

    def __init__(self, tokens, dfs, n_docs, min_df):
        self.tokens = tuple(tokens)
        self.dfs = tuple(int(d) for d in dfs)
        self.n_docs = int(n_docs)
        self.min_df = int(min_df)
        if list(self.tokens) != sorted(self.tokens):
            raise TextFeatError("vocabulary must be lexicographically ordered")
        if len(set(self.tokens)) != len(self.tokens):
            raise TextFeatError("duplicate vocabulary tokens")
        if any(d < self.min_df for d in self.dfs):
            raise TextFeatError("document frequency below the retention threshold")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#N={self.n_docs}\n")
            for token, df in zip(self.tokens, self.dfs):
                f.write(f"{token}\t{df}\n")

    @classmethod
    def load(cls, path, min_df=1):
        n_docs = None
        tokens, dfs = [], []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    if line.startswith("#N="):
                        n_docs = int(line[3:])
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise TextFeatError(f"bad vocabulary line {lineno}: {line!r}")
                tokens.append(parts[0])
                dfs.append(int(parts[1]))
        if n_docs is None:
            raise TextFeatError("vocabulary file lacks a '#N=' header")
        return cls(tokens, dfs, n_docs, min_df)


def build_vocab(token_docs, min_df=10):
    if min_df < 1:
        raise TextFeatError("min_df must be >= 1")
    token_docs = list(token_docs)
    if not token_docs:
        raise TextFeatError("cannot build a vocabulary from an empty corpus")
    df = {}
    for doc in token_docs:
        for token in set(doc):
            df[token] = df.get(token, 0) + 1
    kept = sorted(t for t, d in df.items() if d >= min_df)
    return Vocabulary(kept, [df[t] for t in kept], len(token_docs), min_df)


class TfIdfModel:
    """Frozen idf weights; transform is pure (the test corpus cannot move idf)."""

    def __init__(self, vocab, idf):
        self.vocab = vocab
        self.idf = np.asarray(idf, dtype=float)
        if self.idf.shape != (len(vocab),):
            raise TextFeatError("idf length must match the vocabulary")
        if np.any(self.idf <= 0):
            raise TextFeatError("idf weights must be positive")

    @property
    def dimension(self):
        return len(self.vocab)


def tfidf_fit(vocab):
    """idf = ln((1+N)/(1+df)) + 1, always positive."""
    dfs = np.asarray(vocab.dfs, dtype=float)
    idf = np.log((1.0 + vocab.n_docs) / (1.0 + dfs)) + 1.0
    return TfIdfModel(vocab, idf)


def tfidf_transform(model, tokens):
    counts = {}
    for t in tokens:
        j = model.vocab.index.get(t)
        if j is not None:
            counts[j] = counts.get(j, 0) + 1
    if not counts:
        return SparseVector(model.dimension, (), ())
    idx = sorted(counts)
    weights = np.array([counts[j] * model.idf[j] for j in idx])
    weights = weights / np.linalg.norm(weights)
    return SparseVector(model.dimension, tuple(idx), tuple(float(w) for w in weights))


def fuse(structured_row, text_vec):
    """Concatenate a dense structured row with a sparse text vector.

    Structured entries keep indices 0..d_s-1 (zeros dropped); text indices
    shift by d_s. The blocks stay recoverable by index partition.
    """
    structured_row = np.asarray(structured_row, dtype=float)
    if structured_row.ndim != 1:
        raise TextFeatError("structured_row must be 1-d")
    d_s = structured_row.size
    indices, weights = [], []
    for i in np.nonzero(structured_row)[0]:
        indices.append(int(i))
        weights.append(float(structured_row[i]))
    for i, w in zip(text_vec.indices, text_vec.weights):
        indices.append(d_s + i)
        weights.append(w)
    return SparseVector(d_s + text_vec.dimension, tuple(indices), tuple(weights))


def vectors_to_csr(vectors):
    """Stack SparseVectors of one common dimension into a CSR matrix."""
    vectors = list(vectors)
    if not vectors:
        raise TextFeatError("need at least one vector")
    dim = vectors[0].dimension
    if any(v.dimension != dim for v in vectors):
        raise TextFeatError("vectors must share a dimension")
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + v.nnz
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1])
    for i, v in enumerate(vectors):
        indices[indptr[i]:indptr[i + 1]] = v.indices
        data[indptr[i]:indptr[i + 1]] = v.weights
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def transform_corpus(model, token_docs):
    """tf-idf transform a whole corpus into one CSR matrix."""
    return vectors_to_csr([tfidf_transform(model, doc) for doc in token_docs])


def tokenize_corpus(notes, stopwords=None):
    if stopwords is None:
        stopwords = default_stopwords()
    return [preprocess_note(text, stopwords) for text in notes]


def fuse_matrix(structured, text_csr):
    """Row-wise fusion of a dense structured matrix with a text CSR block."""
    structured = np.asarray(structured, dtype=float)
    if structured.shape[0] != text_csr.shape[0]:
        raise TextFeatError("row counts differ between blocks")
    return sp.hstack([sp.csr_matrix(structured), text_csr], format="csr")
