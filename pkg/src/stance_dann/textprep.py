"""Tokenization, vocabulary construction and bag-of-words vectors.

The vocabulary keeps the most document-frequent terms up to a size cap and
is immutable once built; TF / TF-IDF vectors and cosine similarity are pure
functions over it.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence

import numpy as np

# Maximal runs of alphanumeric characters (underscore counts as a splitter).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Term -> dense index map with per-term document frequencies."""

    def __init__(self, terms: Sequence[str], doc_freq: dict[str, int], corpus_size: int):
        self.terms = list(terms)
        self.index = {term: i for i, term in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")
        self.doc_freq = dict(doc_freq)
        self.corpus_size = int(corpus_size)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def idf(self) -> np.ndarray:
        """Smoothed inverse document frequency, ln((1+N)/(1+df)) + 1."""
        df = np.array([self.doc_freq[t] for t in self.terms], dtype=np.float64)
        return np.log((1.0 + self.corpus_size) / (1.0 + df)) + 1.0

    def save(self, path) -> None:
        """Write `#corpus_size=N` then one `term<TAB>doc_freq` line per term."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#corpus_size={self.corpus_size}\n")
            for term in self.terms:
                fh.write(f"{term}\t{self.doc_freq[term]}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith("#corpus_size="):
                raise ValueError(f"{path}: missing corpus_size header")
            corpus_size = int(header.split("=", 1)[1])
            terms: list[str] = []
            doc_freq: dict[str, int] = {}
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    term, df = line.split("\t")
                except ValueError:
                    raise ValueError(f"{path}: malformed line {lineno}") from None
                terms.append(term)
                doc_freq[term] = int(df)
        return cls(terms, doc_freq, corpus_size)


def build_vocab(corpus: Iterable[Sequence[str]], max_terms: int) -> Vocabulary:
    """Retain the `max_terms` most document-frequent terms.

    Ties are broken lexicographically so the result is independent of
    corpus order.
    """
    if max_terms <= 0:
        raise ValueError("max_terms must be positive")
    doc_freq: dict[str, int] = {}
    corpus_size = 0
    for tokens in corpus:
        corpus_size += 1
        for term in set(tokens):
            doc_freq[term] = doc_freq.get(term, 0) + 1
    if corpus_size == 0:
        raise ValueError("empty corpus")
    ranked = sorted(doc_freq, key=lambda t: (-doc_freq[t], t))[:max_terms]
    return Vocabulary(ranked, {t: doc_freq[t] for t in ranked}, corpus_size)


def tf_vector(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Raw term counts over the vocabulary; out-of-vocabulary tokens ignored."""
    vec = np.zeros(len(vocab), dtype=np.float64)
    index = vocab.index
    for token in tokens:
        i = index.get(token)
        if i is not None:
            vec[i] += 1.0
    return vec


def tfidf_vector(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    return tf_vector(tokens, vocab) * vocab.idf()


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """dot(u, v) / (||u|| ||v||); 0.0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v) / (nu * nv)
