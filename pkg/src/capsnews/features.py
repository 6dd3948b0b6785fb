"""Text statistics and lexicon sentiment scoring.

Produces the 12-element indirect feature vector consumed by the MLP
variant.  Order is fixed:

    word_count, unique_word_count, letter_count, stopword_count,
    polarity, subjectivity, unique_ratio,
    credit_barely_true, credit_false, credit_half_true,
    credit_mostly_true, credit_pants_fire

Credit slots are zero for datasets without speaker metadata.  The lexicon
and stopword lists are bundled and versioned by content hash; trained
models record the hashes and refuse feature vectors built from different
lists.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources as pkg_resources

import numpy as np

from .errors import ConfigError, FormatError

FEATURE_NAMES = (
    "word_count",
    "unique_word_count",
    "letter_count",
    "stopword_count",
    "polarity",
    "subjectivity",
    "unique_ratio",
    "credit_barely_true",
    "credit_false",
    "credit_half_true",
    "credit_mostly_true",
    "credit_pants_fire",
)

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)


def tokenize(text: str) -> list:
    """Case-folded word tokens: maximal runs of letters/digits/apostrophes.

    URLs and punctuation are dropped; a token must contain at least one
    alphanumeric character.
    """
    text = _URL_RE.sub(" ", text).casefold()
    tokens = []
    cur = []
    for ch in text:
        if ch.isalnum() or ch == "'":
            cur.append(ch)
        elif cur:
            tok = "".join(cur)
            if any(c.isalnum() for c in tok):
                tokens.append(tok)
            cur = []
    if cur:
        tok = "".join(cur)
        if any(c.isalnum() for c in tok):
            tokens.append(tok)
    return tokens


def count_features(text: str, stopwords) -> tuple:
    """(word_count, unique_word_count, letter_count, stopword_count, unique_ratio).

    letter_count is the number of alphabetic code points in the raw text,
    not in the token stream.
    """
    tokens = tokenize(text)
    wc = len(tokens)
    uc = len(set(tokens))
    lc = sum(1 for ch in text if ch.isalpha())
    sc = sum(1 for t in tokens if t in stopwords)
    ratio = uc / wc if wc else 0.0
    return wc, uc, lc, sc, ratio


def _read_resource(name: str) -> bytes:
    return pkg_resources.files("capsnews").joinpath(f"resources/{name}").read_bytes()


def _read(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class StopwordList:
    words: frozenset
    content_hash: str


def load_stopwords(path=None) -> StopwordList:
    """One stopword per line; bundled list when no path is given."""
    raw = _read(path) if path else _read_resource("stopwords.txt")
    words = frozenset(
        line.strip() for line in raw.decode("utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    )
    return StopwordList(words, _sha256(raw))


@dataclass(frozen=True)
class SentimentLexicon:
    entries: dict          # term -> (polarity, subjectivity)
    negators: frozenset
    content_hash: str


def load_lexicon(lexicon_path=None, negators_path=None) -> SentimentLexicon:
    """Tab-separated `term<TAB>polarity<TAB>subjectivity` plus a negator list.

    Polarity must lie in [-1, 1] and subjectivity in [0, 1]; violations are
    format errors naming the line.
    """
    lex_raw = _read(lexicon_path) if lexicon_path else _read_resource("sentiment_lexicon.tsv")
    neg_raw = _read(negators_path) if negators_path else _read_resource("negators.txt")

    entries = {}
    for lineno, line in enumerate(lex_raw.decode("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(
                f"lexicon line {lineno}: expected term<TAB>polarity<TAB>subjectivity"
            )
        term, pol_s, subj_s = parts
        try:
            pol, subj = float(pol_s), float(subj_s)
        except ValueError:
            raise FormatError(f"lexicon line {lineno}: non-numeric score") from None
        if not -1.0 <= pol <= 1.0 or not 0.0 <= subj <= 1.0:
            raise FormatError(
                f"lexicon line {lineno}: scores out of range (polarity {pol}, subjectivity {subj})"
            )
        entries[term] = (pol, subj)

    negators = frozenset(
        line.strip() for line in neg_raw.decode("utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    )
    digest = _sha256(lex_raw + b"\n--negators--\n" + neg_raw)
    return SentimentLexicon(entries, negators, digest)


def polarity_subjectivity(text: str, lex: SentimentLexicon) -> tuple:
    """Mean lexicon polarity/subjectivity over matched tokens.

    A matched token immediately preceded by a negator contributes with its
    polarity sign flipped.  No matches gives (0, 0).
    """
    tokens = tokenize(text)
    pols, subjs = [], []
    for i, tok in enumerate(tokens):
        hit = lex.entries.get(tok)
        if hit is None:
            continue
        pol, subj = hit
        if i > 0 and tokens[i - 1] in lex.negators:
            pol = -pol
        pols.append(pol)
        subjs.append(subj)
    if not pols:
        return 0.0, 0.0
    return float(np.mean(pols)), float(np.mean(subjs))


# ---------------------------------------------------------------------------
# the 12-element vector and its normalization


@dataclass(frozen=True)
class IndirectFeatureVector:
    values: np.ndarray        # shape (12,), z-scored
    lexicon_hash: str = ""    # provenance, checked against the model's hashes
    stopword_hash: str = ""


@dataclass
class NormalizationStats:
    """Per-coordinate training mean/std; std floored at 1e-8."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, raw_matrix) -> "NormalizationStats":
        m = np.asarray(raw_matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != len(FEATURE_NAMES):
            raise ConfigError(f"normalization expects (N, 12) raw features, got {m.shape}")
        std = m.std(axis=0)
        return cls(m.mean(axis=0), np.maximum(std, 1e-8))

    def apply(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std


def raw_feature_vector(example, lex: SentimentLexicon, stopwords) -> np.ndarray:
    """Assemble the 12 raw values for one example (before z-scoring)."""
    words = stopwords.words if isinstance(stopwords, StopwordList) else set(stopwords)
    wc, uc, lc, sc, ratio = count_features(example.text, words)
    pol, subj = polarity_subjectivity(example.text, lex)
    credit = example.credit_history if example.credit_history is not None else (0, 0, 0, 0, 0)
    if len(credit) != 5:
        raise ConfigError(f"credit history needs 5 counts, got {len(credit)}")
    return np.array([wc, uc, lc, sc, pol, subj, ratio, *credit], dtype=np.float64)


def indirect_feature_vector(example, lex, stopwords, norm) -> IndirectFeatureVector:
    """Raw 12-vector z-scored with training statistics."""
    if norm is None:
        raise ConfigError("normalization stats are required; fit them on the training split")
    values = norm.apply(raw_feature_vector(example, lex, stopwords))
    lex_hash = getattr(lex, "content_hash", "")
    stop_hash = stopwords.content_hash if isinstance(stopwords, StopwordList) else ""
    return IndirectFeatureVector(values, lex_hash, stop_hash)
