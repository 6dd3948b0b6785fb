"""Dataset loading and corpus reporting.

Two dataset shapes are supported: binary-labeled long posts (id/tweet/label
files with a header, comma- or tab-separated) and 6-way-labeled short
statements (14-column headerless TSV with speaker metadata and credit
history).  Loaders warn about unexpected split sizes instead of failing;
the published reference counts are internally inconsistent, so observed
file counts are authoritative.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .features import polarity_subjectivity, tokenize

COVID_CLASSES = ("real", "fake")
LIAR_CLASSES = ("pants-fire", "false", "barely-true", "half-true", "mostly-true", "true")

EXPECTED_COVID_SIZES = {"train": 4420, "validation": 2140, "test": 2140}
EXPECTED_LIAR_SIZES = {"train": 10269, "validation": 1284, "test": 1283}

SPLIT_NAMES = ("train", "validation", "test")

POLARITY_BINS = 21
SUBJECTIVITY_BINS = 11


@dataclass
class NewsExample:
    id: str
    text: str
    label: int
    subject: str = ""
    speaker: str = ""
    job: str = ""
    state: str = ""
    party: str = ""
    context: str = ""
    credit_history: tuple | None = None  # (barely_true, false, half_true, mostly_true, pants_fire)


@dataclass
class DatasetBundle:
    train: list
    validation: list
    test: list
    class_names: tuple
    kind: str                            # binary-long | multiclass-short

    def split(self, name: str) -> list:
        if name not in SPLIT_NAMES:
            raise FormatError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, "validation" if name == "validation" else name)


def _find_split_file(dir_path, name: str) -> Path:
    base = Path(dir_path)
    for candidate in (f"{name}.tsv", f"{name}.csv", f"{name}.txt", name):
        p = base / candidate
        if p.is_file():
            return p
    raise FileNotFoundError(
        f"{base}: no {name} split file (looked for {name}.tsv, {name}.csv, {name}.txt)"
    )


def _warn_sizes(kind: str, observed: dict, expected: dict):
    for split, n in observed.items():
        want = expected[split]
        if n != want:
            warnings.warn(
                f"{kind} {split} split has {n} examples, expected {want}",
                stacklevel=3,
            )


def _warn_overlaps(splits: dict):
    names = list(splits)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ids_a = {ex.id for ex in splits[a]}
            shared = sorted(ids_a.intersection(ex.id for ex in splits[b]))
            if shared:
                warnings.warn(
                    f"splits {a} and {b} share {len(shared)} ids: {', '.join(shared[:20])}",
                    stacklevel=3,
                )


def _read_covid_file(path: Path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        header_line = f.readline()
        if not header_line:
            raise FormatError(f"{path}: empty file")
        delim = "\t" if "\t" in header_line else ","
        header = [c.strip().casefold() for c in next(csv.reader([header_line], delimiter=delim))]
        if header != ["id", "tweet", "label"]:
            raise FormatError(f"{path}: expected header id,tweet,label, got {header}")
        out = []
        reader = csv.reader(f, delimiter=delim)
        for row in reader:
            lineno = reader.line_num + 1  # header consumed before the reader
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path} line {lineno}: expected 3 columns, got {len(row)}")
            ident, text, raw_label = row[0].strip(), row[1], row[2].strip().casefold()
            if raw_label not in COVID_CLASSES:
                raise FormatError(f"{path} line {lineno}: unknown label {row[2].strip()!r}")
            out.append(NewsExample(ident, text, COVID_CLASSES.index(raw_label)))
        return out


def load_covid(dir_path) -> DatasetBundle:
    """Binary-long bundle: real -> 0, fake -> 1.

    Split sizes are checked against the published statistics and produce
    warnings, never errors.
    """
    splits = {name: _read_covid_file(_find_split_file(dir_path, name))
              for name in SPLIT_NAMES}
    _warn_sizes("covid", {k: len(v) for k, v in splits.items()}, EXPECTED_COVID_SIZES)
    _warn_overlaps(splits)
    return DatasetBundle(splits["train"], splits["validation"], splits["test"],
                         COVID_CLASSES, "binary-long")


_CREDIT_FIELDS = ("barely-true", "false", "half-true", "mostly-true", "pants-fire")


def _read_liar_file(path: Path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != 14:
                raise FormatError(
                    f"{path} line {lineno}: expected 14 tab-separated columns, got {len(row)}"
                )
            raw_label = row[1].strip().casefold()
            if raw_label not in LIAR_CLASSES:
                raise FormatError(f"{path} line {lineno}: unknown label {row[1].strip()!r}")
            credit = []
            for name, cell in zip(_CREDIT_FIELDS, row[8:13]):
                try:
                    value = int(cell.strip())
                except ValueError:
                    raise FormatError(
                        f"{path} line {lineno}: {name} credit count {cell.strip()!r} "
                        f"is not an integer"
                    ) from None
                if value < 0:
                    raise FormatError(
                        f"{path} line {lineno}: {name} credit count {value} is negative"
                    )
                credit.append(value)
            out.append(NewsExample(
                id=row[0].strip(),
                text=row[2],
                label=LIAR_CLASSES.index(raw_label),
                subject=row[3].strip(),
                speaker=row[4].strip(),
                job=row[5].strip(),
                state=row[6].strip(),
                party=row[7].strip(),
                context=row[13].strip(),
                credit_history=tuple(credit),
            ))
    return out


def load_liar(dir_path) -> DatasetBundle:
    """Multiclass-short bundle with the 6-way label scale 0..5."""
    splits = {name: _read_liar_file(_find_split_file(dir_path, name))
              for name in SPLIT_NAMES}
    _warn_sizes("liar", {k: len(v) for k, v in splits.items()}, EXPECTED_LIAR_SIZES)
    _warn_overlaps(splits)
    return DatasetBundle(splits["train"], splits["validation"], splits["test"],
                         LIAR_CLASSES, "multiclass-short")


# ---------------------------------------------------------------------------
# corpus reporting


@dataclass
class CorpusReport:
    class_names: tuple
    doc_counts: dict                    # class index -> documents
    top_tokens: dict                    # class index -> [(token, count)] length <= k
    polarity_hist: dict                 # class index -> (21,) int64 over [-1, 1]
    subjectivity_hist: dict             # class index -> (11,) int64 over [0, 1]


def _bin_index(value: float, low: float, high: float, bins: int) -> int:
    idx = int((value - low) / (high - low) * bins)
    return min(max(idx, 0), bins - 1)


def corpus_report(split, stopwords, lex, k: int = 10, class_names=None) -> CorpusReport:
    """Per-class token frequencies and sentiment histograms for one split."""
    if not split:
        raise FormatError("corpus report over an empty split")
    labels = sorted({ex.label for ex in split})
    if class_names is None:
        class_names = tuple(f"class{c}" for c in range(max(labels) + 1))
    counters = {c: Counter() for c in labels}
    pol = {c: np.zeros(POLARITY_BINS, dtype=np.int64) for c in labels}
    subj = {c: np.zeros(SUBJECTIVITY_BINS, dtype=np.int64) for c in labels}
    docs = {c: 0 for c in labels}
    for ex in split:
        docs[ex.label] += 1
        tokens = tokenize(ex.text)
        counters[ex.label].update(t for t in tokens if t not in stopwords.words)
        p, s = polarity_subjectivity(ex.text, lex)
        pol[ex.label][_bin_index(p, -1.0, 1.0, POLARITY_BINS)] += 1
        subj[ex.label][_bin_index(s, 0.0, 1.0, SUBJECTIVITY_BINS)] += 1
    top = {
        c: sorted(counters[c].items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        for c in labels
    }
    return CorpusReport(tuple(class_names), docs, top, pol, subj)


def write_corpus_report(report: CorpusReport, out_dir):
    """freq_<class>.csv, polarity_hist.csv, subjectivity_hist.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c, rows in sorted(report.top_tokens.items()):
        name = report.class_names[c]
        with open(out / f"freq_{name}.csv", "w", encoding="utf-8", newline="") as f:
            f.write("token,count\n")
            for token, count in rows:
                f.write(f"{token},{count}\n")
    _write_hist(out / "polarity_hist.csv", report, report.polarity_hist,
                -1.0, 1.0, POLARITY_BINS)
    _write_hist(out / "subjectivity_hist.csv", report, report.subjectivity_hist,
                0.0, 1.0, SUBJECTIVITY_BINS)


def _write_hist(path, report, hists, low, high, bins):
    width = (high - low) / bins
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("class,bin_low,bin_high,count\n")
        for c, hist in sorted(hists.items()):
            name = report.class_names[c]
            for i in range(bins):
                f.write(f"{name},{low + i * width:.6f},{low + (i + 1) * width:.6f},{int(hist[i])}\n")
