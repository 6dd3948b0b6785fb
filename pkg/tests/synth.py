"""Synthetic dataset builders for end-to-end tests.

The corpora are written to disk in the real file formats and carry
deliberately learnable signal: marker vocabulary for the binary task,
credit-history profiles for the 6-way task.  Everything is seeded.
"""

from pathlib import Path

import numpy as np

FAKE_MARKERS = [
    "hoax", "miracle", "cure", "secret", "plot", "chips", "exposed", "shocking",
    "banned", "truth", "coverup", "scam", "poison", "magnets", "5g", "implant",
]
REAL_MARKERS = [
    "cases", "hospital", "vaccine", "doses", "study", "official", "health",
    "region", "clinic", "trial", "data", "guidance", "ministry", "report",
    "doctors", "update",
]
FILLER = [
    "people", "today", "new", "says", "about", "after", "against", "local",
    "covid", "virus", "week", "city", "public", "state", "news", "more",
]
URLS = ["https://example.org/a", "http://news.test/read", "www.info.test/x"]


def _covid_text(rng, label: int) -> str:
    markers = FAKE_MARKERS if label == 1 else REAL_MARKERS
    n = int(rng.integers(8, 24))
    words = []
    for _ in range(n):
        roll = rng.random()
        if roll < 0.45:
            words.append(str(rng.choice(markers)))
        elif roll < 0.9:
            words.append(str(rng.choice(FILLER)))
        else:
            # cross-talk keeps the task from being a pure lookup
            other = REAL_MARKERS if label == 1 else FAKE_MARKERS
            words.append(str(rng.choice(other)))
    if rng.random() < 0.2:
        words.append(str(rng.choice(URLS)))
    if rng.random() < 0.1:
        words[0] = words[0].upper()
    return " ".join(words)


def write_covid_dataset(dir_path, counts, seed: int = 0):
    """counts: {'train': n, 'validation': n, 'test': n}; returns the dir."""
    rng = np.random.default_rng(seed)
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    for split, n in counts.items():
        with open(d / f"{split}.csv", "w", encoding="utf-8", newline="") as f:
            f.write("id,tweet,label\n")
            for i in range(n):
                label = 1 if rng.random() < 0.48 else 0
                text = _covid_text(rng, label)
                if "," in text:
                    text = f'"{text}"'
                f.write(f"cv-{split[:2]}-{i:05d},{text},{'fake' if label else 'real'}\n")
    return d


LIAR_LABELS = ("pants-fire", "false", "barely-true", "half-true", "mostly-true", "true")
# roughly the published shape: smallest class pants-fire, largest true (~21%)
LIAR_WEIGHTS = np.array([0.08, 0.18, 0.17, 0.19, 0.17, 0.21])

# credit slot order: barely-true, false, half-true, mostly-true, pants-fire
_SLOT_LABEL = np.array([2, 1, 3, 4, 0])

TOPICS = ["economy", "health-care", "taxes", "elections", "immigration", "education"]
SPEAKERS = [f"speaker-{i}" for i in range(40)]
PARTIES = ["republican", "democrat", "independent", "none"]
STATES = ["texas", "ohio", "florida", "virginia", "", "oregon"]
JOBS = ["senator", "governor", "analyst", "", "mayor"]
CONTEXTS = ["a debate", "a rally", "an interview", "a press release", "a tv ad"]

STATEMENT_STOCK = [
    "the", "state", "budget", "has", "grown", "every", "year", "since", "people",
    "jobs", "numbers", "show", "that", "our", "plan", "will", "cut", "costs",
    "federal", "spending", "on", "schools", "roads", "record", "highest", "lowest",
    "in", "history", "percent", "of", "families", "pay", "more", "than", "under",
]
HYPERBOLE = ["outrageous", "disaster", "catastrophic", "lie", "absurd", "fraud"]
MEASURED = ["roughly", "about", "estimated", "according", "reported", "audited"]


def _liar_statement(rng, label: int) -> str:
    n = int(rng.integers(12, 25))
    words = [str(rng.choice(STATEMENT_STOCK)) for _ in range(n)]
    flavor = HYPERBOLE if label <= 1 else MEASURED if label >= 4 else None
    if flavor is not None and rng.random() < 0.7:
        words[int(rng.integers(n))] = str(rng.choice(flavor))
    return " ".join(words)


def _liar_credit(rng, label: int):
    # speakers tend to repeat: counts pile up on slots near the true label
    base = rng.poisson(1.5, size=5)
    boost = np.exp(-0.8 * np.abs(_SLOT_LABEL - label)) * 14
    credit = base + rng.poisson(boost)
    if label == 5:
        credit = rng.poisson(1.0, size=5)   # honest speakers: thin history
    return tuple(int(c) for c in credit)


def write_liar_dataset(dir_path, counts, seed: int = 0):
    rng = np.random.default_rng(seed)
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    for split, n in counts.items():
        with open(d / f"{split}.tsv", "w", encoding="utf-8", newline="") as f:
            for i in range(n):
                label = int(rng.choice(6, p=LIAR_WEIGHTS))
                credit = _liar_credit(rng, label)
                cols = [
                    f"li-{split[:2]}-{i:05d}",
                    LIAR_LABELS[label],
                    _liar_statement(rng, label),
                    str(rng.choice(TOPICS)),
                    str(rng.choice(SPEAKERS)),
                    str(rng.choice(JOBS)),
                    str(rng.choice(STATES)),
                    str(rng.choice(PARTIES)),
                    *[str(c) for c in credit],
                    str(rng.choice(CONTEXTS)),
                ]
                f.write("\t".join(cols) + "\n")
    return d


def write_overfit_dataset(dir_path, seed: int = 0):
    """64 trivially separable examples in covid file format, all in train;
    validation/test reuse the same rows under fresh ids."""
    rng = np.random.default_rng(seed)
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(64):
        label = i % 2
        markers = FAKE_MARKERS if label else REAL_MARKERS
        text = " ".join(str(rng.choice(markers)) for _ in range(6))
        rows.append((text, "fake" if label else "real"))
    for split in ("train", "validation", "test"):
        with open(d / f"{split}.csv", "w", encoding="utf-8", newline="") as f:
            f.write("id,tweet,label\n")
            for i, (text, label) in enumerate(rows):
                f.write(f"of-{split[:2]}-{i:03d},{text},{label}\n")
    return d
