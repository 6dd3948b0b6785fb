import csv
import random

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]

FAKE_WORDS = ["hoax", "miracle", "cure", "secret", "plot", "exposed", "banned", "scam"]
REAL_WORDS = ["cases", "hospital", "vaccine", "doses", "study", "official", "clinic", "data"]
FILLER = ["the", "covid", "virus", "today", "people", "about", "report", "new"]
# pieces that only combine into longer words, to exercise subword splitting
PIECES = ["micro", "##chip", "##ped"]

VOCAB = SPECIALS + FAKE_WORDS + REAL_WORDS + FILLER + PIECES


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized BERT checkpoint saved to disk."""
    path = tmp_path_factory.mktemp("model")
    (path / "vocab.txt").write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(path / "vocab.txt"))
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
                        num_attention_heads=4, intermediate_size=64,
                        max_position_embeddings=64)
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


def write_corpus(dir_path, counts, seed=0):
    """Covid-layout splits whose labels are fully decidable from word choice."""
    dir_path.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    for split, n in counts.items():
        with open(dir_path / f"{split}.csv", "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "tweet", "label"])
            for i in range(n):
                fake = rng.random() < 0.5
                markers = FAKE_WORDS if fake else REAL_WORDS
                length = rng.randint(6, 12)
                words = [rng.choice(markers if rng.random() < 0.5 else FILLER)
                         for _ in range(length)]
                words[0] = rng.choice(markers)  # at least one marker
                writer.writerow([f"{split[:2]}-{i:04d}", " ".join(words),
                                 "fake" if fake else "real"])


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus")
    write_corpus(path, {"train": 40, "validation": 12, "test": 12}, seed=1)
    return path
