import shutil

import numpy as np
import pytest
import torch
from transformers import AutoModel, AutoTokenizer

from capsnews.embeddings import PrecomputedStore, load_precomputed, write_precomputed_store
from capsnews_exporter import ExportError, ExportJob, export, read_manifest, verify
from capsnews_exporter.cli import entry
from capsnews_exporter.export import read_examples, tokenizer_content_hash


def job_for(model_dir, corpus, out, split="test", **over):
    kw = dict(model_id=str(model_dir), dataset_path=str(corpus), dataset_kind="covid",
              split=split, store_path=str(out), max_len=32)
    kw.update(over)
    return ExportJob(**kw)


@pytest.fixture(scope="module")
def exported(tiny_model_dir, corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("store") / "test.xseq"
    report = export(job_for(tiny_model_dir, corpus_dir, out))
    return out, report


# --- export ------------------------------------------------------------------

def test_record_count_matches_split(exported, corpus_dir):
    out, report = exported
    ids = [i for i, _ in read_examples(corpus_dir, "covid", "test")]
    assert report.examples == len(ids) == 12
    with PrecomputedStore(out) as store:
        assert sorted(store.ids()) == sorted(ids)


def test_dim_matches_model_config(exported, tiny_model_dir):
    out, report = exported
    expect = AutoModel.from_pretrained(tiny_model_dir).config.hidden_size
    assert report.dim == expect
    with PrecomputedStore(out) as store:
        assert store.dim == expect


def test_manifest_contents(exported, tiny_model_dir):
    out, report = exported
    manifest = read_manifest(report.manifest)
    assert manifest["model"] == str(tiny_model_dir)
    assert int(manifest["dim"]) == report.dim
    assert int(manifest["examples"]) == report.examples
    assert int(manifest["max_len"]) == 32
    tok = AutoTokenizer.from_pretrained(tiny_model_dir)
    assert manifest["tokenizer_hash"] == tokenizer_content_hash(tok)


def test_records_match_direct_forward_bitwise(tiny_model_dir, corpus_dir, tmp_path):
    out = tmp_path / "single.xseq"
    export(job_for(tiny_model_dir, corpus_dir, out, batch_size=1))
    tok = AutoTokenizer.from_pretrained(tiny_model_dir)
    model = AutoModel.from_pretrained(tiny_model_dir)
    model.eval()
    pairs = read_examples(corpus_dir, "covid", "test")
    for example_id, text in pairs[:4]:
        enc = tok([text], truncation=True, max_length=32, return_tensors="pt")
        with torch.no_grad():
            ref = model(**enc).last_hidden_state[0].numpy()
        got = load_precomputed(out, example_id)
        assert got.example_id == example_id
        assert np.array_equal(got.matrix.data, ref.astype(np.float64))


def test_reexport_is_byte_identical(tiny_model_dir, corpus_dir, tmp_path):
    a, b = tmp_path / "a.xseq", tmp_path / "b.xseq"
    export(job_for(tiny_model_dir, corpus_dir, a))
    export(job_for(tiny_model_dir, corpus_dir, b))
    assert a.read_bytes() == b.read_bytes()


def test_subwords_are_not_merged(tiny_model_dir, tmp_path):
    # "microchipped" is absent from the vocab but built from three pieces
    data = tmp_path / "data"
    data.mkdir()
    (data / "train.csv").write_text(
        "id,tweet,label\nx-1,microchipped,fake\n", encoding="utf-8")
    out = tmp_path / "train.xseq"
    export(job_for(tiny_model_dir, data, out, split="train"))
    seq = load_precomputed(out, "x-1")
    assert seq.matrix.data.shape[0] == 5  # [CLS] micro ##chip ##ped [SEP]


def test_long_text_truncates_to_max_len(tiny_model_dir, tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    (data / "train.csv").write_text(
        "id,tweet,label\nx-1," + " ".join(["covid"] * 100) + ",real\n", encoding="utf-8")
    out = tmp_path / "train.xseq"
    export(job_for(tiny_model_dir, data, out, split="train", max_len=16))
    assert load_precomputed(out, "x-1").matrix.data.shape[0] == 16


def test_tokenizer_model_mismatch_aborts(tiny_model_dir, corpus_dir, tmp_path):
    bad = tmp_path / "bad_model"
    shutil.copytree(tiny_model_dir, bad)
    # tokenizer.json shadows vocab.txt, so drop it to make the edit count
    (bad / "tokenizer.json").unlink(missing_ok=True)
    vocab = (bad / "vocab.txt").read_text(encoding="utf-8")
    (bad / "vocab.txt").write_text(vocab + "extraone\nextratwo\n", encoding="utf-8")
    with pytest.raises(ExportError, match="mismatch"):
        export(job_for(bad, corpus_dir, tmp_path / "x.xseq"))


def test_bad_job_parameters(tiny_model_dir, corpus_dir, tmp_path):
    with pytest.raises(ExportError, match="max_len"):
        export(job_for(tiny_model_dir, corpus_dir, tmp_path / "x.xseq", max_len=0))


# --- dataset reading ----------------------------------------------------------

def test_read_examples_liar_columns(tmp_path):
    row = ["li-1", "true", "the statement text", "topic", "who", "", "", "party",
           "1", "2", "3", "4", "0", "ctx"]
    (tmp_path / "train.tsv").write_text("\t".join(row) + "\n", encoding="utf-8")
    assert read_examples(tmp_path, "liar", "train") == [("li-1", "the statement text")]


def test_read_examples_rejects_duplicates(tmp_path):
    (tmp_path / "train.csv").write_text(
        "id,tweet,label\na,one,real\na,two,fake\n", encoding="utf-8")
    with pytest.raises(ExportError, match="duplicate"):
        read_examples(tmp_path, "covid", "train")


def test_read_examples_rejects_empty_and_bad_header(tmp_path):
    (tmp_path / "train.csv").write_text("id,tweet,label\n", encoding="utf-8")
    with pytest.raises(ExportError, match="empty"):
        read_examples(tmp_path, "covid", "train")
    (tmp_path / "val.csv").write_text("tweet,id,label\na,b,real\n", encoding="utf-8")
    with pytest.raises(ExportError, match="header"):
        read_examples(tmp_path, "covid", "val")
    with pytest.raises(ExportError, match="kind"):
        read_examples(tmp_path, "imdb", "train")
    with pytest.raises(FileNotFoundError):
        read_examples(tmp_path, "covid", "missing")


# --- verify --------------------------------------------------------------------

def test_verify_complete_store(exported, corpus_dir):
    out, _ = exported
    report = verify(out, corpus_dir, "covid", "test")
    assert report.ok
    assert report.summary() == "OK, 12 records"


def test_verify_lists_missing_ids(exported, corpus_dir, tmp_path):
    out, _ = exported
    grown = tmp_path / "grown"
    shutil.copytree(corpus_dir, grown)
    with open(grown / "test.csv", "a", encoding="utf-8") as f:
        f.write("te-9999,covid report today,real\n")
    report = verify(out, grown, "covid", "test")
    assert not report.ok
    assert any("missing" in p and "te-9999" in p for p in report.problems)


def test_verify_lists_unknown_ids(exported, corpus_dir, tmp_path):
    out, _ = exported
    shrunk = tmp_path / "shrunk"
    shutil.copytree(corpus_dir, shrunk)
    lines = (shrunk / "test.csv").read_text(encoding="utf-8").splitlines()
    dropped = lines[1].split(",")[0]
    (shrunk / "test.csv").write_text("\n".join(lines[:1] + lines[2:]) + "\n",
                                     encoding="utf-8")
    report = verify(out, shrunk, "covid", "test")
    assert not report.ok
    assert any("unknown" in p and dropped in p for p in report.problems)


def test_verify_flags_truncated_store(exported, corpus_dir, tmp_path):
    out, _ = exported
    clipped = tmp_path / "clipped.xseq"
    clipped.write_bytes(out.read_bytes()[:-12])
    report = verify(clipped, corpus_dir, "covid", "test")
    assert not report.ok
    assert "unreadable" in report.problems[0]


def test_verify_flags_nonfinite_and_overlong_records(corpus_dir, tmp_path):
    pairs = read_examples(corpus_dir, "covid", "test")
    rng = np.random.default_rng(0)
    records = []
    for i, (example_id, _) in enumerate(pairs):
        mat = rng.standard_normal((40 if i == 0 else 4, 8)).astype(np.float32)
        if i == 1:
            mat[0, 0] = np.nan
        records.append((example_id, mat))
    store = tmp_path / "bad.xseq"
    write_precomputed_store(store, 8, records)
    report = verify(store, corpus_dir, "covid", "test", max_len=32)
    assert not report.ok
    assert any("length" in p and pairs[0][0] in p for p in report.problems)
    assert any("non-finite" in p and pairs[1][0] in p for p in report.problems)


def test_verify_checks_manifest_consistency(exported, corpus_dir, tmp_path):
    out, report = exported
    moved = tmp_path / "moved.xseq"
    moved.write_bytes(out.read_bytes())
    manifest_text = report.manifest.read_text(encoding="utf-8")
    (tmp_path / "moved.xseq.manifest").write_text(
        manifest_text.replace("dim = 32", "dim = 64"), encoding="utf-8")
    rep = verify(moved, corpus_dir, "covid", "test")
    assert not rep.ok
    assert any("manifest dim" in p for p in rep.problems)


# --- command line ---------------------------------------------------------------

def test_cli_export_and_verify(tiny_model_dir, corpus_dir, tmp_path, capsys):
    out = tmp_path / "cli.xseq"
    rc = entry(["export", "--model", str(tiny_model_dir), "--dataset", str(corpus_dir),
                "--kind", "covid", "--split", "validation", "--out", str(out),
                "--max-len", "32"])
    assert rc == 0
    assert "12 records" in capsys.readouterr().out
    rc = entry(["verify", "--store", str(out), "--dataset", str(corpus_dir),
                "--kind", "covid", "--split", "validation"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "OK, 12 records"


def test_cli_verify_failure_is_exit_3(tiny_model_dir, corpus_dir, tmp_path, capsys):
    out = tmp_path / "cli.xseq"
    entry(["export", "--model", str(tiny_model_dir), "--dataset", str(corpus_dir),
           "--kind", "covid", "--split", "test", "--out", str(out)])
    capsys.readouterr()
    clipped = tmp_path / "clipped.xseq"
    clipped.write_bytes(out.read_bytes()[:-4])
    rc = entry(["verify", "--store", str(clipped), "--dataset", str(corpus_dir),
                "--kind", "covid", "--split", "test"])
    assert rc == 3
    assert "unreadable" in capsys.readouterr().out


def test_cli_bad_model_path_is_exit_2(corpus_dir, tmp_path, capsys):
    rc = entry(["export", "--model", str(tmp_path / "nope"), "--dataset",
                str(corpus_dir), "--kind", "covid", "--split", "test",
                "--out", str(tmp_path / "x.xseq")])
    assert rc == 2


def test_cli_missing_dataset_is_exit_2(tiny_model_dir, tmp_path):
    rc = entry(["export", "--model", str(tiny_model_dir), "--dataset",
                str(tmp_path / "absent"), "--kind", "covid", "--split", "test",
                "--out", str(tmp_path / "x.xseq")])
    assert rc == 2
