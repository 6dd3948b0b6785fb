import re

import numpy as np
import pytest

import synth
from capsnews.cli import entry
from capsnews.models import load_model

SMALL_COUNTS = {"train": 60, "validation": 20, "test": 20}


def covid_config(tmp_path, data_dir, out_dir, extra=()):
    lines = [
        "# small end-to-end run",
        "dataset.kind = covid",
        f"dataset.path = {data_dir}",
        f"out = {out_dir}",
        "seed = 3",
        "vocab.size = 300",
        "model.embed_dim = 12",
        "model.max_len = 12",
        "model.filters = 4",
        "model.filter_widths = 2 3",
        "model.hidden_dense = 8",
        "model.dropout = 0.2",
        "train.batch_size = 10",
        "train.max_epochs = 2",
        "train.patience = 2",
        *extra,
    ]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def liar_config(tmp_path, data_dir, out_dir):
    lines = [
        "dataset.kind = liar",
        f"dataset.path = {data_dir}",
        f"out = {out_dir}",
        "seed = 5",
        "vocab.size = 300",
        "model.embed_dim = 8",
        "model.max_len = 8",
        "model.hidden_dense = 8",
        "model.dropout = 0.2",
        "train.batch_size = 10",
        "train.max_epochs = 1",
        "train.patience = 1",
    ]
    path = tmp_path / "liar.cfg"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def covid_run(tmp_path_factory):
    """One trained covid checkpoint shared by the read-only CLI tests."""
    base = tmp_path_factory.mktemp("covid_run")
    data = synth.write_covid_dataset(base / "data", SMALL_COUNTS, seed=1)
    out = base / "out"
    cfg = covid_config(base, data, out)
    assert entry(["train", "--config", str(cfg)]) == 0
    return {"cfg": cfg, "out": out, "data": data, "base": base}


@pytest.fixture(scope="module")
def liar_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("liar_run")
    data = synth.write_liar_dataset(base / "data", SMALL_COUNTS, seed=2)
    out = base / "out"
    cfg = liar_config(base, data, out)
    assert entry(["train", "--config", str(cfg)]) == 0
    return {"cfg": cfg, "out": out, "data": data, "base": base}


# --- train -----------------------------------------------------------------

def test_train_writes_artifacts(covid_run):
    out = covid_run["out"]
    for name in ("model.xcap", "history.csv", "metrics_validation.csv", "metrics_test.csv"):
        assert (out / name).is_file(), name
    history = (out / "history.csv").read_text(encoding="utf-8").splitlines()
    assert history[0] == "epoch,train_loss,val_metric,val_accuracy"
    assert len(history) >= 2


def test_train_missing_dataset_path(tmp_path, capsys):
    cfg = covid_config(tmp_path, tmp_path / "nope", tmp_path / "out")
    rc = entry(["train", "--config", str(cfg)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "nope" in err


def test_train_routing_override_lands_in_checkpoint(tmp_path):
    data = synth.write_covid_dataset(tmp_path / "data", SMALL_COUNTS, seed=1)
    out = tmp_path / "out"
    cfg = covid_config(tmp_path, data, out, extra=["train.max_epochs = 1"])
    rc = entry(["train", "--config", str(cfg), "--routing-iterations", "2"])
    assert rc == 0
    model = load_model(out / "model.xcap")
    assert model.config.routing_iterations == 2


def test_train_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("dataset.kind = covid\nmodel.wheels = 4\n", encoding="utf-8")
    rc = entry(["train", "--config", str(cfg)])
    assert rc == 2
    assert "model.wheels" in capsys.readouterr().err


def test_train_bad_set_values(tmp_path, capsys):
    data = synth.write_covid_dataset(tmp_path / "data", SMALL_COUNTS, seed=1)
    cfg = covid_config(tmp_path, data, tmp_path / "out")
    assert entry(["train", "--config", str(cfg), "--set", "bogus.key=1"]) == 2
    assert entry(["train", "--config", str(cfg), "--set", "train.batch_size=abc"]) == 2
    assert entry(["train", "--config", str(cfg), "--set", "no-equals-sign"]) == 2


def test_train_determinism_across_runs(tmp_path):
    data = synth.write_covid_dataset(tmp_path / "data", SMALL_COUNTS, seed=1)
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / f"out_{tag}"
        cfg = covid_config(tmp_path, data, out, extra=["train.max_epochs = 1"])
        assert entry(["train", "--config", str(cfg)]) == 0
        blobs.append((
            (out / "model.xcap").read_bytes(),
            (out / "metrics_test.csv").read_bytes(),
            (out / "history.csv").read_bytes(),
        ))
    assert blobs[0] == blobs[1]


# --- eval ------------------------------------------------------------------

def test_eval_prints_exact_columns(covid_run, tmp_path, capsys):
    rc = entry(["eval", str(covid_run["out"] / "model.xcap"),
                "--config", str(covid_run["cfg"]),
                "--out", str(tmp_path / "eval_out"), "--split", "test"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "Acc Prec Rec F1"
    assert re.fullmatch(r"[01]\.\d{4} [01]\.\d{4} [01]\.\d{4} [01]\.\d{4}", lines[1])
    assert (tmp_path / "eval_out" / "metrics_test.csv").is_file()


def test_eval_reproduces_training_metrics(covid_run, tmp_path):
    eval_out = tmp_path / "replay"
    rc = entry(["eval", str(covid_run["out"] / "model.xcap"),
                "--config", str(covid_run["cfg"]),
                "--out", str(eval_out), "--split", "val"])
    assert rc == 0
    trained = (covid_run["out"] / "metrics_validation.csv").read_bytes()
    replayed = (eval_out / "metrics_validation.csv").read_bytes()
    assert trained == replayed


def test_eval_vocab_hash_mismatch(covid_run, tmp_path, capsys):
    rc = entry(["eval", str(covid_run["out"] / "model.xcap"),
                "--config", str(covid_run["cfg"]),
                "--out", str(tmp_path / "x"),
                "--set", "vocab.size=3"])
    assert rc == 3
    err = capsys.readouterr().err
    assert "hash mismatch" in err
    assert len(re.findall(r"[0-9a-f]{64}", err)) >= 2


def test_eval_empty_split(tmp_path, covid_run, capsys):
    # same train split as the checkpoint (hashes must agree), empty test file
    import shutil
    data = tmp_path / "data"
    shutil.copytree(covid_run["data"], data)
    (data / "test.csv").write_text("id,tweet,label\n", encoding="utf-8")
    cfg = covid_config(tmp_path, data, tmp_path / "out")
    rc = entry(["eval", str(covid_run["out"] / "model.xcap"),
                "--config", str(cfg), "--out", str(tmp_path / "out"),
                "--split", "test"])
    assert rc == 2
    assert "empty" in capsys.readouterr().err


def test_eval_missing_checkpoint(covid_run, tmp_path, capsys):
    rc = entry(["eval", str(tmp_path / "ghost.xcap"),
                "--config", str(covid_run["cfg"]), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "ghost.xcap" in capsys.readouterr().err


# --- predict ---------------------------------------------------------------

def test_predict_output_shape_and_determinism(covid_run, capsys):
    argv = ["predict", str(covid_run["out"] / "model.xcap"),
            "vaccine hoax exposed by secret plot"]
    assert entry(argv) == 0
    first = capsys.readouterr().out
    lines = first.strip().splitlines()
    assert lines[0] in ("real", "fake")
    assert re.fullmatch(r"real=0\.\d{4} fake=0\.\d{4}", lines[1])
    assert entry(argv) == 0
    assert capsys.readouterr().out == first


def test_predict_unknown_checkpoint(tmp_path, capsys):
    rc = entry(["predict", str(tmp_path / "none.xcap"), "text"])
    assert rc == 2
    assert "none.xcap" in capsys.readouterr().err


def test_predict_mlp_without_credit_warns(liar_run, capsys):
    rc = entry(["predict", str(liar_run["out"] / "model.xcap"),
                "the budget has grown every year"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "credit" in captured.err
    lines = captured.out.strip().splitlines()
    assert lines[0] in ("pants-fire", "false", "barely-true", "half-true",
                        "mostly-true", "true")
    assert len(lines[1].split()) == 6


def test_predict_mlp_with_credit(liar_run, capsys):
    rc = entry(["predict", str(liar_run["out"] / "model.xcap"),
                "the budget has grown every year", "--credit", "1 2 3 4 0"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "warning" not in captured.err


# --- analyze ---------------------------------------------------------------

def test_analyze_writes_reports_and_is_repeatable(covid_run, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"an_{tag}"
        rc = entry(["analyze", "--config", str(covid_run["cfg"]),
                    "--out", str(out), "--split", "train"])
        assert rc == 0
        outs.append(out)
    for name in ("freq_real.csv", "freq_fake.csv", "polarity_hist.csv",
                 "subjectivity_hist.csv"):
        a, b = outs[0] / name, outs[1] / name
        assert a.is_file(), name
        assert a.read_bytes() == b.read_bytes()
    # default k caps the frequency tables at 10 rows
    for name in ("freq_real.csv", "freq_fake.csv"):
        lines = (outs[0] / name).read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) <= 11


def test_analyze_k_flag(covid_run, tmp_path):
    out = tmp_path / "an_k"
    rc = entry(["analyze", "--config", str(covid_run["cfg"]),
                "--out", str(out), "--split", "train", "--k", "3"])
    assert rc == 0
    lines = (out / "freq_fake.csv").read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 4


# --- sweep -----------------------------------------------------------------

def test_sweep_emits_rows_per_r(tmp_path, capsys):
    data = synth.write_covid_dataset(tmp_path / "data", SMALL_COUNTS, seed=1)
    out = tmp_path / "sweep_out"
    cfg = covid_config(tmp_path, data, out, extra=["train.max_epochs = 1"])
    rc = entry(["sweep-routing", "--config", str(cfg), "--r-values", "1", "2"])
    assert rc == 0
    csv_lines = (out / "sweep.csv").read_text(encoding="utf-8").strip().splitlines()
    assert csv_lines[0] == "r,val_metric,test_metric"
    assert len(csv_lines) == 3
    assert csv_lines[1].startswith("1,")
    assert csv_lines[2].startswith("2,")
    stdout = capsys.readouterr().out
    assert "r,val_metric,test_metric" in stdout
    assert (out / "r1" / "model.xcap").is_file()
    assert (out / "r2" / "model.xcap").is_file()


def test_sweep_rejects_bad_r(tmp_path, capsys):
    data = synth.write_covid_dataset(tmp_path / "data", SMALL_COUNTS, seed=1)
    cfg = covid_config(tmp_path, data, tmp_path / "out")
    rc = entry(["sweep-routing", "--config", str(cfg), "--r-values", "0"])
    assert rc == 2
    assert ">= 1" in capsys.readouterr().err
