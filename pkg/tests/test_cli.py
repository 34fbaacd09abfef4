import json

import pytest

from divkey.cli import main
from divkey.corpus import DatasetRecord, dump_jsonl, ingest, load_checkpoint, load_jsonl
from divkey.model import ModelConfig
from divkey.synthetic import make_corpus
from divkey.trainer import dataset_loss, new_model

SMALL_FLAGS = ["--d-in", "6", "--d-h", "8", "--gcn-layers", "2", "--gru-layers", "2", "--batch-size", "4"]


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.jsonl"
    dump_jsonl(make_corpus(n_docs=8, vocab_size=30, seed=3), path)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_file):
    out = tmp_path_factory.mktemp("ckpt") / "m.ckpt"
    log = out.with_suffix(".log")
    argv = ["train", "--train", str(corpus_file), "--out", str(out), "--log", str(log), "--max-steps", "40", "--clip", "1.0"]
    assert main(argv + SMALL_FLAGS) == 0
    return out, log, argv


def test_missing_train_flag_is_usage_error(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "x")]) == 2
    assert "--train" in capsys.readouterr().err
    assert main(["train", "--train", "a", "--out", "b", "--bogus"]) == 2
    assert main([]) == 2


def test_train_writes_checkpoint_and_learns(trained, corpus_file):
    out, log, _ = trained
    ck = load_checkpoint(out)
    assert ck.step == 40
    assert len(log.read_text().splitlines()) == 40
    ds = ingest(load_jsonl(corpus_file))
    fresh = new_model(ds, ModelConfig(d_in=6, d_h=8, gcn_layers=2, gru_layers=2), seed=0)
    assert dataset_loss(ck.model, ds.documents) < dataset_loss(fresh, ds.documents)


def test_same_seed_same_bytes(trained, tmp_path):
    out, _, argv = trained
    again = tmp_path / "again.ckpt"
    argv = list(argv)
    argv[argv.index("--out") + 1] = str(again)
    argv[argv.index("--log") + 1] = str(tmp_path / "again.log")
    assert main(argv + SMALL_FLAGS) == 0
    assert again.read_bytes() == out.read_bytes()


def test_config_file_is_overridden_by_flags(tmp_path, corpus_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("d_h = 10\nmax_steps = 2\nuse_context = false\n")
    out = tmp_path / "c.ckpt"
    argv = ["train", "--config", str(cfg), "--train", str(corpus_file), "--out", str(out), "--log", str(tmp_path / "l")]
    assert main(argv + SMALL_FLAGS) == 0
    ck = load_checkpoint(out)
    assert (ck.model.config.d_h, ck.model.config.use_context, ck.step) == (8, False, 2)


def test_train_with_pretrained_vectors(tmp_path, corpus_file):
    words = {w for r in load_jsonl(corpus_file) for w in r.title.split()}
    vec = tmp_path / "v.txt"
    vec.write_text("".join(f"{w} 0.1 0.2 0.3 0.4\n" for w in sorted(words)[:5]))
    out = tmp_path / "e.ckpt"
    argv = ["train", "--train", str(corpus_file), "--out", str(out), "--log", str(tmp_path / "l"),
            "--embeddings", str(vec), "--freeze-embeddings", "--max-steps", "2"]
    assert main(argv + SMALL_FLAGS) == 0
    ck = load_checkpoint(out)
    assert ck.model.config.d_in == 4 and ck.model.freeze_embeddings


def test_extract_top_and_error_rows(trained, tmp_path, capsys):
    out, _, _ = trained
    inp = tmp_path / "in.jsonl"
    dump_jsonl([DatasetRecord("a", "alpha beta", "gamma alpha beta", []), DatasetRecord("empty", "", "...", []),
                DatasetRecord("c", "beta", "delta", [])], inp)
    assert main(["extract", "--model", str(out), "--input", str(inp), "--top", "5", "--beam", "5", "--depth", "3"]) == 0
    rows = [r.split("\t") for r in capsys.readouterr().out.splitlines()]
    by_doc = {}
    for r in rows:
        by_doc.setdefault(r[0], []).append(r)
    assert 1 <= len(by_doc["a"]) <= 5 and 1 <= len(by_doc["c"]) <= 5
    assert by_doc["empty"][0][1] == "ERROR" and len(by_doc["empty"]) == 1
    assert [int(r[1]) for r in by_doc["a"]] == list(range(1, len(by_doc["a"]) + 1))


def test_extract_output_file_and_threads(trained, corpus_file, tmp_path):
    out, _, _ = trained
    common = ["extract", "--model", str(out), "--input", str(corpus_file), "--beam", "4", "--depth", "2", "--top", "3"]
    one, many = tmp_path / "one.tsv", tmp_path / "many.tsv"
    assert main(common + ["--output", str(one)]) == 0
    assert main(common + ["--output", str(many), "--threads", "3"]) == 0
    assert one.read_text() == many.read_text() != ""


def test_corrupt_checkpoint_exits_one(trained, tmp_path, corpus_file):
    out, _, _ = trained
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(out.read_bytes()[:-10])
    assert main(["extract", "--model", str(bad), "--input", str(corpus_file)]) == 1
    assert main(["eval", "--model", str(bad), "--input", str(corpus_file)]) == 1


def test_eval_baseline_without_checkpoint(corpus_file, tmp_path, capsys):
    js = tmp_path / "r.json"
    assert main(["eval", "--baseline", "tfidf", "--input", str(corpus_file), "--json", str(js)]) == 0
    text = capsys.readouterr().out
    assert "F1@5" in text
    report = json.loads(js.read_text())
    assert list(report) == ["f1@5", "f1@10", "p@5", "r@5", "ndcg@10", "aic@5", "aic@10", "docs"]
    assert json.loads(text.strip().splitlines()[-1]) == report
    assert main(["eval", "--baseline", "tfidf", "--input", str(corpus_file), "--cutoffs", "x"]) == 2


def test_eval_model(trained, corpus_file, capsys):
    out, _, _ = trained
    assert main(["eval", "--model", str(out), "--input", str(corpus_file), "--beam", "4", "--depth", "2"]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["docs"] == 8 and 0.0 <= report["f1@5"] <= 1.0


def test_inspect_graph(tmp_path, capsys):
    inp = tmp_path / "g.jsonl"
    dump_jsonl([DatasetRecord("g", "red blue", "green", [])], inp)
    assert main(["inspect-graph", "--input", str(inp), "--doc", "0"]) == 0
    rows = [r.split("\t") for r in capsys.readouterr().out.splitlines()]
    assert len(rows) <= 9
    weights = {(a, b): (float(f), float(w)) for a, b, f, w in rows}
    assert weights[("red", "blue")] == (1.0, 0.0)
    assert weights[("red", "green")] == (0.5, 0.0)
    assert main(["inspect-graph", "--input", str(inp), "--doc", "1"]) == 1


def test_grad_check_and_negative_control(capsys):
    assert main(["grad-check"]) == 0
    out = capsys.readouterr().out
    assert "gcn.readout.self" in out and "max relative error" in out
    assert main(["grad-check", "--corrupt-backward"]) == 1
