import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgat_absa import harness, nn
from rgat_absa.cli import main, read_config
from rgat_absa.corpus import Instance, embedding_matrix, build_vocab, write_instances, read_instances
from rgat_absa.deptree import DepParse
from rgat_absa.harness import RunConfig
from rgat_absa.metrics import EvalReport, accuracy, confusion_matrix, macro_f1, per_class_scores
from rgat_absa.rgat import Hyper
from rgat_absa.synthetic import synthetic_instances
from test_corpus import CONLLU, XML

TINY = dict(hidden=8, att_heads=2, rel_heads=2, gate_dim=4, rel_dim=4, dropout=0.0)


def tiny_config(tmp_path, **kw):
    base = dict(emb_dim=6, epochs=3, batch_size=4, out=str(tmp_path / "run"), hyper=TINY)
    base.update(kw)
    return RunConfig.from_dict(base)


# ----- metrics -----

def test_identity_confusion_scores_one():
    cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2])
    assert accuracy(cm) == 1.0 and macro_f1(cm) == 1.0


def test_constant_prediction_on_balanced_set():
    gold = [0] * 10 + [1] * 10 + [2] * 10
    cm = confusion_matrix(gold, [0] * 30)
    assert accuracy(cm) == pytest.approx(1 / 3)
    assert macro_f1(cm) == pytest.approx(0.5 / 3)
    p, r, f = per_class_scores(cm)
    np.testing.assert_allclose(p, [1 / 3, 0, 0])
    np.testing.assert_allclose(r, [1, 0, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_metrics_match_direct_counting(pairs):
    gold, pred = zip(*pairs)
    cm = confusion_matrix(gold, pred)
    assert accuracy(cm) == pytest.approx(sum(g == p for g, p in pairs) / len(pairs))
    f1s = []
    for c in range(3):
        tp = sum(g == c and p == c for g, p in pairs)
        fp = sum(g != c and p == c for g, p in pairs)
        fn = sum(g == c and p != c for g, p in pairs)
        f1s.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    assert macro_f1(cm) == pytest.approx(sum(f1s) / 3)


def test_report_serialisation():
    rep = EvalReport.from_confusion(confusion_matrix([0, 1, 2], [0, 2, 2]), [{"id": "x"}])
    js = rep.to_json()
    assert js["per_class"]["neutral"]["recall"] == 0.0
    assert js["confusion"] == [[1, 0, 0], [0, 0, 1], [0, 0, 1]]
    assert "misclassified" not in rep.to_json(with_errors=False)
    assert "accuracy   66.67" in rep.to_text()


# ----- configuration -----

def test_run_config_flat_and_nested():
    a = RunConfig.from_dict({"seed": 3, "dropout": 0.5, "mode": "gat_only"})
    b = RunConfig.from_dict({"seed": 3, "hyper": {"dropout": 0.5, "mode": "gat_only"}})
    assert a == b and a.hyper.dropout == 0.5
    assert RunConfig.from_dict(a.to_dict()) == a
    with pytest.raises(KeyError, match="bogus"):
        RunConfig.from_dict({"bogus": 1})


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nseed = 4\nlr: 0.01\nmode = gat_only  # trailing\n\nlower = false\n")
    assert read_config(p) == {"seed": 4, "lr": 0.01, "mode": "gat_only", "lower": False}
    p.write_text("nonsense\n")
    with pytest.raises(ValueError, match=":1:"):
        read_config(p)


# ----- training -----

def test_zero_epochs_saves_initial_parameters(tmp_path):
    data = synthetic_instances(8)
    cfg = tiny_config(tmp_path, epochs=0)
    res = harness.train(cfg, data, data)
    fresh = harness.build_model(cfg, data, data)
    header, tensors = nn.load_checkpoint(res.checkpoint)
    assert res.best_epoch == 0 and res.best_report is None and header["epoch"] == 0
    for name, value in fresh.params.state().items():
        np.testing.assert_array_equal(tensors[name], value)


def test_same_seed_gives_identical_runs(tmp_path):
    data = synthetic_instances(10)
    cfg_a = tiny_config(tmp_path / "a", hyper={**TINY, "dropout": 0.3})
    cfg_b = tiny_config(tmp_path / "b", hyper={**TINY, "dropout": 0.3})
    a = harness.train(cfg_a, data, data)
    b = harness.train(cfg_b, data, data)
    assert a.history == b.history
    assert a.checkpoint.read_bytes().replace(b"/a/run", b"/b/run") == b.checkpoint.read_bytes()
    c = harness.train(tiny_config(tmp_path / "c", seed=2, hyper={**TINY, "dropout": 0.3}), data, data)
    assert c.history != a.history


def test_training_log_and_restore(tmp_path):
    data = synthetic_instances(10)
    res = harness.train(tiny_config(tmp_path), data, data)
    events = [json.loads(line) for line in (tmp_path / "run" / "log.jsonl").read_text().splitlines()]
    assert events[0]["event"] == "config" and "development" in events[0]["selection"]
    epochs = [e for e in events if e["event"] == "epoch"]
    assert [e["epoch"] for e in epochs] == [1, 2, 3]
    assert all(e["relation_grad_norm"] > 0 for e in epochs)
    assert events[-1] == {"event": "best", "epoch": res.best_epoch,
                          "test_accuracy": res.best_report.accuracy,
                          "test_macro_f1": res.best_report.macro_f1}
    # the returned model carries the best epoch's parameters
    best = harness.load_model(res.checkpoint)
    for name, value in best.params.state().items():
        np.testing.assert_array_equal(res.model.params[name].data, value)


def test_early_stopping(tmp_path):
    data = synthetic_instances(6)
    res = harness.train(tiny_config(tmp_path, epochs=20, patience=2, lr=0.0), data, data, save=False)
    assert len(res.history) == 3 and res.best_epoch == 1 and res.checkpoint is None


def test_divergence_writes_last_good(tmp_path):
    data = synthetic_instances(6)
    cfg = tiny_config(tmp_path)
    emb = embedding_matrix(build_vocab(data), 6)
    emb[2:] = np.nan
    with pytest.raises(harness.TrainingDiverged, match="epoch 1"):
        harness.train(cfg, data, data, embeddings=emb)
    assert (tmp_path / "run" / "last_good.ckpt").exists()


def test_evaluate_is_pure(tmp_path):
    data = synthetic_instances(9)
    model = harness.build_model(tiny_config(tmp_path), data)
    before = {k: v.copy() for k, v in model.params.state().items()}
    r1, r2 = harness.evaluate(model, data), harness.evaluate(model, data)
    assert r1 == r2
    cm = np.array(r1.confusion)
    assert r1.accuracy == accuracy(cm) and r1.macro_f1 == macro_f1(cm)
    assert len(r1.misclassified) == cm.sum() - np.trace(cm)
    for k, v in model.params.state().items():
        np.testing.assert_array_equal(before[k], v)
    rec = r1.misclassified[0] if r1.misclassified else None
    if rec:
        assert set(rec) == {"id", "tokens", "aspect", "aspect_text", "gold", "pred", "probs"}


# ----- ablation -----

def test_ablation_grid(tmp_path):
    data = synthetic_instances(6)
    res = harness.ablate(tiny_config(tmp_path, epochs=1), seeds=[1, 2], train_set=data, test_set=data)
    assert len(res.rows) == 10
    assert set(res.summary()) == set(harness.ABLATION_CELLS)
    rows = list(csv.DictReader(io.StringIO(res.to_csv())))
    assert {r["config_hash"] for r in rows} == {res.config_hash}
    by_cell = {(r["tree"], r["mode"]): float(r["relation_grad_norm"]) for r in rows}
    assert by_cell[("reshaped", "gat_only")] == 0.0 and by_cell[("reshaped", "rgat")] > 0
    text = res.to_text()
    assert "R-GAT-n:con" in text and text.count("\n") == 7


# ----- distance analysis -----

def two_aspect_sentence(sid, w1, w2, label="positive"):
    tokens = (w1, "and", w2, "were", "fine")
    parse = DepParse(tokens, (5, 3, 1, 5, 0), ("nsubj", "cc", "conj", "cop", "root"))
    return [Instance(f"{sid}#0", tokens, (1, 1), label, parse),
            Instance(f"{sid}#1", tokens, (3, 3), label, parse)]


def test_nearest_aspect_distances_by_hand():
    insts = two_aspect_sentence("a", "x", "y") + two_aspect_sentence("b", "x", "z")
    single = Instance("c#0", ("x",), (1, 1), "neutral", DepParse(("x",), (0,), ("root",)))
    vecs = np.array([[0.0, 0], [3, 4], [0, 0], [1, 0], [9, 9]])
    d = harness.nearest_aspect_distances(insts + [single], vecs)
    assert d == {"a#0": 5.0, "a#1": 5.0, "b#0": 1.0, "b#1": 1.0}


def test_three_aspects_use_nearest_sibling():
    tokens = ("p", "q", "r")
    parse = DepParse(tokens, (0, 1, 1), ("root", "dep", "dep"))
    insts = [Instance(f"s#{i}", tokens, (i + 1, i + 1), "neutral", parse) for i in range(3)]
    d = harness.nearest_aspect_distances(insts, np.array([[0.0], [1.0], [5.0]]))
    assert d == {"s#0": 1.0, "s#1": 1.0, "s#2": 4.0}


def test_assign_buckets():
    b, edges = harness.assign_buckets([0.1, 1.0, 1.5, 3.0], [1.0, 2.0])
    assert b.tolist() == [0, 1, 1, 2] and edges == [1.0, 2.0]
    b, edges = harness.assign_buckets(np.arange(10.0))
    assert len(edges) == 4 and np.bincount(b).tolist() == [2, 2, 2, 2, 2]


def test_multi_aspect_analysis(tmp_path):
    insts = two_aspect_sentence("a", "x", "y") + two_aspect_sentence("b", "x", "z", "negative")
    single = Instance("c#0", ("x",), (1, 1), "neutral", DepParse(("x",), (0,), ("root",)))
    model = harness.build_model(tiny_config(tmp_path), insts + [single])
    vocab = model.vocab
    vectors = np.zeros((len(vocab), 2))
    vectors[vocab.lookup("y")] = [3, 4]
    vectors[vocab.lookup("z")] = [1, 0]
    res = harness.multi_aspect_analysis(model, insts + [single], vectors, bucket_edges=[2.0])
    assert [r["id"] for r in res.rows] == ["a#0", "a#1", "b#0", "b#1"]
    assert [r["bucket"] for r in res.rows] == [1, 1, 0, 0]
    assert [b["count"] for b in res.buckets] == [2, 2]
    pred = harness.predict(model, insts).argmax(axis=1)
    gold = np.array([i.label_index for i in insts])
    assert [r["correct"] for r in res.rows] == (pred == gold).tolist()
    assert res.to_csv().startswith("bucket,low,high,count,correct,accuracy\n")
    with pytest.warns(UserWarning, match="no pretrained vector"):
        harness.aspect_vectors(insts[:1], vocab, vectors, known={vocab.lookup("y")})


# ----- error export -----

def biased_model(tmp_path, data, label_index):
    model = harness.build_model(tiny_config(tmp_path), data)
    model.params["cls_w"].data[:] = 0
    model.params["cls_b"].data[:] = 0
    model.params["cls_b"].data[label_index] = 50
    return model


def test_export_errors(tmp_path):
    data = synthetic_instances(12)
    positives = [i for i in data if i.label == "positive"]
    assert harness.export_errors(biased_model(tmp_path, data, 0), positives, k=5) == []
    model = biased_model(tmp_path, data, 0)
    all_errors = harness.export_errors(model, data, k=100)
    assert len(all_errors) == 8 and all(e["pred"] == "positive" for e in all_errors)
    a = harness.export_errors(model, data, k=3, seed=7)
    assert a == harness.export_errors(model, data, k=3, seed=7)
    ids = [e["id"] for e in all_errors]
    picked = [ids.index(e["id"]) for e in a]
    assert len(a) == 3 and picked == sorted(picked)
    out = tmp_path / "e.jsonl"
    harness.write_jsonl(out, a)
    assert [json.loads(line) for line in out.read_text().splitlines()] == a


# ----- command line -----

def test_cli_pipeline(tmp_path, capsys):
    xml = tmp_path / "r.xml"
    xml.write_text(XML, encoding="utf-8")
    conllu = tmp_path / "r.conllu"
    conllu.write_text(CONLLU, encoding="utf-8")
    sents = tmp_path / "sents.tsv"
    with pytest.warns(UserWarning, match="cheese"):
        assert main(["preprocess", "--dataset", str(xml), "--out", str(sents)]) == 0
    assert sents.read_text().splitlines()[0] == "s1\tgreat food but the service was dreadful"

    inst_path = tmp_path / "inst.jsonl"
    with pytest.warns(UserWarning):
        main(["preprocess", "--dataset", str(xml), "--parses", str(conllu), "--out", str(inst_path)])
    assert [i.id for i in read_instances(inst_path)] == ["s1#0", "s1#1", "s4#0"]

    trees = tmp_path / "trees.jsonl"
    main(["reshape", "--dataset", str(inst_path), "--out", str(trees), "--dot", str(tmp_path / "dot")])
    first = json.loads(trees.read_text().splitlines()[0])
    assert first["id"] == "s1#0" and first["aspect"] == [2, 2]
    assert (tmp_path / "dot" / "s1_0.dot").read_text().startswith("digraph")

    data = tmp_path / "syn.jsonl"
    multi_insts = two_aspect_sentence("a", "food", "wine") + two_aspect_sentence("b", "menu", "staff")
    write_instances(data, synthetic_instances(9) + multi_insts)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("emb_dim = 6\nhidden = 8\natt_heads = 2\nrel_heads = 2\ngate_dim = 4\nrel_dim = 4\n"
                   "batch_size = 4\n")
    run = tmp_path / "run"
    main(["train", "--dataset", str(data), "--config", str(cfg), "--epochs", "2", "--dropout", "0",
          "--out", str(run)])
    assert "best epoch" in capsys.readouterr().out
    ckpt = run / "model.ckpt"
    header, _ = nn.load_checkpoint(ckpt)
    assert header["config"]["hyper"]["dropout"] == 0.0 and header["config"]["epochs"] == 2

    main(["eval", "--checkpoint", str(ckpt), "--dataset", str(data), "--out", str(tmp_path / "ev")])
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert set(rep) >= {"accuracy", "macro_f1", "per_class", "confusion"}
    assert (tmp_path / "ev" / "report.csv").read_text().startswith("class,precision,recall,f1")

    main(["export-errors", "--checkpoint", str(ckpt), "--dataset", str(data), "-k", "2",
          "--out", str(tmp_path / "err.jsonl")])
    assert len((tmp_path / "err.jsonl").read_text().splitlines()) <= 2

    multi = tmp_path / "multi.jsonl"
    write_instances(multi, multi_insts)
    main(["analyze-distance", "--checkpoint", str(ckpt), "--dataset", str(multi),
          "--buckets", "0.5", "--out", str(tmp_path / "dist")])
    rows = list(csv.DictReader(open(tmp_path / "dist" / "distance_aspects.csv")))
    assert len(rows) == 4

    unseen = tmp_path / "unseen.jsonl"
    write_instances(unseen, [Instance("u#0", ("a", "b"), (1, 1), "neutral",
                                      DepParse(("a", "b"), (0, 1), ("root", "xcomp")))])
    with pytest.raises(KeyError, match="u#0.*xcomp"):
        main(["eval", "--checkpoint", str(ckpt), "--dataset", str(unseen), "--out", str(tmp_path / "ev2")])

    main(["ablate", "--dataset", str(data), "--config", str(cfg), "--epochs", "1", "--seeds", "1",
          "--out", str(tmp_path / "abl")])
    assert len((tmp_path / "abl" / "ablation.csv").read_text().splitlines()) == 6


def test_cli_twitter_preprocess(tmp_path):
    tw = tmp_path / "tw.raw"
    tw.write_text("i love $T$ so much\nmy phone\n1\n", encoding="utf-8")
    out = tmp_path / "tw.tsv"
    main(["preprocess", "--format", "twitter", "--dataset", str(tw), "--out", str(out)])
    assert out.read_text() == "tw-0\ti love my phone so much\n"


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
