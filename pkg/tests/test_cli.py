import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from awebench import pipeline, rsa
from awebench.cli import main
from awebench.cluster import cluster_xrsm
from awebench.config import RunConfig, default_config
from awebench.encoders import load_checkpoint
from awebench.errors import ConfigError
from awebench.eval import map_same_different


def toy_config(out, seed=0):
    return {
        "name": "toy", "seed": seed, "out": str(out),
        "family": {"n_vowels": 3, "n_consonants": 6, "k": 6,
                   "languages": [{"id": "A"}, {"id": "B", "parent": "A", "perturbation": 0.15},
                                 {"id": "C", "parent": "A", "perturbation": 0.9}]},
        "corpus": {"n_speakers": 9, "n_word_types": 8, "tokens_per_speaker": 10,
                   "word_length": [3, 4], "split": [5, 2, 2]},
        "train": {"epochs": 2, "hidden": 6, "batch_size": 16},
        "baseline_trials": 2,
    }


def write_config(tmp_path, d):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root, toy_config(root / "run"))
    for cmd in ("synth", "train", "embed", "eval", "analyze", "report"):
        assert main([cmd, "--config", cfg]) == 0
    return root / "run", cfg


def test_default_config_validates():
    cfg = RunConfig.from_dict(default_config())
    assert cfg.language_ids == ["A", "B", "C"] and cfg.train.hidden == 64
    assert cfg.train.epochs == 30


def test_bad_config_exit_code(tmp_path, capsys):
    d = toy_config(tmp_path / "x")
    d["family"]["languages"][1]["perturbation"] = 3
    assert main(["synth", "--config", write_config(tmp_path, d)]) == 2
    assert "error [config]" in capsys.readouterr().err
    assert main(["synth", "--config", str(tmp_path / "nope.json")]) == 2


def test_config_errors():
    d = toy_config("x")
    d["family"]["languages"][1]["parent"] = "Z"
    with pytest.raises(ConfigError, match="parent"):
        RunConfig.from_dict(d)
    d = toy_config("x")
    d["train"]["bogus"] = 1
    with pytest.raises(ConfigError, match="train"):
        RunConfig.from_dict(d)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(toy_config("x"), seed=-1)


def test_train_without_manifest_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, toy_config(tmp_path / "empty"))
    assert main(["train", "--config", cfg, "--language", "A", "--objective", "PGE"]) == 3
    assert "error [data]" in capsys.readouterr().err


def test_analyze_lists_missing_checkpoints(tmp_path, capsys):
    cfg = write_config(tmp_path, toy_config(tmp_path / "r"))
    assert main(["synth", "--config", cfg]) == 0
    assert main(["analyze", "--config", cfg]) == 3
    err = capsys.readouterr().err
    assert "missing" in err
    assert main(["embed", "--config", cfg]) == 3
    err = capsys.readouterr().err
    assert "A/PGE.awec" in err and "C/CSE.awec" in err


def test_synth_deterministic(tmp_path):
    paths = []
    for name in ("one", "two"):
        cfg = write_config(tmp_path, toy_config(tmp_path / name, seed=7))
        assert main(["synth", "--config", cfg]) == 0
        paths.append(tmp_path / name)
    for lang in "ABC":
        a = (paths[0] / "corpora" / lang / "manifest.json").read_bytes()
        assert a == (paths[1] / "corpora" / lang / "manifest.json").read_bytes()
        a = (paths[0] / "corpora" / lang / "features.awef").read_bytes()
        assert a == (paths[1] / "corpora" / lang / "features.awef").read_bytes()
    d = json.loads((paths[0] / "distances.json").read_text())
    D = np.array(d["matrix"])
    assert np.all(np.diag(D) == 0) and np.allclose(D, D.T)
    assert D[0, 1] < D[0, 2]


def test_seed_override_changes_corpus(tmp_path):
    cfg = write_config(tmp_path, toy_config(tmp_path / "s"))
    assert main(["synth", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "s1")]) == 0
    assert main(["synth", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "s2")]) == 0
    a = (tmp_path / "s1" / "corpora" / "A" / "manifest.json").read_bytes()
    assert a != (tmp_path / "s2" / "corpora" / "A" / "manifest.json").read_bytes()


def test_full_run_outputs(toy_run):
    out, _ = toy_run
    an = out / "analysis"
    for obj in ("PGE", "CAE", "CSE"):
        for slug in ("linear", "rbf0.5"):
            for ext in ("csv", "json", "svg"):
                assert (an / f"xrsm_{obj}_{slug}.{ext}").exists()
            for ext in ("nwk", "json", "svg"):
                assert (an / f"dendrogram_{obj}_{slug}.{ext}").exists()
    assert len(list(an.glob("xrsm_*.json"))) == 6
    assert len(list(an.glob("xrsm_*.csv"))) == 6
    assert len(list(an.glob("xrsm_*.svg"))) == 6
    assert len(list(an.glob("dendrogram_*.nwk"))) == 6
    assert len(list(an.glob("dendrogram_*.svg"))) == 6
    for name in ("cross_model_linear.json", "cross_model_rbf0.5.json",
                 "cross_model_linear.csv", "summary.json"):
        assert (an / name).exists()
    for svg in an.glob("*.svg"):
        ET.fromstring(svg.read_text())
    assert (out / "report.md").read_text().startswith("# Run `toy`")
    for stem in an.glob("xrsm_*.json"):
        x = rsa.XRSM.load(stem)
        assert np.all(np.diag(x.matrix) == 1.0)


def test_summary_matches_recomputation(toy_run):
    out, cfg_path = toy_run
    run = pipeline.Run(RunConfig.load(cfg_path))
    summary = json.loads((out / "analysis" / "summary.json").read_text())
    for obj in ("PGE", "CAE", "CSE"):
        views = pipeline.load_views(run, obj)
        for kernel in ("linear", "rbf(0.5)"):
            entry = summary["xrsm"][f"{obj}/{kernel}"]
            A, B, C = (("A", "A"), ("A", "B"), ("A", "C"))
            sim_ab = rsa.sim(views[A], views[B], kernel)
            sim_ac = rsa.sim(views[A], views[C], kernel)
            sim_ba = rsa.sim(views[("B", "B")], views[("B", "A")], kernel)
            sim_bc = rsa.sim(views[("B", "B")], views[("B", "C")], kernel)
            assert entry["matrix"][0][1] == sim_ab and entry["matrix"][1][0] == sim_ba
            assert entry["ordering"]["sim_AB_gt_AC"] == (sim_ab > sim_ac)
            assert entry["ordering"]["sim_BA_gt_BC"] == (sim_ba > sim_bc)
            x = rsa.xrsm_from_views(views, ["A", "B", "C"], kernel, obj)
            first = cluster_xrsm(x).first_merge()
            assert entry["ordering"]["first_merge_AB"] == (first == frozenset("AB"))


def test_history_and_checkpoint_reload(toy_run):
    out, cfg_path = toy_run
    run = pipeline.Run(RunConfig.load(cfg_path))
    corpus = run.load_corpus("B")
    model = load_checkpoint(run.checkpoint("B", "CSE"))
    assert len(model.history) == 2
    best = model.history[model.best_epoch - 1]["val_map"]
    es = pipeline._evalset(model, corpus, "validation")
    assert map_same_different(es) == pytest.approx(best, abs=1e-12)
    row = json.loads((out / "eval" / "B_CSE.json").read_text())
    assert row["validation"]["mAP"] == pytest.approx(best, abs=1e-12)
