"""Pipeline stages behind the command line: synth, train, embed, eval, analyze, report.

Every stage reads and writes files under the run's output directory, so the
stages can be rerun independently. One global seed fans out to named
per-stage seeds.

Layout::

    languages/<L>.json            language specs
    distances.{json,csv}          ground-truth language distances
    corpora/<L>/manifest.json     segments and speaker splits
    corpora/<L>/features.awef
    models/<L>/<OBJ>.awec         checkpoints (+ .history.json)
    embeddings/<OBJ>/<S>__<E>.awex  stimuli of S embedded by the encoder of E
    eval/<L>_<OBJ>.json, eval/summary.json
    analysis/...                  xRSMs, dendrograms, cross-model tables, summary.json
    report.md
"""

import json
import logging
import time
from pathlib import Path

import numpy as np

from . import cluster, rsa
from .corpus import Corpus, SegmentRecord, filter_segments, split_by_speaker
from .encoders import (load_checkpoint, load_embeddings, save_checkpoint, save_embeddings,
                       train)
from .encoders.train import embed_arrays, embed_set
from .errors import DataError
from .eval import EvalSet, map_same_different, shuffled_baseline
from .features import write_features
from .nncore import Rng, derive_seed
from .synthlang import LanguageSpec, derive_language, language_distance, make_language, \
    synthesize_corpus

log = logging.getLogger(__name__)


class Run:
    """Paths and seeds of one configured run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.out)

    def rng(self, stage):
        return Rng(derive_seed(self.cfg.seed, stage))

    def language_path(self, lang):
        return self.out / "languages" / f"{lang}.json"

    def manifest(self, lang):
        return self.out / "corpora" / lang / "manifest.json"

    def checkpoint(self, lang, objective):
        return self.out / "models" / lang / f"{objective}.awec"

    def embedding(self, objective, stimuli, encoder):
        return self.out / "embeddings" / objective / f"{stimuli}__{encoder}.awex"

    def load_corpus(self, lang):
        return Corpus.load(self.manifest(lang))

    def require_checkpoints(self, objectives=None):
        missing = [str(self.checkpoint(lang, obj))
                   for obj in (objectives or self.cfg.objectives)
                   for lang in self.cfg.language_ids if not self.checkpoint(lang, obj).exists()]
        if missing:
            raise DataError("missing checkpoints: " + ", ".join(missing))


def synth(run):
    """Languages, corpora, manifests and the language distance table."""
    cfg = run.cfg
    specs = {}
    for lang in cfg.languages:
        r = run.rng(f"language:{lang.id}")
        if lang.parent is None:
            spec = make_language(lang.id, r, cfg.n_vowels, cfg.n_consonants, cfg.k)
        else:
            spec = derive_language(specs[lang.parent], lang.perturbation, r, lang.id)
        specs[lang.id] = spec
        run.language_path(lang.id).parent.mkdir(parents=True, exist_ok=True)
        spec.save(run.language_path(lang.id))

        recs, feats, _ = synthesize_corpus(spec, cfg.corpus, run.rng(f"corpus:{lang.id}"))
        cdir = run.manifest(lang.id).parent
        cdir.mkdir(parents=True, exist_ok=True)
        write_features(cdir / "features.awef", feats)
        records = filter_segments([
            SegmentRecord(r["id"], r["word"], tuple(r["phones"]), r["speaker"], r["dur_s"],
                          "features.awef", r["id"]) for r in recs])
        split = split_by_speaker(records, cfg.split, run.rng(f"split:{lang.id}"), lang.id)
        meta = {"parent": lang.parent, "perturbation": lang.perturbation, "seed": cfg.seed}
        Corpus(lang.id, records, split, cdir, meta).save(run.manifest(lang.id))
        log.info("%s: %d segments", lang.id, len(records))

    ids = cfg.language_ids
    D = np.array([[language_distance(specs[a], specs[b]) for b in ids] for a in ids])
    (run.out / "distances.json").write_text(json.dumps({"languages": ids,
                                                        "matrix": D.tolist()}, indent=1))
    lines = ["language," + ",".join(ids)]
    lines += [a + "," + ",".join(repr(float(v)) for v in row) for a, row in zip(ids, D)]
    (run.out / "distances.csv").write_text("\n".join(lines) + "\n")
    return specs, D


def train_one(run, lang, objective, progress=None):
    cfg = run.cfg
    corpus = run.load_corpus(lang)
    tcfg = type(cfg.train).from_dict({**cfg.train.to_dict(),
                                      "seed": derive_seed(cfg.seed, f"train:{lang}")})
    t0 = time.process_time()
    model, history = train(objective, corpus, tcfg, progress)
    model.train_config = tcfg.to_dict()
    path = run.checkpoint(lang, objective)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(path, model, model.train_config)
    log.info("%s/%s trained in %.1f s CPU", lang, objective, time.process_time() - t0)
    return model


def train_all(run, progress=None):
    return {(lang, obj): train_one(run, lang, obj, progress)
            for obj in run.cfg.objectives for lang in run.cfg.language_ids}


def stimuli(run, lang, corpus=None):
    corpus = corpus or run.load_corpus(lang)
    recs = corpus.subset(run.cfg.stimuli_split)
    if not recs:
        raise DataError(f"{lang}: empty {run.cfg.stimuli_split} split")
    return [(r.segment_id, corpus.features(r.segment_id)) for r in recs]


def embed(run):
    """Embed every language's held-out stimuli with every language's encoder."""
    run.require_checkpoints()
    langs = run.cfg.language_ids
    stim = {lang: stimuli(run, lang) for lang in langs}
    for obj in run.cfg.objectives:
        for enc in langs:
            model = load_checkpoint(run.checkpoint(enc, obj))
            for s in langs:
                path = run.embedding(obj, s, enc)
                path.parent.mkdir(parents=True, exist_ok=True)
                save_embeddings(path, embed_set(model, stim[s], s))


def _evalset(model, corpus, split):
    recs = corpus.subset(split)
    X = embed_arrays(model, corpus.feature_list([r.segment_id for r in recs]))
    return EvalSet(X, np.array([r.word for r in recs]), np.array([r.speaker for r in recs]))


def evaluate(run):
    """Validation and test mAP of every native model, with shuffled-label baselines."""
    run.require_checkpoints()
    mode = run.cfg.train.eval_mode
    results = []
    out = run.out / "eval"
    out.mkdir(parents=True, exist_ok=True)
    for lang in run.cfg.language_ids:
        corpus = run.load_corpus(lang)
        for obj in run.cfg.objectives:
            model = load_checkpoint(run.checkpoint(lang, obj))
            row = {"language": lang, "objective": obj, "mode": mode}
            for split in ("validation", "test"):
                es = _evalset(model, corpus, split)
                value, n = map_same_different(es, mode, return_count=True)
                base = shuffled_baseline(es, run.cfg.baseline_trials,
                                         run.rng(f"baseline:{lang}:{obj}:{split}"), mode)
                row[split] = {"mAP": value, "n_queries": n, "baseline": base,
                              "ratio": value / base if base > 0 else float("inf")}
            (out / f"{lang}_{obj}.json").write_text(json.dumps(row, indent=1))
            results.append(row)
    (out / "summary.json").write_text(json.dumps(results, indent=1))
    return results


def load_views(run, objective):
    langs = run.cfg.language_ids
    views = {}
    for s in langs:
        for e in langs:
            path = run.embedding(objective, s, e)
            if not path.exists():
                raise DataError(f"missing embedding matrix {path}")
            views[(s, e)] = load_embeddings(path)
    return views


def _ordering(xrsm, tree, langs):
    """Near/far ordering checks for a base, near and far language triple."""
    a, b, c = langs
    return {"sim_AB_gt_AC": xrsm[(a, b)] > xrsm[(a, c)],
            "sim_BA_gt_BC": xrsm[(b, a)] > xrsm[(b, c)],
            "first_merge_AB": tree.first_merge() == frozenset((a, b))}


def _kernel_slug(kernel):
    return kernel.replace("(", "").replace(")", "")


def analyze(run):
    """xRSMs, Ward trees and cross-model tables for every objective and kernel."""
    cfg = run.cfg
    langs = cfg.language_ids
    out = run.out / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    views = {obj: load_views(run, obj) for obj in cfg.objectives}
    summary = {"name": cfg.name, "seed": cfg.seed, "languages": langs,
               "cluster_variant": cfg.cluster_variant, "xrsm": {}, "cross_model": {},
               "checks": {}}
    for obj in cfg.objectives:
        for kernel in cfg.kernels:
            meta = {"seed": cfg.seed, "stimuli_split": cfg.stimuli_split}
            x = rsa.xrsm_from_views(views[obj], langs, kernel, obj, meta)
            stem = out / f"xrsm_{obj}_{_kernel_slug(kernel)}"
            x.save(stem)
            tree = cluster.cluster_xrsm(x, cfg.cluster_variant)
            tree.save(out / f"dendrogram_{obj}_{_kernel_slug(kernel)}")
            entry = {"matrix": x.matrix.tolist(), "newick": cluster.to_newick(tree),
                     "first_merge": sorted(tree.first_merge())}
            if len(langs) == 3:
                entry["ordering"] = _ordering(x, tree, langs)
            summary["xrsm"][f"{obj}/{kernel}"] = entry
    if {"PGE", "CAE", "CSE"} <= set(cfg.objectives):
        for kernel in cfg.kernels:
            native = {lang: {obj: views[obj][(lang, lang)] for obj in cfg.objectives}
                      for lang in langs}
            table = rsa.cross_model_table(native, kernel)
            slug = _kernel_slug(kernel)
            (out / f"cross_model_{slug}.json").write_text(json.dumps(table.to_dict(), indent=1))
            (out / f"cross_model_{slug}.csv").write_text(table.to_csv())
            m = table.means
            summary["cross_model"][kernel] = {"values": table.values, "means": m,
                                              "pge_cae_highest": m["PGE-CAE"] > m["PGE-CSE"]
                                              and m["PGE-CAE"] > m["CAE-CSE"]}
    if len(langs) == 3:
        checks = summary["checks"]
        for kernel in cfg.kernels:
            oks = [summary["xrsm"][f"{obj}/{kernel}"]["ordering"]
                   for obj in ("PGE", "CAE") if obj in cfg.objectives]
            checks[f"sim_ordering/{kernel}"] = all(o["sim_AB_gt_AC"] and o["sim_BA_gt_BC"]
                                                   for o in oks)
            checks[f"tree_ordering/{kernel}"] = all(o["first_merge_AB"] for o in oks)
        if "linear" in summary["cross_model"]:
            checks["cross_model/linear"] = summary["cross_model"]["linear"]["pge_cae_highest"]
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def report(run):
    """Markdown digest of eval and analysis outputs."""
    out = run.out
    lines = [f"# Run `{run.cfg.name}` (seed {run.cfg.seed})", ""]
    dist = out / "distances.json"
    if dist.exists():
        d = json.loads(dist.read_text())
        lines += ["## Language distances", "", "| | " + " | ".join(d["languages"]) + " |",
                  "|---" * (len(d["languages"]) + 1) + "|"]
        for lang, row in zip(d["languages"], d["matrix"]):
            lines.append(f"| {lang} | " + " | ".join(f"{v:.3f}" for v in row) + " |")
        lines.append("")
    ev = out / "eval" / "summary.json"
    if ev.exists():
        lines += ["## Same-different mAP", "",
                  "| language | objective | val mAP | val baseline | test mAP | test baseline |",
                  "|---|---|---|---|---|---|"]
        for r in json.loads(ev.read_text()):
            v, t = r["validation"], r["test"]
            lines.append(f"| {r['language']} | {r['objective']} | {v['mAP']:.3f} | "
                         f"{v['baseline']:.3f} | {t['mAP']:.3f} | {t['baseline']:.3f} |")
        lines.append("")
    an = out / "analysis" / "summary.json"
    if an.exists():
        s = json.loads(an.read_text())
        langs = s["languages"]
        lines += ["## Cross-lingual similarity", ""]
        for key, entry in s["xrsm"].items():
            lines += [f"### {key}", "", "| stimuli \\ encoder | " + " | ".join(langs) + " |",
                      "|---" * (len(langs) + 1) + "|"]
            for lang, row in zip(langs, entry["matrix"]):
                lines.append(f"| {lang} | " + " | ".join(f"{v:.3f}" for v in row) + " |")
            lines += ["", f"Ward tree: `{entry['newick']}`", ""]
        for kernel, cm in s["cross_model"].items():
            lines += [f"### Cross-model CKA ({kernel})", ""]
            lines += [f"- {k}: {v:.3f}" for k, v in cm["means"].items()]
            lines.append("")
        if s["checks"]:
            lines += ["## Ordering checks", ""]
            lines += [f"- {k}: {'pass' if v else 'fail'}" for k, v in s["checks"].items()]
            lines.append("")
    path = out / "report.md"
    path.write_text("\n".join(lines))
    return path


def run_all(run, progress=None):
    synth(run)
    train_all(run, progress)
    embed(run)
    results = evaluate(run)
    summary = analyze(run)
    report(run)
    return results, summary


def load_language(run, lang):
    return LanguageSpec.load(run.language_path(lang))
