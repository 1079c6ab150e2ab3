"""Command line entry point.

    awebench synth   --config run.json --seed 3 --out runs/s3
    awebench train   --config run.json --language A --objective PGE
    awebench embed | eval | analyze | report | all

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
malformed inputs), 4 numeric failure.
"""

import argparse
import json
import logging
import sys

from . import pipeline
from .config import RunConfig, default_config
from .errors import ConfigError, DataError, FormatError, NumericError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(args):
    if args.config:
        return RunConfig.load(args.config, args.seed, args.out)
    return RunConfig.from_dict(default_config(), args.seed, args.out)


def cmd_synth(run, args):
    _, D = pipeline.synth(run)
    print(f"wrote {len(run.cfg.languages)} corpora to {run.out}")
    return 0


def cmd_train(run, args):
    langs = [args.language] if args.language else run.cfg.language_ids
    objs = [args.objective] if args.objective else list(run.cfg.objectives)
    for lang in langs:
        if lang not in run.cfg.language_ids:
            raise ConfigError(f"language {lang!r} is not defined in the config")
    for obj in objs:
        for lang in langs:
            model = pipeline.train_one(run, lang, obj)
            h = model.history[model.best_epoch - 1]
            print(f"{lang}/{obj}: best epoch {model.best_epoch}, val mAP {h['val_map']:.4f}")
    return 0


def cmd_embed(run, args):
    pipeline.embed(run)
    print(f"embeddings written to {run.out / 'embeddings'}")
    return 0


def cmd_eval(run, args):
    for r in pipeline.evaluate(run):
        v, t = r["validation"], r["test"]
        print(f"{r['language']}/{r['objective']}: val mAP {v['mAP']:.4f} "
              f"(baseline {v['baseline']:.4f}), test mAP {t['mAP']:.4f}")
    return 0


def cmd_analyze(run, args):
    summary = pipeline.analyze(run)
    print(json.dumps(summary["checks"], indent=1))
    return 0


def cmd_report(run, args):
    print(pipeline.report(run))
    return 0


def cmd_all(run, args):
    pipeline.run_all(run)
    print(pipeline.report(run))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "embed": cmd_embed, "eval": cmd_eval,
            "analyze": cmd_analyze, "report": cmd_report, "all": cmd_all}


def build_parser():
    p = argparse.ArgumentParser(prog="awebench",
                                description="Cross-lingual acoustic word embedding workbench")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="run config JSON (default: bundled A/B/C family)")
        sp.add_argument("--seed", type=int, help="global seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        if name == "train":
            sp.add_argument("--language", help="train only this language")
            sp.add_argument("--objective", choices=["PGE", "CAE", "CSE"])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](pipeline.Run(cfg), args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error [numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
