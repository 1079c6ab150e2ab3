"""Run configuration: JSON schema validation and typed access."""

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .encoders.train import PROFILES, TrainConfig
from .errors import ConfigError
from .synthlang import SynthCorpusConfig

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "family"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["languages"],
            "properties": {
                "n_vowels": {"type": "integer", "minimum": 1},
                "n_consonants": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 1},
                "languages": {
                    "type": "array",
                    "minItems": 2,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id"],
                        "properties": {
                            "id": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                            "parent": {"type": "string"},
                            "perturbation": {"type": "number", "minimum": 0, "maximum": 1},
                        },
                    },
                },
            },
        },
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_speakers": {"type": "integer", "minimum": 3},
                "n_word_types": {"type": "integer", "minimum": 2},
                "tokens_per_speaker": {"type": "integer", "minimum": 1},
                "word_length": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                "minItems": 2, "maxItems": 2},
                "speaker_noise": {"type": "number", "minimum": 0},
                "split": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                          "minItems": 3, "maxItems": 3},
            },
        },
        "objectives": {"type": "array", "minItems": 1, "uniqueItems": True,
                       "items": {"enum": ["PGE", "CAE", "CSE"]}},
        "profile": {"enum": sorted(PROFILES)},
        "train": {"type": "object"},
        "kernels": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"type": "string", "pattern": r"^(linear|rbf(\([0-9.eE+-]+\))?)$"}},
        "cluster_variant": {"enum": ["rows", "columns", "symmetrized"]},
        "stimuli_split": {"enum": ["validation", "test"]},
        "baseline_trials": {"type": "integer", "minimum": 1},
    },
}


@dataclass
class LanguageDef:
    id: str
    parent: str = None
    perturbation: float = 0.0


@dataclass
class RunConfig:
    name: str
    languages: list
    seed: int = 0
    out: str = "runs/default"
    n_vowels: int = 6
    n_consonants: int = 14
    k: int = 39
    corpus: SynthCorpusConfig = field(default_factory=SynthCorpusConfig)
    split: tuple = (6, 2, 2)
    objectives: tuple = ("PGE", "CAE", "CSE")
    train: TrainConfig = field(default_factory=TrainConfig)
    kernels: tuple = ("linear", "rbf(0.5)")
    cluster_variant: str = "rows"
    stimuli_split: str = "test"
    baseline_trials: int = 5
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def language_ids(self):
        return [lang.id for lang in self.languages]

    @classmethod
    def from_dict(cls, d, seed=None, out=None):
        d = copy.deepcopy(d)
        if seed is not None:
            d["seed"] = int(seed)
        if out is not None:
            d["out"] = str(out)
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        fam = d["family"]
        langs = [LanguageDef(x["id"], x.get("parent"), x.get("perturbation", 0.0))
                 for x in fam["languages"]]
        seen = set()
        for lang in langs:
            if lang.id in seen:
                raise ConfigError(f"config error at family/languages: duplicate id {lang.id!r}")
            if lang.parent is not None and lang.parent not in seen:
                raise ConfigError(f"config error at family/languages/{lang.id}: parent "
                                  f"{lang.parent!r} must be defined earlier")
            seen.add(lang.id)
        corpus = dict(d.get("corpus", {}))
        split = tuple(corpus.pop("split", (6, 2, 2)))
        if "word_length" in corpus:
            corpus["word_length"] = tuple(corpus["word_length"])
        base = PROFILES[d.get("profile", "desk")].to_dict()
        base.update(d.get("train", {}))
        try:
            train = TrainConfig.from_dict(base)
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"config error at train: {exc}") from None
        return cls(
            name=d["name"], languages=langs, seed=d.get("seed", 0),
            out=d.get("out", f"runs/{d['name']}"),
            n_vowels=fam.get("n_vowels", 6), n_consonants=fam.get("n_consonants", 14),
            k=fam.get("k", 39), corpus=SynthCorpusConfig(**corpus), split=split,
            objectives=tuple(d.get("objectives", ("PGE", "CAE", "CSE"))), train=train,
            kernels=tuple(d.get("kernels", ("linear", "rbf(0.5)"))),
            cluster_variant=d.get("cluster_variant", "rows"),
            stimuli_split=d.get("stimuli_split", "test"),
            baseline_trials=d.get("baseline_trials", 5), raw=d)

    @classmethod
    def load(cls, path, seed=None, out=None):
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, seed, out)


def default_config():
    """The bundled three-language family (A, near B, far C)."""
    text = resources.files("awebench").joinpath("configs/default.json").read_text()
    return json.loads(text)
