"""Segment manifests, filtering, speaker-disjoint splits and same-type pairing."""

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .features import FeatureFile

MIN_PHONES = 4
MAX_DURATION_S = 1.1
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: str
    word: str
    phones: tuple
    speaker: str
    duration_s: float
    feat_file: str = ""
    feat_id: str = ""

    def __post_init__(self):
        if self.duration_s <= 0:
            raise DataError(f"segment {self.segment_id}: duration must be > 0")
        if not self.phones:
            raise DataError(f"segment {self.segment_id}: empty phone sequence")

    def to_json(self):
        return {"id": self.segment_id, "word": self.word, "phones": list(self.phones),
                "speaker": self.speaker, "dur_s": self.duration_s,
                "feat": {"file": self.feat_file, "seg_id": self.feat_id or self.segment_id}}

    @classmethod
    def from_json(cls, d):
        feat = d.get("feat") or {}
        return cls(d["id"], d["word"], tuple(d["phones"]), d["speaker"], float(d["dur_s"]),
                   feat.get("file", ""), feat.get("seg_id", d["id"]))


@dataclass
class SplitManifest:
    language: str
    splits: dict
    speakers: dict

    def __post_init__(self):
        for a in SPLITS:
            for b in SPLITS:
                if a < b:
                    if set(self.splits[a]) & set(self.splits[b]):
                        raise DataError(f"splits {a} and {b} share segments")
                    if set(self.speakers[a]) & set(self.speakers[b]):
                        raise DataError(f"splits {a} and {b} share speakers")

    def to_json(self):
        return {"splits": {k: list(v) for k, v in self.splits.items()},
                "speakers": {k: list(v) for k, v in self.speakers.items()}}


def filter_segments(records):
    """Keep records with more than 3 phones and duration under 1.1 s."""
    return [r for r in records if len(r.phones) >= MIN_PHONES and r.duration_s < MAX_DURATION_S]


def _split_counts(n, fractions):
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or min(fr) <= 0:
        raise DataError(f"need three positive split fractions, got {fractions}")
    if all(float(f).is_integer() for f in fr) and sum(fr) == n:
        return [int(f) for f in fr]
    total = sum(fr)
    counts = [max(1, int(np.floor(n * f / total))) for f in fr]
    # hand leftovers to the largest fractions first
    order = sorted(range(3), key=lambda i: -fr[i])
    i = 0
    while sum(counts) < n:
        counts[order[i % 3]] += 1
        i += 1
    while sum(counts) > n:
        j = max(range(3), key=lambda i: counts[i])
        if counts[j] <= 1:
            break
        counts[j] -= 1
    if sum(counts) != n or min(counts) < 1:
        raise DataError(f"cannot split {n} speakers by {fractions}")
    return counts


def split_by_speaker(records, fractions, rng, language=""):
    """Partition speakers into train/validation/test, then assign segments."""
    speakers = sorted({r.speaker for r in records})
    if len(speakers) < 3:
        raise DataError(f"need at least 3 speakers to split, got {len(speakers)}")
    counts = _split_counts(len(speakers), fractions)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    spk_sets = {}
    start = 0
    for name, c in zip(SPLITS, counts):
        spk_sets[name] = sorted(order[start : start + c])
        start += c
    owner = {s: name for name, group in spk_sets.items() for s in group}
    splits = {name: [] for name in SPLITS}
    for r in records:
        splits[owner[r.speaker]].append(r.segment_id)
    return SplitManifest(language, splits, spk_sets)


def pair_same_type(records, rng, different_speaker=False):
    """(anchor id, positive id) pairs within word types.

    Each record whose word type has another eligible instance anchors exactly
    one pair; its positive is drawn uniformly among those instances.
    """
    by_word = defaultdict(list)
    for r in records:
        by_word[r.word].append(r)
    pairs = []
    for r in records:
        cands = [c.segment_id for c in by_word[r.word]
                 if c.segment_id != r.segment_id
                 and (not different_speaker or c.speaker != r.speaker)]
        if cands:
            pairs.append((r.segment_id, cands[int(rng.integers(len(cands)))]))
    return pairs


@dataclass
class Corpus:
    """Manifest plus lazily opened feature files for one language."""

    language: str
    records: list
    split: SplitManifest
    root: Path = Path(".")
    meta: dict = field(default_factory=dict)
    _files: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.by_id = {r.segment_id: r for r in self.records}

    def subset(self, name):
        return [self.by_id[i] for i in self.split.splits[name]]

    def features(self, segment_id):
        r = self.by_id[segment_id]
        path = self.root / r.feat_file
        ff = self._files.get(path)
        if ff is None:
            ff = self._files[path] = FeatureFile(path)
        return ff.get(r.feat_id or r.segment_id).frames

    def feature_list(self, ids):
        return [self.features(i) for i in ids]

    def to_json(self):
        return {"language": self.language,
                "segments": [r.to_json() for r in self.records],
                **self.split.to_json(),
                "meta": self.meta}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        try:
            with open(path) as fh:
                d = json.load(fh)
            records = [SegmentRecord.from_json(s) for s in d["segments"]]
            split = SplitManifest(d["language"], d["splits"], d["speakers"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: malformed manifest ({exc})") from exc
        return cls(d["language"], records, split, path.parent, d.get("meta", {}))
