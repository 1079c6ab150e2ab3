"""Same-different word discrimination by exact cosine retrieval."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateInputError

ANY_SPEAKER = "same-word-any-speaker"
DIFFERENT_SPEAKER = "same-word-different-speaker"
MODES = (ANY_SPEAKER, DIFFERENT_SPEAKER)


@dataclass
class EvalSet:
    """Embeddings ``[D, N]`` with a word-type and speaker label per column."""

    X: np.ndarray
    words: np.ndarray
    speakers: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.words = np.asarray(self.words)
        self.speakers = np.asarray(self.speakers)
        n = self.X.shape[1]
        if n < 2:
            raise DataError("an evaluation set needs at least 2 embeddings")
        if len(self.words) != n or len(self.speakers) != n:
            raise DataError("label arrays must have one entry per column")


def _unit_columns(X):
    norms = np.linalg.norm(X, axis=0)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise DegenerateInputError(f"zero-norm embedding in column {int(bad[0])}")
    return X / norms


def cosine_distances(X):
    """``(1 - cos) / 2`` between all column pairs."""
    U = _unit_columns(np.asarray(X, dtype=np.float64))
    return 0.5 * (1.0 - np.clip(U.T @ U, -1.0, 1.0))


def cosine_rank(X, query):
    """Other columns sorted by ascending cosine distance (ties by index)."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    if norms[query] == 0:
        raise DegenerateInputError(f"zero-norm embedding in column {query}")
    U = _unit_columns(X)
    d = 0.5 * (1.0 - np.clip(U[:, query] @ U, -1.0, 1.0))
    others = np.array([j for j in range(X.shape[1]) if j != query], dtype=np.int64)
    order = others[np.argsort(d[others], kind="stable")]
    return [(int(j), float(d[j])) for j in order]


def average_precision(relevant):
    """Mean over relevant ranks r of precision@r; ``relevant`` is rank-ordered."""
    rel = np.asarray(relevant, dtype=bool)
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        raise ValueError("average precision is undefined without relevant items")
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def map_same_different(evalset, mode=DIFFERENT_SPEAKER, return_count=False):
    """Mean AP over queries with at least one relevant item under ``mode``.

    In different-speaker mode, same-word items from the query's own speaker are
    removed from the ranking.
    """
    if mode not in MODES:
        raise ValueError(f"unknown relevance mode {mode!r}")
    D = cosine_distances(evalset.X)
    words, spk = evalset.words, evalset.speakers
    n = D.shape[0]
    aps = []
    for q in range(n):
        same_word = words == words[q]
        keep = np.ones(n, dtype=bool)
        keep[q] = False
        if mode == DIFFERENT_SPEAKER:
            keep &= ~(same_word & (spk == spk[q]))
        rel = same_word & keep
        if not rel.any():
            continue
        cand = np.flatnonzero(keep)
        order = cand[np.argsort(D[q, cand], kind="stable")]
        aps.append(average_precision(rel[order]))
    if not aps:
        raise DataError(f"no query has a relevant item under {mode}")
    value = float(np.mean(aps))
    return (value, len(aps)) if return_count else value


def shuffled_baseline(evalset, trials, rng, mode=DIFFERENT_SPEAKER):
    """Mean mAP after uniformly permuting the word-type labels."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    vals = []
    for _ in range(trials):
        perm = rng.permutation(len(evalset.words))
        shuffled = EvalSet(evalset.X, evalset.words[perm], evalset.speakers)
        vals.append(map_same_different(shuffled, mode))
    return float(np.mean(vals))


def expected_random_ap(n_candidates, n_relevant):
    """Expected AP when ``n_relevant`` of ``n_candidates`` sit at random ranks."""
    n, R = n_candidates, n_relevant
    harmonic = np.sum(1.0 / np.arange(1, n + 1))
    if n == 1:
        return 1.0
    return float((harmonic + (R - 1) / (n - 1) * (n - harmonic)) / n)


def write_results(path, language, objective, mode, map_value, n_queries, baseline):
    with open(path, "w") as fh:
        json.dump({"language": language, "objective": objective, "mode": mode,
                   "mAP": map_value, "n_queries": n_queries, "baseline": baseline},
                  fh, indent=2)
