"""Synthetic language families with controllable typological distance.

A :class:`LanguageSpec` is a phone inventory (three-sub-state prototype
trajectories in feature space plus duration ranges), a bigram phonotactic
matrix with word-start/word-end states, a stress mode and a vowel-reduction
strength. ``derive_language`` perturbs a spec by a scalar amount, and
``render`` turns a phone sequence into a feature sequence for a speaker.
"""

import json
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .features import FeatureSequence

SCHEMA_VERSION = 1
STRESS_MODES = ("fixed-initial", "fixed-penultimate", "free-movable")
N_SUBSTATES = 3
RATE_RANGE = (0.7, 1.3)
# phone-to-phone weights in the base phonotactics, by (previous class, next class)
_CV_WEIGHTS = {("consonant", "vowel"): 3.0, ("vowel", "consonant"): 3.0,
               ("consonant", "consonant"): 0.6, ("vowel", "vowel"): 0.3}


@dataclass
class LanguageSpec:
    """Phone inventory, phonotactics and prosody of one synthetic language.

    ``transitions`` has shape ``[n + 1, n + 1]``: row 0 is the word-start
    state, rows ``1..n`` the phones; columns ``0..n-1`` are phones and the
    last column is the word-end state.
    """

    language_id: str
    phones: list
    classes: list
    prototypes: np.ndarray
    durations: np.ndarray
    transitions: np.ndarray
    stress_mode: str = "fixed-initial"
    vowel_reduction: float = 0.0

    def __post_init__(self):
        n = len(self.phones)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        self.durations = np.asarray(self.durations, dtype=np.int64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if len(set(self.phones)) != n or len(self.classes) != n:
            raise ConfigError("phone symbols must be unique and each needs a class")
        if self.prototypes.ndim != 3 or self.prototypes.shape[:2] != (n, N_SUBSTATES):
            raise ShapeError(f"prototypes must be [{n}, {N_SUBSTATES}, k], "
                             f"got {self.prototypes.shape}")
        if not np.isfinite(self.prototypes).all():
            raise ConfigError("prototypes must be finite")
        if self.durations.shape != (n, 2) or (self.durations[:, 0] < 1).any() or (
            self.durations[:, 1] < self.durations[:, 0]
        ).any():
            raise ConfigError("durations must be [n, 2] with 1 <= dmin <= dmax")
        if self.transitions.shape != (n + 1, n + 1) or (self.transitions < 0).any():
            raise ConfigError(f"transitions must be a nonnegative [{n + 1}, {n + 1}] matrix")
        if not np.allclose(self.transitions.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("transition rows must sum to 1")
        if "vowel" not in self.classes or "consonant" not in self.classes:
            raise ConfigError("inventory needs at least one vowel and one consonant")
        if set(self.classes) - {"vowel", "consonant"}:
            raise ConfigError("phone classes must be 'vowel' or 'consonant'")
        if self.stress_mode not in STRESS_MODES:
            raise ConfigError(f"unknown stress mode {self.stress_mode!r}")
        if not 0.0 <= self.vowel_reduction <= 1.0:
            raise ConfigError("vowel_reduction must lie in [0, 1]")

    @property
    def k(self):
        return self.prototypes.shape[2]

    @property
    def n_phones(self):
        return len(self.phones)

    def phone_index(self):
        return {p: i for i, p in enumerate(self.phones)}

    def centroid(self):
        return self.prototypes.reshape(-1, self.k).mean(axis=0)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "language_id": self.language_id,
            "phones": list(self.phones),
            "classes": list(self.classes),
            "prototypes": self.prototypes.tolist(),
            "durations": self.durations.tolist(),
            "transitions": self.transitions.tolist(),
            "stress_mode": self.stress_mode,
            "vowel_reduction": float(self.vowel_reduction),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported LanguageSpec schema {d.get('schema_version')!r}")
        return cls(
            language_id=d["language_id"],
            phones=list(d["phones"]),
            classes=list(d["classes"]),
            prototypes=np.array(d["prototypes"]),
            durations=np.array(d["durations"]),
            transitions=np.array(d["transitions"]),
            stress_mode=d["stress_mode"],
            vowel_reduction=d["vowel_reduction"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SpeakerModel:
    speaker_id: str
    gender: str
    scale: np.ndarray
    offset: np.ndarray
    rate: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        if (self.scale <= 0).any():
            raise ConfigError("speaker scale entries must be > 0")
        if not RATE_RANGE[0] <= self.rate <= RATE_RANGE[1]:
            raise ConfigError(f"speaking rate {self.rate} outside {RATE_RANGE}")
        if self.noise < 0:
            raise ConfigError("noise level must be >= 0")

    @classmethod
    def identity(cls, k, speaker_id="id"):
        return cls(speaker_id, "n/a", np.ones(k), np.zeros(k), 1.0, 0.0)

    def warp(self, frames):
        return frames * self.scale + self.offset

    def unwarp(self, frames):
        return (frames - self.offset) / self.scale

    def to_dict(self):
        return {"speaker_id": self.speaker_id, "gender": self.gender,
                "scale": self.scale.tolist(), "offset": self.offset.tolist(),
                "rate": self.rate, "noise": self.noise}


def _random_transitions(classes, rng, concentration=1.0):
    n = len(classes)
    trans = np.zeros((n + 1, n + 1))
    trans[0, :n] = rng.dirichlet(np.full(n, concentration))
    for i, ci in enumerate(classes):
        w = np.array([_CV_WEIGHTS[(ci, cj)] for cj in classes])
        row = rng.dirichlet(np.full(n, concentration)) * w
        end = 0.25 if ci == "vowel" else 0.08
        trans[i + 1, :n] = (1.0 - end) * row / row.sum()
        trans[i + 1, n] = end
    return trans


def _random_prototypes(classes, k, rng, scale=1.0):
    protos = rng.normal(0.0, scale, (len(classes), N_SUBSTATES, k))
    # vowels: steadier trajectories with a shared voicing component
    voicing = np.linspace(1.0, -1.0, k)
    for i, c in enumerate(classes):
        if c == "vowel":
            mid = protos[i, 1]
            protos[i] = 0.5 * protos[i] + 0.5 * mid + 0.5 * voicing
    return protos


def make_language(language_id, rng, n_vowels=6, n_consonants=14, k=39,
                  duration_range=(1, 2), stress_mode="fixed-initial", vowel_reduction=0.0):
    """Random base language."""
    classes = ["vowel"] * n_vowels + ["consonant"] * n_consonants
    phones = [f"{language_id}.p{i:02d}" for i in range(len(classes))]
    durations = np.tile(np.array(duration_range, dtype=np.int64), (len(classes), 1))
    return LanguageSpec(
        language_id=language_id,
        phones=phones,
        classes=classes,
        prototypes=_random_prototypes(classes, k, rng),
        durations=durations,
        transitions=_random_transitions(classes, rng),
        stress_mode=stress_mode,
        vowel_reduction=vowel_reduction,
    )


def derive_language(base, perturbation, rng, language_id=None):
    """Perturbed copy of ``base``.

    ``round(p * n)`` phones get fresh symbols and fresh prototypes; every
    retained prototype moves a fraction ``p`` toward a random target; the
    phonotactic matrix, vowel reduction and (with probability ``p``) the stress
    mode are mixed toward random values by the same fraction.
    """
    p = float(perturbation)
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"perturbation must lie in [0, 1], got {perturbation}")
    lang = language_id or f"{base.language_id}~{p:g}"
    n = base.n_phones
    n_replace = int(round(p * n))
    order = rng.permutation(n)
    replaced = set(order[:n_replace].tolist())
    targets = _random_prototypes(base.classes, base.k, rng)
    fresh = _random_prototypes(base.classes, base.k, rng)
    phones = list(base.phones)
    protos = base.prototypes.copy()
    for i in range(n):
        if i in replaced:
            phones[i] = f"{lang}.p{i:02d}"
            protos[i] = fresh[i]
        else:
            protos[i] = (1.0 - p) * base.prototypes[i] + p * targets[i]
    trans = (1.0 - p) * base.transitions + p * _random_transitions(base.classes, rng)
    switch = rng.random() < p
    stress = base.stress_mode
    if switch:
        others = [m for m in STRESS_MODES if m != base.stress_mode]
        stress = others[int(rng.integers(len(others)))]
    reduction = (1.0 - p) * base.vowel_reduction + p * float(rng.random())
    return LanguageSpec(
        language_id=lang,
        phones=phones,
        classes=list(base.classes),
        prototypes=protos,
        durations=base.durations.copy(),
        transitions=trans,
        stress_mode=stress,
        vowel_reduction=reduction,
    )


def _union_transitions(spec, symbols):
    """Embed ``spec.transitions`` into the state space of ``symbols``."""
    pos = {s: i for i, s in enumerate(symbols)}
    m = len(symbols)
    out = np.zeros((m + 1, m + 1))
    rows = [0] + [pos[s] + 1 for s in spec.phones]
    cols = [pos[s] for s in spec.phones] + [m]
    out[np.ix_(rows, cols)] = spec.transitions
    return out


def language_distance(a, b, unmatched_penalty=10.0):
    """Symmetric typological distance between two specs.

    Sum of: mean Euclidean distance between prototypes of shared phone
    symbols; ``unmatched_penalty`` times the fraction of the inventory union not
    shared; the mean row-wise L1 distance between phonotactic matrices on the
    union state space; the vowel-reduction gap; and 1 if stress modes differ.
    """
    if a.k != b.k:
        raise ShapeError(f"feature dims differ: {a.k} vs {b.k}")
    ia, ib = a.phone_index(), b.phone_index()
    shared = [s for s in a.phones if s in ib]
    union = list(a.phones) + [s for s in b.phones if s not in ia]
    if shared:
        pa = np.stack([a.prototypes[ia[s]] for s in shared])
        pb = np.stack([b.prototypes[ib[s]] for s in shared])
        proto = float(np.sqrt(((pa - pb) ** 2).sum(axis=(1, 2))).mean())
    else:
        proto = 0.0
    unmatched = (len(union) - len(shared)) / len(union)
    ta, tb = _union_transitions(a, union), _union_transitions(b, union)
    phono = float(np.abs(ta - tb).sum() / ta.shape[0])
    prosody = abs(a.vowel_reduction - b.vowel_reduction) + float(a.stress_mode != b.stress_mode)
    return proto + unmatched_penalty * unmatched + phono + prosody


def sample_word(spec, length_range, rng, max_retries=100):
    """Markov walk over the phonotactics, returning a tuple of phone symbols.

    Below the minimum length the word-end state is excluded (rows are
    renormalised over phones); from the minimum on, the walk may end; at the
    maximum it stops. Phone-to-phone transitions therefore always follow the
    renormalised phone part of each row.
    """
    lo, hi = length_range
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid length range {length_range}")
    n = spec.n_phones
    trans = spec.transitions
    phone_rows = trans[:, :n]
    mass = phone_rows.sum(axis=1)
    for _ in range(max_retries):
        state = 0
        word = []
        while len(word) < hi:
            if mass[state] <= 0.0:
                break
            if len(word) >= lo:
                nxt = int(rng.choice(n + 1, p=trans[state]))
                if nxt == n:
                    break
            else:
                nxt = int(rng.choice(n, p=phone_rows[state] / mass[state]))
            word.append(nxt)
            state = nxt + 1
        if lo <= len(word) <= hi:
            return tuple(spec.phones[i] for i in word)
    raise DataError(f"phonotactics of {spec.language_id} cannot produce a word of length "
                    f"{length_range} after {max_retries} attempts")


def stressed_position(phone_seq, spec):
    """Index into ``phone_seq`` of the stressed vowel (None if no vowel)."""
    cls = dict(zip(spec.phones, spec.classes))
    vowels = [i for i, p in enumerate(phone_seq) if cls[p] == "vowel"]
    if not vowels:
        return None
    if spec.stress_mode == "fixed-initial":
        return vowels[0]
    if spec.stress_mode == "fixed-penultimate":
        return vowels[-2] if len(vowels) > 1 else vowels[0]
    # free stress: lexically fixed per word form
    key = zlib.crc32("|".join(phone_seq).encode())
    return vowels[key % len(vowels)]


def duration_bounds(phone_seq, spec):
    """Inclusive (min, max) frame count ``render`` can produce."""
    idx = spec.phone_index()
    lo = hi = 0
    for p in phone_seq:
        dmin, dmax = spec.durations[idx[p]]
        lo += N_SUBSTATES * _min_hold(dmin)
        hi += N_SUBSTATES * _max_hold(dmax)
    return lo, hi


def _min_hold(dmin):
    return max(1, int(np.ceil(dmin * RATE_RANGE[0] - 1e-9)))


def _max_hold(dmax):
    return int(np.floor(dmax * RATE_RANGE[1] + 1e-9))


def render(phone_seq, spec, speaker, rng, return_boundaries=False):
    """Feature sequence for ``phone_seq`` spoken by ``speaker``.

    Each phone's sub-states are held for ``round(d * rate)`` frames with
    ``d ~ U{dmin..dmax}``. Under free stress, unstressed vowels are shortened
    and pulled toward the inventory centroid by ``vowel_reduction``. The
    speaker warp and Gaussian noise are applied last.
    """
    idx = spec.phone_index()
    for p in phone_seq:
        if p not in idx:
            raise DataError(f"phone {p!r} not in inventory of {spec.language_id}")
    if speaker.scale.shape != (spec.k,):
        raise ShapeError(f"speaker warp dim {speaker.scale.shape} != k={spec.k}")
    stressed = stressed_position(phone_seq, spec)
    reduce_on = spec.stress_mode == "free-movable" and spec.vowel_reduction > 0
    centroid = spec.centroid()
    pieces = []
    boundaries = []
    t = 0
    for pos, p in enumerate(phone_seq):
        i = idx[p]
        dmin, dmax = (int(v) for v in spec.durations[i])
        reduced = reduce_on and spec.classes[i] == "vowel" and pos != stressed
        proto = spec.prototypes[i]
        if reduced:
            proto = (1.0 - spec.vowel_reduction) * proto + spec.vowel_reduction * centroid
        for s in range(N_SUBSTATES):
            d = int(rng.integers(dmin, dmax + 1))
            hold = d * speaker.rate
            if reduced:
                hold *= 1.0 - 0.5 * spec.vowel_reduction
            hold = min(max(int(round(hold)), _min_hold(dmin)), _max_hold(dmax))
            pieces.append(np.repeat(proto[s][None, :], hold, axis=0))
            t += hold
        boundaries.append(t)
    frames = speaker.warp(np.concatenate(pieces, axis=0))
    if speaker.noise > 0:
        frames = frames + rng.normal(0.0, speaker.noise, frames.shape)
    seq = FeatureSequence(frames)
    return (seq, boundaries) if return_boundaries else seq


def make_speakers(n, k, rng, prefix="spk", scale_sd=0.15, offset_sd=0.3, gender_shift=0.4,
                  noise=0.25, rate_range=(0.85, 1.15)):
    """Gender-balanced speakers with random affine warps and speaking rates."""
    gender_dir = rng.normal(0.0, 1.0, k)
    gender_dir /= np.linalg.norm(gender_dir) / np.sqrt(k)
    speakers = []
    for s in range(n):
        gender = "f" if s % 2 == 0 else "m"
        sign = 1.0 if gender == "f" else -1.0
        speakers.append(SpeakerModel(
            speaker_id=f"{prefix}{s:02d}",
            gender=gender,
            scale=np.exp(rng.normal(0.0, scale_sd, k)),
            offset=rng.normal(0.0, offset_sd, k) + sign * gender_shift * gender_dir,
            rate=float(rng.uniform(*rate_range)),
            noise=noise,
        ))
    return speakers


@dataclass
class SynthCorpusConfig:
    n_speakers: int = 10
    n_word_types: int = 60
    tokens_per_speaker: int = 120
    word_length: tuple = (4, 7)
    speaker_noise: float = 0.25


def synthesize_corpus(spec, cfg, rng):
    """Lexicon, speakers and rendered tokens for one language.

    Returns ``(records, features, speakers)`` where ``records`` are plain dicts
    (segment id, word, phones, speaker, duration) and ``features`` maps segment
    ids to :class:`FeatureSequence`.
    """
    lex_rng = rng.derive("lexicon")
    lexicon = []
    seen = set()
    attempts = 0
    while len(lexicon) < cfg.n_word_types:
        w = sample_word(spec, cfg.word_length, lex_rng)
        attempts += 1
        if w not in seen:
            seen.add(w)
            lexicon.append(w)
        if attempts > 100 * cfg.n_word_types:
            raise DataError("could not sample enough distinct word types")
    speakers = make_speakers(cfg.n_speakers, spec.k, rng.derive("speakers"),
                             prefix=f"{spec.language_id}.s", noise=cfg.speaker_noise)
    records = []
    features = {}
    for spk in speakers:
        srng = rng.derive(f"tokens:{spk.speaker_id}")
        words = srng.integers(0, len(lexicon), cfg.tokens_per_speaker)
        for j, w in enumerate(words):
            phones = lexicon[int(w)]
            seg = render(phones, spec, spk, srng)
            sid = f"{spk.speaker_id}.{j:04d}"
            features[sid] = seg
            records.append({
                "id": sid,
                "word": f"{spec.language_id}.w{int(w):04d}",
                "phones": list(phones),
                "speaker": spk.speaker_id,
                "dur_s": seg.duration_s,
            })
    return records, features, speakers
