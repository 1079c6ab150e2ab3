import numpy as np
import pytest
from hypothesis import settings

from awebench.corpus import Corpus, SegmentRecord, filter_segments, split_by_speaker
from awebench.features import write_features
from awebench.nncore import Rng
from awebench.synthlang import SynthCorpusConfig, make_language, synthesize_corpus

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def build_toy_corpus(root, language="T", seed=0, k=8, n_speakers=8, n_word_types=12,
                     tokens_per_speaker=16, split=(4, 2, 2)):
    rng = Rng(seed)
    spec = make_language(language, rng.derive("lang"), n_vowels=3, n_consonants=5, k=k)
    cfg = SynthCorpusConfig(n_speakers=n_speakers, n_word_types=n_word_types,
                            tokens_per_speaker=tokens_per_speaker, word_length=(4, 5))
    recs, feats, _ = synthesize_corpus(spec, cfg, rng.derive("corpus"))
    root.mkdir(parents=True, exist_ok=True)
    write_features(root / "f.awef", feats)
    records = filter_segments([SegmentRecord(r["id"], r["word"], tuple(r["phones"]),
                                             r["speaker"], r["dur_s"], "f.awef", r["id"])
                               for r in recs])
    manifest = split_by_speaker(records, split, rng.derive("split"), language)
    corpus = Corpus(language, records, manifest, root)
    corpus.save(root / "manifest.json")
    return corpus


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    return build_toy_corpus(tmp_path_factory.mktemp("toy"))


@pytest.fixture
def np_rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
