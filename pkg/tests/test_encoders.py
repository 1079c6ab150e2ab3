import math

import numpy as np
import pytest

from awebench.encoders import (EmbeddingMatrix, EncoderModel, ModelConfig, TrainConfig,
                               cae_loss, cse_loss, cse_loss_from_embeddings, embed_set, encode,
                               encode_batch, load_checkpoint, load_embeddings, pge_loss,
                               save_checkpoint, save_embeddings, train, triplet_hinge,
                               validation_evalset)
from awebench.encoders.losses import distance_matrix, hardest_negatives
from awebench.errors import ConfigError, DataError, FormatError, ShapeError
from awebench.eval import map_same_different, shuffled_baseline
from awebench.nncore import GruCellParams, Rng, Tensor, gru_cell_forward
from gradcheck import check_gradients, toy_loss_instance

PHONES = [f"p{i}" for i in range(28)]


def _model(objective, k=4, h=3, phones=PHONES, seed=0, layers=2):
    cfg = ModelConfig(objective, k, hidden=h, layers=layers,
                      phones=phones if objective == "PGE" else [])
    return EncoderModel.init(cfg, Rng(seed))


def _decoder_states(model, x, inputs):
    """Decoder states by explicit per-step cell calls."""
    h = x
    out = []
    for inp in inputs:
        h = gru_cell_forward(model.decoder, inp, h).data
        out.append(h)
    return out


def test_zero_model_encodes_to_zero():
    m = EncoderModel.zeros(ModelConfig("CSE", 4, hidden=5))
    e = encode(m, np.random.default_rng(0).normal(size=(7, 4)))
    assert e.shape == (10,) and np.array_equal(e, np.zeros(10))


def test_full_profile_dimension():
    cfg = ModelConfig("CSE", 39, hidden=512)
    assert cfg.embedding_dim == 1024
    assert encode(EncoderModel.zeros(cfg), np.ones((3, 39))).shape == (1024,)


def test_vocab_has_bos_eos_once():
    v = ModelConfig("PGE", 4, phones=PHONES).vocab
    assert v.count("<bos>") == 1 and v.count("<eos>") == 1 and len(v) == 30


def test_tied_single_layer_reversal_swaps_halves():
    m = _model("CSE", layers=1)
    fw, bw = m.encoder[0]
    for a, b in zip(fw.tensors(), bw.tensors()):
        b.data = a.data.copy()
    A = np.random.default_rng(1).normal(size=(6, 4))
    e, er = encode(m, A), encode(m, A[::-1])
    assert np.max(np.abs(e[:3] - er[3:])) <= 1e-14
    assert np.max(np.abs(e[3:] - er[:3])) <= 1e-14


def test_encode_is_order_sensitive():
    m = _model("CSE", seed=3)
    A = np.random.default_rng(2).normal(size=(8, 4))
    perm = np.random.default_rng(3).permutation(8)
    assert not np.allclose(encode(m, A), encode(m, A[perm]))


def test_batch_encoding_matches_single():
    m = _model("CSE", seed=4)
    rng = np.random.default_rng(4)
    seqs = [rng.normal(size=(n, 4)) for n in (3, 9, 1, 5)]
    batch = encode_batch(m, seqs).data
    for i, s in enumerate(seqs):
        assert np.max(np.abs(batch[i] - encode(m, s))) <= 1e-13


def test_encode_dimension_error():
    with pytest.raises(ShapeError):
        encode(_model("CSE"), np.ones((3, 5)))


def test_pge_uniform_decoder():
    m = _model("PGE")
    m.params["out.w"].data[:] = 0
    m.params["out.b"].data[:] = 0
    loss = pge_loss(m, np.ones((4, 4)), PHONES[:6]).item()
    assert loss == pytest.approx(7 * math.log(30), abs=1e-12)


def test_pge_perfect_prediction_is_zero():
    m = _model("PGE", phones=PHONES[:3])
    m.params["out.w"].data[:] = 0
    target = PHONES[:0]  # only EOS is predicted
    m.params["out.b"].data[:] = -1e3
    m.params["out.b"].data[1] = 1e3
    assert pge_loss(m, np.ones((4, 4)), target).item() == pytest.approx(0.0, abs=1e-300)


def test_pge_matches_step_oracle():
    m = _model("PGE", seed=5)
    A = np.random.default_rng(5).normal(size=(5, 4))
    phones = [PHONES[3], PHONES[0], PHONES[7]]
    vocab = m.config.vocab
    V = len(vocab)
    x = encode(m, A)[None, :]
    prev = ["<bos>"] + phones
    tgt = phones + ["<eos>"]
    inputs = []
    for p in prev:
        oh = np.zeros((1, V))
        oh[0, vocab.index(p)] = 1.0
        inputs.append(np.concatenate([oh, x], axis=1))
    total = 0.0
    for h, t in zip(_decoder_states(m, x, inputs), tgt):
        logits = (h @ m.params["out.w"].data + m.params["out.b"].data)[0]
        mx = max(logits)
        lse = mx + math.log(sum(math.exp(v - mx) for v in logits))
        total += lse - logits[vocab.index(t)]
    assert abs(pge_loss(m, A, phones).item() - total) <= 1e-10


def test_pge_unknown_phone():
    with pytest.raises(DataError):
        pge_loss(_model("PGE"), np.ones((3, 4)), ["zz"])


def test_cae_degenerate_cases():
    m = _model("CAE")
    m.params["out.w"].data[:] = 0
    target = np.tile(np.array([0.5, -1.0, 2.0, 0.0]), (6, 1))
    m.params["out.b"].data[:] = target[0]
    assert cae_loss(m, np.ones((3, 4)), target).item() == 0.0
    m.params["out.b"].data[:] = 0
    assert cae_loss(m, np.ones((3, 4)), target).item() == pytest.approx(np.sum(target ** 2))


def test_cae_matches_brute_force():
    m = _model("CAE", seed=6)
    rng = np.random.default_rng(6)
    A, Ap = rng.normal(size=(5, 4)), rng.normal(size=(7, 4))
    x = encode(m, A)[None, :]
    total = 0.0
    for h, a in zip(_decoder_states(m, x, [x] * 7), Ap):
        y = (h @ m.params["out.w"].data + m.params["out.b"].data)[0]
        total += sum((ai - yi) ** 2 for ai, yi in zip(a, y))
    assert abs(cae_loss(m, A, Ap).item() - total) <= 1e-10
    with pytest.raises(ShapeError):
        cae_loss(m, A, np.ones((3, 5)))


def test_triplet_hinge_arithmetic():
    assert triplet_hinge(0.1, 0.5, 0.25) == 0.0
    assert triplet_hinge(0.4, 0.3, 0.25) == pytest.approx(0.35)


def test_hardest_negative_vs_enumeration():
    rng = np.random.default_rng(7)
    P = 6
    xa, xp = rng.normal(size=(P, 5)), rng.normal(size=(P, 5))
    words = np.array(["a", "b", "c", "a", "b", "c"])
    _, neg = cse_loss_from_embeddings(Tensor(xa), Tensor(xp), words, 0.25,
                                      return_negatives=True)
    pool = np.concatenate([xa, xp])
    pool_words = np.concatenate([words, words])
    for i in range(P):
        best, arg = np.inf, None
        for j in range(2 * P):
            if pool_words[j] == words[i]:
                continue
            c = pool[j] @ xa[i] / (np.linalg.norm(pool[j]) * np.linalg.norm(xa[i]))
            if (1 - c) / 2 < best:
                best, arg = (1 - c) / 2, j
        assert neg[i] == arg


def test_cse_hinge_inactive_and_value():
    xa = np.array([[1.0, 0.0], [0.0, 1.0]])
    xp = np.array([[1.0, 0.01], [0.01, 1.0]])
    loss = cse_loss_from_embeddings(Tensor(xa), Tensor(xp), ["a", "b"], 0.25)
    assert loss.item() == 0.0
    xp_far = np.array([[0.0, 1.0], [1.0, 0.0]])
    loss = cse_loss_from_embeddings(Tensor(xa), Tensor(xp_far), ["a", "b"], 0.25)
    d = distance_matrix(Tensor(xa), Tensor(np.concatenate([xa, xp_far]))).data
    other = [[1, 3], [0, 2]]  # columns holding the other word type
    want = np.mean([max(0, 0.25 + d[i, i + 2] - d[i, other[i]].min()) for i in range(2)])
    assert loss.item() == pytest.approx(want)


def test_cse_requires_two_types():
    m = _model("CSE")
    pairs = [(np.ones((3, 4)), np.ones((4, 4)))] * 2
    with pytest.raises(DataError):
        cse_loss(m, pairs, ["a", "a"])


def test_distance_conventions():
    a = Tensor(np.array([[1.0, 0.0]]))
    b = Tensor(np.array([[-1.0, 0.0]]))
    assert distance_matrix(a, b).item() == 1.0
    assert distance_matrix(a, b, "cosine").item() == 2.0


def test_losses_nonnegative():
    for obj in ("PGE", "CAE", "CSE"):
        fn, _ = toy_loss_instance(obj, 3)
        assert fn().item() >= 0


@pytest.mark.parametrize("objective", ["PGE", "CAE", "CSE"])
def test_gradients_finite_difference(objective):
    for seed in range(3):
        fn, params = toy_loss_instance(objective, seed)
        assert check_gradients(fn, params, np.random.default_rng(seed), max_coords=8) <= 1e-4


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig("XYZ", 4)
    with pytest.raises(ConfigError):
        ModelConfig("PGE", 4)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"bogus": 1})


def test_checkpoint_round_trip(tmp_path, toy_corpus):
    m = _model("PGE", k=8, h=4, phones=sorted({p for r in toy_corpus.records for p in r.phones}))
    m.history = [{"epoch": 1, "val_map": 0.5}]
    save_checkpoint(tmp_path / "m.awec", m, {"seed": 1})
    back = load_checkpoint(tmp_path / "m.awec")
    assert back.history == m.history and back.train_config == {"seed": 1}
    for k, v in m.params.items():
        assert np.array_equal(v.data, back.params[k].data)
    a = map_same_different(validation_evalset(m, toy_corpus))
    assert map_same_different(validation_evalset(back, toy_corpus)) == a
    blob = (tmp_path / "m.awec").read_bytes()
    (tmp_path / "bad.awec").write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "bad.awec")
    (tmp_path / "short.awec").write_bytes(blob[:-20])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "short.awec")


def test_embed_set_contract(tmp_path):
    m = _model("CSE", k=4, h=64)
    rng = np.random.default_rng(8)
    stim = [(f"s{i}", rng.normal(size=(int(rng.integers(2, 9)), 4))) for i in range(500)]
    m.config.language = "B"
    em = embed_set(m, stim, "A")
    assert em.shape == (128, 500) and em.ids[3] == "s3"
    assert (em.stimuli_language, em.encoder_language, em.objective) == ("A", "B", "CSE")
    assert np.array_equal(embed_set(m, stim, "A").data, em.data)
    with pytest.raises(DataError):
        embed_set(m, [], "A")
    with pytest.raises(ShapeError, match="s1"):
        embed_set(m, [("s0", np.ones((3, 4))), ("s1", np.ones((3, 5)))], "A")
    save_embeddings(tmp_path / "e.awex", em)
    back = load_embeddings(tmp_path / "e.awex")
    assert np.array_equal(back.data, em.data) and back.ids == em.ids and back.tag == "A/B"
    with pytest.raises(ShapeError):
        EmbeddingMatrix(np.ones((2, 3)), ["a"], "A", "A", "CSE")


def test_training_determinism_and_selection(toy_corpus):
    cfg = TrainConfig(epochs=2, batch_size=16, hidden=6, seed=3)
    m1, h1 = train("CAE", toy_corpus, cfg)
    m2, h2 = train("CAE", toy_corpus, cfg)
    strip = [{k: v for k, v in e.items() if k != "seconds"} for e in h1]
    assert strip == [{k: v for k, v in e.items() if k != "seconds"} for e in h2]
    for k in m1.params:
        assert np.array_equal(m1.params[k].data, m2.params[k].data)
    best = max(e["val_map"] for e in h1)
    assert map_same_different(validation_evalset(m1, toy_corpus)) == best


def test_toy_cse_beats_shuffled_baseline(toy_corpus):
    cfg = TrainConfig(epochs=20, batch_size=32, hidden=16, seed=0)
    model, history = train("CSE", toy_corpus, cfg)
    es = validation_evalset(model, toy_corpus)
    value = map_same_different(es)
    base = shuffled_baseline(es, 10, Rng(0))
    assert value >= 5 * base
    # trained model stays order sensitive
    seq = toy_corpus.features(toy_corpus.records[0].segment_id)
    assert not np.allclose(encode(model, seq), encode(model, seq[::-1]))


def test_training_errors(toy_corpus):
    from awebench.corpus import Corpus, SplitManifest

    empty = Corpus("E", toy_corpus.records,
                   SplitManifest("E", {"train": [r.segment_id for r in toy_corpus.records],
                                       "validation": [], "test": []},
                                 {"train": [], "validation": [], "test": []}),
                   toy_corpus.root)
    with pytest.raises(DataError):
        train("PGE", empty, TrainConfig(epochs=1))
