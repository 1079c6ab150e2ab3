"""PGE, CAE and CSE training objectives.

PGE and CAE return per-segment sums averaged over the batch (``per_step=True``
divides each segment's sum by its number of decoder steps first). CSE returns
the mean hinge over anchors.
"""

import numpy as np

from ..errors import DataError, ShapeError
from ..nncore import Tensor, gru_sequence
from ..nncore.tensor import (broadcast_to, concat, cross_entropy_sum, matmul, relu,
                             reshape, sqrt, square, tsum)
from .model import BOS, EOS, encode_batch


def _decode(model, x, inputs, mask):
    """Run the decoder from initial state ``x`` and project every state."""
    T, B = mask.shape
    states = gru_sequence(model.decoder, inputs, mask, h0=x)
    D = model.config.embedding_dim
    flat = reshape(states, (T * B, D))
    return matmul(flat, model.params["out.w"]) + model.params["out.b"]


def _phone_targets(model, phone_seqs):
    vocab = {p: i for i, p in enumerate(model.config.vocab)}
    ids = []
    for seq in phone_seqs:
        try:
            ids.append([vocab[p] for p in seq])
        except KeyError as exc:
            raise DataError(f"phone {exc.args[0]!r} not in the model vocabulary") from None
    return ids, vocab


def pge_loss_batch(model, seqs, phone_seqs, per_step=False):
    """Teacher-forced phone-sequence cross-entropy (targets end with EOS)."""
    if model.config.objective != "PGE":
        raise ShapeError("pge_loss needs a PGE model")
    ids, vocab = _phone_targets(model, phone_seqs)
    x = encode_batch(model, seqs)
    B, V = len(seqs), len(vocab)
    steps = np.array([len(s) + 1 for s in ids])
    T = int(steps.max())
    prev = np.full((T, B), vocab[BOS])
    tgt = np.full((T, B), vocab[EOS])
    for b, s in enumerate(ids):
        prev[1 : len(s) + 1, b] = s
        tgt[: len(s), b] = s
    mask = (np.arange(T)[:, None] < steps[None, :]).astype(np.float64)
    onehot = np.zeros((T, B, V))
    onehot[np.arange(T)[:, None], np.arange(B)[None, :], prev] = 1.0
    inputs = concat([Tensor(onehot), broadcast_to(x, (T, B, x.shape[1]))], axis=2)
    logits = _decode(model, x, inputs, mask)
    weights = mask / steps[None, :] if per_step else mask
    return cross_entropy_sum(logits, tgt.reshape(-1), weights.reshape(-1)) * (1.0 / B)


def pge_loss(model, A, phones):
    """Summed cross-entropy of ``phones`` + EOS given the embedding of ``A``."""
    frames = getattr(A, "frames", A)
    return pge_loss_batch(model, [np.asarray(frames, dtype=np.float64)], [list(phones)])


def cae_loss_batch(model, seqs, targets, per_step=False):
    """Squared error of the reconstructed paired sequences."""
    if model.config.objective != "CAE":
        raise ShapeError("cae_loss needs a CAE model")
    k = model.config.input_dim
    for t in targets:
        if t.ndim != 2 or t.shape[1] != k:
            raise ShapeError(f"target sequence shape {t.shape} does not match k={k}")
    x = encode_batch(model, seqs)
    B = len(seqs)
    steps = np.array([t.shape[0] for t in targets])
    T = int(steps.max())
    Y = np.zeros((T, B, k))
    for b, t in enumerate(targets):
        Y[: t.shape[0], b] = t
    mask = (np.arange(T)[:, None] < steps[None, :]).astype(np.float64)
    inputs = broadcast_to(x, (T, B, x.shape[1]))
    out = _decode(model, x, inputs, mask)
    weights = mask / steps[None, :] if per_step else mask
    err = square(out - Tensor(Y.reshape(T * B, k))) * Tensor(weights.reshape(-1, 1))
    return tsum(err) * (1.0 / B)


def cae_loss(model, A, A_plus):
    frames = np.asarray(getattr(A, "frames", A), dtype=np.float64)
    target = np.asarray(getattr(A_plus, "frames", A_plus), dtype=np.float64)
    return cae_loss_batch(model, [frames], [target])


def distance_matrix(a, b, convention="half-cosine"):
    """Cosine distances between rows of tensors ``a`` and ``b``."""
    na = sqrt(tsum(square(a), axis=1))
    nb = sqrt(tsum(square(b), axis=1))
    ua = a / reshape(na, (-1, 1))
    ub = b / reshape(nb, (-1, 1))
    cos = matmul(ua, ub.T)
    if convention == "half-cosine":
        return (1.0 - cos) * 0.5
    return 1.0 - cos


def triplet_hinge(d_pos, d_neg, margin):
    return max(0.0, margin + d_pos - d_neg)


def hardest_negatives(dist, words):
    """Column of the closest different-type embedding for each anchor row.

    ``dist`` is ``[P, 2P]`` against ``[anchors; positives]``; ``words`` gives
    the word type of each of the ``P`` pairs. Ties go to the lowest column.
    """
    words = np.asarray(words)
    all_words = np.concatenate([words, words])
    allowed = words[:, None] != all_words[None, :]
    masked = np.where(allowed, dist, np.inf)
    return np.argmin(masked, axis=1)


def cse_loss_from_embeddings(xa, xp, words, margin, convention="half-cosine",
                             return_negatives=False):
    words = np.asarray(words)
    P = xa.shape[0]
    if P < 2:
        raise DataError("CSE needs at least 2 pairs per batch")
    if len(np.unique(words)) < 2:
        raise DataError("CSE batch has a single word type, so no negative exists")
    dist = distance_matrix(xa, concat([xa, xp], axis=0), convention)
    rows = np.arange(P)
    neg = hardest_negatives(dist.data, words)
    d_pos = dist[rows, rows + P]
    d_neg = dist[rows, neg]
    loss = tsum(relu(d_pos - d_neg + margin)) * (1.0 / P)
    return (loss, neg) if return_negatives else loss


def cse_loss_batch(model, anchors, positives, words):
    if model.config.objective != "CSE":
        raise ShapeError("cse_loss needs a CSE model")
    P = len(anchors)
    if len(positives) != P or len(words) != P:
        raise ShapeError("anchors, positives and words must align")
    emb = encode_batch(model, list(anchors) + list(positives))
    return cse_loss_from_embeddings(emb[:P], emb[P:], words, model.config.margin,
                                    model.config.distance)


def cse_loss(model, pairs, words):
    """Mean triplet hinge for ``pairs`` of (anchor, positive) feature sequences."""
    anchors = [np.asarray(getattr(a, "frames", a), dtype=np.float64) for a, _ in pairs]
    positives = [np.asarray(getattr(p, "frames", p), dtype=np.float64) for _, p in pairs]
    return cse_loss_batch(model, anchors, positives, words)
