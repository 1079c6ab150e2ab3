"""Training loop, embedding extraction and validation scoring."""

import logging
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..corpus import pair_same_type
from ..errors import ConfigError, DataError, NumericError
from ..eval import DIFFERENT_SPEAKER, EvalSet, map_same_different
from ..nncore import AdamState, Rng, Tape, adam_step, reduce_lr_on_plateau
from .io import EmbeddingMatrix
from .losses import cae_loss_batch, cse_loss_batch, pge_loss_batch
from .model import EncoderModel, ModelConfig, encode_batch

log = logging.getLogger(__name__)

EMBED_CHUNK = 128


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    plateau_factor: float = 0.5
    patience: int = 10
    seed: int = 0
    margin: float = 0.25
    distance: str = "half-cosine"
    hidden: int = 64
    layers: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    different_speaker_positives: bool = True
    per_step_loss: bool = False
    eval_mode: str = DIFFERENT_SPEAKER
    bucket_batches: int = 4

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be > 0")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch size must be >= 2")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train options: {sorted(unknown)}")
        return cls(**d)


PROFILES = {
    "desk": TrainConfig(),
    "full": TrainConfig(epochs=100, batch_size=256, hidden=512),
}


def _batches(items, lengths, batch_size, rng, bucket):
    """Shuffled batches; within groups of ``bucket`` batches, sorted by length."""
    order = rng.permutation(len(items))
    if bucket > 1:
        span = batch_size * bucket
        chunks = []
        for s in range(0, len(order), span):
            chunk = order[s : s + span]
            chunks.append(chunk[np.argsort(lengths[chunk], kind="stable")])
        order = np.concatenate(chunks)
    batches = [order[s : s + batch_size] for s in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def embed_arrays(model, seqs):
    """``[D, N]`` embeddings of a list of ``[T, k]`` arrays, in order."""
    out = []
    for s in range(0, len(seqs), EMBED_CHUNK):
        out.append(encode_batch(model, seqs[s : s + EMBED_CHUNK]).data)
    return np.concatenate(out, axis=0).T.copy()


def embed_set(model, stimuli, stimuli_language):
    """Embed ``[(stimulus_id, frames), ...]`` into an :class:`EmbeddingMatrix`."""
    if len(stimuli) == 0:
        raise DataError("empty stimuli set")
    ids = [sid for sid, _ in stimuli]
    seqs = [np.asarray(getattr(f, "frames", f), dtype=np.float64) for _, f in stimuli]
    try:
        data = embed_arrays(model, seqs)
    except Exception:
        # locate the offending stimulus
        for sid, s in zip(ids, seqs):
            try:
                encode_batch(model, [s])
            except Exception as exc:
                raise type(exc)(f"stimulus {sid}: {exc}") from exc
        raise
    return EmbeddingMatrix(data, ids, stimuli_language, model.config.language,
                           model.config.objective)


def validation_evalset(model, corpus, split="validation"):
    recs = corpus.subset(split)
    X = embed_arrays(model, corpus.feature_list([r.segment_id for r in recs]))
    return EvalSet(X, np.array([r.word for r in recs]), np.array([r.speaker for r in recs]))


def build_model(objective, corpus, cfg, rng):
    phones = sorted({p for r in corpus.records for p in r.phones})
    k = corpus.features(corpus.records[0].segment_id).shape[1]
    mc = ModelConfig(objective=objective, input_dim=k, hidden=cfg.hidden, layers=cfg.layers,
                     phones=phones if objective == "PGE" else [], margin=cfg.margin,
                     distance=cfg.distance, language=corpus.language)
    return EncoderModel.init(mc, rng)


def train(objective, corpus, cfg, progress=None):
    """Train one encoder; returns the best-validation-mAP model with ``history``."""
    train_recs = corpus.subset("train")
    val_recs = corpus.subset("validation")
    if not train_recs or not val_recs:
        raise DataError(f"{corpus.language}: train and validation splits must be non-empty")
    root = Rng(cfg.seed)
    model = build_model(objective, corpus, cfg, root.derive(f"init:{objective}"))
    feats = {r.segment_id: corpus.features(r.segment_id) for r in train_recs}
    by_id = {r.segment_id: r for r in train_recs}
    opt = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    names = list(model.params)
    tensors = [model.params[n] for n in names]
    history = []
    best, best_snap = -np.inf, None
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        erng = root.derive(f"epoch:{epoch}")
        if objective == "PGE":
            items = [r.segment_id for r in train_recs]
        else:
            items = pair_same_type(train_recs, erng.derive("pairs"),
                                   cfg.different_speaker_positives)
            if not items:
                raise DataError(f"{corpus.language}: no same-type pairs for {objective}")
        first = [it if isinstance(it, str) else it[0] for it in items]
        lengths = np.array([feats[i].shape[0] for i in first])
        bs = cfg.batch_size // 2 if objective == "CSE" else cfg.batch_size
        batches = _batches(items, lengths, bs, erng.derive("batches"), cfg.bucket_batches)
        total, count = 0.0, 0
        for bi, idx in enumerate(batches):
            chosen = [items[i] for i in idx]
            if objective == "CSE" and len({by_id[a].word for a, _ in chosen}) < 2:
                continue
            try:
                with Tape() as tape:
                    if objective == "PGE":
                        loss = pge_loss_batch(model, [feats[i] for i in chosen],
                                              [by_id[i].phones for i in chosen],
                                              cfg.per_step_loss)
                    elif objective == "CAE":
                        loss = cae_loss_batch(model, [feats[a] for a, _ in chosen],
                                              [feats[p] for _, p in chosen], cfg.per_step_loss)
                    else:
                        loss = cse_loss_batch(model, [feats[a] for a, _ in chosen],
                                              [feats[p] for _, p in chosen],
                                              [by_id[a].word for a, _ in chosen])
                    grads = tape.backward(loss, tensors)
                adam_step(opt, model.params, dict(zip(names, grads)))
            except NumericError as exc:
                raise NumericError(f"{corpus.language}/{objective} epoch {epoch} batch {bi}: "
                                   f"{exc}") from exc
            total += loss.item() * len(idx)
            count += len(idx)
        val = map_same_different(validation_evalset(model, corpus), cfg.eval_mode)
        history.append({"epoch": epoch, "train_loss": total / max(count, 1), "val_map": val,
                        "lr": opt.lr, "seconds": round(time.perf_counter() - t0, 3)})
        if val > best:
            best, best_snap = val, model.snapshot()
        opt.lr = reduce_lr_on_plateau([h["val_map"] for h in history], cfg.lr,
                                      cfg.plateau_factor, cfg.patience)
        log.info("%s %s epoch %d loss %.4f val mAP %.4f lr %.2e", corpus.language, objective,
                 epoch, history[-1]["train_loss"], val, history[-1]["lr"])
        if progress:
            progress(history[-1])
    model.restore(best_snap)
    model.history = history
    model.best_epoch = int(np.argmax([h["val_map"] for h in history])) + 1
    return model, history
