"""Bidirectional GRU acoustic word encoder with objective-specific decoders."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError
from ..nncore import GruCellParams, Tensor, gru_sequence
from ..nncore.tensor import concat, time_permute

OBJECTIVES = ("PGE", "CAE", "CSE")
BOS = "<bos>"
EOS = "<eos>"


@dataclass
class ModelConfig:
    objective: str
    input_dim: int
    hidden: int = 64
    layers: int = 2
    phones: list = field(default_factory=list)
    margin: float = 0.25
    distance: str = "half-cosine"
    language: str = ""

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.objective == "PGE" and not self.phones:
            raise ConfigError("PGE needs a phone vocabulary")
        if self.distance not in ("half-cosine", "cosine"):
            raise ConfigError(f"unknown distance convention {self.distance!r}")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        self.phones = list(self.phones)

    @property
    def embedding_dim(self):
        return 2 * self.hidden

    @property
    def vocab(self):
        return [BOS, EOS] + self.phones

    def to_dict(self):
        return asdict(self)


def _uniform(rng, fan_in, shape, name):
    a = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-a, a, shape), True, name)


class EncoderModel:
    """Parameters plus the structure needed to run them.

    ``params`` is an ordered name -> Tensor mapping shared with the GRU
    parameter views, so optimizer updates and checkpoint loads act on both.
    """

    def __init__(self, config, params):
        self.config = config
        self.params = dict(params)
        self.history = []
        c = config
        self.encoder = []
        in_dim = c.input_dim
        for layer in range(c.layers):
            pair = []
            for direction in ("fw", "bw"):
                p = f"enc.l{layer}.{direction}"
                pair.append(GruCellParams(self.params[f"{p}.w"], self.params[f"{p}.u"],
                                          self.params[f"{p}.b"], in_dim, c.hidden))
            self.encoder.append(tuple(pair))
            in_dim = 2 * c.hidden
        self.decoder = None
        if c.objective != "CSE":
            D = c.embedding_dim
            dec_in = len(c.vocab) + D if c.objective == "PGE" else D
            self.decoder = GruCellParams(self.params["dec.w"], self.params["dec.u"],
                                         self.params["dec.b"], dec_in, D)

    @classmethod
    def init(cls, config, rng):
        """Uniform +-1/sqrt(fan_in) initialisation."""
        c = config
        params = {}
        in_dim = c.input_dim
        for layer in range(c.layers):
            for direction in ("fw", "bw"):
                g = GruCellParams.init(in_dim, c.hidden, rng, f"enc.l{layer}.{direction}")
                params.update({t.name: t for t in g.tensors()})
            in_dim = 2 * c.hidden
        params.update(cls._decoder_params(c, lambda fan, shape, name: _uniform(rng, fan, shape,
                                                                               name)))
        return cls(c, params)

    @classmethod
    def zeros(cls, config):
        def zero(fan, shape, name):
            return Tensor(np.zeros(shape), True, name)

        c = config
        params = {}
        in_dim = c.input_dim
        for layer in range(c.layers):
            for direction in ("fw", "bw"):
                g = GruCellParams.zeros(in_dim, c.hidden, f"enc.l{layer}.{direction}")
                params.update({t.name: t for t in g.tensors()})
            in_dim = 2 * c.hidden
        params.update(cls._decoder_params(c, zero))
        return cls(c, params)

    @staticmethod
    def _decoder_params(c, make):
        if c.objective == "CSE":
            return {}
        D = c.embedding_dim
        dec_in = len(c.vocab) + D if c.objective == "PGE" else D
        out_dim = len(c.vocab) if c.objective == "PGE" else c.input_dim
        specs = [("dec.w", dec_in, (dec_in, 3 * D)), ("dec.u", D, (D, 3 * D)),
                 ("dec.b", D, (3 * D,)), ("out.w", D, (D, out_dim)), ("out.b", D, (out_dim,))]
        return {name: make(fan, shape, name) for name, fan, shape in specs}

    def snapshot(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def restore(self, snap):
        for k, v in snap.items():
            self.params[k].data = v.copy()

    @property
    def num_parameters(self):
        return sum(p.size for p in self.params.values())


def pad_batch(seqs, k=None):
    """Right-pad ``[T_i, k]`` arrays into ``X [T, B, k]``, mask and reversal index."""
    if not seqs:
        raise ShapeError("empty batch")
    lengths = np.array([s.shape[0] for s in seqs])
    if (lengths < 1).any():
        raise ShapeError("every sequence needs at least one frame")
    k = seqs[0].shape[1] if k is None else k
    T, B = int(lengths.max()), len(seqs)
    X = np.zeros((T, B, k))
    for b, s in enumerate(seqs):
        if s.ndim != 2 or s.shape[1] != k:
            raise ShapeError(f"sequence {b} has shape {s.shape}, expected [T, {k}]")
        X[: s.shape[0], b] = s
    t = np.arange(T)[:, None]
    mask = (t < lengths[None, :]).astype(np.float64)
    rev = np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)
    return X, mask, rev, lengths


def encode_batch(model, seqs):
    """Embeddings ``[B, 2h]``: top layer's final forward and backward states."""
    c = model.config
    X, mask, rev, _ = pad_batch([np.asarray(s, dtype=np.float64) for s in seqs])
    if X.shape[2] != c.input_dim:
        raise ShapeError(f"feature dim {X.shape[2]} != model input dim {c.input_dim}")
    inp = Tensor(X)
    for layer, (fw, bw) in enumerate(model.encoder):
        hf = gru_sequence(fw, inp, mask)
        hb_rev = gru_sequence(bw, time_permute(inp, rev), mask)
        if layer + 1 < len(model.encoder):
            inp = concat([hf, time_permute(hb_rev, rev)], axis=2)
    last = X.shape[0] - 1
    return concat([hf[last], hb_rev[last]], axis=1)


def encode(model, A):
    """Embedding vector for a single ``[T, k]`` feature sequence."""
    frames = getattr(A, "frames", A)
    return encode_batch(model, [np.asarray(frames, dtype=np.float64)]).data[0].copy()
