"""Log-mel spectral features and the AWEF feature-file format.

AWEF layout (all little-endian)::

    b"AWEF" | u32 version | u32 k | u64 n_segments
    n_segments x (u16 id_len | id utf-8 | u64 frame_offset | u32 T)
    float32 payload, frames stored row-major, segment after segment
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError, ShapeError

MAGIC = b"AWEF"
VERSION = 1
LOG_FLOOR = 1e-10


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"feature sequence must be [T>=1, k], got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError("feature sequence contains non-finite values")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    @property
    def duration_s(self):
        return self.num_frames * self.frame_shift_ms / 1000.0


@dataclass
class MelConfig:
    n_mels: int = 39
    window_ms: float = 25.0
    shift_ms: float = 10.0
    window: str = "hamming"
    preemphasis: float = 0.0
    fmin: float = 0.0
    fmax: float | None = None
    n_fft: int | None = None
    log_floor: float = LOG_FLOOR


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(n_samples, sample_rate, window_ms=25.0, shift_ms=10.0):
    win = int(round(sample_rate * window_ms / 1000.0))
    hop = int(round(sample_rate * shift_ms / 1000.0))
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def mel_filterbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None):
    """Triangular filters on the HTK mel scale, shape ``[n_mels, n_fft//2 + 1]``."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def mel_spectra(samples, sample_rate, config=None):
    """Log mel filterbank energies, one row per analysis window."""
    cfg = config or MelConfig()
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("expected mono PCM samples")
    if sample_rate < 8000:
        raise ValueError(f"sample rate {sample_rate} Hz below 8000 Hz")
    if not np.isfinite(x).all():
        raise ValueError("non-finite PCM samples")
    win = int(round(sample_rate * cfg.window_ms / 1000.0))
    hop = int(round(sample_rate * cfg.shift_ms / 1000.0))
    if len(x) < win:
        raise ValueError(f"audio has {len(x)} samples, shorter than one {win}-sample window")
    if cfg.preemphasis:
        x = np.append(x[0], x[1:] - cfg.preemphasis * x[:-1])
    n_frames = (len(x) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]
    if cfg.window == "hamming":
        frames = frames * np.hamming(win)
    elif cfg.window == "hann":
        frames = frames * np.hanning(win)
    elif cfg.window != "rect":
        raise ValueError(f"unknown window {cfg.window!r}")
    n_fft = cfg.n_fft or 1 << math.ceil(math.log2(win))
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    fb = mel_filterbank(sample_rate, n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
    energies = power @ fb.T
    feats = np.log(np.maximum(energies, cfg.log_floor))
    return FeatureSequence(feats, cfg.shift_ms, cfg.window_ms)


def write_features(path, segments):
    """Write ``{segment_id: FeatureSequence | array}`` to an AWEF file."""
    items = [(sid, seg.frames if isinstance(seg, FeatureSequence) else np.asarray(seg))
             for sid, seg in segments.items()]
    if not items:
        raise DataError("no segments to write")
    k = items[0][1].shape[1]
    header = [MAGIC, struct.pack("<IIQ", VERSION, k, len(items))]
    offset = 0
    for sid, frames in items:
        if frames.ndim != 2 or frames.shape[1] != k:
            raise ShapeError(f"segment {sid!r} has shape {frames.shape}, expected [T, {k}]")
        raw = sid.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw + struct.pack("<QI", offset,
                                                                       frames.shape[0]))
        offset += frames.shape[0]
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for _, frames in items:
            fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


class FeatureFile:
    """Random-access reader for AWEF files."""

    def __init__(self, path):
        self.path = str(path)
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != MAGIC:
            raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
        if len(blob) < 20:
            raise FormatError(f"{path}: truncated header")
        version, self.k, count = struct.unpack_from("<IIQ", blob, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        pos = 20
        self.index = {}
        total = 0
        try:
            for _ in range(count):
                (n,) = struct.unpack_from("<H", blob, pos)
                sid = blob[pos + 2 : pos + 2 + n].decode("utf-8")
                pos += 2 + n
                off, T = struct.unpack_from("<QI", blob, pos)
                pos += 12
                self.index[sid] = (off, T)
                total = max(total, off + T)
        except struct.error as exc:
            raise FormatError(f"{path}: truncated index") from exc
        self._payload_start = pos
        expected = pos + total * self.k * 4
        if len(blob) < expected:
            raise FormatError(f"{path}: truncated payload ({len(blob)} < {expected} bytes)")
        self._payload = np.frombuffer(blob, dtype="<f4", count=total * self.k, offset=pos)

    def __contains__(self, sid):
        return sid in self.index

    def __len__(self):
        return len(self.index)

    def ids(self):
        return list(self.index)

    def get(self, sid):
        try:
            off, T = self.index[sid]
        except KeyError:
            raise KeyError(f"segment {sid!r} not found in {self.path}") from None
        flat = self._payload[off * self.k : (off + T) * self.k]
        return FeatureSequence(flat.reshape(T, self.k).astype(np.float64))


def read_features(path, ids=None):
    ff = FeatureFile(path)
    return {sid: ff.get(sid) for sid in (ids if ids is not None else ff.ids())}
