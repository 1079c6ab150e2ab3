"""Centered kernel alignment and cross-lingual similarity matrices.

Embedding matrices are stored ``[D, N]`` (one column per stimulus). CKA works
on the example-major view ``X.T`` with every feature centered over examples.
"""

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DataError, DegenerateInputError, FormatError, ShapeError

OBJECTIVE_PAIRS = (("PGE", "CAE"), ("PGE", "CSE"), ("CAE", "CSE"))
DEFAULT_BANDWIDTH = 0.5

_RBF_TAG = re.compile(r"^rbf\(([0-9.eE+-]+)\)$")


def _example_major(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeError("CKA inputs must be 2-D [D, N] matrices")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"example counts differ: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[1] < 2:
        raise ShapeError("CKA needs at least 2 examples")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise DegenerateInputError("non-finite entries in CKA input")
    return X.T, Y.T


def _center_gram(K):
    K = K - K.mean(axis=0, keepdims=True)
    return K - K.mean(axis=1, keepdims=True)


def linear_cka(X, Y):
    """Linear CKA between ``[D1, N]`` and ``[D2, N]`` representations."""
    Xe, Ye = _example_major(X, Y)
    Xc = Xe - Xe.mean(axis=0)
    Yc = Ye - Ye.mean(axis=0)
    n = Xc.shape[0]
    if max(Xc.shape[1], Yc.shape[1]) > n:
        # Gram form is cheaper when features outnumber examples
        K, L = Xc @ Xc.T, Yc @ Yc.T
        num = np.sum(K * L)
        nx, ny = np.linalg.norm(K), np.linalg.norm(L)
    else:
        num = np.linalg.norm(Xc.T @ Yc) ** 2
        nx = np.linalg.norm(Xc.T @ Xc)
        ny = np.linalg.norm(Yc.T @ Yc)
    if nx == 0 or ny == 0:
        raise DegenerateInputError("constant representation (zero variance)")
    return float(np.clip(num / (nx * ny), 0.0, 1.0))


def rbf_gram(Xe, fraction=DEFAULT_BANDWIDTH):
    """Gaussian kernel matrix of example rows, bandwidth relative to the median distance."""
    if fraction <= 0:
        raise ValueError("bandwidth fraction must be > 0")
    d = pdist(Xe)
    med = np.median(d)
    if med == 0:
        raise DegenerateInputError("median pairwise distance is 0")
    sigma = fraction * med
    return np.exp(-squareform(d) ** 2 / (2.0 * sigma * sigma))


def rbf_cka(X, Y, bandwidth_fraction=DEFAULT_BANDWIDTH):
    """CKA with Gaussian kernels; biased HSIC estimator."""
    Xe, Ye = _example_major(X, Y)
    K = _center_gram(rbf_gram(Xe, bandwidth_fraction))
    L = _center_gram(rbf_gram(Ye, bandwidth_fraction))
    den = np.sqrt(np.sum(K * K) * np.sum(L * L))
    if den == 0:
        raise DegenerateInputError("kernel matrix has no variance")
    return float(np.clip(np.sum(K * L) / den, 0.0, 1.0))


def parse_kernel(tag):
    """``"linear"`` or ``"rbf(f)"`` -> (name, bandwidth fraction or None)."""
    if tag == "linear":
        return "linear", None
    if tag == "rbf":
        return "rbf", DEFAULT_BANDWIDTH
    m = _RBF_TAG.match(str(tag))
    if not m:
        raise ValueError(f"unknown kernel {tag!r}")
    f = float(m.group(1))
    if f <= 0:
        raise ValueError("bandwidth fraction must be > 0")
    return "rbf", f


def kernel_tag(name, fraction=None):
    if name == "linear":
        return "linear"
    return f"rbf({fraction if fraction is not None else DEFAULT_BANDWIDTH:g})"


def cka(X, Y, kernel="linear"):
    name, f = parse_kernel(kernel)
    return linear_cka(X, Y) if name == "linear" else rbf_cka(X, Y, f)


def sim(native, foreign, kernel="linear"):
    """CKA between the native and a foreign view of the same stimuli.

    Both arguments are embedding matrices with ``stimuli_language`` and
    ``encoder_language`` tags; the native encoder must be trained on the
    stimuli language and both must cover the same stimuli in the same order.
    """
    lam = native.stimuli_language
    if native.encoder_language != lam:
        raise DataError(f"native view of {lam} stimuli comes from a "
                        f"{native.encoder_language} encoder")
    if foreign.stimuli_language != lam:
        raise DataError(f"stimuli languages differ: {lam} vs {foreign.stimuli_language}")
    if list(native.ids) != list(foreign.ids):
        raise DataError(f"{lam}: native and foreign views cover different stimuli")
    return cka(native.data, foreign.data, kernel)


@dataclass
class XRSM:
    """Rows are stimuli languages, columns encoder languages."""

    matrix: np.ndarray
    languages: list
    objective: str
    kernel: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.languages = list(self.languages)
        M = len(self.languages)
        if self.matrix.shape != (M, M):
            raise ShapeError(f"xRSM shape {self.matrix.shape} does not match {M} languages")

    def __getitem__(self, pair):
        i, j = (self.languages.index(x) for x in pair)
        return float(self.matrix[i, j])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stimuli\\encoder"] + self.languages)
        for lang, row in zip(self.languages, self.matrix):
            w.writerow([lang] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, objective="", kernel="linear"):
        rows = list(csv.reader(io.StringIO(text)))
        langs = rows[0][1:]
        if [r[0] for r in rows[1:]] != langs:
            raise FormatError("xRSM CSV row and column headers differ")
        return cls(np.array([[float(v) for v in r[1:]] for r in rows[1:]]), langs, objective,
                   kernel)

    def to_dict(self):
        return {"languages": self.languages, "objective": self.objective, "kernel": self.kernel,
                "matrix": self.matrix.tolist(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(np.array(d["matrix"], dtype=np.float64), d["languages"], d["objective"],
                       d["kernel"], d.get("meta", {}))
        except KeyError as exc:
            raise FormatError(f"xRSM JSON lacks {exc.args[0]!r}") from None

    def save(self, stem):
        """Write ``stem.csv``, ``stem.json`` and ``stem.svg``."""
        stem = Path(stem)
        stem.with_name(stem.name + ".csv").write_text(self.to_csv())
        stem.with_name(stem.name + ".json").write_text(json.dumps(self.to_dict(), indent=1))
        stem.with_name(stem.name + ".svg").write_text(heatmap_svg(self))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def xrsm_from_views(views, languages, kernel="linear", objective="", meta=None):
    """Assemble an xRSM from ``views[(stimuli_lang, encoder_lang)]`` matrices."""
    languages = list(languages)
    M = len(languages)
    if M < 2:
        raise DataError("an xRSM needs at least 2 languages")
    missing = [f"{s}/{e}" for s in languages for e in languages if (s, e) not in views]
    if missing:
        raise DataError(f"missing embedding views: {', '.join(missing)}")
    R = np.eye(M)
    for i, lam in enumerate(languages):
        for j, alpha in enumerate(languages):
            if i != j:
                R[i, j] = sim(views[(lam, lam)], views[(lam, alpha)], kernel)
    info = {"stimuli_sizes": {lam: len(views[(lam, lam)].ids) for lam in languages}}
    info.update(meta or {})
    return XRSM(R, languages, objective, kernel, info)


def build_xrsm(encoders, stimuli, kernel="linear", objective="", meta=None):
    """xRSM from trained ``encoders[lang]`` and held-out ``stimuli[lang]``.

    ``stimuli[lang]`` is a list of ``(stimulus_id, frames)``.
    """
    from .encoders.train import embed_set

    languages = list(encoders)
    if len(languages) < 2:
        raise DataError("an xRSM needs at least 2 languages")
    absent = [lang for lang in languages if lang not in stimuli]
    if absent:
        raise DataError(f"no stimuli for {', '.join(absent)}")
    views = {(s, e): embed_set(encoders[e], stimuli[s], s)
             for s in languages for e in languages}
    return xrsm_from_views(views, languages, kernel, objective, meta)


@dataclass
class CrossModelTable:
    """Per-language CKA between native models trained with different objectives."""

    languages: list
    kernel: str
    values: dict

    def mean(self, pair):
        key = "-".join(pair) if not isinstance(pair, str) else pair
        return float(np.mean([self.values[lang][key] for lang in self.languages]))

    @property
    def means(self):
        return {"-".join(p): self.mean(p) for p in OBJECTIVE_PAIRS}

    def to_dict(self):
        return {"languages": self.languages, "kernel": self.kernel, "values": self.values,
                "means": self.means}

    @classmethod
    def from_dict(cls, d):
        return cls(d["languages"], d["kernel"], d["values"])

    def to_csv(self):
        keys = ["-".join(p) for p in OBJECTIVE_PAIRS]
        lines = ["language," + ",".join(keys)]
        for lang in self.languages:
            lines.append(lang + "," + ",".join(repr(self.values[lang][k]) for k in keys))
        lines.append("mean," + ",".join(repr(self.means[k]) for k in keys))
        return "\n".join(lines) + "\n"


def cross_model_table(native_views, kernel="linear"):
    """``native_views[lang][objective]`` -> :class:`CrossModelTable`."""
    values = {}
    for lang, by_obj in native_views.items():
        missing = {o for p in OBJECTIVE_PAIRS for o in p} - set(by_obj)
        if missing:
            raise DataError(f"{lang}: missing objectives {sorted(missing)}")
        row = {}
        for a, b in OBJECTIVE_PAIRS:
            va, vb = by_obj[a], by_obj[b]
            if list(va.ids) != list(vb.ids):
                raise DataError(f"{lang}: {a} and {b} views cover different stimuli")
            row[f"{a}-{b}"] = cka(va.data, vb.data, kernel)
        values[lang] = row
    return CrossModelTable(list(native_views), kernel, values)


def _warm(t):
    # light yellow -> orange -> dark red
    stops = np.array([[255, 255, 204], [253, 141, 60], [128, 0, 38]], dtype=float)
    t = min(max(t, 0.0), 1.0) * 2
    i = min(int(t), 1)
    c = stops[i] + (stops[i + 1] - stops[i]) * (t - i)
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in c))


def heatmap_svg(xrsm, cell=60):
    """SVG heatmap; colours span the off-diagonal range."""
    langs = xrsm.languages
    M = len(langs)
    R = xrsm.matrix
    off = R[~np.eye(M, dtype=bool)]
    lo, hi = float(off.min()), float(off.max())
    pad = 70
    size = pad + M * cell + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
           f'font-family="sans-serif" font-size="12">',
           f'<text x="{pad}" y="14">{_esc(xrsm.objective)} {_esc(xrsm.kernel)}</text>']
    for i, lam in enumerate(langs):
        y = pad + i * cell
        out.append(f'<text x="{pad - 6}" y="{y + cell / 2 + 4}" text-anchor="end">'
                   f'{_esc(lam)}</text>')
        out.append(f'<text x="{pad + i * cell + cell / 2}" y="{pad - 8}" text-anchor="middle">'
                   f'{_esc(lam)}</text>')
        for j in range(M):
            v = R[i, j]
            t = 1.0 if i == j else (0.5 if hi == lo else (v - lo) / (hi - lo))
            out.append(f'<rect x="{pad + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{_warm(t)}" stroke="white"/>')
            colour = "white" if t > 0.6 else "black"
            out.append(f'<text x="{pad + j * cell + cell / 2}" y="{y + cell / 2 + 4}" '
                       f'text-anchor="middle" fill="{colour}">{v:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
