"""Ward agglomerative clustering of xRSM rows, Newick and SVG dendrograms.

Cluster ids follow the usual linkage convention: leaves are ``0..M-1`` and the
cluster formed by merge ``s`` gets id ``M + s``. Two singletons merge at their
Euclidean distance.
"""

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateInputError, FormatError

ROWS = "rows"
COLUMNS = "columns"
SYMMETRIZED = "symmetrized"
VARIANTS = (ROWS, COLUMNS, SYMMETRIZED)


@dataclass
class MergeTree:
    """``merges`` holds ``(a, b, height, size)`` with ``a < b`` cluster ids."""

    merges: list
    labels: list
    variant: str = ROWS

    def __post_init__(self):
        self.labels = [str(x) for x in self.labels]
        self.merges = [(int(a), int(b), float(h), int(n)) for a, b, h, n in self.merges]
        if len(self.merges) != len(self.labels) - 1:
            raise FormatError(f"{len(self.labels)} leaves need {len(self.labels) - 1} merges")

    @property
    def n_leaves(self):
        return len(self.labels)

    @property
    def heights(self):
        return [m[2] for m in self.merges]

    @property
    def root(self):
        return 2 * self.n_leaves - 2

    def children(self, node):
        M = self.n_leaves
        if node < M:
            return None
        a, b, _, _ = self.merges[node - M]
        return a, b

    def height(self, node):
        M = self.n_leaves
        return 0.0 if node < M else self.merges[node - M][2]

    def leaves(self, node=None):
        """Leaf indices under ``node`` in left-first order."""
        node = self.root if node is None else node
        out, stack = [], [node]
        while stack:
            n = stack.pop()
            kids = self.children(n)
            if kids is None:
                out.append(n)
            else:
                stack.extend(reversed(kids))
        return out

    def leaf_order(self):
        return [self.labels[i] for i in self.leaves()]

    def clusters(self):
        """Merge sequence as ``(frozenset(labels), height)``, independent of ids."""
        M = self.n_leaves
        return [(frozenset(self.labels[i] for i in self.leaves(M + s)), h)
                for s, (_, _, h, _) in enumerate(self.merges)]

    def first_merge(self):
        a, b, _, _ = self.merges[0]
        return frozenset(self.labels[i] for i in self.leaves(a) + self.leaves(b))

    def to_dict(self):
        return {"labels": self.labels, "variant": self.variant,
                "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, d):
        return cls([tuple(m) for m in d["merges"]], d["labels"], d.get("variant", ROWS))

    def save(self, stem):
        """Write ``stem.nwk``, ``stem.json`` and ``stem.svg``."""
        stem = Path(stem)
        stem.with_name(stem.name + ".nwk").write_text(to_newick(self) + "\n")
        stem.with_name(stem.name + ".json").write_text(json.dumps(self.to_dict(), indent=1))
        stem.with_name(stem.name + ".svg").write_text(render_dendrogram_svg(self))


def ward_linkage(points, labels=None, variant=ROWS):
    """Ward linkage of ``points`` (one row per object) by Lance-Williams updates.

    The closest pair is merged at every step; exact ties go to the smallest
    ``(id_a, id_b)``.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    M = P.shape[0]
    if M < 2:
        raise DataError("clustering needs at least 2 objects")
    if not np.isfinite(P).all():
        raise DegenerateInputError("non-finite values in clustering input")
    labels = [str(i) for i in range(M)] if labels is None else list(labels)
    if len(labels) != M:
        raise DataError(f"{len(labels)} labels for {M} objects")
    diff = P[:, None, :] - P[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    active = {i: (i, 1) for i in range(M)}  # slot -> (cluster id, size)
    merges = []
    for step in range(M - 1):
        best = None
        for i in active:
            for j in active:
                if i >= j:
                    continue
                ida, idb = sorted((active[i][0], active[j][0]))
                key = (dist[i, j], ida, idb)
                if best is None or key < best[0]:
                    best = (key, i, j)
        (h, ida, idb), i, j = best
        ni, nj = active[i][1], active[j][1]
        for k in active:
            if k in (i, j):
                continue
            nk = active[k][1]
            d2 = ((nk + ni) * dist[k, i] ** 2 + (nk + nj) * dist[k, j] ** 2
                  - nk * h * h) / (nk + ni + nj)
            dist[k, i] = dist[i, k] = math.sqrt(max(d2, 0.0))
        merges.append((ida, idb, float(h), ni + nj))
        active[i] = (M + step, ni + nj)
        del active[j]
    return MergeTree(merges, labels, variant)


def cluster_xrsm(xrsm, variant=ROWS):
    """Ward tree over the rows, columns or symmetrized xRSM."""
    R = xrsm.matrix
    if variant == ROWS:
        pts = R
    elif variant == COLUMNS:
        pts = R.T
    elif variant == SYMMETRIZED:
        pts = 0.5 * (R + R.T)
    else:
        raise ValueError(f"unknown clustering variant {variant!r}")
    return ward_linkage(pts, xrsm.languages, variant)


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


_PLAIN = re.compile(r"^[^\s(),:;'\[\]]+$")


def _label(s):
    return s if _PLAIN.match(s) else "'" + s.replace("'", "''") + "'"


def to_newick(tree):
    """Newick string; branch lengths are height differences."""

    def walk(node, parent_h):
        kids = tree.children(node)
        h = tree.height(node)
        if kids is None:
            body = _label(tree.labels[node])
        else:
            body = "(" + ",".join(walk(k, h) for k in kids) + ")"
        return body if parent_h is None else f"{body}:{_num(parent_h - h)}"

    return walk(tree.root, None) + ";"


def _tokens(text):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "(),:;":
            yield c
            i += 1
        elif c == "'":
            j, buf = i + 1, []
            while True:
                if j >= n:
                    raise FormatError("unterminated quoted label")
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            yield ("label", "".join(buf))
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in "(),:;'" and not text[j].isspace():
                j += 1
            yield ("label", text[i:j])
            i = j


def parse_newick(text):
    """Read a Newick tree written by :func:`to_newick` back into a MergeTree."""
    toks = list(_tokens(text.strip()))
    if not toks or toks[-1] != ";":
        raise FormatError("Newick text must end with ';'")
    pos = 0

    def node():
        nonlocal pos
        if toks[pos] == "(":
            pos += 1
            kids = [node()]
            while toks[pos] == ",":
                pos += 1
                kids.append(node())
            if toks[pos] != ")":
                raise FormatError(f"expected ')' at token {pos}")
            pos += 1
            if len(kids) != 2:
                raise FormatError("only binary trees are supported")
            n = {"kids": kids}
        elif isinstance(toks[pos], tuple):
            n = {"label": toks[pos][1]}
            pos += 1
        else:
            raise FormatError(f"unexpected token {toks[pos]!r}")
        n["length"] = 0.0
        if toks[pos] == ":":
            try:
                n["length"] = float(toks[pos + 1][1])
            except (TypeError, ValueError, IndexError):
                raise FormatError("bad branch length") from None
            pos += 2
        return n

    try:
        root = node()
    except IndexError:
        raise FormatError("truncated Newick text") from None
    if toks[pos] != ";":
        raise FormatError("trailing tokens after tree")

    labels, internal = [], []

    def heights(n):
        # height = branch length to any leaf below; take the left path
        if "label" in n:
            labels.append(n["label"])
            n["h"] = 0.0
            return
        for k in n["kids"]:
            heights(k)
        left = n["kids"][0]
        n["h"] = left["h"] + left["length"]
        internal.append(n)

    heights(root)
    M = len(labels)
    idx = {}
    leaf_iter = iter(range(M))

    def assign_leaves(n):
        if "label" in n:
            idx[id(n)] = next(leaf_iter)
        else:
            for k in n["kids"]:
                assign_leaves(k)

    assign_leaves(root)
    # postorder keeps children before parents among equal heights
    order = sorted(range(len(internal)), key=lambda i: (internal[i]["h"], i))
    merges = []
    sizes = {idx[k]: 1 for k in idx}
    for s, i in enumerate(order):
        n = internal[i]
        a, b = (idx[id(k)] for k in n["kids"])
        idx[id(n)] = M + s
        sizes[M + s] = sizes[a] + sizes[b]
        merges.append((a, b, n["h"], sizes[M + s]))
    return MergeTree(merges, labels)


def render_dendrogram_svg(tree, width=480, row=26, label_width=80):
    """Left-to-right dendrogram: leaves on the left, merge height on the x axis.

    Each merge draws two horizontal branches and one vertical join, and every
    leaf gets one text label.
    """
    M = tree.n_leaves
    order = tree.leaves()
    top = max(tree.heights) if tree.heights else 0.0
    span = width - label_width - 20
    scale = span / top if top > 0 else 0.0
    y = {leaf: 20 + r * row for r, leaf in enumerate(order)}

    def x(h):
        return label_width + h * scale

    lines = []
    for s, (a, b, h, _) in enumerate(tree.merges):
        y[M + s] = 0.5 * (y[a] + y[b])
        for k in (a, b):
            lines.append((x(tree.height(k)), y[k], x(h), y[k]))
        lines.append((x(h), y[a], x(h), y[b]))
    height = 20 + M * row + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           '<g stroke="black" stroke-width="1.5">']
    out.extend(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}"/>'
               for x1, y1, x2, y2 in lines)
    out.append("</g>")
    for leaf in order:
        lab = (tree.labels[leaf].replace("&", "&amp;").replace("<", "&lt;")
               .replace(">", "&gt;"))
        out.append(f'<text x="{label_width - 6}" y="{y[leaf] + 4:.2f}" '
                   f'text-anchor="end">{lab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
