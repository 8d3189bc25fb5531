"""Storage and sparse linear-algebra primitives for dynamic (time-sliced) networks.

A dynamic network is a fixed set of N nodes observed over T time slices; each
slice is an undirected, weighted adjacency with no self-loops.  All other
modules consume graphs exclusively through :class:`TemporalGraph`.
"""

from __future__ import annotations

import math
import operator

import numpy as np
from scipy import sparse

from .errors import GraphInputError, ParseError

__all__ = [
    "SliceAdjacency",
    "TemporalGraph",
    "from_edge_events",
    "slice_matmul",
    "slice_modularity_inputs",
    "binarized",
    "read_events_tsv",
    "write_events_tsv",
]


class SliceAdjacency:
    """One time slice, stored sparsely.

    Edges are kept once per unordered pair with ``rows < cols``.  Weighted
    degrees, the total edge weight L, and the squared Frobenius norm of the
    full symmetric matrix are computed once at construction so downstream
    losses never materialize an N x N matrix.
    """

    __slots__ = ("num_nodes", "rows", "cols", "weights", "degrees",
                 "total_edge_weight", "frob_sq", "csr")

    def __init__(self, num_nodes, rows, cols, weights):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if not (rows < cols).all():
            raise GraphInputError("slice edges must be stored with rows < cols")
        self.num_nodes = int(num_nodes)
        self.rows = rows
        self.cols = cols
        self.weights = weights
        degrees = (np.bincount(rows, weights=weights, minlength=self.num_nodes)
                   + np.bincount(cols, weights=weights, minlength=self.num_nodes))
        self.degrees = degrees
        # L defined as degrees.sum()/2 so that sum(degrees) == 2*L bit-exactly
        self.total_edge_weight = 0.5 * float(degrees.sum())
        self.frob_sq = 2.0 * float(np.dot(weights, weights))
        both_r = np.concatenate([rows, cols])
        both_c = np.concatenate([cols, rows])
        both_w = np.concatenate([weights, weights])
        self.csr = sparse.csr_matrix(
            (both_w, (both_r, both_c)),
            shape=(self.num_nodes, self.num_nodes),
        )
        for arr in (self.rows, self.cols, self.weights, self.degrees):
            arr.flags.writeable = False

    @property
    def num_edges(self):
        return int(self.rows.size)


class TemporalGraph:
    """An immutable sequence of :class:`SliceAdjacency` over a shared node set."""

    __slots__ = ("num_nodes", "num_slices", "slices")

    def __init__(self, num_nodes, slices):
        self.num_nodes = int(num_nodes)
        self.slices = tuple(slices)
        self.num_slices = len(self.slices)
        for sl in self.slices:
            if sl.num_nodes != self.num_nodes:
                raise GraphInputError("all slices must share the node count")

    def slice(self, t):
        if not 0 <= t < self.num_slices:
            raise IndexError(f"slice index {t} out of range [0, {self.num_slices})")
        return self.slices[t]


def _as_index(value, what):
    try:
        idx = operator.index(value)
    except TypeError:
        raise GraphInputError(f"{what} must be an integer, got {value!r}") from None
    if idx < 0:
        raise GraphInputError(f"{what} must be nonnegative, got {idx}")
    return idx


def from_edge_events(events, num_nodes=None, num_slices=None):
    """Build a :class:`TemporalGraph` from (t, i, j[, w]) edge events.

    Parameters
    ----------
    events : iterable of tuples
        Each event is ``(t, i, j)`` or ``(t, i, j, w)``; the weight defaults
        to 1.  ``(t, i, j)`` and ``(t, j, i)`` address the same undirected
        edge, and duplicates accumulate weight.
    num_nodes, num_slices : int, optional
        Explicit sizes.  When omitted they are inferred as max index + 1.

    Raises
    ------
    GraphInputError
        On self-loop events, negative or non-finite weights, or indices
        outside explicitly provided bounds.
    """
    acc: dict[tuple[int, int, int], float] = {}
    max_node = -1
    max_t = -1
    for ev in events:
        if len(ev) == 3:
            t, i, j = ev
            w = 1.0
        elif len(ev) == 4:
            t, i, j, w = ev
        else:
            raise GraphInputError(f"event must have 3 or 4 fields, got {ev!r}")
        t = _as_index(t, "slice index")
        i = _as_index(i, "node id")
        j = _as_index(j, "node id")
        w = float(w)
        if i == j:
            raise GraphInputError(f"self-loop event on node {i} at slice {t}")
        if not math.isfinite(w) or w < 0.0:
            raise GraphInputError(f"edge weight must be finite and >= 0, got {w}")
        if num_slices is not None and t >= num_slices:
            raise GraphInputError(f"slice index {t} >= num_slices={num_slices}")
        if num_nodes is not None and max(i, j) >= num_nodes:
            raise GraphInputError(f"node id {max(i, j)} >= num_nodes={num_nodes}")
        if i > j:
            i, j = j, i
        key = (t, i, j)
        acc[key] = acc.get(key, 0.0) + w
        max_node = max(max_node, j)
        max_t = max(max_t, t)

    n = num_nodes if num_nodes is not None else max_node + 1
    t_count = num_slices if num_slices is not None else max_t + 1

    per_slice: list[list[tuple[int, int, float]]] = [[] for _ in range(t_count)]
    for (t, i, j) in sorted(acc):
        w = acc[(t, i, j)]
        if w != 0.0:
            per_slice[t].append((i, j, w))

    slices = []
    for entries in per_slice:
        if entries:
            rows, cols, weights = map(np.asarray, zip(*entries))
        else:
            rows = cols = np.empty(0, dtype=np.int64)
            weights = np.empty(0, dtype=np.float64)
        slices.append(SliceAdjacency(n, rows, cols, weights))
    return TemporalGraph(n, slices)


def slice_matmul(g, t, M):
    """Return ``X_t @ M`` for a dense ``M`` with N rows, in O(|E_t| * k)."""
    sl = g.slice(t)
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != g.num_nodes:
        raise ValueError(
            f"matrix has {M.shape[0]} rows, graph has {g.num_nodes} nodes")
    return sl.csr @ M


def slice_modularity_inputs(g, t):
    """Return the cached ``(L, degrees)`` of slice ``t``."""
    sl = g.slice(t)
    return sl.total_edge_weight, sl.degrees


def binarized(g):
    """Copy of ``g`` with every stored edge weight set to 1."""
    slices = [
        SliceAdjacency(g.num_nodes, sl.rows, sl.cols, np.ones_like(sl.weights))
        for sl in g.slices
    ]
    return TemporalGraph(g.num_nodes, slices)


def read_events_tsv(path):
    """Parse edge events from a TSV file.

    One event per line, ``t<TAB>i<TAB>j[<TAB>w]``; lines starting with ``#``
    and blank lines are ignored.  Returns a list of ``(t, i, j, w)`` tuples.
    """
    events = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise ParseError(
                    f"{path}:{lineno}: expected 3 or 4 tab-separated fields, "
                    f"got {len(parts)}")
            try:
                t, i, j = int(parts[0]), int(parts[1]), int(parts[2])
                w = float(parts[3]) if len(parts) == 4 else 1.0
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            events.append((t, i, j, w))
    return events


def write_events_tsv(path, g):
    """Write the stored edges of ``g`` in the TSV event format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# t\ti\tj\tw\n")
        for t, sl in enumerate(g.slices):
            for i, j, w in zip(sl.rows, sl.cols, sl.weights):
                fh.write(f"{t}\t{i}\t{j}\t{float(w)!r}\n")
