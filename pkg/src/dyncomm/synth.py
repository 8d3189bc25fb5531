"""Dynamic stochastic-block-model benchmark generator and NMI scoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .temporal import from_edge_events

__all__ = [
    "DsbmConfig",
    "generate",
    "nmi",
    "write_ground_truth_csv",
    "read_ground_truth_csv",
]

# rows per block when sampling pair indicators; fixed so a given seed always
# consumes the RNG stream identically
_CHUNK = 512


@dataclass
class DsbmConfig:
    """Planted evolving communities: intra/inter edge probabilities plus a
    per-transition fraction of nodes that get re-assigned uniformly at random
    to one of the other communities."""

    num_nodes: int
    num_communities: int
    num_slices: int
    p_in: float
    p_out: float
    churn: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_nodes < 1 or self.num_communities < 1 or self.num_slices < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if not (0.0 <= self.churn <= 1.0):
            raise ValueError("churn must lie in [0, 1]")


def generate(cfg):
    """Sample a graph and its planted partition.

    Slice 0 assigns communities round-robin; each transition re-assigns
    ``ceil(churn * N)`` uniformly chosen nodes to a uniform-random other
    community.  Every unordered pair is an independent Bernoulli draw with
    probability ``p_in`` (same community) or ``p_out``.  Deterministic for a
    given seed.

    Returns ``(TemporalGraph, list of per-slice label arrays)``.
    """
    rng = np.random.default_rng(cfg.seed)
    n, k, t_count = cfg.num_nodes, cfg.num_communities, cfg.num_slices

    memberships = [np.arange(n, dtype=np.int64) % k]
    # guard against float noise pushing churn*N just above an integer
    n_churn = min(n, math.ceil(cfg.churn * n - 1e-12))
    for _ in range(1, t_count):
        labels = memberships[-1].copy()
        if n_churn > 0 and k > 1:
            moved = rng.choice(n, size=n_churn, replace=False)
            draws = rng.integers(0, k - 1, size=n_churn)
            # skip over the current community so the draw is uniform among others
            labels[moved] = np.where(draws >= labels[moved], draws + 1, draws)
        memberships.append(labels)

    events = []
    for t in range(t_count):
        labels = memberships[t]
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            same = labels[lo:hi, None] == labels[None, :]
            prob = np.where(same, cfg.p_in, cfg.p_out)
            hit = rng.random((hi - lo, n)) < prob
            hit &= np.arange(n)[None, :] > np.arange(lo, hi)[:, None]
            rows, cols = np.nonzero(hit)
            events.extend((t, int(i + lo), int(j)) for i, j in zip(rows, cols))

    graph = from_edge_events(events, num_nodes=n, num_slices=t_count)
    return graph, memberships


def _first_appearance_labels(labels):
    # canonical relabeling: distinct values numbered in order of first
    # appearance, which makes nmi() bit-exactly relabel-invariant
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse]


def nmi(a, b):
    """Normalized mutual information with arithmetic-mean normalization.

    ``2 I(a;b) / (H(a) + H(b))`` in [0, 1].  If both partitions have zero
    entropy they are trivially identical up to renaming and the score is 1;
    if only one has zero entropy the score is 0.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        return 1.0
    ai = _first_appearance_labels(a)
    bi = _first_appearance_labels(b)
    # canonical argument order so nmi(a, b) == nmi(b, a) bit-exactly
    if (ai.max() + 1, ai.tobytes()) > (bi.max() + 1, bi.tobytes()):
        ai, bi = bi, ai
    ka = int(ai.max()) + 1
    kb = int(bi.max()) + 1
    joint = np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb)
    pij = joint / a.size
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    ha = float(-np.sum(pi[pi > 0] * np.log(pi[pi > 0])))
    hb = float(-np.sum(pj[pj > 0] * np.log(pj[pj > 0])))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])))
    return min(1.0, max(0.0, 2.0 * mi / (ha + hb)))


def write_ground_truth_csv(path, memberships):
    """Write per-slice planted labels as ``t,node,community`` rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "node", "community"])
        for t, labels in enumerate(memberships):
            for node, community in enumerate(labels):
                writer.writerow([t, node, int(community)])


def read_ground_truth_csv(path):
    """Read ``t,node,community`` rows back into per-slice label arrays."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "node", "community"]:
            raise ParseError(f"{path}: expected header t,node,community")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2])))
            except (ValueError, IndexError):
                raise ParseError(f"{path}:{lineno}: bad ground-truth row") from None
    if not rows:
        return []
    t_count = max(r[0] for r in rows) + 1
    n = max(r[1] for r in rows) + 1
    out = [np.full(n, -1, dtype=np.int64) for _ in range(t_count)]
    for t, node, community in rows:
        out[t][node] = community
    for t, labels in enumerate(out):
        if (labels < 0).any():
            raise ParseError(f"{path}: missing nodes in slice {t}")
    return out
