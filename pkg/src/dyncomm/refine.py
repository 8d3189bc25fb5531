"""Modularity computation and Louvain-style refinement of seed partitions.

The refiner takes the mapper's hard assignments as the starting partition
instead of singletons.  Seed communities are first split into their connected
components (which can only raise modularity and lets local moves escape
degenerate seeds such as everything-in-one-community), then the usual
two-phase loop runs: greedy node moves in ascending id order, community
aggregation, repeat.  Everything is deterministic: fixed visit order, ties
broken toward the lowest community id.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .mapper import hard_assign

__all__ = [
    "PartitionSeries",
    "modularity",
    "louvain_refine",
    "refine_series",
    "write_result_json",
    "read_result_json",
    "write_q_csv",
    "read_q_csv",
]


@dataclass
class PartitionSeries:
    """Per-slice hard community labels, compacted to [0, num_communities_t)."""

    labels: list[np.ndarray]

    @property
    def num_slices(self):
        return len(self.labels)

    def num_communities(self, t):
        return int(self.labels[t].max()) + 1 if self.labels[t].size else 0


def _check_labels(g, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (g.num_nodes,):
        raise ValueError(f"labels must have length {g.num_nodes}")
    if labels.size and (labels.min() < 0 or labels.max() >= g.num_nodes):
        raise ValueError("community labels out of range")
    return labels


def modularity(g, t, labels):
    """Modularity Q of a partition of slice ``t``.

    Computed per community as ``sum_c [l_c / L - (d_c / 2L)^2]`` where ``l_c``
    is the intra-community edge weight and ``d_c`` the community degree sum;
    O(|E| + N).  An empty slice has Q = 0 by convention.
    """
    labels = _check_labels(g, labels)
    sl = g.slice(t)
    L = sl.total_edge_weight
    if L == 0.0:
        return 0.0
    n_comms = int(labels.max()) + 1
    intra_mask = labels[sl.rows] == labels[sl.cols]
    intra = np.bincount(labels[sl.rows[intra_mask]],
                        weights=sl.weights[intra_mask], minlength=n_comms)
    comm_deg = np.bincount(labels, weights=sl.degrees, minlength=n_comms)
    q = float(np.sum(intra / L) - np.sum((comm_deg / (2.0 * L)) ** 2))
    assert -0.5 - 1e-12 <= q <= 1.0 + 1e-12, f"modularity {q} outside [-0.5, 1]"
    return q


def _adjacency_lists(sl):
    adj = [dict() for _ in range(sl.num_nodes)]
    for i, j, w in zip(sl.rows, sl.cols, sl.weights):
        adj[i][int(j)] = adj[i].get(int(j), 0.0) + w
        adj[j][int(i)] = adj[j].get(int(i), 0.0) + w
    return adj


def _split_components(adj, labels):
    # Split every seed community into its connected components.  Components
    # receive fresh ids in order of first appearance (ascending node id), so
    # the result is deterministic.  Splitting never lowers Q: intra-community
    # weight is preserved and the degree penalty only shrinks.
    n = len(adj)
    out = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for start in range(n):
        if out[start] >= 0:
            continue
        seed = labels[start]
        out[start] = next_id
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if out[v] < 0 and labels[v] == seed:
                    out[v] = next_id
                    stack.append(v)
        next_id += 1
    return out


def _one_level(adj, selfw, deg, m, comm):
    """Greedy node moves until a full pass changes nothing.

    ``comm`` is mutated in place.  Gains are compared via the standard
    remove-then-reinsert form; the self-weight of a node travels with it and
    cancels, so it never enters the gain.
    """
    n = len(adj)
    tot = [0.0] * n
    for u in range(n):
        tot[comm[u]] += deg[u]
    two_m = 2.0 * m
    moved_any = False
    while True:
        moved = False
        for u in range(n):
            if not adj[u]:
                continue
            a = comm[u]
            du = deg[u]
            links = {}
            for v, w in adj[u].items():
                c = comm[v]
                links[c] = links.get(c, 0.0) + w
            tot[a] -= du
            best_c = a
            best_gain = links.get(a, 0.0) - du * tot[a] / two_m
            for c in sorted(links):
                if c == a:
                    continue
                gain = links[c] - du * tot[c] / two_m
                if gain > best_gain:
                    best_gain = gain
                    best_c = c
            tot[best_c] += du
            if best_c != a:
                comm[u] = best_c
                moved = moved_any = True
        if not moved:
            break
    return moved_any


def _aggregate(adj, selfw, comm):
    ids = sorted(set(comm))
    remap = {c: k for k, c in enumerate(ids)}
    n_new = len(ids)
    new_adj = [dict() for _ in range(n_new)]
    new_selfw = [0.0] * n_new
    for u, row in enumerate(adj):
        cu = remap[comm[u]]
        new_selfw[cu] += selfw[u]
        for v, w in row.items():
            cv = remap[comm[v]]
            if cu == cv:
                if u < v:
                    new_selfw[cu] += w
            else:
                new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
    new_deg = [sum(row.values()) + 2.0 * sw
               for row, sw in zip(new_adj, new_selfw)]
    node_map = np.array([remap[c] for c in comm], dtype=np.int64)
    return new_adj, new_selfw, new_deg, node_map


def _compact(labels):
    seen = {}
    out = np.empty(labels.shape, dtype=np.int64)
    for idx, lab in enumerate(labels):
        out[idx] = seen.setdefault(int(lab), len(seen))
    return out


def louvain_refine(g, t, seed_labels):
    """Two-phase Louvain seeded from ``seed_labels`` instead of singletons.

    Returns compacted labels whose modularity is never below the seed's
    (within float round-off); moves are only taken for strictly positive gain.
    """
    labels = _check_labels(g, seed_labels)
    sl = g.slice(t)
    m = sl.total_edge_weight
    if m == 0.0:
        return _compact(labels)

    adj = _adjacency_lists(sl)
    labels = _split_components(adj, labels)

    assign = None  # original node -> current super-node
    comm = [int(c) for c in labels]
    selfw = [0.0] * g.num_nodes
    deg = [float(d) for d in sl.degrees]
    while True:
        moved = _one_level(adj, selfw, deg, m, comm)
        if not moved:
            break
        adj, selfw, deg, node_map = _aggregate(adj, selfw, comm)
        assign = node_map if assign is None else node_map[assign]
        comm = list(range(len(adj)))

    final = np.asarray(comm, dtype=np.int64)
    if assign is not None:
        final = final[assign]
    return _compact(final)


def refine_series(g, series, parallel=False):
    """Hard-assign, refine, and score every slice.

    Returns ``(PartitionSeries, per-slice Q list, average Q)``; the average is
    the unweighted mean over slices.  Slices are independent, so they may be
    refined concurrently; outputs keep slice order either way.
    """
    def _one(t):
        labels = louvain_refine(g, t, hard_assign(series.B[t]))
        return labels, modularity(g, t, labels)

    if parallel and g.num_slices > 1:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(_one, range(g.num_slices)))
    else:
        results = [_one(t) for t in range(g.num_slices)]
    labels = [lab for lab, _ in results]
    q_per_slice = [q for _, q in results]
    avg_q = sum(q_per_slice) / len(q_per_slice) if q_per_slice else 0.0
    return PartitionSeries(labels=labels), q_per_slice, avg_q


def write_result_json(path, parts, q_per_slice, avg_q):
    """Detection results: per-slice labels, Q, community count, and average Q."""
    payload = {
        "per_slice": [
            {
                "t": t,
                "Q": float(q_per_slice[t]),
                "num_communities": parts.num_communities(t),
                "labels": [int(v) for v in parts.labels[t]],
            }
            for t in range(parts.num_slices)
        ],
        "avg_Q": float(avg_q),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_result_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        parts = PartitionSeries(labels=[
            np.asarray(entry["labels"], dtype=np.int64)
            for entry in payload["per_slice"]
        ])
        q_per_slice = [float(entry["Q"]) for entry in payload["per_slice"]]
        avg_q = float(payload["avg_Q"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: bad result file: {exc}") from None
    return parts, q_per_slice, avg_q


def write_q_csv(path, q_per_slice):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "Q"])
        for t, q in enumerate(q_per_slice):
            writer.writerow([t, repr(float(q))])


def read_q_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["t", "Q"]:
            raise ParseError(f"{path}: expected header t,Q")
        return [float(row[1]) for row in reader]
