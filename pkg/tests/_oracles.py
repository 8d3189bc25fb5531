"""Independent reference implementations used by the tests.

Everything here is deliberately written the slow, obvious way (dense
matrices, exhaustive enumeration) so the fast library code has something
honest to be checked against.
"""

import numpy as np


def dense_adjacency(g, t):
    """Materialize slice t as a dense symmetric matrix."""
    sl = g.slice(t)
    X = np.zeros((g.num_nodes, g.num_nodes))
    for i, j, w in zip(sl.rows, sl.cols, sl.weights):
        X[i, j] = w
        X[j, i] = w
    return X


def dense_modularity(X, labels):
    """Textbook modularity from the dense adjacency, no shortcuts."""
    two_l = X.sum()
    if two_l == 0:
        return 0.0
    deg = X.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        block = X[np.ix_(members, members)]
        q += block.sum() / two_l - (deg[members].sum() / two_l) ** 2
    return q


def set_partitions(n):
    """Yield every partition of range(n) as a label array.

    Enumerates restricted growth strings: labels[0] = 0 and
    labels[i] <= max(labels[:i]) + 1, which visits each set partition
    exactly once (Bell(n) of them).
    """
    labels = np.zeros(n, dtype=np.int64)
    while True:
        yield labels.copy()
        # find rightmost position that can be incremented
        i = n - 1
        while i > 0:
            if labels[i] <= labels[:i].max():
                break
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        labels[i + 1:] = 0


def best_partition_modularity(X):
    """Exhaustive max-modularity search; only sane for tiny graphs."""
    n = X.shape[0]
    best = -np.inf
    best_labels = None
    for labels in set_partitions(n):
        q = dense_modularity(X, labels)
        if q > best:
            best = q
            best_labels = labels
    return best, best_labels


def dense_rescal_loss(X_list, A, Rt_list, lambda_a, lambda_r):
    """The factorization objective evaluated on dense matrices."""
    loss = 0.0
    for X, Rt in zip(X_list, Rt_list):
        diff = X - A @ Rt @ A.T
        loss += 0.5 * np.sum(diff * diff)
    loss += 0.5 * lambda_a * np.sum(A * A)
    loss += 0.5 * lambda_r * sum(np.sum(Rt * Rt) for Rt in Rt_list)
    return loss


def dense_membership_loss(X_list, B_list, beta):
    """Scaled-indicator reconstruction loss plus the smoothness penalty."""
    loss = 0.0
    for X, B in zip(X_list, B_list):
        gram = B.T @ B
        denom = np.sum(gram * gram)
        s = (np.trace(B.T @ X @ B) / denom) if denom > 0 else 0.0
        diff = X - s * (B @ B.T)
        loss += np.sum(diff * diff)
    for t in range(1, len(B_list)):
        d = B_list[t] - B_list[t - 1]
        loss += beta * np.sum(d * d)
    return loss


def plain_nmi(a, b):
    """Contingency-table NMI in the 2*I/(Ha+Hb) form, explicit loops."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    ua, ub = np.unique(a), np.unique(b)
    counts = np.zeros((len(ua), len(ub)))
    for x, y in zip(a, b):
        counts[np.searchsorted(ua, x), np.searchsorted(ub, y)] += 1
    pa = counts.sum(axis=1) / n
    pb = counts.sum(axis=0) / n
    ha = -sum(p * np.log(p) for p in pa if p > 0)
    hb = -sum(p * np.log(p) for p in pb if p > 0)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    mi = 0.0
    for i in range(len(ua)):
        for j in range(len(ub)):
            pij = counts[i, j] / n
            if pij > 0:
                mi += pij * np.log(pij / (pa[i] * pb[j]))
    return 2.0 * mi / (ha + hb)
