"""MLP mapping from latent node features to community memberships.

Per slice, every node's feature row of ``Z_t = A @ R_t`` passes through a
two-layer network (ReLU hidden layer, softmax output) producing a
row-stochastic membership matrix ``B_t`` (N x K).  The mapper is trained with
full-batch gradient descent on a symmetric reconstruction loss plus a
temporal-smoothness penalty; decomposition rank R and community count K are
independent knobs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ParseError
from .temporal import slice_matmul

__all__ = [
    "MapperConfig",
    "MlpParams",
    "MembershipSeries",
    "latent_inputs",
    "forward",
    "mapper_loss",
    "mapper_gradients",
    "train",
    "hard_assign",
    "save_params",
    "load_params",
    "write_membership_csv",
    "read_membership_csv",
    "write_embedding_csv",
]


@dataclass
class MapperConfig:
    """Training hyperparameters.

    ``hidden=None`` resolves to ``2 * max(rank, communities)`` at train time.
    ``beta`` weights the penalty on membership change between consecutive
    slices; ``grad_clip`` caps the global gradient norm (0 disables).
    """

    communities: int
    hidden: int | None = None
    beta: float = 0.1
    learning_rate: float = 0.01
    epochs: int = 300
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.communities < 2:
            raise ValueError("need at least 2 communities")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.hidden is not None and self.hidden < 1:
            raise ValueError("hidden width must be >= 1")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.grad_clip < 0.0:
            raise ValueError("grad_clip must be >= 0")


@dataclass
class MlpParams:
    """Weights and biases: W1 (H x R), b1 (H), W2 (K x H), b2 (K)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def hidden(self):
        return int(self.W1.shape[0])

    @property
    def communities(self):
        return int(self.W2.shape[0])

    @property
    def in_dim(self):
        return int(self.W1.shape[1])

    def copy(self):
        return MlpParams(self.W1.copy(), self.b1.copy(),
                         self.W2.copy(), self.b2.copy())


class MembershipSeries:
    """Per-slice membership matrices B_t (N x K), row-stochastic."""

    def __init__(self, B):
        self.B = [np.asarray(Bt, dtype=np.float64) for Bt in B]
        for t, Bt in enumerate(self.B):
            if Bt.ndim != 2:
                raise ValueError(f"slice {t}: membership matrix must be 2-d")
            if (Bt < -1e-12).any() or (Bt > 1.0 + 1e-12).any():
                raise ValueError(f"slice {t}: membership entries must lie in [0, 1]")
            if not np.allclose(Bt.sum(axis=1), 1.0, atol=1e-9, rtol=0.0):
                raise ValueError(f"slice {t}: membership rows must sum to 1")

    @property
    def num_slices(self):
        return len(self.B)


def latent_inputs(f):
    """Per-slice mapper inputs ``Z_t = A @ R_t`` (each N x R)."""
    return [f.A @ Rt for Rt in f.Rt]


def _forward_cached(p, Z):
    if not np.isfinite(Z).all():
        raise NumericsError("non-finite input to mapper forward pass")
    pre1 = Z @ p.W1.T + p.b1
    hid = np.maximum(pre1, 0.0)
    logits = hid @ p.W2.T + p.b2
    logits = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    B = expl / expl.sum(axis=1, keepdims=True)
    return B, hid, pre1


def forward(p, Z):
    """Map feature rows Z (N x R) to membership rows (N x K).

    ``h = ReLU(W1 z + b1)``, ``b = Softmax(W2 h + b2)`` with max-subtracted
    softmax; output rows sum to 1.
    """
    B, _, _ = _forward_cached(p, np.asarray(Z, dtype=np.float64))
    return B


def _slice_scale(sl, Bt, XB):
    # least-squares scalar s = alpha^2 minimizing ||X - s B B^T||_F
    tr_bxb = float(np.sum(Bt * XB))
    gram = Bt.T @ Bt
    norm_sq = float(np.sum(gram * gram))
    s = tr_bxb / norm_sq if norm_sq > 0.0 else 0.0
    return s, tr_bxb, norm_sq, gram


def mapper_loss(g, series, beta):
    """Reconstruction-plus-smoothness loss of a membership series.

    ``sum_t ||X_t - Bs_t Bs_t^T||_F^2 + beta * sum_{t>=1} ||B_t - B_{t-1}||_F^2``
    where ``Bs_t = alpha_t B_t`` and ``alpha_t`` is the closed-form scalar that
    best matches the magnitude of X_t.  Evaluated sparsely via
    ``||X||^2 - 2 tr(Bs^T X Bs) + ||Bs^T Bs||^2``.
    """
    total = 0.0
    for t in range(g.num_slices):
        Bt = series.B[t]
        XB = slice_matmul(g, t, Bt)
        s, tr_bxb, norm_sq, _ = _slice_scale(g.slices[t], Bt, XB)
        total += g.slices[t].frob_sq - 2.0 * s * tr_bxb + s * s * norm_sq
    for t in range(1, g.num_slices):
        diff = series.B[t] - series.B[t - 1]
        total += beta * float(np.sum(diff * diff))
    return total


def _loss_and_grads(g, Zs, p, beta):
    """Loss, parameter gradients, and memberships in one pass.

    The per-slice scale alpha_t is recomputed from the current memberships and
    held constant during backprop; because alpha_t is the exact minimizer of
    the reconstruction term, this partial gradient equals the total gradient.
    """
    t_count = g.num_slices
    Bs, hids, pre1s = [], [], []
    for t in range(t_count):
        B, hid, pre1 = _forward_cached(p, Zs[t])
        Bs.append(B)
        hids.append(hid)
        pre1s.append(pre1)

    loss = 0.0
    dBs = []
    for t in range(t_count):
        Bt = Bs[t]
        XB = slice_matmul(g, t, Bt)
        s, tr_bxb, norm_sq, gram = _slice_scale(g.slices[t], Bt, XB)
        loss += g.slices[t].frob_sq - 2.0 * s * tr_bxb + s * s * norm_sq
        dBs.append(-4.0 * s * (XB - s * (Bt @ gram)))
    for t in range(1, t_count):
        diff = Bs[t] - Bs[t - 1]
        loss += beta * float(np.sum(diff * diff))
        dBs[t] += 2.0 * beta * diff
        dBs[t - 1] -= 2.0 * beta * diff

    dW1 = np.zeros_like(p.W1)
    db1 = np.zeros_like(p.b1)
    dW2 = np.zeros_like(p.W2)
    db2 = np.zeros_like(p.b2)
    for t in range(t_count):
        B, dB = Bs[t], dBs[t]
        # softmax backprop per row: b * (g - <g, b>)
        dlogits = B * (dB - np.sum(dB * B, axis=1, keepdims=True))
        dW2 += dlogits.T @ hids[t]
        db2 += dlogits.sum(axis=0)
        dhid = dlogits @ p.W2
        dpre1 = dhid * (pre1s[t] > 0.0)
        dW1 += dpre1.T @ Zs[t]
        db1 += dpre1.sum(axis=0)
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}
    return loss, grads, Bs


def mapper_gradients(g, f, p, beta):
    """Analytic gradient of :func:`mapper_loss` w.r.t. the parameters.

    Returns a dict with keys ``W1, b1, W2, b2``.  ReLU uses subgradient 0 at
    exactly 0; gradients from all slices accumulate in ascending slice order.
    """
    _, grads, _ = _loss_and_grads(g, latent_inputs(f), p, beta)
    return grads


def _init_params(seed, in_dim, hidden, communities):
    rng = np.random.default_rng(seed)
    s1 = math.sqrt(6.0 / (in_dim + hidden))
    s2 = math.sqrt(6.0 / (hidden + communities))
    return MlpParams(
        W1=rng.uniform(-s1, s1, size=(hidden, in_dim)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-s2, s2, size=(communities, hidden)),
        b2=np.zeros(communities),
    )


def train(g, f, cfg):
    """Full-batch gradient descent on the mapper loss.

    Inputs ``Z_t = A @ R_t`` are precomputed once from the fitted factors.
    Returns ``(MlpParams, MembershipSeries, history)`` with
    ``len(history) == epochs + 1`` (initial loss plus one entry per epoch).
    """
    Zs = latent_inputs(f)
    hidden = cfg.hidden if cfg.hidden is not None else 2 * max(f.rank, cfg.communities)
    p = _init_params(cfg.seed, f.rank, hidden, cfg.communities)

    loss, grads, Bs = _loss_and_grads(g, Zs, p, cfg.beta)
    history = [loss]
    for epoch in range(1, cfg.epochs + 1):
        if cfg.grad_clip > 0.0:
            norm = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
            if norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
                grads = {k: v * scale for k, v in grads.items()}
        p.W1 = p.W1 - cfg.learning_rate * grads["W1"]
        p.b1 = p.b1 - cfg.learning_rate * grads["b1"]
        p.W2 = p.W2 - cfg.learning_rate * grads["W2"]
        p.b2 = p.b2 - cfg.learning_rate * grads["b2"]
        loss, grads, Bs = _loss_and_grads(g, Zs, p, cfg.beta)
        if not math.isfinite(loss):
            raise NumericsError(f"mapper loss became non-finite at epoch {epoch}")
        history.append(loss)
    return p, MembershipSeries(Bs), history


def hard_assign(Bt):
    """Argmax community per row; ties break toward the lowest index."""
    Bt = np.asarray(Bt)
    if Bt.ndim != 2:
        raise ValueError("membership matrix must be 2-d")
    return np.argmax(Bt, axis=1).astype(np.int64)


def save_params(path, p):
    """Write an MLP checkpoint: JSON shape header plus row-major arrays."""
    payload = {
        "hidden": p.hidden,
        "communities": p.communities,
        "in_dim": p.in_dim,
        "W1": [float(v) for v in p.W1.ravel()],
        "b1": [float(v) for v in p.b1],
        "W2": [float(v) for v in p.W2.ravel()],
        "b2": [float(v) for v in p.b2],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        h, k, r = payload["hidden"], payload["communities"], payload["in_dim"]
        return MlpParams(
            W1=np.asarray(payload["W1"], dtype=np.float64).reshape(h, r),
            b1=np.asarray(payload["b1"], dtype=np.float64),
            W2=np.asarray(payload["W2"], dtype=np.float64).reshape(k, h),
            b2=np.asarray(payload["b2"], dtype=np.float64),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad parameter checkpoint: {exc}") from None


def write_membership_csv(path, Bt):
    """One slice's memberships: header ``node,c_0..c_{K-1}``."""
    Bt = np.asarray(Bt)
    k = Bt.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node"] + [f"c_{c}" for c in range(k)])
        for node, row in enumerate(Bt):
            writer.writerow([node] + [repr(float(v)) for v in row])


def read_membership_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "node":
            raise ParseError(f"{path}: expected membership header node,c_0..")
        rows = [[float(v) for v in row[1:]] for row in reader]
    return np.asarray(rows, dtype=np.float64)


def write_embedding_csv(path, Z):
    """One slice's latent feature rows: header ``node,z_0..z_{R-1}``."""
    Z = np.asarray(Z)
    r = Z.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node"] + [f"z_{c}" for c in range(r)])
        for node, row in enumerate(Z):
            writer.writerow([node] + [repr(float(v)) for v in row])
