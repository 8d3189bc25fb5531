"""Nonnegative shared-factor decomposition of a temporal adjacency tensor.

Every slice is approximated as ``X_t ~= A @ R_t @ A.T`` with one nonnegative
node-feature matrix ``A`` (N x R) shared across slices and a nonnegative
relation matrix ``R_t`` (R x R) per slice.  Factors are fit by alternating
multiplicative updates that preserve nonnegativity by construction.

All losses and updates are evaluated through the sparse edge lists; nothing
here builds an N x N matrix.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError, ParseError
from .temporal import slice_matmul

__all__ = [
    "RescalConfig",
    "FactorModel",
    "init_factors",
    "rescal_loss",
    "update_a",
    "update_r",
    "rebalanced",
    "fit",
    "save_factors",
    "load_factors",
    "write_loss_history",
    "read_loss_history",
]


@dataclass
class RescalConfig:
    """Hyperparameters of the factorization.

    ``lambda_a`` and ``lambda_r`` are Frobenius penalties on A and the R_t;
    ``epsilon`` is a strictly positive denominator guard for the
    multiplicative updates; ``rel_tol`` stops the sweep loop once the relative
    loss change drops below it.
    """

    rank: int
    lambda_a: float = 0.01
    lambda_r: float = 0.01
    max_iters: int = 200
    rel_tol: float = 1e-6
    epsilon: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be > 0")
        if self.lambda_a < 0.0 or self.lambda_r < 0.0:
            raise ValueError("regularization weights must be >= 0")
        if self.rel_tol < 0.0:
            raise ValueError("rel_tol must be >= 0")


@dataclass
class FactorModel:
    """Factors of the decomposition: ``A`` (N x R) and one ``R_t`` per slice."""

    A: np.ndarray
    Rt: list[np.ndarray] = field(default_factory=list)

    @property
    def rank(self):
        return int(self.A.shape[1])

    @property
    def num_nodes(self):
        return int(self.A.shape[0])

    @property
    def num_slices(self):
        return len(self.Rt)


def init_factors(cfg, num_nodes, num_slices):
    """Draw factors i.i.d. uniform on (0, 1].

    Entries are strictly positive so multiplicative updates never start from
    a structural zero.  Deterministic for a given ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    A = 1.0 - rng.random((num_nodes, cfg.rank))
    Rt = [1.0 - rng.random((cfg.rank, cfg.rank)) for _ in range(num_slices)]
    return FactorModel(A=A, Rt=Rt)


def rescal_loss(g, f, cfg):
    """Regularized reconstruction loss, evaluated sparsely.

    Returns ``0.5 * sum_t ||X_t - A R_t A^T||_F^2
    + 0.5 * lambda_a * ||A||_F^2 + 0.5 * lambda_r * sum_t ||R_t||_F^2``
    using the expansion ``||X_t||^2 - 2 tr(A^T X_t A R_t) + tr(R_t G R_t^T G)``
    with the Gram matrix ``G = A^T A``.
    """
    A = f.A
    G = A.T @ A
    total = 0.0
    for t in range(g.num_slices):
        Rt = f.Rt[t]
        AtXA = A.T @ slice_matmul(g, t, A)
        cross = float(np.sum(AtXA * Rt.T))
        gram = float(np.sum((Rt @ G) * (G @ Rt)))
        total += 0.5 * (g.slices[t].frob_sq - 2.0 * cross + gram)
        total += 0.5 * cfg.lambda_r * float(np.sum(Rt * Rt))
    total += 0.5 * cfg.lambda_a * float(np.sum(A * A))
    if not math.isfinite(total):
        raise NumericsError("factorization loss is not finite")
    return total


def update_a(g, f, cfg):
    """One multiplicative update of A; returns the new matrix.

    ``A <- A * [sum_t X_t A (R_t + R_t^T)]
            / [A sum_t (R_t G R_t^T + R_t^T G R_t) + lambda_a A + eps]``
    with ``G = A^T A``.  The numerator uses X_t symmetry: the two terms
    ``X_t A R_t^T + X_t^T A R_t`` share the product ``X_t A``, which is
    computed once per slice.  The ridge penalty enters the denominator as
    ``lambda_a * A`` (its gradient), keeping every array N x R.
    """
    A = f.A
    G = A.T @ A
    numer = np.zeros_like(A)
    S = np.zeros((f.rank, f.rank))
    for t in range(g.num_slices):
        Rt = f.Rt[t]
        P = slice_matmul(g, t, A)
        numer += P @ (Rt + Rt.T)
        S += Rt @ G @ Rt.T + Rt.T @ G @ Rt
    denom = A @ S + cfg.lambda_a * A + cfg.epsilon
    if not np.all(denom > 0.0):
        raise NumericsError("zero or non-finite denominator in A update")
    out = A * (numer / denom)
    if not np.isfinite(out).all():
        raise NumericsError("A update produced non-finite entries")
    return out


def update_r(g, f, cfg, t, gram=None):
    """One multiplicative update of R_t; returns the new matrix.

    ``R_t <- R_t * (A^T X_t A) / (G R_t G + lambda_r R_t + eps)``.
    ``gram`` lets a sweep share one precomputed ``G = A^T A`` across slices.
    """
    A = f.A
    G = A.T @ A if gram is None else gram
    Rt = f.Rt[t]
    numer = A.T @ slice_matmul(g, t, A)
    denom = G @ Rt @ G + cfg.lambda_r * Rt + cfg.epsilon
    if not np.all(denom > 0.0):
        raise NumericsError(f"zero or non-finite denominator in R update, slice {t}")
    out = Rt * (numer / denom)
    if not np.isfinite(out).all():
        raise NumericsError(f"R update produced non-finite entries, slice {t}")
    return out


def rebalanced(f, lambda_a, lambda_r):
    """Fix the scale ambiguity of the factorization.

    ``A -> c A`` together with ``R_t -> R_t / c**2`` leaves every product
    ``A R_t A^T`` unchanged, so the reconstruction term cannot tell the two
    apart; only the ridge penalties can.  This picks the ``c`` minimizing
    ``(lambda_a/2) c^2 ||A||^2 + (lambda_r/2) c^-4 sum ||R_t||^2`` (closed
    form ``c^6 = 2 lambda_r sum||R_t||^2 / (lambda_a ||A||^2)``) and returns
    the rescaled model.  Never increases the loss.  With either penalty
    weight at 0, or a degenerate all-zero factor, the model is returned
    unchanged.

    Without this, multiplicative updates are free to drift along the scale
    direction, and at larger ranks they park at tiny ``R_t`` / large ``A``
    where the downstream per-node features ``A @ R_t`` are badly scaled.
    """
    if lambda_a <= 0.0 or lambda_r <= 0.0:
        return f
    a_sq = float(np.sum(f.A * f.A))
    r_sq = float(sum(np.sum(Rt * Rt) for Rt in f.Rt))
    if a_sq <= 0.0 or r_sq <= 0.0:
        return f
    c = (2.0 * lambda_r * r_sq / (lambda_a * a_sq)) ** (1.0 / 6.0)
    return FactorModel(A=c * f.A, Rt=[Rt / (c * c) for Rt in f.Rt])


def fit(g, cfg):
    """Alternating multiplicative updates until convergence.

    Each sweep updates A first, then every R_t against the refreshed Gram
    matrix, and ends by rebalancing the scale ambiguity (see
    :func:`rebalanced` — never increases the loss).  Returns
    ``(FactorModel, history)`` where ``history[0]`` is the loss at
    initialization and ``history[n]`` the loss after sweep ``n``.  Stops at
    ``max_iters`` sweeps or when
    ``|loss_n - loss_{n-1}| / max(loss_{n-1}, eps) < rel_tol``.
    """
    f = init_factors(cfg, g.num_nodes, g.num_slices)
    try:
        history = [rescal_loss(g, f, cfg)]
        for sweep in range(1, cfg.max_iters + 1):
            f.A = update_a(g, f, cfg)
            G = f.A.T @ f.A
            f.Rt = [update_r(g, f, cfg, t, gram=G) for t in range(g.num_slices)]
            f = rebalanced(f, cfg.lambda_a, cfg.lambda_r)
            loss = rescal_loss(g, f, cfg)
            prev = history[-1]
            history.append(loss)
            if abs(loss - prev) / max(prev, cfg.epsilon) < cfg.rel_tol:
                break
    except NumericsError as exc:
        raise NumericsError(f"sweep {len(history)}: {exc}") from None
    return f, history


def save_factors(path, f):
    """Write a factor checkpoint: JSON shape header plus row-major arrays."""
    payload = {
        "num_nodes": f.num_nodes,
        "rank": f.rank,
        "num_slices": f.num_slices,
        "A": [float(v) for v in f.A.ravel()],
        "Rt": [[float(v) for v in Rt.ravel()] for Rt in f.Rt],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_factors(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        n, r = payload["num_nodes"], payload["rank"]
        A = np.asarray(payload["A"], dtype=np.float64).reshape(n, r)
        Rt = [np.asarray(flat, dtype=np.float64).reshape(r, r)
              for flat in payload["Rt"]]
        if len(Rt) != payload["num_slices"]:
            raise ValueError("slice count mismatch in checkpoint")
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad factor checkpoint: {exc}") from None
    return FactorModel(A=A, Rt=Rt)


def write_loss_history(path, history, label="sweep"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([label, "loss"])
        for idx, value in enumerate(history):
            writer.writerow([idx, repr(float(value))])


def read_loss_history(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2 or header[1] != "loss":
            raise ParseError(f"{path}: bad loss history header")
        return [float(row[1]) for row in reader]
