"""Single-layer aggregation-aware network: losses, gradients, training.

The model is one weight matrix W (d x c), no bias, no activation. The forward
pass adds a raw-information term to the k-hop propagated features:

    Y = S^k X W + X W = (P + X) W,   P = S^k X

and training minimizes

    L = L_agg + lambda * L_rec
    L_agg = ||P W - X W||_F^2                 (aggregation-aware loss)
    L_rec = ||Yh Yh^T - A||_F^2 / N^2         (inner-product decoder loss)

with Yh the row-normalized Y and A the self-loop normalized adjacency of the
original graph. Both the loss and its analytic gradient are evaluated with
the Gram trick (through Yh^T Yh and sparse products), so nothing of size
N x N is ever materialized. The empirical-study variant trains the same W
under a fixed classical aggregator with the objective L_rec + lambda * L_agg,
where L_agg uses the raw self-loop-free adjacency.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ValidationError
from .graph import (
    AGGREGATORS,
    NormalizedAdjacency,
    SparseGraph,
    check_features,
    dirichlet_energy,
    normalize_no_self_loops,
    normalize_with_self_loops,
    propagate,
    row_normalize,
)
from .reconstruct import (
    ReconstructionConfig,
    ReconstructionStats,
    reconstruct_hard,
    reconstruct_soft,
)

# Early-stop rule for "train until convergence": relative total-loss change
# below EARLY_STOP_REL_TOL for EARLY_STOP_PATIENCE consecutive epochs.
EARLY_STOP_REL_TOL = 1e-6
EARLY_STOP_PATIENCE = 10


@dataclass(frozen=True)
class AMLPConfig:
    k: int = 3
    lambda_: float = 0.1
    hidden_dim: int = 500
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    eps_norm: float = 1e-12
    early_stop: bool = False
    # ablation switch: False drops the aggregation term, leaving lambda * L_rec
    use_agg_loss: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be >= 0")
        if self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lambda_,
            "hidden_dim": self.hidden_dim,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "eps_norm": self.eps_norm,
            "early_stop": self.early_stop,
            "use_agg_loss": self.use_agg_loss,
        }


@dataclass
class AMLPModel:
    """Trained weight matrix plus the configuration that produced it."""

    W: np.ndarray
    config: AMLPConfig


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, w: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(w), v=np.zeros_like(w))


@dataclass
class TrainReport:
    losses_agg: np.ndarray
    losses_rec: np.ndarray
    losses_total: np.ndarray
    wall_clock_seconds: float
    final_dirichlet: float
    epochs_run: int
    early_stopped: bool
    recon_stats: ReconstructionStats | None = None

    def as_dict(self) -> dict:
        d = {
            "epochs_run": self.epochs_run,
            "early_stopped": self.early_stopped,
            "wall_clock_seconds": self.wall_clock_seconds,
            "final_dirichlet_energy": self.final_dirichlet,
            "losses": {
                "agg": self.losses_agg.tolist(),
                "rec": self.losses_rec.tolist(),
                "total": self.losses_total.tolist(),
            },
        }
        if self.recon_stats is not None:
            d["reconstruction"] = self.recon_stats.as_dict()
        return d


def init_weights(d: int, c: int, seed: int) -> np.ndarray:
    """Uniform init on [-1/sqrt(c), 1/sqrt(c)], deterministic given seed."""
    if d < 1 or c < 1:
        raise ValidationError("weight dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(c)
    return rng.uniform(-bound, bound, size=(d, c))


def forward(p: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Y = (P + X) W, the propagated projection plus the raw-information term."""
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if p.shape != x.shape:
        raise ValidationError(f"P shape {p.shape} != X shape {x.shape}")
    if w.shape[0] != x.shape[1]:
        raise ValidationError(f"W has {w.shape[0]} rows, features have {x.shape[1]} columns")
    return (p + x) @ w


def loss_agg(p: np.ndarray, x: np.ndarray, w: np.ndarray) -> float:
    """||(P - X) W||_F^2 via the d x d Gram matrix M = (P-X)^T (P-X)."""
    diff = np.asarray(p, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    m = diff.T @ diff
    return float(np.sum(w * (m @ w)))


def _rec_pieces(
    y: np.ndarray, a_sp: sp.csr_matrix, a_frob2: float, eps_norm: float
):
    """Shared decoder-loss computation.

    Returns (l_rec, y_hat, norms, nz_mask, g_yhat) where g_yhat is the
    gradient of l_rec with respect to the row-normalized embedding.
    """
    n = y.shape[0]
    norms = np.linalg.norm(y, axis=1)
    nz = norms >= eps_norm
    y_hat = np.zeros_like(y)
    y_hat[nz] = y[nz] / norms[nz, None]
    gram = y_hat.T @ y_hat
    ay = a_sp @ y_hat
    cross = float(np.sum(y_hat * ay))
    l_rec = (float(np.sum(gram * gram)) - 2.0 * cross + a_frob2) / (n * n)
    g_yhat = (4.0 / (n * n)) * (y_hat @ gram - ay)
    return l_rec, y_hat, norms, nz, g_yhat


def _chain_row_normalize(
    g_yhat: np.ndarray, y_hat: np.ndarray, norms: np.ndarray, nz: np.ndarray
) -> np.ndarray:
    """Backpropagate through row normalization; zero-norm rows get zero gradient."""
    g_y = np.zeros_like(g_yhat)
    dots = np.einsum("ij,ij->i", g_yhat[nz], y_hat[nz])
    g_y[nz] = (g_yhat[nz] - dots[:, None] * y_hat[nz]) / norms[nz, None]
    return g_y


def loss_rec(
    y: np.ndarray, a_tilde: NormalizedAdjacency, eps_norm: float = 1e-12
) -> float:
    """Inner-product decoder loss ||Yh Yh^T - A||_F^2 / N^2, never forming N x N."""
    y = np.asarray(y, dtype=np.float64)
    if not a_tilde.self_loops:
        raise ValidationError("loss_rec expects the self-loop normalization")
    if y.shape[0] != a_tilde.n_nodes:
        raise ValidationError("embedding row count does not match adjacency")
    a_sp = a_tilde.to_scipy()
    a_frob2 = float(np.sum(a_tilde.values**2))
    l, *_ = _rec_pieces(y, a_sp, a_frob2, eps_norm)
    return l


def total_loss(
    p: np.ndarray,
    x: np.ndarray,
    w: np.ndarray,
    a_tilde: NormalizedAdjacency,
    cfg: AMLPConfig,
) -> tuple[float, float, float]:
    """(L, L_agg, L_rec) with L = L_agg + lambda * L_rec."""
    la = loss_agg(p, x, w)
    lr = loss_rec(forward(p, x, w), a_tilde, cfg.eps_norm)
    return la + cfg.lambda_ * lr, la, lr


def gradient(
    p: np.ndarray,
    x: np.ndarray,
    w: np.ndarray,
    a_tilde: NormalizedAdjacency,
    cfg: AMLPConfig,
) -> np.ndarray:
    """Analytic dL/dW for L = L_agg + lambda * L_rec.

    The aggregation term contributes 2 M W with M = (P-X)^T (P-X); the
    decoder term is chained through row normalization and Y = (P+X) W.
    """
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    diff = p - x
    m = diff.T @ diff
    g = 2.0 * (m @ w)
    if cfg.lambda_ != 0.0:
        b = p + x
        y = b @ w
        a_sp = a_tilde.to_scipy()
        a_frob2 = float(np.sum(a_tilde.values**2))
        _, y_hat, norms, nz, g_yhat = _rec_pieces(y, a_sp, a_frob2, cfg.eps_norm)
        g_y = _chain_row_normalize(g_yhat, y_hat, norms, nz)
        g += cfg.lambda_ * (b.T @ g_y)
    return g


def adam_step(
    state: AdamState, w: np.ndarray, grad: np.ndarray, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns the new weights and state."""
    if grad.shape != w.shape:
        raise ValidationError("gradient shape does not match weights")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    w_new = w - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return w_new, replace(state, m=m, v=v, step=t)


class _TrainingKernel:
    """Precomputed quantities for the epoch loop: B = P + X, M = (P-X)^T(P-X),
    the sparse decoder target and its squared Frobenius norm."""

    def __init__(self, p, x, a_tilde, lambda_, eps_norm, use_agg_loss=True):
        self.b = p + x
        diff = p - x
        self.m = diff.T @ diff
        self.a_sp = a_tilde.to_scipy()
        self.a_frob2 = float(np.sum(a_tilde.values**2))
        self.lambda_ = lambda_
        self.eps_norm = eps_norm
        self.use_agg_loss = use_agg_loss

    def loss_and_grad(self, w: np.ndarray) -> tuple[float, float, float, np.ndarray]:
        mw = self.m @ w
        la = float(np.sum(w * mw))
        if self.use_agg_loss:
            g = 2.0 * mw
        else:
            g = np.zeros_like(w)
        y = self.b @ w
        lr_, y_hat, norms, nz, g_yhat = _rec_pieces(
            y, self.a_sp, self.a_frob2, self.eps_norm
        )
        if self.lambda_ != 0.0:
            g_y = _chain_row_normalize(g_yhat, y_hat, norms, nz)
            g += self.lambda_ * (self.b.T @ g_y)
        total = (la if self.use_agg_loss else 0.0) + self.lambda_ * lr_
        return total, la, lr_, g


def train(
    g: SparseGraph,
    x: np.ndarray,
    cfg: AMLPConfig | None = None,
    recon_cfg: ReconstructionConfig | None = None,
) -> tuple[AMLPModel, np.ndarray, TrainReport]:
    """Full pipeline: reconstruct S, propagate k hops, train W, return Yh.

    Raises NumericalError with the epoch and loss values if the loss goes
    non-finite.
    """
    cfg = cfg or AMLPConfig()
    recon_cfg = recon_cfg or ReconstructionConfig()
    if g.n_nodes < 2:
        raise ValidationError("training needs at least 2 nodes")
    x = check_features(x, g.n_nodes)
    t0 = time.perf_counter()
    if recon_cfg.mode == "hard":
        s, stats = reconstruct_hard(g, x, recon_cfg)
    else:
        s, stats = reconstruct_soft(g, x, recon_cfg)
    s_tilde = normalize_no_self_loops(s)
    a_tilde = normalize_with_self_loops(g)
    p = propagate(s_tilde, x, cfg.k)
    kernel = _TrainingKernel(
        p, x, a_tilde, cfg.lambda_, cfg.eps_norm, use_agg_loss=cfg.use_agg_loss
    )
    w = init_weights(x.shape[1], cfg.hidden_dim, cfg.seed)
    state = AdamState.zeros_like(w)
    rec_agg, rec_rec, rec_tot = [], [], []
    stall = 0
    early_stopped = False
    for epoch in range(cfg.epochs):
        total, la, lr_, grad = kernel.loss_and_grad(w)
        if not np.isfinite(total):
            raise NumericalError(
                f"non-finite loss at epoch {epoch}: "
                f"total={total}, agg={la}, rec={lr_}"
            )
        rec_agg.append(la)
        rec_rec.append(lr_)
        rec_tot.append(total)
        w, state = adam_step(state, w, grad, cfg.learning_rate)
        if cfg.early_stop and epoch > 0:
            denom = max(abs(total), 1e-300)
            if abs(total - rec_tot[-2]) / denom < EARLY_STOP_REL_TOL:
                stall += 1
                if stall >= EARLY_STOP_PATIENCE:
                    early_stopped = True
                    break
            else:
                stall = 0
    y = kernel.b @ w
    y_hat = row_normalize(y, cfg.eps_norm)
    report = TrainReport(
        losses_agg=np.asarray(rec_agg),
        losses_rec=np.asarray(rec_rec),
        losses_total=np.asarray(rec_tot),
        wall_clock_seconds=time.perf_counter() - t0,
        final_dirichlet=dirichlet_energy(a_tilde, y_hat),
        epochs_run=len(rec_tot),
        early_stopped=early_stopped,
        recon_stats=stats,
    )
    return AMLPModel(W=w, config=cfg), y_hat, report


# ---------------------------------------------------------------------------
# Empirical-study variant: classical aggregator + optional aggregation loss
# ---------------------------------------------------------------------------


class _AggOp:
    """Forward/backward pair for one classical aggregator acting on Z = X W."""

    def __init__(self, kind: str, g: SparseGraph, a_tilde: NormalizedAdjacency):
        self.kind = kind
        self.g = g
        if kind == "sum":
            self.op = g.to_scipy()
            self.op_t = self.op  # symmetric
        elif kind == "mean":
            deg = g.degrees().astype(np.float64)
            inv = np.zeros_like(deg)
            inv[deg > 0] = 1.0 / deg[deg > 0]
            self.op = sp.diags(inv) @ g.to_scipy()
            self.op_t = self.op.T.tocsr()
        elif kind == "weighted_sum":
            self.op = a_tilde.to_scipy()
            self.op_t = self.op  # symmetric
        elif kind == "max":
            self.op = None
        else:
            raise ValidationError(f"unknown aggregator {kind!r}")

    def forward(self, z: np.ndarray) -> np.ndarray:
        if self.kind != "max":
            self._cache = None
            return self.op @ z
        n, c = z.shape
        y = np.zeros_like(z)
        argmax = np.full((n, c), -1, dtype=np.int64)
        cols = np.arange(c)
        for v in range(n):
            nb = self.g.neighbors(v)
            if nb.size:
                block = z[nb]
                j = block.argmax(axis=0)
                y[v] = block[j, cols]
                argmax[v] = nb[j]
        self._cache = argmax
        return y

    def backward(self, g_y: np.ndarray) -> np.ndarray:
        if self.kind != "max":
            return self.op_t @ g_y
        argmax = self._cache
        g_z = np.zeros_like(g_y)
        n, c = g_y.shape
        rows = argmax.ravel()
        mask = rows >= 0
        cols = np.tile(np.arange(c), n)
        np.add.at(g_z, (rows[mask], cols[mask]), g_y.ravel()[mask])
        return g_z


def exp1_train(
    g: SparseGraph,
    x: np.ndarray,
    aggregator: str,
    use_agg_loss: bool,
    lambda_: float = 0.1,
    cfg: AMLPConfig | None = None,
) -> tuple[float, np.ndarray]:
    """Train the autoencoder variant Y = agg(X W) and report Dirichlet energy.

    Objective is L_rec alone, or L_rec + lambda * L_agg with the pre-defined
    aggregation loss ||A X W - X W||_F^2 over the raw self-loop-free adjacency.
    Returns (Dr, Yh) where Dr is measured against the self-loop normalized
    adjacency of g.
    """
    if aggregator not in AGGREGATORS:
        raise ValidationError(
            f"unknown aggregator {aggregator!r}; expected one of {AGGREGATORS}"
        )
    cfg = cfg or AMLPConfig()
    x = check_features(x, g.n_nodes)
    a_tilde = normalize_with_self_loops(g)
    agg = _AggOp(aggregator, g, a_tilde)
    a_sp = a_tilde.to_scipy()
    a_frob2 = float(np.sum(a_tilde.values**2))
    m1 = None
    if use_agg_loss:
        diff = g.to_scipy() @ x - x
        m1 = diff.T @ diff
    w = init_weights(x.shape[1], cfg.hidden_dim, cfg.seed)
    state = AdamState.zeros_like(w)
    for epoch in range(cfg.epochs):
        z = x @ w
        y = agg.forward(z)
        lr_, y_hat, norms, nz, g_yhat = _rec_pieces(y, a_sp, a_frob2, cfg.eps_norm)
        total = lr_
        g_y = _chain_row_normalize(g_yhat, y_hat, norms, nz)
        g_z = agg.backward(g_y)
        grad = x.T @ g_z
        if use_agg_loss:
            m1w = m1 @ w
            total = total + lambda_ * float(np.sum(w * m1w))
            grad = grad + lambda_ * 2.0 * m1w
        if not np.isfinite(total):
            raise NumericalError(f"non-finite loss at epoch {epoch}: total={total}")
        w, state = adam_step(state, w, grad, cfg.learning_rate)
    y_hat = row_normalize(agg.forward(x @ w), cfg.eps_norm)
    return dirichlet_energy(a_tilde, y_hat), y_hat
