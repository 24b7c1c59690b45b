"""Loss evaluation and Gauss-Newton ingredients for MSE and cross-entropy.

For a batch of ``b`` samples with ``c`` model outputs each, the pieces
needed by the low-rank solvers are the (pseudo-)residual vector ``r`` of
length ``b*c``, the per-sample output-space curvature blocks ``Q_i``
(c x c), and the batch gradient ``g = (1/b) J^T r``. The batch Hessian
approximation is ``(1/b) J^T Q J`` with ``Q = blkdiag(Q_1..Q_b)``; ``Q``
is never materialized at full ``bc x bc`` size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# dense GGN materialization is a test-time oracle, keep it small
MAX_DENSE_DIM = 5000


@dataclass(frozen=True)
class QBlocks:
    """Per-sample curvature blocks; ``blocks is None`` means identity (MSE)."""

    b: int
    c: int
    blocks: np.ndarray | None = None  # (b, c, c) when not identity

    def __post_init__(self):
        if self.blocks is not None and self.blocks.shape != (self.b, self.c, self.c):
            raise ValueError(
                f"expected blocks of shape {(self.b, self.c, self.c)}, got {self.blocks.shape}"
            )

    @property
    def is_identity(self) -> bool:
        return self.blocks is None

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Block-diagonal product Q @ x for a (b*c,) vector or (b*c, n) matrix."""
        if self.blocks is None:
            return x
        bc = self.b * self.c
        if x.shape[0] != bc:
            raise ValueError(f"expected leading dimension {bc}, got {x.shape}")
        if x.ndim == 1:
            out = np.einsum("bij,bj->bi", self.blocks, x.reshape(self.b, self.c))
            return out.reshape(bc)
        out = np.einsum("bij,bjn->bin", self.blocks, x.reshape(self.b, self.c, -1))
        return out.reshape(bc, x.shape[1])

    def dense(self) -> np.ndarray:
        """Full bc x bc block-diagonal matrix (tests only)."""
        bc = self.b * self.c
        out = np.zeros((bc, bc))
        for i in range(self.b):
            block = np.eye(self.c) if self.blocks is None else self.blocks[i]
            out[i * self.c : (i + 1) * self.c, i * self.c : (i + 1) * self.c] = block
        return out


@dataclass(frozen=True)
class LossBundle:
    """Batch loss together with the Gauss-Newton ingredients."""

    loss: float
    residuals: np.ndarray  # (b*c,), sample-major
    qblocks: QBlocks


def _as_column(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] != 1:
        raise ValueError(f"{name} must be a (b, 1) matrix, got {a.shape}")
    return a


def mse_bundle(outputs: np.ndarray, targets: np.ndarray) -> LossBundle:
    """Half squared error averaged over the batch; Q is the identity.

    loss = (1/(2b)) sum_i (out_i - y_i)^2, residual r_i = out_i - y_i.
    """
    outputs = _as_column(outputs, "outputs")
    targets = _as_column(targets, "targets")
    if outputs.shape != targets.shape:
        raise ValueError(f"shape mismatch: {outputs.shape} vs {targets.shape}")
    b = outputs.shape[0]
    r = (outputs - targets).ravel()
    loss = float(r @ r) / (2.0 * b)
    return LossBundle(loss=loss, residuals=r, qblocks=QBlocks(b=b, c=1))


def _check_one_hot(targets: np.ndarray):
    ok = np.all((targets == 0.0) | (targets == 1.0)) and np.all(targets.sum(axis=1) == 1.0)
    if not ok:
        bad = int(np.argmax((targets.sum(axis=1) != 1.0) | np.any((targets != 0) & (targets != 1), axis=1)))
        raise ValueError(f"target row {bad} is not one-hot")


def ce_bundle(logits: np.ndarray, targets: np.ndarray) -> LossBundle:
    """Softmax cross-entropy with log-sum-exp stabilization.

    Residual block i is p_i - y_i and curvature block i is
    diag(p_i) - p_i p_i^T, where p_i is the softmax of the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValueError(f"logits must be (b, c) with c >= 2, got {logits.shape}")
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {targets.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    _check_one_hot(targets)

    b, c = logits.shape
    zmax = logits.max(axis=1, keepdims=True)
    logp = logits - zmax - np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True))
    loss = float(-(targets * logp).sum()) / b
    p = np.exp(logp)
    r = (p - targets).ravel()
    blocks = -np.einsum("bi,bj->bij", p, p)
    idx = np.arange(c)
    blocks[:, idx, idx] += p
    return LossBundle(loss=loss, residuals=r, qblocks=QBlocks(b=b, c=c, blocks=blocks))


def loss_bundle(kind: str, outputs: np.ndarray, targets: np.ndarray) -> LossBundle:
    """Dispatch on loss kind: ``"mse"`` or ``"ce"``."""
    if kind == "mse":
        return mse_bundle(outputs, targets)
    if kind == "ce":
        return ce_bundle(outputs, targets)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_value(kind: str, outputs: np.ndarray, targets: np.ndarray) -> float:
    """Batch loss only (used by the line search, which re-evaluates often)."""
    if kind == "mse":
        outputs = _as_column(outputs, "outputs")
        targets = _as_column(targets, "targets")
        diff = (outputs - targets).ravel()
        return float(diff @ diff) / (2.0 * outputs.shape[0])
    if kind == "ce":
        logits = np.asarray(outputs, dtype=np.float64)
        zmax = logits.max(axis=1, keepdims=True)
        logp = logits - zmax - np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True))
        return float(-(targets * logp).sum()) / logits.shape[0]
    raise ValueError(f"unknown loss kind {kind!r}")


def batch_gradient(J: np.ndarray, r: np.ndarray, b: int) -> np.ndarray:
    """Batch-loss gradient g = (1/b) J^T r."""
    if J.shape[0] != r.shape[0]:
        raise ValueError(f"row mismatch: J has {J.shape[0]}, r has {r.shape[0]}")
    return (J.T @ r) / b


def ggn_hessian_dense(J: np.ndarray, Q: QBlocks, b: int) -> np.ndarray:
    """Dense (1/b) J^T Q J; a test oracle, capped at d <= MAX_DENSE_DIM."""
    d = J.shape[1]
    if d > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialize {d}x{d} (cap {MAX_DENSE_DIM})")
    return (J.T @ Q.apply(J)) / b
