"""Interchangeable solvers for the damped Gauss-Newton direction.

All solvers compute the direction ``d`` defined by

    ((1/b) J^T Q J + lam I_d) d = -(1/b) J^T r

from the residuals ``r`` (length b*c), stacked Jacobian ``J`` (b*c x d),
curvature blocks ``Q`` and damping ``lam > 0``, without ever forming the
d x d system. The routes differ in cost and exactness:

* ``egn_direction``  - exact; factors one bc x bc matrix after a single
  O(b^2 c^2 d) product ``J J^T``.
* ``smw_direction``  - exact; the Woodbury route, which needs a second
  O(b^2 c^2 d) stage to apply the inverted small system through ``J^T``.
* ``qr_direction``   - exact, MSE only (Q = I); economy QR of ``J^T``.
* ``cg_direction``   - inexact; matrix-free conjugate gradients.
* ``dense_oracle``   - exact reference that materializes the d x d system
  (test oracle, capped at small d).

``time_solver`` wraps any of them in a single-threaded microbenchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from egn.losses import MAX_DENSE_DIM, QBlocks

CG_RESIDUAL_TOL = 1e-10


def _validate(r: np.ndarray, J: np.ndarray, Q: QBlocks | None, lam: float, b: int):
    if J.ndim != 2 or r.ndim != 1 or J.shape[0] != r.shape[0]:
        raise ValueError(f"incompatible shapes: J {J.shape}, r {r.shape}")
    if J.shape[0] % b != 0:
        raise ValueError(f"row count {J.shape[0]} not a multiple of batch size {b}")
    if Q is not None and Q.b * Q.c != J.shape[0]:
        raise ValueError(f"Q covers {Q.b * Q.c} rows, J has {J.shape[0]}")
    if not np.isfinite(lam):
        raise ValueError("non-finite damping")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residuals")


def _require_positive_lam(lam: float, who: str):
    if lam <= 0.0:
        raise ValueError(f"{who} requires lam > 0, got {lam}")


def egn_small_system(J: np.ndarray, Q: QBlocks, lam: float, b: int) -> np.ndarray:
    """The bc x bc matrix Q J J^T + b*lam*I that the exact route factorizes."""
    S = Q.apply(J @ J.T)
    S = np.array(S)  # Q may return its input for the identity case
    S[np.diag_indices_from(S)] += b * lam
    return S


def egn_direction(r: np.ndarray, J: np.ndarray, Q: QBlocks, lam: float, b: int) -> np.ndarray:
    """Exact damped Gauss-Newton direction via the small-system route.

    Solves (Q J J^T + b*lam*I) delta = r by partial-pivot LU (the matrix is
    non-symmetric whenever Q is not the identity), then returns
    d = -J^T delta. Cost is dominated by the single J J^T product.
    """
    _validate(r, J, Q, lam, b)
    _require_positive_lam(lam, "egn_direction")
    S = egn_small_system(J, Q, lam, b)
    if not np.all(np.isfinite(S)):
        raise ValueError("non-finite small system (bad J or Q)")
    delta = np.linalg.solve(S, r)
    return -(J.T @ delta)


def smw_direction(r: np.ndarray, J: np.ndarray, Q: QBlocks, lam: float, b: int) -> np.ndarray:
    """Exact direction via the Sherman-Morrison-Woodbury inverse.

    Uses operands A = lam*I, U = J^T, C = (1/b) Q, V = J. The textbook
    middle factor contains Q^{-1}, which does not exist for cross-entropy
    blocks (their rows sum to zero); left-multiplying by Q turns it into
    the Q-free system (Q J J^T + b*lam*I) while leaving the route's cost
    signature intact: one J J^T product plus one d-column solve through
    the small factorization. Rejects lam = 0, where A is singular.
    """
    _validate(r, J, Q, lam, b)
    if lam == 0.0:
        raise ValueError("smw_direction is undefined at lam = 0 (singular A)")
    _require_positive_lam(lam, "smw_direction")
    S = egn_small_system(J, Q, lam, b)
    if not np.all(np.isfinite(S)):
        raise ValueError("non-finite small system (bad J or Q)")
    g = (J.T @ r) / b
    lu = scipy.linalg.lu_factor(S)
    # X = S^{-T} J, so X^T = J^T S^{-1}: the second O(b^2 c^2 d) stage
    X = scipy.linalg.lu_solve(lu, J, trans=1)
    u = Q.apply(J @ g)
    return -(g - X.T @ u) / lam


def qr_direction(r: np.ndarray, J: np.ndarray, lam: float, b: int) -> np.ndarray:
    """Exact direction for the MSE case (Q = I) via economy QR of J^T.

    With J^T = Q_hat R, solves (R R^T + b*lam*I) delta = R r through a
    second QR factorization and returns d = -Q_hat delta; the push-through
    identity makes this equal to the small-system solution.
    """
    _validate(r, J, None, lam, b)
    _require_positive_lam(lam, "qr_direction")
    if not np.all(np.isfinite(J)):
        raise ValueError("non-finite Jacobian")
    Qhat, R = np.linalg.qr(J.T, mode="reduced")
    S = R @ R.T
    S[np.diag_indices_from(S)] += b * lam
    Qt, Rt = np.linalg.qr(S)
    delta = scipy.linalg.solve_triangular(Rt, Qt.T @ (R @ r))
    return -(Qhat @ delta)


def cg_direction(
    r: np.ndarray,
    J: np.ndarray,
    Q: QBlocks,
    lam: float,
    b: int,
    max_iters: int,
) -> np.ndarray:
    """Inexact direction by conjugate gradients on the d x d system.

    Matrix-free products v -> (1/b) J^T (Q (J v)) + lam v, started from 0
    and stopped after ``max_iters`` iterations or once the residual norm
    drops below CG_RESIDUAL_TOL * (1 + ||rhs||).
    """
    _validate(r, J, Q, lam, b)
    _require_positive_lam(lam, "cg_direction")
    d = J.shape[1]
    x = np.zeros(d)
    if max_iters <= 0:
        return x
    rhs = -(J.T @ r) / b
    res = rhs.copy()
    p = res.copy()
    rs = float(res @ res)
    tol = CG_RESIDUAL_TOL * (1.0 + np.sqrt(float(rhs @ rhs)))
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol:
            break
        Ap = (J.T @ Q.apply(J @ p)) / b + lam * p
        curv = float(p @ Ap)
        if curv <= 0.0 or not np.isfinite(curv):
            raise ValueError("CG curvature breakdown (non-finite or non-SPD operator)")
        alpha = rs / curv
        x += alpha * p
        res -= alpha * Ap
        rs_new = float(res @ res)
        p = res + (rs_new / rs) * p
        rs = rs_new
    return x


def dense_oracle(r: np.ndarray, J: np.ndarray, Q: QBlocks, lam: float, b: int) -> np.ndarray:
    """Reference solution that materializes (1/b) J^T Q J + lam I.

    Solved by symmetric (Cholesky) factorization; only usable for small d.
    Accepts lam = 0 so degenerate positive-definite cases stay testable.
    """
    _validate(r, J, Q, lam, b)
    if lam < 0.0:
        raise ValueError("negative damping")
    d = J.shape[1]
    if d > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialize {d}x{d} (cap {MAX_DENSE_DIM})")
    H = (J.T @ Q.apply(J)) / b
    H[np.diag_indices_from(H)] += lam
    g = (J.T @ r) / b
    return scipy.linalg.solve(H, -g, assume_a="pos")


@dataclass(frozen=True)
class TimingRecord:
    kind: str
    d: int
    b: int
    c: int
    repeats: int
    mean_seconds: float
    std_seconds: float


def random_instance(d: int, b: int, c: int, seed: int):
    """Gaussian J and r plus softmax-style curvature blocks (identity at c=1)."""
    rng = np.random.default_rng(seed)
    J = rng.standard_normal((b * c, d))
    r = rng.standard_normal(b * c)
    if c == 1:
        Q = QBlocks(b=b, c=1)
    else:
        logits = rng.standard_normal((b, c))
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        blocks = -np.einsum("bi,bj->bij", p, p)
        idx = np.arange(c)
        blocks[:, idx, idx] += p
        Q = QBlocks(b=b, c=c, blocks=blocks)
    return r, J, Q


def _solver_callable(kind: str, r, J, Q, lam, b, cg_iters: int):
    if kind == "egn":
        return lambda: egn_direction(r, J, Q, lam, b)
    if kind == "smw":
        return lambda: smw_direction(r, J, Q, lam, b)
    if kind == "qr":
        if Q.c != 1:
            raise ValueError("qr solver handles the MSE case (c = 1) only")
        return lambda: qr_direction(r, J, lam, b)
    if kind == "cg":
        return lambda: cg_direction(r, J, Q, lam, b, cg_iters)
    if kind == "dense":
        return lambda: dense_oracle(r, J, Q, lam, b)
    raise ValueError(f"unknown solver kind {kind!r}")


def time_solver(
    kind: str,
    d: int,
    b: int,
    c: int,
    repeats: int,
    seed: int,
    lam: float = 1.0,
    cg_iters: int = 10,
    warmup: int = 10,
) -> TimingRecord:
    """Wall-clock microbenchmark of one direction solver.

    Times only the direction computation on a fixed random instance
    (generation is excluded); runs ``warmup`` untimed solves first and
    pins the BLAS to one thread so repeats are comparable.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if min(d, b, c) < 1:
        raise ValueError("sizes must be >= 1")
    r, J, Q = random_instance(d, b, c, seed)
    fn = _solver_callable(kind, r, J, Q, lam, b, cg_iters)
    times = np.empty(repeats)
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            fn()
        for i in range(repeats):
            t0 = time.perf_counter()
            fn()
            times[i] = time.perf_counter() - t0
    return TimingRecord(
        kind=kind,
        d=d,
        b=b,
        c=c,
        repeats=repeats,
        mean_seconds=float(times.mean()),
        std_seconds=float(times.std()),
    )
