"""Data-driven LQR: simulation, quadratic Q-models, and policy iteration.

A discrete linear system s' = A s + B a + e with quadratic reward
s^T Qr s + a^T Rr a (Qr negative semidefinite, Rr negative definite) has
a quadratic optimal Q-function. Generalized policy iteration alternates
temporal-difference evaluation of the current linear policy K -- the
weight vector over quadratic monomials of [s; a] is fit either by plain
semi-gradient steps or by damped Gauss-Newton least-squares steps -- with
the greedy improvement K = -M_aa^{-1} M_as read off the weight matrix.
An analytic Riccati fixed-point solver supplies ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from egn.losses import QBlocks
from egn.solvers import cg_direction, egn_direction


class LqrError(RuntimeError):
    pass


class DefinitenessError(LqrError):
    """The action-action block of the learned Q-matrix lost definiteness."""


class EvaluationDivergence(LqrError):
    """Policy evaluation weights blew up."""


@dataclass(frozen=True)
class LqrSystem:
    A: np.ndarray  # (n_s, n_s)
    B: np.ndarray  # (n_s, n_a)
    Sigma: np.ndarray  # (n_s, n_s) noise covariance, zero for deterministic
    Qr: np.ndarray  # (n_s, n_s) state reward, negative semidefinite
    Rr: np.ndarray  # (n_a, n_a) action reward, negative definite
    gamma: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=np.float64))
        Qr = np.atleast_2d(np.asarray(self.Qr, dtype=np.float64))
        Rr = np.atleast_2d(np.asarray(self.Rr, dtype=np.float64))
        ns = A.shape[0]
        if A.shape != (ns, ns) or B.shape[0] != ns:
            raise ValueError(f"bad A/B shapes: {A.shape}, {B.shape}")
        na = B.shape[1]
        if Sigma.shape != (ns, ns) or Qr.shape != (ns, ns) or Rr.shape != (na, na):
            raise ValueError("Sigma/Qr/Rr shapes inconsistent with A and B")
        for M, name in ((Sigma, "Sigma"), (Qr, "Qr"), (Rr, "Rr")):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(Sigma).min() < -1e-10:
            raise ValueError("Sigma must be positive semidefinite")
        if np.linalg.eigvalsh(Qr).max() > 1e-10:
            raise ValueError("Qr must be negative semidefinite")
        if np.linalg.eigvalsh(Rr).max() >= 0.0:
            raise ValueError("Rr must be negative definite")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if np.any(Sigma != 0.0) and self.gamma >= 1.0:
            raise ValueError("stochastic systems need gamma < 1")
        for name, M in (("A", A), ("B", B), ("Sigma", Sigma), ("Qr", Qr), ("Rr", Rr)):
            object.__setattr__(self, name, M)
        vals, vecs = np.linalg.eigh(Sigma)
        object.__setattr__(self, "_noise_L", vecs * np.sqrt(np.clip(vals, 0.0, None)))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_actions(self) -> int:
        return self.B.shape[1]

    @property
    def has_noise(self) -> bool:
        return bool(np.any(self.Sigma != 0.0))

    def noise_transform(self) -> np.ndarray:
        """L with L L^T = Sigma, via eigendecomposition (Sigma may be singular)."""
        return self._noise_L


def simulate_step(sys: LqrSystem, s: np.ndarray, a: np.ndarray, rng: np.random.Generator):
    """One transition: s' = A s + B a + e, reward = s^T Qr s + a^T Rr a."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    s_next = sys.A @ s + sys.B @ a
    if sys.has_noise:
        s_next = s_next + sys.noise_transform() @ rng.standard_normal(sys.n_states)
    reward = float(s @ sys.Qr @ s + a @ sys.Rr @ a)
    return s_next, reward


def n_quad_features(n: int) -> int:
    return n * (n + 1) // 2


def quad_features(s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Monomials z_i z_j (i <= j, lexicographic) of z = [s; a].

    Off-diagonal monomials carry a factor 2 so that w @ x equals
    z^T M(w) z for the symmetric matrix built by ``weights_to_matrix``.
    """
    z = np.concatenate([np.atleast_1d(s), np.atleast_1d(a)])
    outer = np.outer(z, z)
    iu, ju = np.triu_indices(z.shape[0])
    scale = np.where(iu == ju, 1.0, 2.0)
    return outer[iu, ju] * scale


def weights_to_matrix(w: np.ndarray, n: int) -> np.ndarray:
    """Inverse of ``matrix_to_weights``; returns the symmetric n x n matrix."""
    if w.shape[0] != n_quad_features(n):
        raise ValueError(f"expected {n_quad_features(n)} weights, got {w.shape[0]}")
    M = np.zeros((n, n))
    M[np.triu_indices(n)] = w
    return M + np.triu(M, 1).T


def matrix_to_weights(M: np.ndarray) -> np.ndarray:
    return M[np.triu_indices(M.shape[0])]


@dataclass(frozen=True)
class PolicyEvalConfig:
    """How the TD weights are fit during one policy evaluation.

    mode "egn" takes damped Gauss-Newton least-squares steps on batches of
    transitions; "sgd" applies the per-transition semi-gradient update.
    ``cg_iters > 0`` swaps the exact direction for truncated CG. The damping
    must stay small against the squared feature scale or the TD iteration
    crawls; 1e-4 suits states near unit magnitude.
    """

    mode: str = "egn"
    lr: float = 1.0
    lam: float = 1e-4
    batch_size: int = 128
    explore_std: float = 0.1
    horizon: int = 50
    eta: float = 1e-8
    max_updates: int = 5000
    cg_iters: int = 0

    def __post_init__(self):
        if self.mode not in ("egn", "sgd"):
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        if self.lr <= 0 or self.lam <= 0 or self.batch_size < 1:
            raise ValueError("lr, lam must be positive and batch_size >= 1")
        if self.eta <= 0 or self.max_updates < 1 or self.horizon < 1:
            raise ValueError("eta, max_updates, horizon must be positive")


class _Explorer:
    """Rollout stream under the exploratory policy K s + e with episode resets."""

    def __init__(self, sys: LqrSystem, K: np.ndarray, cfg: PolicyEvalConfig, rng):
        self.sys, self.K, self.cfg, self.rng = sys, K, cfg, rng
        self.steps = 0
        self.s = rng.standard_normal(sys.n_states)
        n = sys.n_states + sys.n_actions
        iu, ju = np.triu_indices(n)
        self._iu, self._ju = iu, ju
        self._scale = np.where(iu == ju, 1.0, 2.0)
        self._noise = sys.noise_transform() if sys.has_noise else None

    def _features(self, Z: np.ndarray) -> np.ndarray:
        """quad_features applied to every row of Z = [S | A]."""
        return Z[:, self._iu] * Z[:, self._ju] * self._scale

    def collect(self, count: int):
        """Roll ``count`` transitions; returns (X, rewards, X_next) feature arrays."""
        sys, K, cfg, rng = self.sys, self.K, self.cfg, self.rng
        ns, na = sys.n_states, sys.n_actions
        S = np.empty((count, ns))
        Act = np.empty((count, na))
        Sn = np.empty((count, ns))
        s = self.s
        for i in range(count):
            if self.steps and self.steps % cfg.horizon == 0:
                s = rng.standard_normal(ns)
            a = K @ s + cfg.explore_std * rng.standard_normal(na)
            s_next = sys.A @ s + sys.B @ a
            if self._noise is not None:
                s_next += self._noise @ rng.standard_normal(ns)
            S[i], Act[i], Sn[i] = s, a, s_next
            s = s_next
            self.steps += 1
        self.s = s
        rewards = np.einsum("bi,ij,bj->b", S, sys.Qr, S)
        rewards += np.einsum("bi,ij,bj->b", Act, sys.Rr, Act)
        X = self._features(np.hstack([S, Act]))
        Xn = self._features(np.hstack([Sn, Sn @ K.T]))
        return X, rewards, Xn


def policy_evaluation(
    sys: LqrSystem,
    K: np.ndarray,
    w0: np.ndarray,
    cfg: PolicyEvalConfig,
    seed: int,
) -> np.ndarray:
    """Fit the quadratic Q-function of policy K by temporal differences.

    Iterates until the per-update weight change drops below cfg.eta in the
    infinity norm, or cfg.max_updates is hit. Raises on weight blow-up.
    """
    rng = np.random.default_rng(seed)
    explorer = _Explorer(sys, np.atleast_2d(K), cfg, rng)
    gamma = sys.gamma
    w = np.asarray(w0, dtype=np.float64).copy()
    p = w.shape[0]
    qb = QBlocks(b=cfg.batch_size, c=1)
    for _ in range(cfg.max_updates):
        if cfg.mode == "sgd":
            X, R, Xn = explorer.collect(1)
            x, reward, x_next = X[0], R[0], Xn[0]
            td = reward + float(w @ (gamma * x_next - x))
            w_new = w + cfg.lr * td * x
        else:
            X, R, Xn = explorer.collect(cfg.batch_size)
            # semi-gradient residual: prediction minus bootstrapped target
            r = X @ w - (R + gamma * (Xn @ w))
            if cfg.cg_iters > 0:
                d = cg_direction(r, X, qb, cfg.lam, cfg.batch_size, cfg.cg_iters)
            else:
                d = egn_direction(r, X, qb, cfg.lam, cfg.batch_size)
            w_new = w + cfg.lr * d
        if not np.all(np.isfinite(w_new)) or np.linalg.norm(w_new) > 1e12:
            raise EvaluationDivergence(
                f"policy evaluation diverged (|w| = {np.linalg.norm(w_new):.3e})"
            )
        delta = np.max(np.abs(w_new - w))
        w = w_new
        if delta < cfg.eta:
            break
    return w


def policy_improvement(M: np.ndarray, n_states: int) -> np.ndarray:
    """Greedy policy K = -M_aa^{-1} M_as from the Q-matrix.

    The reward convention makes M_aa negative definite at any useful
    iterate, so definiteness of -M_aa is what gets checked.
    """
    M_aa = M[n_states:, n_states:]
    M_as = M[n_states:, :n_states]
    try:
        np.linalg.cholesky(-M_aa)
    except np.linalg.LinAlgError:
        raise DefinitenessError(
            "action block of the Q-matrix is not negative definite"
        ) from None
    return -np.linalg.solve(M_aa, M_as)


@dataclass(frozen=True)
class PolicyIterationResult:
    K: np.ndarray
    iterates: tuple  # K_p after each improvement
    converged: bool


def policy_iteration(
    sys: LqrSystem,
    K0: np.ndarray,
    cfg: PolicyEvalConfig,
    eta: float = 1e-8,
    seed: int = 0,
    max_policy_iters: int = 100,
) -> PolicyIterationResult:
    """Alternate policy evaluation and greedy improvement from K0.

    Stops once consecutive policies differ by less than ``eta`` in
    Frobenius norm. The TD weights warm-start each evaluation.
    """
    K = np.atleast_2d(np.asarray(K0, dtype=np.float64))
    n = sys.n_states + sys.n_actions
    w = np.zeros(n_quad_features(n))
    seeds = np.random.SeedSequence(seed).generate_state(max_policy_iters)
    iterates = []
    converged = False
    for p_iter in range(max_policy_iters):
        w = policy_evaluation(sys, K, w, cfg, seed=int(seeds[p_iter]))
        M = weights_to_matrix(w, n)
        K_new = policy_improvement(M, sys.n_states)
        iterates.append(K_new)
        if np.linalg.norm(K_new - K) < eta:
            K = K_new
            converged = True
            break
        K = K_new
    return PolicyIterationResult(K=K, iterates=tuple(iterates), converged=converged)


def riccati_oracle(sys: LqrSystem, tol: float = 1e-12, max_iters: int = 1_000_000):
    """Analytic ground truth: fixed-point iteration on the discounted
    Riccati equation of the reward-maximization problem.

    Returns (P, K*) with v*(s) = s^T P s (+ constant for noisy systems)
    and pi*(s) = K* s. Raises if the iteration does not settle.
    """
    A, B, Qr, Rr, gamma = sys.A, sys.B, sys.Qr, sys.Rr, sys.gamma
    P = np.zeros_like(Qr)
    for _ in range(max_iters):
        M_aa = Rr + gamma * B.T @ P @ B
        M_as = gamma * B.T @ P @ A
        P_new = Qr + gamma * A.T @ P @ A - M_as.T @ np.linalg.solve(M_aa, M_as)
        if np.max(np.abs(P_new - P)) < tol:
            P = P_new
            break
        P = P_new
    else:
        raise LqrError("Riccati iteration did not converge")
    M_aa = Rr + gamma * B.T @ P @ B
    M_as = gamma * B.T @ P @ A
    K = -np.linalg.solve(M_aa, M_as)
    return P, K


def optimal_q_matrix(sys: LqrSystem) -> np.ndarray:
    """The (n_s+n_a) square Q-matrix of the optimal policy (from the oracle)."""
    P, _ = riccati_oracle(sys)
    A, B, Qr, Rr, gamma = sys.A, sys.B, sys.Qr, sys.Rr, sys.gamma
    M_ss = Qr + gamma * A.T @ P @ A
    M_sa = gamma * A.T @ P @ B
    M_aa = Rr + gamma * B.T @ P @ B
    top = np.hstack([M_ss, M_sa])
    bottom = np.hstack([M_sa.T, M_aa])
    return np.vstack([top, bottom])


def rollout_return(sys: LqrSystem, K: np.ndarray, s0: np.ndarray, steps: int) -> float:
    """Discounted return of the deterministic rollout of policy K from s0."""
    s = np.asarray(s0, dtype=np.float64)
    K = np.atleast_2d(K)
    total, disc = 0.0, 1.0
    rng = np.random.default_rng(0)  # unused for deterministic systems
    for _ in range(steps):
        a = K @ s
        s, reward = simulate_step(sys, s, a, rng)
        total += disc * reward
        disc *= sys.gamma
    return total


# ----------------------------------------------------------------- systems


def builtin_system(name: str) -> LqrSystem:
    """Bundled benchmark systems: "scalar", "synthetic4", "synthetic4noisy"."""
    if name == "scalar":
        return LqrSystem(
            A=[[0.5]], B=[[1.0]], Sigma=[[0.0]], Qr=[[-1.0]], Rr=[[-1.0]], gamma=1.0
        )
    if name in ("synthetic4", "synthetic4noisy"):
        A = np.array(
            [
                [0.90, 0.10, 0.00, 0.00],
                [0.00, 0.80, 0.10, 0.00],
                [0.00, 0.00, 0.70, 0.10],
                [0.10, 0.00, 0.00, 0.60],
            ]
        )
        B = np.array(
            [
                [1.0, 0.0],
                [0.0, 1.0],
                [0.5, 0.0],
                [0.0, 0.5],
            ]
        )
        sigma = 0.01 * np.eye(4) if name == "synthetic4noisy" else np.zeros((4, 4))
        return LqrSystem(A=A, B=B, Sigma=sigma, Qr=-np.eye(4), Rr=-np.eye(2), gamma=0.9)
    raise ValueError(f"unknown builtin system {name!r}")


def load_system(path) -> LqrSystem:
    """Parse a system definition file.

    Plain text, one ``key = value`` entry per line ('#' starts a comment).
    Keys: A, B, Sigma, Q, R (matrices; rows split by ';', entries by
    whitespace or commas) and gamma (scalar).
    """
    text = open(path, encoding="utf-8").read()
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value

    required = {"A", "B", "Sigma", "Q", "R", "gamma"}
    missing = required - entries.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")

    def parse_matrix(text_value, key):
        rows = []
        for row in text_value.split(";"):
            cells = row.replace(",", " ").split()
            if not cells:
                continue
            try:
                rows.append([float(cell) for cell in cells])
            except ValueError:
                raise ValueError(f"{path}: bad number in {key}") from None
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValueError(f"{path}: ragged or empty matrix {key}")
        return np.array(rows)

    return LqrSystem(
        A=parse_matrix(entries["A"], "A"),
        B=parse_matrix(entries["B"], "B"),
        Sigma=parse_matrix(entries["Sigma"], "Sigma"),
        Qr=parse_matrix(entries["Q"], "Q"),
        Rr=parse_matrix(entries["R"], "R"),
        gamma=float(entries["gamma"]),
    )
