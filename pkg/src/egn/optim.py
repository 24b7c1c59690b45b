"""Stochastic optimizers: the exact Gauss-Newton loop plus SGD and Adam.

One Gauss-Newton training step runs, in order: residuals and stacked
Jacobian, damped direction from the low-rank solver, bias-corrected EMA
momentum on the direction, Armijo backtracking line search (or a fixed /
diminishing schedule), the weight update, and finally the adaptive
damping rule driven by the ratio of actual to model-predicted loss
decrease. States are small immutable records; steps return new states.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from egn.losses import QBlocks, batch_gradient, loss_bundle, loss_value
from egn.nn import Batch, MlpSpec, forward, forward_and_jacobian
from egn.solvers import cg_direction, egn_direction

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A training step hit a non-finite loss or direction."""


@dataclass(frozen=True)
class StepSchedule:
    """Step-size schedule when the line search is off.

    ``constant`` uses alpha0 at every step; ``diminishing`` uses
    alpha0 / (t+1)^a with 0 < alpha0 < 1 and 1/2 < a < 1.
    """

    kind: str = "constant"
    alpha0: float = 0.1
    a: float = 0.75

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.alpha0 <= 0.0:
            raise ValueError("alpha0 must be positive")
        if self.kind == "diminishing":
            if not (0.0 < self.alpha0 < 1.0):
                raise ValueError("diminishing schedule needs 0 < alpha0 < 1")
            if not (0.5 < self.a < 1.0):
                raise ValueError("diminishing schedule needs 1/2 < a < 1")

    def step_size(self, t: int) -> float:
        if self.kind == "constant":
            return self.alpha0
        return self.alpha0 / (t + 1) ** self.a


@dataclass(frozen=True)
class LineSearchConfig:
    enabled: bool = True
    alpha_max: float = 1.0
    kappa: float = 1e-4
    c_up: float = 1.5
    c_down: float = 0.5
    max_backtracks: int = 20

    def __post_init__(self):
        if self.alpha_max <= 0.0:
            raise ValueError("alpha_max must be positive")
        if not (0.0 < self.kappa < 1.0):
            raise ValueError("kappa must be in (0, 1)")
        if self.c_up <= 1.0:
            raise ValueError("c_up must exceed 1")
        if not (0.0 < self.c_down < 1.0):
            raise ValueError("c_down must be in (0, 1)")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be >= 0")


@dataclass(frozen=True)
class OptimizerState:
    """Iteration counter, damping, last step size and momentum buffer."""

    t: int
    lam: float
    alpha: float
    m: np.ndarray
    beta: float
    schedule: StepSchedule

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("damping must stay positive")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("momentum strength must be in [0, 1)")

    @classmethod
    def initial(
        cls,
        dim: int,
        lam0: float = 1.0,
        beta: float = 0.0,
        schedule: StepSchedule | None = None,
        alpha0: float | None = None,
    ) -> "OptimizerState":
        schedule = schedule or StepSchedule(kind="constant", alpha0=1.0)
        return cls(
            t=1,
            lam=lam0,
            alpha=schedule.alpha0 if alpha0 is None else alpha0,
            m=np.zeros(dim),
            beta=beta,
            schedule=schedule,
        )


@dataclass(frozen=True)
class StepReport:
    loss_before: float
    loss_after: float
    alpha_used: float
    lambda_used: float
    rho: float
    backtracks: int
    wall_seconds: float


@dataclass(frozen=True)
class ArmijoResult:
    alpha: float
    backtracks: int
    satisfied: bool


def armijo_search(
    spec: MlpSpec,
    loss_kind: str,
    w: np.ndarray,
    d: np.ndarray,
    alpha_prev: float,
    batch: Batch,
    g: np.ndarray,
    ls: LineSearchConfig,
    loss0: float | None = None,
) -> ArmijoResult:
    """Backtracking line search with a growth reset.

    Starts from min(alpha_max, alpha_prev * c_up) and halves (by c_down)
    until the sufficient-decrease condition
    L(w + alpha d) <= L(w) + kappa * alpha * <g, d> holds on this batch,
    or max_backtracks probes failed (then the smallest alpha is returned
    with ``satisfied=False``).
    """
    alpha = min(ls.alpha_max, alpha_prev * ls.c_up)
    gd = float(g @ d)
    if loss0 is None:
        loss0 = loss_value(loss_kind, forward(spec, w, batch.features), batch.targets)
    backtracks = 0
    while True:
        trial = loss_value(
            loss_kind, forward(spec, w + alpha * d, batch.features), batch.targets
        )
        if not np.isfinite(trial):
            raise StepFailure(f"non-finite loss {trial} while probing alpha={alpha}")
        if trial <= loss0 + ls.kappa * alpha * gd:
            return ArmijoResult(alpha=alpha, backtracks=backtracks, satisfied=True)
        if backtracks >= ls.max_backtracks:
            return ArmijoResult(alpha=alpha, backtracks=backtracks, satisfied=False)
        alpha *= ls.c_down
        backtracks += 1


def quadratic_model_decrease(
    g: np.ndarray, J: np.ndarray, Q: QBlocks, dw: np.ndarray, b: int
) -> float:
    """Predicted decrease g^T dw + (1/(2b)) (J dw)^T Q (J dw), matrix-free."""
    v = J @ dw
    return float(g @ dw) + 0.5 * float(v @ Q.apply(v)) / b


def model_reduction_ratio(
    loss_before: float,
    loss_after: float,
    g: np.ndarray,
    J: np.ndarray,
    Q: QBlocks,
    dw: np.ndarray,
    b: int,
) -> float:
    """Actual over model-predicted loss change for the taken step.

    Degenerate cases (zero step, vanishing denominator) return 1.0 so the
    damping is left untouched.
    """
    if not np.any(dw):
        return 1.0
    denom = quadratic_model_decrease(g, J, Q, dw, b)
    if abs(denom) < 1e-30:
        return 1.0
    return (loss_after - loss_before) / denom


def update_lambda(lam: float, rho: float) -> float:
    """Cautious damping update: grow 1% on poor model fit, shrink 1% on good."""
    if rho < 0.25:
        return lam * 1.01
    if rho > 0.75:
        return lam * 0.99
    return lam


def egn_step(
    state: OptimizerState,
    w: np.ndarray,
    batch: Batch,
    spec: MlpSpec,
    loss_kind: str,
    ls: LineSearchConfig | None = None,
    adapt_lambda: bool = False,
    solver: str = "egn",
    cg_iters: int = 10,
):
    """One Gauss-Newton training step; returns (w_new, state_new, report).

    ``solver`` picks the direction route: "egn" (exact small-system) or
    "cg" (truncated conjugate gradients with ``cg_iters`` iterations).
    """
    t0 = time.perf_counter()
    b = batch.size
    out, J = forward_and_jacobian(spec, w, batch.features)
    bundle = loss_bundle(loss_kind, out, batch.targets)
    if not np.isfinite(bundle.loss):
        raise StepFailure(f"non-finite loss {bundle.loss} at step {state.t}")
    r, Q = bundle.residuals, bundle.qblocks

    if solver == "egn":
        d_raw = egn_direction(r, J, Q, state.lam, b)
    elif solver == "cg":
        d_raw = cg_direction(r, J, Q, state.lam, b, cg_iters)
    else:
        raise ValueError(f"unknown direction solver {solver!r}")
    if not np.all(np.isfinite(d_raw)):
        raise StepFailure(f"non-finite direction at step {state.t}")

    m = state.beta * state.m + (1.0 - state.beta) * d_raw
    d = m / (1.0 - state.beta**state.t)

    g = batch_gradient(J, r, b)
    schedule_alpha = state.schedule.step_size(state.t)
    backtracks = 0
    if ls is not None and ls.enabled:
        if float(g @ d) < 0.0:
            res = armijo_search(
                spec, loss_kind, w, d, state.alpha, batch, g, ls, loss0=bundle.loss
            )
            alpha, backtracks = res.alpha, res.backtracks
        else:
            # stale momentum can point uphill; fall back to the schedule
            log.warning("non-descent direction at step %d, taking schedule step", state.t)
            alpha = schedule_alpha
    else:
        alpha = schedule_alpha

    w_new = w + alpha * d
    loss_after = loss_value(loss_kind, forward(spec, w_new, batch.features), batch.targets)
    rho = model_reduction_ratio(bundle.loss, loss_after, g, J, Q, alpha * d, b)
    lam_new = update_lambda(state.lam, rho) if adapt_lambda else state.lam

    state_new = replace(state, t=state.t + 1, lam=lam_new, alpha=alpha, m=m)
    report = StepReport(
        loss_before=bundle.loss,
        loss_after=loss_after,
        alpha_used=alpha,
        lambda_used=state.lam,
        rho=rho,
        backtracks=backtracks,
        wall_seconds=time.perf_counter() - t0,
    )
    return w_new, state_new, report


def sgd_step(w: np.ndarray, g: np.ndarray, alpha: float) -> np.ndarray:
    return w - alpha * g


@dataclass(frozen=True)
class AdamState:
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(
    adam_state: AdamState,
    w: np.ndarray,
    g: np.ndarray,
    alpha: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Standard bias-corrected Adam update; returns (w_new, state_new)."""
    m = np.zeros_like(w) if adam_state.m is None else adam_state.m
    v = np.zeros_like(w) if adam_state.v is None else adam_state.v
    t = adam_state.t + 1
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    w_new = w - alpha * m_hat / (np.sqrt(v_hat) + eps)
    return w_new, AdamState(t=t, m=m, v=v)
