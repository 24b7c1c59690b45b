"""Exact Gauss-Newton optimization toolkit.

Core pieces: a minimal MLP engine with exact per-sample Jacobians
(:mod:`egn.nn`), Gauss-Newton loss ingredients (:mod:`egn.losses`),
interchangeable Levenberg-Marquardt direction solvers (:mod:`egn.solvers`),
the full training loop with momentum, Armijo line search and adaptive
damping plus SGD/Adam baselines (:mod:`egn.optim`), data-driven LQR policy
iteration (:mod:`egn.lqr`), dataset utilities (:mod:`egn.data`), and the
benchmark harness (:mod:`egn.bench`) behind the ``egn`` command line tool.
"""

from egn.nn import MlpSpec, forward, forward_and_jacobian, init_params, stacked_jacobian
from egn.losses import LossBundle, QBlocks, batch_gradient, ce_bundle, ggn_hessian_dense, mse_bundle
from egn.solvers import cg_direction, dense_oracle, egn_direction, qr_direction, smw_direction, time_solver

__all__ = [
    "MlpSpec",
    "forward",
    "forward_and_jacobian",
    "init_params",
    "stacked_jacobian",
    "LossBundle",
    "QBlocks",
    "batch_gradient",
    "ce_bundle",
    "ggn_hessian_dense",
    "mse_bundle",
    "cg_direction",
    "dense_oracle",
    "egn_direction",
    "qr_direction",
    "smw_direction",
    "time_solver",
]
