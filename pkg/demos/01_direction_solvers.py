"""Compare the damped Gauss-Newton direction solvers on one random instance.

All exact routes (small-system, Woodbury, QR, dense reference) must agree
to near machine precision; truncated conjugate gradients only gets close.
The timing teaser at the end shows why the small-system route is the
default: it needs a single large matrix product where the Woodbury form
needs two.
"""

import time

import numpy as np

from egn.losses import QBlocks
from egn.solvers import (
    cg_direction,
    dense_oracle,
    egn_direction,
    qr_direction,
    random_instance,
    smw_direction,
    time_solver,
)

rng = np.random.default_rng(0)

# an MSE-shaped instance: b samples, scalar output, d parameters
b, d, lam = 32, 1500, 0.1
r, J, Q = random_instance(d=d, b=b, c=1, seed=0)

reference = dense_oracle(r, J, Q, lam, b)
routes = {
    "small-system": egn_direction(r, J, Q, lam, b),
    "woodbury": smw_direction(r, J, Q, lam, b),
    "qr": qr_direction(r, J, lam, b),
    "cg (5 iters)": cg_direction(r, J, Q, lam, b, max_iters=5),
    "cg (full)": cg_direction(r, J, Q, lam, b, max_iters=d),
}

print(f"instance: b={b}, c=1, d={d}, lam={lam}")
print(f"{'route':>14} | relative error vs dense reference")
for name, direction in routes.items():
    err = np.linalg.norm(direction - reference) / (1 + np.linalg.norm(reference))
    print(f"{name:>14} | {err:.3e}")

# a cross-entropy-shaped instance exercises the block-diagonal curvature
r, J, Q = random_instance(d=800, b=16, c=5, seed=1)
err = np.linalg.norm(egn_direction(r, J, Q, 0.5, 16) - dense_oracle(r, J, Q, 0.5, 16))
print(f"\ncross-entropy curvature (b=16, c=5, d=800): |egn - dense| = {err:.3e}")

# timing teaser (small sizes so the demo stays quick)
print("\nwall-clock means over 50 repeats, one BLAS thread:")
for kind in ("egn", "smw"):
    rec = time_solver(kind, d=20_000, b=32, c=10, repeats=50, seed=2)
    print(f"  {kind}: {rec.mean_seconds * 1e3:7.2f} ms  (+/- {rec.std_seconds * 1e3:.2f})")
