"""Watch the Armijo line search and the adaptive damping rule act per step.

On a full-batch least-squares problem every quantity is transparent: the
model-reduction ratio rho compares the actual loss drop against the
quadratic model's prediction, damping shrinks while the model is trusted
(rho > 0.75), and the line search grows the step back after each cut.
"""

import numpy as np

from egn.nn import Batch, MlpSpec, init_params
from egn.optim import LineSearchConfig, OptimizerState, egn_step

rng = np.random.default_rng(3)
spec = MlpSpec((6, 16, 1))
X = rng.standard_normal((256, 6))
y = np.tanh(X[:, :1]) + 0.05 * rng.standard_normal((256, 1))
batch = Batch(X, y)

w = init_params(spec, seed=0)
state = OptimizerState.initial(spec.n_params, lam0=1.0, beta=0.0)
ls = LineSearchConfig(alpha_max=1.0, c_up=1.5, c_down=0.5)

print(f"{'t':>3} | {'loss':>10} | {'alpha':>7} | {'lambda':>8} | {'rho':>7} | backtracks")
for t in range(12):
    w, state, rep = egn_step(state, w, batch, spec, "mse", ls=ls, adapt_lambda=True)
    print(
        f"{t + 1:>3} | {rep.loss_before:>10.6f} | {rep.alpha_used:>7.4f} |"
        f" {rep.lambda_used:>8.5f} | {rep.rho:>7.4f} | {rep.backtracks}"
    )
print(f"\nfinal batch loss: {rep.loss_after:.6f}")
