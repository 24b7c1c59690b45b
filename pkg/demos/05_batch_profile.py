"""Where does a Gauss-Newton step spend its time as the batch grows?

Per step there are two stages: building the per-sample Jacobian plus
bookkeeping (linear in the batch size) and solving for the direction
(the J J^T product is quadratic in it). The solve share therefore climbs
with the batch size; on larger models it dominates outright.
"""

from egn.bench import PROFILE_MODELS, profile_step_split
from egn.nn import MlpSpec

model = "10k"
spec = MlpSpec(PROFILE_MODELS[model])
print(f"model {model}: {spec.n_params} parameters, widths {spec.widths}\n")
print(f"{'batch':>6} | {'solve ms':>9} | {'other ms':>9} | solve share")
for b in (8, 16, 32, 64, 128, 256, 512):
    solve_ms, other_ms, fraction = profile_step_split(spec, b=b, repeats=5, seed=0)
    print(f"{b:>6} | {solve_ms:>9.3f} | {other_ms:>9.3f} | {fraction:.3f}")
