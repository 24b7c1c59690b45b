"""Train the same MLP with Gauss-Newton steps, Adam, and SGD on one budget.

Each optimizer gets the same few seconds of wall time on the bundled
synthetic regression task (ReLU teacher plus 0.1 noise, so test RMSE
cannot beat ~0.1). Gauss-Newton takes far fewer, far better steps.
"""

from dataclasses import replace

from egn import bench
from egn.config import DataConfig, LqrConfig, ModelConfig, OptimConfig, RunConfig

BUDGET_SECONDS = 8.0

base = RunConfig(
    model=ModelConfig(widths=(8, 32, 32, 1)),
    data=DataConfig(synthetic="regression", n=8000, m=8, noise_std=0.1, seed=0),
    optim=OptimConfig(),
    lqr=LqrConfig(),
    batch_size=128,
    max_seconds=BUDGET_SECONDS,
    eval_every=200,
    seeds=(0,),
    run_id="demo",
)

settings = {
    "egn": OptimConfig(kind="egn", lr=1.0, lambda0=1.0, momentum=0.9),
    "adam": OptimConfig(kind="adam", lr=0.001),
    "sgd": OptimConfig(kind="sgd", lr=0.05),
}

print(f"synthetic regression, noise floor ~0.1, {BUDGET_SECONDS:.0f}s per optimizer\n")
print(f"{'optimizer':>9} | {'steps':>7} | final test RMSE")
for name, opt in settings.items():
    result = bench.train_single_run(replace(base, optim=opt), seed=0)
    print(f"{name:>9} | {result.steps:>7} | {result.final_metric:.4f}")
