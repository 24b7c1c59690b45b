"""Benchmark harness: seeded training sweeps, solver microbenchmarks,
batch-size profiling, and LQR policy-iteration runs.

Every command writes CSV (one row per measurement) plus, for sweeps, a
JSON-lines summary with one line per seed and a final aggregate line.
Training wall time excludes evaluation passes; evaluation time is logged
in its own column. All floats are written with shortest round-trip
formatting so reruns with the same seed produce identical bytes in the
non-timing columns.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from egn import lqr as lqr_mod
from egn.config import ConfigError, RunConfig, validate_for_training
from egn.data import Dataset, SplitSpec, load_csv, split, standardize, synth_classification, synth_regression
from egn.losses import loss_bundle
from egn.nn import Batch, MlpSpec, backprop_mean_gradient, forward, init_params
from egn.optim import (
    AdamState,
    LineSearchConfig,
    OptimizerState,
    StepFailure,
    StepSchedule,
    adam_step,
    egn_step,
    sgd_step,
)
from egn.solvers import egn_direction, time_solver

METRIC_COLUMNS = (
    "run_id",
    "seed",
    "step",
    "wall_seconds",
    "eval_seconds",
    "train_loss",
    "eval_metric",
    "alpha",
    "lambda",
)

# named MLP presets for the profiling command (8 inputs, scalar output)
PROFILE_MODELS = {
    "1k": (8, 28, 24, 1),
    "10k": (8, 64, 96, 32, 1),
    "100k": (8, 128, 256, 256, 1),
    "1m": (8, 512, 1024, 512, 1),
}

# largest Jacobian the microbenchmarks will materialize (entries)
MEMORY_GUARD_ENTRIES = 300_000_000


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# --------------------------------------------------------------- datasets


def build_dataset(cfg: RunConfig):
    """Materialize (train, test) splits according to the [data] section."""
    d = cfg.data
    if d.synthetic == "regression":
        ds = synth_regression(d.n, d.m, d.noise_std, d.seed)
    elif d.synthetic == "classification":
        ds = synth_classification(d.n, d.m, d.classes, d.seed, separation=d.separation)
    else:
        ds = load_csv(d.path, target_column=d.target, categorical_columns=d.categoricals)
    train, test = split(ds, SplitSpec(test_fraction=d.test_fraction, seed=d.seed))
    if d.standardize:
        train, test, _ = standardize(train, test, targets=d.standardize_target)
    return train, test


def evaluate_metric(spec: MlpSpec, w: np.ndarray, test: Dataset) -> float:
    """Test-set RMSE for regression, accuracy for classification."""
    out = forward(spec, w, test.features)
    if test.task == "regression":
        return float(np.sqrt(np.mean((out - test.targets) ** 2)))
    return float(np.mean(np.argmax(out, axis=1) == np.argmax(test.targets, axis=1)))


def _model_spec(cfg: RunConfig, train: Dataset) -> MlpSpec:
    widths = cfg.model.widths
    if widths[0] != train.features.shape[1] or widths[-1] != train.n_outputs:
        raise ConfigError(
            f"model.widths {widths} does not match data: "
            f"{train.features.shape[1]} features, {train.n_outputs} outputs"
        )
    acts = (cfg.model.activation,) * (len(widths) - 2) + ("identity",)
    return MlpSpec(widths, activations=acts)


# --------------------------------------------------------------- training


@dataclass
class _RunResult:
    seed: int
    rows: list
    final_metric: float | None
    final_loss: float | None
    steps: int
    train_seconds: float
    error: str | None = None


def _fo_loss_and_grad(spec, w, batch, loss_kind):
    b = batch.size
    outputs = forward(spec, w, batch.features)
    bundle = loss_bundle(loss_kind, outputs, batch.targets)
    out_grad = bundle.residuals.reshape(b, -1) / b
    _, g = backprop_mean_gradient(spec, w, batch.features, out_grad)
    return bundle.loss, g


def train_single_run(cfg: RunConfig, seed: int) -> _RunResult:
    """One seeded training run; returns metric rows and the summary entry."""
    train, test = build_dataset(cfg)
    spec = _model_spec(cfg, train)
    loss_kind = "mse" if train.task == "regression" else "ce"
    w = init_params(spec, seed)
    rng = np.random.default_rng(seed)

    opt = cfg.optim
    schedule = (
        StepSchedule(kind="diminishing", alpha0=opt.alpha0, a=opt.a)
        if opt.schedule == "diminishing"
        else StepSchedule(kind="constant", alpha0=opt.lr)
    )
    state = OptimizerState.initial(
        spec.n_params, lam0=opt.lambda0, beta=opt.momentum, schedule=schedule
    )
    ls = LineSearchConfig(enabled=opt.line_search)
    adam_state = AdamState()

    n_train = train.n_rows
    steps_per_epoch = int(np.ceil(n_train / cfg.batch_size))
    order = rng.permutation(n_train)
    pos = 0
    rows = []
    step = 0
    train_wall = 0.0
    eval_wall = 0.0
    last_loss = None
    error = None

    def budget_left():
        if cfg.max_steps is not None and step >= cfg.max_steps:
            return False
        if cfg.epochs is not None and step >= cfg.epochs * steps_per_epoch:
            return False
        if cfg.max_seconds is not None and train_wall >= cfg.max_seconds:
            return False
        return True

    def record():
        nonlocal eval_wall
        t0 = time.perf_counter()
        metric = evaluate_metric(spec, w, test)
        eval_wall += time.perf_counter() - t0
        rows.append(
            (cfg.run_id, seed, step, train_wall, eval_wall,
             last_loss if last_loss is not None else float("nan"),
             metric, state.alpha, state.lam)
        )
        return metric

    metric = record()
    try:
        while budget_left():
            if pos >= n_train:
                order = rng.permutation(n_train)
                pos = 0
            idx = order[pos : pos + cfg.batch_size]
            pos += cfg.batch_size
            batch = Batch(train.features[idx], train.targets[idx])

            t0 = time.perf_counter()
            if opt.kind == "egn":
                solver = "cg" if opt.cg_iters > 0 else "egn"
                w, state, report = egn_step(
                    state, w, batch, spec, loss_kind,
                    ls=ls if opt.line_search else None,
                    adapt_lambda=opt.adaptive_lambda,
                    solver=solver,
                    cg_iters=opt.cg_iters,
                )
                last_loss = report.loss_before
            elif opt.kind == "sgd":
                loss, g = _fo_loss_and_grad(spec, w, batch, loss_kind)
                w = sgd_step(w, g, opt.lr)
                last_loss = loss
            else:  # adam
                loss, g = _fo_loss_and_grad(spec, w, batch, loss_kind)
                w, adam_state = adam_step(adam_state, w, g, opt.lr)
                last_loss = loss
            if not np.isfinite(last_loss):
                raise StepFailure(f"non-finite loss at step {step}")
            train_wall += time.perf_counter() - t0
            step += 1

            if step % cfg.eval_every == 0:
                metric = record()
        metric = record()
    except (StepFailure, FloatingPointError) as e:
        error = str(e)
        metric = None

    return _RunResult(
        seed=seed,
        rows=rows,
        final_metric=metric,
        final_loss=last_loss,
        steps=step,
        train_seconds=train_wall,
        error=error,
    )


def cmd_train(config: RunConfig, out_dir) -> Path:
    """Run the seeded sweep; one CSV per seed plus a JSONL summary."""
    validate_for_training(config)
    out = Path(out_dir) / config.run_id
    out.mkdir(parents=True, exist_ok=True)
    finals = []
    summary_lines = []
    for seed in config.seeds:
        result = train_single_run(config, seed)
        _write_csv(out / f"seed{seed}.csv", METRIC_COLUMNS, result.rows)
        entry = {
            "run_id": config.run_id,
            "seed": seed,
            "final_metric": result.final_metric,
            "final_loss": result.final_loss,
            "steps": result.steps,
            "train_seconds": result.train_seconds,
        }
        if result.error is not None:
            entry["error"] = result.error
        summary_lines.append(entry)
        if result.final_metric is not None:
            finals.append(result.final_metric)
    aggregate = {
        "run_id": config.run_id,
        "seed": None,
        "n_runs": len(config.seeds),
        "n_failed": len(config.seeds) - len(finals),
        "metric_mean": float(np.mean(finals)) if finals else None,
        "metric_std": float(np.std(finals)) if finals else None,
    }
    summary_lines.append(aggregate)
    with open(out / "summary.jsonl", "w", encoding="utf-8") as fh:
        for line in summary_lines:
            fh.write(json.dumps(line) + "\n")
    return out


# --------------------------------------------------------------- microbench


CG_GRID = (3, 5, 10, 20, 50)

BENCH_COLUMNS = (
    "solver", "d", "b", "c", "repeats", "mean_seconds", "std_seconds", "egn_over_smw",
)


def parse_solver_names(names):
    """Validate solver tokens; CG takes its iteration count as ``cg:K``."""
    parsed = []
    for name in names:
        if name.startswith("cg:"):
            iters = int(name.split(":", 1)[1])
            if iters not in CG_GRID:
                raise ValueError(f"cg iterations must be one of {CG_GRID}, got {iters}")
            parsed.append(("cg", iters))
        elif name in ("egn", "smw", "qr", "dense", "cg"):
            parsed.append((name, 10))
        else:
            raise ValueError(f"unknown solver {name!r}")
    return parsed


def cmd_bench_solver(d_list, b_list, c_list, solvers, repeats, seed, out_path, lam=1.0):
    """Time each solver on each (d, b, c) cell; emits the EGN/SMW ratio."""
    parsed = parse_solver_names(solvers)
    rows = []
    for d in d_list:
        for b in b_list:
            for c in c_list:
                if d * b * c > MEMORY_GUARD_ENTRIES:
                    raise ValueError(
                        f"cell (d={d}, b={b}, c={c}) exceeds the memory guard"
                    )
                cell = {}
                for kind, cg_iters in parsed:
                    if kind == "qr" and c != 1:
                        continue
                    rec = time_solver(
                        kind, d=d, b=b, c=c, repeats=repeats, seed=seed,
                        lam=lam, cg_iters=cg_iters,
                    )
                    cell[kind] = rec
                ratio = ""
                if "egn" in cell and "smw" in cell:
                    ratio = cell["egn"].mean_seconds / cell["smw"].mean_seconds
                for kind, rec in cell.items():
                    rows.append(
                        (kind, d, b, c, rec.repeats, rec.mean_seconds,
                         rec.std_seconds, ratio)
                    )
    out_path = Path(out_path)
    _write_csv(out_path, BENCH_COLUMNS, rows)
    return rows


PROFILE_COLUMNS = (
    "model", "d", "b", "repeats", "solve_ms", "other_ms", "solve_fraction",
)


def profile_step_split(spec: MlpSpec, b: int, repeats: int, seed: int, lam: float = 1.0):
    """Mean per-step milliseconds split into direction solve vs the rest.

    "Other" covers the per-sample Jacobian, residuals, and the weight
    update bookkeeping; "solve" is the small-system direction computation.
    """
    from egn.losses import mse_bundle
    from egn.nn import forward_and_jacobian

    rng = np.random.default_rng(seed)
    w = init_params(spec, seed)
    X = rng.standard_normal((b, spec.n_inputs))
    y = rng.standard_normal((b, 1))
    solve_s = 0.0
    other_s = 0.0
    with threadpool_limits(limits=1):
        for rep in range(repeats + 1):
            t0 = time.perf_counter()
            out, J = forward_and_jacobian(spec, w, X)
            bundle = mse_bundle(out, y)
            t1 = time.perf_counter()
            direction = egn_direction(bundle.residuals, J, bundle.qblocks, lam, b)
            t2 = time.perf_counter()
            w_next = w + 0.5 * direction
            t3 = time.perf_counter()
            if rep == 0:
                continue  # warm-up
            other_s += (t1 - t0) + (t3 - t2)
            solve_s += t2 - t1
    solve_ms = 1e3 * solve_s / repeats
    other_ms = 1e3 * other_s / repeats
    return solve_ms, other_ms, solve_ms / (solve_ms + other_ms)


def cmd_profile_batch(model_names, batch_sizes, repeats, seed, out_path):
    """Profile the solve-time share per (model size, batch size) cell."""
    rows = []
    for name in model_names:
        if name not in PROFILE_MODELS:
            raise ValueError(f"unknown model {name!r}; choices: {sorted(PROFILE_MODELS)}")
        spec = MlpSpec(PROFILE_MODELS[name])
        for b in batch_sizes:
            if b * spec.n_params > MEMORY_GUARD_ENTRIES:
                raise ValueError(f"cell (model={name}, b={b}) exceeds the memory guard")
            solve_ms, other_ms, fraction = profile_step_split(spec, b, repeats, seed)
            rows.append((name, spec.n_params, b, repeats, solve_ms, other_ms, fraction))
    _write_csv(Path(out_path), PROFILE_COLUMNS, rows)
    return rows


# --------------------------------------------------------------- lqr


LQR_COLUMNS = ("run_id", "seed", "iteration", "wall_seconds", "error_norm")


def cmd_lqr(system: str, config: RunConfig, out_dir) -> Path:
    """Policy iteration per seed, logging ||K_p - K*|| against wall time."""
    if Path(system).exists():
        sys_ = lqr_mod.load_system(system)
        sys_name = Path(system).stem
    else:
        sys_ = lqr_mod.builtin_system(system)
        sys_name = system
    _, K_star = lqr_mod.riccati_oracle(sys_)
    lc = config.lqr
    eval_cfg = lqr_mod.PolicyEvalConfig(
        mode=lc.mode,
        lr=lc.lr,
        lam=lc.lam,
        batch_size=lc.batch_size,
        explore_std=lc.explore_std,
        horizon=lc.horizon,
        eta=lc.eval_eta,
        max_updates=lc.max_updates,
        cg_iters=lc.cg_iters,
    )
    run_id = f"{config.run_id}-{sys_name}"
    out = Path(out_dir) / run_id
    out.mkdir(parents=True, exist_ok=True)
    summary_lines = []
    finals = []
    n = sys_.n_states + sys_.n_actions
    for seed in config.seeds:
        K = np.zeros((sys_.n_actions, sys_.n_states))
        w = np.zeros(lqr_mod.n_quad_features(n))
        seeds = np.random.SeedSequence(seed).generate_state(lc.max_policy_iters)
        rows = []
        wall = 0.0
        err = None
        failure = None
        try:
            for p_iter in range(1, lc.max_policy_iters + 1):
                t0 = time.perf_counter()
                w = lqr_mod.policy_evaluation(sys_, K, w, eval_cfg, seed=int(seeds[p_iter - 1]))
                M = lqr_mod.weights_to_matrix(w, n)
                K_new = lqr_mod.policy_improvement(M, sys_.n_states)
                wall += time.perf_counter() - t0
                err = float(np.linalg.norm(K_new - K_star))
                rows.append((run_id, seed, p_iter, wall, err))
                done = np.linalg.norm(K_new - K) < lc.eta
                K = K_new
                if done:
                    break
        except lqr_mod.LqrError as e:
            failure = str(e)
        _write_csv(out / f"seed{seed}.csv", LQR_COLUMNS, rows)
        entry = {"run_id": run_id, "seed": seed, "final_error": err,
                 "iterations": len(rows), "wall_seconds": wall}
        if failure is not None:
            entry["error"] = failure
        summary_lines.append(entry)
        if err is not None and failure is None:
            finals.append(err)
    aggregate = {
        "run_id": run_id,
        "seed": None,
        "n_runs": len(config.seeds),
        "n_failed": len(config.seeds) - len(finals),
        "error_mean": float(np.mean(finals)) if finals else None,
        "error_std": float(np.std(finals)) if finals else None,
    }
    summary_lines.append(aggregate)
    with open(out / "summary.jsonl", "w", encoding="utf-8") as fh:
        for line in summary_lines:
            fh.write(json.dumps(line) + "\n")
    return out
