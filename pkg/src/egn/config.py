"""Experiment configuration files.

INI syntax (``key = value`` under ``[section]`` headers) with four
sections: ``[model]``, ``[data]``, ``[optim]`` and ``[run]`` for training
configs, plus ``[lqr]`` for the policy-iteration command. Lists are
comma-separated. See the README for the full key reference.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, ...]
    activation: str = "relu"


@dataclass(frozen=True)
class DataConfig:
    synthetic: str | None = None  # "regression" | "classification" | None
    path: str | None = None
    target: str | None = None
    categoricals: tuple[str, ...] = ()
    n: int = 5000
    m: int = 8
    classes: int = 3
    noise_std: float = 0.1
    separation: float = 3.0
    seed: int = 0
    test_fraction: float = 0.1
    standardize: bool = True
    standardize_target: bool = False


@dataclass(frozen=True)
class OptimConfig:
    kind: str = "egn"  # egn | sgd | adam
    lr: float = 0.1
    lambda0: float = 1.0
    momentum: float = 0.0
    line_search: bool = False
    adaptive_lambda: bool = False
    cg_iters: int = 0  # > 0 switches the Gauss-Newton solve to truncated CG
    schedule: str = "constant"
    alpha0: float = 0.5
    a: float = 0.75


@dataclass(frozen=True)
class LqrConfig:
    eta: float = 1e-8
    max_policy_iters: int = 50
    mode: str = "egn"
    lr: float = 1.0
    lam: float = 1e-4
    batch_size: int = 128
    explore_std: float = 0.1
    horizon: int = 50
    eval_eta: float = 1e-10
    max_updates: int = 3000
    cg_iters: int = 0


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    data: DataConfig
    optim: OptimConfig
    lqr: LqrConfig
    batch_size: int = 128
    epochs: int | None = None
    max_steps: int | None = None
    max_seconds: float | None = None
    eval_every: int = 50
    seeds: tuple[int, ...] = (0,)
    run_id: str = "run"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("run.batch_size must be >= 1")
        if not self.seeds:
            raise ConfigError("run.seeds needs at least one seed")


def _int_list(raw: str):
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def _str_list(raw: str):
    return tuple(v.strip() for v in raw.split(",") if v.strip())


class _Section:
    """Typed lookups with config-file-relative error messages."""

    def __init__(self, parser, name):
        self.name = name
        self.data = dict(parser[name]) if parser.has_section(name) else {}
        self.seen = set()

    def _get(self, key, default):
        self.seen.add(key)
        return self.data.get(key, default)

    def str(self, key, default=None):
        v = self._get(key, default)
        return v if v is None else str(v)

    def int(self, key, default=None):
        v = self._get(key, default)
        try:
            return v if v is None else int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.name}.{key}: expected integer, got {v!r}") from None

    def float(self, key, default=None):
        v = self._get(key, default)
        try:
            return v if v is None else float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.name}.{key}: expected number, got {v!r}") from None

    def bool(self, key, default=False):
        v = self._get(key, default)
        if isinstance(v, bool):
            return v
        if str(v).lower() in ("1", "true", "yes", "on"):
            return True
        if str(v).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.name}.{key}: expected boolean, got {v!r}")

    def unknown_keys(self):
        return sorted(set(self.data) - self.seen)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None

    model = _Section(parser, "model")
    data = _Section(parser, "data")
    optim = _Section(parser, "optim")
    lqr = _Section(parser, "lqr")
    run = _Section(parser, "run")

    widths_raw = model.str("widths", "8, 32, 32, 1")
    model_cfg = ModelConfig(
        widths=_int_list(widths_raw),
        activation=model.str("activation", "relu"),
    )
    if model_cfg.activation not in ("relu", "identity"):
        raise ConfigError(f"model.activation: unknown activation {model_cfg.activation!r}")

    synthetic = data.str("synthetic")
    if synthetic is not None and synthetic not in ("regression", "classification"):
        raise ConfigError(f"data.synthetic: expected regression|classification, got {synthetic!r}")
    data_cfg = DataConfig(
        synthetic=synthetic,
        path=data.str("path"),
        target=data.str("target"),
        categoricals=_str_list(data.str("categoricals", "")),
        n=data.int("n", 5000),
        m=data.int("m", 8),
        classes=data.int("classes", 3),
        noise_std=data.float("noise_std", 0.1),
        separation=data.float("separation", 3.0),
        seed=data.int("seed", 0),
        test_fraction=data.float("test_fraction", 0.1),
        standardize=data.bool("standardize", True),
        standardize_target=data.bool("standardize_target", False),
    )
    if data_cfg.path is not None and data_cfg.target is None:
        raise ConfigError("data.target: required when loading a CSV")

    optim_cfg = OptimConfig(
        kind=optim.str("kind", "egn"),
        lr=optim.float("lr", 0.1),
        lambda0=optim.float("lambda0", 1.0),
        momentum=optim.float("momentum", 0.0),
        line_search=optim.bool("line_search", False),
        adaptive_lambda=optim.bool("adaptive_lambda", False),
        cg_iters=optim.int("cg_iters", 0),
        schedule=optim.str("schedule", "constant"),
        alpha0=optim.float("alpha0", 0.5),
        a=optim.float("a", 0.75),
    )
    if optim_cfg.kind not in ("egn", "sgd", "adam"):
        raise ConfigError(f"optim.kind: expected egn|sgd|adam, got {optim_cfg.kind!r}")
    if optim_cfg.schedule not in ("constant", "diminishing"):
        raise ConfigError(f"optim.schedule: expected constant|diminishing, got {optim_cfg.schedule!r}")

    lqr_cfg = LqrConfig(
        eta=lqr.float("eta", 1e-8),
        max_policy_iters=lqr.int("max_policy_iters", 50),
        mode=lqr.str("mode", "egn"),
        lr=lqr.float("lr", 1.0),
        lam=lqr.float("lambda", 1e-4),
        batch_size=lqr.int("batch_size", 128),
        explore_std=lqr.float("explore_std", 0.1),
        horizon=lqr.int("horizon", 50),
        eval_eta=lqr.float("eval_eta", 1e-10),
        max_updates=lqr.int("max_updates", 3000),
        cg_iters=lqr.int("cg_iters", 0),
    )

    run_cfg = RunConfig(
        model=model_cfg,
        data=data_cfg,
        optim=optim_cfg,
        lqr=lqr_cfg,
        batch_size=run.int("batch_size", 128),
        epochs=run.int("epochs"),
        max_steps=run.int("max_steps"),
        max_seconds=run.float("max_seconds"),
        eval_every=run.int("eval_every", 50),
        seeds=_int_list(run.str("seeds", "0")),
        run_id=run.str("run_id", path.stem),
    )

    for section in (model, data, optim, lqr, run):
        extra = section.unknown_keys()
        if extra:
            raise ConfigError(f"[{section.name}]: unknown keys {extra}")
    return run_cfg


def validate_for_training(cfg: RunConfig):
    """Checks the train command needs beyond bare parsing."""
    if cfg.data.synthetic is None and cfg.data.path is None:
        raise ConfigError("data: set either data.synthetic or data.path")
    if cfg.epochs is None and cfg.max_steps is None and cfg.max_seconds is None:
        raise ConfigError("run: needs a budget (epochs, max_steps or max_seconds)")
