"""Dataset ingestion, preprocessing, and synthetic problem generators.

CSV files are UTF-8 with a header row, comma separators, '.' decimal
points and unquoted numerics. Categorical columns are one-hot expanded
in first-seen order (full encoding, no reference category dropped);
standardization always fits on the training split only and uses the
population (1/N) standard deviation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, m)
    targets: np.ndarray  # (N, c); one-hot rows for classification
    task: str  # "regression" | "classification"
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        f, t = self.features, self.targets
        if f.ndim != 2 or t.ndim != 2 or f.shape[0] != t.shape[0]:
            raise ValueError(f"bad dataset shapes: {f.shape}, {t.shape}")
        if f.shape[0] < 1:
            raise ValueError("need at least one row")
        if len(self.feature_names) != f.shape[1]:
            raise ValueError("one name per feature column required")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite values in dataset")
        if self.task == "classification":
            ok = np.all((t == 0.0) | (t == 1.0)) and np.all(t.sum(axis=1) == 1.0)
            if not ok:
                raise ValueError("classification targets must be one-hot")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float
    seed: int

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray  # population std, zeros replaced by 1 after masking
    constant: np.ndarray  # boolean mask of (near-)constant features
    target_mean: float | None = None
    target_std: float | None = None


def load_csv(path, target_column: str, categorical_columns=()) -> Dataset:
    """Load a CSV into a Dataset.

    Numeric cells parse as 64-bit floats; every value of a categorical
    column becomes its own 0/1 feature (first-seen order). A categorical
    target yields one-hot classification targets, a numeric target a
    regression column. Unparseable or non-finite cells abort the load
    with their row numbers and column names.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    if target_column not in header:
        raise ValueError(f"{path}: target column {target_column!r} not in header {header}")
    categorical = set(categorical_columns)
    missing = categorical - set(header)
    if missing:
        raise ValueError(f"{path}: categorical columns {sorted(missing)} not in header")

    col_of = {name: i for i, name in enumerate(header)}
    bad: list[str] = []
    numeric_cols = [h for h in header if h not in categorical]
    values: dict[str, list] = {h: [] for h in header}
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            bad.append(f"row {r}: expected {len(header)} cells, got {len(row)}")
            continue
        for name in header:
            cell = row[col_of[name]]
            if name in categorical:
                values[name].append(cell)
                continue
            try:
                x = float(cell)
            except ValueError:
                bad.append(f"row {r}, column {name!r}: unparseable cell {cell!r}")
                continue
            if not np.isfinite(x):
                bad.append(f"row {r}, column {name!r}: non-finite cell {cell!r}")
                continue
            values[name].append(x)
    if bad:
        shown = "; ".join(bad[:10])
        more = f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""
        raise ValueError(f"{path}: rejected cells: {shown}{more}")

    def one_hot(name):
        levels: list[str] = []
        for v in values[name]:
            if v not in levels:
                levels.append(v)
        mat = np.zeros((len(rows), len(levels)))
        for i, v in enumerate(values[name]):
            mat[i, levels.index(v)] = 1.0
        return mat, [f"{name}={lvl}" for lvl in levels]

    feature_blocks, names = [], []
    for name in header:
        if name == target_column:
            continue
        if name in categorical:
            block, blk_names = one_hot(name)
        else:
            block, blk_names = np.array(values[name])[:, None], [name]
        feature_blocks.append(block)
        names.extend(blk_names)
    if not feature_blocks:
        raise ValueError(f"{path}: no feature columns besides the target")
    X = np.hstack(feature_blocks)

    if target_column in categorical:
        T, _ = one_hot(target_column)
        if T.shape[1] < 2:
            raise ValueError(f"{path}: classification target has a single level")
        task = "classification"
    else:
        T = np.array(values[target_column])[:, None]
        task = "regression"
    return Dataset(features=X, targets=T, task=task, feature_names=tuple(names))


def save_csv(ds: Dataset, path, target_name: str = "y"):
    """Write a dataset back out; floats use shortest round-trip formatting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [target_name])
        for i in range(ds.n_rows):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.task == "classification":
                row.append(f"c{int(np.argmax(ds.targets[i]))}")
            else:
                row.append(repr(float(ds.targets[i, 0])))
            writer.writerow(row)


def standardize(train: Dataset, test: Dataset, targets: bool = False):
    """Z-score features (and optionally regression targets) with train stats.

    Features whose train-split population std is below 1e-12 map to zero.
    Returns (train, test, stats).
    """
    if train.feature_names != test.feature_names or train.task != test.task:
        raise ValueError("train/test schemas differ")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)  # population (1/N) convention
    constant = std < 1e-12
    safe = np.where(constant, 1.0, std)

    def tx(X):
        Z = (X - mean) / safe
        Z[:, constant] = 0.0
        return Z

    t_mean = t_std = None
    tr_targets, te_targets = train.targets, test.targets
    if targets:
        if train.task != "regression":
            raise ValueError("target standardization applies to regression only")
        t_mean = float(train.targets.mean())
        t_std = float(train.targets.std())
        scale = t_std if t_std > 1e-12 else 1.0
        tr_targets = (train.targets - t_mean) / scale
        te_targets = (test.targets - t_mean) / scale

    stats = StandardizeStats(mean=mean, std=safe, constant=constant,
                             target_mean=t_mean, target_std=t_std)
    new_train = Dataset(tx(train.features), tr_targets, train.task, train.feature_names)
    new_test = Dataset(tx(test.features), te_targets, test.task, test.feature_names)
    return new_train, new_test, stats


def split(ds: Dataset, spec: SplitSpec):
    """Seeded shuffle then partition; train gets ceil(N * (1 - f)) rows."""
    n = ds.n_rows
    if n < 2:
        raise ValueError("need at least two rows to split")
    n_train = int(np.ceil(n * (1.0 - spec.test_fraction)))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(spec.seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    make = lambda idx: Dataset(ds.features[idx], ds.targets[idx], ds.task, ds.feature_names)
    return make(tr), make(te)


def _teacher_outputs(rng, X, hidden: int = 8):
    """Hidden two-layer ReLU teacher, outputs standardized to unit scale.

    Eight hidden units keep the target statistically learnable from a few
    thousand samples, so a converged student's RMSE approaches the noise
    level rather than an estimation-error floor.
    """
    m = X.shape[1]
    W1 = rng.standard_normal((hidden, m)) / np.sqrt(m)
    b1 = rng.standard_normal(hidden) * 0.1
    W2 = rng.standard_normal(hidden) / np.sqrt(hidden)
    h = np.maximum(X @ W1.T + b1, 0.0)
    f = h @ W2
    return (f - f.mean()) / f.std()


def synth_regression(N: int, m: int, noise_std: float, seed: int, return_clean: bool = False):
    """Regression targets from a random ReLU teacher plus Gaussian noise.

    The clean teacher output is standardized over the drawn sample, so the
    best achievable RMSE of any predictor is about ``noise_std``.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, m))
    clean = _teacher_outputs(rng, X)
    y = clean + noise_std * rng.standard_normal(N)
    ds = Dataset(
        features=X,
        targets=y[:, None],
        task="regression",
        feature_names=tuple(f"x{i}" for i in range(m)),
    )
    return (ds, clean) if return_clean else ds


def synth_classification(N: int, m: int, c: int, seed: int, separation: float = 3.0):
    """Gaussian class clusters around centroids ``separation`` apart."""
    if c < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((c, m))
    centroids *= separation / np.linalg.norm(centroids, axis=1, keepdims=True)
    labels = rng.integers(0, c, size=N)
    X = centroids[labels] + rng.standard_normal((N, m))
    T = np.zeros((N, c))
    T[np.arange(N), labels] = 1.0
    return Dataset(
        features=X,
        targets=T,
        task="classification",
        feature_names=tuple(f"x{i}" for i in range(m)),
    )
