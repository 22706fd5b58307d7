"""Dataset generation, CSV ingestion, standardization and splitting.

Hold-out rule: test size is max(1000, ceil(0.2 * N)) capped at N - 1,
except where a registry entry pins an explicit test size (two of the
benchmark tables use round numbers that the general rule cannot produce).
Standardization always uses training statistics only.
"""

from __future__ import annotations

import csv as _csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CsvParseError, EmptyAfterCleaningError
from .kernels import KernelParams, as_inputs, kernel_matrix
from .linalg import chol_psd

__all__ = [
    "Dataset",
    "DatasetSpec",
    "REGISTRY",
    "default_test_size",
    "generate_synthetic",
    "load_csv",
    "draw_aux_subset",
    "aux_subset_size",
    "standardized_kernel_params",
    "SYNTHETIC_GEN_PARAMS",
]


@dataclass(frozen=True)
class RegistryEntry:
    """Expected shape and auxiliary-subset size for a benchmark dataset."""

    n_train: int
    n_test: int
    dim: int
    aux_size: int


# Benchmark registry: name -> (N_train, N_test, d, K).
REGISTRY: dict[str, RegistryEntry] = {
    "synthetic": RegistryEntry(1000, 1000, 1, 100),
    "delays10k": RegistryEntry(8000, 2000, 8, 800),
    "abalone": RegistryEntry(3177, 1000, 8, 300),
    "airfoil": RegistryEntry(1103, 400, 5, 100),
    "ccpp": RegistryEntry(7568, 2000, 4, 700),
    "wine": RegistryEntry(3898, 1000, 11, 300),
}

# Generative parameters for the synthetic benchmark (prior draw on U[-3,3]).
SYNTHETIC_GEN_PARAMS = KernelParams(np.array([0.5]), 1.0, 0.05)


@dataclass(frozen=True)
class Standardization:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float


@dataclass(frozen=True)
class Dataset:
    name: str
    seed: int
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    standardization: Standardization

    @property
    def n_train(self) -> int:
        return self.X_train.shape[0]

    @property
    def n_test(self) -> int:
        return self.X_test.shape[0]

    @property
    def dim(self) -> int:
        return self.X_train.shape[1]

    def unstandardize_y(self, y: np.ndarray) -> np.ndarray:
        s = self.standardization
        return np.asarray(y) * s.y_scale + s.y_mean


@dataclass(frozen=True)
class DatasetSpec:
    """Declarative description of a data source.

    source: "synthetic" or a CSV path. For CSV sources, ``target`` names
    the target column and ``features`` lists feature columns (None = all
    remaining numeric columns). ``n_test`` overrides the hold-out rule.
    """

    name: str
    source: str = "synthetic"
    target: str | int | None = None
    features: tuple | None = None
    n_total: int = 2000
    n_test: int | None = None

    def registry_entry(self) -> RegistryEntry | None:
        return REGISTRY.get(self.name)


def default_test_size(n_total: int) -> int:
    """max(1000, ceil(0.2 N)), capped so at least one train row remains."""
    return min(max(1000, math.ceil(0.2 * n_total)), n_total - 1)


def _split_and_standardize(name, seed, X, y, n_test, shuffle=True) -> Dataset:
    n = X.shape[0]
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    test_idx = order[:n_test]
    train_idx = order[n_test:]
    X_train, y_train = X[train_idx], y[train_idx]
    X_test, y_test = X[test_idx], y[test_idx]

    x_mean = X_train.mean(axis=0)
    x_scale = X_train.std(axis=0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y_mean = float(y_train.mean())
    y_scale = float(y_train.std())
    if y_scale <= 0:
        y_scale = 1.0
    std = Standardization(x_mean, x_scale, y_mean, y_scale)
    return Dataset(
        name=name, seed=seed,
        X_train=(X_train - x_mean) / x_scale,
        y_train=(y_train - y_mean) / y_scale,
        X_test=(X_test - x_mean) / x_scale,
        y_test=(y_test - y_mean) / y_scale,
        standardization=std,
    )


def generate_synthetic(n_total: int, seed: int,
                       gen_params: KernelParams = SYNTHETIC_GEN_PARAMS,
                       dim: int = 1, low: float = -3.0, high: float = 3.0) -> Dataset:
    """Sample a dataset from the generative GP prior.

    Inputs are uniform on [low, high]^dim; the latent function is a prior
    draw via a jittered Cholesky of the full kernel matrix; observations
    add N(0, sigma^2) noise. Split and standardization follow the shared
    protocol.
    """
    if n_total < 2:
        raise ValueError("n_total must be at least 2")
    rng = np.random.default_rng(seed)
    X = rng.uniform(low, high, size=(n_total, dim))
    factor = chol_psd(kernel_matrix(X, None, gen_params))
    f = factor.lower @ rng.standard_normal(n_total)
    y = f + np.sqrt(gen_params.noise_variance) * rng.standard_normal(n_total)
    n_test = default_test_size(n_total)
    return _split_and_standardize("synthetic", seed, X, y, n_test, shuffle=False)


def standardized_kernel_params(gen_params: KernelParams, dataset: Dataset) -> KernelParams:
    """Map generative-scale hyperparameters into standardized coordinates."""
    s = dataset.standardization
    return KernelParams(
        gen_params.lengthscales / s.x_scale,
        gen_params.signal_variance / s.y_scale**2,
        gen_params.noise_variance / s.y_scale**2,
    )


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text == "" or text.lower() in ("na", "nan", "null", "?"):
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(
            f"row {row}: column {column!r} value {raw!r} is not numeric",
            row=row, column=column,
        ) from None


def load_csv(spec: DatasetSpec, seed: int) -> Dataset:
    """Load, clean, shuffle, split and standardize a CSV dataset.

    Header row required; rows with missing values are dropped (counted in
    a warning). Registry entries are validated against expected shapes
    with a warning, not an error, on mismatch.
    """
    path = spec.source
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterCleaningError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        raw_rows = [row for row in reader if row and any(c.strip() for c in row)]

    if spec.target is None:
        target_name = header[-1]
    elif isinstance(spec.target, int):
        target_name = header[spec.target]
    else:
        target_name = spec.target
    if target_name not in header:
        raise CsvParseError(f"target column {target_name!r} not found in header",
                            column=target_name)
    if spec.features is None:
        feature_names = [h for h in header if h != target_name]
    else:
        feature_names = [header[f] if isinstance(f, int) else f for f in spec.features]
        missing = [f for f in feature_names if f not in header]
        if missing:
            raise CsvParseError(f"feature columns not found: {missing}")
        if target_name in feature_names:
            raise CsvParseError("feature columns must exclude the target",
                                column=target_name)
    col_index = {h: i for i, h in enumerate(header)}

    rows, dropped = [], 0
    for r, row in enumerate(raw_rows, start=2):   # header is line 1
        vals = [_parse_cell(row[col_index[c]], r, c) for c in feature_names]
        tval = _parse_cell(row[col_index[target_name]], r, target_name)
        if any(math.isnan(v) for v in vals) or math.isnan(tval):
            dropped += 1
            continue
        rows.append(vals + [tval])
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing values", stacklevel=2)
    if not rows:
        raise EmptyAfterCleaningError(f"{path}: no usable rows after cleaning")

    data = np.asarray(rows, dtype=float)
    X, y = data[:, :-1], data[:, -1]
    n = X.shape[0]
    entry = spec.registry_entry()
    if spec.n_test is not None:
        n_test = spec.n_test
    elif entry is not None:
        n_test = entry.n_test
    else:
        n_test = default_test_size(n)
    n_test = min(n_test, n - 1)
    ds = _split_and_standardize(spec.name, seed, X, y, n_test)
    if entry is not None:
        got = (ds.n_train, ds.n_test, ds.dim)
        expected = (entry.n_train, entry.n_test, entry.dim)
        if got != expected:
            warnings.warn(
                f"{spec.name}: loaded shape {got} differs from registry {expected}",
                stacklevel=2,
            )
    return ds


def aux_subset_size(dataset: Dataset, fraction: float) -> int:
    """Auxiliary subset size: registry K when present, else ceil(fraction * N)."""
    if not (0 < fraction <= 1):
        raise ValueError("fraction must be in (0, 1]")
    entry = REGISTRY.get(dataset.name)
    if entry is not None and dataset.n_train == entry.n_train:
        return entry.aux_size
    return math.ceil(fraction * dataset.n_train)


def draw_aux_subset(dataset: Dataset, fraction: float, seed: int,
                    size: int | None = None) -> np.ndarray:
    """Distinct uniformly-drawn train indices, deterministic per seed.

    ``size`` overrides the ceil(fraction * N_train) default; the experiment
    runner passes the registry K through here.
    """
    if size is None:
        if not (0 < fraction <= 1):
            raise ValueError("fraction must be in (0, 1]")
        size = math.ceil(fraction * dataset.n_train)
    if not (1 <= size <= dataset.n_train):
        raise ValueError(f"subset size {size} out of range")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(dataset.n_train, size=size, replace=False))
