"""Exact Gaussian-process regression, one scalar GP per state channel.

All channels share one input set; each carries its own targets and weight
vector. Inference is the standard zero-mean exact form

    mean(x) = kbar(x)^T (K + sigma_F^2 I)^{-1} y
    var(x)  = k(x, x) - kbar(x)^T (K + sigma_F^2 I)^{-1} kbar(x)

computed through a Cholesky factorization of the (jittered) Gram matrix.
Models are immutable once fit; data changes mean a refit from scratch.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import IllConditionedDataError, ParameterError
from .system import SystemModel

KERNEL_FAMILIES = ("exponential", "squared-exponential")

# Diagonal jitter ladder applied when sigma_F = 0 (or the factorization
# struggles): start at 1e-10, escalate tenfold, give up past 1e-6.
JITTER_START = 1e-10
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    """Stationary kernel choice.

    family "exponential" is k(x, x') = exp(-l * ||x - x'||); family
    "squared-exponential" is k(x, x') = exp(-||x - x'||^2 / (2 l^2)). Both
    satisfy k(x, x) = 1. Note the length scale multiplies the distance in the
    exponential family (an inverse length) but divides in the
    squared-exponential family, matching the forms as usually written.
    """

    family: str = "exponential"
    length_scale: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ParameterError(
                f"kernel family must be one of {KERNEL_FAMILIES}, got {self.family!r}"
            )
        if not (np.isfinite(self.length_scale) and self.length_scale > 0.0):
            raise ParameterError(f"length_scale must be positive, got {self.length_scale}")


def _kernel_of_dist(cfg: KernelConfig, r):
    if cfg.family == "exponential":
        return np.exp(-cfg.length_scale * r)
    return np.exp(-(r * r) / (2.0 * cfg.length_scale**2))


def kernel_eval(cfg: KernelConfig, x, x2) -> float:
    """Kernel value for a single pair of states (Euclidean distance based)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    return float(_kernel_of_dist(cfg, np.linalg.norm(x - x2)))


@dataclass(frozen=True)
class GPDataset:
    """Training inputs (N x dim), one channel's targets (N,), and provenance.

    When sigma_F = 0 the inputs must be pairwise distinct, otherwise the Gram
    matrix is singular by construction.
    """

    inputs: np.ndarray
    targets: np.ndarray
    noise_std: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.asarray(self.targets, dtype=float).ravel()
        if inputs.shape[0] != targets.shape[0] or inputs.shape[0] < 1:
            raise ParameterError(
                f"need N >= 1 matching rows, got inputs {inputs.shape} targets {targets.shape}"
            )
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ParameterError("dataset entries must be finite")
        if not self.noise_std >= 0.0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class ErrorBoundConfig:
    """Scale chi of the pointwise error bound chi * posterior_std.

    ``confidence_note`` is free-form documentation of the probability level
    the user associates with their chi; it enters no computation.
    """

    chi: float = 2.0
    confidence_note: str = ""

    def __post_init__(self):
        if not self.chi > 0.0:
            raise ParameterError(f"chi must be positive, got {self.chi}")


@dataclass(frozen=True)
class GPModel:
    """A fitted channel: Cholesky factor of (K + sigma_F^2 I + jitter I), weights."""

    dataset: GPDataset
    kernel: KernelConfig
    chol_lower: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    jitter: float = 0.0


def _closest_pair(inputs: np.ndarray):
    d = squareform(pdist(inputs))
    np.fill_diagonal(d, np.inf)
    j, k = np.unravel_index(np.argmin(d), d.shape)
    return (int(j), int(k)), float(d[j, k])


def gp_fit(dataset: GPDataset, cfg: KernelConfig) -> GPModel:
    """Factorize the Gram matrix and solve for the prediction weights.

    Parameters
    ----------
    dataset : GPDataset
        Shared inputs and one channel's targets.
    cfg : KernelConfig
        Kernel family and length scale.

    Returns
    -------
    GPModel
        Immutable fitted model.

    Raises
    ------
    IllConditionedDataError
        If the factorization fails after jitter escalation, or the dataset
        contains duplicate inputs with sigma_F = 0. The closest input pair is
        reported in both cases.
    """
    x = dataset.inputs
    n = dataset.n_samples
    if dataset.noise_std == 0.0 and n > 1:
        pair, dmin = _closest_pair(x)
        if dmin == 0.0:
            raise IllConditionedDataError(
                f"inputs {pair[0]} and {pair[1]} are identical with sigma_F = 0; "
                "the Gram matrix is singular",
                pair=pair,
            )
    # pdist evaluates each unordered pair once, so K is symmetric by construction.
    gram = _kernel_of_dist(cfg, squareform(pdist(x))) if n > 1 else np.ones((1, 1))
    diag = dataset.noise_std**2
    jitter = JITTER_START if dataset.noise_std == 0.0 else 0.0
    while True:
        try:
            chol_lower = cholesky(
                gram + (diag + jitter) * np.eye(n), lower=True, check_finite=False
            )
            break
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX:
            pair, dmin = _closest_pair(x) if n > 1 else ((0, 0), 0.0)
            raise IllConditionedDataError(
                f"Gram matrix not positive definite after jitter up to {JITTER_MAX:g}; "
                f"closest input pair {pair[0]}, {pair[1]} at distance {dmin:.3g}",
                pair=pair,
            )
    weights = cho_solve((chol_lower, True), dataset.targets, check_finite=False)
    return GPModel(
        dataset=dataset, kernel=cfg, chol_lower=chol_lower, weights=weights, jitter=jitter
    )


def _cross_kernel(model: GPModel, x) -> np.ndarray:
    """kbar(x): kernel between the query and every training input, shape (N,)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    r = cdist(model.dataset.inputs, x).ravel()
    return _kernel_of_dist(model.kernel, r)


def gp_mean(model: GPModel, x) -> float:
    """Posterior mean kbar(x)^T weights at one query state."""
    return float(_cross_kernel(model, x) @ model.weights)


def _coincides(model: GPModel, states: np.ndarray) -> np.ndarray:
    """Boolean mask of query rows that exactly equal a training input."""
    return (states[:, None, :] == model.dataset.inputs[None, :, :]).all(axis=2).any(axis=1)


def gp_variance(model: GPModel, x) -> float:
    """Posterior variance at one query state, floored at 0 against round-off.

    Noise-free regression interpolates exactly, so its variance at a stored
    training input is identically zero; without the short-circuit the
    factorization jitter would leak back in at exactly that scale.
    """
    xq = np.atleast_1d(np.asarray(x, dtype=float))
    if model.dataset.noise_std == 0.0 and _coincides(model, xq[None, :])[0]:
        return 0.0
    kbar = _cross_kernel(model, xq)
    v = solve_triangular(model.chol_lower, kbar, lower=True, check_finite=False)
    return max(0.0, 1.0 - float(v @ v))


def gp_error_bound(model: GPModel, x, cfg: ErrorBoundConfig) -> float:
    """chi * posterior standard deviation at one query state."""
    return cfg.chi * np.sqrt(gp_variance(model, x))


def variance_many(model: GPModel, states: np.ndarray) -> np.ndarray:
    """Posterior variance at each row of ``states`` (vectorized gp_variance)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    kbar = _kernel_of_dist(model.kernel, cdist(model.dataset.inputs, states))
    v = solve_triangular(model.chol_lower, kbar, lower=True, check_finite=False)
    out = np.maximum(0.0, 1.0 - np.einsum("ij,ij->j", v, v))
    if model.dataset.noise_std == 0.0:
        out[_coincides(model, states)] = 0.0
    return out


def estimate_drift(models: Sequence[GPModel], x) -> np.ndarray:
    """Stack the per-channel posterior means into a drift estimate vector."""
    if len(models) < 1:
        raise ParameterError("need at least one channel model")
    kbar = _cross_kernel(models[0], x)
    out = np.empty(len(models))
    for i, m in enumerate(models):
        if m.dataset.inputs is not models[0].dataset.inputs and not np.array_equal(
            m.dataset.inputs, models[0].dataset.inputs
        ):
            kbar_i = _cross_kernel(m, x)
        else:
            kbar_i = kbar
        out[i] = kbar_i @ m.weights
    return out


class DriftEstimator:
    """Shared-input fast path for per-step drift estimates inside a simulation.

    Stacks every channel's weights against the common training inputs so one
    kernel evaluation per step serves all channels.
    """

    def __init__(self, models: Sequence[GPModel]):
        if len(models) < 1:
            raise ParameterError("need at least one channel model")
        base = models[0].dataset.inputs
        for m in models[1:]:
            if m.dataset.inputs is not base and not np.array_equal(m.dataset.inputs, base):
                raise ParameterError("DriftEstimator requires channels sharing one input set")
            if m.kernel != models[0].kernel:
                raise ParameterError("DriftEstimator requires a common kernel config")
        self.models = list(models)
        self.inputs = base
        self.kernel = models[0].kernel
        self.weight_matrix = np.stack([m.weights for m in models])  # (n, N)

    def __call__(self, x) -> np.ndarray:
        diff = self.inputs - x
        r = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return self.weight_matrix @ _kernel_of_dist(self.kernel, r)


def generate_training_data(
    model: SystemModel,
    n_samples: int,
    region,
    sigma_f: float = 0.0,
    seed: int = 0,
) -> list[GPDataset]:
    """Sample seeded-uniform inputs in a box and record noisy drift targets.

    ``region`` is a per-dimension sequence of (low, high) pairs. Targets are
    y_i = f_i(x) + w with w ~ Normal(0, sigma_f^2), drawn from a generator
    seeded with ``seed`` so repeat calls are byte-identical.
    """
    region = np.asarray(region, dtype=float)
    if region.shape != (model.n, 2) or np.any(region[:, 1] <= region[:, 0]):
        raise ParameterError(
            f"region must be {model.n} non-degenerate (low, high) pairs, got {region!r}"
        )
    if n_samples < 1:
        raise ParameterError(f"need n_samples >= 1, got {n_samples}")
    if sigma_f < 0.0:
        raise ParameterError(f"sigma_f must be >= 0, got {sigma_f}")
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(region[:, 0], region[:, 1], size=(n_samples, model.n))
    noise = rng.normal(0.0, sigma_f, size=(n_samples, model.n)) if sigma_f > 0.0 else None
    drifts = np.stack([model.drift(row) for row in inputs])
    targets = drifts if noise is None else drifts + noise
    return [
        GPDataset(inputs=inputs, targets=targets[:, i], noise_std=sigma_f, seed=seed)
        for i in range(model.n)
    ]


# --- persistence --------------------------------------------------------------


def save_datasets(datasets: Sequence[GPDataset], csv_path, metadata: Optional[dict] = None):
    """Write shared-input channel datasets as one CSV plus a JSON sidecar.

    The CSV has header x1..xn,y1..yn with one row per sample, 17 significant
    digits. The sidecar (same path with a .meta.json suffix appended) records
    seed, sigma_F, and whatever extra metadata the caller supplies.
    """
    csv_path = Path(csv_path)
    inputs = datasets[0].inputs
    dim = inputs.shape[1]
    n_channels = len(datasets)
    for ds in datasets[1:]:
        if not np.array_equal(ds.inputs, inputs):
            raise ParameterError("save_datasets requires channels sharing one input set")
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{i + 1}" for i in range(dim)] + [f"y{i + 1}" for i in range(n_channels)]
        )
        for row in range(inputs.shape[0]):
            values = list(inputs[row]) + [ds.targets[row] for ds in datasets]
            writer.writerow([f"{v:.17g}" for v in values])
    meta = {
        "n_samples": int(inputs.shape[0]),
        "dim": int(dim),
        "n_channels": int(n_channels),
        "sigma_f": float(datasets[0].noise_std),
        "seed": datasets[0].seed,
    }
    if metadata:
        meta.update(metadata)
    sidecar = csv_path.with_name(csv_path.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_datasets(csv_path) -> tuple[list[GPDataset], dict]:
    """Read back datasets written by save_datasets, with their metadata."""
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    dim = sum(1 for name in header if name.startswith("x"))
    n_channels = len(header) - dim
    if n_channels < 1 or dim < 1:
        raise ParameterError(f"unrecognized dataset header: {header}")
    data = np.asarray(rows, dtype=float)
    sidecar = csv_path.with_name(csv_path.name + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    sigma_f = float(meta.get("sigma_f", 0.0))
    seed = meta.get("seed")
    datasets = [
        GPDataset(
            inputs=data[:, :dim], targets=data[:, dim + i], noise_std=sigma_f, seed=seed
        )
        for i in range(n_channels)
    ]
    return datasets, meta
