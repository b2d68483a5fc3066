"""Core data structures shared by the sampler, imputation and baseline modules.

Pure containers plus validation. Algorithms live elsewhere:

- distributions.py: truncated-distribution sampling primitives
- sampler.py:       the MCMC engine
- imputation.py:    per-cell missing-value draws and summaries
- baselines.py:     comparator imputers
- simulation.py:    synthetic-data study harness
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAR = "MAR"
MNAR = "MNAR"


@dataclass(frozen=True)
class Dataset:
    """A non-negative data matrix with a missingness mask and detection limit.

    Attributes:
        values: (n, p) float64 matrix; entries at unobserved cells are NaN.
        mask: (n, p) bool matrix, True = observed.
        lod: detection limit, in the same units as ``values``; values below
            it are never observed.
        variable_names: p column labels.
    """

    values: np.ndarray
    mask: np.ndarray
    lod: float
    variable_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def missing_rows(self) -> np.ndarray:
        return np.nonzero(~self.mask)[0]

    @property
    def missing_cols(self) -> np.ndarray:
        return np.nonzero(~self.mask)[1]

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())


def validate_dataset(values, mask=None, lod: float | None = None,
                     variable_names=None) -> Dataset:
    """Validate raw inputs and construct a :class:`Dataset`.

    ``mask`` defaults to ``~isnan(values)``. When ``lod`` is not given it is
    set to the minimum observed value across the whole matrix, the most
    conservative observable proxy for a detection limit; an explicit value
    always wins.

    Raises:
        ValueError: on dimension mismatch, negative or non-finite observed
            entries, an entirely missing column, or a non-positive lod.
    """
    values = np.array(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"values must be 2-dimensional, got shape {values.shape}")
    if mask is None:
        mask = ~np.isnan(values)
    mask = np.asarray(mask).astype(bool)
    if mask.shape != values.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match values shape {values.shape}"
        )
    n, p = values.shape
    if n == 0 or p == 0:
        raise ValueError("empty matrix")

    observed = values[mask]
    if not np.all(np.isfinite(observed)):
        raise ValueError("observed entries must be finite")
    if observed.size and observed.min() < 0:
        raise ValueError("observed entries must be non-negative")

    col_missing = (~mask).sum(axis=0)
    if np.any(col_missing == n):
        bad = np.nonzero(col_missing == n)[0]
        raise ValueError(f"columns entirely missing: {bad.tolist()}")

    if lod is None:
        if observed.size == 0:
            raise ValueError("cannot infer lod from a fully missing matrix")
        lod = float(observed.min())
    lod = float(lod)
    if not np.isfinite(lod) or lod <= 0:
        raise ValueError(f"lod must be a positive finite number, got {lod}")

    if variable_names is None:
        variable_names = tuple(f"v{j}" for j in range(p))
    else:
        variable_names = tuple(str(v) for v in variable_names)
        if len(variable_names) != p:
            raise ValueError("variable_names length does not match column count")

    values = values.copy()
    values[~mask] = np.nan
    return Dataset(values=values, mask=mask, lod=lod, variable_names=variable_names)


def missingness_report(ds: Dataset) -> dict:
    """Summarise the missingness pattern of a dataset.

    Returns a dict with ``overall_rate``, ``per_variable_rates`` (length p)
    and ``n_complete_variables``.
    """
    miss = ~ds.mask
    per_var = miss.mean(axis=0)
    return {
        "overall_rate": float(miss.mean()),
        "per_variable_rates": per_var,
        "n_complete_variables": int((per_var == 0).sum()),
    }


@dataclass
class ModelState:
    """Current values of the factor-model parameters and imputed cells.

    ``y`` is the working complete matrix: observed entries verbatim, masked
    entries at their current imputed values. ``z`` holds the per-missing-cell
    designation indicator (1 = below detection limit, 0 = above), aligned
    with ``Dataset.missing_rows``/``missing_cols``.
    """

    mu: np.ndarray          # (p,)
    loadings: np.ndarray    # (p, k)
    sigma_inv: np.ndarray   # (p,) precisions
    eta: np.ndarray         # (n, k)
    alpha: float
    y: np.ndarray           # (n, p) complete working matrix
    z: np.ndarray           # (n_missing,) int8
    missing_rows: np.ndarray
    missing_cols: np.ndarray

    @property
    def imputed(self) -> np.ndarray:
        return self.y[self.missing_rows, self.missing_cols]

    @property
    def k_star(self) -> int:
        return self.loadings.shape[1]

    def check_invariants(self, lod: float) -> None:
        assert np.all(self.sigma_inv > 0), "non-positive precision"
        assert 0.0 < self.alpha < 1.0, f"alpha out of (0,1): {self.alpha}"
        imp = self.imputed
        assert np.all(imp >= 0), "negative imputed value"
        below = imp < lod
        assert np.array_equal(below, self.z == 1), "z inconsistent with imputed values"


@dataclass
class ShrinkageState:
    """Local and column-wise shrinkage parameters of the loadings prior.

    ``tau`` is always recomputed as the running product of ``delta`` so it
    cannot drift from its definition.
    """

    phi: np.ndarray    # (p, k) positive
    delta: np.ndarray  # (k,) with delta[h] >= 1 for h >= 1

    @property
    def tau(self) -> np.ndarray:
        return np.cumprod(self.delta)

    def check_invariants(self) -> None:
        assert np.all(self.phi > 0), "non-positive phi"
        assert self.delta.size == 0 or self.delta[0] > 0
        assert np.all(self.delta[1:] >= 1), "delta below 1 past the first entry"
        tau = self.tau
        assert np.all(np.diff(tau) >= 0) or np.all(self.delta[1:] >= 1)


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings. Scalar defaults follow the standard configuration."""

    a_sigma: float = 1.0
    b_sigma: float = 0.25
    kappa1: float = 3.0
    kappa2: float = 2.0
    a1: float = 2.1
    a2: float = 3.1
    k_star: int = 5
    mu_prior_mean: Optional[np.ndarray] = None       # (p,), data-driven if None
    mu_prior_precision: Optional[np.ndarray] = None  # (p,), data-driven if None

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "kappa1", "kappa2", "a1", "a2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.k_star < 0:
            raise ValueError(f"k_star must be >= 0, got {self.k_star}")
        if not (self.a2 > self.a1 > 1):
            warnings.warn(
                f"a1={self.a1}, a2={self.a2} outside the recommended a2 > a1 > 1 "
                "regime; shrinkage of high-index loading columns is not guaranteed",
                UserWarning,
                stacklevel=2,
            )
        for name in ("mu_prior_mean", "mu_prior_precision"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=np.float64))
        if self.mu_prior_precision is not None and np.any(self.mu_prior_precision <= 0):
            raise ValueError("mu_prior_precision entries must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, retention and execution settings."""

    n_iters: int = 10000
    burn_in: int = 5000
    thin: int = 5
    seed: int = 0
    mu_update_mode: str = "block"      # "block" or "coordinate"
    parallel_variables: bool = True    # batched block updates vs reference loop

    def __post_init__(self):
        if self.n_iters <= 0 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iters > 0, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.n_iters:
            raise ValueError(
                f"burn_in ({self.burn_in}) must be < n_iters ({self.n_iters})"
            )
        if self.mu_update_mode not in ("block", "coordinate"):
            raise ValueError(f"unknown mu_update_mode {self.mu_update_mode!r}")

    @property
    def n_retained(self) -> int:
        return (self.n_iters - self.burn_in) // self.thin


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws plus acceptance tallies.

    Per-missing-cell records (``z_draws``, ``y_draws``) are aligned with
    ``missing_rows``/``missing_cols``. ``acceptance`` maps block name to
    (accepted, proposed) counts over the whole run.
    """

    mu_draws: np.ndarray         # (T, p)
    loadings_draws: np.ndarray   # (T, p, k)
    sigma_inv_draws: np.ndarray  # (T, p)
    alpha_draws: np.ndarray      # (T,)
    z_draws: np.ndarray          # (T, n_missing) int8
    y_draws: np.ndarray          # (T, n_missing)
    missing_rows: np.ndarray
    missing_cols: np.ndarray
    acceptance: dict[str, tuple[int, int]]
    config: SamplerConfig = None
    backend: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def n_retained(self) -> int:
        return self.mu_draws.shape[0]

    def acceptance_rates(self) -> dict[str, float]:
        return {
            k: (acc / prop if prop else float("nan"))
            for k, (acc, prop) in self.acceptance.items()
        }
