"""Comparator imputers: fixed-value, iterative SVD, and the untruncated
infinite factor model run on the original or log scale.

The untruncated samplers are plain Gibbs: every draw comes straight from
the full conditionals that the exchange sampler uses as proposals, with no
truncation of the data model. Their missing-cell step uses the plain-normal
below/above masses, so imputed values may be negative on the original
scale; the log-scale variant exponentiates its summaries and is always
positive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ._backend import get_kernels
from .imputation import (
    ImputationSummary,
    MissingCellDraws,
    summarize_missing_entry,
)
from .types import Dataset, Hyperparameters, SamplerConfig
from . import sampler as _samp

FIXED_MODES = ("mean", "half_min")


@dataclass
class BaselineResult:
    """Output of one comparator method."""

    method: str
    imputed: np.ndarray  # (n, p) complete matrix
    draws: list[MissingCellDraws] | None = None
    summaries: list[ImputationSummary] | None = None
    info: dict = field(default_factory=dict)


def _column_observed(ds: Dataset, j: int) -> np.ndarray:
    return ds.values[ds.mask[:, j], j]


def impute_fixed(ds: Dataset, mode: str) -> BaselineResult:
    """Fill every missing cell of a column with one fixed value: the
    column's observed mean, or half its observed minimum."""
    if mode not in FIXED_MODES:
        raise ValueError(f"mode must be one of {FIXED_MODES}, got {mode!r}")
    out = ds.values.copy()
    for j in range(ds.p):
        col_missing = ~ds.mask[:, j]
        if not col_missing.any():
            continue
        obs = _column_observed(ds, j)
        fill = obs.mean() if mode == "mean" else 0.5 * obs.min()
        out[col_missing, j] = fill
    return BaselineResult(method=mode, imputed=out)


def _svd_complete(values, mask, rank, max_iters=200, tol=1e-7):
    """Iterative hard-rank completion on raw arrays.

    Missing cells start at column means, then alternate a truncated SVD
    reconstruction with overwriting only the missing cells until the
    relative change in those cells drops below ``tol``.
    """
    miss = ~mask
    obs_count = np.maximum(mask.sum(axis=0), 1)
    col_means = np.where(mask, values, 0.0).sum(axis=0) / obs_count
    x = np.where(mask, values, col_means[None, :])
    if not miss.any():
        return x, {"n_iters": 0, "converged": True}
    info = {"converged": False, "n_iters": max_iters}
    for it in range(1, max_iters + 1):
        u, s, vt = np.linalg.svd(x, full_matrices=False)
        recon = (u[:, :rank] * s[:rank]) @ vt[:rank]
        new_vals = recon[miss]
        old_vals = x[miss]
        denom = max(float(np.linalg.norm(old_vals)), 1e-12)
        rel_change = float(np.linalg.norm(new_vals - old_vals)) / denom
        x[miss] = new_vals
        if rel_change < tol:
            info = {"converged": True, "n_iters": it}
            break
    if not info["converged"]:
        warnings.warn(
            f"SVD completion did not converge in {max_iters} iterations; "
            "returning the last iterate",
            UserWarning,
            stacklevel=2,
        )
    return x, info


def impute_svd(ds: Dataset, rank: int, max_iters: int = 200,
               tol: float = 1e-7) -> BaselineResult:
    """Iterative rank-``rank`` SVD completion.

    Observed cells are never altered; reconstructed values are used as-is,
    so negative imputations are possible.
    """
    if not 1 <= rank <= min(ds.n, ds.p):
        raise ValueError(f"rank must be in [1, {min(ds.n, ds.p)}], got {rank}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x, info = _svd_complete(ds.values, ds.mask, rank, max_iters, tol)
    return BaselineResult(method="svd", imputed=x, info=info)


def run_ifa_chain(ds: Dataset, hyper: Hyperparameters, config: SamplerConfig,
                  log_transform: bool = False, *, backend=None,
                  sigma2_init=None) -> BaselineResult:
    """Gibbs sampler on the untruncated factor model, optionally on the
    natural-log scale.

    Parameter draws come directly from the full conditionals. A missing
    cell's designation uses the plain-normal mass below the detection
    limit, and its value is drawn on the z-determined side of the limit
    with no lower bound at zero. Log-scale runs transform the data and the
    limit first and exponentiate the summary endpoints afterwards.
    """
    from .distributions import RngStream

    K, backend_name = get_kernels(backend)
    work = ds.values.copy()
    lod = ds.lod
    if log_transform:
        obs = ds.values[ds.mask]
        if np.any(obs <= 0):
            raise ValueError("log transform requires all observed values > 0")
        work[ds.mask] = np.log(obs)
        lod = float(np.log(ds.lod))

    rng = RngStream(config.seed).generator
    n, p = work.shape
    k = hyper.k_star
    miss = ~ds.mask
    rows, cols = np.nonzero(miss)
    m_cells = rows.shape[0]

    y0 = _ifa_initial_completion(work, ds.mask, k)
    state, shrink, hyper = _initialize_on_arrays(
        work, ds.mask, y0, hyper, rng, K, sigma2_init
    )
    n_obs_above = int((work[ds.mask] > lod).sum())

    t_total = config.n_retained
    z_draws = np.empty((t_total, m_cells), dtype=np.int8)
    y_draws = np.empty((t_total, m_cells))
    t = 0
    for it in range(1, config.n_iters + 1):
        _ifa_sweep(state, shrink, hyper, rng, K, lod, n_obs_above)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            z_draws[t] = state.z
            y_draws[t] = state.y[rows, cols]
            t += 1

    draws = [
        MissingCellDraws(row=int(rows[m]), col=int(cols[m]),
                         z=z_draws[:, m], y=y_draws[:, m])
        for m in range(m_cells)
    ]
    # summarise on the working scale, then map endpoints back
    summaries = [summarize_missing_entry(d) for d in draws]
    if log_transform:
        summaries = [
            ImputationSummary(
                row=s.row, col=s.col, designation=s.designation,
                designation_probability=s.designation_probability,
                median=float(np.exp(s.median)),
                ci_lower=float(np.exp(s.ci_lower)),
                ci_upper=float(np.exp(s.ci_upper)),
            )
            for s in summaries
        ]
        for d in draws:
            d.y = np.exp(d.y)
    imputed = ds.values.copy()
    for s in summaries:
        imputed[s.row, s.col] = s.median
    return BaselineResult(
        method="logifa" if log_transform else "ifa",
        imputed=imputed,
        draws=draws,
        summaries=summaries,
        info={"backend": backend_name, "alpha_mean": None},
    )


def _ifa_initial_completion(work, mask, k):
    if k == 0 or not np.any(~mask):
        obs_count = np.maximum(mask.sum(axis=0), 1)
        col_means = np.where(mask, work, 0.0).sum(axis=0) / obs_count
        return np.where(mask, work, col_means[None, :])
    rank = min(k, *work.shape)
    y0, _ = _svd_complete(work, mask, rank)
    return y0


def _initialize_on_arrays(work, mask, y0, hyper, rng, K, sigma2_init):
    """Same starting-state recipe as the truncated sampler, on raw arrays."""
    n, p = work.shape
    k = hyper.k_star
    miss = ~mask
    y0 = y0.copy()
    y0[miss] = np.abs(y0[miss])
    loadings = _samp.pca_loadings(y0, k)
    eta = rng.standard_normal((n, k))
    if sigma2_init is not None:
        sigma_inv = 1.0 / np.asarray(sigma2_init, dtype=np.float64)
    else:
        sigma_inv = rng.standard_gamma(hyper.a_sigma, size=p) / hyper.b_sigma
    col_means = y0.mean(axis=0)
    fit = np.einsum("ik,jk->ij", eta, loadings)
    mu = col_means - fit.mean(axis=0)
    hyper = _samp._resolve_hyper(hyper, col_means, miss.any(axis=0), mu)
    alpha = float(np.clip(rng.random(), 1e-300, 1.0 - 1e-16))
    phi = rng.standard_gamma(hyper.kappa1, size=(p, k)) / hyper.kappa2
    delta = np.empty(k)
    if k > 0:
        delta[0] = rng.standard_gamma(hyper.a1)
        for h in range(1, k):
            u = rng.random()
            delta[h] = float(K.tgamma_lb1_transform(np.array(u), hyper.a2, 1.0))
    rows, cols = np.nonzero(miss)
    from .types import ModelState, ShrinkageState

    state = ModelState(
        mu=mu, loadings=loadings, sigma_inv=sigma_inv, eta=eta, alpha=alpha,
        y=y0, z=np.zeros(rows.shape[0], dtype=np.int8),
        missing_rows=rows, missing_cols=cols,
    )
    return state, ShrinkageState(phi=phi, delta=delta), hyper


def _ifa_sweep(state, shrink, hyper, rng, K, lod, n_obs_above):
    n, p = state.y.shape
    k = state.k_star
    fit = np.einsum("ik,jk->ij", state.eta, state.loadings)

    # mean
    prop_mean, prop_prec = _samp._mu_conditional(
        state.y, fit, state.sigma_inv, hyper.mu_prior_precision,
        hyper.mu_prior_mean,
    )
    state.mu = prop_mean + rng.standard_normal(p) / np.sqrt(prop_prec)

    # loadings rows
    if k > 0:
        d_inv = shrink.phi * shrink.tau
        a, _, chol = _samp._lambda_conditional(
            state.y, state.eta, state.mu, state.sigma_inv, d_inv
        )
        z = rng.standard_normal((p, k))
        state.loadings = a + np.linalg.solve(
            np.swapaxes(chol, 1, 2), z[..., None]
        )[..., 0]
        fit = np.einsum("ik,jk->ij", state.eta, state.loadings)

    # idiosyncratic precisions
    shape, rate = _samp._sigma_conditional(
        state.y, fit, state.mu, hyper.a_sigma, hyper.b_sigma, K
    )
    state.sigma_inv = rng.standard_gamma(shape, size=p) / rate

    # factor scores
    if k > 0:
        m, _, chol = _samp._eta_conditional(
            state.y, state.mu, state.loadings, state.sigma_inv
        )
        z = rng.standard_normal((n, k))
        w = np.linalg.solve(chol.T, np.eye(k))
        state.eta = m + z @ w.T

    _samp.update_phi(shrink, state, hyper, rng)
    _samp.update_delta(shrink, state, hyper, rng, kernels=K)

    n_missing_above = int((state.z == 0).sum())
    alpha = rng.beta(n_missing_above + 1, n_obs_above + 1)
    state.alpha = float(np.clip(alpha, 1e-300, 1.0 - 1e-16))

    # missing cells: plain-normal masses, draws unconstrained below zero
    rows, cols = state.missing_rows, state.missing_cols
    if rows.shape[0]:
        mean = state.mu[cols] + np.einsum(
            "mk,mk->m", state.eta[rows], state.loadings[cols]
        )
        sd = 1.0 / np.sqrt(state.sigma_inv[cols])
        p_below = ndtr((lod - mean) / sd)
        q_above = 1.0 - p_below
        denom = p_below + state.alpha * q_above
        u_z = rng.random(rows.shape[0])
        z = (u_z < np.divide(p_below, denom, out=np.ones_like(denom),
                             where=denom > 0)).astype(np.int8)
        u_y = rng.random(rows.shape[0])
        below = z == 1
        lower = np.where(below, -np.inf, lod)
        upper = np.where(below, lod, np.inf)
        state.y[rows, cols] = K.tnorm_transform(u_y, mean, sd, lower, upper)
        state.z = z
