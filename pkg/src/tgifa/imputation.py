"""Per-iteration missing-value draws and post-hoc per-cell summaries.

A missing cell is either below the detection limit (designation z = 1) or
above it but lost at random (z = 0). Given the cell's current conditional
mean and variance, the below/above masses P and Q of the zero-truncated
normal determine z ~ Bernoulli(P / (P + alpha Q)); the value is then drawn
from the matching side of the detection limit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .types import MAR, MNAR, ChainOutput, Dataset


@dataclass
class MissingCellDraws:
    """Retained (z, value) pairs for one missing cell across the chain."""

    row: int
    col: int
    z: np.ndarray  # (T,) int8
    y: np.ndarray  # (T,)


@dataclass
class ImputationSummary:
    """Posterior summary of one missing cell under its modal designation."""

    row: int
    col: int
    designation: str                # MAR or MNAR
    designation_probability: float  # majority fraction, in [0.5, 1]
    median: float
    ci_lower: float
    ci_upper: float


def compute_pq(mu_ij, sigma_j, lod, kernels=None):
    """Below/above detection-limit masses of N(mu, sigma^2) truncated to
    [0, inf). Returns (P, Q) with P + Q = 1 up to rounding."""
    K = kernels if kernels is not None else get_kernels()[0]
    mu_ij = np.asarray(mu_ij, dtype=np.float64)
    sigma_j = np.asarray(sigma_j, dtype=np.float64)
    if np.any(sigma_j <= 0):
        raise ValueError("sigma must be positive")
    if not lod > 0:
        raise ValueError("lod must be positive")
    p = K.tnorm_interval_prob(mu_ij, sigma_j, 0.0, 0.0, lod)
    q = K.tnorm_interval_prob(mu_ij, sigma_j, 0.0, lod, np.inf)
    if p.shape == ():
        return float(p), float(q)
    return p, q


def draw_missing_entry(mu_ij, sigma_j, lod, alpha, rng, kernels=None):
    """Draw (z, value) for one missing cell.

    z ~ Bernoulli(P / (P + alpha Q)); the value comes from the cell's
    truncated normal restricted to [0, lod) when z = 1 and [lod, inf)
    when z = 0.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    p, q = compute_pq(mu_ij, sigma_j, lod, kernels=K)
    denom = p + alpha * q
    if denom <= 0:
        raise FloatingPointError(
            "P + alpha*Q underflowed to zero: pathological parameter state"
        )
    z = int(rng.random() < p / denom)
    u = rng.random()
    if z:
        y = K.tnorm_transform(np.asarray(u), mu_ij, sigma_j, 0.0, lod)
    else:
        y = K.tnorm_transform(np.asarray(u), mu_ij, sigma_j, lod, np.inf)
    return z, float(y)


def draw_missing_cells(state, lod, rng, kernels=None):
    """Redraw every missing cell of the working matrix in place.

    Vectorised sweep step: consumes one uniform per cell for the
    designation and one for the value.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    rows, cols = state.missing_rows, state.missing_cols
    m = rows.shape[0]
    if m == 0:
        return
    mean = state.mu[cols] + np.einsum(
        "mk,mk->m", state.eta[rows], state.loadings[cols]
    )
    sd = 1.0 / np.sqrt(state.sigma_inv[cols])
    p = K.tnorm_interval_prob(mean, sd, 0.0, 0.0, lod)
    q = K.tnorm_interval_prob(mean, sd, 0.0, lod, np.inf)
    denom = p + state.alpha * q
    if np.any(denom <= 0):
        raise FloatingPointError(
            "P + alpha*Q underflowed to zero: pathological parameter state"
        )
    u_z = rng.random(m)
    z = (u_z < p / denom).astype(np.int8)
    u_y = rng.random(m)
    below = z == 1
    lower = np.where(below, 0.0, lod)
    upper = np.where(below, lod, np.inf)
    y = K.tnorm_transform(u_y, mean, sd, lower, upper)
    state.y[rows, cols] = y
    state.z = z


def summarize_missing_entry(draws: MissingCellDraws, pooled: bool = False
                            ) -> ImputationSummary:
    """Summarise one cell's retained draws.

    The modal designation is the majority of the z draws (ties break to
    MAR); the median and equal-tailed 95% interval are computed over the
    value draws from iterations matching the modal designation, or over all
    draws when ``pooled``.
    """
    t = draws.z.shape[0]
    if t == 0:
        raise ValueError("no retained draws for this cell")
    frac_below = float((draws.z == 1).sum()) / t
    modal = 1 if frac_below > 0.5 else 0
    prob = max(frac_below, 1.0 - frac_below)
    values = draws.y if pooled else draws.y[draws.z == modal]
    lo, med, hi = np.quantile(values, [0.025, 0.5, 0.975])
    return ImputationSummary(
        row=draws.row,
        col=draws.col,
        designation=MNAR if modal == 1 else MAR,
        designation_probability=prob,
        median=float(med),
        ci_lower=float(lo),
        ci_upper=float(hi),
    )


def collect_cell_draws(chain: ChainOutput) -> list[MissingCellDraws]:
    return [
        MissingCellDraws(
            row=int(chain.missing_rows[m]),
            col=int(chain.missing_cols[m]),
            z=chain.z_draws[:, m],
            y=chain.y_draws[:, m],
        )
        for m in range(chain.missing_rows.shape[0])
    ]


def summarize_chain(chain: ChainOutput, pooled: bool = False
                    ) -> list[ImputationSummary]:
    return [summarize_missing_entry(d, pooled=pooled)
            for d in collect_cell_draws(chain)]


def fill_imputed_matrix(ds: Dataset, summaries: list[ImputationSummary]
                        ) -> np.ndarray:
    """Complete matrix: observed entries verbatim, missing cells at their
    posterior medians under the modal designation."""
    out = ds.values.copy()
    for s in summaries:
        out[s.row, s.col] = s.median
    return out


def write_summary_csv(summaries: list[ImputationSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["row_index", "col_index", "designation", "designation_prob",
             "median", "ci_lower", "ci_upper"]
        )
        for s in summaries:
            w.writerow(
                [s.row, s.col, s.designation, repr(s.designation_probability),
                 repr(s.median), repr(s.ci_lower), repr(s.ci_upper)]
            )
