"""CSV matrix ingestion and run-output serialisation.

Matrix CSV format: first row holds variable names, each later row one
observation; an empty cell or the literal ``NA`` marks a missing value.
Floats are written with ``repr`` so a write/read round trip is
value-identical.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .imputation import ImputationSummary, fill_imputed_matrix, write_summary_csv
from .types import ChainOutput, Dataset


def read_matrix_csv(path):
    """Parse a matrix CSV into (values, mask, names).

    Missing cells (empty or ``NA``) get NaN in ``values`` and False in
    ``mask``. Raises ValueError for an empty file, ragged rows, or an
    unparseable token.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = [c.strip() for c in rows[0]]
    p = len(names)
    n = len(rows) - 1
    if n == 0:
        raise ValueError(f"{path}: no data rows")
    values = np.empty((n, p))
    mask = np.ones((n, p), dtype=bool)
    for i, row in enumerate(rows[1:]):
        if len(row) != p:
            raise ValueError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {p}"
            )
        for j, tok in enumerate(row):
            tok = tok.strip()
            if tok == "" or tok.upper() == "NA":
                values[i, j] = np.nan
                mask[i, j] = False
            else:
                try:
                    values[i, j] = float(tok)
                except ValueError:
                    raise ValueError(
                        f"{path}: unparseable value {tok!r} at row {i + 2}, "
                        f"column {j + 1}"
                    ) from None
    return values, mask, names


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix_csv(path, values, mask=None, names=None) -> None:
    """Inverse of :func:`read_matrix_csv`; masked cells are written as NA."""
    values = np.asarray(values)
    n, p = values.shape
    if mask is None:
        mask = ~np.isnan(values)
    if names is None:
        names = [f"v{j}" for j in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names))
        for i in range(n):
            w.writerow(
                [_fmt(values[i, j]) if mask[i, j] else "NA" for j in range(p)]
            )


def write_outputs(chain: ChainOutput, summaries: list[ImputationSummary],
                  ds: Dataset, out_dir, config_echo: dict | None = None) -> list:
    """Write the imputed matrix, the per-cell summary table and a
    diagnostics JSON. Every file is deterministic given the run."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    imputed = fill_imputed_matrix(ds, summaries)
    path = os.path.join(out_dir, "imputed_matrix.csv")
    write_matrix_csv(path, imputed, mask=np.ones_like(ds.mask), names=ds.variable_names)
    written.append(path)

    path = os.path.join(out_dir, "imputation_summary.csv")
    write_summary_csv(summaries, path)
    written.append(path)

    alpha = chain.alpha_draws
    diagnostics = {
        "seed": chain.config.seed if chain.config else None,
        "backend": chain.backend,
        "n_retained": chain.n_retained,
        "acceptance_rates": chain.acceptance_rates(),
        "acceptance_counts": {k: list(v) for k, v in chain.acceptance.items()},
        "degenerate_rejections": chain.extras.get("degenerate_rejections", 0),
        "alpha_posterior_mean": float(alpha.mean()) if alpha.size else None,
        "alpha_posterior_ci95": (
            [float(q) for q in np.quantile(alpha, [0.025, 0.975])]
            if alpha.size else None
        ),
        "n_missing_cells": int(ds.n_missing),
        "lod": ds.lod,
        "config": config_echo or {},
    }
    path = os.path.join(out_dir, "diagnostics.json")
    with open(path, "w") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written


def write_chain_npz(chain: ChainOutput, path) -> None:
    """Optional full-chain dump for audit."""
    np.savez_compressed(
        path,
        mu=chain.mu_draws,
        loadings=chain.loadings_draws,
        sigma_inv=chain.sigma_inv_draws,
        alpha=chain.alpha_draws,
        z=chain.z_draws,
        y=chain.y_draws,
        missing_rows=chain.missing_rows,
        missing_cols=chain.missing_cols,
    )
