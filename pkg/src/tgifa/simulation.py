"""Synthetic-data study: reference generation, factor-model data synthesis,
missingness injection, and evaluation metrics.

The reference matrix stands in for a real high-dimensional panel: strictly
positive, heavy right tails, block-correlated columns spanning two orders
of magnitude in scale. Data are then synthesised from the factor model
around that reference (loadings = its leading principal components,
idiosyncratic variance a fixed fraction of its column variances), and
missingness is injected below a matrix-wide quantile (censored) plus a
uniform fraction of the remainder (lost at random).
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .baselines import impute_fixed, impute_svd, run_ifa_chain
from .imputation import fill_imputed_matrix, summarize_chain
from .sampler import pca_loadings, run_chain
from .types import MAR, MNAR, Dataset, Hyperparameters, SamplerConfig, validate_dataset

ALL_METHODS = ("tgifa", "mean", "half_min", "svd", "ifa", "logifa")

# Reference-generator shape constants (log scale). Two tiers of column
# scales: a small tier of tight columns sitting just above the eventual
# detection limit (these supply catchable censored cells) and a broad tier
# of higher-variation columns a few multiples up (whose spread reaches
# toward zero, the regime that separates truncated from untruncated fits).
# The per-column variation is capped so the Gaussian construction around
# the reference rarely dips below zero.
_BOTTOM_FRACTION = 0.12
_BOTTOM_SCALE = (1.5, 4.0)
_BOTTOM_LOG_SD = (0.14, 0.20)
_UPPER_SCALE = (4.0, 50.0)
_UPPER_LOG_SD = (0.32, 0.40)
_BLOCK_CORR = 0.9


@dataclass
class GeneratorParams:
    """Record of the factor-model quantities used to synthesise a dataset."""

    loadings: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    eta: np.ndarray
    seed: int
    clamp_rate: float


@dataclass
class SimulatedDataset:
    """Complete truth, its masked version, and per-cell missingness labels."""

    truth: np.ndarray
    masked: Dataset
    truth_types: np.ndarray  # (n_missing,) of MAR/MNAR, aligned with masked
    generator: GeneratorParams | None = None

    def labels_by_cell(self) -> dict[tuple[int, int], str]:
        rows = self.masked.missing_rows
        cols = self.masked.missing_cols
        return {
            (int(rows[m]), int(cols[m])): str(self.truth_types[m])
            for m in range(rows.shape[0])
        }


def derive_seed(*key: int) -> int:
    """Deterministic 63-bit seed from an integer key tuple."""
    return int(np.random.SeedSequence(entropy=tuple(key)).generate_state(1)[0] >> 1)


def generate_reference(n: int, p: int, seed: int, n_blocks: int = 5) -> np.ndarray:
    """Deterministic positive reference matrix with block-correlated,
    heavy-right-tailed columns across a wide range of scales."""
    if n < 1 or p < 1:
        raise ValueError("need n, p >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 2**20)))
    n_blocks = max(1, min(n_blocks, p))
    block_of = (np.arange(p) * n_blocks) // p

    n_bottom = max(1, int(round(_BOTTOM_FRACTION * p))) if p > 1 else 1
    log_center = np.empty(p)
    log_sd = np.empty(p)
    log_center[:n_bottom] = rng.uniform(
        np.log(_BOTTOM_SCALE[0]), np.log(_BOTTOM_SCALE[1]), n_bottom
    )
    log_sd[:n_bottom] = rng.uniform(*_BOTTOM_LOG_SD, n_bottom)
    log_center[n_bottom:] = rng.uniform(
        np.log(_UPPER_SCALE[0]), np.log(_UPPER_SCALE[1]), p - n_bottom
    )
    log_sd[n_bottom:] = rng.uniform(*_UPPER_LOG_SD, p - n_bottom)
    perm = rng.permutation(p)
    log_center, log_sd = log_center[perm], log_sd[perm]

    shared = rng.standard_normal((n, n_blocks))
    own = rng.standard_normal((n, p))
    rho = _BLOCK_CORR
    z = rho * shared[:, block_of] + np.sqrt(1.0 - rho**2) * own
    return np.exp(log_center + log_sd * z)


def generate_dataset(reference: np.ndarray, k_star: int, seed: int,
                     idio_var_fraction: float = 0.6,
                     mu_prior_var_factor: float = 0.05,
                     clamp_floor_factor: float = 1e-6):
    """Synthesise a complete truth matrix from the factor model around a
    reference.

    Loadings are the reference's first ``k_star`` principal-component
    loadings; idiosyncratic variances are ``idio_var_fraction`` of the
    reference column variances; the mean is drawn around the reference
    column means (minus the factor fit) with variance
    ``mu_prior_var_factor`` times those means. Negative synthesised entries
    are clamped to a small positive floor; the clamp rate is recorded.
    """
    reference = np.asarray(reference, dtype=np.float64)
    n, p = reference.shape
    if not 0 <= k_star <= min(n, p):
        raise ValueError(f"k_star must be in [0, {min(n, p)}]")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 2**21)))
    loadings = pca_loadings(reference, k_star)
    col_var = reference.var(axis=0, ddof=1)
    sigma2 = idio_var_fraction * col_var
    eta = rng.standard_normal((n, k_star))
    fit = np.einsum("ik,jk->ij", eta, loadings)
    col_means = reference.mean(axis=0)
    mu_tilde = col_means - fit.mean(axis=0)
    mu = mu_tilde + np.sqrt(mu_prior_var_factor * col_means) * rng.standard_normal(p)
    truth = mu + fit + np.sqrt(sigma2) * rng.standard_normal((n, p))
    floor = clamp_floor_factor * col_means
    clamped = truth < floor
    truth = np.maximum(truth, floor)
    params = GeneratorParams(
        loadings=loadings, mu=mu, sigma2=sigma2, eta=eta, seed=seed,
        clamp_rate=float(clamped.mean()),
    )
    return truth, params


def inject_missingness(truth: np.ndarray, mnar_quantile: float = 0.015,
                       mar_fraction: float = 0.015, seed: int = 0,
                       max_retries: int = 100,
                       generator: GeneratorParams | None = None) -> SimulatedDataset:
    """Mask censored and randomly lost cells.

    Every entry below the matrix-wide ``mnar_quantile`` quantile is masked
    as MNAR and that quantile becomes the dataset's detection limit; then
    ``mar_fraction`` of the remaining entries are masked uniformly at
    random as MAR. MAR selections that would empty a column are redrawn up
    to ``max_retries`` times.
    """
    if not (0 <= mnar_quantile < 1 and 0 <= mar_fraction < 1):
        raise ValueError("quantile and fraction must lie in [0, 1)")
    truth = np.asarray(truth, dtype=np.float64)
    n, p = truth.shape
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 2**22)))

    if mnar_quantile > 0:
        lod = float(np.quantile(truth, mnar_quantile))
        mnar_mask = truth < lod
    else:
        lod = float(truth.min())
        mnar_mask = np.zeros_like(truth, dtype=bool)
    if np.any(mnar_mask.sum(axis=0) == n):
        raise ValueError("censoring below the quantile empties a whole column")

    flat_pool = np.nonzero(~mnar_mask.ravel())[0]
    n_mar = int(round(mar_fraction * flat_pool.size))
    for attempt in range(max_retries + 1):
        mar_flat = rng.choice(flat_pool, size=n_mar, replace=False)
        mask_missing = mnar_mask.copy()
        mask_missing.ravel()[mar_flat] = True
        if not np.any(mask_missing.sum(axis=0) == n):
            break
    else:
        raise ValueError(
            f"could not draw a random-loss pattern keeping every column "
            f"partially observed after {max_retries} retries"
        )

    values = np.where(mask_missing, np.nan, truth)
    ds = validate_dataset(values, ~mask_missing, lod=lod)
    rows, cols = ds.missing_rows, ds.missing_cols
    types = np.where(mnar_mask[rows, cols], MNAR, MAR)
    return SimulatedDataset(truth=truth, masked=ds, truth_types=types,
                            generator=generator)


def mae(imputed: np.ndarray, sim: SimulatedDataset, subset: str = "all") -> float:
    """Mean absolute error between imputed and true values over the missing
    cells of the requested truth type ("all", MAR or MNAR)."""
    rows = sim.masked.missing_rows
    cols = sim.masked.missing_cols
    if subset == "all":
        keep = np.ones(rows.shape[0], dtype=bool)
    elif subset in (MAR, MNAR):
        keep = sim.truth_types == subset
    else:
        raise ValueError(f"subset must be 'all', {MAR!r} or {MNAR!r}")
    if not keep.any():
        raise ValueError(f"no missing cells in subset {subset!r}")
    r, c = rows[keep], cols[keep]
    return float(np.abs(imputed[r, c] - sim.truth[r, c]).mean())


def designation_accuracy(summaries, sim: SimulatedDataset) -> dict:
    """Percent of missing cells whose modal designation matches the truth,
    overall and per class."""
    labels = sim.labels_by_cell()
    if len(summaries) != len(labels):
        raise ValueError(
            f"{len(summaries)} summaries but {len(labels)} labelled cells"
        )
    hits = {"overall": [0, 0], MAR: [0, 0], MNAR: [0, 0]}
    for s in summaries:
        key = (s.row, s.col)
        if key not in labels:
            raise ValueError(f"no truth label for cell {key}")
        truth = labels[key]
        correct = int(s.designation == truth)
        hits["overall"][0] += correct
        hits["overall"][1] += 1
        hits[truth][0] += correct
        hits[truth][1] += 1
    return {
        "overall": 100.0 * hits["overall"][0] / hits["overall"][1],
        "mar": (100.0 * hits[MAR][0] / hits[MAR][1]) if hits[MAR][1] else float("nan"),
        "mnar": (100.0 * hits[MNAR][0] / hits[MNAR][1]) if hits[MNAR][1] else float("nan"),
    }


def procrustes_align(loadings_draw: np.ndarray, reference_loadings: np.ndarray
                     ) -> np.ndarray:
    """Rotate a loadings draw by the orthogonal matrix that best maps it to
    the reference (solves the orthogonal Procrustes problem)."""
    a = np.asarray(loadings_draw, dtype=np.float64)
    b = np.asarray(reference_loadings, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not np.linalg.norm(a) > 0 or (b.size > 0 and not np.linalg.norm(b) > 0):
        raise ValueError("degenerate (zero) loadings matrix")
    r, _ = orthogonal_procrustes(a, b)
    return a @ r


def posterior_mean_loadings(loadings_draws: np.ndarray) -> np.ndarray:
    """Average loadings draws after aligning each to the first draw."""
    if loadings_draws.shape[0] == 0 or loadings_draws.shape[2] == 0:
        return np.zeros(loadings_draws.shape[1:])
    ref = loadings_draws[0]
    aligned = np.stack([procrustes_align(d, ref) for d in loadings_draws])
    return aligned.mean(axis=0)


# ---------------------------------------------------------------------------
# study driver

@dataclass
class StudyResult:
    metrics_rows: list = field(default_factory=list)      # replicate, method, subset, mae
    designation_rows: list = field(default_factory=list)  # replicate, method, overall/mar/mnar
    residual_rows: list = field(default_factory=list)
    negative_counts: dict = field(default_factory=dict)   # method -> per-replicate counts
    clamp_rates: list = field(default_factory=list)
    seed: int = 0
    config: SamplerConfig | None = None

    def accuracy_table(self) -> dict:
        """Mean and sd of per-replicate designation accuracies per method."""
        table = {}
        for method in {r["method"] for r in self.designation_rows}:
            rows = [r for r in self.designation_rows if r["method"] == method]
            table[method] = {}
            for key in ("overall", "mar", "mnar"):
                vals = np.array([r[key] for r in rows], dtype=float)
                table[method][f"{key}_mean"] = float(np.nanmean(vals))
                table[method][f"{key}_sd"] = float(np.nanstd(vals, ddof=1)) if len(vals) > 1 else 0.0
        return table

    def mae_by_method(self, subset: str = "all") -> dict:
        out = {}
        for r in self.metrics_rows:
            if r["subset"] == subset:
                out.setdefault(r["method"], []).append(r["mae"])
        return {k: float(np.mean(v)) for k, v in out.items()}


def reference_sigma2(values: np.ndarray, mask: np.ndarray,
                     log_scale: bool = False) -> np.ndarray:
    """0.6 times the per-column variance of the observed entries (on the log
    scale when requested), floored away from zero; the reference
    idiosyncratic scale used at chain initialisation."""
    p = values.shape[1]
    out = np.empty(p)
    for j in range(p):
        obs = values[mask[:, j], j]
        if log_scale:
            obs = np.log(obs)
        v = float(obs.var(ddof=1)) if obs.size > 1 else 0.0
        out[j] = max(0.6 * v, 1e-8 * max(float(np.abs(obs).mean()), 1.0) ** 2)
    return out


def run_replicate(rep: int, seed: int, n: int, p: int, k_star: int,
                  config: SamplerConfig, hyper: Hyperparameters,
                  mnar_quantile: float, mar_fraction: float,
                  methods=ALL_METHODS, backend=None) -> dict:
    """Simulate one dataset and impute it with every requested method."""
    reference = generate_reference(n, p, derive_seed(seed, 0))
    truth, gparams = generate_dataset(reference, k_star, derive_seed(seed, 1, rep))
    sim = inject_missingness(
        truth, mnar_quantile, mar_fraction, seed=derive_seed(seed, 2, rep),
        generator=gparams,
    )
    ds = sim.masked
    sig2_ref = reference_sigma2(ds.values, ds.mask)

    imputed = {}
    summaries = {}
    if "tgifa" in methods:
        cfg = replace(config, seed=derive_seed(seed, 3, rep))
        chain = run_chain(ds, hyper, cfg, backend=backend, sigma2_init=sig2_ref)
        summaries["tgifa"] = summarize_chain(chain)
        imputed["tgifa"] = fill_imputed_matrix(ds, summaries["tgifa"])
    if "mean" in methods:
        imputed["mean"] = impute_fixed(ds, "mean").imputed
    if "half_min" in methods:
        imputed["half_min"] = impute_fixed(ds, "half_min").imputed
    if "svd" in methods:
        imputed["svd"] = impute_svd(ds, rank=max(k_star, 1)).imputed
    if "ifa" in methods:
        cfg = replace(config, seed=derive_seed(seed, 4, rep))
        res = run_ifa_chain(ds, hyper, cfg, log_transform=False, backend=backend,
                            sigma2_init=sig2_ref)
        summaries["ifa"] = res.summaries
        imputed["ifa"] = res.imputed
    if "logifa" in methods:
        cfg = replace(config, seed=derive_seed(seed, 5, rep))
        sig2_log = reference_sigma2(ds.values, ds.mask, log_scale=True)
        res = run_ifa_chain(ds, hyper, cfg, log_transform=True, backend=backend,
                            sigma2_init=sig2_log)
        summaries["logifa"] = res.summaries
        imputed["logifa"] = res.imputed

    out = {
        "replicate": rep,
        "metrics": [],
        "designation": [],
        "residuals": [],
        "negatives": {},
        "clamp_rate": gparams.clamp_rate,
    }
    rows, cols = ds.missing_rows, ds.missing_cols
    for method, mat in imputed.items():
        for subset in ("all", MAR, MNAR):
            out["metrics"].append(
                {"replicate": rep, "method": method, "subset": subset,
                 "mae": mae(mat, sim, subset)}
            )
        out["negatives"][method] = int((mat[rows, cols] < 0).sum())
        vals = mat[rows, cols]
        tru = sim.truth[rows, cols]
        for m in range(rows.shape[0]):
            out["residuals"].append(
                {"replicate": rep, "method": method, "row": int(rows[m]),
                 "col": int(cols[m]), "truth_type": str(sim.truth_types[m]),
                 "truth": float(tru[m]), "imputed": float(vals[m]),
                 "residual": float(vals[m] - tru[m])}
            )
    for method, summ in summaries.items():
        acc = designation_accuracy(summ, sim)
        out["designation"].append({"replicate": rep, "method": method, **acc})
    return out


def _replicate_worker(args):
    return run_replicate(*args)


def run_study(n: int = 18, p: int = 100, k_star: int = 5, replicates: int = 10,
              seed: int = 0, config: SamplerConfig | None = None,
              hyper: Hyperparameters | None = None,
              mnar_quantile: float = 0.015, mar_fraction: float = 0.015,
              methods=ALL_METHODS, jobs: int = 1, backend=None,
              out_dir=None) -> StudyResult:
    """Run the full comparison over independent replicates.

    Replicates are embarrassingly parallel; each derives its own seeds from
    the master seed, so results do not depend on ``jobs``.
    """
    if config is None:
        config = SamplerConfig(mu_update_mode="coordinate")
    if hyper is None:
        hyper = Hyperparameters(k_star=k_star)
    elif hyper.k_star != k_star:
        raise ValueError("hyper.k_star disagrees with k_star")

    args = [
        (rep, seed, n, p, k_star, config, hyper, mnar_quantile, mar_fraction,
         tuple(methods), backend)
        for rep in range(replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_replicate_worker, args))
    else:
        per_rep = [run_replicate(*a) for a in args]

    result = StudyResult(seed=seed, config=config)
    for rep_out in per_rep:
        result.metrics_rows.extend(rep_out["metrics"])
        result.designation_rows.extend(rep_out["designation"])
        result.residual_rows.extend(rep_out["residuals"])
        result.clamp_rates.append(rep_out["clamp_rate"])
        for method, cnt in rep_out["negatives"].items():
            result.negative_counts.setdefault(method, []).append(cnt)
    if out_dir is not None:
        write_study_csvs(result, out_dir)
    return result


def write_study_csvs(result: StudyResult, out_dir) -> None:
    """Emit metrics, designation-accuracy and long-format residual tables."""
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "method", "subset", "mae"])
        for r in result.metrics_rows:
            w.writerow([r["replicate"], r["method"], r["subset"], repr(r["mae"])])

    with open(os.path.join(out_dir, "designation_accuracy.csv"), "w",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "method", "overall", "mar", "mnar"])
        for r in result.designation_rows:
            w.writerow([r["replicate"], r["method"], repr(r["overall"]),
                        repr(r["mar"]), repr(r["mnar"])])
        table = result.accuracy_table()
        for method in sorted(table):
            t = table[method]
            w.writerow(
                ["mean±sd", method,
                 f"{t['overall_mean']:.1f}±{t['overall_sd']:.1f}",
                 f"{t['mar_mean']:.1f}±{t['mar_sd']:.1f}",
                 f"{t['mnar_mean']:.1f}±{t['mnar_sd']:.1f}"]
            )

    with open(os.path.join(out_dir, "residuals.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "method", "row", "col", "truth_type",
                    "truth", "imputed", "residual"])
        for r in result.residual_rows:
            w.writerow([r["replicate"], r["method"], r["row"], r["col"],
                        r["truth_type"], repr(r["truth"]), repr(r["imputed"]),
                        repr(r["residual"])])
