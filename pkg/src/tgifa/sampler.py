"""MCMC engine for the truncated Gaussian infinite factor model.

One sweep updates, in a fixed order: the mean vector (exchange algorithm),
each loadings row (exchange), each idiosyncratic precision (exchange), the
factor scores (Metropolis-Hastings), the shrinkage parameters and the
above-detection missingness probability (Gibbs), and finally the imputed
values of every missing cell.

The exchange updates propose from the full conditionals of the matching
untruncated model, draw an auxiliary data column (or matrix) from the
truncated likelihood at the proposed value, and accept with a ratio built
purely from unnormalised Gaussian log-kernels; the intractable truncation
normalisers cancel. All acceptance ratios are computed in log space.

Randomness for each block is drawn up front in a fixed documented order,
so the batched and per-variable update paths consume an identical stream
and a run is reproducible from its seed alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernels
from .imputation import draw_missing_cells
from .types import (
    ChainOutput,
    Dataset,
    Hyperparameters,
    ModelState,
    SamplerConfig,
    ShrinkageState,
)

_BLOCKS = ("mu", "lambda", "sigma", "eta")


@dataclass
class BlockAcceptanceStats:
    """Per-block proposal/acceptance tallies plus a degeneracy counter."""

    counts: dict = field(default_factory=lambda: {b: [0, 0] for b in _BLOCKS})
    degenerate_rejections: int = 0

    def record(self, block: str, accepted: int, proposed: int) -> None:
        self.counts[block][0] += int(accepted)
        self.counts[block][1] += int(proposed)

    def as_dict(self) -> dict[str, tuple[int, int]]:
        return {b: (c[0], c[1]) for b, c in self.counts.items()}

    def rate(self, block: str) -> float:
        acc, prop = self.counts[block]
        return acc / prop if prop else float("nan")


def _factor_fit(eta, loadings):
    # (n, p) matrix of lambda_j . eta_i; einsum keeps the reduction order
    # identical between batched and per-column code paths.
    return np.einsum("ik,jk->ij", eta, loadings)


def _count_degenerate(stats, log_a) -> np.ndarray:
    bad = ~np.isfinite(log_a) & ~(log_a == -np.inf)
    if stats is not None and np.any(bad):
        stats.degenerate_rejections += int(np.sum(bad))
    return log_a


# ---------------------------------------------------------------------------
# full-conditional proposal parameters (shared with the untruncated sampler)

def _mu_conditional(y, fit, prec, prior_prec, prior_mean):
    n = y.shape[0]
    prop_prec = n * prec + prior_prec
    prop_mean = (prec * (y - fit).sum(axis=0) + prior_prec * prior_mean) / prop_prec
    return prop_mean, prop_prec


def _lambda_conditional(y, eta, mu, prec, d_inv):
    """Proposal N(A_j, B_j) for every loadings row at once.

    Returns (A, P, L): means (p, k), precision matrices B_j^{-1} (p, k, k)
    and their Cholesky factors.
    """
    p, k = d_inv.shape
    gram = eta.T @ eta
    P = prec[:, None, None] * gram[None, :, :]
    idx = np.arange(k)
    P[:, idx, idx] += d_inv
    rhs = prec[:, None] * np.einsum("ik,ij->jk", eta, y - mu)
    A = np.linalg.solve(P, rhs[..., None])[..., 0]
    L = np.linalg.cholesky(P)
    return A, P, L


def _sigma_conditional(y, fit, mu, a_sigma, b_sigma, kernels):
    n = y.shape[0]
    shape = 0.5 * n + a_sigma
    rate = b_sigma + 0.5 * kernels.col_sq_resid(y, fit, mu)
    return shape, rate


def _eta_conditional(y, mu, loadings, prec):
    """Proposal N(M_i, C) for every factor score; C = P^{-1} shared over i."""
    k = loadings.shape[1]
    P = (loadings.T * prec) @ loadings + np.eye(k)
    rhs = (y - mu) @ (loadings * prec[:, None])
    M = np.linalg.solve(P, rhs.T).T
    L = np.linalg.cholesky(P)
    return M, P, L


def eta_proposal_params(state: ModelState, ds: Dataset, i: int):
    """Proposal mean and covariance for factor score i.

    The covariance is [Lambda' Sigma^-1 Lambda + I]^-1 and the mean is
    covariance @ Lambda' Sigma^-1 (y_i - mu), with y_i including current
    imputed values.
    """
    M, P, _ = _eta_conditional(state.y, state.mu, state.loadings, state.sigma_inv)
    return M[i], np.linalg.inv(P)


def simulate_auxiliary_column(j: int, state: ModelState, rng, kernels=None):
    """Draw an auxiliary data column from the truncated likelihood at the
    current (candidate) parameter values: entry i from
    N(mu_j + lambda_j.eta_i, sigma_j^2) truncated to [0, inf)."""
    K = kernels if kernels is not None else get_kernels()[0]
    mean = state.mu[j] + np.einsum("ik,k->i", state.eta, state.loadings[j])
    sd = 1.0 / np.sqrt(state.sigma_inv[j])
    u = rng.random(state.eta.shape[0])
    return K.tnorm_transform(u, mean, sd, 0.0, np.inf)


# ---------------------------------------------------------------------------
# block updates

def _quad(x, mean, prec_mat):
    # batched (x - mean)' P (x - mean) for stacks of vectors
    d = x - mean
    return np.einsum("...i,...ij,...j->...", d, prec_mat, d)


def update_mu(state, ds, hyper, rng, *, mode="block", kernels=None, stats=None):
    """Exchange update of the mean vector.

    ``block`` mode accepts or rejects the whole proposed vector with one
    decision; ``coordinate`` mode runs the p per-column exchange updates
    (valid because likelihood, prior and proposal all factorise over
    columns) with one decision each.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    n, p = state.y.shape
    fit = _factor_fit(state.eta, state.loadings)
    prec = state.sigma_inv
    prop_mean, prop_prec = _mu_conditional(
        state.y, fit, prec, hyper.mu_prior_precision, hyper.mu_prior_mean
    )
    z = rng.standard_normal(p)
    u_aux = rng.random((n, p))

    mu_cur = state.mu
    mu_prop = prop_mean + z / np.sqrt(prop_prec)
    sd = 1.0 / np.sqrt(prec)
    y_aux = K.tnorm_transform(u_aux, mu_prop + fit, sd, 0.0, np.inf)

    log_a = _mu_log_accept(
        state.y, fit, prec, hyper, prop_mean, prop_prec, mu_cur, mu_prop, y_aux, K
    )
    _count_degenerate(stats, log_a)
    if mode == "block":
        u = rng.random()
        total = log_a.sum()
        accept = np.log(u) < total if np.isfinite(total) else False
        if accept:
            state.mu = mu_prop
        if stats is not None:
            stats.record("mu", int(accept), 1)
    else:
        u = rng.random(p)
        accept = np.log(u) < log_a
        state.mu = np.where(accept, mu_prop, mu_cur)
        if stats is not None:
            stats.record("mu", int(accept.sum()), p)


def _mu_log_accept(y, fit, prec, hyper, prop_mean, prop_prec, mu_cur, mu_prop,
                   y_aux, K):
    """Per-column log acceptance terms of the mean exchange update."""
    ss_y_cur = K.col_sq_resid(y, fit, mu_cur)
    ss_y_prop = K.col_sq_resid(y, fit, mu_prop)
    ss_a_cur = K.col_sq_resid(y_aux, fit, mu_cur)
    ss_a_prop = K.col_sq_resid(y_aux, fit, mu_prop)
    log_like = -0.5 * prec * (ss_y_prop - ss_y_cur)
    log_aux = -0.5 * prec * (ss_a_cur - ss_a_prop)
    pm, pp = hyper.mu_prior_mean, hyper.mu_prior_precision
    log_prior = -0.5 * pp * ((mu_prop - pm) ** 2 - (mu_cur - pm) ** 2)
    log_q = -0.5 * prop_prec * ((mu_cur - prop_mean) ** 2 - (mu_prop - prop_mean) ** 2)
    return log_q + log_prior + log_like + log_aux


def _update_lambda_block(state, shrink, ds, rng, K, stats=None, batched=True):
    n, p = state.y.shape
    k = state.k_star
    if k == 0:
        return
    d_inv = shrink.phi * shrink.tau
    A, P, L = _lambda_conditional(state.y, state.eta, state.mu, state.sigma_inv, d_inv)
    z = rng.standard_normal((p, k))
    u_aux = rng.random((n, p))
    u_acc = rng.random(p)
    sd = 1.0 / np.sqrt(state.sigma_inv)

    if batched:
        lam_prop = A + np.linalg.solve(np.swapaxes(L, 1, 2), z[..., None])[..., 0]
        fit_cur = _factor_fit(state.eta, state.loadings)
        fit_prop = _factor_fit(state.eta, lam_prop)
        y_aux = K.tnorm_transform(u_aux, state.mu + fit_prop, sd, 0.0, np.inf)
        log_a = _lambda_log_accept(
            state, d_inv, A, P, lam_prop, fit_cur, fit_prop, y_aux, K
        )
        _count_degenerate(stats, log_a)
        accept = np.log(u_acc) < log_a
        state.loadings = np.where(accept[:, None], lam_prop, state.loadings)
        n_acc = int(accept.sum())
    else:
        n_acc = 0
        for j in range(p):
            lam_j = A[j] + np.linalg.solve(L[j].T, z[j])
            fit_cur_j = np.einsum("ik,k->i", state.eta, state.loadings[j])
            fit_prop_j = np.einsum("ik,k->i", state.eta, lam_j)
            y_aux_j = K.tnorm_transform(
                u_aux[:, j], state.mu[j] + fit_prop_j, sd[j], 0.0, np.inf
            )
            log_a = float(
                _lambda_log_accept_col(
                    state, d_inv, A, P, j, lam_j, fit_cur_j, fit_prop_j, y_aux_j, K
                )
            )
            if not np.isfinite(log_a) and stats is not None and not log_a == -np.inf:
                stats.degenerate_rejections += 1
            if np.log(u_acc[j]) < log_a:
                state.loadings[j] = lam_j
                n_acc += 1
    if stats is not None:
        stats.record("lambda", n_acc, p)


def _lambda_log_accept(state, d_inv, A, P, lam_prop, fit_cur, fit_prop, y_aux, K):
    prec = state.sigma_inv
    ss_y_cur = K.col_sq_resid(state.y, fit_cur, state.mu)
    ss_y_prop = K.col_sq_resid(state.y, fit_prop, state.mu)
    ss_a_cur = K.col_sq_resid(y_aux, fit_cur, state.mu)
    ss_a_prop = K.col_sq_resid(y_aux, fit_prop, state.mu)
    log_like = -0.5 * prec * (ss_y_prop - ss_y_cur)
    log_aux = -0.5 * prec * (ss_a_cur - ss_a_prop)
    log_prior = -0.5 * (
        np.einsum("jk,jk->j", d_inv, lam_prop**2)
        - np.einsum("jk,jk->j", d_inv, state.loadings**2)
    )
    log_q = -0.5 * (_quad(state.loadings, A, P) - _quad(lam_prop, A, P))
    return log_q + log_prior + log_like + log_aux


def _lambda_log_accept_col(state, d_inv, A, P, j, lam_j, fit_cur_j, fit_prop_j,
                           y_aux_j, K):
    prec_j = state.sigma_inv[j]
    y_j = state.y[:, j][:, None]
    mu_j = state.mu[j : j + 1]
    ss_y_cur = K.col_sq_resid(y_j, fit_cur_j[:, None], mu_j)[0]
    ss_y_prop = K.col_sq_resid(y_j, fit_prop_j[:, None], mu_j)[0]
    ss_a_cur = K.col_sq_resid(y_aux_j[:, None], fit_cur_j[:, None], mu_j)[0]
    ss_a_prop = K.col_sq_resid(y_aux_j[:, None], fit_prop_j[:, None], mu_j)[0]
    log_like = -0.5 * prec_j * (ss_y_prop - ss_y_cur)
    log_aux = -0.5 * prec_j * (ss_a_cur - ss_a_prop)
    log_prior = -0.5 * (
        np.dot(d_inv[j], lam_j**2) - np.dot(d_inv[j], state.loadings[j] ** 2)
    )
    log_q = -0.5 * (
        _quad(state.loadings[j], A[j], P[j]) - _quad(lam_j, A[j], P[j])
    )
    return log_q + log_prior + log_like + log_aux


def update_lambda_row(j, state, shrink, ds, rng, kernels=None, stats=None):
    """Exchange update of loadings row j using a fresh auxiliary column."""
    K = kernels if kernels is not None else get_kernels()[0]
    if state.k_star == 0:
        return
    d_inv = shrink.phi * shrink.tau
    A, P, L = _lambda_conditional(state.y, state.eta, state.mu, state.sigma_inv, d_inv)
    z = rng.standard_normal(state.k_star)
    u_aux = rng.random(state.y.shape[0])
    u_acc = rng.random()
    lam_j = A[j] + np.linalg.solve(L[j].T, z)
    fit_cur_j = np.einsum("ik,k->i", state.eta, state.loadings[j])
    fit_prop_j = np.einsum("ik,k->i", state.eta, lam_j)
    sd_j = 1.0 / np.sqrt(state.sigma_inv[j])
    y_aux_j = K.tnorm_transform(u_aux, state.mu[j] + fit_prop_j, sd_j, 0.0, np.inf)
    log_a = float(
        _lambda_log_accept_col(state, d_inv, A, P, j, lam_j, fit_cur_j, fit_prop_j,
                               y_aux_j, K)
    )
    accept = np.log(u_acc) < log_a
    if accept:
        state.loadings[j] = lam_j
    if stats is not None:
        stats.record("lambda", int(accept), 1)


def _update_sigma_block(state, ds, hyper, rng, K, stats=None, batched=True):
    n, p = state.y.shape
    fit = _factor_fit(state.eta, state.loadings)
    shape, rate = _sigma_conditional(state.y, fit, state.mu, hyper.a_sigma,
                                     hyper.b_sigma, K)
    g = rng.standard_gamma(shape, size=p)
    u_aux = rng.random((n, p))
    u_acc = rng.random(p)
    prec_prop = g / rate

    if batched:
        sd_prop = 1.0 / np.sqrt(prec_prop)
        y_aux = K.tnorm_transform(u_aux, state.mu + fit, sd_prop, 0.0, np.inf)
        log_a = _sigma_log_accept(state, hyper, fit, shape, rate, prec_prop, y_aux, K)
        _count_degenerate(stats, log_a)
        accept = np.log(u_acc) < log_a
        state.sigma_inv = np.where(accept, prec_prop, state.sigma_inv)
        n_acc = int(accept.sum())
    else:
        n_acc = 0
        ss_y = K.col_sq_resid(state.y, fit, state.mu)
        for j in range(p):
            sd_j = 1.0 / np.sqrt(prec_prop[j])
            y_aux_j = K.tnorm_transform(
                u_aux[:, j], state.mu[j] + fit[:, j], sd_j, 0.0, np.inf
            )
            ss_a = K.col_sq_resid(
                y_aux_j[:, None], fit[:, j][:, None], state.mu[j : j + 1]
            )[0]
            log_a = float(
                _sigma_log_accept_terms(
                    state.sigma_inv[j], prec_prop[j], ss_y[j], ss_a, shape, rate[j],
                    hyper,
                )
            )
            if np.log(u_acc[j]) < log_a:
                state.sigma_inv[j] = prec_prop[j]
                n_acc += 1
    if stats is not None:
        stats.record("sigma", n_acc, p)


def _sigma_log_accept(state, hyper, fit, shape, rate, prec_prop, y_aux, K):
    ss_y = K.col_sq_resid(state.y, fit, state.mu)
    ss_a = K.col_sq_resid(y_aux, fit, state.mu)
    return _sigma_log_accept_terms(
        state.sigma_inv, prec_prop, ss_y, ss_a, shape, rate, hyper
    )


def _sigma_log_accept_terms(prec_cur, prec_prop, ss_y, ss_a, shape, rate, hyper):
    # data + auxiliary kernels: the (n/2) log-precision factors cancel exactly
    # between the real and auxiliary terms, leaving the quadratic parts.
    log_like = -0.5 * (prec_prop - prec_cur) * ss_y
    log_aux = -0.5 * (prec_cur - prec_prop) * ss_a
    dlog = np.log(prec_prop) - np.log(prec_cur)
    log_prior = (hyper.a_sigma - 1.0) * dlog - hyper.b_sigma * (prec_prop - prec_cur)
    log_q = -(shape - 1.0) * dlog - rate * (prec_cur - prec_prop)
    return log_q + log_prior + log_like + log_aux


def update_sigma_inv(j, state, ds, hyper, rng, kernels=None, stats=None):
    """Exchange update of the idiosyncratic precision of column j."""
    K = kernels if kernels is not None else get_kernels()[0]
    fit_j = np.einsum("ik,k->i", state.eta, state.loadings[j])
    y_j = state.y[:, j][:, None]
    mu_j = state.mu[j : j + 1]
    ss_y = K.col_sq_resid(y_j, fit_j[:, None], mu_j)[0]
    shape = 0.5 * state.y.shape[0] + hyper.a_sigma
    rate = hyper.b_sigma + 0.5 * ss_y
    prec_prop = rng.standard_gamma(shape) / rate
    u_aux = rng.random(state.y.shape[0])
    u_acc = rng.random()
    y_aux = K.tnorm_transform(
        u_aux, state.mu[j] + fit_j, 1.0 / np.sqrt(prec_prop), 0.0, np.inf
    )
    ss_a = K.col_sq_resid(y_aux[:, None], fit_j[:, None], mu_j)[0]
    log_a = float(
        _sigma_log_accept_terms(
            state.sigma_inv[j], prec_prop, ss_y, ss_a, shape, rate, hyper
        )
    )
    accept = np.log(u_acc) < log_a
    if accept:
        state.sigma_inv[j] = prec_prop
    if stats is not None:
        stats.record("sigma", int(accept), 1)


def update_eta(state, ds, rng, kernels=None, stats=None, batched=True):
    """Metropolis-Hastings update of every factor score row.

    The proposal is the full conditional of the untruncated model; the
    acceptance ratio needs only Gaussian log-kernels because the truncation
    normalisers cancel after rearranging the score's marginal density.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    n, p = state.y.shape
    k = state.k_star
    if k == 0:
        return
    M, P, L = _eta_conditional(state.y, state.mu, state.loadings, state.sigma_inv)
    z = rng.standard_normal((n, k))
    u_acc = rng.random(n)
    w = np.linalg.solve(L.T, np.eye(k))
    eta_prop = M + z @ w.T

    if batched:
        fit_cur = _factor_fit(state.eta, state.loadings)
        fit_prop = _factor_fit(eta_prop, state.loadings)
        log_a = _eta_log_accept(state, M, P, eta_prop, fit_cur, fit_prop, K)
        _count_degenerate(stats, log_a)
        accept = np.log(u_acc) < log_a
        state.eta = np.where(accept[:, None], eta_prop, state.eta)
        n_acc = int(accept.sum())
    else:
        n_acc = 0
        for i in range(n):
            fit_cur_i = np.einsum("k,jk->j", state.eta[i], state.loadings)
            fit_prop_i = np.einsum("k,jk->j", eta_prop[i], state.loadings)
            log_a = float(
                _eta_log_accept_row(state, M, P, i, eta_prop[i], fit_cur_i,
                                    fit_prop_i, K)
            )
            if np.log(u_acc[i]) < log_a:
                state.eta[i] = eta_prop[i]
                n_acc += 1
    if stats is not None:
        stats.record("eta", n_acc, n)


def _eta_log_accept(state, M, P, eta_prop, fit_cur, fit_prop, K):
    res_cur = K.row_sq_resid(state.y, fit_cur, state.mu, state.sigma_inv)
    res_prop = K.row_sq_resid(state.y, fit_prop, state.mu, state.sigma_inv)
    target_diff = -0.5 * (
        np.einsum("ik,ik->i", eta_prop, eta_prop)
        - np.einsum("ik,ik->i", state.eta, state.eta)
        + res_prop
        - res_cur
    )
    log_q = -0.5 * (_quad(state.eta, M, P) - _quad(eta_prop, M, P))
    return log_q + target_diff


def _eta_log_accept_row(state, M, P, i, eta_i, fit_cur_i, fit_prop_i, K):
    y_i = state.y[i][None, :]
    res_cur = K.row_sq_resid(y_i, fit_cur_i[None, :], state.mu, state.sigma_inv)[0]
    res_prop = K.row_sq_resid(y_i, fit_prop_i[None, :], state.mu, state.sigma_inv)[0]
    target_diff = -0.5 * (
        np.dot(eta_i, eta_i) - np.dot(state.eta[i], state.eta[i]) + res_prop - res_cur
    )
    log_q = -0.5 * (_quad(state.eta[i], M[i], P) - _quad(eta_i, M[i], P))
    return log_q + target_diff


def update_phi(shrink, state, hyper, rng):
    """Gibbs draw of every local shrinkage parameter."""
    p, k = shrink.phi.shape
    if k == 0:
        return
    g = rng.standard_gamma(0.5 + hyper.kappa1, size=(p, k))
    rate = 0.5 * shrink.tau * state.loadings**2 + hyper.kappa2
    shrink.phi = g / rate


def update_delta(shrink, state, hyper, rng, kernels=None):
    """Sequential Gibbs sweep of the column-shrinkage multipliers.

    Each conditional uses the freshest values of the other entries through
    the leave-one-out products tau_l^(h); entries past the first are drawn
    from a gamma restricted to [1, inf).
    """
    K = kernels if kernels is not None else get_kernels()[0]
    k = shrink.delta.shape[0]
    if k == 0:
        return
    p = shrink.phi.shape[0]
    s = np.einsum("jk,jk->k", shrink.phi, state.loadings**2)
    for h in range(k):
        d_mod = shrink.delta.copy()
        d_mod[h] = 1.0
        tau_loo = np.cumprod(d_mod)
        if h == 0:
            shape = hyper.a1 + 0.5 * p * k
            rate = 1.0 + 0.5 * np.dot(tau_loo, s)
            shrink.delta[0] = rng.standard_gamma(shape) / rate
        else:
            shape = hyper.a2 + 0.5 * p * (k - h)
            rate = 1.0 + 0.5 * np.dot(tau_loo[h:], s[h:])
            u = rng.random()
            shrink.delta[h] = float(K.tgamma_lb1_transform(np.array(u), shape, rate))


def update_alpha(state, ds, rng, n_obs_above_lod=None):
    """Gibbs draw of the probability that an above-detection value goes
    missing: Beta(#missing designated above + 1, #observed above + 1)."""
    if n_obs_above_lod is None:
        n_obs_above_lod = int((ds.values[ds.mask] > ds.lod).sum())
    n_missing_above = int((state.z == 0).sum())
    a = rng.beta(n_missing_above + 1, n_obs_above_lod + 1)
    state.alpha = float(np.clip(a, 1e-300, 1.0 - 1e-16))


def sweep(state, shrink, ds, hyper, rng, *, config=None, kernels=None, stats=None,
          n_obs_above_lod=None):
    """One full iteration over all parameter blocks plus imputation.

    Block order is fixed: mu, loadings rows, precisions, factor scores,
    local shrinkage, column shrinkage, missingness probability, imputed
    values. Deterministic given the generator state.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    cfg = config if config is not None else SamplerConfig()
    batched = cfg.parallel_variables
    update_mu(state, ds, hyper, rng, mode=cfg.mu_update_mode, kernels=K, stats=stats)
    _update_lambda_block(state, shrink, ds, rng, K, stats=stats, batched=batched)
    _update_sigma_block(state, ds, hyper, rng, K, stats=stats, batched=batched)
    update_eta(state, ds, rng, kernels=K, stats=stats, batched=batched)
    update_phi(shrink, state, hyper, rng)
    update_delta(shrink, state, hyper, rng, kernels=K)
    update_alpha(state, ds, rng, n_obs_above_lod=n_obs_above_lod)
    draw_missing_cells(state, ds.lod, rng, kernels=K)
    return state, shrink


# ---------------------------------------------------------------------------
# initialisation and the chain driver

def _resolve_hyper(hyper, col_means, has_missing, mu_init):
    mu_prior_mean = hyper.mu_prior_mean
    if mu_prior_mean is None:
        mu_prior_mean = mu_init - 1.0
    mu_prior_precision = hyper.mu_prior_precision
    if mu_prior_precision is None:
        mu_prior_precision = np.where(
            has_missing, 1.0 / np.maximum(0.05 * col_means, 1e-12), 1.0
        )
    return Hyperparameters(
        a_sigma=hyper.a_sigma,
        b_sigma=hyper.b_sigma,
        kappa1=hyper.kappa1,
        kappa2=hyper.kappa2,
        a1=hyper.a1,
        a2=hyper.a2,
        k_star=hyper.k_star,
        mu_prior_mean=np.asarray(mu_prior_mean, dtype=np.float64),
        mu_prior_precision=np.asarray(mu_prior_precision, dtype=np.float64),
    )


def pca_loadings(y, k):
    """First k principal-component loadings of a complete matrix, scaled so
    that the loadings' outer product reproduces the top-k covariance."""
    n = y.shape[0]
    yc = y - y.mean(axis=0)
    _, s, vt = np.linalg.svd(yc, full_matrices=False)
    if k > s.shape[0]:
        raise ValueError(f"k_star={k} exceeds the available rank {s.shape[0]}")
    scale = s[:k] / np.sqrt(max(n - 1, 1))
    return vt[:k].T * scale


def initialize(ds: Dataset, hyper: Hyperparameters, rng, *, kernels=None,
               sigma2_init=None, y_init=None):
    """Build the starting state.

    Missing entries start at the absolute values of an iterative low-rank
    SVD completion (column means when k_star = 0); loadings at the principal
    component loadings of the completed matrix; factor scores standard
    normal; precisions from the prior unless ``sigma2_init`` supplies
    reference variances; the mean at column means minus the factor fit's
    column means. Unset prior location/precision for the mean are resolved
    data-dependently.
    """
    K = kernels if kernels is not None else get_kernels()[0]
    k = hyper.k_star
    n, p = ds.values.shape

    if y_init is None:
        y0 = _initial_completion(ds.values, ds.mask, k)
    else:
        y0 = np.array(y_init, dtype=np.float64)
    miss = ~ds.mask
    y0[miss] = np.abs(y0[miss])

    loadings = pca_loadings(y0, k)
    eta = rng.standard_normal((n, k))
    if sigma2_init is not None:
        sigma2_init = np.asarray(sigma2_init, dtype=np.float64)
        if np.any(sigma2_init <= 0):
            raise ValueError("sigma2_init entries must be positive")
        sigma_inv = 1.0 / sigma2_init
    else:
        sigma_inv = rng.standard_gamma(hyper.a_sigma, size=p) / hyper.b_sigma

    col_means = y0.mean(axis=0)
    fit = _factor_fit(eta, loadings)
    mu = col_means - fit.mean(axis=0)
    hyper = _resolve_hyper(hyper, col_means, miss.any(axis=0), mu)

    alpha = float(np.clip(rng.random(), 1e-300, 1.0 - 1e-16))
    phi = rng.standard_gamma(hyper.kappa1, size=(p, k)) / hyper.kappa2
    delta = np.empty(k)
    if k > 0:
        delta[0] = rng.standard_gamma(hyper.a1)
        for h in range(1, k):
            u = rng.random()
            delta[h] = float(K.tgamma_lb1_transform(np.array(u), hyper.a2, 1.0))

    rows, cols = np.nonzero(miss)
    z = (y0[rows, cols] < ds.lod).astype(np.int8)
    state = ModelState(
        mu=mu, loadings=loadings, sigma_inv=sigma_inv, eta=eta, alpha=alpha,
        y=y0, z=z, missing_rows=rows, missing_cols=cols,
    )
    shrink = ShrinkageState(phi=phi, delta=delta)
    return state, shrink, hyper


def _initial_completion(values, mask, k):
    from .baselines import _svd_complete

    if k == 0 or not np.any(~mask):
        y0 = np.where(mask, values, 0.0)
        col_means = np.where(
            mask.any(axis=0), np.nansum(np.where(mask, values, 0.0), axis=0), 0.0
        ) / np.maximum(mask.sum(axis=0), 1)
        return np.where(mask, values, col_means[None, :])
    rank = min(k, *values.shape)
    y0, _ = _svd_complete(values, mask, rank)
    return y0


def run_chain(ds: Dataset, hyper: Hyperparameters, config: SamplerConfig, *,
              backend=None, sigma2_init=None, y_init=None) -> ChainOutput:
    """Run the sampler and return thinned post-burn-in draws.

    Retains iteration m when m > burn_in and (m - burn_in) is a multiple of
    ``thin``; exactly (n_iters - burn_in) // thin records. The whole run is
    reproducible from (config, backend): one generator seeded by
    ``config.seed`` drives every draw in a fixed order.
    """
    from .distributions import RngStream

    K, backend_name = get_kernels(backend)
    rng = RngStream(config.seed).generator
    state, shrink, hyper = initialize(
        ds, hyper, rng, kernels=K, sigma2_init=sigma2_init, y_init=y_init
    )
    stats = BlockAcceptanceStats()
    n_obs_above = int((ds.values[ds.mask] > ds.lod).sum())

    t_total = config.n_retained
    n_miss = ds.n_missing
    p, k = state.loadings.shape
    out = ChainOutput(
        mu_draws=np.empty((t_total, p)),
        loadings_draws=np.empty((t_total, p, k)),
        sigma_inv_draws=np.empty((t_total, p)),
        alpha_draws=np.empty(t_total),
        z_draws=np.empty((t_total, n_miss), dtype=np.int8),
        y_draws=np.empty((t_total, n_miss)),
        missing_rows=state.missing_rows.copy(),
        missing_cols=state.missing_cols.copy(),
        acceptance={},
        config=config,
        backend=backend_name,
    )
    t = 0
    for m in range(1, config.n_iters + 1):
        sweep(state, shrink, ds, hyper, rng, config=config, kernels=K, stats=stats,
              n_obs_above_lod=n_obs_above)
        if m > config.burn_in and (m - config.burn_in) % config.thin == 0:
            out.mu_draws[t] = state.mu
            out.loadings_draws[t] = state.loadings
            out.sigma_inv_draws[t] = state.sigma_inv
            out.alpha_draws[t] = state.alpha
            out.z_draws[t] = state.z
            out.y_draws[t] = state.imputed
            t += 1
    assert t == t_total
    out.acceptance = stats.as_dict()
    out.extras["degenerate_rejections"] = stats.degenerate_rejections
    out.extras["resolved_hyper"] = hyper
    return out
