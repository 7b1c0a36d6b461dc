"""Latent-space regularizers and the MI / TC / PD diagnostic decomposition.

Training objectives (Gaussian KL, MMD) are graph ops so they backpropagate;
the aggregate-posterior entropy estimator and the KL decomposition are
numpy-only diagnostics computed on detached batches.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from . import config as cfg
from . import engine

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_kl(dist):
    """KL(q || N(0, I)) per example, closed form. Returns a Node [B]."""
    mean = engine.as_node(dist.mean)
    logvar = engine.as_node(dist.logvar)
    terms = engine.exp(logvar) + mean * mean - 1.0 - logvar
    return engine.sum(terms, axis=-1) * 0.5


def gaussian_kl_np(mean, logvar):
    return 0.5 * np.sum(np.exp(logvar) + mean**2 - 1.0 - logvar, axis=-1)


def mmd_rbf(zq, zp, bandwidths=None):
    """Biased (V-statistic) MMD estimate with RBF kernels, diagonal included.

    Default bandwidth follows the common MMD-VAE convention tied to the
    latent dimension: k(x, y) = exp(-mean((x - y)^2) / D), i.e. a squared
    distance divisor of D^2. Differentiable w.r.t. both sample sets.
    """
    zq, zp = engine.as_node(zq), engine.as_node(zp)
    n, d = zq.value.shape
    m, d2 = zp.value.shape
    if d != d2:
        raise ValueError(f"sample dims differ: {d} vs {d2}")
    if n < 2 or m < 2:
        raise ValueError("mmd_rbf needs at least 2 samples on each side")
    if bandwidths is None:
        bandwidths = (float(d * d),)

    def kmean(a, b):
        na, nb = a.value.shape[0], b.value.shape[0]
        diff = engine.reshape(a, (na, 1, d)) - engine.reshape(b, (1, nb, d))
        sq = engine.sum(diff * diff, axis=2)
        total = None
        for bw in bandwidths:
            k = engine.exp(sq * (-1.0 / bw))
            total = k if total is None else total + k
        return engine.mean(total * (1.0 / len(bandwidths)))

    return kmean(zq, zq) + kmean(zp, zp) - 2.0 * kmean(zq, zp)


def _pairwise_log_q(z, means, logvars):
    """[m, m', j] log-density of z_m under the m'-th posterior, per dimension."""
    d = z[:, None, :] - means[None, :, :]
    lv = logvars[None, :, :]
    return -0.5 * (d * d * np.exp(-lv) + lv + LOG_2PI)


def _marginal_from_pairwise(logq, n_data):
    """Importance-sampled E_q(z)[log q(z)] from a [Mb, Mb] log-density matrix.

    Off-diagonal terms are reweighted by (N-1)/(Mb-1); at Mb = N the weight
    is 1 and the estimator coincides with exact enumeration.
    """
    mb = logq.shape[0]
    if mb < 2:
        raise ValueError("marginal estimator needs a batch of at least 2")
    if n_data < mb:
        raise ValueError(f"dataset size {n_data} smaller than batch {mb}")
    adj = logq + math.log((n_data - 1) / (mb - 1))
    np.fill_diagonal(adj, np.diag(logq))
    per_example = np_logsumexp(adj, axis=1) - math.log(n_data)
    return float(per_example.mean())


def minibatch_marginal_log_density(z, means, logvars, n_data):
    """Estimate E_q(z)[log q(z)] from one batch of codes and their posteriors."""
    logq = _pairwise_log_q(z, means, logvars).sum(axis=2)
    return _marginal_from_pairwise(logq, n_data)


@dataclass
class KlDecomposition:
    mi: float
    tc: float
    pd: float
    plugin_kl: float  # mean[log q(z|x) - log p(z)] from the same samples
    batch_size: int   # estimator bias shrinks with batch size; report it

    def to_dict(self):
        return dict(self.__dict__)


def decompose_kl(z, means, logvars, n_data):
    """Split the plug-in KL estimate into mutual information, total
    correlation, and dimension-wise divergence from the N(0, I) prior.

    The three terms telescope: mi + tc + pd == plugin_kl up to rounding.
    """
    z, means, logvars = (np.asarray(a, dtype=np.float64) for a in (z, means, logvars))
    per_dim = _pairwise_log_q(z, means, logvars)
    full = per_dim.sum(axis=2)
    mb, d = z.shape

    log_q_cond = float(np.diag(full).mean())
    marg_full = _marginal_from_pairwise(full, n_data)
    marg_dims = sum(_marginal_from_pairwise(per_dim[:, :, j], n_data) for j in range(d))
    log_prior = float(np.mean(-0.5 * (z * z + LOG_2PI).sum(axis=1)))

    return KlDecomposition(
        mi=log_q_cond - marg_full,
        tc=marg_full - marg_dims,
        pd=marg_dims - log_prior,
        plugin_kl=log_q_cond - log_prior,
        batch_size=mb,
    )


def stage1_regularizer(reg, dist, z, rng):
    """Training regularizer: mean KL for "vae-kl", scaled MMD against fresh
    prior draws for "infovae-mmd". Returns a scalar Node."""
    if reg.kind == cfg.VAE_KL:
        return engine.mean(gaussian_kl(dist))
    if reg.kind == cfg.INFOVAE_MMD:
        z = engine.as_node(z)
        n, d = z.value.shape
        prior = rng.standard_normal((n, d)).astype(z.value.dtype)
        return mmd_rbf(z, engine.constant(prior)) * reg.coefficient
    if reg.kind == cfg.INFO_BETA_TCVAE:
        raise ValueError(
            "info-beta-tcvae is a diagnostic objective only; use decompose_kl")
    raise ValueError(f"unknown regularizer kind {reg.kind!r}")
