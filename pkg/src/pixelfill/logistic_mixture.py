"""Discretized logistic mixture over 8-bit pixel intensities.

Intensities live on a 256-level grid in value space [-1, 1] with half-bin
1/255; edge bins integrate to +-infinity. Color channels share one mixture
indicator per pixel, with the green/blue means shifted linearly by the
previously observed (or previously sampled) channels.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import engine
from .engine import Node

HALF_BIN = 1.0 / 255.0
N_LEVELS = 256
LOG_SCALE_MIN = -7.0
_CDF_DELTA_FLOOR = 1e-5  # below this, fall back to midpoint pdf * bin width


def n_coupling(channels):
    return channels * (channels - 1) // 2


def param_channels(channels, n_mix):
    """Network head width needed for a given image channel count."""
    return n_mix * (1 + 2 * channels + n_coupling(channels))


def intensity_to_value(intensity):
    return 2.0 * np.asarray(intensity) / 255.0 - 1.0


def value_to_intensity(value):
    return np.rint((np.asarray(value) + 1.0) * 127.5).astype(np.int64)


@dataclass
class MixtureParams:
    """Per-pixel mixture parameters; fields are Nodes or arrays, shape-aligned.

    logits: [..., K]; means/log_scales: [..., K, C]; coeffs: [..., K, nc]
    with coefficient order (G|R), (B|R), (B|G). Log-weights are normalized
    lazily (log-softmax inside log_prob).
    """

    logits: object
    means: object
    log_scales: object
    coeffs: object = None

    @property
    def n_mix(self):
        return self.logits.shape[-1]

    @property
    def channels(self):
        return self.means.shape[-1]

    def detach(self):
        f = lambda v: v.value if isinstance(v, Node) else np.asarray(v)
        return MixtureParams(
            f(self.logits), f(self.means), f(self.log_scales),
            None if self.coeffs is None else f(self.coeffs))


def from_network_output(y, channels, n_mix):
    """Slice a [..., param_channels] head output into MixtureParams.

    Coupling coefficients pass through tanh so they stay in [-1, 1].
    """
    nc = n_coupling(channels)
    need = param_channels(channels, n_mix)
    if y.shape[-1] != need:
        raise ValueError(f"mixture head has {y.shape[-1]} channels, expected {need}")
    lead = y.shape[:-1]
    k = n_mix
    logits = y[..., :k]
    means = engine.reshape(y[..., k : k + k * channels], lead + (k, channels))
    log_scales = engine.reshape(
        y[..., k + k * channels : k + 2 * k * channels], lead + (k, channels))
    coeffs = None
    if nc:
        coeffs = engine.tanh(engine.reshape(y[..., k + 2 * k * channels :], lead + (k, nc)))
    return MixtureParams(logits, means, log_scales, coeffs)


def _coupled_means(params, x_values):
    """Means with channel coupling applied from observed earlier channels."""
    means = engine.as_node(params.means)
    C = params.channels
    if C == 1 or params.coeffs is None:
        return means
    if C != 3:
        raise ValueError(f"channel coupling implemented for C in (1, 3), got {C}")
    coeffs = engine.as_node(params.coeffs)
    x0 = engine.constant(x_values[..., None, 0:1])
    x1 = engine.constant(x_values[..., None, 1:2])
    m0 = means[..., 0:1]
    m1 = means[..., 1:2] + coeffs[..., 0:1] * x0
    m2 = means[..., 2:3] + coeffs[..., 1:2] * x0 + coeffs[..., 2:3] * x1
    return engine.concat([m0, m1, m2], axis=-1)


def log_prob_values(params, x_values):
    """Per-pixel log-probability of on-grid values x_values [..., C].

    Differentiable w.r.t. all mixture parameters; numerically stable via
    log-sum-exp and tail-branch selection as in the standard discretized
    logistic mixture formulation.
    """
    x_values = np.asarray(x_values)
    means = _coupled_means(params, x_values)
    log_scales = engine.maximum(engine.as_node(params.log_scales), LOG_SCALE_MIN)
    xb = engine.constant(x_values[..., None, :])  # [..., 1, C]
    centered = xb - means
    inv_s = engine.exp(-log_scales)
    plus_in = inv_s * (centered + HALF_BIN)
    min_in = inv_s * (centered - HALF_BIN)
    log_cdf_plus = plus_in - engine.softplus(plus_in)
    log_one_minus_cdf_min = -engine.softplus(min_in)
    cdf_delta = engine.sigmoid(plus_in) - engine.sigmoid(min_in)
    mid_in = inv_s * centered
    log_pdf_mid = mid_in - log_scales - 2.0 * engine.softplus(mid_in)

    interior = engine.where(
        cdf_delta.value > _CDF_DELTA_FLOOR,
        engine.log(engine.maximum(cdf_delta, 1e-12)),
        log_pdf_mid + float(np.log(2.0 * HALF_BIN)),
    )
    xv = x_values[..., None, :]
    per_channel = engine.where(
        xv < -0.999, log_cdf_plus,
        engine.where(xv > 0.999, log_one_minus_cdf_min, interior))

    per_mix = engine.sum(per_channel, axis=-1)  # [..., K]
    weighted = per_mix + engine.log_softmax(engine.as_node(params.logits), axis=-1)
    return engine.logsumexp(weighted, axis=-1)


def log_prob(params, intensities):
    """log_prob_values on integer intensities, validating the [0, 255] range."""
    intensities = np.asarray(intensities)
    if intensities.min() < 0 or intensities.max() > 255:
        raise ValueError(
            f"intensity out of range [0, 255]: {intensities.min()}..{intensities.max()}")
    return log_prob_values(params, intensity_to_value(intensities))


def bin_masses(params):
    """Exact probability of every intensity level, shape [..., 256]. C=1 only."""
    p = params.detach()
    if p.channels != 1:
        raise ValueError("bin_masses enumerates single-channel grids only")
    grid = intensity_to_value(np.arange(N_LEVELS))  # [256]
    lead = p.logits.shape[:-1]
    values = grid.reshape((N_LEVELS,) + (1,) * len(lead) + (1,))
    values = np.broadcast_to(values, (N_LEVELS,) + lead + (1,))
    lp = log_prob_values(p, values)
    out = np.exp(lp.value)  # [256, ...]
    return np.moveaxis(out, 0, -1)


def sample_continuous(params, rng, truncated=False):
    """Pre-quantization logistic draws and the chosen component index.

    Component selection is categorical over the logits (Gumbel trick); each
    channel draws via inverse CDF, truncated draws restrict the logistic to
    one scale-width around the (coupling-shifted) component mean. Later
    channels couple on the already-quantized earlier channels, so replaying
    a stored image reproduces the recorded likelihoods exactly.
    """
    p = params.detach()
    logits = p.logits
    u = rng.random(logits.shape)
    comp = np.argmax(logits - np.log(-np.log(np.clip(u, 1e-12, 1 - 1e-12))), axis=-1)
    sel = comp[..., None, None]
    means = np.take_along_axis(p.means, sel, axis=-2)[..., 0, :]
    log_s = np.take_along_axis(p.log_scales, sel, axis=-2)[..., 0, :]
    # the LOG_SCALE_MIN floor is a training guard; sampling honors tiny scales
    scales = np.exp(log_s)
    coeffs = None
    if p.coeffs is not None:
        coeffs = np.take_along_axis(p.coeffs, comp[..., None, None], axis=-2)[..., 0, :]

    if truncated:
        lo, hi = expit(-1.0), expit(1.0)
    else:
        lo, hi = 1e-5, 1.0 - 1e-5
    C = p.channels
    draws = rng.uniform(lo, hi, size=means.shape)
    eps = np.log(draws) - np.log1p(-draws)

    cont = np.empty_like(means)
    quant = np.empty_like(means)
    for c in range(C):
        mu = means[..., c].copy()
        if c == 1:
            mu += coeffs[..., 0] * quant[..., 0]
        elif c == 2:
            mu += coeffs[..., 1] * quant[..., 0] + coeffs[..., 2] * quant[..., 1]
        cont[..., c] = mu + scales[..., c] * eps[..., c]
        quant[..., c] = intensity_to_value(value_to_intensity(np.clip(cont[..., c], -1.0, 1.0)))
    return cont, comp


def sample(params, rng, truncated=False):
    """Draw integer intensities [..., C] from the mixture."""
    cont, _ = sample_continuous(params, rng, truncated=truncated)
    return value_to_intensity(np.clip(cont, -1.0, 1.0))
