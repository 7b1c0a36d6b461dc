"""Forward and reverse autoregressive stacks and their combination.

Every gated layer computes sigma(Wf * h + U * Yr + V * Yz) where Wf is a
masked filter, U and V are unmasked 1x1 injections of the reverse-stream
features and the semantic feature maps, and sigma is the tanh/sigmoid gate
pair. The reverse stack sees only masked context (plus the mask channel), so
target values can never leak into its features.
"""

import logging

import numpy as np

from . import engine, logistic_mixture as dlm, nn
from .masks import FORWARD, MASK_A, MASK_B, REVERSE, build_mask

log = logging.getLogger(__name__)


class GatedConvLayer(nn.Module):
    """Masked conv to 2F channels, additive injections, gate, optional residual."""

    def __init__(self, rng, cin, filters, kernel, mask_type, direction,
                 cr=None, cz=None, dropout=0.0, residual=True, dtype=np.float64):
        super().__init__()
        kh, kw = kernel
        mask = build_mask(kh, kw, cin, 2 * filters, mask_type, direction=direction)
        self.conv = self.add_child("conv", nn.Conv2d(
            rng, cin, 2 * filters, kernel, stride=1, padding=engine.SAME,
            mask=mask, dtype=dtype))
        self.u = None
        if cr is not None:
            self.u = self.add_child("u", nn.Conv2d(rng, cr, 2 * filters, (1, 1), dtype=dtype))
        self.v = None
        if cz is not None:
            self.v = self.add_child("v", nn.Conv2d(rng, cz, 2 * filters, (1, 1), dtype=dtype))
        self.proj = None
        if residual:
            self.proj = self.add_child("proj", nn.Conv2d(rng, filters, filters, (1, 1), dtype=dtype))
        self.filters = filters
        self.dropout = dropout

    def forward(self, h, yr=None, yz=None, train=False, rng=None):
        pre = self.conv.forward(h)
        if self.u is not None and yr is not None:
            pre = pre + self.u.forward(yr)
        if self.v is not None and yz is not None:
            pre = pre + self.v.forward(yz)
        a, g = engine.split(pre, 2, axis=-1)
        y = engine.tanh(a) * engine.sigmoid(g)
        if train and self.dropout > 0.0:
            y = engine.dropout(y, self.dropout, rng, train)
        if self.proj is None:
            return y
        return h + self.proj.forward(y)


class ForwardStack(nn.Module):
    """Causal stack emitting per-pixel mixture parameters.

    with_reverse controls whether U injection filters exist at all; the
    stage-1 decoder never has them, the bidirectional stage-2 model does.
    """

    def __init__(self, rng, cfg, with_reverse, dropout=0.0):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        F = cfg.nr_filters
        cr = cfg.reverse_channels if with_reverse else None
        cz = cfg.feature_channels
        self.with_reverse = with_reverse
        self.first = self.add_child("first", GatedConvLayer(
            rng, cfg.channels, F, cfg.first_kernel, MASK_A, FORWARD,
            cr=cr, cz=cz, dropout=dropout, residual=False, dtype=dtype))
        self.blocks = []
        for i in range(cfg.nr_blocks):
            self.blocks.append(self.add_child(f"block{i}", GatedConvLayer(
                rng, F, F, cfg.block_kernel, MASK_B, FORWARD,
                cr=cr, cz=cz, dropout=dropout, residual=True, dtype=dtype)))
        out_channels = dlm.param_channels(cfg.channels, cfg.n_mix)
        self.head = self.add_child("head", nn.Conv2d(rng, F, out_channels, (1, 1), dtype=dtype))

    def forward(self, x, yr=None, yz=None, train=False, rng=None):
        """x: [B, M, M, C] value-space image (teacher forcing over targets)."""
        if self.with_reverse and yr is None:
            log.debug("forward stack built with reverse injections but yr is None")
        h = self.first.forward(engine.as_node(x), yr, yz, train, rng)
        for block in self.blocks:
            h = block.forward(h, yr, yz, train, rng)
        return self.head.forward(engine.elu(h))

    def mixture_params(self, x, yr=None, yz=None, train=False, rng=None):
        out = self.forward(x, yr, yz, train, rng)
        return dlm.from_network_output(out, self.cfg.channels, self.cfg.n_mix)


class ReverseStack(nn.Module):
    """Anticausal stack over masked context; features at (i, j) depend only
    on context pixels strictly after (i, j) in forward raster order."""

    def __init__(self, rng, cfg, dropout=0.0):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        F = cfg.nr_filters
        self.first = self.add_child("first", GatedConvLayer(
            rng, cfg.channels + 1, F, cfg.first_kernel, MASK_A, REVERSE,
            dropout=dropout, residual=False, dtype=dtype))
        self.blocks = []
        for i in range(cfg.nr_blocks):
            self.blocks.append(self.add_child(f"block{i}", GatedConvLayer(
                rng, F, F, cfg.block_kernel, MASK_B, REVERSE,
                dropout=dropout, residual=True, dtype=dtype)))
        self.head = self.add_child("head", nn.Conv2d(
            rng, F, cfg.reverse_channels, (1, 1), dtype=dtype))

    def forward(self, x_masked, mask, train=False, rng=None):
        """x_masked: [B, M, M, C] with target pixels zeroed; mask: [B, M, M] or [M, M]."""
        x_masked = np.asarray(x_masked)
        m = np.broadcast_to(np.asarray(mask), x_masked.shape[:3])
        inp = engine.constant(
            np.concatenate([x_masked, m[..., None].astype(x_masked.dtype)], axis=-1))
        h = self.first.forward(inp, None, None, train, rng)
        for block in self.blocks:
            h = block.forward(h, None, None, train, rng)
        return self.head.forward(engine.elu(h))


def stage2_nll(params, x_values, mask):
    """Mean per-image negative log-likelihood summed over target pixels only.

    Context pixels are excluded from the sum; an all-context batch yields 0
    (logged as a warning since the objective is then vacuous).
    """
    lp = dlm.log_prob_values(params, np.asarray(x_values))
    target = 1.0 - np.asarray(mask, dtype=lp.value.dtype)
    if target.sum() == 0:
        log.warning("stage2_nll: empty target region, loss is identically 0")
    B = lp.value.shape[0]
    return engine.sum(lp * engine.constant(target)) * (-1.0 / B)


def full_nll(params, x_values):
    """Mean per-image negative log-likelihood over every pixel (stage-1 loss)."""
    lp = dlm.log_prob_values(params, np.asarray(x_values))
    B = lp.value.shape[0]
    return engine.sum(lp) * (-1.0 / B)


def sample_target(stack, x_values, mask, yr, yz, rng, truncated=True):
    """Complete target pixels in forward raster order.

    x_values: [B, M, M, C] with context pixel values in place (target entries
    are ignored and overwritten); mask: [M, M] shared across the batch.
    Returns (completed [B, M, M, C], per-pixel log-probs [B, M, M]); context
    pixels are copied verbatim and carry log-prob 0.
    """
    x = np.array(x_values, copy=True)
    B, M, _, C = x.shape
    mask = np.asarray(mask)
    x *= mask[None, :, :, None].astype(x.dtype)  # zero target slots before the scan
    logps = np.zeros((B, M, M), dtype=np.float64)
    with engine.no_grad():
        for i in range(M):
            for j in range(M):
                if mask[i, j]:
                    continue
                head = stack.forward(x, yr, yz, train=False).value
                pixel = dlm.from_network_output(
                    engine.constant(head[:, i, j, :]), C, stack.cfg.n_mix)
                intensities = dlm.sample(pixel, rng, truncated=truncated)
                values = dlm.intensity_to_value(intensities).astype(x.dtype)
                x[:, i, j, :] = values
                logps[:, i, j] = dlm.log_prob_values(pixel, values).value
    return x, logps
