"""Context encoder and semantic feature decoder.

The encoder consumes a masked image (target pixels filled with uniform
noise) concatenated with the mask as one extra channel, and produces a
diagonal-Gaussian posterior over the latent code. The decoder maps a code
to full-resolution feature maps that condition the autoregressive stacks.
"""

from dataclasses import dataclass

import numpy as np

from . import engine, nn
from .engine import EngineError

LOGVAR_MIN, LOGVAR_MAX = -30.0, 10.0


@dataclass
class LatentDist:
    """Diagonal Gaussian q(z | context); fields are Nodes or arrays [B, D]."""

    mean: object
    logvar: object

    def detach(self):
        f = lambda v: v.value if isinstance(v, engine.Node) else np.asarray(v)
        return LatentDist(f(self.mean), f(self.logvar))


def prepare_context_input(x, mask, rng):
    """Fill target pixels with U(-1, 1) noise and append the mask channel.

    x: [..., M, M, C] in value space, mask: [..., M, M] with 1 = observed.
    """
    x = np.asarray(x)
    m = np.asarray(mask)[..., None].astype(x.dtype)
    noise = rng.uniform(-1.0, 1.0, size=x.shape).astype(x.dtype)
    filled = x * m + noise * (1.0 - m)
    return np.concatenate([filled, m], axis=-1)


class ContextEncoder(nn.Module):
    def __init__(self, rng, cfg):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        cin = cfg.channels + 1
        self.stack = []
        for i, spec in enumerate(cfg.encoder_convs):
            conv = self.add_child(f"conv{i}", nn.Conv2d(
                rng, cin, spec.channels, (spec.kernel, spec.kernel),
                stride=spec.stride, padding=spec.padding, dtype=dtype))
            bn = self.add_child(f"bn{i}", nn.BatchNorm(spec.channels, dtype=dtype))
            self.stack.append((conv, bn))
            cin = spec.channels
        self.fc_mean = self.add_child("fc_mean", nn.Dense(rng, cin, cfg.latent_dim, dtype=dtype))
        self.bn_mean = self.add_child("bn_mean", nn.BatchNorm(cfg.latent_dim, dtype=dtype))
        self.fc_logvar = self.add_child("fc_logvar", nn.Dense(rng, cin, cfg.latent_dim, dtype=dtype))
        self.bn_logvar = self.add_child("bn_logvar", nn.BatchNorm(cfg.latent_dim, dtype=dtype))
        self.last_spatial = []

    def forward(self, prepared, train=False):
        h = engine.as_node(prepared)
        B, H, W, C = h.value.shape
        M = self.cfg.image_size
        if (H, W) != (M, M):
            raise EngineError(f"encoder expects {M}x{M} input, got {H}x{W}")
        if C != self.cfg.channels + 1:
            raise EngineError(f"encoder expects {self.cfg.channels + 1} channels, got {C}")
        self.last_spatial = [H]
        for conv, bn in self.stack:
            h = engine.elu(bn.forward(conv.forward(h), train))
            self.last_spatial.append(h.value.shape[1])
        flat = engine.reshape(h, (B, int(np.prod(h.value.shape[1:]))))
        mean = self.bn_mean.forward(self.fc_mean.forward(flat), train)
        logvar = self.bn_logvar.forward(self.fc_logvar.forward(flat), train)
        return LatentDist(mean, engine.clip(logvar, LOGVAR_MIN, LOGVAR_MAX))


def sample_latent(dist, rng):
    """Reparameterized draw z = mean + exp(logvar/2) * eps."""
    mean = engine.as_node(dist.mean)
    logvar = engine.clip(engine.as_node(dist.logvar), LOGVAR_MIN, LOGVAR_MAX)
    eps = rng.standard_normal(mean.value.shape).astype(mean.value.dtype)
    return mean + engine.exp(logvar * 0.5) * engine.constant(eps)


class FeatureDecoder(nn.Module):
    def __init__(self, rng, cfg):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        self.fc = self.add_child("fc", nn.Dense(rng, cfg.latent_dim, cfg.decoder_fc, dtype=dtype))
        self.bn_fc = self.add_child("bn_fc", nn.BatchNorm(cfg.decoder_fc, dtype=dtype))
        self.stack = []
        cin = cfg.decoder_fc
        for i, spec in enumerate(cfg.decoder_deconvs):
            deconv = self.add_child(f"deconv{i}", nn.TransposedConv2d(
                rng, cin, spec.channels, (spec.kernel, spec.kernel),
                stride=spec.stride, padding=spec.padding, dtype=dtype))
            bn = self.add_child(f"dbn{i}", nn.BatchNorm(spec.channels, dtype=dtype))
            self.stack.append((deconv, bn))
            cin = spec.channels
        self.last_spatial = []

    def forward(self, z, train=False):
        z = engine.as_node(z)
        if z.value.ndim != 2 or z.value.shape[1] != self.cfg.latent_dim:
            raise EngineError(
                f"decoder expects [B, {self.cfg.latent_dim}] codes, got {z.value.shape}")
        B = z.value.shape[0]
        h = engine.elu(self.bn_fc.forward(self.fc.forward(z), train))
        h = engine.reshape(h, (B, 1, 1, self.cfg.decoder_fc))
        self.last_spatial = [1]
        for deconv, bn in self.stack:
            h = engine.elu(bn.forward(deconv.forward(h), train))
            self.last_spatial.append(h.value.shape[1])
        return h
