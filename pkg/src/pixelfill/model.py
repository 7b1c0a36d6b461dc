"""The complete inpainting model and its inference-time entry points.

One container holds all four networks regardless of training stage; stage-1
training simply never evaluates the reverse stack or the U injections, and
checkpoints carry a stage marker. All inference helpers run in infer mode
(frozen batch-norm moments, no dropout) so outputs are deterministic given
the request seed.
"""

import numpy as np

from . import engine, logistic_mixture as dlm
from . import nn
from .pixelcnn import ForwardStack, ReverseStack, sample_target
from .vae import ContextEncoder, FeatureDecoder, prepare_context_input, sample_latent


class InpaintModel(nn.Module):
    def __init__(self, rng, cfg, dropout=0.0):
        super().__init__()
        self.cfg = cfg
        self.encoder = self.add_child("encoder", ContextEncoder(rng, cfg))
        self.decoder = self.add_child("decoder", FeatureDecoder(rng, cfg))
        self.fstack = self.add_child("fstack", ForwardStack(rng, cfg, with_reverse=True, dropout=dropout))
        self.rstack = self.add_child("rstack", ReverseStack(rng, cfg, dropout=dropout))

    def encode(self, x_values, mask, rng, train=False):
        prep = prepare_context_input(
            np.asarray(x_values, dtype=self.cfg.np_dtype), mask, rng)
        return self.encoder.forward(prep, train=train)

    def features(self, z, train=False):
        return self.decoder.forward(z, train=train)

    def reverse_features(self, x_values, mask, train=False, rng=None):
        x = np.asarray(x_values, dtype=self.cfg.np_dtype)
        m = np.broadcast_to(np.asarray(mask), x.shape[:3]).astype(x.dtype)
        return self.rstack.forward(x * m[..., None], m, train=train, rng=rng)


def assemble_latent(dist, rng, overrides=None, use_mean=False):
    """Concrete code from a posterior: draw (or mean), then apply overrides."""
    d = dist.detach()
    z = d.mean.copy() if use_mean else (
        d.mean + np.exp(0.5 * np.clip(d.logvar, -30, 10))
        * rng.standard_normal(d.mean.shape))
    if overrides:
        D = z.shape[-1]
        for idx, val in overrides.items():
            idx = int(idx)
            if not 0 <= idx < D:
                raise IndexError(f"latent override index {idx} out of range for D={D}")
            z[..., idx] = float(val)
    return z


def inpaint(model, x_values, mask, rng, overrides=None, count=1,
            truncated=True, use_mean_latent=False):
    """Sample `count` completions; context pixels are copied verbatim.

    Returns (completed [count, M, M, C], latent codes [count, D]).
    """
    x = np.asarray(x_values, dtype=model.cfg.np_dtype)
    mask = np.asarray(mask)
    with engine.no_grad():
        dist = model.encode(x[None], mask[None], rng)
        zs = np.concatenate([
            assemble_latent(dist, rng, overrides, use_mean=use_mean_latent)
            for _ in range(count)], axis=0)
        return complete_with_latents(model, x, mask, zs, rng, truncated=truncated)


def complete_with_latents(model, x_values, mask, zs, rng, truncated=True,
                          use_reverse=True):
    """Completions for explicit latent codes zs [B, D] over one shared mask."""
    x = np.asarray(x_values, dtype=model.cfg.np_dtype)
    mask = np.asarray(mask)
    B = zs.shape[0]
    with engine.no_grad():
        yz = model.features(engine.constant(zs.astype(model.cfg.np_dtype)))
        yr = None
        if use_reverse:
            xb = np.repeat(x[None], B, axis=0)
            yr = model.reverse_features(xb, mask[None])
        tiled = np.repeat(x[None], B, axis=0)
        completed, _ = sample_target(
            model.fstack, tiled, mask, yr, yz, rng, truncated=truncated)
    ctx = mask[None, :, :, None].astype(x.dtype)
    completed = completed * (1 - ctx) + x[None] * ctx  # context bit-identical
    return completed, zs


def reconstruct_with_latents(model, zs, rng, truncated=True):
    """Stage-1 style full-image generation from codes alone (no reverse stream)."""
    M, C = model.cfg.image_size, model.cfg.channels
    B = zs.shape[0]
    empty = np.zeros((B, M, M, C), dtype=model.cfg.np_dtype)
    all_target = np.zeros((M, M))
    with engine.no_grad():
        yz = model.features(engine.constant(zs.astype(model.cfg.np_dtype)))
        completed, _ = sample_target(
            model.fstack, empty, all_target, None, yz, rng, truncated=truncated)
    return completed


def latent_traversal(model, x_values, mask, latent_index, values, rng,
                     truncated=True, mode="inpaint"):
    """One generation per value of latent_index, other dims at posterior mean.

    mode "inpaint" completes the target region with the reverse stream
    attached; mode "reconstruct" regenerates the whole image without it.
    """
    x = np.asarray(x_values, dtype=model.cfg.np_dtype)
    mask = np.asarray(mask)
    with engine.no_grad():
        dist = model.encode(x[None], mask[None], rng)
    base = assemble_latent(dist, rng, use_mean=True)
    D = base.shape[-1]
    if not 0 <= int(latent_index) < D:
        raise IndexError(f"latent index {latent_index} out of range for D={D}")
    zs = np.repeat(base, len(values), axis=0)
    zs[:, int(latent_index)] = np.asarray(values, dtype=zs.dtype)
    if mode == "reconstruct":
        return reconstruct_with_latents(model, zs, rng, truncated=truncated), zs
    completed, _ = complete_with_latents(model, x, mask, zs, rng, truncated=truncated)
    return completed, zs


def forward_probe_fn(stack, yr=None, yz=None):
    """[M, M, C] -> [M, M, P] head values with fixed injections, infer mode."""
    def fn(img):
        with engine.no_grad():
            out = stack.forward(img[None].astype(np.float64), yr, yz, train=False)
        return out.value[0]
    return fn


def reverse_probe_fn(rstack, mask=None):
    """Probe the reverse stack as a plain image -> features map (mask all-context)."""
    def fn(img):
        m = np.ones(img.shape[:2]) if mask is None else mask
        with engine.no_grad():
            out = rstack.forward((img * m[..., None])[None], m[None], train=False)
        return out.value[0]
    return fn
