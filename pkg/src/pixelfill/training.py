"""Two-stage training pipeline, ablation modes, and checkpoint persistence.

Stage 1 optimizes full-image reconstruction under the forward stack
conditioned on the semantic features only, plus the latent regularizer.
Stage 2 freezes the encoder and feature decoder, re-initializes the
injection filters and the reverse stack, and optimizes target-pixel
likelihood through the bidirectional stack. The one-stage ablation trains
the stage-2 objective plus the regularizer jointly from scratch.
"""

import logging
import time

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import engine
from .data import MaskSampler
from .model import InpaintModel
from .pixelcnn import full_nll, stage2_nll
from .regularizers import stage1_regularizer
from .vae import prepare_context_input, sample_latent

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, stats):
        super().__init__(f"{message}; batch stats: {stats}")
        self.stats = stats


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_global_norm(params, max_norm):
    grads = [p.grad for p in params if p.grad is not None]
    if not grads or max_norm <= 0:
        return 0.0
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


def _rng_streams(seed):
    seqs = np.random.SeedSequence(seed).spawn(3)
    return {
        "init": np.random.default_rng(seqs[0]),
        "batch": np.random.default_rng(seqs[1]),  # masks, noise fill, eps, dropout, shuffle
        "reg": np.random.default_rng(seqs[2]),
    }


def _batch_stats(x, masks, extras):
    stats = {
        "x_min": float(np.min(x)),
        "x_max": float(np.max(x)),
        "target_fraction": float(1.0 - np.mean(masks)),
    }
    stats.update(extras)
    return stats


class TrainResult:
    def __init__(self, model, train_cfg, history, stage):
        self.model = model
        self.config = train_cfg
        self.history = history
        self.stage = stage

    def save(self, path):
        save_model(path, self.model, self.config, self.stage, self.history)


def save_model(path, model, train_cfg, stage, history):
    ckpt.save_checkpoint(path, model.state_arrays(), {
        "config": train_cfg.to_dict(),
        "stage": stage,
        "history": history,
    })


def load_model(path):
    """Rebuild the model a checkpoint was saved from. Returns (model, manifest)."""
    state, manifest = ckpt.load_checkpoint(path)
    tc = cfgmod.TrainConfig.from_dict(manifest["config"])
    model = InpaintModel(np.random.default_rng(0), tc.model(), dropout=tc.dropout)
    model.load_state(state)
    return model, manifest


def _mask_sampler(tc):
    cfg = tc.model()
    return MaskSampler(cfg.image_size, tc.mask_min, tc.mask_max)


def _check_finite(loss_value, x, masks, extras):
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(
            f"non-finite loss {loss_value}", _batch_stats(x, masks, extras))


def _epoch_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start : start + batch_size]


def train_stage1(tc, dataset, quiet=False):
    """Full-image reconstruction + latent regularizer; returns a TrainResult."""
    cfg = tc.model()
    rngs = _rng_streams(tc.seed)
    model = InpaintModel(rngs["init"], cfg, dropout=tc.dropout)
    sampler = _mask_sampler(tc)
    opt = Adam(model.params(), tc.learning_rate)
    x_all = dataset.values(cfg.np_dtype)
    history = []
    for epoch in range(tc.epochs):
        t0 = time.time()
        nlls, regs = [], []
        for idx in _epoch_batches(len(dataset), tc.batch_size, rngs["batch"]):
            x = x_all[idx]
            masks = sampler.sample_batch(rngs["batch"], len(idx))
            prep = prepare_context_input(x, masks, rngs["batch"])
            dist = model.encoder.forward(prep, train=True)
            z = sample_latent(dist, rngs["batch"])
            yz = model.decoder.forward(z, train=True)
            mix = model.fstack.mixture_params(x, None, yz, train=True, rng=rngs["batch"])
            nll = full_nll(mix, x)
            reg = stage1_regularizer(tc.regularizer, dist, z, rngs["reg"])
            loss = nll + reg
            _check_finite(float(loss.value), x, masks,
                          {"nll": float(nll.value), "regularizer": float(reg.value)})
            engine.backward(loss)
            clip_global_norm(opt.params, tc.grad_clip)
            opt.step()
            opt.zero_grad()
            nlls.append(float(nll.value))
            regs.append(float(reg.value))
        per_pixel = float(np.mean(nlls)) / (cfg.image_size**2)
        history.append({
            "epoch": epoch,
            "nll": float(np.mean(nlls)),
            "nll_per_pixel": per_pixel,
            "regularizer": float(np.mean(regs)),
            "seconds": round(time.time() - t0, 2),
        })
        if not quiet:
            log.info("stage1 epoch %d: nll/px %.4f reg %.4g (%.1fs)",
                     epoch, per_pixel, history[-1]["regularizer"], history[-1]["seconds"])
    return TrainResult(model, tc, history, stage="1")


def _reinit_stage2_modules(model, rng):
    """Fresh U_l, V_l and reverse stack; masked forward filters stay."""
    for layer in [model.fstack.first] + model.fstack.blocks:
        if layer.u is not None:
            layer.u.reinit(rng)
        if layer.v is not None:
            layer.v.reinit(rng)
    for layer in [model.rstack.first] + model.rstack.blocks:
        layer.conv.reinit(rng)
        if layer.proj is not None:
            layer.proj.reinit(rng)
    model.rstack.head.reinit(rng)


def train_stage2(tc, dataset, stage1, quiet=False):
    """Target-only NLL through the bidirectional stack; encoder/decoder frozen.

    stage1: a TrainResult or a checkpoint path. With tc.use_reverse False this
    is the forward-only ablation: identical protocol, no reverse features.
    """
    cfg = tc.model()
    rngs = _rng_streams(tc.seed)
    model = InpaintModel(rngs["init"], cfg, dropout=tc.dropout)
    if isinstance(stage1, (str, bytes)) or hasattr(stage1, "__fspath__"):
        state, manifest = ckpt.load_checkpoint(stage1)
        if manifest.get("stage") != "1":
            raise ckpt.CheckpointError(
                f"stage-2 training needs a stage-1 checkpoint, got stage {manifest.get('stage')!r}")
        model.load_state(state)
    elif isinstance(stage1, TrainResult):
        model.load_state(stage1.model.state_arrays())
    else:
        raise TypeError("stage1 must be a TrainResult or a checkpoint path")

    _reinit_stage2_modules(model, rngs["init"])
    model.encoder.set_trainable(False)
    model.decoder.set_trainable(False)
    trainable = model.fstack.params() + model.rstack.params()
    opt = Adam(trainable, tc.learning_rate)
    sampler = _mask_sampler(tc)
    x_all = dataset.values(cfg.np_dtype)
    history = []
    for epoch in range(tc.epochs):
        t0 = time.time()
        nlls, px_counts = [], []
        for idx in _epoch_batches(len(dataset), tc.batch_size, rngs["batch"]):
            x = x_all[idx]
            masks = sampler.sample_batch(rngs["batch"], len(idx))
            prep = prepare_context_input(x, masks, rngs["batch"])
            dist = model.encoder.forward(prep, train=False)
            z = sample_latent(dist, rngs["batch"])
            yz = model.decoder.forward(z, train=False)
            yr = None
            if tc.use_reverse:
                m3 = masks[..., None].astype(x.dtype)
                yr = model.rstack.forward(x * m3, masks, train=True, rng=rngs["batch"])
            mix = model.fstack.mixture_params(x, yr, yz, train=True, rng=rngs["batch"])
            loss = stage2_nll(mix, x, masks)
            target_px = float((1.0 - masks).sum())
            _check_finite(float(loss.value), x, masks, {"target_pixels": target_px})
            engine.backward(loss)
            clip_global_norm(opt.params, tc.grad_clip)
            opt.step()
            opt.zero_grad()
            nlls.append(float(loss.value) * len(idx))
            px_counts.append(target_px)
        per_pixel = float(np.sum(nlls) / np.sum(px_counts))
        history.append({
            "epoch": epoch,
            "target_nll_per_pixel": per_pixel,
            "seconds": round(time.time() - t0, 2),
        })
        if not quiet:
            log.info("stage2 epoch %d: target nll/px %.4f (%.1fs)",
                     epoch, per_pixel, history[-1]["seconds"])
    stage = "2" if tc.use_reverse else "2-forward-only"
    return TrainResult(model, tc, history, stage=stage)


def train_onestage(tc, dataset, quiet=False):
    """Ablation: stage-2 objective plus the regularizer, everything trainable."""
    cfg = tc.model()
    rngs = _rng_streams(tc.seed)
    model = InpaintModel(rngs["init"], cfg, dropout=tc.dropout)
    opt = Adam(model.params(), tc.learning_rate)
    sampler = _mask_sampler(tc)
    x_all = dataset.values(cfg.np_dtype)
    history = []
    for epoch in range(tc.epochs):
        t0 = time.time()
        losses = []
        for idx in _epoch_batches(len(dataset), tc.batch_size, rngs["batch"]):
            x = x_all[idx]
            masks = sampler.sample_batch(rngs["batch"], len(idx))
            prep = prepare_context_input(x, masks, rngs["batch"])
            dist = model.encoder.forward(prep, train=True)
            z = sample_latent(dist, rngs["batch"])
            yz = model.decoder.forward(z, train=True)
            m3 = masks[..., None].astype(x.dtype)
            yr = model.rstack.forward(x * m3, masks, train=True, rng=rngs["batch"])
            mix = model.fstack.mixture_params(x, yr, yz, train=True, rng=rngs["batch"])
            nll = stage2_nll(mix, x, masks)
            reg = stage1_regularizer(tc.regularizer, dist, z, rngs["reg"])
            loss = nll + reg
            _check_finite(float(loss.value), x, masks,
                          {"nll": float(nll.value), "regularizer": float(reg.value)})
            engine.backward(loss)
            clip_global_norm(opt.params, tc.grad_clip)
            opt.step()
            opt.zero_grad()
            losses.append(float(loss.value))
        history.append({
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "seconds": round(time.time() - t0, 2),
        })
        if not quiet:
            log.info("onestage epoch %d: loss %.4f (%.1fs)", epoch, history[-1]["loss"])
    return TrainResult(model, tc, history, stage="onestage")


def train(tc, dataset, stage1=None, quiet=False):
    if tc.stage == "1":
        return train_stage1(tc, dataset, quiet=quiet)
    if tc.stage == "2":
        return train_stage2(tc, dataset, stage1, quiet=quiet)
    if tc.stage == "onestage":
        return train_onestage(tc, dataset, quiet=quiet)
    raise ValueError(f"unknown stage {tc.stage!r}")


def evaluate_target_nll(model, dataset, masks, use_reverse=True, seed=0, batch=32):
    """Held-out target NLL in nats per target pixel, posterior-mean latents."""
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    x_all = dataset.values(cfg.np_dtype)
    masks = np.asarray(masks)
    total_nll, total_px = 0.0, 0.0
    with engine.no_grad():
        for start in range(0, len(dataset), batch):
            x = x_all[start : start + batch]
            m = masks[start : start + batch]
            prep = prepare_context_input(x, m, rng)
            dist = model.encoder.forward(prep, train=False)
            yz = model.decoder.forward(engine.constant(dist.detach().mean), train=False)
            yr = None
            if use_reverse:
                yr = model.rstack.forward(x * m[..., None].astype(x.dtype), m, train=False)
            mix = model.fstack.mixture_params(x, yr, yz, train=False)
            loss = stage2_nll(mix, x, m)
            total_nll += float(loss.value) * x.shape[0]
            total_px += float((1.0 - m).sum())
    return total_nll / total_px
