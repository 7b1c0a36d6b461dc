"""Parameter containers and the layers shared by every network in the model.

A Module owns persistent parameter leaves (engine Nodes) plus non-trainable
buffers (running batch-norm moments). Forward methods build a fresh graph per
call, so the same module can appear many times inside one loss.
"""

import numpy as np

from . import engine
from .engine import Node


class StateShapeError(ValueError):
    """Checkpoint tensor does not match the module it is loaded into."""


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    def __init__(self):
        self._params = {}
        self._buffers = {}
        self._children = {}

    def add_param(self, name, array):
        node = engine.param(np.asarray(array), name=name)
        self._params[name] = node
        return node

    def add_buffer(self, name, array):
        self._buffers[name] = np.asarray(array)
        return self._buffers[name]

    def set_buffer(self, name, array):
        self._buffers[name] = np.asarray(array)

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_params(self, prefix=""):
        for name, node in self._params.items():
            yield prefix + name, node
        for cname, child in self._children.items():
            yield from child.named_params(prefix + cname + "/")

    def params(self):
        return [node for _, node in self.named_params()]

    def named_buffers(self, prefix=""):
        for name, arr in self._buffers.items():
            yield prefix + name, arr
        for cname, child in self._children.items():
            yield from child.named_buffers(prefix + cname + "/")

    def set_trainable(self, flag):
        for _, node in self.named_params():
            node.requires_grad = flag

    def zero_grad(self):
        for _, node in self.named_params():
            node.zero_grad()

    def state_arrays(self):
        """Flat name -> array view of all params and buffers."""
        state = {}
        for name, node in self.named_params():
            state["param:" + name] = node.value
        for name, arr in self.named_buffers():
            state["buffer:" + name] = arr
        return state

    def load_state(self, state):
        own = self.state_arrays()
        for name in own:
            if name not in state:
                raise StateShapeError(f"checkpoint is missing tensor {name!r}")
        for name, current in own.items():
            incoming = np.asarray(state[name])
            if incoming.shape != current.shape:
                raise StateShapeError(
                    f"tensor {name!r} has shape {incoming.shape}, expected {current.shape}")
        for name, node in self.named_params():
            node.value = np.asarray(state["param:" + name]).astype(node.value.dtype)
        self._load_buffers(state, "")

    def _load_buffers(self, state, prefix):
        for name in list(self._buffers):
            self._buffers[name] = np.asarray(state["buffer:" + prefix + name]).copy()
        for cname, child in self._children.items():
            child._load_buffers(state, prefix + cname + "/")


class Conv2d(Module):
    def __init__(self, rng, cin, cout, kernel, stride=1, padding=engine.SAME,
                 mask=None, dtype=np.float64):
        super().__init__()
        kh, kw = kernel
        fan_in, fan_out = kh * kw * cin, kh * kw * cout
        self.w = self.add_param("w", xavier_uniform(rng, (kh, kw, cin, cout), fan_in, fan_out, dtype))
        self.b = self.add_param("b", np.zeros(cout, dtype=dtype))
        self.stride = stride
        self.padding = padding
        self.mask = None if mask is None else np.asarray(mask, dtype=dtype)

    def forward(self, x):
        return engine.conv2d(x, self.w, self.b, stride=self.stride,
                             padding=self.padding, mask=self.mask)

    def reinit(self, rng):
        kh, kw, cin, cout = self.w.value.shape
        self.w.value = xavier_uniform(
            rng, self.w.value.shape, kh * kw * cin, kh * kw * cout, self.w.value.dtype)
        self.b.value = np.zeros_like(self.b.value)


class TransposedConv2d(Module):
    def __init__(self, rng, cin, cout, kernel, stride=1, padding=engine.SAME, dtype=np.float64):
        super().__init__()
        kh, kw = kernel
        fan_in, fan_out = kh * kw * cin, kh * kw * cout
        self.w = self.add_param("w", xavier_uniform(rng, (kh, kw, cout, cin), fan_in, fan_out, dtype))
        self.b = self.add_param("b", np.zeros(cout, dtype=dtype))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return engine.transposed_conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Dense(Module):
    def __init__(self, rng, din, dout, dtype=np.float64):
        super().__init__()
        self.w = self.add_param("w", xavier_uniform(rng, (din, dout), din, dout, dtype))
        self.b = self.add_param("b", np.zeros(dout, dtype=dtype))

    def forward(self, x):
        return engine.dense(x, self.w, self.b)


class BatchNorm(Module):
    """Normalizes over all non-channel axes; channel axis is last."""

    def __init__(self, channels, eps=1e-3, momentum=0.9, dtype=np.float64):
        super().__init__()
        self.gamma = self.add_param("gamma", np.ones(channels, dtype=dtype))
        self.beta = self.add_param("beta", np.zeros(channels, dtype=dtype))
        self.add_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.add_buffer("running_var", np.ones(channels, dtype=dtype))
        self.eps = eps
        self.momentum = momentum

    def forward(self, x, train):
        x = engine.as_node(x)
        axes = tuple(range(x.value.ndim - 1))
        if train:
            if x.value.shape[0] < 2:
                raise engine.EngineError("batch_norm in train mode needs batch size >= 2")
            mu = engine.mean(x, axis=axes, keepdims=True)
            xc = engine.sub(x, mu)
            var = engine.mean(engine.mul(xc, xc), axis=axes, keepdims=True)
            inv = engine.pow_scalar(engine.add(var, self.eps), -0.5)
            y = engine.mul(xc, inv)
            self._update_running(mu.value.reshape(-1), var.value.reshape(-1), x.value, axes)
        else:
            rm = self._buffers["running_mean"].astype(x.value.dtype)
            rv = self._buffers["running_var"].astype(x.value.dtype)
            y = engine.mul(engine.sub(x, engine.constant(rm)),
                           engine.constant(1.0 / np.sqrt(rv + self.eps)))
        return engine.add(engine.mul(y, self.gamma), self.beta)

    def _update_running(self, mu, var, x, axes):
        n = 1
        for ax in axes:
            n *= x.shape[ax]
        unbias = n / max(n - 1, 1)
        m = self.momentum
        self._buffers["running_mean"] = m * self._buffers["running_mean"] + (1 - m) * mu
        self._buffers["running_var"] = m * self._buffers["running_var"] + (1 - m) * var * unbias
