"""Computation graph nodes and reverse-mode backward pass.

Values are plain numpy arrays; a Node wraps one array together with the
references needed to backpropagate through the operation that produced it.
Graphs are built define-by-run and thrown away after each step; parameter
leaves persist across steps and accumulate gradients until reset.
"""

import numpy as np


class EngineError(Exception):
    """Raised on malformed graph operations (shape mismatch, bad root, ...)."""


_grad_enabled = True


class no_grad:
    """Context manager: nodes built inside never require gradients."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Node:
    __slots__ = ("value", "parents", "op", "grad", "requires_grad", "_backward", "name")

    def __init__(self, value, parents=(), op="leaf", requires_grad=None, name=""):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value)
        self.parents = tuple(parents)
        self.op = op
        self.name = name
        if requires_grad is None:
            requires_grad = _grad_enabled and any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def detach(self):
        return Node(self.value, op="detach", requires_grad=False)

    def accumulate(self, g):
        if self.grad is None:
            # param grads get a private copy: the optimizer scales them in
            # place, and the incoming array may be shared with other nodes
            if self.op == "param":
                self.grad = np.array(g)
            else:
                self.grad = g if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def param(value, name=""):
    """Persistent trainable leaf."""
    arr = np.asarray(value)
    return Node(arr, op="param", requires_grad=True, name=name)


def constant(value, dtype=None):
    """Non-differentiable leaf (inputs, masks, rng draws)."""
    arr = np.asarray(value, dtype=dtype)
    return Node(arr, op="const", requires_grad=False)


def as_node(x, dtype=None):
    if isinstance(x, Node):
        return x
    return constant(x, dtype=dtype)


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, iter(root.parents))]
    visited.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            if parent.requires_grad and id(parent) not in visited:
                visited.add(id(parent))
                stack.append((parent, iter(parent.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(root):
    """Populate .grad on every gradient-requiring ancestor of a scalar root.

    Contributions through multiple consumers sum; leaves keep accumulating
    until zero_grad, so optimizers must reset between steps.
    """
    if root.value.size != 1:
        raise EngineError(f"backward requires a scalar root, got shape {root.value.shape}")
    if not root.requires_grad:
        return
    order = _toposort(root)
    root.accumulate(np.ones_like(root.value))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
