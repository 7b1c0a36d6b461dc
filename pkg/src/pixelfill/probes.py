"""Empirical receptive-field measurement and causality verification.

Both probes perturb one input pixel at a time and watch which output pixels
move. Because masked weights multiply literal zeros, a causal network shows
exactly zero difference at protected positions, so comparisons here are
exact, never tolerance-based. Networks must be probed in deterministic mode
(batch norm frozen, dropout off); stochastic networks are rejected.
"""

from dataclasses import dataclass, field

import numpy as np

from .masks import FORWARD, raster_index


class StochasticNetworkError(RuntimeError):
    """Probed network is not deterministic (dropout or train-mode batch norm)."""


def _check_deterministic(net_fn, x):
    a, b = net_fn(x), net_fn(x)
    if not np.array_equal(a, b):
        raise StochasticNetworkError(
            "network output changed between identical calls; probe in deterministic mode")
    return a


def influence_matrix(net_fn, input_shape, rng, delta=1.0):
    """Boolean [H*W, H*W] matrix: [j, k] = input pixel j influences output pixel k.

    net_fn maps an [H, W, C] array to an [H, W, *] array. Perturbation is a
    +delta bump on one channel of a zero-mean random input; any nonzero output
    delta counts.
    """
    H, W, C = input_shape
    base = rng.normal(size=input_shape)
    base_out = _check_deterministic(net_fn, base)
    out_flat = base_out.reshape(H * W, -1)
    influence = np.zeros((H * W, H * W), dtype=bool)
    for j in range(H * W):
        i, jj = divmod(j, W)
        for c in range(C):
            bumped = base.copy()
            bumped[i, jj, c] += delta
            out = net_fn(bumped).reshape(H * W, -1)
            influence[j] |= np.any(out != out_flat, axis=1)
    return influence


def measure_receptive_field(net_fn, input_shape, probe_position, rng, delta=1.0):
    """Set of input (row, col) positions whose perturbation moves the probe output."""
    H, W, C = input_shape
    pi, pj = probe_position
    base = rng.normal(size=input_shape)
    base_out = _check_deterministic(net_fn, base)
    probe_ref = base_out[pi, pj]
    found = set()
    for i in range(H):
        for j in range(W):
            for c in range(C):
                bumped = base.copy()
                bumped[i, j, c] += delta
                if np.any(net_fn(bumped)[pi, pj] != probe_ref):
                    found.add((i, j))
                    break
    return found


def field_bounding_box(positions):
    """(rows, cols) extent of a measured field; (0, 0) when empty."""
    if not positions:
        return 0, 0
    rows = [p[0] for p in positions]
    cols = [p[1] for p in positions]
    return max(rows) - min(rows) + 1, max(cols) - min(cols) + 1


@dataclass
class CausalityReport:
    order: str
    height: int
    width: int
    trials: int
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "order": self.order,
            "height": self.height,
            "width": self.width,
            "trials": self.trials,
            "ok": self.ok,
            "violations": [
                {"output": list(k), "input": list(j)} for k, j in self.violations
            ],
        }


def verify_causality(net_fn, input_shape, rng, order=FORWARD, trials=1):
    """Assert output at k ignores inputs at-or-after k in the given order.

    Violations are report content, not errors: each is an (output, input)
    position pair where a protected dependency was observed.
    """
    H, W, C = input_shape
    report = CausalityReport(order=order, height=H, width=W, trials=trials)
    seen = set()
    for _ in range(trials):
        influence = influence_matrix(net_fn, input_shape, rng)
        for j in range(H * W):
            ji, jj = divmod(j, W)
            oj = raster_index(ji, jj, H, W, order)
            for k in np.nonzero(influence[j])[0]:
                ki, kj = divmod(int(k), W)
                if oj >= raster_index(ki, kj, H, W, order):
                    pair = ((ki, kj), (ji, jj))
                    if pair not in seen:
                        seen.add(pair)
                        report.violations.append(pair)
    report.violations.sort()
    return report
