"""Autoregressive convolution masks for both raster scan directions.

Forward order is top-to-bottom, left-to-right; the reverse direction is its
exact 180-degree reversal, and reverse masks are literally the forward masks
rotated 180 degrees spatially. Type A excludes the kernel center, type B
includes it (optionally coupling channel groups in R->G->B order).
"""

import numpy as np

FORWARD, REVERSE = "forward", "reverse"
MASK_A, MASK_B = "A", "B"


def raster_index(i, j, height, width, direction=FORWARD):
    """Position of pixel (i, j) in the given scan order."""
    k = i * width + j
    if direction == FORWARD:
        return k
    if direction == REVERSE:
        return height * width - 1 - k
    raise ValueError(f"unknown raster direction {direction!r}")


def _channel_groups(n, groups):
    # contiguous blocks: with 3 groups over 3k channels -> R block, G block, B block
    return np.arange(n) * groups // n


def build_forward_mask(kh, kw, cin, cout, mask_type, groups=1):
    """0/1 weight mask enabling strictly-prior positions (plus center rules).

    Rows above the center are fully enabled, the center row left of center is
    enabled, everything after is disabled. The center entry is disabled for
    type A; for type B it is enabled subject to channel-group coupling when
    groups > 1 (input group strictly before output group for A, at-or-before
    for B).
    """
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"masked kernels must have odd dims, got {kh}x{kw}")
    if mask_type not in (MASK_A, MASK_B):
        raise ValueError(f"mask_type must be 'A' or 'B', got {mask_type!r}")
    ch, cw = kh // 2, kw // 2
    mask = np.zeros((kh, kw, cin, cout))
    mask[:ch] = 1.0
    mask[ch, :cw] = 1.0
    gi = _channel_groups(cin, groups)[:, None]
    go = _channel_groups(cout, groups)[None, :]
    if mask_type == MASK_B:
        mask[ch, cw] = (gi <= go).astype(float)
    elif groups > 1:
        mask[ch, cw] = (gi < go).astype(float)
    return mask


def build_reverse_mask(kh, kw, cin, cout, mask_type, groups=1):
    """Forward mask rotated 180 degrees spatially (channel entries untouched)."""
    return rot180(build_forward_mask(kh, kw, cin, cout, mask_type, groups=groups))


def rot180(mask):
    return np.ascontiguousarray(mask[::-1, ::-1])


def build_mask(kh, kw, cin, cout, mask_type, direction=FORWARD, groups=1):
    if direction == FORWARD:
        return build_forward_mask(kh, kw, cin, cout, mask_type, groups=groups)
    if direction == REVERSE:
        return build_reverse_mask(kh, kw, cin, cout, mask_type, groups=groups)
    raise ValueError(f"unknown raster direction {direction!r}")
