"""Post-training link analysis: normalization, pruning, heatmaps, range masks."""

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, InputError


@dataclass
class LinkSnapshot:
    W: np.ndarray          # [C, M*N]
    block_index: list      # channel c -> teacher block j, 0-based
    head_layer: list       # column -> (head m, layer n), 0-based
    epoch: int = 0

    def __post_init__(self):
        if len(self.block_index) != self.W.shape[0]:
            raise ConfigurationError(
                f"block metadata covers {len(self.block_index)} channels, W has {self.W.shape[0]}")
        if len(self.head_layer) != self.W.shape[1]:
            raise ConfigurationError(
                f"head/layer metadata covers {len(self.head_layer)} columns, W has {self.W.shape[1]}")

    @property
    def num_layers(self):
        return max(n for _, n in self.head_layer) + 1

    @property
    def num_heads(self):
        return max(m for m, _ in self.head_layer) + 1

    @property
    def num_blocks(self):
        return max(self.block_index) + 1


@dataclass
class RangeMask:
    """Inclusive 1-based ViT layer range per teacher block."""
    ranges: list           # block j -> (lo, hi), 1-based inclusive


@dataclass
class Heatmap:
    values: np.ndarray     # [num_blocks, num_layers] of mean |link| magnitudes


def normalize_links(snap):
    """Global min-max normalization of the signed weights into [0, 1]."""
    w = snap.W
    wmin, wmax = w.min(), w.max()
    if wmax == wmin:
        raise DegenerateInputError(f"all link weights equal ({wmin}); cannot normalize")
    return replace(snap, W=(w - wmin) / (wmax - wmin))


def prune_links(snap, theta):
    """Keep-mask per (channel, layer): head-averaged normalized magnitude > theta.

    Expects a snapshot already passed through ``normalize_links``; kept or
    pruned links come in per-layer blocks of M identical bits.
    """
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"threshold must lie in [0, 1], got {theta}")
    cols_of_layer = [[j for j, (_, n) in enumerate(snap.head_layer) if n == layer]
                     for layer in range(snap.num_layers)]
    mask = np.zeros_like(snap.W, dtype=np.uint8)
    mag = np.abs(snap.W)
    for cols in cols_of_layer:
        keep = mag[:, cols].mean(axis=1) > theta
        for col in cols:
            mask[keep, col] = 1
    return mask


def block_heatmap(snap):
    """Mean absolute raw link magnitude per (teacher block, ViT layer)."""
    n_blocks, n_layers = snap.num_blocks, snap.num_layers
    counts = np.zeros((n_blocks, n_layers))
    sums = np.zeros((n_blocks, n_layers))
    mag = np.abs(snap.W)
    for c in range(snap.W.shape[0]):
        j = snap.block_index[c]
        for col, (_, n) in enumerate(snap.head_layer):
            sums[j, n] += mag[c, col]
            counts[j, n] += 1
    if (counts == 0).any():
        empty = int(np.argwhere(counts == 0)[0][0])
        raise ConfigurationError(f"teacher block {empty} has no channels in the snapshot")
    return Heatmap(values=sums / counts)


def build_range_mask(range_mask, block_index, head_layer):
    """Binary mask [C, M*N]: 1 where block(c)'s layer range contains the column's layer."""
    n_layers = max(n for _, n in head_layer) + 1
    for j, (lo, hi) in enumerate(range_mask.ranges):
        if not 1 <= lo <= hi <= n_layers:
            raise InputError(f"block {j} range [{lo}, {hi}] outside [1, {n_layers}]")
    mask = np.zeros((len(block_index), len(head_layer)), dtype=np.uint8)
    for c, j in enumerate(block_index):
        lo, hi = range_mask.ranges[j]
        for col, (_, n) in enumerate(head_layer):
            if lo <= n + 1 <= hi:
                mask[c, col] = 1
    return mask


# -- file formats -------------------------------------------------------


def save_range_spec(path, range_mask):
    spec = [{"block": j + 1, "lo": lo, "hi": hi} for j, (lo, hi) in enumerate(range_mask.ranges)]
    with open(path, "w") as fh:
        json.dump(spec, fh, indent=2)
        fh.write("\n")


def load_range_spec(path):
    with open(path) as fh:
        spec = json.load(fh)
    entries = sorted(spec, key=lambda e: e["block"])
    if [e["block"] for e in entries] != list(range(1, len(entries) + 1)):
        raise ConfigurationError(f"mask spec blocks must be 1..{len(entries)} without gaps")
    return RangeMask(ranges=[(int(e["lo"]), int(e["hi"])) for e in entries])


def heatmap_to_csv(path, heatmap):
    """Rows = teacher blocks, columns = ViT layers, six significant digits."""
    with open(path, "w") as fh:
        for row in heatmap.values:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")


def heatmap_to_pgm(path, heatmap):
    """8-bit binary PGM, values min-max scaled to 0..255."""
    v = heatmap.values
    vmin, vmax = v.min(), v.max()
    if vmax > vmin:
        pix = np.rint((v - vmin) / (vmax - vmin) * 255.0).astype(np.uint8)
    else:
        pix = np.full(v.shape, 255 if vmax > 0 else 0, dtype=np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
