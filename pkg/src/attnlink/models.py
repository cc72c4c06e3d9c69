"""Toy student transformer and frozen teacher CNN with map extraction.

The student is a small pre-norm ViT; every head's class-token attention over
the patch keys is reshaped to a P x P map and stacked across layers. The
teacher is a conv/batch-norm/relu/pool stack whose post-normalization channel
maps are bicubic-resized to the student's patch grid and detached.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError


@dataclass
class StudentConfig:
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    layers: int = 4
    heads: int = 4
    mlp_hidden: int = 128
    classes: int = 10
    scaled_maps: bool = True  # extract maps from the 1/sqrt(head_dim)-scaled logits

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")

    @property
    def grid(self):
        return self.image_size // self.patch_size

    @property
    def tokens(self):
        return self.grid * self.grid + 1

    @property
    def head_dim(self):
        return self.embed_dim // self.heads

    @property
    def map_channels(self):
        return self.heads * self.layers


@dataclass
class TeacherConfig:
    widths: tuple = (8, 16, 32)
    classes: int = 10
    image_size: int = 32
    tap: str = "post_norm"  # or "post_act"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 1:
            raise ConfigurationError("teacher needs at least one block")
        if self.tap not in ("post_norm", "post_act"):
            raise ConfigurationError(f"unknown tap point {self.tap!r}")

    @property
    def channels(self):
        return sum(self.widths)


@dataclass
class AttentionStack:
    """All M*N class-token attention maps of one batch, each P x P."""
    maps: T.Tensor                 # [B, M*N, P, P]
    index: list                    # channel -> (head m, layer n), 0-based


@dataclass
class ActivationSet:
    """Teacher activation maps resized to the student grid, detached."""
    maps: np.ndarray               # [B, C, P, P]
    block_index: list = field(default_factory=list)  # channel -> block, 0-based


def _trunc_normal(rng, shape, std=0.02):
    return np.clip(rng.normal(0.0, std, size=shape), -2.0 * std, 2.0 * std)


class Student:
    def __init__(self, cfg: StudentConfig):
        self.cfg = cfg

    def init_params(self, rng, dtype=np.float32):
        cfg = self.cfg
        d, hd = cfg.embed_dim, cfg.mlp_hidden
        patch_dim = 3 * cfg.patch_size * cfg.patch_size
        p = {}

        def w(name, shape, std=0.02):
            p[name] = T.parameter(_trunc_normal(rng, shape, std), dtype)

        def z(name, shape):
            p[name] = T.parameter(np.zeros(shape), dtype)

        def o(name, shape):
            p[name] = T.parameter(np.ones(shape), dtype)

        w("patch_embed.w", (patch_dim, d))
        z("patch_embed.b", (d,))
        p["cls_token"] = T.parameter(rng.normal(0.0, 0.02, size=(1, 1, d)), dtype)
        p["pos_embed"] = T.parameter(rng.normal(0.0, 0.02, size=(1, cfg.tokens, d)), dtype)
        for i in range(cfg.layers):
            o(f"blocks.{i}.ln1.g", (d,))
            z(f"blocks.{i}.ln1.b", (d,))
            for nm in ("wq", "wk", "wv", "wo"):
                w(f"blocks.{i}.attn.{nm}", (d, d))
            for nm in ("bq", "bk", "bv", "bo"):
                z(f"blocks.{i}.attn.{nm}", (d,))
            o(f"blocks.{i}.ln2.g", (d,))
            z(f"blocks.{i}.ln2.b", (d,))
            w(f"blocks.{i}.mlp.w1", (d, hd))
            z(f"blocks.{i}.mlp.b1", (hd,))
            w(f"blocks.{i}.mlp.w2", (hd, d))
            z(f"blocks.{i}.mlp.b2", (d,))
        o("ln_f.g", (d,))
        z("ln_f.b", (d,))
        w("head.w", (d, cfg.classes))
        z("head.b", (cfg.classes,))
        return p

    def patchify(self, images):
        cfg = self.cfg
        b = images.shape[0]
        ps, g = cfg.patch_size, cfg.grid
        x = images.reshape(b, 3, g, ps, g, ps)
        x = x.transpose(0, 2, 4, 1, 3, 5).reshape(b, g * g, 3 * ps * ps)
        return np.ascontiguousarray(x)

    def forward(self, params, images, return_qk=False):
        """Run the student; returns (logits, AttentionStack[, per-layer (q, k) caches])."""
        cfg = self.cfg
        if images.shape[1:] != (3, cfg.image_size, cfg.image_size):
            raise DimensionError(
                f"expected images [B, 3, {cfg.image_size}, {cfg.image_size}], got {images.shape}")
        b = images.shape[0]
        m, dh, g = cfg.heads, cfg.head_dim, cfg.grid
        x = T.linear(T.constant(self.patchify(images), images.dtype),
                     params["patch_embed.w"], params["patch_embed.b"])
        cls = T.broadcast_to(params["cls_token"], (b, 1, cfg.embed_dim))
        x = T.concat([cls, x], axis=1)
        x = T.add(x, params["pos_embed"])

        maps = []
        qk_cache = []
        for i in range(cfg.layers):
            h = T.layer_norm(x, params[f"blocks.{i}.ln1.g"], params[f"blocks.{i}.ln1.b"])

            def heads_of(t):
                return T.transpose(T.reshape(t, (b, cfg.tokens, m, dh)), (0, 2, 1, 3))

            q = heads_of(T.linear(h, params[f"blocks.{i}.attn.wq"], params[f"blocks.{i}.attn.bq"]))
            k = heads_of(T.linear(h, params[f"blocks.{i}.attn.wk"], params[f"blocks.{i}.attn.bk"]))
            v = heads_of(T.linear(h, params[f"blocks.{i}.attn.wv"], params[f"blocks.{i}.attn.bv"]))
            logits = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
            attn = T.softmax(logits, axis=-1)
            ctx = T.matmul(attn, v)
            ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, cfg.tokens, cfg.embed_dim))
            x = T.add(x, T.linear(ctx, params[f"blocks.{i}.attn.wo"], params[f"blocks.{i}.attn.bo"]))

            row = logits[:, :, 0, 1:]
            if not cfg.scaled_maps:
                row = T.scale(row, np.sqrt(dh))
            maps.append(T.reshape(T.softmax(row, axis=-1), (b, m, g, g)))
            if return_qk:
                qk_cache.append((q.data.copy(), k.data.copy()))

            h2 = T.layer_norm(x, params[f"blocks.{i}.ln2.g"], params[f"blocks.{i}.ln2.b"])
            hid = T.gelu(T.linear(h2, params[f"blocks.{i}.mlp.w1"], params[f"blocks.{i}.mlp.b1"]))
            x = T.add(x, T.linear(hid, params[f"blocks.{i}.mlp.w2"], params[f"blocks.{i}.mlp.b2"]))

        x = T.layer_norm(x, params["ln_f.g"], params["ln_f.b"])
        logits = T.linear(x[:, 0, :], params["head.w"], params["head.b"])
        stack = AttentionStack(
            maps=T.concat(maps, axis=1),
            index=[(mm, nn) for nn in range(cfg.layers) for mm in range(m)])
        if return_qk:
            return logits, stack, qk_cache
        return logits, stack


class Teacher:
    def __init__(self, cfg: TeacherConfig):
        self.cfg = cfg

    def init_params(self, rng, dtype=np.float32):
        cfg = self.cfg
        p = {}
        prev = 3
        for i, width in enumerate(cfg.widths):
            fan_in = prev * 9
            p[f"blocks.{i}.conv.w"] = T.parameter(
                rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, prev, 3, 3)), dtype)
            p[f"blocks.{i}.conv.b"] = T.parameter(np.zeros(width), dtype)
            p[f"blocks.{i}.bn.g"] = T.parameter(np.ones(width), dtype)
            p[f"blocks.{i}.bn.b"] = T.parameter(np.zeros(width), dtype)
            # running statistics are state, not trainable parameters
            p[f"blocks.{i}.bn.rm"] = T.constant(np.zeros(width), dtype)
            p[f"blocks.{i}.bn.rv"] = T.constant(np.ones(width), dtype)
            prev = width
        p["head.w"] = T.parameter(_trunc_normal(rng, (prev, cfg.classes)), dtype)
        p["head.b"] = T.parameter(np.zeros(cfg.classes), dtype)
        return p

    def forward(self, params, images, training=False, collect_grid=None):
        """Run the teacher; optionally collect resized activation maps.

        ``collect_grid`` is the student's P; when given, each block's tapped
        channel maps are bicubic-resized to P x P, concatenated across blocks
        and returned detached as an ActivationSet.
        """
        cfg = self.cfg
        x = T.constant(images) if not isinstance(images, T.Tensor) else images
        taps = []
        for i in range(len(cfg.widths)):
            x = T.conv2d(x, params[f"blocks.{i}.conv.w"], params[f"blocks.{i}.conv.b"],
                         stride=1, padding=1)
            x = T.batch_norm(x, params[f"blocks.{i}.bn.g"], params[f"blocks.{i}.bn.b"],
                             params[f"blocks.{i}.bn.rm"].data, params[f"blocks.{i}.bn.rv"].data,
                             training=training)
            if collect_grid is not None and cfg.tap == "post_norm":
                taps.append(x.data.copy())
            x = T.relu(x)
            if collect_grid is not None and cfg.tap == "post_act":
                taps.append(x.data.copy())
            x = T.max_pool2d(x)
        logits = T.linear(T.global_avg_pool(x), params["head.w"], params["head.b"])
        if collect_grid is None:
            return logits, None
        g = int(collect_grid)
        resized = [T.bicubic_resize(t, g, g) for t in taps]
        acts = ActivationSet(
            maps=np.ascontiguousarray(np.concatenate(resized, axis=1)),
            block_index=[j for j, width in enumerate(cfg.widths) for _ in range(width)])
        return logits, acts


def cross_entropy_loss(logits, labels):
    """Mean cross entropy of logits against integer labels."""
    return T.cross_entropy(logits, labels)
