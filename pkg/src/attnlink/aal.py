"""Attention augmentation: trainable links, losses and the lambda schedule."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, InputError, NumericError


class LinkWeights:
    """Trainable link matrix W [C, M*N], bias b [C] and a binary keep-mask.

    Masked-out entries of W stay exactly zero: the mask multiplies W inside
    ``augment`` (zero gradient through the product) and ``apply_mask`` zeroes
    the raw values after every optimizer step.
    """

    def __init__(self, channels, num_maps, rng=None, dtype=np.float32):
        limit = 1.0 / num_maps
        w0 = rng.uniform(-limit, limit, size=(channels, num_maps)) if rng is not None \
            else np.zeros((channels, num_maps))
        self.W = T.parameter(w0, dtype)
        self.b = T.parameter(np.zeros(channels), dtype)
        self.mask = np.ones((channels, num_maps), dtype=dtype)

    @property
    def channels(self):
        return self.W.data.shape[0]

    @property
    def num_maps(self):
        return self.W.data.shape[1]

    def set_mask(self, mask):
        if mask.shape != self.W.data.shape:
            raise DimensionError(f"mask shape {mask.shape} != link shape {self.W.data.shape}")
        self.mask = mask.astype(self.W.data.dtype)
        self.apply_mask()

    def apply_mask(self):
        self.W.data *= self.mask

    def trainable(self):
        return {"aal.W": self.W, "aal.b": self.b}


def augment(attn, links):
    """Augmented maps A+_c = sum_(m,n) W_c,(m,n) A_(m,n) + b_c as a 1x1 convolution."""
    maps = attn.maps if hasattr(attn, "maps") else attn
    if maps.data.shape[1] != links.num_maps:
        raise DimensionError(
            f"attention stack has {maps.data.shape[1]} maps, links expect {links.num_maps}")
    wm = T.mul(links.W, T.constant(links.mask))
    kernel = T.reshape(wm, (links.channels, links.num_maps, 1, 1))
    return T.conv2d(maps, kernel, links.b, stride=1, padding=0)


def attention_loss(aug, acts, eps=1e-12):
    """Mean over batch and channels of || u - v ||_2 with u, v the l2-normalized maps.

    Gradient flows into ``aug`` only; ``acts`` holds detached teacher maps.
    """
    acts_maps = acts.maps if hasattr(acts, "maps") else acts
    if isinstance(acts_maps, T.Tensor):
        acts_maps = acts_maps.data
    if aug.data.shape != acts_maps.shape:
        raise DimensionError(f"augmented maps {aug.data.shape} != activation maps {acts_maps.shape}")
    if np.isnan(aug.data).any() or np.isnan(acts_maps).any():
        raise NumericError("attention_loss received NaN input")
    b, c = aug.data.shape[0], aug.data.shape[1]
    u = T.l2_normalize(T.reshape(aug, (b, c, -1)), eps)
    flat = acts_maps.reshape(b, c, -1).astype(aug.data.dtype)
    v = flat / (np.linalg.norm(flat, axis=-1, keepdims=True) + eps)
    d = T.sub(u, T.constant(v))
    # tiny floor keeps sqrt differentiable when the maps coincide
    dist = T.sqrt(T.add(T.tsum(T.mul(d, d), axis=-1), T.constant(np.array(1e-24, dtype=aug.data.dtype))))
    return T.tmean(dist)


def total_loss(ce, att, lam):
    """L = L_CE + lambda * L_att."""
    if lam < 0:
        raise InputError(f"lambda must be non-negative, got {lam}")
    return T.add(ce, T.scale(att, lam))


def hard_distill_loss(student_logits, teacher_logits):
    """Cross entropy of student logits against the teacher's argmax pseudo-labels."""
    t = teacher_logits.data if isinstance(teacher_logits, T.Tensor) else np.asarray(teacher_logits)
    if student_logits.data.shape[1] != t.shape[1]:
        raise DimensionError(
            f"class counts differ: student {student_logits.data.shape[1]} vs teacher {t.shape[1]}")
    return T.cross_entropy(student_logits, t.argmax(axis=1))


@dataclass
class LambdaSchedule:
    lambda0: float = 2000.0
    decay_early: float = 0.99
    decay_late: float = 0.98
    switch_epoch: int = 200
    total_epochs: int = 300


def lambda_at(schedule, epoch):
    """Regularization weight at the given epoch (constant within an epoch)."""
    if not 0 <= epoch < schedule.total_epochs:
        raise InputError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    early = min(epoch, schedule.switch_epoch)
    late = max(0, epoch - schedule.switch_epoch)
    return schedule.lambda0 * schedule.decay_early ** early * schedule.decay_late ** late
