"""Training harness: configuration, SGD loop, metrics and checkpoints."""

import json
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import aal, linksel
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import augment_batch, gen_shapes, normalize_images, read_cifar10_batch
from .errors import ConfigurationError, NumericError
from .models import Student, StudentConfig, Teacher, TeacherConfig, cross_entropy_loss


@dataclass
class TrainConfig:
    model: str = "student"                 # "student" or "teacher"
    dataset_kind: str = "shapes"           # "shapes" or "cifar10"
    dataset_path: str | None = None
    data_seed: int = 1234
    train_size: int = 2000
    val_size: int = 500
    classes: int = 2
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    cosine_lr: bool = True
    lambda0: float = 2000.0
    decay_early: float = 0.99
    decay_late: float = 0.98
    switch_epoch: int = 200
    aal: bool = False
    hard_distill: bool = False
    mask_spec: str | None = None
    precision: str = "f32"                 # "f32" for training, "f64" for checks
    teacher_checkpoint: str | None = None
    checkpoint_out: str = "checkpoint.aal"
    metrics_out: str = "metrics.csv"
    checkpoint_every: int = 10
    augment: bool = True
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    layers: int = 4
    heads: int = 4
    mlp_hidden: int = 128
    scaled_maps: bool = True
    teacher_widths: list = None
    teacher_tap: str = "post_norm"

    def __post_init__(self):
        if self.teacher_widths is None:
            self.teacher_widths = [8, 16, 32]
        if self.model not in ("student", "teacher"):
            raise ConfigurationError(f"model must be 'student' or 'teacher', got {self.model!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigurationError(f"precision must be 'f32' or 'f64', got {self.precision!r}")
        if self.dataset_kind not in ("shapes", "cifar10"):
            raise ConfigurationError(f"unknown dataset kind {self.dataset_kind!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def student_config(cfg):
    return StudentConfig(image_size=cfg.image_size, patch_size=cfg.patch_size,
                         embed_dim=cfg.embed_dim, layers=cfg.layers, heads=cfg.heads,
                         mlp_hidden=cfg.mlp_hidden, classes=cfg.classes,
                         scaled_maps=cfg.scaled_maps)


def teacher_config(cfg):
    return TeacherConfig(widths=tuple(cfg.teacher_widths), classes=cfg.classes,
                         image_size=cfg.image_size, tap=cfg.teacher_tap)


def lambda_schedule(cfg):
    return aal.LambdaSchedule(lambda0=cfg.lambda0, decay_early=cfg.decay_early,
                              decay_late=cfg.decay_late, switch_epoch=cfg.switch_epoch,
                              total_epochs=cfg.epochs)


def load_dataset(cfg):
    """Return (train, val) datasets per the config."""
    if cfg.dataset_kind == "shapes":
        full = gen_shapes(cfg.data_seed, cfg.train_size + cfg.val_size, classes=cfg.classes)
        train = type(full)(images=full.images[:cfg.train_size],
                           labels=full.labels[:cfg.train_size],
                           boxes=full.boxes[:cfg.train_size])
        val = type(full)(images=full.images[cfg.train_size:],
                         labels=full.labels[cfg.train_size:],
                         boxes=full.boxes[cfg.train_size:])
        return train, val
    if cfg.dataset_path is None:
        raise ConfigurationError("cifar10 dataset needs dataset_path")
    if os.path.isdir(cfg.dataset_path):
        parts = [read_cifar10_batch(os.path.join(cfg.dataset_path, f"data_batch_{i}.bin"))
                 for i in range(1, 6)]
        train = parts[0]
        for p in parts[1:]:
            train.images = np.concatenate([train.images, p.images])
            train.labels = train.labels + p.labels
        val = read_cifar10_batch(os.path.join(cfg.dataset_path, "test_batch.bin"))
        return train, val
    full = read_cifar10_batch(cfg.dataset_path)
    split = len(full) - cfg.val_size
    train = type(full)(images=full.images[:split], labels=full.labels[:split])
    val = type(full)(images=full.images[split:], labels=full.labels[split:])
    return train, val


def prepare_inputs(cfg, images):
    x = images.astype(cfg.dtype)
    if cfg.dataset_kind == "cifar10":
        x = normalize_images(x)
    return x


class SGD:
    """Plain stochastic gradient descent with momentum and optional cosine decay."""

    def __init__(self, params, lr, momentum=0.9, cosine=True, epochs=1):
        self.params = params
        self.base_lr = lr
        self.momentum = momentum
        self.cosine = cosine
        self.epochs = epochs
        self.lr = lr
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    def set_epoch(self, epoch):
        if self.cosine and self.epochs > 1:
            self.lr = self.base_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / self.epochs))
        else:
            self.lr = self.base_lr

    def step(self, grad_masks=None):
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if grad_masks and name in grad_masks:
                g = g * grad_masks[name]
            v = self.velocity[name]
            v *= self.momentum
            v += g
            p.data -= p.data.dtype.type(self.lr) * v

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@contextmanager
def no_grad(params):
    flags = {name: p.requires_grad for name, p in params.items()}
    for p in params.values():
        p.requires_grad = False
    try:
        yield
    finally:
        for name, p in params.items():
            p.requires_grad = flags[name]


def load_frozen_teacher(path, cfg):
    """Rebuild a frozen teacher (all constants) from a checkpoint."""
    tensors, meta = load_checkpoint(path)
    saved = TrainConfig.from_dict(meta["config"])
    tcfg = teacher_config(saved)
    params = {name: T.constant(arr) for name, arr in tensors.items()}
    return Teacher(tcfg), params


def _accuracy(logits, labels):
    return float((logits.data.argmax(axis=1) == np.asarray(labels)).mean())


def _eval_accuracy(cfg, model, params, dataset, forward):
    correct = 0
    with no_grad(params):
        for lo in range(0, len(dataset), cfg.batch_size):
            x = prepare_inputs(cfg, dataset.images[lo:lo + cfg.batch_size])
            labels = np.asarray(dataset.labels[lo:lo + cfg.batch_size])
            logits = forward(x)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
    return correct / len(dataset)


def _fmt(x):
    return repr(float(x))


def run_training(cfg, log=print):
    """Train per config; writes the metrics CSV and checkpoints, returns a summary dict."""
    dtype = cfg.dtype
    rng = np.random.default_rng(cfg.seed)
    train, val = load_dataset(cfg)

    if cfg.model == "teacher":
        return _run_teacher(cfg, rng, train, val, dtype, log)

    scfg = student_config(cfg)
    student = Student(scfg)
    params = student.init_params(rng, dtype)

    teacher = teacher_params = None
    links = None
    grad_masks = {}
    if cfg.aal or cfg.hard_distill:
        if cfg.teacher_checkpoint is None:
            raise ConfigurationError("aal/hard_distill mode needs teacher_checkpoint")
        teacher, teacher_params = load_frozen_teacher(cfg.teacher_checkpoint, cfg)
    if cfg.aal:
        links = aal.LinkWeights(teacher.cfg.channels, scfg.map_channels, rng, dtype)
        if cfg.mask_spec:
            spec = linksel.load_range_spec(cfg.mask_spec)
            block_index = [j for j, w in enumerate(teacher.cfg.widths) for _ in range(w)]
            head_layer = [(m, n) for n in range(scfg.layers) for m in range(scfg.heads)]
            links.set_mask(linksel.build_range_mask(spec, block_index, head_layer))
        grad_masks["aal.W"] = links.mask

    sched = lambda_schedule(cfg)
    opt_params = dict(params)
    if links is not None:
        opt_params.update(links.trainable())
    opt = SGD(opt_params, cfg.lr, cfg.momentum, cfg.cosine_lr, cfg.epochs)

    def checkpoint_tensors():
        out = {name: p.data for name, p in params.items()}
        if links is not None:
            out["aal.W"] = links.W.data
            out["aal.b"] = links.b.data
            out["aal.mask"] = links.mask.astype(dtype)
        return out

    def write_ckpt(epoch):
        save_checkpoint(cfg.checkpoint_out, checkpoint_tensors(),
                        {"config": cfg.to_dict(), "epoch": epoch, "model": "student"})

    def forward_eval(x):
        logits, _ = student.forward(params, x)
        return logits

    summary = {"loss_att_first": None, "loss_att_last": None, "val_acc": None}
    with open(cfg.metrics_out, "w") as metrics:
        metrics.write("epoch,lambda,loss_ce,loss_att,train_acc,val_acc\n")
        for epoch in range(cfg.epochs):
            lam = aal.lambda_at(sched, epoch)
            opt.set_epoch(epoch)
            order = rng.permutation(len(train))
            aug_seed = int(rng.integers(0, 2 ** 31))
            ce_sum = att_sum = acc_sum = 0.0
            n_batches = 0
            for lo in range(0, len(train), cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                images = train.images[idx]
                if cfg.augment:
                    images = augment_batch(images, aug_seed + n_batches)
                x = prepare_inputs(cfg, images)
                labels = np.asarray(train.labels)[idx]

                opt.zero_grad()
                logits, attn = student.forward(params, x)
                ce = cross_entropy_loss(logits, labels)
                loss = ce
                att_val = None
                if cfg.aal or cfg.hard_distill:
                    t_logits, acts = teacher.forward(
                        teacher_params, x, training=False,
                        collect_grid=scfg.grid if cfg.aal else None)
                if cfg.aal:
                    att = aal.attention_loss(aal.augment(attn, links), acts)
                    att_val = float(att.data)
                    loss = aal.total_loss(loss, att, lam)
                if cfg.hard_distill:
                    loss = T.add(loss, aal.hard_distill_loss(logits, t_logits))
                if not np.isfinite(loss.data):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}; last checkpoint retained")
                loss.backward()
                opt.step(grad_masks)
                if links is not None:
                    links.apply_mask()

                ce_sum += float(ce.data)
                if att_val is not None:
                    att_sum += att_val
                acc_sum += _accuracy(logits, labels)
                n_batches += 1

            train_acc = acc_sum / n_batches
            val_acc = _eval_accuracy(cfg, student, params, val, forward_eval)
            att_mean = att_sum / n_batches if cfg.aal else None
            metrics.write(f"{epoch},{_fmt(lam)},{_fmt(ce_sum / n_batches)},"
                          f"{_fmt(att_mean) if att_mean is not None else ''},"
                          f"{_fmt(train_acc)},{_fmt(val_acc)}\n")
            metrics.flush()
            if cfg.aal:
                if epoch == 0:
                    summary["loss_att_first"] = att_mean
                summary["loss_att_last"] = att_mean
            summary["val_acc"] = val_acc
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1:
                write_ckpt(epoch)
            log(f"epoch {epoch}: ce={ce_sum / n_batches:.4f} "
                f"att={att_mean if att_mean is not None else float('nan'):.4f} "
                f"train_acc={train_acc:.3f} val_acc={val_acc:.3f}")
    return summary


def _run_teacher(cfg, rng, train, val, dtype, log):
    tcfg = teacher_config(cfg)
    teacher = Teacher(tcfg)
    params = teacher.init_params(rng, dtype)
    trainable = {name: p for name, p in params.items() if p.requires_grad}
    opt = SGD(trainable, cfg.lr, cfg.momentum, cfg.cosine_lr, cfg.epochs)

    def write_ckpt(epoch):
        save_checkpoint(cfg.checkpoint_out, {name: p.data for name, p in params.items()},
                        {"config": cfg.to_dict(), "epoch": epoch, "model": "teacher"})

    def forward_eval(x):
        logits, _ = teacher.forward(params, x, training=False)
        return logits

    summary = {"val_acc": None}
    with open(cfg.metrics_out, "w") as metrics:
        metrics.write("epoch,lambda,loss_ce,loss_att,train_acc,val_acc\n")
        for epoch in range(cfg.epochs):
            opt.set_epoch(epoch)
            order = rng.permutation(len(train))
            aug_seed = int(rng.integers(0, 2 ** 31))
            ce_sum = acc_sum = 0.0
            n_batches = 0
            for lo in range(0, len(train), cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                images = train.images[idx]
                if cfg.augment:
                    images = augment_batch(images, aug_seed + n_batches)
                x = prepare_inputs(cfg, images)
                labels = np.asarray(train.labels)[idx]
                opt.zero_grad()
                logits, _ = teacher.forward(params, x, training=True)
                ce = cross_entropy_loss(logits, labels)
                if not np.isfinite(ce.data):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}; last checkpoint retained")
                ce.backward()
                opt.step()
                ce_sum += float(ce.data)
                acc_sum += _accuracy(logits, labels)
                n_batches += 1
            train_acc = acc_sum / n_batches
            val_acc = _eval_accuracy(cfg, teacher, params, val, forward_eval)
            metrics.write(f"{epoch},,{_fmt(ce_sum / n_batches)},,"
                          f"{_fmt(train_acc)},{_fmt(val_acc)}\n")
            metrics.flush()
            summary["val_acc"] = val_acc
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1:
                write_ckpt(epoch)
            log(f"teacher epoch {epoch}: ce={ce_sum / n_batches:.4f} "
                f"train_acc={train_acc:.3f} val_acc={val_acc:.3f}")
    return summary
