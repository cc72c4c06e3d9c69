"""Student and teacher models: attention-map extraction contracts, activation
collection against a hook-and-compare oracle, and gradient isolation."""

import numpy as np
import pytest

import attnlink.tensor as T
from attnlink import aal
from attnlink.errors import ConfigurationError, DimensionError
from attnlink.models import (Student, StudentConfig, Teacher, TeacherConfig,
                             cross_entropy_loss)

SCFG = StudentConfig(image_size=16, patch_size=4, embed_dim=16, layers=2, heads=2,
                     mlp_hidden=24, classes=3)


def _student_batch(rng, cfg=SCFG, batch=2):
    student = Student(cfg)
    params = student.init_params(rng, np.float64)
    images = rng.uniform(0.0, 1.0, size=(batch, 3, cfg.image_size, cfg.image_size))
    return student, params, images


def test_attention_stack_shape_and_normalization(rng):
    student, params, images = _student_batch(rng)
    _, attn = student.forward(params, images)
    p = SCFG.grid
    assert attn.maps.data.shape == (2, SCFG.map_channels, p, p)
    sums = attn.maps.data.reshape(2, SCFG.map_channels, -1).sum(axis=-1)
    np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-6)
    assert (attn.maps.data > 0).all() and (attn.maps.data < 1).all()
    assert attn.index == [(m, n) for n in range(SCFG.layers) for m in range(SCFG.heads)]


def test_zero_qk_gives_uniform_maps(rng):
    student, params, images = _student_batch(rng)
    for i in range(SCFG.layers):
        for name in ("wq", "wk", "bq", "bk"):
            params[f"blocks.{i}.attn.{name}"].data[...] = 0.0
    _, attn = student.forward(params, images)
    uniform = 1.0 / SCFG.grid ** 2
    assert np.abs(attn.maps.data - uniform).max() < 1e-7


def test_maps_match_recomputation_from_cached_qk(rng):
    student, params, images = _student_batch(rng)
    _, attn, qk = student.forward(params, images, return_qk=True)
    p, dh = SCFG.grid, SCFG.head_dim
    for n, (q, k) in enumerate(qk):
        logits = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh)
        row = logits[:, :, 0, 1:]
        e = np.exp(row - row.max(axis=-1, keepdims=True))
        maps = (e / e.sum(axis=-1, keepdims=True)).reshape(2, SCFG.heads, p, p)
        chans = slice(n * SCFG.heads, (n + 1) * SCFG.heads)
        assert np.abs(attn.maps.data[:, chans] - maps).max() < 1e-6


def test_wrong_image_size_rejected(rng):
    student, params, _ = _student_batch(rng)
    with pytest.raises(DimensionError):
        student.forward(params, np.zeros((1, 3, 8, 8)))


def test_student_config_validation():
    with pytest.raises(ConfigurationError):
        StudentConfig(image_size=30, patch_size=4)
    with pytest.raises(ConfigurationError):
        StudentConfig(embed_dim=10, heads=4)


def test_unscaled_map_variant_differs(rng):
    s1, params, images = _student_batch(rng)
    s2 = Student(StudentConfig(**{**SCFG.__dict__, "scaled_maps": False}))
    _, a1 = s1.forward(params, images)
    _, a2 = s2.forward(params, images)
    sums = a2.maps.data.reshape(2, SCFG.map_channels, -1).sum(axis=-1)
    np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-6)
    assert np.abs(a1.maps.data - a2.maps.data).max() > 1e-6


# -- teacher ------------------------------------------------------------

TCFG = TeacherConfig(widths=(4, 6), classes=3, image_size=16)


def test_activation_set_shape(rng):
    teacher = Teacher(TCFG)
    params = teacher.init_params(rng, np.float64)
    images = rng.uniform(size=(2, 3, 16, 16))
    _, acts = teacher.forward(params, images, training=False, collect_grid=4)
    assert acts.maps.shape == (2, TCFG.channels, 4, 4)
    assert acts.block_index == [0] * 4 + [1] * 6
    assert isinstance(acts.maps, np.ndarray)


def test_activations_match_hooked_recomputation(rng):
    """Oracle: re-run the conv/norm stack by hand and resize the tapped maps."""
    teacher = Teacher(TCFG)
    params = teacher.init_params(rng, np.float64)
    images = rng.uniform(size=(2, 3, 16, 16))
    _, acts = teacher.forward(params, images, training=False, collect_grid=4)

    x = T.constant(images)
    taps = []
    for i in range(len(TCFG.widths)):
        x = T.conv2d(x, params[f"blocks.{i}.conv.w"], params[f"blocks.{i}.conv.b"],
                     stride=1, padding=1)
        x = T.batch_norm(x, params[f"blocks.{i}.bn.g"], params[f"blocks.{i}.bn.b"],
                         params[f"blocks.{i}.bn.rm"].data.copy(),
                         params[f"blocks.{i}.bn.rv"].data.copy(), training=False)
        taps.append(T.bicubic_resize(x.data, 4, 4))
        x = T.max_pool2d(T.relu(x))
    expected = np.concatenate(taps, axis=1)
    assert np.abs(acts.maps - expected).max() < 1e-9


def test_block_at_target_resolution_passes_through(rng):
    """A block whose spatial size already equals the grid resizes to itself."""
    cfg = TeacherConfig(widths=(4, 6), classes=3, image_size=16)
    teacher = Teacher(cfg)
    params = teacher.init_params(rng, np.float64)
    images = rng.uniform(size=(1, 3, 16, 16))
    # second block sees 8x8 input after one pool; collect at grid 8
    _, acts = teacher.forward(params, images, training=False, collect_grid=8)
    x = T.conv2d(T.constant(images), params["blocks.0.conv.w"], params["blocks.0.conv.b"],
                 stride=1, padding=1)
    x = T.batch_norm(x, params["blocks.0.bn.g"], params["blocks.0.bn.b"],
                     params["blocks.0.bn.rm"].data.copy(), params["blocks.0.bn.rv"].data.copy(),
                     training=False)
    x = T.max_pool2d(T.relu(x))
    x = T.conv2d(x, params["blocks.1.conv.w"], params["blocks.1.conv.b"], stride=1, padding=1)
    x = T.batch_norm(x, params["blocks.1.bn.g"], params["blocks.1.bn.b"],
                     params["blocks.1.bn.rm"].data.copy(), params["blocks.1.bn.rv"].data.copy(),
                     training=False)
    np.testing.assert_array_equal(acts.maps[:, 4:], x.data)


def test_no_gradient_reaches_teacher(rng):
    """Backward through the combined objective leaves every teacher buffer grad-free."""
    student = Student(SCFG)
    sp = student.init_params(rng, np.float64)
    teacher = Teacher(TCFG)
    tp = {name: T.constant(p.data) for name, p in teacher.init_params(rng, np.float64).items()}
    links = aal.LinkWeights(TCFG.channels, SCFG.map_channels, rng, np.float64)
    images = rng.uniform(size=(2, 3, 16, 16))
    labels = np.array([0, 1])
    _, acts = teacher.forward(tp, images, training=False, collect_grid=SCFG.grid)
    logits, attn = student.forward(sp, images)
    loss = aal.total_loss(cross_entropy_loss(logits, labels),
                          aal.attention_loss(aal.augment(attn, links), acts), 2.0)
    loss.backward()
    assert all(p.grad is None for p in tp.values())
    assert all(sp[name].grad is not None for name in sp)
    assert links.W.grad is not None and links.b.grad is not None


def test_batch_permutation_equivariance(rng):
    student, params, images = _student_batch(rng, batch=4)
    perm = np.array([2, 0, 3, 1])
    l1, a1 = student.forward(params, images)
    l2, a2 = student.forward(params, images[perm])
    np.testing.assert_allclose(l2.data, l1.data[perm], atol=1e-9)
    np.testing.assert_allclose(a2.maps.data, a1.maps.data[perm], atol=1e-9)


def test_teacher_config_validation():
    with pytest.raises(ConfigurationError):
        TeacherConfig(widths=())
    with pytest.raises(ConfigurationError):
        TeacherConfig(tap="pre_conv")
