"""Attention augmentation module: the 1x1-conv weighted sum against a naive
loop oracle, loss geometry, the decay schedule, and mask semantics."""

import numpy as np
import pytest

import attnlink.tensor as T
from attnlink import aal
from attnlink.errors import DimensionError, InputError, NumericError


def _random_links(rng, channels, num_maps, dtype=np.float64):
    links = aal.LinkWeights(channels, num_maps, rng, dtype)
    links.b.data[...] = rng.normal(size=channels)
    return links


def _augment_loops(W, b, mask, maps):
    """Explicit per-channel weighted sum, the reference for the 1x1 conv."""
    bsz, _, p, _ = maps.shape
    c = W.shape[0]
    out = np.zeros((bsz, c, p, p))
    for i in range(bsz):
        for ci in range(c):
            acc = np.full((p, p), b[ci])
            for j in range(W.shape[1]):
                acc = acc + mask[ci, j] * W[ci, j] * maps[i, j]
            out[i, ci] = acc
    return out


def test_augment_zero_weights_bias_only(rng):
    links = aal.LinkWeights(3, 4)
    links.b.data[...] = np.array([0.5, -1.0, 2.0])
    maps = T.constant(rng.uniform(size=(2, 4, 5, 5)))
    out = aal.augment(maps, links)
    expected = np.broadcast_to(links.b.data[None, :, None, None], (2, 3, 5, 5))
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_augment_one_hot_copies_a_map(rng):
    links = aal.LinkWeights(2, 4)
    links.W.data[0, 3] = 1.0
    links.W.data[1, 1] = 1.0
    maps = rng.uniform(size=(2, 4, 5, 5))
    out = aal.augment(T.constant(maps), links)
    np.testing.assert_allclose(out.data[:, 0], maps[:, 3], atol=1e-12)
    np.testing.assert_allclose(out.data[:, 1], maps[:, 1], atol=1e-12)


def test_augment_matches_loop_oracle_100_instances(rng):
    for _ in range(100):
        c, mn, p = int(rng.integers(1, 7)), int(rng.integers(1, 9)), int(rng.integers(2, 6))
        links = _random_links(rng, c, mn)
        maps = rng.normal(size=(2, mn, p, p))
        out = aal.augment(T.constant(maps), links)
        expected = _augment_loops(links.W.data, links.b.data, links.mask, maps)
        assert np.abs(out.data - expected).max() < 1e-6


def test_augment_linear_in_maps(rng):
    links = _random_links(rng, 4, 6)
    links.b.data[...] = 0.0
    x = rng.normal(size=(2, 6, 4, 4))
    y = rng.normal(size=(2, 6, 4, 4))
    combo = aal.augment(T.constant(2.0 * x + 3.0 * y), links).data
    parts = 2.0 * aal.augment(T.constant(x), links).data \
        + 3.0 * aal.augment(T.constant(y), links).data
    np.testing.assert_allclose(combo, parts, atol=1e-9)


def test_augment_channel_mismatch(rng):
    links = aal.LinkWeights(3, 4)
    with pytest.raises(DimensionError):
        aal.augment(T.constant(np.zeros((1, 5, 4, 4))), links)


# -- attention loss -----------------------------------------------------


def _acts(arr):
    return arr  # attention_loss accepts a bare array in place of an ActivationSet


def test_loss_zero_for_colinear_maps(rng):
    acts = rng.normal(size=(2, 3, 4, 4))
    aug = T.constant(0.37 * acts)
    assert float(aal.attention_loss(aug, _acts(acts)).data) < 1e-6


def test_loss_two_for_antipodal_maps(rng):
    acts = rng.normal(size=(2, 3, 4, 4))
    aug = T.constant(-acts)
    assert abs(float(aal.attention_loss(aug, _acts(acts)).data) - 2.0) < 1e-6


def test_loss_sqrt2_for_orthogonal_maps():
    aug = np.zeros((1, 1, 2, 2))
    acts = np.zeros((1, 1, 2, 2))
    aug[0, 0, 0, 0] = 1.0
    acts[0, 0, 1, 1] = 1.0
    val = float(aal.attention_loss(T.constant(aug), _acts(acts)).data)
    assert abs(val - np.sqrt(2.0)) < 1e-6


def test_loss_bounded(rng):
    for _ in range(20):
        aug = T.constant(rng.normal(size=(2, 5, 4, 4)))
        acts = rng.normal(size=(2, 5, 4, 4))
        val = float(aal.attention_loss(aug, _acts(acts)).data)
        assert 0.0 <= val <= 2.0


def test_loss_invariant_to_positive_rescaling_of_acts(rng):
    aug = T.constant(rng.normal(size=(2, 3, 4, 4)))
    acts = rng.normal(size=(2, 3, 4, 4))
    a = float(aal.attention_loss(aug, _acts(acts)).data)
    b = float(aal.attention_loss(aug, _acts(123.0 * acts)).data)
    assert abs(a - b) < 1e-6


def test_loss_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        aal.attention_loss(T.constant(np.zeros((1, 2, 4, 4))), np.zeros((1, 3, 4, 4)))


def test_loss_nan_rejected():
    bad = np.zeros((1, 1, 2, 2))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        aal.attention_loss(T.constant(bad), np.zeros((1, 1, 2, 2)))


# -- combined objective and schedule ------------------------------------


def test_total_loss_arithmetic():
    ce = T.constant(np.array(0.7))
    att = T.constant(np.array(0.001))
    assert abs(float(aal.total_loss(ce, att, 2000.0).data) - 2.7) < 1e-12
    assert float(aal.total_loss(ce, att, 0.0).data) == pytest.approx(0.7)
    zero = T.constant(np.array(0.0))
    assert float(aal.total_loss(ce, zero, 2000.0).data) == pytest.approx(0.7)


def test_total_loss_negative_lambda_rejected():
    with pytest.raises(InputError):
        aal.total_loss(T.constant(np.array(1.0)), T.constant(np.array(1.0)), -1.0)


def test_lambda_schedule_pinned_values():
    sched = aal.LambdaSchedule()
    assert aal.lambda_at(sched, 0) == 2000.0
    assert aal.lambda_at(sched, 1) == pytest.approx(1980.0)
    # first epoch past the switch, pinned against the closed form
    assert aal.lambda_at(sched, 201) == 2000.0 * 0.99 ** 200 * 0.98


def test_lambda_schedule_closed_form_and_monotone():
    sched = aal.LambdaSchedule()
    prev = np.inf
    for e in range(300):
        expected = 2000.0 * 0.99 ** min(e, 200) * 0.98 ** max(0, e - 200)
        val = aal.lambda_at(sched, e)
        assert val == expected
        assert 0.0 < val <= prev
        prev = val


def test_lambda_epoch_out_of_range():
    sched = aal.LambdaSchedule()
    with pytest.raises(InputError):
        aal.lambda_at(sched, 300)
    with pytest.raises(InputError):
        aal.lambda_at(sched, -1)


# -- hard distillation --------------------------------------------------


def test_hard_distill_matches_true_label_ce(rng):
    logits = T.constant(rng.normal(size=(4, 5)))
    labels = rng.integers(0, 5, size=4)
    t_logits = np.full((4, 5), -5.0)
    t_logits[np.arange(4), labels] = 5.0
    a = float(aal.hard_distill_loss(logits, t_logits).data)
    b = float(T.cross_entropy(logits, labels).data)
    assert abs(a - b) < 1e-12


def test_hard_distill_confident_student_limit(rng):
    t_logits = rng.normal(size=(3, 4))
    s = np.full((3, 4), -100.0)
    s[np.arange(3), t_logits.argmax(axis=1)] = 100.0
    assert float(aal.hard_distill_loss(T.constant(s), t_logits).data) < 1e-10


def test_hard_distill_against_high_precision(rng):
    s = rng.normal(size=(4, 10))
    t = rng.normal(size=(4, 10))
    labels = t.argmax(axis=1)
    z = s.astype(np.longdouble)
    logp = z - z.max(axis=1, keepdims=True) \
        - np.log(np.exp(z - z.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True))
    expected = float(-logp[np.arange(4), labels].mean())
    assert abs(float(aal.hard_distill_loss(T.constant(s), t).data) - expected) < 1e-10


def test_hard_distill_class_count_mismatch(rng):
    with pytest.raises(DimensionError):
        aal.hard_distill_loss(T.constant(np.zeros((2, 3))), np.zeros((2, 4)))


# -- mask semantics -----------------------------------------------------


def test_masked_entries_zero_and_grad_free(rng):
    links = _random_links(rng, 4, 6)
    mask = (rng.uniform(size=(4, 6)) > 0.5).astype(np.float64)
    links.set_mask(mask)
    assert (links.W.data[mask == 0] == 0.0).all()
    maps = T.constant(rng.normal(size=(2, 6, 4, 4)))
    acts = rng.normal(size=(2, 4, 4, 4))
    loss = aal.attention_loss(aal.augment(maps, links), acts)
    loss.backward()
    assert (links.W.grad[mask == 0] == 0.0).all()
    assert np.abs(links.W.grad[mask == 1]).sum() > 0.0


def test_set_mask_shape_checked(rng):
    links = aal.LinkWeights(4, 6)
    with pytest.raises(DimensionError):
        links.set_mask(np.ones((4, 5)))
