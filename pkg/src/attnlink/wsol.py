"""Weakly supervised localization evaluation from averaged attention maps."""

import numpy as np
from scipy import ndimage

from .tensor import bicubic_resize

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
DEFAULT_TAUS = tuple(round(0.05 * k, 2) for k in range(1, 20))  # 0.05 .. 0.95
DEFAULT_DELTAS = (0.3, 0.5, 0.7)


def box_iou(a, b):
    """IoU of two half-open integer pixel boxes (x0, y0, x1, y1)."""
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union else 0.0


def extract_box(heat, tau):
    """Bounding box of the largest 4-connected component above tau * max, or None."""
    peak = heat.max()
    if peak <= 0:
        return None
    mask = heat >= tau * peak
    labeled, count = ndimage.label(mask, structure=FOUR_CONNECTED)
    if count == 0:
        return None
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, index=np.arange(1, count + 1))
    comp = labeled == (int(np.argmax(sizes)) + 1)
    rows = np.nonzero(comp.any(axis=1))[0]
    cols = np.nonzero(comp.any(axis=0))[0]
    return (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def mean_attention_heat(attn_maps, out_size=32):
    """Per-image mean of all M*N attention maps, bicubic-upsampled to the image size."""
    mean_maps = attn_maps.mean(axis=1)  # [B, P, P]
    return bicubic_resize(mean_maps, out_size, out_size)


def max_box_acc(heats, gt_boxes, deltas=DEFAULT_DELTAS, taus=DEFAULT_TAUS):
    """MaxBoxAcc: per binarization threshold the fraction of IoU > delta, maximized over taus.

    Returns (per-delta dict, per-tau accuracy matrix [len(taus), len(deltas)]).
    An empty binarized mask scores IoU 0 for that image.
    """
    heats = np.asarray(heats)
    accs = np.zeros((len(taus), len(deltas)))
    for ti, tau in enumerate(taus):
        ious = []
        for heat, gt in zip(heats, gt_boxes):
            box = extract_box(heat, tau)
            ious.append(box_iou(box, gt) if box is not None else 0.0)
        ious = np.asarray(ious)
        for di, delta in enumerate(deltas):
            accs[ti, di] = float((ious > delta).mean())
    return {delta: float(accs[:, di].max()) for di, delta in enumerate(deltas)}, accs


def wsol_report(heats, gt_boxes, deltas=DEFAULT_DELTAS, taus=DEFAULT_TAUS):
    """Per-delta MaxBoxAcc plus the averaged [0.3, 0.5] and [0.3, 0.5, 0.7] variants."""
    per_delta, _ = max_box_acc(heats, gt_boxes, deltas, taus)
    report = {f"maxboxacc@{delta}": v for delta, v in per_delta.items()}
    if 0.3 in per_delta and 0.5 in per_delta:
        report["maxboxacc@[0.3,0.5]"] = (per_delta[0.3] + per_delta[0.5]) / 2.0
    if all(d in per_delta for d in (0.3, 0.5, 0.7)):
        report["maxboxacc@[0.3,0.5,0.7]"] = (per_delta[0.3] + per_delta[0.5] + per_delta[0.7]) / 3.0
    return report
