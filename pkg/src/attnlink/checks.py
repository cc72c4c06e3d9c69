"""Finite-difference check suite over every differentiable primitive.

Used by the `gradcheck` CLI command and the acceptance tests. All checks run
at float64; finite differences are too noisy at 32-bit.
"""

import numpy as np

from . import aal
from . import tensor as T
from .gradcheck import gradcheck
from .models import Student, StudentConfig, Teacher, TeacherConfig, cross_entropy_loss


def _p(rng, *shape):
    return T.parameter(rng.normal(0.0, 1.0, size=shape), np.float64)


def primitive_checks(rng):
    """Yield (name, params dict, nullary scalar-loss fn) per primitive."""
    checks = []

    a = _p(rng, 4, 5)
    b = _p(rng, 5, 3)
    checks.append(("matmul", {"a": a, "b": b}, lambda: T.tsum(T.mul(T.matmul(a, b), T.matmul(a, b)))))

    x = _p(rng, 3, 6)
    proj_s = T.constant(rng.normal(size=(3, 6)))
    checks.append(("softmax", {"x": x},
                   lambda: T.tsum(T.mul(T.softmax(x, -1), proj_s))))

    xc = _p(rng, 1, 3, 5, 5)
    wc = _p(rng, 2, 3, 3, 3)
    bc = _p(rng, 2)
    checks.append(("conv2d", {"x": xc, "w": wc, "b": bc},
                   lambda: T.tsum(T.mul(T.conv2d(xc, wc, bc, 1, 1), T.conv2d(xc, wc, bc, 1, 1)))))

    xl = _p(rng, 2, 4, 6)
    gl = _p(rng, 6)
    bl = _p(rng, 6)
    checks.append(("layer_norm", {"x": xl, "g": gl, "b": bl},
                   lambda: T.tsum(T.mul(T.layer_norm(xl, gl, bl), T.layer_norm(xl, gl, bl)))))

    xb = _p(rng, 3, 2, 4, 4)
    gb = _p(rng, 2)
    bb = _p(rng, 2)

    def bn_loss():
        rm = np.zeros(2)
        rv = np.ones(2)
        y = T.batch_norm(xb, gb, bb, rm, rv, training=True)
        return T.tsum(T.mul(y, y))
    checks.append(("batch_norm", {"x": xb, "g": gb, "b": bb}, bn_loss))

    xr = _p(rng, 3, 4)
    checks.append(("relu", {"x": xr}, lambda: T.tsum(T.mul(T.relu(xr), T.relu(xr)))))
    xg = _p(rng, 3, 4)
    checks.append(("gelu", {"x": xg}, lambda: T.tsum(T.mul(T.gelu(xg), T.gelu(xg)))))

    xp = _p(rng, 2, 2, 4, 4)
    checks.append(("max_pool2d", {"x": xp},
                   lambda: T.tsum(T.mul(T.max_pool2d(xp), T.max_pool2d(xp)))))

    xf = _p(rng, 3, 5)
    wf = _p(rng, 5, 2)
    bf = _p(rng, 2)
    checks.append(("linear", {"x": xf, "w": wf, "b": bf},
                   lambda: T.tsum(T.mul(T.linear(xf, wf, bf), T.linear(xf, wf, bf)))))

    xa = _p(rng, 3, 4)
    ya = _p(rng, 3, 4)
    checks.append(("add", {"x": xa, "y": ya}, lambda: T.tsum(T.mul(T.add(xa, ya), T.add(xa, ya)))))
    xs = _p(rng, 3, 4)
    checks.append(("scale", {"x": xs}, lambda: T.tsum(T.mul(T.scale(xs, 1.7), T.scale(xs, 1.7)))))
    xm = _p(rng, 3, 4)
    checks.append(("mean", {"x": xm}, lambda: T.mul(T.tmean(xm), T.tmean(xm))))
    xgap = _p(rng, 2, 3, 4, 4)
    checks.append(("global_avg_pool", {"x": xgap},
                   lambda: T.tsum(T.mul(T.global_avg_pool(xgap), T.global_avg_pool(xgap)))))

    xn = _p(rng, 2, 6)
    proj_n = T.constant(rng.normal(size=(2, 6)))
    checks.append(("l2_normalize", {"x": xn},
                   lambda: T.tsum(T.mul(T.l2_normalize(xn), proj_n))))

    lg = _p(rng, 4, 3)
    lab = np.array([0, 2, 1, 2])
    checks.append(("cross_entropy", {"logits": lg}, lambda: T.cross_entropy(lg, lab)))
    return checks


def composed_objective_check(rng, tol=1e-5):
    """Gradcheck the full combined objective (CE + lambda * attention loss)
    through student and link parameters on a 2-sample toy batch."""
    scfg = StudentConfig(image_size=8, patch_size=4, embed_dim=8, layers=2, heads=2,
                         mlp_hidden=12, classes=2)
    tcfg = TeacherConfig(widths=(3, 4), classes=2, image_size=8)
    student = Student(scfg)
    teacher = Teacher(tcfg)
    sp = student.init_params(rng, np.float64)
    tp = teacher.init_params(rng, np.float64)
    for p in tp.values():
        p.requires_grad = False
    links = aal.LinkWeights(tcfg.channels, scfg.map_channels, rng, np.float64)
    images = rng.uniform(0.0, 1.0, size=(2, 3, 8, 8))
    labels = np.array([0, 1])
    _, acts = teacher.forward(tp, images, training=False, collect_grid=scfg.grid)

    def loss_fn():
        logits, attn = student.forward(sp, images)
        ce = cross_entropy_loss(logits, labels)
        att = aal.attention_loss(aal.augment(attn, links), acts)
        return aal.total_loss(ce, att, 3.0)

    params = dict(sp)
    params.update(links.trainable())
    return gradcheck(loss_fn, params, tol=tol)


def run_all_checks(tol=1e-5, seed=0, verbose=False):
    """Run every primitive check plus the composed objective; returns failures."""
    rng = np.random.default_rng(seed)
    failures = []
    for name, params, fn in primitive_checks(rng):
        report = gradcheck(fn, params, tol=tol)
        status = "ok" if report.passed else "FAIL"
        if verbose:
            print(f"{name}: max rel err {report.max_rel_err:.3e} [{status}]")
        if not report.passed:
            failures.append((name, report.max_rel_err))
    report = composed_objective_check(rng, tol=tol)
    if verbose:
        print(f"combined objective: max rel err {report.max_rel_err:.3e} "
              f"[{'ok' if report.passed else 'FAIL'}]")
    if not report.passed:
        failures.append(("combined objective", report.max_rel_err))
    return failures
