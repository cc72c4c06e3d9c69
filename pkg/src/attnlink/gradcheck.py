"""Central finite-difference verification of backward rules."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .tensor import Tensor


@dataclass
class GradcheckReport:
    max_rel_err: float
    per_param: dict = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance


def gradcheck(f, params, h=1e-6, tol=1e-5):
    """Check the analytic gradient of ``f`` against central differences.

    ``f`` is a nullary callable returning a scalar Tensor, reading the given
    parameters (a dict of name -> Tensor with requires_grad set). Run at
    float64; finite differences are unreliable at 32-bit precision.

    Relative error per element is |a - n| / max(|a|, |n|, 1), so small-gradient
    entries degrade gracefully to an absolute comparison.
    """
    if isinstance(params, (list, tuple)):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    loss = f()
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("gradcheck target must return a scalar Tensor")
    if not np.isfinite(loss.data).all():
        raise NumericError("gradcheck target produced a non-finite loss")
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    report = GradcheckReport(max_rel_err=0.0, tolerance=tol)
    for name, p in params.items():
        num = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * h)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1.0)
        err = float(np.max(np.abs(a - num) / denom)) if a.size else 0.0
        report.per_param[name] = err
        report.max_rel_err = max(report.max_rel_err, err)
    return report
