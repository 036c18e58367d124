"""Central finite-difference gradient oracle (64-bit, h=1e-5).

The numeric side only ever evaluates forward passes, so it stays independent
of the backward implementation it checks.
"""

import numpy as np

from empchat.tensor import Tensor

H = 1e-5
TOL = 1e-4
# denominator floor: below this magnitude the comparison is absolute, which
# keeps finite-difference noise on near-zero gradients from reading as failure
FLOOR = 1e-3


def relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return np.abs(analytic - numeric) / denom


def fd_check(make_loss, arrays, h=H, tol=TOL):
    """Assert analytic gradients of a scalar loss match central differences.

    make_loss receives one Tensor per input array (float64, requires_grad)
    and must return a scalar Tensor.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = make_loss(*tensors)
    loss.backward()

    def value_at(candidate):
        frozen = [Tensor(c.copy()) for c in candidate]
        return float(make_loss(*frozen).data)

    worst = 0.0
    for k, base in enumerate(arrays):
        analytic = tensors[k].grad
        assert analytic is not None, f"input {k} received no gradient"
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            bumped = [a.copy() for a in arrays]
            bumped[k].reshape(-1)[j] = flat[j] + h
            up = value_at(bumped)
            bumped[k].reshape(-1)[j] = flat[j] - h
            down = value_at(bumped)
            num_flat[j] = (up - down) / (2.0 * h)
        err = relative_error(analytic, numeric)
        worst = max(worst, float(err.max()) if err.size else 0.0)
        assert err.size == 0 or err.max() < tol, (
            f"input {k}: max rel grad error {err.max():.3e} >= {tol:.0e}"
        )
    return worst
