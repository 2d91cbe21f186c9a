"""Central finite-difference gradient checking against the tape."""

from __future__ import annotations

import numpy as np

from salgraph import tensor as T
from salgraph.tensor import Tensor

H_STEP = 1e-5
REL_TOL = 1e-4
ABS_CUTOFF = 1e-8  # differences below this are finite-difference noise


def numeric_gradient(fn, arrays: list[np.ndarray], which: int,
                     h: float = H_STEP) -> np.ndarray:
    """Central differences of fn w.r.t. arrays[which], elementwise."""
    base = [a.copy() for a in arrays]
    target = base[which]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(*base)
        flat[i] = orig - h
        down = fn(*base)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff < ABS_CUTOFF, 0.0, diff / np.maximum(scale, 1e-12))
    return float(rel.max()) if rel.size else 0.0


def check_gradients(build, arrays: list[np.ndarray], h: float = H_STEP,
                    rtol: float = REL_TOL) -> float:
    """Assert tape gradients match central differences for every input.

    ``build`` maps Tensors to a scalar Tensor; returns the worst relative
    error across all inputs for reporting.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build(*tensors)
    T.backward(loss)

    def scalar_fn(*arrs):
        with T.no_grad():
            return build(*[Tensor(a) for a in arrs]).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        assert t.grad is not None, f"input {i} received no gradient"
        numeric = numeric_gradient(scalar_fn, arrays, i, h=h)
        err = max_rel_error(t.grad, numeric)
        assert err < rtol, (f"input {i}: max relative gradient error {err:.3e} "
                            f"exceeds {rtol}")
        worst = max(worst, err)
    return worst
