"""Center-bias priors, the fusion head, and the training losses.

The priors are R learnable anisotropic Gaussians evaluated analytically
on the normalized pixel-center grid.  The head concatenates the graph
map, the baseline map, and the priors, applies two 3x3 convolutions,
upsamples bilinearly to image size, and squashes through a sigmoid.
The saliency loss is L1 minus weighted CC and NSS terms.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

N_PRIORS = 16
HEAD_HIDDEN = 16
TWO_PI = 2.0 * np.pi


def _inv_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


class PriorParams:
    """R Gaussians with learnable means and softplus-parameterized spreads."""

    def __init__(self, rng: np.random.Generator, n_priors: int = N_PRIORS,
                 sigma_init: float = 0.2):
        self.n_priors = n_priors
        self.mu = Tensor(rng.uniform(0.35, 0.65, size=(n_priors, 2)),
                         requires_grad=True)
        self.rho = T.full((n_priors, 2), _inv_softplus(sigma_init),
                          requires_grad=True)

    def sigmas(self) -> Tensor:
        """Positive spreads [R, 2], columns (sigma_x, sigma_y)."""
        return T.softplus(self.rho)

    def named_parameters(self, prefix: str = "prior") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.mu", self.mu), (f"{prefix}.rho", self.rho)]


def prior_maps(params: PriorParams, grid_h: int, grid_w: int) -> Tensor:
    """Evaluate the R Gaussian priors: [R, grid_h, grid_w].

    Pixel centers live at ((j + 0.5) / W, (i + 0.5) / H) in normalized
    coordinates; each map's peak value is 1 / (2 pi sigma_x sigma_y).
    """
    r = params.n_priors
    xs = Tensor(((np.arange(grid_w) + 0.5) / grid_w).reshape(1, grid_w))
    ys = Tensor(((np.arange(grid_h) + 0.5) / grid_h).reshape(1, grid_h))
    ones_x = Tensor(np.ones((1, grid_w)))
    ones_y = Tensor(np.ones((1, grid_h)))

    sig = params.sigmas()
    mu_x = T.narrow(params.mu, 1, 0, 1)  # [R, 1]
    mu_y = T.narrow(params.mu, 1, 1, 1)
    sig_x = T.narrow(sig, 1, 0, 1)
    sig_y = T.narrow(sig, 1, 1, 1)

    # [R, W] and [R, H] squared z-scores via rank-1 expansions
    dx = mu_x @ ones_x - Tensor(np.ones((r, 1))) @ xs
    dy = mu_y @ ones_y - Tensor(np.ones((r, 1))) @ ys
    den_x = (2.0 * sig_x * sig_x) @ ones_x
    den_y = (2.0 * sig_y * sig_y) @ ones_y
    gx = T.exp(-(dx * dx) / den_x)
    gy = T.exp(-(dy * dy) / den_y)
    coef = 1.0 / (TWO_PI * sig_x * sig_y)  # [R, 1]

    maps = []
    for i in range(r):
        col = T.transpose2d(T.narrow(gy, 0, i, 1))  # [H, 1]
        row = T.narrow(gx, 0, i, 1)  # [1, W]
        scale = T.reshape(T.narrow(coef, 0, i, 1), ())
        maps.append(scale * (col @ row))
    return T.stack(maps)


class HeadParams:
    """Two 3x3 convolutions: in_channels -> 16 -> 1."""

    def __init__(self, rng: np.random.Generator, in_channels: int,
                 hidden: int = HEAD_HIDDEN):
        self.in_channels = in_channels
        self.k1 = T.he_normal((hidden, in_channels, 3, 3),
                              fan_in=in_channels * 9, rng=rng)
        self.b1 = T.zeros((hidden,), requires_grad=True)
        self.k2 = T.he_normal((1, hidden, 3, 3), fan_in=hidden * 9, rng=rng)
        self.b2 = T.zeros((1,), requires_grad=True)

    def named_parameters(self, prefix: str = "head") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.conv1.kernel", self.k1), (f"{prefix}.conv1.bias", self.b1),
                (f"{prefix}.conv2.kernel", self.k2), (f"{prefix}.conv2.bias", self.b2)]


def head_predict(params: HeadParams, parts: list[Tensor],
                 out_h: int, out_w: int) -> Tensor:
    """Fuse feature maps into a saliency map in (0, 1).

    ``parts`` are channel-stacked maps sharing the grid: [C_i, H', W'] each,
    or batched [B, C_i, H', W'].  Output is [out_h, out_w] (or batched).
    """
    batched = parts[0].ndim == 4
    x = parts[0] if len(parts) == 1 else T.concat(parts, axis=1 if batched else 0)
    h = T.leaky_relu(T.conv2d(x, params.k1, params.b1), slope=0.01)
    logits = T.conv2d(h, params.k2, params.b2)
    up = T.bilinear_resize(logits, out_h, out_w)
    shape = (up.shape[0], out_h, out_w) if batched else (out_h, out_w)
    return T.sigmoid(T.reshape(up, shape))


def loss_sal(yhat: Tensor, y: Tensor, fixations: np.ndarray,
             beta: float, gamma: float) -> Tensor:
    """L1(yhat, y) - beta * CC(yhat, y) - gamma * NSS(yhat, fixations).

    All terms ride the tape.  A constant prediction or target drops the
    degenerate correlation/standardization terms instead of dividing by
    zero (their gradient contribution is zero in that case).
    """
    if yhat.shape != y.shape or yhat.ndim != 2:
        raise ValueError(f"map shapes differ: {yhat.shape} vs {y.shape}")
    fixations = np.asarray(fixations, dtype=np.intp)
    if fixations.ndim != 2 or fixations.shape[1] != 2 or not len(fixations):
        raise ValueError("fixations must be a nonempty [n, 2] array of (x, y)")
    h, w = yhat.shape

    loss = T.mean(T.absolute(yhat - y))

    # constant maps would otherwise standardize rounding dust to +-1
    a_flat = yhat.data.max() == yhat.data.min()
    b_flat = y.data.max() == y.data.min()
    a0 = yhat - T.mean(yhat)
    b0 = y - T.mean(y)
    var_a = T.mean(a0 * a0)
    var_b = T.mean(b0 * b0)

    if beta != 0.0 and not a_flat and not b_flat \
            and var_a.item() > 0.0 and var_b.item() > 0.0:
        cc = T.mean(a0 * b0) / T.sqrt(var_a * var_b)
        loss = loss - beta * cc

    if gamma != 0.0 and not a_flat and var_a.item() > 0.0:
        z = a0 / T.sqrt(var_a)
        flat = T.reshape(z, (h * w,))
        picked = T.take_rows(flat, fixations[:, 1] * w + fixations[:, 0])
        loss = loss - gamma * T.mean(picked)

    return loss


def loss_total(sal: Tensor, prox_terms: list[Tensor], lam: float) -> Tensor:
    """Composite objective: saliency loss plus lam times summed proximity losses."""
    if lam == 0.0 or not prox_terms:
        return sal
    acc = prox_terms[0]
    for term in prox_terms[1:]:
        acc = acc + term
    return sal + lam * acc
