"""Toy calorimeter regressor: conv3d(1 -> C, k^3) -> ReLU -> flatten -> dense -> scalar.

Trained with mean-squared error against the total deposited energy. The
parameters are an ordered set of named tensors that flatten to one vector,
which is what the allreduce exchanges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .conv import Conv3dSpec, FlopCount, conv3d_backward, conv3d_forward

CONV_W, CONV_B, DENSE_W, DENSE_B = "conv.weight", "conv.bias", "dense.weight", "dense.bias"


@dataclass
class ModelParams:
    tensors: dict

    @property
    def names(self):
        return list(self.tensors)

    @property
    def size(self):
        return sum(t.size for t in self.tensors.values())

    def __getitem__(self, name):
        return self.tensors[name]

    def flatten(self):
        return np.concatenate([t.reshape(-1) for t in self.tensors.values()])

    def unflatten(self, flat):
        """New parameters with this layout filled from the flat vector."""
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != self.size:
            raise ShapeMismatch(f"flat vector has {flat.size} values, model needs {self.size}")
        out, off = {}, 0
        for name, t in self.tensors.items():
            out[name] = flat[off:off + t.size].reshape(t.shape).copy()
            off += t.size
        return ModelParams(out)

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def conv_spec(self):
        w = self.tensors[CONV_W]
        return Conv3dSpec(w.shape[1], w.shape[0], w.shape[2:])


def init_params(side, seed=0, channels=4, kernel=3):
    """He-style random initialisation; deterministic in *seed*."""
    spec = Conv3dSpec(1, channels, kernel)
    features = channels * int(np.prod(spec.output_extents((side, side, side))))
    rng = np.random.default_rng(seed)
    fan_in = kernel ** 3
    return ModelParams({
        CONV_W: rng.normal(0.0, np.sqrt(2.0 / fan_in), spec.weight_shape),
        CONV_B: np.full(channels, 0.1),
        DENSE_W: rng.normal(0.0, np.sqrt(1.0 / features), (1, features)),
        DENSE_B: np.zeros(1),
    })


def zeros_like(params):
    return ModelParams({k: np.zeros_like(v) for k, v in params.tensors.items()})


def _check_batch(params, batch, targets):
    batch = np.asarray(batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if batch.ndim != 5 or batch.shape[1] != 1:
        raise ShapeMismatch(f"batch must be (n, 1, X, Y, Z), got {batch.shape}")
    if batch.shape[0] != targets.shape[0]:
        raise ShapeMismatch(f"{batch.shape[0]} samples but {targets.shape[0]} targets")
    spec = params.conv_spec()
    features = spec.out_channels * int(np.prod(spec.output_extents(batch.shape[2:])))
    if params[DENSE_W].shape != (1, features):
        raise ShapeMismatch(f"dense layer expects {params[DENSE_W].shape[1]} features, input gives {features}")
    return batch, targets, spec


def _forward(params, batch, targets):
    batch, targets, spec = _check_batch(params, batch, targets)
    z, conv_flops = conv3d_forward(batch, spec, params[CONV_W], params[CONV_B])
    a = np.maximum(z, 0.0)
    flat = a.reshape(batch.shape[0], -1)
    pred = flat @ params[DENSE_W][0] + params[DENSE_B][0]
    resid = pred - targets
    loss = float(np.mean(resid * resid))
    dense_flops = FlopCount(flat.size)
    return loss, conv_flops + dense_flops, (batch, spec, z, flat, resid, conv_flops, dense_flops)


def predict(params, batch):
    batch = np.asarray(batch, dtype=np.float64)
    _, _, cache = _forward(params, batch, np.zeros(batch.shape[0]))
    return cache[4]


def model_forward_loss(params, batch, targets):
    """Return ``(mean squared error, FlopCount of the forward pass)``."""
    loss, flops, _ = _forward(params, batch, targets)
    return loss, flops


def loss_and_grad(params, batch, targets):
    """Return ``(loss, gradient ModelParams, FlopCount forward+backward)``.

    The backward pass skips the input gradient of the first layer, so it
    costs one conv-sized contraction plus two dense-sized ones.
    """
    loss, fwd_flops, (batch, spec, z, flat, resid, conv_flops, dense_flops) = _forward(params, batch, targets)
    n = batch.shape[0]
    dpred = 2.0 * resid / n
    g_dense_w = (dpred @ flat)[None, :]
    g_dense_b = np.array([dpred.sum()])
    dz = np.outer(dpred, params[DENSE_W][0]).reshape(z.shape) * (z > 0)
    _, g_conv_w, g_conv_b = conv3d_backward(dz, batch, spec, params[CONV_W], need_input_grad=False)
    grads = ModelParams({CONV_W: g_conv_w, CONV_B: g_conv_b, DENSE_W: g_dense_w, DENSE_B: g_dense_b})
    return loss, grads, fwd_flops + conv_flops + 2 * dense_flops


def model_backward(params, batch, targets):
    """Exact gradient of the mean loss with respect to every parameter."""
    return loss_and_grad(params, batch, targets)[1]
