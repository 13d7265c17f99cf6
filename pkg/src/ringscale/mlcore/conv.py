"""Direct 3D convolution (cross-correlation) with exact FLOP accounting.

Layouts: input ``(batch, in_ch, X, Y, Z)``, weight ``(out_ch, in_ch, kx, ky, kz)``,
bias ``(out_ch,)``. The loop runs over kernel offsets and contracts channels
for each shifted input window, so every output voxel receives exactly
``in_ch * kx * ky * kz`` multiply-adds, as in the textbook 7-deep loop nest.
Bias additions are not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch, ValidationError


@dataclass(frozen=True)
class FlopCount:
    multiply_adds: int = 0

    @property
    def total_flops(self):
        return 2 * self.multiply_adds

    def __add__(self, other):
        return FlopCount(self.multiply_adds + other.multiply_adds)

    def __mul__(self, k):
        return FlopCount(self.multiply_adds * k)

    __rmul__ = __mul__


def _triple(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v, v, v)


@dataclass(frozen=True)
class Conv3dSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3, 3)
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)

    def __post_init__(self):
        for name in ("kernel", "stride", "padding"):
            value = _triple(getattr(self, name))
            if len(value) != 3:
                raise ValidationError(f"{name} needs three extents")
            object.__setattr__(self, name, tuple(int(v) for v in value))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValidationError("channel counts must be >= 1")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValidationError("kernel extents and strides must be >= 1")
        if min(self.padding) < 0:
            raise ValidationError("padding must be >= 0")

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels) + self.kernel

    def output_extents(self, spatial):
        out = []
        for i, k, s, p in zip(spatial, self.kernel, self.stride, self.padding):
            o = (i + 2 * p - k) // s + 1
            if i + 2 * p < k or o < 1:
                raise ShapeMismatch(f"input extent {i} too small for kernel {k} with padding {p}")
            out.append(o)
        return tuple(out)

    def flops(self, batch, spatial):
        ox, oy, oz = self.output_extents(spatial)
        kx, ky, kz = self.kernel
        return FlopCount(batch * self.out_channels * ox * oy * oz * self.in_channels * kx * ky * kz)


def _check(x, spec, weight):
    if x.ndim != 5:
        raise ShapeMismatch(f"expected (batch, channels, X, Y, Z) input, got shape {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatch(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ShapeMismatch(f"weight shape {weight.shape} != {spec.weight_shape}")
    return spec.output_extents(x.shape[2:])


def _window(xp, spec, out, i, j, k):
    sx, sy, sz = spec.stride
    ox, oy, oz = out
    return (slice(None), slice(None),
            slice(i, i + sx * (ox - 1) + 1, sx),
            slice(j, j + sy * (oy - 1) + 1, sy),
            slice(k, k + sz * (oz - 1) + 1, sz))


def _pad(x, spec):
    px, py, pz = spec.padding
    if not (px or py or pz):
        return x
    return np.pad(x, ((0, 0), (0, 0), (px, px), (py, py), (pz, pz)))


def conv3d_forward(x, spec: Conv3dSpec, weight, bias=None):
    """Return ``(output, FlopCount)``."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    out = _check(x, spec, weight)
    xp = _pad(x, spec)
    y = np.zeros((x.shape[0], spec.out_channels) + out)
    kx, ky, kz = spec.kernel
    for i in range(kx):
        for j in range(ky):
            for k in range(kz):
                win = xp[_window(xp, spec, out, i, j, k)]
                y += np.einsum("bcxyz,oc->boxyz", win, weight[:, :, i, j, k])
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (spec.out_channels,):
            raise ShapeMismatch(f"bias shape {bias.shape} != ({spec.out_channels},)")
        y += bias[None, :, None, None, None]
    return y, spec.flops(x.shape[0], x.shape[2:])


def conv3d_backward(grad_out, x, spec: Conv3dSpec, weight, need_input_grad=True):
    """Gradients ``(grad_input, grad_weight, grad_bias)`` of the forward map.

    ``grad_input`` is None when *need_input_grad* is false.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    out = _check(x, spec, weight)
    expected = (x.shape[0], spec.out_channels) + out
    if grad_out.shape != expected:
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != {expected}")
    xp = _pad(x, spec)
    gxp = np.zeros_like(xp) if need_input_grad else None
    gw = np.zeros(spec.weight_shape)
    kx, ky, kz = spec.kernel
    for i in range(kx):
        for j in range(ky):
            for k in range(kz):
                sl = _window(xp, spec, out, i, j, k)
                gw[:, :, i, j, k] = np.einsum("boxyz,bcxyz->oc", grad_out, xp[sl])
                if need_input_grad:
                    gxp[sl] += np.einsum("boxyz,oc->bcxyz", grad_out, weight[:, :, i, j, k])
    gb = grad_out.sum(axis=(0, 2, 3, 4))
    gx = None
    if need_input_grad:
        px, py, pz = spec.padding
        X, Y, Z = x.shape[2:]
        gx = gxp[:, :, px:px + X, py:py + Y, pz:pz + Z]
    return gx, gw, gb
