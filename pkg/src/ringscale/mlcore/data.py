"""Synthetic calorimeter showers: noisy Gaussian energy blobs in a voxel cube."""

import numpy as np

from ..errors import ValidationError


def synthetic_shower(seed, count, side):
    """Return ``(inputs (count, 1, side, side, side), targets (count,))``.

    Each sample is a Gaussian blob of random centre, width and energy plus
    small Gaussian noise, clamped at zero; its target is the sum of its
    voxels. Identical seeds give bitwise identical output.
    """
    if side < 2:
        raise ValidationError("side must be >= 2")
    if count < 0:
        raise ValidationError("count must be >= 0")
    rng = np.random.default_rng(seed)
    axis = np.arange(side, dtype=np.float64)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    inputs = np.empty((count, 1, side, side, side))
    for n in range(count):
        centre = rng.uniform(0.3 * (side - 1), 0.7 * (side - 1), size=3)
        width = rng.uniform(0.12, 0.25) * side
        energy = rng.uniform(0.5, 2.0)
        r2 = (gx - centre[0]) ** 2 + (gy - centre[1]) ** 2 + (gz - centre[2]) ** 2
        blob = np.exp(-r2 / (2.0 * width * width))
        blob *= energy / blob.sum()
        noise = rng.normal(0.0, 0.02 * blob.max(), size=blob.shape)
        inputs[n, 0] = np.maximum(blob + noise, 0.0)
    targets = inputs.reshape(count, side ** 3).sum(axis=1)
    return inputs, targets
