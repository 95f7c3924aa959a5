"""Pure numpy versions of the compiled grid kernels (same signatures)."""
import numpy as np


def residual_stats(f, t):
    r = f - t
    return int(np.argmax(np.abs(r))), float(np.dot(r, r))


def kernel_step(f, t, coords, center, scale, inv_b2):
    d2 = np.sum((coords - coords[center]) ** 2, axis=1)
    f -= scale * np.exp(-d2 * inv_b2)
    return residual_stats(f, t)
