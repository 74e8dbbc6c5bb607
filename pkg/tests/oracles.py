"""Independent reference computations used by several test modules."""

import numpy as np


def central_difference(fn, array, step=1e-5):
    """Numerical gradient of scalar fn() w.r.t. every entry of `array` (mutated in place)."""
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        orig = array[idx]
        array[idx] = orig + step
        up = fn()
        array[idx] = orig - step
        down = fn()
        array[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor=1e-3):
    """Elementwise |a - n| / max(|a|, |n|, floor), maximized.

    The floor turns the check absolute (1e-8 at a 1e-5 tolerance) for
    entries whose gradient is essentially zero.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def log_gauss_diag(x, mean, var):
    """log N(x; mean, diag(var)) evaluated directly, broadcasting over leading axes."""
    return -0.5 * np.sum(np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var, axis=-1)


def ivector_grid_oracle(frames, weights, means, variances, T, lo=-5.0, hi=5.0, step=1e-4):
    """Maximize the exact posterior log-density of a scalar latent factor on a grid.

    objective(w) = sum_t sum_c gamma_tc log N(x_t; mu_c + T_c w, var_c) - w^2 / 2,
    with gamma taken from the UBM. T has shape (C, D) (one column, R = 1).
    Returns (argmax, at_boundary).
    """
    grid = np.arange(int(round((hi - lo) / step)) + 1) * step + lo
    log_p = np.stack([np.log(weights[c]) + log_gauss_diag(frames, means[c], variances[c])
                      for c in range(len(weights))], axis=1)
    gamma = np.exp(log_p - log_p.max(axis=1, keepdims=True))
    gamma /= gamma.sum(axis=1, keepdims=True)
    obj = -0.5 * grid ** 2
    for t in range(frames.shape[0]):
        for c in range(len(weights)):
            shifted = means[c][None, :] + grid[:, None] * T[c][None, :]
            obj = obj + gamma[t, c] * log_gauss_diag(frames[t][None, :], shifted, variances[c])
    k = int(np.argmax(obj))
    return grid[k], k in (0, grid.size - 1)
