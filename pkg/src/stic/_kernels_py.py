"""Pure-numpy implementation of the fused window kernels.

Used when the compiled extension is unavailable or when ``STIC_PURE_PYTHON``
is set. The compiled module exposes exactly the same functions.

Array conventions
-----------------
windows  : (c, d, w) window observations, columns in ascending time order
targets  : (c, d) value to predict for each window
kernels  : (N, d, w) nested mechanism kernels
slopes   : (N,) PReLU negative-side slopes
effects  : (d, d, w) edge effects indexed [source, target, lag]

Lag ``tau`` reads window column ``w - 1 - tau``.
"""

import numpy as np


def _mechanism(windows, kernels, slopes):
    """Return the list of layer inputs and pre-activations of the nested block."""
    inputs = []
    preacts = []
    a = windows
    for k, s in zip(kernels, slopes):
        inputs.append(a)
        z = k * a
        preacts.append(z)
        a = np.where(z >= 0.0, z, s * z)
    return inputs, preacts, a


def mechanism_preactivations(windows, kernels, slopes):
    return _mechanism(windows, kernels, slopes)[1]


def mechanism_transform(windows, kernels, slopes):
    return _mechanism(windows, kernels, slopes)[2]


def window_predict(windows, kernels, slopes, effects):
    out = mechanism_transform(windows, kernels, slopes)
    lagged = out[:, :, ::-1]
    return np.einsum("cik,ijk->cj", lagged, effects)


def window_loss(windows, targets, kernels, slopes, effects):
    """Squared-error loss of the mechanism block plus selected column summation.

    Returns ``(loss, grad_kernels, grad_slopes, grad_effects)``.
    """
    inputs, preacts, out = _mechanism(windows, kernels, slopes)
    lagged = out[:, :, ::-1]
    pred = np.einsum("cik,ijk->cj", lagged, effects)
    resid = pred - targets
    loss = np.sum(resid * resid)

    g_pred = 2.0 * resid
    grad_effects = np.einsum("cik,cj->ijk", lagged, g_pred)
    g_out = np.einsum("cj,ijk->cik", g_pred, effects)[:, :, ::-1]

    n = len(kernels)
    grad_kernels = np.zeros_like(kernels)
    grad_slopes = np.zeros(n, dtype=resid.dtype)
    for layer in range(n - 1, -1, -1):
        z = preacts[layer]
        neg = z < 0.0
        grad_slopes[layer] = np.sum(g_out[neg] * z[neg])
        g_z = np.where(neg, slopes[layer] * g_out, g_out)
        grad_kernels[layer] = np.sum(g_z * inputs[layer], axis=0)
        g_out = g_z * kernels[layer]
    return loss, grad_kernels, grad_slopes, grad_effects
