"""Centered parameterisation of the DBM.

Centers ``mu`` hold one value per (layer, species), ordered like the
biases of the architecture. The centered energy replaces every ``s`` by
``s - mu``; weights are unchanged and the biases shift by

    a~_a(l) = a_a(l) + sum_{dl=+-1} q(l, l+dl) sum_b W_ab(l, l+dl) mu_b(l+dl)

which leaves energy differences, and therefore the distribution, intact.
"""
from __future__ import annotations

import numpy as np

from .dbm import Architecture, MomentEstimate, as_batch, onehot, layer_pair_counts


def coupling_matrix(centers, arch: Architecture) -> np.ndarray:
    """``C`` with ``a~ = a + C @ W`` (biases x weights)."""
    mu = np.asarray(centers, dtype=float)
    c = np.zeros((arch.n_bias, len(arch.weights)))
    for j, (k, l, _, _, ia, ib) in enumerate(arch.weight_table):
        c[ia, j] += arch.q(l, l + 1) * mu[ib]
        c[ib, j] += arch.q(l + 1, l) * mu[ia]
    return c


def to_centered(theta, centers, arch: Architecture) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = theta.copy()
    out[:arch.n_bias] += coupling_matrix(centers, arch) @ theta[arch.n_bias:]
    return out


def from_centered(theta_c, centers, arch: Architecture) -> np.ndarray:
    theta_c = np.asarray(theta_c, dtype=float)
    out = theta_c.copy()
    out[:arch.n_bias] -= coupling_matrix(centers, arch) @ theta_c[arch.n_bias:]
    return out


def centered_energy(state, theta_c, centers, arch: Architecture):
    """Energy of the centered model with parameters ``theta_c``."""
    layers, single = as_batch(state)
    mu = np.asarray(centers, dtype=float)
    theta_c = np.asarray(theta_c, dtype=float)
    ind = [onehot(s, arch.n_species(l)) for l, s in enumerate(layers)]
    e = np.zeros(layers[0].shape[0])
    for l, x in enumerate(ind):
        m = mu[arch.bias_slices[l]]
        counts = x.sum(axis=(-2, -1)) - arch.n_units * m
        e -= counts @ theta_c[arch.bias_slices[l]]
    for k, l, a, b, ia, ib in arch.weight_table:
        lower = ind[l][:, a:a + 1] - mu[ia]
        upper = ind[l + 1][:, b:b + 1] - mu[ib]
        e -= theta_c[k] * layer_pair_counts(arch, lower, upper)[:, 0, 0]
    return e[0] if single else e


def centered_statistics(stats, centers, arch: Architecture) -> np.ndarray:
    """Map raw statistics to centered ones.

    Bias entries become ``sum_i (s_i - mu)``; weight entries become
    ``sum_<ij> (s_i - mu_a)(s_j - mu_b)``, expanded through the pair count
    and the two species counts. Works on ``(P,)`` or ``(B, P)`` arrays.
    """
    stats = np.asarray(stats, dtype=float)
    mu = np.asarray(centers, dtype=float)
    out = stats.copy()
    n = arch.n_units
    out[..., :arch.n_bias] -= n * mu
    for k, l, _, _, ia, ib in arch.weight_table:
        q_up, q_down = arch.q(l, l + 1), arch.q(l + 1, l)
        out[..., k] = (stats[..., k] - mu[ib] * q_up * stats[..., ia] - mu[ia] * q_down * stats[..., ib]
                       + mu[ia] * mu[ib] * n * q_up)
    return out


def centered_mismatch(moments: MomentEstimate, centers, arch: Architecture) -> np.ndarray:
    """Model-minus-data differences driving the adjoint system.

    Biases: ``sum_i D<s_{i,a}>``; weights: ``sum_<ij> D<(s - mu)(s - mu)>``,
    with ``D<X> = <X>_model - <X>_data``.
    """
    diff = centered_statistics(moments.sleep, centers, arch) - centered_statistics(moments.wake, centers, arch)
    diff[:arch.n_bias] = moments.sleep[:arch.n_bias] - moments.wake[:arch.n_bias]
    return diff


def centered_gradient(moments: MomentEstimate, centers, arch: Architecture) -> np.ndarray:
    """Update direction for the plain parameters (step is ``theta -= lr * grad``).

    Weights use the centered pair moments; biases subtract the
    ``q * dW * mu`` couplings so that the step equals a gradient step in
    centered coordinates mapped back to plain parameters.
    """
    g = centered_mismatch(moments, centers, arch)
    g[:arch.n_bias] -= coupling_matrix(centers, arch) @ g[arch.n_bias:]
    return g


def update_centers(centers, unit_means, r: float) -> np.ndarray:
    """Exponential sliding average ``mu <- (1 - r) mu + r * mean``."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"sliding factor {r} outside [0, 1]")
    return (1.0 - r) * np.asarray(centers, dtype=float) + r * np.asarray(unit_means, dtype=float)


def initial_centers(arch: Architecture, visible_means) -> np.ndarray:
    """Visible centers from data means, hidden centers ``1 / (M + 1)``."""
    mu = np.empty(arch.n_bias)
    mu[arch.bias_slices[0]] = visible_means
    for l in range(1, arch.n_layers):
        mu[arch.bias_slices[l]] = 1.0 / (arch.n_species(l) + 1)
    return mu


def unit_means(stats, arch: Architecture) -> np.ndarray:
    """Per-unit occupancy of each (layer, species) from count statistics."""
    return np.asarray(stats, dtype=float)[..., :arch.n_bias] / arch.n_units
