"""Exact expectations for tiny architectures by enumerating every state.

Only meant for models with a handful of units (the number of states is
``prod_l (M_l + 1) ** N``); used as a reference for samplers, gradients
and the closure identity.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp

from .dbm import Architecture, MomentEstimate, statistics

MAX_UNITS = 12


class ExactModel:
    """All states of ``arch`` with their sufficient statistics.

    ``states`` is a list of per-layer arrays ``(S, H, W)``; ``visible_index``
    maps every state to the index of its visible configuration in
    ``visible_states``.
    """

    def __init__(self, arch: Architecture):
        n_total = arch.n_units * arch.n_layers
        if n_total > MAX_UNITS:
            raise ValueError(f"{n_total} units is too many to enumerate (max {MAX_UNITS})")
        self.arch = arch
        per_layer = [list(itertools.product(range(arch.n_species(l) + 1), repeat=arch.n_units))
                     for l in range(arch.n_layers)]
        combos = list(itertools.product(*[range(len(p)) for p in per_layer]))
        self.states = [np.array([per_layer[l][c[l]] for c in combos], dtype=np.int8).reshape((-1,) + arch.shape)
                       for l in range(arch.n_layers)]
        self.visible_index = np.array([c[0] for c in combos])
        self.visible_states = np.array(per_layer[0], dtype=np.int8).reshape((-1,) + arch.shape)
        self.stats = statistics(arch, self.states)

    @property
    def n_states(self) -> int:
        return self.stats.shape[0]

    def log_weights(self, theta) -> np.ndarray:
        return self.stats @ np.asarray(theta, dtype=float)

    def probabilities(self, theta) -> np.ndarray:
        lw = self.log_weights(theta)
        return np.exp(lw - logsumexp(lw))

    def log_partition(self, theta) -> float:
        return float(logsumexp(self.log_weights(theta)))

    def visible_marginal(self, theta) -> np.ndarray:
        return np.bincount(self.visible_index, weights=self.probabilities(theta),
                           minlength=len(self.visible_states))

    def model_moments(self, theta) -> np.ndarray:
        return self.probabilities(theta) @ self.stats

    def data_moments(self, theta, data_probs) -> np.ndarray:
        """Expected statistics with the visible layer drawn from ``data_probs``
        and hidden layers from the model conditional (the wake phase)."""
        lw = self.log_weights(theta)
        out = np.zeros(self.arch.n_params)
        for v, pv in enumerate(data_probs):
            if pv == 0:
                continue
            sel = self.visible_index == v
            w = np.exp(lw[sel] - logsumexp(lw[sel]))
            out += pv * (w @ self.stats[sel])
        return out

    def moments(self, theta, data_probs) -> MomentEstimate:
        return MomentEstimate(self.data_moments(theta, data_probs), self.model_moments(theta), 0, 0)

    def kl(self, theta, data_probs) -> float:
        """``KL(p_data || p_model)`` over visible configurations."""
        data_probs = np.asarray(data_probs, dtype=float)
        q = self.visible_marginal(theta)
        mask = data_probs > 0
        return float(np.sum(data_probs[mask] * (np.log(data_probs[mask]) - np.log(q[mask]))))

    def expectation(self, values, theta) -> float:
        return float(self.probabilities(theta) @ np.asarray(values, dtype=float))

    def covariance(self, values, theta) -> np.ndarray:
        """``Cov(X, stat_k)`` for every sufficient statistic, with ``X`` given per state."""
        p = self.probabilities(theta)
        x = np.asarray(values, dtype=float)
        ex = p @ x
        es = p @ self.stats
        return p @ (x[:, None] * self.stats) - ex * es
