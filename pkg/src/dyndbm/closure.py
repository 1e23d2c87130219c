"""Moment-closure decomposition of a learned dynamic Boltzmann model.

For ``p(s) ~ exp(sum_z theta_z T_z(s))`` with ``d theta / dt = F(theta)``
any observable obeys

    d<X>/dt = sum_z F_z(theta) Cov(X, T_z)

so the learned dynamics split the time derivative of ``<X>`` into one
term per interaction. This module estimates those terms, compares them
with derivatives of simulation data and provides the well-mixed
Lotka-Volterra ODE as a reference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import filtfilt

from .dbm import Architecture, gibbs_sweep, onehot, random_state, statistics
from .dynamics import FieldModel, InteractionTrajectory
from .exact import ExactModel
from .lattice_sim import NN2_OFFSETS, NN_OFFSETS, SimulationDataset, pair_counts

KINDS = ("count", "nn", "nn2")


@dataclass(frozen=True)
class ObservableSpec:
    """Quantity of interest on one layer.

    ``kind`` is ``count`` (one species) or ``nn`` / ``nn2`` (a species pair
    at lattice distance 1 or 2).
    """

    kind: str
    species: tuple[str, ...]
    layer: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        want = 1 if self.kind == "count" else 2
        if len(self.species) != want:
            raise ValueError(f"{self.kind} observable needs {want} species, got {self.species}")
        if self.layer < 0:
            raise ValueError("layer must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "ObservableSpec":
        """``count:P``, ``nn:H,P`` or ``nn2:P,P``, optionally suffixed ``@layer``."""
        body, _, layer = text.partition("@")
        kind, _, species = body.partition(":")
        if not species:
            raise ValueError(f"observable {text!r} should look like kind:species[,species][@layer]")
        return cls(kind.strip(), tuple(s.strip() for s in species.split(",")), int(layer) if layer else 0)

    @property
    def label(self) -> str:
        s = ",".join(self.species)
        return f"{self.kind}:{s}" + (f"@{self.layer}" if self.layer else "")

    def check(self, arch: Architecture) -> None:
        if self.layer >= arch.n_layers:
            raise ValueError(f"observable layer {self.layer} but architecture has {arch.n_layers} layers")
        missing = [s for s in self.species if s not in arch.species[self.layer]]
        if missing:
            raise ValueError(f"species {missing} not in layer {self.layer}")

    def evaluate(self, occ, species: tuple[str, ...]) -> np.ndarray:
        """Value of the observable for a batch of layer occupancies ``(B, H, W)``."""
        occ = np.asarray(occ)
        ids = [species.index(s) for s in self.species]
        ind = onehot(occ, len(species))
        if self.kind == "count":
            return ind[:, ids[0]].sum(axis=(-2, -1)).astype(float)
        offsets = NN_OFFSETS if self.kind == "nn" else NN2_OFFSETS
        return pair_counts(ind, offsets)[:, ids[0], ids[1]].astype(float)


@dataclass
class ClosureDecomposition:
    """Per-timepoint closure terms; arrays are ``(T, P)`` except the totals."""

    observable: str
    names: tuple[str, ...]
    times: np.ndarray
    mean: np.ndarray
    rates: np.ndarray  # F_z
    covariances: np.ndarray  # Cov(X, T_z)
    terms: np.ndarray  # rates * covariances

    @property
    def total(self) -> np.ndarray:
        return self.terms.sum(axis=1)

    def group(self, prefix: str) -> np.ndarray:
        """Sum of the terms whose interaction name starts with ``prefix`` (``a`` or ``W``)."""
        cols = [k for k, n in enumerate(self.names) if n.startswith(prefix)]
        return self.terms[:, cols].sum(axis=1)


def weighted_covariance(values, stats, weights=None) -> np.ndarray:
    """``Cov(X, T_z)`` for every column of ``stats`` under sample ``weights``."""
    x = np.asarray(values, dtype=float)
    s = np.asarray(stats, dtype=float)
    w = np.full(len(x), 1.0 / len(x)) if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    ex = w @ x
    return w @ ((x - ex)[:, None] * (s - w @ s))


def _decompose(obs, names, times, thetas, model, moments_fn) -> ClosureDecomposition:
    n = len(times)
    mean, rates, cov = np.zeros(n), np.zeros((n, len(names))), np.zeros((n, len(names)))
    for i, theta in enumerate(thetas):
        mean[i], cov[i] = moments_fn(theta)
        rates[i] = model.rhs(theta)
    return ClosureDecomposition(obs.label, tuple(names), np.asarray(times, dtype=float), mean, rates, cov, rates * cov)


def sample_model(arch: Architecture, theta, n_samples: int, gibbs_steps: int, rng) -> list[np.ndarray]:
    """Free-running Gibbs samples started from a uniformly random configuration."""
    state = random_state(arch, n_samples, rng)
    for _ in range(gibbs_steps):
        state = gibbs_sweep(arch, theta, state, False, rng)
    return state


def closure_terms(obs: ObservableSpec, model: FieldModel, trajectory: InteractionTrajectory,
                  n_samples: int = 100, gibbs_steps: int = 10, rng=None, times=None,
                  smooth_cutoff: float | None = None) -> ClosureDecomposition:
    """Monte Carlo closure terms along ``trajectory``.

    ``times`` selects grid indices (default all). With ``smooth_cutoff`` the
    interaction trajectory is low-pass filtered before evaluating ``F``
    and sampling.
    """
    arch = model.arch
    obs.check(arch)
    rng = np.random.default_rng(rng)
    idx = np.arange(len(trajectory)) if times is None else np.asarray(times, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= len(trajectory)):
        raise ValueError("requested times outside the trajectory")
    theta = trajectory.theta
    if smooth_cutoff is not None:
        theta = np.column_stack([smooth(col, smooth_cutoff) for col in theta.T])

    def moments(th):
        state = sample_model(arch, th, n_samples, gibbs_steps, rng)
        x = obs.evaluate(state[obs.layer], arch.species[obs.layer])
        return x.mean(), weighted_covariance(x, statistics(arch, state))

    return _decompose(obs, arch.names, trajectory.times[idx], theta[idx], model, moments)


def closure_terms_exact(obs: ObservableSpec, model: FieldModel, trajectory: InteractionTrajectory,
                        exact: ExactModel | None = None) -> ClosureDecomposition:
    """Closure terms by full enumeration (tiny architectures only)."""
    arch = model.arch
    obs.check(arch)
    exact = ExactModel(arch) if exact is None else exact
    x = obs.evaluate(exact.states[obs.layer], arch.species[obs.layer])

    def moments(th):
        p = exact.probabilities(th)
        return p @ x, weighted_covariance(x, exact.stats, p)

    return _decompose(obs, arch.names, trajectory.times, trajectory.theta, model, moments)


def smooth(series, cutoff: float = 0.1) -> np.ndarray:
    """Zero-phase single-pole low-pass filter; ``cutoff`` in cycles per sample."""
    x = np.asarray(series, dtype=float)
    if not 0.0 < cutoff <= 0.5:
        raise ValueError(f"cutoff {cutoff} outside (0, 0.5]")
    if x.shape[0] < 3:
        raise ValueError("need at least 3 samples to smooth")
    alpha = 1.0 - np.exp(-2.0 * np.pi * cutoff)
    return filtfilt([alpha], [1.0, alpha - 1.0], x, axis=0, padlen=min(6, x.shape[0] - 1))


def ensemble_mean(dataset: SimulationDataset, obs: ObservableSpec) -> np.ndarray:
    if obs.layer != 0:
        raise ValueError("simulation data only has a visible layer")
    missing = [s for s in obs.species if s not in dataset.species]
    if missing:
        raise ValueError(f"species {missing} not in dataset")
    return np.array([obs.evaluate(dataset.occupancy_at(t), dataset.species).mean()
                     for t in range(dataset.n_times)])


def data_derivative(dataset: SimulationDataset, obs: ObservableSpec, dt: float = 1.0) -> np.ndarray:
    """Central differences of the ensemble-mean observable (one-sided at the ends)."""
    if dataset.n_times < 3:
        raise ValueError("need at least 3 timepoints")
    return np.gradient(ensemble_mean(dataset, obs), dt)


def lv_rhs(k1, k2, k3):
    def f(_, y):
        prey, hunter = y
        return [k1 * prey - k3 * prey * hunter, -k2 * hunter + k3 * prey * hunter]
    return f


def lv_meanfield(k1, k2, k3, mu_p0, mu_h0, t_end, dt):
    """Well-mixed Lotka-Volterra solution on ``t = 0, dt, ..., t_end``.

    Prey grow at ``k1``, hunters die at ``k2`` and predation converts
    prey to hunters at ``k3``. Returns ``(times, prey, hunters)``.
    """
    if min(k1, k2, k3) <= 0 or dt <= 0:
        raise ValueError("rates and dt must be positive")
    times = np.arange(int(round(t_end / dt)) + 1) * dt
    sol = solve_ivp(lv_rhs(k1, k2, k3), (0.0, times[-1]), [mu_p0, mu_h0], t_eval=times,
                    method="DOP853", rtol=1e-10, atol=1e-12)
    return times, sol.y[0], sol.y[1]


def lv_invariant(k1, k2, k3, prey, hunter):
    return k3 * (prey + hunter) - k2 * np.log(prey) - k1 * np.log(hunter)
