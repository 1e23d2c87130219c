"""Sliding-window training of the interaction dynamics.

Each optimisation step integrates the interactions from ``t = 0`` to the
end of the current window, estimates wake/sleep moments at every window
timepoint from a random batch of data lattices, slides the centers,
solves the adjoint system backwards over the window and takes one
gradient step on the field coefficients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .centering import centered_mismatch, initial_centers, unit_means, update_centers
from .dbm import Architecture, estimate_moments, max_entropy_state
from .dynamics import (FieldModel, InteractionTrajectory, accumulate_sensitivity, apply_gradient,
                       estimate_center_derivatives, integrate_adjoint, integrate_forward)
from .lattice_sim import SimulationDataset

log = logging.getLogger(__name__)

DEFAULT_DOMAIN = ("a0_H", "a0_P", "W01_H_H", "W01_P_P", "W12_H_H", "W12_P_P")


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-6
    batch_size: int = 5
    sliding_factor: float = 0.5
    window: int = 10
    slide_by: int = 1
    slide_every: int = 2
    gibbs_steps: int = 10
    n_steps: int = 1000
    domain: tuple = DEFAULT_DOMAIN
    initial: dict = field(default_factory=lambda: {"a0_H": -2.63, "a0_P": -2.63})
    side: float = 0.1
    dt: float = 1.0
    n_chains: int | None = None
    seed: int = 0
    early_stop: bool = False
    plateau_steps: int = 50
    plateau_tol: float = 1e-3

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.sliding_factor <= 1.0:
            raise ValueError("sliding_factor must lie in [0, 1]")
        if self.window < 1:
            raise ValueError("window must span at least one timestep")
        if self.slide_every < 1 or self.slide_by < 0:
            raise ValueError("invalid window slide schedule")
        if self.gibbs_steps < 1:
            raise ValueError("gibbs_steps must be at least 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if not self.side > 0 or not self.dt > 0:
            raise ValueError("side and dt must be positive")


@dataclass
class TrainState:
    model: FieldModel
    theta0: np.ndarray
    centers: np.ndarray  # (T + 1, n_bias)
    data: np.ndarray  # (n_sims, T + 1, H, W), species ids in visible-layer order
    tau: int = 0
    step: int = 0
    chains: dict = field(default_factory=dict)  # timepoint -> persistent sleep chains

    @property
    def n_times(self) -> int:
        return self.data.shape[1]


@dataclass
class TrainResult:
    model: FieldModel
    trajectory: InteractionTrajectory
    log: list
    state: TrainState


def visible_data(dataset: SimulationDataset, arch: Architecture) -> np.ndarray:
    """Dataset occupancies recoded to the visible-layer species order."""
    if dataset.n_sims == 0:
        raise ValueError("empty dataset")
    if tuple(dataset.shape) != tuple(arch.shape):
        raise ValueError(f"dataset lattice {dataset.shape} does not match architecture {arch.shape}")
    raw = dataset.as_array()
    visible = arch.species[0]
    recode = np.zeros(len(dataset.species) + 1, dtype=np.int8)
    for i, name in enumerate(dataset.species):
        if name in visible:
            recode[i + 1] = visible.index(name) + 1
        elif np.any(raw == i + 1):
            raise ValueError(f"dataset species {name!r} has no visible unit species")
    return recode[raw]


def initial_theta(arch: Architecture, values: dict) -> np.ndarray:
    theta = np.zeros(arch.n_params)
    for name, v in values.items():
        theta[arch.index(name)] = v
    return theta


def initialize(dataset: SimulationDataset, arch: Architecture, config: TrainConfig) -> TrainState:
    config.validate()
    data = visible_data(dataset, arch)
    n_sims, n_times = data.shape[:2]
    if config.batch_size > n_sims:
        raise ValueError(f"batch size {config.batch_size} exceeds the {n_sims} available trajectories")
    if config.window > n_times - 1:
        raise ValueError(f"window {config.window} longer than the data ({n_times - 1} steps)")
    m0 = arch.n_species(0)
    ids = np.arange(1, m0 + 1)
    visible_means = (data[..., None] == ids).mean(axis=(0, 2, 3))  # (T + 1, M0)
    centers = np.stack([initial_centers(arch, vm) for vm in visible_means])
    model = FieldModel(arch, config.domain, config.side)
    return TrainState(model, initial_theta(arch, config.initial), centers, data)


def _slide(state: TrainState, config: TrainConfig) -> None:
    if state.step % config.slide_every == 0:
        state.tau += config.slide_by
        if state.tau + config.window > state.n_times - 1:
            state.tau = 0


def optimization_step(state: TrainState, config: TrainConfig, rng: np.random.Generator | None = None) -> dict:
    """One pass of the window loop; mutates ``state`` and returns the log record."""
    model, arch = state.model, state.model.arch
    rng = np.random.default_rng([config.seed, state.step]) if rng is None else rng
    n_win = config.window
    tau = state.tau
    full = integrate_forward(model, state.theta0, tau + n_win, config.dt)
    win = full.window(tau, tau + n_win)
    n_chains = config.n_chains or config.batch_size
    mism = np.zeros((n_win + 1, arch.n_params))
    raw = np.zeros((n_win + 1, arch.n_params))
    jac = np.zeros((n_win + 1, arch.n_params, model.dim))
    for j in range(n_win + 1):
        t = tau + j
        theta = win.theta[j]
        batch = state.data[rng.choice(state.data.shape[0], size=config.batch_size, replace=False), t]
        chains = state.chains.get(t)
        if chains is None:
            chains = state.chains[t] = max_entropy_state(arch, theta, n_chains, rng)
        moments = estimate_moments(arch, theta, batch, chains, config.gibbs_steps, rng)
        state.centers[t] = update_centers(state.centers[t], unit_means(moments.wake, arch), config.sliding_factor)
        mism[j] = centered_mismatch(moments, state.centers[t], arch)
        raw[j] = moments.difference
        jac[j] = model.linearize(theta)[1]
    win.centers = state.centers[tau:tau + n_win + 1].copy()
    win.center_names = arch.names[:arch.n_bias]
    win.dcenters = estimate_center_derivatives(win.centers, config.dt)
    adjoint = integrate_adjoint(win, mism, model, jac)
    grads = accumulate_sensitivity(adjoint, win, model)
    apply_gradient(model, grads, config.learning_rate)
    record = {"step": state.step, "tau": tau}
    record.update({name: float(np.abs(raw[:, k]).mean()) for k, name in enumerate(arch.names)})
    state.step += 1
    _slide(state, config)
    return record


def _plateaued(history: list, config: TrainConfig, names) -> bool:
    k = config.plateau_steps
    if len(history) < 2 * k:
        return False
    score = lambda recs: np.mean([[r[n] for n in names] for r in recs])
    old, new = score(history[-2 * k:-k]), score(history[-k:])
    return abs(new - old) <= config.plateau_tol * max(abs(old), 1e-300)


def full_trajectory(state: TrainState, config: TrainConfig) -> InteractionTrajectory:
    traj = integrate_forward(state.model, state.theta0, state.n_times - 1, config.dt)
    traj.centers = state.centers.copy()
    traj.center_names = state.model.arch.names[:state.model.arch.n_bias]
    traj.dcenters = estimate_center_derivatives(traj.centers, config.dt)
    return traj


def train(dataset: SimulationDataset, arch: Architecture, config: TrainConfig, callback=None) -> TrainResult:
    """Run ``config.n_steps`` optimisation steps (or until the mismatch plateaus)."""
    state = initialize(dataset, arch, config)
    history = []
    visible = [n for n in arch.names if n.startswith("a0_")]
    for _ in range(config.n_steps):
        record = optimization_step(state, config)
        history.append(record)
        if callback is not None:
            callback(record, state)
        log.debug("step %d tau %d visible mismatch %.4g", record["step"], record["tau"],
                  np.mean([record[n] for n in visible]))
        if config.early_stop and _plateaued(history, config, visible):
            log.info("mismatch plateaued after %d steps", state.step)
            break
    return TrainResult(state.model, full_trajectory(state, config), history, state)
