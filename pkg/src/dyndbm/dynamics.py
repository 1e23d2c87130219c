"""Learned interaction dynamics and their adjoint gradient.

Every interaction ``z`` of the architecture obeys ``d theta_z / dt =
F_z(theta_D)`` where ``theta_D`` is a chosen subset of the interactions
(the domain) and ``F_z`` a Hermite field over it. Forward and backward
solves use explicit Euler on the same uniform grid ``t_n = t0 + n dt``.

The backward solve evaluates the adjoint right-hand side at the later
grid point and the parameter gradient uses a left-endpoint rectangle
rule. With constant centers this is exactly the gradient of the
discretised objective ``dt * sum_n KL_n``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dbm import Architecture
from .fem import BasisField, accumulate_update, cell_basis


class IntegrationError(ArithmeticError):
    def __init__(self, message, timepoint=None):
        super().__init__(message)
        self.timepoint = timepoint


@dataclass
class FieldModel:
    """One ``BasisField`` per interaction, all over the same domain and grid."""

    arch: Architecture
    domain: tuple[str, ...]
    side: float = 0.1
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain = tuple(self.domain)
        unknown = [n for n in self.domain if n not in self.arch.names]
        if unknown:
            raise ValueError(f"domain interactions {unknown} not in architecture")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError("duplicate domain interaction")
        for name in self.arch.names:
            self.fields.setdefault(name, BasisField(self.dim, self.side))
        for name, f in self.fields.items():
            if name not in self.arch.names:
                raise ValueError(f"field for unknown interaction {name!r}")
            if f.dim != self.dim or f.side != self.side:
                raise ValueError(f"field {name!r} has a different grid")
        self.domain_index = np.array([self.arch.index(n) for n in self.domain], dtype=int)

    @property
    def dim(self) -> int:
        return len(self.domain)

    def field_list(self) -> list[BasisField]:
        return [self.fields[n] for n in self.arch.names]

    def rhs(self, theta) -> np.ndarray:
        """``F_z(theta_D)`` for every interaction."""
        basis = cell_basis(np.asarray(theta)[self.domain_index], self.side)
        return np.array([np.sum(f.gather(basis.cell) * basis.values) for f in self.field_list()])

    def linearize(self, theta):
        """``(F, dF/dtheta_D, basis)`` at ``theta``; ``dF`` has shape ``(P, d)``."""
        basis = cell_basis(np.asarray(theta)[self.domain_index], self.side, with_grad=True)
        coeffs = [f.gather(basis.cell) for f in self.field_list()]
        values = np.array([np.sum(u * basis.values) for u in coeffs])
        jac = np.array([np.einsum("jck,ck->j", basis.grads, u) for u in coeffs])
        return values, jac, basis

    def copy(self) -> "FieldModel":
        return FieldModel(self.arch, self.domain, self.side, {k: f.copy() for k, f in self.fields.items()})


@dataclass
class InteractionTrajectory:
    names: tuple[str, ...]
    times: np.ndarray
    theta: np.ndarray
    centers: np.ndarray | None = None
    dcenters: np.ndarray | None = None
    center_names: tuple[str, ...] = ()

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 1.0

    def __len__(self):
        return len(self.times)

    def window(self, start: int, stop: int) -> "InteractionTrajectory":
        """Grid points ``start..stop`` inclusive."""
        sl = slice(start, stop + 1)
        return InteractionTrajectory(
            self.names, self.times[sl], self.theta[sl],
            None if self.centers is None else self.centers[sl],
            None if self.dcenters is None else self.dcenters[sl],
            self.center_names)

    def to_csv(self, path) -> None:
        header = ["t", *self.names]
        cols = [self.times[:, None], self.theta]
        if self.centers is not None:
            header += [f"mu_{n}" for n in self.center_names]
            cols.append(self.centers)
        write_csv(path, header, np.hstack(cols))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.asarray(rows):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def integrate_forward(model: FieldModel, theta0, n_steps: int, dt: float = 1.0,
                      t0: float = 0.0) -> InteractionTrajectory:
    """Explicit Euler ``theta(t + dt) = theta(t) + dt * F(theta(t))`` for ``n_steps`` steps."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta = np.empty((n_steps + 1, model.arch.n_params))
    theta[0] = theta0
    for n in range(n_steps):
        f = model.rhs(theta[n])
        theta[n + 1] = theta[n] + dt * f
        if not np.all(np.isfinite(theta[n + 1])):
            raise IntegrationError(f"trajectory diverged at t={t0 + (n + 1) * dt}", t0 + (n + 1) * dt)
    return InteractionTrajectory(model.arch.names, t0 + dt * np.arange(n_steps + 1), theta)


def estimate_center_derivatives(centers, dt: float) -> np.ndarray:
    """Forward differences; the last point repeats the previous difference."""
    mu = np.asarray(centers, dtype=float)
    if mu.shape[0] < 2:
        raise ValueError("need at least two timepoints")
    d = np.empty_like(mu)
    d[:-1] = (mu[1:] - mu[:-1]) / dt
    d[-1] = d[-2]
    return d


def compute_psi(adjoint, jac, centers, arch: Architecture, domain_index) -> np.ndarray:
    """``psi_theta`` for every domain component, returned over all interactions.

    ``adjoint`` holds ``phi`` for biases then ``Lambda`` for weights,
    ``jac[z, j] = dF_z / d theta_j`` over the domain. Entries for
    interactions outside the domain are zero.
    """
    adjoint = np.asarray(adjoint, dtype=float)
    mu = np.asarray(centers, dtype=float)
    psi_d = np.zeros(jac.shape[1])
    for k, *_ in arch.weight_table:
        psi_d += adjoint[k] * jac[k]
    for z, inter in enumerate(arch.interactions[:arch.n_bias]):
        m, species = inter.layer, inter.species[0]
        inner = jac[z].copy()
        for k, l, _, _, ia, ib in arch.weight_table:
            if l == m and ia == z:
                inner += arch.q(m, m + 1) * jac[k] * mu[ib]
            elif l + 1 == m and ib == z:
                inner += arch.q(m, m - 1) * jac[k] * mu[ia]
        psi_d += adjoint[z] * inner
    psi = np.zeros(arch.n_params)
    psi[domain_index] = psi_d
    return psi


def adjoint_rhs(adjoint, mismatch, jac, centers, dcenters, arch: Architecture, domain_index) -> np.ndarray:
    """Time derivative of ``(phi, Lambda)`` at one timepoint."""
    adjoint = np.asarray(adjoint, dtype=float)
    mu, dmu = np.asarray(centers, dtype=float), np.asarray(dcenters, dtype=float)
    psi = compute_psi(adjoint, jac, mu, arch, domain_index)
    rhs = np.asarray(mismatch, dtype=float) - psi
    for k, l, _, _, ia, ib in arch.weight_table:
        rhs[k] += (arch.q(l + 1, l) * mu[ia] * psi[ib] + arch.q(l, l + 1) * mu[ib] * psi[ia]
                   - arch.q(l + 1, l) * adjoint[ib] * dmu[ia] - arch.q(l, l + 1) * adjoint[ia] * dmu[ib])
    return rhs


@dataclass
class AdjointTrajectory:
    names: tuple[str, ...]
    times: np.ndarray
    values: np.ndarray  # (N + 1, P): phi for biases, Lambda for weights

    def to_csv(self, path) -> None:
        write_csv(path, ["t", *[f"adj_{n}" for n in self.names]], np.hstack([self.times[:, None], self.values]))


def _jacobians(model: FieldModel, traj: InteractionTrajectory) -> np.ndarray:
    return np.array([model.linearize(th)[1] for th in traj.theta])


def integrate_adjoint(traj: InteractionTrajectory, mismatches, model: FieldModel,
                      jacobians=None) -> AdjointTrajectory:
    """Backward Euler sweep of the adjoint system from zero terminal values.

    ``mismatches[n]`` are the model-minus-data source terms at grid point
    ``n`` (bias counts and centered pair moments, see
    ``centering.centered_mismatch``). ``traj`` must carry ``centers`` and
    ``dcenters``; missing centers are taken as zero.
    """
    arch = model.arch
    n_pts = len(traj)
    dt = traj.dt
    jac = _jacobians(model, traj) if jacobians is None else np.asarray(jacobians)
    mu = np.zeros((n_pts, arch.n_bias)) if traj.centers is None else traj.centers
    dmu = np.zeros_like(mu) if traj.dcenters is None else traj.dcenters
    mism = np.asarray(mismatches, dtype=float)
    out = np.zeros((n_pts, arch.n_params))
    for n in range(n_pts - 2, -1, -1):
        rhs = adjoint_rhs(out[n + 1], mism[n + 1], jac[n + 1], mu[n + 1], dmu[n + 1], arch, model.domain_index)
        out[n] = out[n + 1] - dt * rhs
        if not np.all(np.isfinite(out[n])):
            raise IntegrationError(f"adjoint diverged at t={traj.times[n]}", traj.times[n])
    return AdjointTrajectory(arch.names, traj.times.copy(), out)


def sensitivity_weights(adjoint, centers, arch: Architecture) -> np.ndarray:
    """Per-interaction factor multiplying ``dF/du`` in the gradient integrand."""
    c = np.array(adjoint, dtype=float)
    mu = np.asarray(centers, dtype=float)
    for k, l, _, _, ia, ib in arch.weight_table:
        c[..., k] += arch.q(l, l + 1) * adjoint[..., ia] * mu[..., ib] + arch.q(l + 1, l) * adjoint[..., ib] * mu[..., ia]
    return c


def accumulate_sensitivity(adjoint: AdjointTrajectory, traj: InteractionTrajectory,
                           model: FieldModel) -> dict:
    """``dS/du`` for every interaction's field, as sparse ``BasisField`` objects."""
    arch = model.arch
    dt = traj.dt
    mu = np.zeros((len(traj), arch.n_bias)) if traj.centers is None else traj.centers
    weights = sensitivity_weights(adjoint.values, mu, arch)
    grads = {name: BasisField(model.dim, model.side) for name in arch.names}
    for n in range(len(traj) - 1):
        point = traj.theta[n][model.domain_index]
        for z, name in enumerate(arch.names):
            if weights[n, z] != 0.0:
                accumulate_update(grads[name], point, -dt * weights[n, z])
    return grads


def apply_gradient(model: FieldModel, grads: dict, learning_rate: float) -> None:
    """``u <- u - learning_rate * dS/du`` for every field."""
    if learning_rate == 0.0:
        return
    for name, g in grads.items():
        model.fields[name].axpy(-learning_rate, g)
