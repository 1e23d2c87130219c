"""Tensor-product cubic Hermite (Q3) fields on a lazily grown cubic grid.

A field over ``d`` dimensions stores, for every grid point it has touched,
``2**d`` coefficients: one per node kind, where a kind picks value or
slope in each coordinate (so kind ``(1, 0)`` in 2D is the x-derivative).
Cells share the coefficients of their common grid points, which makes the
field C1 across faces by construction. Slope coefficients are derivatives
in parameter units; the cell side only enters during evaluation.

Within a cell the field is::

    F(theta) = sum_{corner c} sum_{kind k} u[p0 + c, k] * prod_j h_{c_j, k_j}(x_j)

with ``p0`` the cell index, ``x`` the local coordinates in ``[0, 1]^d`` and
``h`` the four 1D Hermite shape functions (slope shapes scaled by the side).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# 1D shape functions indexed as [corner bit][kind bit]
VALUE_AT_0 = (0, 0)
SLOPE_AT_0 = (0, 1)
VALUE_AT_1 = (1, 0)
SLOPE_AT_1 = (1, 1)
KINDS = {"value0": VALUE_AT_0, "slope0": SLOPE_AT_0, "value1": VALUE_AT_1, "slope1": SLOPE_AT_1}


def hermite_1d(kind, x: float) -> tuple[float, float]:
    """Value and derivative of one cubic Hermite shape function on ``[0, 1]``.

    ``kind`` is one of ``"value0"``, ``"slope0"``, ``"value1"``, ``"slope1"``
    or the equivalent ``(corner, kind)`` bit pair.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"local coordinate {x} outside [0, 1]")
    corner, slope = KINDS.get(kind, kind) if isinstance(kind, str) else kind
    x2, x3 = x * x, x * x * x
    if (corner, slope) == VALUE_AT_0:
        return 2 * x3 - 3 * x2 + 1, 6 * x2 - 6 * x
    if (corner, slope) == SLOPE_AT_0:
        return x3 - 2 * x2 + x, 3 * x2 - 4 * x + 1
    if (corner, slope) == VALUE_AT_1:
        return -2 * x3 + 3 * x2, -6 * x2 + 6 * x
    if (corner, slope) == SLOPE_AT_1:
        return x3 - x2, 3 * x2 - 2 * x
    raise ValueError(f"unknown Hermite kind {kind!r}")


def _tables(x: np.ndarray, side: float):
    """Per-dimension 2x2 tables of shape values and d/dtheta, indexed [dim, corner, kind]."""
    x2, x3 = x * x, x * x * x
    val = np.empty((x.size, 2, 2))
    der = np.empty((x.size, 2, 2))
    val[:, 0, 0] = 2 * x3 - 3 * x2 + 1
    val[:, 0, 1] = (x3 - 2 * x2 + x) * side
    val[:, 1, 0] = -2 * x3 + 3 * x2
    val[:, 1, 1] = (x3 - x2) * side
    # chain rule: d/dtheta = (1/side) d/dx
    der[:, 0, 0] = (6 * x2 - 6 * x) / side
    der[:, 0, 1] = 3 * x2 - 4 * x + 1
    der[:, 1, 0] = (-6 * x2 + 6 * x) / side
    der[:, 1, 1] = 3 * x2 - 2 * x
    return val, der


def _tensor(tables) -> np.ndarray:
    """Outer product of per-dimension 2x2 tables -> (2**d corners, 2**d kinds)."""
    d = len(tables)
    out = np.ones((1, 1))
    for t in tables:
        # corner index and kind index both grow with dimension 0 most significant
        out = np.einsum("ck,ab->cakb", out, t).reshape(out.shape[0] * 2, out.shape[1] * 2)
    assert out.shape == (2 ** d, 2 ** d)
    return out


@dataclass
class CellBasis:
    """All nonzero basis values of one cell evaluated at one point.

    ``values[c, k]`` is ``f_m(theta)`` for the node of kind ``k`` at grid
    point ``cell + corners[c]``; ``grads[j, c, k]`` is its derivative in
    ``theta_j``.
    """

    cell: tuple[int, ...]
    values: np.ndarray
    grads: np.ndarray | None = None

    def points(self) -> list[tuple[int, ...]]:
        return [tuple(int(a + b) for a, b in zip(self.cell, c)) for c in corner_offsets(len(self.cell))]

    def as_dict(self) -> dict:
        """Sparse map ``(grid point, kind bits) -> f_m(theta)``."""
        d = len(self.cell)
        kinds = corner_offsets(d)
        return {(p, kinds[k]): float(self.values[c, k])
                for c, p in enumerate(self.points()) for k in range(2 ** d)}


_CORNERS: dict[int, list[tuple[int, ...]]] = {}


def corner_offsets(d: int) -> list[tuple[int, ...]]:
    if d not in _CORNERS:
        _CORNERS[d] = list(itertools.product((0, 1), repeat=d))
    return _CORNERS[d]


def locate_cell(theta, side: float) -> tuple[tuple[int, ...], np.ndarray]:
    """Cell index and local coordinates of ``theta``; faces belong to the higher cell."""
    scaled = np.asarray(theta, dtype=float).reshape(-1) / side
    if not np.all(np.isfinite(scaled)):
        raise ValueError(f"non-finite point {theta}")
    # snap points a few ulps below a face (0.3 / 0.1 = 2.9999999999999996) onto it
    nearest = np.round(scaled)
    snap = np.abs(scaled - nearest) <= 8 * np.spacing(np.maximum(np.abs(nearest), 1.0))
    scaled = np.where(snap, nearest, scaled)
    cell = np.floor(scaled)
    local = np.clip(scaled - cell, 0.0, 1.0)
    return tuple(int(c) for c in cell), local


def cell_basis(theta, side: float, with_grad: bool = False) -> CellBasis:
    cell, local = locate_cell(theta, side)
    val, der = _tables(local, side)
    values = _tensor(list(val))
    grads = None
    if with_grad:
        d = len(cell)
        grads = np.empty((d, 2 ** d, 2 ** d))
        for j in range(d):
            tabs = list(val)
            tabs[j] = der[j]
            grads[j] = _tensor(tabs)
    return CellBasis(cell, values, grads)


@dataclass
class BasisField:
    """Scalar C1 field ``F(theta; u)`` over ``dim`` dimensions."""

    dim: int
    side: float = 0.1
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if not self.side > 0:
            raise ValueError("side must be positive")

    @property
    def n_nodes(self) -> int:
        return len(self.coeffs) * 2 ** self.dim

    def gather(self, cell: tuple[int, ...]) -> np.ndarray:
        """Coefficients of one cell as ``(corners, kinds)``; absent points read as zero."""
        n = 2 ** self.dim
        out = np.zeros((n, n))
        for c, off in enumerate(corner_offsets(self.dim)):
            u = self.coeffs.get(tuple(a + b for a, b in zip(cell, off)))
            if u is not None:
                out[c] = u
        return out

    def scatter_add(self, cell: tuple[int, ...], delta: np.ndarray) -> None:
        n = 2 ** self.dim
        for c, off in enumerate(corner_offsets(self.dim)):
            key = tuple(a + b for a, b in zip(cell, off))
            u = self.coeffs.get(key)
            if u is None:
                u = self.coeffs[key] = np.zeros(n)
            u += delta[c]

    def set_node(self, point, kind, value: float) -> None:
        """Set one coefficient; ``kind`` is a tuple of bits (1 = slope in that dim)."""
        point = tuple(int(p) for p in point)
        u = self.coeffs.setdefault(point, np.zeros(2 ** self.dim))
        u[corner_offsets(self.dim).index(tuple(kind))] = value

    def copy(self) -> "BasisField":
        return BasisField(self.dim, self.side, {k: v.copy() for k, v in self.coeffs.items()})

    def axpy(self, alpha: float, other: "BasisField") -> None:
        """In place ``u <- u + alpha * other.u``."""
        if other.dim != self.dim or other.side != self.side:
            raise ValueError("fields live on different grids")
        for key, v in other.coeffs.items():
            u = self.coeffs.get(key)
            if u is None:
                self.coeffs[key] = alpha * v
            else:
                u += alpha * v

    def flat(self) -> tuple[list, np.ndarray]:
        """Sorted grid points and the matching ``(n_points, 2**d)`` coefficient block."""
        keys = sorted(self.coeffs)
        block = np.array([self.coeffs[k] for k in keys]).reshape(len(keys), 2 ** self.dim)
        return keys, block

    def __eq__(self, other):
        if not isinstance(other, BasisField):
            return NotImplemented
        if (self.dim, self.side) != (other.dim, other.side) or self.coeffs.keys() != other.coeffs.keys():
            return False
        return all(np.array_equal(v, other.coeffs[k]) for k, v in self.coeffs.items())


def eval_field(field: BasisField, theta) -> float:
    basis = cell_basis(theta, field.side)
    return float(np.sum(field.gather(basis.cell) * basis.values))


def eval_field_grad_theta(field: BasisField, theta) -> np.ndarray:
    basis = cell_basis(theta, field.side, with_grad=True)
    u = field.gather(basis.cell)
    return np.einsum("jck,ck->j", basis.grads, u)


def eval_basis_vector(field: BasisField, theta) -> CellBasis:
    """Nonzero entries of ``dF/du`` at ``theta`` (the containing cell's ``4**d`` nodes)."""
    return cell_basis(theta, field.side)


def accumulate_update(field: BasisField, theta, scale: float) -> BasisField:
    """``u <- u + scale * f(theta)``, creating grid points lazily."""
    if scale == 0.0:
        return field
    basis = cell_basis(theta, field.side)
    field.scatter_add(basis.cell, scale * basis.values)
    return field


def interpolate(fn, grad_fn, cells, dim: int, side: float, mixed=None) -> BasisField:
    """Build a field from nodal values and derivatives of a function.

    ``fn(p)`` gives the value at point ``p``; ``grad_fn(p)`` the gradient;
    ``mixed(p, kind)`` (optional) the mixed partial for kinds with more than
    one slope bit, which default to zero.
    """
    f = BasisField(dim, side)
    kinds = corner_offsets(dim)
    for cell in cells:
        for off in corner_offsets(dim):
            point = tuple(a + b for a, b in zip(cell, off))
            if point in f.coeffs:
                continue
            x = np.array(point, dtype=float) * side
            u = np.zeros(2 ** dim)
            g = np.asarray(grad_fn(x), dtype=float)
            for k, kind in enumerate(kinds):
                order = sum(kind)
                if order == 0:
                    u[k] = fn(x)
                elif order == 1:
                    u[k] = g[kind.index(1)]
                elif mixed is not None:
                    u[k] = mixed(x, kind)
            f.coeffs[point] = u
    return f
