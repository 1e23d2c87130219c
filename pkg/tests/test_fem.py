import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyndbm.fem import (BasisField, _tables, _tensor, accumulate_update, cell_basis, corner_offsets, eval_basis_vector,
                        eval_field, eval_field_grad_theta, hermite_1d, interpolate, locate_cell)


def random_field(dim, side, rng, cells):
    f = BasisField(dim, side)
    for cell in cells:
        for off in corner_offsets(dim):
            p = tuple(a + b for a, b in zip(cell, off))
            f.coeffs.setdefault(p, rng.normal(size=2 ** dim))
    return f


def eval_in_cell(field, theta, cell):
    """Evaluate with an explicitly chosen cell (local coords may sit on 0 or 1)."""
    local = np.asarray(theta, dtype=float) / field.side - np.asarray(cell)
    val, der = _tables(local, field.side)
    u = field.gather(tuple(cell))
    grads = []
    for j in range(field.dim):
        tabs = list(val)
        tabs[j] = der[j]
        grads.append(np.sum(_tensor(tabs) * u))
    return np.sum(_tensor(list(val)) * u), np.array(grads)


def test_hermite_examples():
    assert hermite_1d("value0", 0.0) == (1, 0)
    assert hermite_1d("value0", 1.0) == (0, 0)
    assert hermite_1d("slope0", 0.0) == (0, 1)
    for x in np.linspace(0, 1, 11):
        assert hermite_1d("value0", x)[0] + hermite_1d("value1", x)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        hermite_1d("value0", 1.5)


def test_hermite_derivatives_fd():
    for kind in ("value0", "slope0", "value1", "slope1"):
        for x in (0.2, 0.5, 0.8):
            h = 1e-6
            fd = (hermite_1d(kind, x + h)[0] - hermite_1d(kind, x - h)[0]) / (2 * h)
            assert hermite_1d(kind, x)[1] == pytest.approx(fd, abs=1e-8)


def test_locate_cell():
    cell, local = locate_cell([0.25], 0.1)
    assert cell == (2,) and local[0] == pytest.approx(0.5)
    cell, local = locate_cell([0.3], 0.1)
    assert cell == (3,) and local[0] == pytest.approx(0.0, abs=1e-12)
    cell, local = locate_cell([-0.05], 0.1)
    assert cell == (-1,) and local[0] == pytest.approx(0.5)
    cell, local = locate_cell([0.5], 0.25)  # exact face
    assert cell == (2,) and local[0] == 0.0


def test_eval_examples():
    f = BasisField(2, 0.1)
    assert eval_field(f, [0.13, -0.4]) == 0.0
    assert np.array_equal(eval_field_grad_theta(f, [0.13, -0.4]), np.zeros(2))
    f.set_node((1, 2), (0, 0), 3.5)
    assert eval_field(f, [0.1, 0.2]) == pytest.approx(3.5)
    g = BasisField(3, 0.1)
    for p in itertools.product((0, 1), repeat=3):
        g.set_node(p, (0, 0, 0), -1.25)
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 0.1, (20, 3)):
        assert eval_field(g, x) == pytest.approx(-1.25, abs=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_gradient_matches_finite_differences(dim):
    rng = np.random.default_rng(dim)
    side = 0.1
    worst = 0.0
    for _ in range(100):
        cell = tuple(rng.integers(-5, 5, dim))
        f = random_field(dim, side, rng, [cell])
        theta = (np.array(cell) + rng.uniform(0.05, 0.95, dim)) * side
        g = eval_field_grad_theta(f, theta)
        h = 1e-5 * side
        fd = np.array([(eval_field(f, theta + h * e) - eval_field(f, theta - h * e)) / (2 * h) for e in np.eye(dim)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert worst < 1e-6


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_c1_across_faces(dim):
    rng = np.random.default_rng(10 + dim)
    side = 0.1
    worst = 0.0
    for _ in range(1000 // 3):
        lo = tuple(rng.integers(-3, 3, dim))
        j = rng.integers(dim)
        hi = tuple(c + (k == j) for k, c in enumerate(lo))
        f = random_field(dim, side, rng, [lo, hi])
        local = rng.uniform(0, 1, dim)
        local[j] = 1.0
        theta = (np.array(lo) + local) * side
        v1, g1 = eval_in_cell(f, theta, lo)
        v2, g2 = eval_in_cell(f, theta, hi)
        worst = max(worst, abs(v1 - v2), np.abs(g1 - g2).max())
    assert worst < 1e-10


def _poly(dim, rng):
    """Random polynomial of degree <= 3 in every coordinate, with its derivatives."""
    terms = [(rng.normal(), e) for e in itertools.product(range(4), repeat=dim)]

    def deriv(x, order):
        total = 0.0
        for c, e in terms:
            term = c
            for xi, ei, oi in zip(x, e, order):
                if oi > ei:
                    term = 0.0
                    break
                term *= np.prod(range(ei - oi + 1, ei + 1)) * xi ** (ei - oi)
            total += term
        return total

    fn = lambda x: deriv(x, (0,) * dim)
    grad = lambda x: np.array([deriv(x, tuple(int(k == j) for k in range(dim))) for j in range(dim)])
    mixed = lambda x, kind: deriv(x, kind)
    return fn, grad, mixed


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_cubic_reproduction(dim):
    rng = np.random.default_rng(20 + dim)
    side = 0.25
    fn, grad, mixed = _poly(dim, rng)
    cells = list(itertools.product(range(-2, 2), repeat=dim))
    f = interpolate(fn, grad, cells, dim, side, mixed)
    for x in rng.uniform(-0.5, 0.5, (50, dim)):
        assert eval_field(f, x) == pytest.approx(fn(x), abs=1e-10)
        assert np.allclose(eval_field_grad_theta(f, x), grad(x), atol=1e-9)


def test_basis_vector_examples():
    rng = np.random.default_rng(5)
    f = random_field(3, 0.1, rng, [(0, 1, -1)])
    theta = np.array([0.03, 0.17, -0.02])
    b = eval_basis_vector(f, theta)
    assert np.sum(b.values * f.gather(b.cell)) == pytest.approx(eval_field(f, theta), abs=1e-12)

    corner = eval_basis_vector(f, np.array([0.1, 0.1, -0.1]))
    entries = corner.as_dict()
    assert entries[((1, 1, -1), (0, 0, 0))] == pytest.approx(1.0)
    for kind in corner_offsets(3)[1:]:
        assert entries[((1, 1, -1), kind)] == pytest.approx(0.0, abs=1e-15)

    assert eval_basis_vector(BasisField(6, 0.1), np.zeros(6)).values.size == 4 ** 6


def test_accumulate_update():
    rng = np.random.default_rng(6)
    f = random_field(2, 0.1, rng, [(0, 0)])
    before = f.copy()
    accumulate_update(f, [0.04, 0.07], 0.0)
    assert f == before

    a, b = f.copy(), f.copy()
    accumulate_update(a, [0.04, 0.07], 0.3)
    accumulate_update(a, [0.21, -0.1], -1.2)
    accumulate_update(b, [0.21, -0.1], -1.2)
    accumulate_update(b, [0.04, 0.07], 0.3)
    assert all(np.allclose(a.coeffs[k], b.coeffs[k], atol=1e-15) for k in a.coeffs)

    theta, s = np.array([0.04, 0.07]), 0.7
    g = f.copy()
    accumulate_update(g, theta, s)
    basis = cell_basis(theta, 0.1)
    assert eval_field(g, theta) - eval_field(f, theta) == pytest.approx(s * np.sum(basis.values ** 2), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), dim=st.integers(1, 3))
def test_linearity(seed, dim):
    rng = np.random.default_rng(seed)
    cells = [tuple(rng.integers(-2, 2, dim))]
    f1, f2 = random_field(dim, 0.1, rng, cells), random_field(dim, 0.1, rng, cells)
    s = f1.copy()
    s.axpy(1.0, f2)
    x = (np.array(cells[0]) + rng.uniform(0, 1, dim)) * 0.1
    assert eval_field(s, x) == pytest.approx(eval_field(f1, x) + eval_field(f2, x), abs=1e-12)


def test_field_validation():
    with pytest.raises(ValueError):
        BasisField(0)
    with pytest.raises(ValueError):
        BasisField(2, side=0.0)
    with pytest.raises(ValueError):
        BasisField(1).axpy(1.0, BasisField(1, side=0.2))
