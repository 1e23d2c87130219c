"""
Hermite fields and the adjoint gradient
=======================================

The interactions move as d theta/dt = F(theta) with every F a C1 cubic
Hermite field. Training needs dS/du, the derivative of the time-integrated
KL divergence with respect to the field coefficients. Here we check the
adjoint answer against brute force finite differences on a model small
enough to enumerate exactly.
"""
import numpy as np

from dyndbm.centering import centered_mismatch
from dyndbm.dbm import Architecture
from dyndbm.dynamics import FieldModel, accumulate_sensitivity, integrate_adjoint, integrate_forward
from dyndbm.exact import ExactModel
from dyndbm.fem import eval_field, eval_field_grad_theta, interpolate

# -- a 1D field interpolating sin, and its derivative
side = 0.25
f = interpolate(lambda x: np.sin(x[0]), lambda x: np.array([np.cos(x[0])]), [(i,) for i in range(-8, 8)], 1, side)
xs = np.linspace(-1.9, 1.9, 9)
print(" theta     F        sin      dF      cos")
for x in xs:
    print(f"{x:6.2f}  {eval_field(f, [x]):7.4f}  {np.sin(x):7.4f}  {eval_field_grad_theta(f, [x])[0]:7.4f}  {np.cos(x):7.4f}")

# -- one visible and one hidden unit: 4 states, exact moments
arch = Architecture((1, 1), (("A",), ("A",)), ((0, "A", "A"),), patch=(1, 1))
ex = ExactModel(arch)
model = FieldModel(arch, ("a0_A", "W01_A_A"), side=1.0)
rng = np.random.default_rng(0)
for name in arch.names:
    for p in [(0, 0), (0, 1), (1, 0), (1, 1), (-1, 0), (-1, 1)]:
        model.fields[name].coeffs[p] = 0.05 * rng.normal(size=4)

theta0 = np.array([-0.4, 0.1, 0.2])
n, dt = 10, 0.1
data = [np.array([0.7 - 0.2 * np.sin(k * dt), 0.3 + 0.2 * np.sin(k * dt)]) for k in range(n + 1)]
mu = np.array([0.3, 0.4])  # fixed centers


def objective(m):
    tr = integrate_forward(m, theta0, n, dt)
    return dt * sum(ex.kl(tr.theta[k], data[k]) for k in range(n + 1))


tr = integrate_forward(model, theta0, n, dt)
tr.centers = np.tile(mu, (n + 1, 1))
tr.dcenters = np.zeros_like(tr.centers)
mism = np.array([centered_mismatch(ex.moments(tr.theta[k], data[k]), mu, arch) for k in range(n + 1)])
grads = accumulate_sensitivity(integrate_adjoint(tr, mism, model), tr, model)

print("\nfield      node     kind  adjoint      finite diff")
h = 1e-5
for name in arch.names:
    for key, vec in sorted(grads[name].coeffs.items())[:2]:
        for k in (0, 3):
            mp, mm = model.copy(), model.copy()
            mp.fields[name].coeffs[key][k] += h
            mm.fields[name].coeffs[key][k] -= h
            fd = (objective(mp) - objective(mm)) / (2 * h)
            print(f"{name:9s}  {str(key):8s} {k:4d}  {vec[k]: .6e}  {fd: .6e}")
