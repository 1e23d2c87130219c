"""
Recovering a known dynamic Boltzmann model
==========================================

Ground truth: one bias ``a`` for a single species, relaxing towards 0.5
along F*(a) = 0.08 x + 0.02 x^3 with x = 0.5 - a. Data are independent
Bernoulli lattices with occupancy sigmoid(a(t)), which is exactly the
model distribution, so a perfect learner would return F*.

The window slides over [0, T] so every part of the trajectory gets
visited; the learning rate has to shrink with the number of units since
the moment mismatch is an extensive count.
"""
import numpy as np

from dyndbm.dbm import Architecture
from dyndbm.dynamics import FieldModel, integrate_forward
from dyndbm.fem import eval_field, interpolate
from dyndbm.lattice_sim import LatticeState, SimulationDataset
from dyndbm.trainer import TrainConfig, train

L, T, side = 40, 40, 0.5
arch = Architecture((L, L), (("P",),))


def f_true(a):
    x = 0.5 - a
    return 0.08 * x + 0.02 * x ** 3


truth = FieldModel(arch, ("a0_P",), side)
truth.fields["a0_P"] = interpolate(lambda x: f_true(x[0]), lambda x: np.array([-(0.08 + 0.06 * (0.5 - x[0]) ** 2)]),
                                   [(i,) for i in range(-15, 12)], 1, side)
a = integrate_forward(truth, np.array([-1.0]), T, 1.0).theta[:, 0]
p = 1 / (1 + np.exp(-a))
rng = np.random.default_rng(0)
trajs = [[LatticeState((rng.random((L, L)) < p[t]).astype(np.int8), ("P",), t) for t in range(T + 1)]
         for _ in range(100)]
print(f"true a(t) runs from {a[0]:.2f} to {a[-1]:.3f}")

cfg = TrainConfig(learning_rate=7.5e-6, window=10, slide_every=1, n_steps=1000, batch_size=20, gibbs_steps=1,
                  n_chains=100, domain=("a0_P",), initial={"a0_P": -1.0}, side=side)
res = train(SimulationDataset(trajs, {}), arch, cfg,
            callback=lambda rec, st: rec["step"] % 200 == 0 and print(f"step {rec['step']:5d} |mismatch| {rec['a0_P']:.2f}"))

print("\n     a    F learned   F true")
for x in np.linspace(a[:-1].min(), a[:-1].max(), 8):
    print(f"{x:6.3f}   {eval_field(res.model.fields['a0_P'], [x]):8.4f}  {f_true(x):8.4f}")
print("\nlearned a(T) = %.3f, true %.3f" % (res.trajectory.theta[-1, 0], a[-1]))
