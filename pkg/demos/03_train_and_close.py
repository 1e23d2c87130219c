"""
Learning a moment closure for lattice predator-prey
===================================================

Train a 3-layer centered DBM with time-varying interactions on a small
ensemble, then split d<prey>/dt into one covariance term per interaction
and compare the sum with the derivative of the simulation mean.

This is a desk-scale run (a couple of minutes); the full 40x40 setup is
``dyndbm simulate/train/analyze`` with the default config.
"""
import numpy as np

from dyndbm.closure import ObservableSpec, closure_terms, data_derivative, ensemble_mean, smooth
from dyndbm.dbm import Architecture
from dyndbm.lattice_sim import SimulationConfig, run_ensemble
from dyndbm.trainer import TrainConfig, train

ds = run_ensemble(SimulationConfig(width=20, height=20, counts={"H": 25, "P": 25}, n_steps=120, n_sims=20, seed=3))
arch = Architecture.stacked((20, 20), 3)
print("interactions:", ", ".join(arch.names))

cfg = TrainConfig(learning_rate=1e-5, window=20, slide_by=5, slide_every=10, n_steps=200, seed=0)


def progress(rec, state):
    if rec["step"] % 40 == 0:
        vis = 0.5 * (rec["a0_H"] + rec["a0_P"])
        print(f"step {rec['step']:4d}  tau {rec['tau']:3d}  visible |mismatch| {vis:6.2f}")


res = train(ds, arch, cfg, callback=progress)

obs = ObservableSpec.parse("count:P")
times = np.arange(0, ds.n_times, 10)
dec = closure_terms(obs, res.model, res.trajectory, n_samples=100, gibbs_steps=10, rng=1, times=times)
ddata = smooth(data_derivative(ds, obs), 0.1)
mean = ensemble_mean(ds, obs)

print("\n   t  <P>data  <P>model   bias terms  weight terms   total   d<P>/dt data")
for i, t in enumerate(times):
    print(f"{t:4d}  {mean[t]:7.1f}  {dec.mean[i]:8.1f}   {dec.group('a')[i]:10.2f}  {dec.group('W')[i]:12.2f}"
          f"  {dec.total[i]:6.2f}   {ddata[t]:8.2f}")
