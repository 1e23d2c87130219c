import numpy as np
import pytest
from scipy import stats

from dyndbm.lattice_sim import (CapacityError, LatticeState, ReactionSet, SimulationConfig, Unimolecular,
                                count_moments, init_lattice, load_dataset, lotka_volterra, max_entropy_bias,
                                read_trajectory, run_ensemble, save_dataset, simulate, step, write_trajectory)

NO_REACTIONS = ReactionSet()


def test_init_lattice_default_counts():
    s = init_lattice(40, 40, {"H": 100, "P": 100}, 7)
    assert s.occupancy.shape == (40, 40)
    assert s.count("H") == 100 and s.count("P") == 100
    assert np.count_nonzero(s.occupancy) == 200


def test_init_lattice_empty_and_overfull():
    s = init_lattice(2, 2, {"H": 0, "P": 0}, 1)
    assert not s.occupancy.any()
    with pytest.raises(CapacityError):
        init_lattice(2, 2, {"H": 5}, 1)


def test_hop_only_conserves_counts_and_occupancy():
    rng = np.random.default_rng(0)
    s = init_lattice(10, 10, {"H": 30, "P": 30}, 2)
    frozen = lotka_volterra(0.0, 0.0, 0.0)
    for st in simulate(s, frozen, 50, 1.0, rng):
        assert st.count("H") == 30 and st.count("P") == 30
        assert set(np.unique(st.occupancy)) <= {0, 1, 2}


def test_single_particle_hops_to_each_neighbour_uniformly():
    rng = np.random.default_rng(2024)
    hits = {}
    for _ in range(8000):
        occ = np.zeros((3, 3), dtype=np.int8)
        occ[0, 0] = 1
        s = step(LatticeState(occ, ("H",)), NO_REACTIONS, 1.0, rng)
        r, c = map(int, np.argwhere(s.occupancy)[0])
        hits[(r, c)] = hits.get((r, c), 0) + 1
    assert set(hits) == {(0, 1), (1, 0), (0, 2), (2, 0)}
    assert stats.chisquare(list(hits.values())).pvalue > 0.01


def test_single_particle_visits_sites_uniformly():
    rng = np.random.default_rng(3)
    occ = np.zeros((5, 5), dtype=np.int8)
    occ[2, 2] = 1
    traj = simulate(LatticeState(occ, ("H",)), NO_REACTIONS, 100_000, 1.0, rng)
    # thin the walk so successive positions are effectively independent
    pos = np.array([np.flatnonzero(s.occupancy)[0] for s in traj[1::10]])
    counts = np.bincount(pos, minlength=25)
    assert stats.chisquare(counts).pvalue > 0.01


def test_death_only_decays_exponentially():
    k, t = 0.06, 10
    cfg = SimulationConfig(width=20, height=20, counts={"H": 200},
                           reactions=ReactionSet(unimolecular=(Unimolecular("H", (), k),)),
                           n_steps=t, n_sims=500, seed=11)
    ds = run_ensemble(cfg)
    final = np.array([traj[-1].count("H") for traj in ds.trajectories])
    expect = 200 * np.exp(-k * t)
    assert abs(final.mean() - expect) < 3 * final.std(ddof=1) / np.sqrt(len(final))


def test_run_ensemble_shapes_and_determinism():
    cfg = SimulationConfig(width=12, height=12, counts={"H": 10, "P": 10}, n_steps=20, n_sims=3, seed=5)
    a, b = run_ensemble(cfg), run_ensemble(cfg)
    assert a.n_sims == 3 and a.n_times == 21
    assert np.array_equal(a.as_array(), b.as_array())
    c = run_ensemble(SimulationConfig(width=12, height=12, counts={"H": 10, "P": 10}, n_steps=20, n_sims=3, seed=6))
    assert not np.array_equal(a.as_array(), c.as_array())


def test_run_ensemble_zero_steps():
    ds = run_ensemble(SimulationConfig(width=5, height=5, counts={"H": 2, "P": 2}, n_steps=0, n_sims=1))
    assert ds.n_sims == 1 and ds.n_times == 1


def test_default_config():
    cfg = SimulationConfig()
    assert (cfg.width, cfg.height, cfg.n_steps, cfg.n_sims) == (40, 40, 500, 100)
    uni = {r.reactant: r.rate for r in cfg.reactions.unimolecular}
    assert uni == {"P": 0.025, "H": 0.06}
    assert cfg.reactions.bimolecular[0].probability == 0.4


def test_predation_converts_prey():
    # a hunter surrounded by prey with certain predation and no death
    occ = np.full((3, 3), 2, dtype=np.int8)
    occ[1, 1] = 1
    occ[0, 0] = 0
    rs = lotka_volterra(0.0, 0.0, 1.0)
    s = step(LatticeState(occ, ("H", "P")), rs, 1.0, np.random.default_rng(0))
    assert s.count("H") >= 2
    assert s.count("H") + s.count("P") == 8


def test_invalid_reactions():
    with pytest.raises(ValueError):
        ReactionSet(unimolecular=(Unimolecular("H", (), -1.0),))
    with pytest.raises(ValueError):
        lotka_volterra(predation=1.5)


def test_count_moments_examples():
    empty = LatticeState(np.zeros((3, 3), dtype=np.int8), ("H", "P"))
    m = count_moments(empty)
    assert all(v == 0 for d in (m.counts, m.nn, m.nn2) for v in d.values())

    occ = np.zeros((3, 3), dtype=np.int8)
    occ[0, 0], occ[0, 1] = 1, 2
    m = count_moments(LatticeState(occ, ("H", "P")))
    assert m.counts == {"H": 1, "P": 1}
    assert m.nn[("H", "P")] == 1 and m.nn[("P", "H")] == 1 and m.nn[("H", "H")] == 0


def _brute_force_bonds(h, w, dist):
    bonds = 0
    for i in range(h * w):
        for j in range(h * w):
            (r1, c1), (r2, c2) = divmod(i, w), divmod(j, w)
            for dr in (-2, -1, 0, 1, 2):
                for dc in (-2, -1, 0, 1, 2):
                    if abs(dr) + abs(dc) == dist and (r1 + dr) % h == r2 and (c1 + dc) % w == c2:
                        bonds += 1
    return bonds // 2


def test_packed_2x2_bond_count():
    m = count_moments(LatticeState(np.ones((2, 2), dtype=np.int8), ("H",)))
    assert m.nn[("H", "H")] == 8 == _brute_force_bonds(2, 2, 1)


def test_packed_lattice_matches_brute_force():
    m = count_moments(LatticeState(np.ones((5, 6), dtype=np.int8), ("H",)))
    assert m.nn[("H", "H")] == _brute_force_bonds(5, 6, 1)
    assert m.nn2[("H", "H")] == _brute_force_bonds(5, 6, 2)


def test_trajectory_file_round_trip(tmp_path):
    cfg = SimulationConfig(width=8, height=6, counts={"H": 5, "P": 7}, n_steps=5, n_sims=2, seed=9)
    ds = run_ensemble(cfg)
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert np.array_equal(back.as_array(), ds.as_array())
    assert back.species == ds.species
    assert back.metadata["seed"] == 9
    first = (tmp_path / "traj_000.txt").read_text().splitlines()
    assert first[0].startswith("# ")
    # second record: time then (x, y, species) triples
    vals = first[1].split()
    assert vals[0] == "0" and (len(vals) - 1) % 3 == 0


def test_read_trajectory_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("no header\n")
    with pytest.raises(ValueError):
        read_trajectory(p)
    s = init_lattice(4, 4, {"H": 2}, 0)
    write_trajectory(p, [s], {})
    p.write_text(p.read_text() + "1 0 0\n")
    with pytest.raises(ValueError):
        read_trajectory(p)


def test_max_entropy_bias():
    assert max_entropy_bias(100 / 1600, 2) == pytest.approx(-2.639, abs=1e-3)
    with pytest.raises(ValueError):
        max_entropy_bias(0.6, 2)
