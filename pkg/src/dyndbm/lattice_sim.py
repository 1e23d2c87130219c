"""Stochastic reaction-diffusion on a periodic 2D lattice.

Particles hop between von Neumann neighbours under single occupancy.
Within each timestep unimolecular reactions are fired by a Gillespie SSA
restricted to the step window, then every particle (in random order)
attempts one hop; landing on an occupied site triggers a bimolecular
reaction with the configured encounter probability, otherwise the move
is rejected.

Occupancy grids are integer arrays of shape ``(height, width)`` where 0
means empty and ``k + 1`` is the k-th species of the species list.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

EMPTY = 0

# von Neumann moves as (drow, dcol)
_MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)], dtype=np.int64)


class CapacityError(ValueError):
    """More particles requested than the lattice has sites."""


@dataclass(frozen=True)
class Species:
    id: int
    name: str


@dataclass(frozen=True)
class Unimolecular:
    """``reactant -> products`` at ``rate`` per reactant particle.

    ``reactant=None`` is spontaneous creation at a random empty site (rate
    per unit time for the whole lattice). Empty ``products`` removes the
    particle, one product converts it in place, and two products (the
    first equal to the reactant) reproduce onto a uniformly chosen empty
    neighbour, rejected only when all four neighbours are occupied.
    """

    reactant: str | None
    products: tuple[str, ...]
    rate: float


@dataclass(frozen=True)
class Bimolecular:
    """``A + B -> C + D`` fired with ``probability`` when A and B meet.

    The particle in role A becomes C in place and the one in role B
    becomes D; ``None`` products remove the particle.
    """

    reactants: tuple[str, str]
    products: tuple[str | None, str | None]
    probability: float


@dataclass(frozen=True)
class ReactionSet:
    unimolecular: tuple[Unimolecular, ...] = ()
    bimolecular: tuple[Bimolecular, ...] = ()

    def __post_init__(self):
        for r in self.unimolecular:
            if r.rate < 0:
                raise ValueError(f"negative rate {r.rate} for {r}")
            if len(r.products) > 2:
                raise ValueError(f"at most two products supported: {r}")
            if len(r.products) == 2 and r.products[0] != r.reactant:
                raise ValueError(f"two-product unimolecular reactions must keep the reactant: {r}")
        for r in self.bimolecular:
            if not 0.0 <= r.probability <= 1.0:
                raise ValueError(f"probability {r.probability} outside [0, 1] for {r}")

    def species_names(self) -> list[str]:
        names = []
        for r in self.unimolecular:
            names.extend(n for n in (r.reactant, *r.products) if n is not None)
        for r in self.bimolecular:
            names.extend(n for n in (*r.reactants, *r.products) if n is not None)
        return list(dict.fromkeys(names))


def lotka_volterra(birth=0.025, death=0.06, predation=0.4) -> ReactionSet:
    """Prey-catalysed birth ``P -> P + P``, death ``H -> 0``, predation ``H + P -> H + H``.

    Defaults are the 40x40 experiment: birth 0.025, hunter death 0.06 and
    predation encounter probability 0.4. In the reaction scheme the
    source text labels the last two as k3 and k2 respectively although
    k2 is the death rate and k3 the predation rate; the values here
    follow the roles, not the labels.
    """
    return ReactionSet(
        unimolecular=(
            Unimolecular("P", ("P", "P"), birth),
            Unimolecular("H", (), death),
        ),
        bimolecular=(Bimolecular(("H", "P"), ("H", "H"), predation),),
    )


@dataclass
class LatticeState:
    occupancy: np.ndarray
    species: tuple[str, ...]
    time: int = 0

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    def species_id(self, name: str) -> int:
        return self.species.index(name) + 1

    def count(self, name: str) -> int:
        return int(np.count_nonzero(self.occupancy == self.species_id(name)))

    def sites(self):
        """Occupied sites as ``(x, y, species_id)`` rows with x the column index."""
        rows, cols = np.nonzero(self.occupancy)
        return np.column_stack([cols, rows, self.occupancy[rows, cols]])

    def copy(self) -> "LatticeState":
        return LatticeState(self.occupancy.copy(), self.species, self.time)


@dataclass
class SimulationConfig:
    width: int = 40
    height: int = 40
    counts: dict = field(default_factory=lambda: {"H": 100, "P": 100})
    reactions: ReactionSet = field(default_factory=lotka_volterra)
    n_steps: int = 500
    n_sims: int = 100
    dt: float = 1.0
    seed: int = 0

    @property
    def species(self) -> tuple[str, ...]:
        names = list(self.counts)
        names += [n for n in self.reactions.species_names() if n not in names]
        return tuple(names)


@dataclass
class SimulationDataset:
    trajectories: list[list[LatticeState]]
    metadata: dict

    @property
    def n_sims(self) -> int:
        return len(self.trajectories)

    @property
    def n_times(self) -> int:
        return len(self.trajectories[0]) if self.trajectories else 0

    @property
    def species(self) -> tuple[str, ...]:
        return self.trajectories[0][0].species

    @property
    def shape(self) -> tuple[int, int]:
        return self.trajectories[0][0].occupancy.shape

    def occupancy_at(self, t: int, sims=None) -> np.ndarray:
        """Stack the occupancy grids at timestep ``t`` into ``(n, height, width)``."""
        sims = range(self.n_sims) if sims is None else sims
        return np.stack([self.trajectories[s][t].occupancy for s in sims])

    def as_array(self) -> np.ndarray:
        """All occupancies as ``(n_sims, n_times, height, width)``."""
        return np.stack([[s.occupancy for s in traj] for traj in self.trajectories])


def init_lattice(width: int, height: int, counts: dict, rng_seed=None,
                 species: tuple[str, ...] | None = None) -> LatticeState:
    """Place ``counts[name]`` particles of each species on distinct random sites."""
    species = tuple(counts) if species is None else tuple(species)
    total = sum(counts.values())
    if total > width * height:
        raise CapacityError(f"{total} particles do not fit on {width}x{height} = {width * height} sites")
    rng = np.random.default_rng(rng_seed)
    occ = np.zeros(height * width, dtype=np.int8)
    sites = rng.permutation(width * height)[:total]
    start = 0
    for name, n in counts.items():
        occ[sites[start:start + n]] = species.index(name) + 1
        start += n
    return LatticeState(occ.reshape(height, width), species, 0)


@numba.njit(cache=True)
def _hop_pass(occ, pid, order, pos, dirs, u, moves, react_table, prob_table, prod_table):
    """One diffusion/encounter pass over particles in ``order``.

    ``react_table[a, b]`` is the bimolecular reaction index for mover ``a``
    landing on ``b`` (or -1); ``prod_table[k, 0/1]`` gives the new species
    for the mover and target of reaction ``k``, already oriented to the
    (mover, target) roles.
    """
    h, w = occ.shape
    for n in range(order.shape[0]):
        p = order[n]
        r = pos[p, 0]
        c = pos[p, 1]
        if r < 0:
            continue
        d = dirs[n]
        nr = (r + moves[d, 0]) % h
        nc = (c + moves[d, 1]) % w
        target = occ[nr, nc]
        if target == 0:
            occ[nr, nc] = occ[r, c]
            occ[r, c] = 0
            pid[nr, nc] = p
            pid[r, c] = -1
            pos[p, 0] = nr
            pos[p, 1] = nc
            continue
        k = react_table[occ[r, c], target]
        if k < 0 or u[n] >= prob_table[k]:
            continue
        new_mover = prod_table[k, 0]
        new_target = prod_table[k, 1]
        occ[r, c] = new_mover
        occ[nr, nc] = new_target
        if new_mover == 0:
            pos[p, 0] = -1
            pid[r, c] = -1
        if new_target == 0:
            q = pid[nr, nc]
            pos[q, 0] = -1
            pid[nr, nc] = -1


class _Kernel:
    """Reaction tables resolved against one species list."""

    def __init__(self, reactions: ReactionSet, species: tuple[str, ...]):
        sid = {name: i + 1 for i, name in enumerate(species)}
        for name in reactions.species_names():
            if name not in sid:
                raise ValueError(f"reaction species {name!r} not in lattice species {species}")
        m = len(species) + 1
        self.uni = reactions.unimolecular
        self.uni_reactant = [None if r.reactant is None else sid[r.reactant] for r in self.uni]
        self.uni_products = [tuple(sid[p] for p in r.products) for r in self.uni]
        nb = len(reactions.bimolecular)
        self.react_table = np.full((m, m), -1, dtype=np.int64)
        self.prob_table = np.zeros(max(2 * nb, 1))
        self.prod_table = np.zeros((max(2 * nb, 1), 2), dtype=np.int8)
        k = 0
        for r in reactions.bimolecular:
            a, b = (sid[x] for x in r.reactants)
            pa, pb = (0 if x is None else sid[x] for x in r.products)
            for mover, target, pm, pt in ((a, b, pa, pb), (b, a, pb, pa)):
                if self.react_table[mover, target] >= 0:
                    continue
                self.react_table[mover, target] = k
                self.prob_table[k] = r.probability
                self.prod_table[k] = (pm, pt)
                k += 1

    def ssa(self, occ: np.ndarray, dt: float, rng: np.random.Generator) -> None:
        """Gillespie SSA for unimolecular channels until the step window closes."""
        if not self.uni:
            return
        h, w = occ.shape
        rates = np.array([r.rate for r in self.uni])
        t = 0.0
        while True:
            counts = np.bincount(occ.ravel(), minlength=occ.max() + 1)
            pops = np.array([1.0 if s is None else float(counts[s]) if s < len(counts) else 0.0
                             for s in self.uni_reactant])
            props = rates * pops
            total = props.sum()
            if total <= 0.0:
                return
            t += rng.exponential(1.0 / total)
            if t > dt:
                return
            k = int(np.searchsorted(np.cumsum(props), rng.random() * total, side="right"))
            k = min(k, len(props) - 1)
            reactant, products = self.uni_reactant[k], self.uni_products[k]
            if reactant is None:
                empty = np.flatnonzero(occ.ravel() == EMPTY)
                if empty.size:
                    occ.ravel()[empty[rng.integers(empty.size)]] = products[0] if products else EMPTY
                continue
            sites = np.flatnonzero(occ.ravel() == reactant)
            site = sites[rng.integers(sites.size)]
            r, c = divmod(int(site), w)
            if len(products) == 0:
                occ[r, c] = EMPTY
            elif len(products) == 1:
                occ[r, c] = products[0]
            else:
                free = [((r + dr) % h, (c + dc) % w) for dr, dc in _MOVES
                        if occ[(r + dr) % h, (c + dc) % w] == EMPTY]
                if free:
                    occ[free[rng.integers(len(free))]] = products[1]

    def hop(self, occ: np.ndarray, rng: np.random.Generator) -> None:
        rows, cols = np.nonzero(occ)
        n = rows.size
        if n == 0:
            return
        pos = np.column_stack([rows, cols]).astype(np.int64)
        pid = np.full(occ.shape, -1, dtype=np.int64)
        pid[rows, cols] = np.arange(n)
        order = rng.permutation(n)
        dirs = rng.integers(0, 4, size=n)
        u = rng.random(n)
        _hop_pass(occ, pid, order, pos, dirs, u, _MOVES, self.react_table,
                  self.prob_table, self.prod_table)


def step(state: LatticeState, reactions: ReactionSet, dt: float, rng: np.random.Generator,
         _kernel: _Kernel | None = None) -> LatticeState:
    """Advance one timestep: unimolecular SSA over ``dt``, then one hop pass."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernel = _kernel or _Kernel(reactions, state.species)
    occ = state.occupancy.copy()
    kernel.ssa(occ, dt, rng)
    kernel.hop(occ, rng)
    return LatticeState(occ, state.species, state.time + 1)


def simulate(initial: LatticeState, reactions: ReactionSet, n_steps: int, dt: float,
             rng: np.random.Generator) -> list[LatticeState]:
    kernel = _Kernel(reactions, initial.species)
    traj = [initial]
    for _ in range(n_steps):
        traj.append(step(traj[-1], reactions, dt, rng, kernel))
    return traj


def run_ensemble(config: SimulationConfig) -> SimulationDataset:
    """Run ``config.n_sims`` independent trajectories from one master seed.

    Each trajectory gets its own child stream of ``SeedSequence(seed)``, so
    the result does not depend on execution order.
    """
    species = config.species
    children = np.random.SeedSequence(config.seed).spawn(config.n_sims)
    trajectories = []
    for child in children:
        init_seed, run_seed = child.spawn(2)
        state = init_lattice(config.width, config.height, config.counts, init_seed, species)
        trajectories.append(simulate(state, config.reactions, config.n_steps, config.dt,
                                     np.random.default_rng(run_seed)))
    meta = {
        "seed": config.seed,
        "width": config.width,
        "height": config.height,
        "dt": config.dt,
        "n_steps": config.n_steps,
        "species": list(species),
        "counts": dict(config.counts),
        "reactions": reactions_to_dict(config.reactions),
    }
    return SimulationDataset(trajectories, meta)


# ---------------------------------------------------------------- moments

@dataclass
class MomentRecord:
    counts: dict
    nn: dict
    nn2: dict


# bond offsets covering every unordered site pair exactly once
NN_OFFSETS = ((0, 1), (1, 0))
NN2_OFFSETS = ((0, 2), (2, 0), (1, 1), (1, -1))


def onehot(occ: np.ndarray, n_species: int) -> np.ndarray:
    """``(..., H, W)`` occupancy -> ``(..., M, H, W)`` float indicator array."""
    ids = np.arange(1, n_species + 1).reshape((n_species,) + (1,) * 2)
    return (occ[..., None, :, :] == ids).astype(float)


def pair_counts(ind: np.ndarray, offsets) -> np.ndarray:
    """Pair counts ``(..., M, M)`` over bonds given by ``offsets``.

    Entry ``[a, b]`` counts bonds whose two ends hold ``a`` and ``b``; the
    result is symmetrised so ``[a, b] == [b, a]`` counts each unordered
    bond once for every species pair.
    """
    out = 0.0
    for dr, dc in offsets:
        shifted = np.roll(ind, (-dr, -dc), axis=(-2, -1))
        out = out + np.einsum("...ahw,...bhw->...ab", ind, shifted)
    diag = np.einsum("...aa->...a", out)
    sym = out + np.swapaxes(out, -1, -2)
    idx = np.arange(ind.shape[-3])
    sym[..., idx, idx] = diag
    return sym


def count_moments(state: LatticeState) -> MomentRecord:
    """Species counts, nearest-neighbour and Manhattan-distance-2 pair counts."""
    names = state.species
    ind = onehot(state.occupancy, len(names))
    counts = ind.sum(axis=(-2, -1))
    nn = pair_counts(ind, NN_OFFSETS)
    nn2 = pair_counts(ind, NN2_OFFSETS)
    return MomentRecord(
        counts={a: int(round(counts[i])) for i, a in enumerate(names)},
        nn={(a, b): int(round(nn[i, j])) for i, a in enumerate(names) for j, b in enumerate(names)},
        nn2={(a, b): int(round(nn2[i, j])) for i, a in enumerate(names) for j, b in enumerate(names)},
    )


# ---------------------------------------------------------------- persistence

def reactions_to_dict(reactions: ReactionSet) -> dict:
    return {
        "unimolecular": [[r.reactant, list(r.products), r.rate] for r in reactions.unimolecular],
        "bimolecular": [[list(r.reactants), list(r.products), r.probability] for r in reactions.bimolecular],
    }


def reactions_from_dict(d: dict) -> ReactionSet:
    return ReactionSet(
        unimolecular=tuple(Unimolecular(r, tuple(p), float(k)) for r, p, k in d.get("unimolecular", [])),
        bimolecular=tuple(Bimolecular(tuple(r), tuple(p), float(k)) for r, p, k in d.get("bimolecular", [])),
    )


def write_trajectory(path, trajectory: list[LatticeState], metadata: dict) -> None:
    """One header line of JSON metadata, then ``t x y s x y s ...`` per timestep."""
    path = Path(path)
    first = trajectory[0]
    meta = dict(metadata, species=list(first.species), width=first.width, height=first.height)
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    for state in trajectory:
        flat = state.sites().ravel()
        lines.append(" ".join([str(state.time), *map(str, flat.tolist())]))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_trajectory(path) -> tuple[list[LatticeState], dict]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing metadata header")
        meta = json.loads(header[2:])
        species = tuple(meta["species"])
        h, w = meta["height"], meta["width"]
        traj = []
        for lineno, line in enumerate(fh, start=2):
            vals = [int(v) for v in line.split()]
            if not vals or (len(vals) - 1) % 3:
                raise ValueError(f"{path}:{lineno}: malformed record")
            occ = np.zeros((h, w), dtype=np.int8)
            sites = np.array(vals[1:], dtype=np.int64).reshape(-1, 3)
            occ[sites[:, 1], sites[:, 0]] = sites[:, 2]
            traj.append(LatticeState(occ, species, vals[0]))
    return traj, meta


def save_dataset(dataset: SimulationDataset, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(dataset.n_sims - 1)))
    paths = []
    for k, traj in enumerate(dataset.trajectories):
        p = directory / f"traj_{k:0{width}d}.txt"
        write_trajectory(p, traj, dict(dataset.metadata, index=k))
        paths.append(p)
    return paths


def load_dataset(directory) -> SimulationDataset:
    paths = sorted(Path(directory).glob("traj_*.txt"))
    if not paths:
        raise FileNotFoundError(f"no trajectory files in {directory}")
    trajectories, meta = [], {}
    for p in paths:
        traj, meta = read_trajectory(p)
        trajectories.append(traj)
    lengths = {len(t) for t in trajectories}
    if len(lengths) != 1:
        raise ValueError(f"trajectories in {directory} have differing lengths {sorted(lengths)}")
    meta = {k: v for k, v in meta.items() if k != "index"}
    return SimulationDataset(trajectories, meta)


def mean_counts(dataset: SimulationDataset) -> dict:
    """Ensemble-mean species counts per timestep."""
    arr = dataset.as_array()
    return {name: (arr == i + 1).sum(axis=(2, 3)).mean(axis=0) for i, name in enumerate(dataset.species)}


def max_entropy_bias(density: float, n_species: int) -> float:
    """Bias giving per-species occupancy ``density`` for an uncoupled multinomial unit.

    Solves ``e^a / (1 + M e^a) = density``.
    """
    if not 0.0 < density * n_species < 1.0:
        raise ValueError("density must satisfy 0 < M * density < 1")
    return math.log(density / (1.0 - n_species * density))
