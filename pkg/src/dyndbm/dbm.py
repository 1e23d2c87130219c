"""Locally connected multinomial deep Boltzmann machine with shared parameters.

Every layer is a ``height x width`` grid of multinomial units: each unit is
empty or holds exactly one species of its layer. Unit ``(r, c)`` of layer
``l + 1`` is connected to the patch of layer-``l`` units
``(r + dr, c + dc)`` for ``(dr, dc)`` in the patch offsets, wrapping
periodically. With equally sized layers and stride one, each unit has
``q = patch_h * patch_w`` neighbours in the layer above and in the layer
below.

Parameters are one bias per (layer, species) and one weight per enabled
(layer pair, species pair). They are handled as flat vectors ordered like
``Architecture.interactions``: all biases first, then weights.

States are lists with one integer array per layer, of shape
``(batch, height, width)``; 0 means empty and ``k + 1`` the k-th species.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Interaction:
    kind: str  # "a" (bias) or "W" (weight)
    layer: int  # lower layer for weights
    species: tuple[str, ...]

    @property
    def name(self) -> str:
        if self.kind == "a":
            return f"a{self.layer}_{self.species[0]}"
        return f"W{self.layer}{self.layer + 1}_{self.species[0]}_{self.species[1]}"


def parse_interaction(name: str) -> Interaction:
    head, *sp = name.split("_")
    if head.startswith("a") and len(sp) == 1:
        return Interaction("a", int(head[1:]), tuple(sp))
    if head.startswith("W") and len(sp) == 2 and len(head) >= 3:
        lower = int(head[1:len(head) // 2 + 1]) if len(head) > 3 else int(head[1])
        return Interaction("W", lower, tuple(sp))
    raise ValueError(f"cannot parse interaction name {name!r}")


@dataclass(frozen=True)
class Architecture:
    shape: tuple[int, int]
    species: tuple[tuple[str, ...], ...]
    weights: tuple[tuple[int, str, str], ...] = ()
    patch: tuple[int, int] = (2, 2)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "species", tuple(tuple(s) for s in self.species))
        object.__setattr__(self, "weights", tuple((int(l), a, b) for l, a, b in self.weights))
        object.__setattr__(self, "patch", tuple(self.patch))
        if len(self.species) < 1:
            raise ValueError("need at least one layer")
        for sp in self.species:
            if len(set(sp)) != len(sp):
                raise ValueError(f"duplicate species in layer list {sp}")
            if any("_" in s for s in sp):
                raise ValueError("species names may not contain '_'")
        for l, a, b in self.weights:
            if not 0 <= l < self.n_layers - 1:
                raise ValueError(f"weight layer pair ({l}, {l + 1}) out of range")
            if a not in self.species[l] or b not in self.species[l + 1]:
                raise ValueError(f"weight {a}-{b} references species missing from layers {l}, {l + 1}")
        if len(set(self.weights)) != len(self.weights):
            raise ValueError("duplicate weight")

    @classmethod
    def stacked(cls, shape=(40, 40), n_layers=3, species=("H", "P"), same_species_only=True,
                patch=(2, 2)) -> "Architecture":
        """Equal layers with the same species list; weights between equal species by default."""
        weights = [(l, a, b) for l in range(n_layers - 1) for a in species for b in species
                   if a == b or not same_species_only]
        return cls(tuple(shape), (tuple(species),) * n_layers, tuple(weights), tuple(patch))

    @property
    def n_layers(self) -> int:
        return len(self.species)

    @property
    def n_units(self) -> int:
        return self.shape[0] * self.shape[1]

    def n_species(self, layer: int) -> int:
        return len(self.species[layer])

    @cached_property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return tuple((dr, dc) for dr in range(self.patch[0]) for dc in range(self.patch[1]))

    def q(self, layer: int, other: int) -> int:
        """Connections from one unit of ``layer`` into ``other`` (adjacent layers only)."""
        if abs(layer - other) != 1 or not (0 <= layer < self.n_layers and 0 <= other < self.n_layers):
            return 0
        return len(self.offsets)

    @cached_property
    def interactions(self) -> tuple[Interaction, ...]:
        out = [Interaction("a", l, (a,)) for l in range(self.n_layers) for a in self.species[l]]
        out += [Interaction("W", l, (a, b)) for l, a, b in self.weights]
        return tuple(out)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(i.name for i in self.interactions)

    @property
    def n_params(self) -> int:
        return len(self.interactions)

    @cached_property
    def n_bias(self) -> int:
        return sum(len(s) for s in self.species)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def bias_index(self, layer: int, species: str) -> int:
        return sum(len(s) for s in self.species[:layer]) + self.species[layer].index(species)

    @cached_property
    def bias_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for sp in self.species:
            out.append(slice(start, start + len(sp)))
            start += len(sp)
        return tuple(out)

    @cached_property
    def weight_table(self) -> tuple[tuple[int, int, int, int, int, int], ...]:
        """One ``(k, l, ia, ib, bias_a, bias_b)`` row per weight.

        ``k`` is the parameter index, ``l`` the lower layer, ``ia``/``ib``
        the species positions within layers ``l``/``l+1`` and
        ``bias_a``/``bias_b`` the parameter indices of the matching biases.
        """
        out = []
        for k, (l, a, b) in enumerate(self.weights):
            ia, ib = self.species[l].index(a), self.species[l + 1].index(b)
            out.append((self.n_bias + k, l, ia, ib, self.bias_index(l, a), self.bias_index(l + 1, b)))
        return tuple(out)

    def unpack(self, theta) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Flat parameter vector -> per-layer bias arrays and per-pair weight matrices."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        biases = [theta[s] for s in self.bias_slices]
        weights = [np.zeros((self.n_species(l), self.n_species(l + 1))) for l in range(self.n_layers - 1)]
        for k, l, ia, ib, _, _ in self.weight_table:
            weights[l][ia, ib] = theta[k]
        return biases, weights

    def params(self, **values) -> np.ndarray:
        """Parameter vector with the named interactions set, e.g. ``params(a0_H=-2.63)``."""
        theta = np.zeros(self.n_params)
        for name, v in values.items():
            theta[self.index(name)] = v
        return theta


# ---------------------------------------------------------------- statistics

def as_batch(state) -> tuple[list[np.ndarray], bool]:
    layers = [np.asarray(s) for s in state]
    single = layers[0].ndim == 2
    if single:
        layers = [s[None] for s in layers]
    return layers, single


def onehot(layer: np.ndarray, n_species: int) -> np.ndarray:
    """``(B, H, W)`` -> ``(B, M, H, W)`` float indicators."""
    ids = np.arange(1, n_species + 1)[None, :, None, None]
    return (layer[:, None] == ids).astype(float)


def _down_counts(arch: Architecture, lower: np.ndarray) -> np.ndarray:
    """For each upper-layer unit, species counts over its patch in the layer below."""
    out = np.zeros_like(lower)
    for dr, dc in arch.offsets:
        out += np.roll(lower, (-dr, -dc), axis=(-2, -1))
    return out


def _up_counts(arch: Architecture, upper: np.ndarray) -> np.ndarray:
    """For each lower-layer unit, species counts over the upper units whose patch contains it."""
    out = np.zeros_like(upper)
    for dr, dc in arch.offsets:
        out += np.roll(upper, (dr, dc), axis=(-2, -1))
    return out


def layer_pair_counts(arch: Architecture, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """``sum_<ij> s_{i,a} s_{j,b}`` for all species pairs, shape ``(B, M_l, M_l+1)``."""
    return np.einsum("bahw,bchw->bac", lower, _up_counts(arch, upper))


def statistics(arch: Architecture, state) -> np.ndarray:
    """Sufficient statistics aligned with ``arch.interactions``, shape ``(B, P)`` (or ``(P,)``)."""
    layers, single = as_batch(state)
    ind = [onehot(s, arch.n_species(l)) for l, s in enumerate(layers)]
    b = layers[0].shape[0]
    out = np.empty((b, arch.n_params))
    for l, x in enumerate(ind):
        out[:, arch.bias_slices[l]] = x.sum(axis=(-2, -1))
    pairs = [layer_pair_counts(arch, ind[l], ind[l + 1]) for l in range(arch.n_layers - 1)]
    for k, l, ia, ib, _, _ in arch.weight_table:
        out[:, k] = pairs[l][:, ia, ib]
    return out[0] if single else out


def energy(state, theta, arch: Architecture):
    """``E = -sum_a a * count_a - sum_W W * paircount_W``; scalar for an unbatched state."""
    return -statistics(arch, state) @ np.asarray(theta, dtype=float)


def max_entropy_state(arch: Architecture, theta, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Sample every unit independently from its bias-only conditional."""
    biases, _ = arch.unpack(theta)
    out = []
    for l, a in enumerate(biases):
        logits = np.concatenate([[0.0], a])
        p = np.exp(logits - logits.max())
        p /= p.sum()
        out.append(rng.choice(len(p), size=(batch,) + arch.shape, p=p).astype(np.int8))
    return out


def random_state(arch: Architecture, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Each unit uniform over ``{empty} U species``."""
    return [rng.integers(0, arch.n_species(l) + 1, size=(batch,) + arch.shape).astype(np.int8)
            for l in range(arch.n_layers)]


# ---------------------------------------------------------------- conditionals

def neighbors(arch: Architecture, layer: int, unit: tuple[int, int], direction: int) -> list[tuple[int, int]]:
    """Units of layer ``layer + direction`` connected to ``unit`` (row, col) of ``layer``."""
    other = layer + direction
    if direction not in (-1, 1) or not (0 <= layer < arch.n_layers) or not (0 <= other < arch.n_layers):
        raise IndexError(f"no layer {other} adjacent to layer {layer}")
    h, w = arch.shape
    r, c = unit
    sign = 1 if direction == -1 else -1
    return [((r + sign * dr) % h, (c + sign * dc) % w) for dr, dc in arch.offsets]


def gibbs_conditional(arch: Architecture, theta, state, layer: int, unit: tuple[int, int]) -> np.ndarray:
    """Probabilities of ``(empty, species...)`` for one unit given the adjacent layers.

    Evaluated unit by unit from ``neighbors``; ``conditional_probs`` is the
    vectorised equivalent used for sampling.
    """
    biases, weights = arch.unpack(theta)
    layers = [np.asarray(s) for s in state]
    phi = biases[layer].astype(float).copy()
    for direction in (-1, 1):
        other = layer + direction
        if not 0 <= other < arch.n_layers:
            continue
        wmat = weights[layer] if direction == 1 else weights[other].T
        for r, c in neighbors(arch, layer, unit, direction):
            s = layers[other][r, c]
            if s:
                phi += wmat[:, s - 1]
    logits = np.concatenate([[0.0], phi])
    p = np.exp(logits - logits.max())
    return p / p.sum()


def activations(arch: Architecture, theta, layers: list[np.ndarray], layer: int) -> np.ndarray:
    """``phi`` for every unit and species of ``layer``, shape ``(B, M, H, W)``."""
    biases, weights = arch.unpack(theta)
    b = layers[0].shape[0]
    m = arch.n_species(layer)
    phi = np.broadcast_to(biases[layer][None, :, None, None], (b, m) + arch.shape).copy()
    if layer > 0:
        below = _down_counts(arch, onehot(layers[layer - 1], arch.n_species(layer - 1)))
        phi += np.einsum("ca,bchw->bahw", weights[layer - 1], below)
    if layer < arch.n_layers - 1:
        above = _up_counts(arch, onehot(layers[layer + 1], arch.n_species(layer + 1)))
        phi += np.einsum("ac,bchw->bahw", weights[layer], above)
    return phi


def conditional_probs(arch: Architecture, theta, layers: list[np.ndarray], layer: int) -> np.ndarray:
    """Softmax over ``(empty, species...)`` for every unit, shape ``(B, M + 1, H, W)``."""
    phi = activations(arch, theta, layers, layer)
    zero = np.zeros_like(phi[:, :1])
    logits = np.concatenate([zero, phi], axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _sample_categorical(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(p, axis=1)
    u = rng.random((p.shape[0], 1) + p.shape[2:])
    return np.minimum((u > cum).sum(axis=1), p.shape[1] - 1).astype(np.int8)


def gibbs_sweep(arch: Architecture, theta, state, clamp_visible: bool, rng: np.random.Generator):
    """One sweep: resample all even layers, then all odd layers.

    Units within a layer are conditionally independent given the adjacent
    layers, so each layer is drawn in one vectorised step. With
    ``clamp_visible`` layer 0 is left untouched.
    """
    layers, single = as_batch(state)
    layers = [s.copy() for s in layers]
    for parity in (0, 1):
        for l in range(parity, arch.n_layers, 2):
            if l == 0 and clamp_visible:
                continue
            layers[l] = _sample_categorical(conditional_probs(arch, theta, layers, l), rng)
    return [s[0] for s in layers] if single else layers


# ---------------------------------------------------------------- moments

@dataclass
class MomentEstimate:
    """Wake (data) and sleep (model) expectations of every sufficient statistic.

    Both vectors are ordered like ``arch.interactions``: species counts
    ``sum_i s_{i,a}`` for biases, pair counts ``sum_<ij> s s`` for weights.
    """

    wake: np.ndarray
    sleep: np.ndarray
    batch_size: int
    n_chains: int

    @property
    def difference(self) -> np.ndarray:
        """``<X>_model - <X>_data``, the plain Boltzmann-machine gradient."""
        return self.sleep - self.wake


def estimate_moments(arch: Architecture, theta, data_batch, chains, n_steps: int,
                     rng: np.random.Generator, wake_init=None) -> MomentEstimate:
    """Wake/sleep moment estimates by Gibbs sampling.

    Wake: hidden layers start from ``wake_init`` (default: bias-only
    samples) and are swept ``n_steps`` times with the visible layer clamped
    to ``data_batch``. Sleep: the persistent ``chains`` (a state list,
    updated in place) are swept ``n_steps`` times unclamped. Expectations
    use the final sample of every chain.
    """
    data = np.asarray(data_batch)
    if data.ndim == 2:
        data = data[None]
    if data.shape[0] == 0:
        raise ValueError("empty data batch")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    b = data.shape[0]
    if wake_init is None:
        wake = max_entropy_state(arch, theta, b, rng)
    else:
        wake = [s.copy() for s in wake_init]
    wake[0] = data.astype(np.int8)
    for _ in range(n_steps):
        wake = gibbs_sweep(arch, theta, wake, True, rng)
    sleep = [s for s in chains]
    for _ in range(n_steps):
        sleep = gibbs_sweep(arch, theta, sleep, False, rng)
    for l in range(arch.n_layers):
        chains[l][...] = sleep[l]
    return MomentEstimate(statistics(arch, wake).mean(axis=0), statistics(arch, sleep).mean(axis=0),
                          b, sleep[0].shape[0])
