"""Run configuration and checkpoint files.

Configs are YAML with four optional sections (``simulation``,
``architecture``, ``training``, ``analysis``); anything omitted takes the
40x40 predator-prey experiment defaults. Checkpoints are plain text, one
grid point per line, closed by a sha256 line over everything before it.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np
import yaml

from .closure import ObservableSpec
from .dbm import Architecture
from .dynamics import FieldModel
from .fem import BasisField
from .lattice_sim import SimulationConfig, lotka_volterra
from .trainer import TrainConfig

CHECKPOINT_MAGIC = "# dyndbm checkpoint 1"


class ConfigError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    observables: tuple[str, ...] = ("count:P", "count:H")
    smoothing: float = 0.1
    n_samples: int = 100
    gibbs_steps: int = 10
    sample_steps: int = 100


@dataclass
class RunConfig:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    architecture: Architecture = field(default_factory=Architecture.stacked)
    training: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def observables(self) -> list[ObservableSpec]:
        return [ObservableSpec.parse(s) for s in self.analysis.observables]


# ---------------------------------------------------------------- config

_SIM_KEYS = {"width", "height", "counts", "rates", "n_steps", "n_sims", "dt", "seed"}
_ARCH_KEYS = {"layers", "species", "same_species_only", "weights", "patch"}
_TRAIN_KEYS = {f.name for f in dc_fields(TrainConfig)}
_ANALYSIS_KEYS = {f.name for f in dc_fields(AnalysisConfig)}


def _section(raw: dict, name: str, allowed: set) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key")
    return sec


def _positive(sec, prefix, key, allow_zero=False):
    v = sec[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"{prefix}.{key}: must be {'non-negative' if allow_zero else 'positive'}, got {v!r}")


def _simulation(sec: dict) -> SimulationConfig:
    for key in ("width", "height", "n_steps", "n_sims", "dt"):
        if key in sec:
            _positive(sec, "simulation", key)
    rates = dict(sec.get("rates") or {})
    unknown = sorted(set(rates) - {"birth", "death", "predation"})
    if unknown:
        raise ConfigError(f"simulation.rates.{unknown[0]}: unknown rate")
    for key in rates:
        _positive(rates, "simulation.rates", key)
    try:
        reactions = lotka_volterra(**rates)
    except ValueError as exc:
        raise ConfigError(f"simulation.rates: {exc}") from None
    counts = sec.get("counts", {"H": 100, "P": 100})
    if not isinstance(counts, dict):
        raise ConfigError("simulation.counts: expected a species -> count mapping")
    for k, v in counts.items():
        _positive(counts, "simulation.counts", k, allow_zero=True)
    kw = {k: sec[k] for k in ("width", "height", "n_steps", "n_sims", "dt", "seed") if k in sec}
    cfg = SimulationConfig(counts=dict(counts), reactions=reactions, **kw)
    if sum(counts.values()) > cfg.width * cfg.height:
        raise ConfigError("simulation.counts: more particles than lattice sites")
    return cfg


def _architecture(sec: dict, shape) -> Architecture:
    n_layers = sec.get("layers", 3)
    if not isinstance(n_layers, int) or n_layers < 1:
        raise ConfigError(f"architecture.layers: must be a positive integer, got {n_layers!r}")
    species = tuple(sec.get("species", ("H", "P")))
    try:
        base = Architecture.stacked(shape, n_layers, species, bool(sec.get("same_species_only", True)),
                                    tuple(sec.get("patch", (2, 2))))
        extra = [tuple(w) for w in sec.get("weights") or ()]
        for w in extra:
            if len(w) != 3:
                raise ValueError(f"weight entry {list(w)} should be [lower_layer, species, species]")
        weights = list(base.weights) + [(int(l), a, b) for l, a, b in extra if (int(l), a, b) not in base.weights]
        return Architecture(base.shape, base.species, tuple(weights), base.patch)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"architecture: {exc}") from None


def _training(sec: dict, arch: Architecture) -> TrainConfig:
    kw = dict(sec)
    if "domain" in kw:
        kw["domain"] = tuple(kw["domain"])
    if "initial" in kw:
        kw["initial"] = dict(kw["initial"] or {})
    if "learning_rate" in sec:
        _positive(sec, "training", "learning_rate", allow_zero=True)
    cfg = TrainConfig(**kw)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"training: {exc}") from None
    for key, names in (("domain", cfg.domain), ("initial", cfg.initial)):
        for n in names:
            if n not in arch.names:
                raise ConfigError(f"training.{key}: interaction {n!r} not in the architecture")
    return cfg


def _analysis(sec: dict, arch: Architecture) -> AnalysisConfig:
    kw = dict(sec)
    if "observables" in kw:
        kw["observables"] = tuple(kw["observables"])
    cfg = AnalysisConfig(**kw)
    if not 0 < cfg.smoothing <= 0.5:
        raise ConfigError(f"analysis.smoothing: cutoff must lie in (0, 0.5], got {cfg.smoothing!r}")
    for key in ("n_samples", "gibbs_steps", "sample_steps"):
        if key in kw:
            _positive(kw, "analysis", key)
    for text in cfg.observables:
        try:
            ObservableSpec.parse(text).check(arch)
        except ValueError as exc:
            raise ConfigError(f"analysis.observables: {exc}") from None
    return cfg


def parse_config(raw) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    unknown = sorted(set(raw) - {"simulation", "architecture", "training", "analysis"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    sim = _simulation(_section(raw, "simulation", _SIM_KEYS))
    arch = _architecture(_section(raw, "architecture", _ARCH_KEYS), (sim.height, sim.width))
    missing = [s for s in sim.species if s not in arch.species[0]]
    if missing:
        raise ConfigError(f"architecture.species: simulated species {missing} have no visible unit")
    train = _training(_section(raw, "training", _TRAIN_KEYS), arch)
    analysis = _analysis(_section(raw, "analysis", _ANALYSIS_KEYS), arch)
    return RunConfig(sim, arch, train, analysis)


def load_config(path) -> RunConfig:
    """Read and validate a YAML run config; an empty file gives all defaults."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------- checkpoints

def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def write_fields(path, fields: dict, meta: dict | None = None) -> None:
    """Write named ``BasisField`` objects plus JSON metadata, with a trailing checksum."""
    lines = [CHECKPOINT_MAGIC, "meta " + json.dumps(meta or {}, sort_keys=True)]
    for name in fields:
        f = fields[name]
        if any(c.isspace() for c in name):
            raise ValueError(f"field name {name!r} contains whitespace")
        keys, block = f.flat()
        lines.append(f"field {name} {f.dim} {f.side!r} {len(keys)}")
        for key, row in zip(keys, block):
            lines.append(" ".join([*map(str, key), *(repr(float(v)) for v in row)]))
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    _atomic_write(path, body + f"sha256 {digest}\n")


def read_fields(path) -> tuple[dict, dict]:
    text = Path(path).read_text()
    body, sep, tail = text.rpartition("sha256 ")
    if not sep or not tail.endswith("\n"):
        raise ChecksumError(f"{path}: missing checksum line (truncated file?)")
    if hashlib.sha256(body.encode()).hexdigest() != tail.strip():
        raise ChecksumError(f"{path}: checksum mismatch")
    lines = body.splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC or not lines[1].startswith("meta "):
        raise ValueError(f"{path}: not a dyndbm checkpoint")
    meta = json.loads(lines[1][5:])
    fields, i = {}, 2
    while i < len(lines):
        tag, name, dim, side, n = lines[i].split()
        if tag != "field":
            raise ValueError(f"{path}:{i + 1}: expected a field header")
        dim, n = int(dim), int(n)
        f = BasisField(dim, float(side))
        for line in lines[i + 1:i + 1 + n]:
            parts = line.split()
            f.coeffs[tuple(int(p) for p in parts[:dim])] = np.array([float(v) for v in parts[dim:]])
        fields[name] = f
        i += 1 + n
    return fields, meta


@dataclass
class Checkpoint:
    model: FieldModel
    theta0: np.ndarray
    n_times: int
    dt: float = 1.0
    meta: dict = field(default_factory=dict)


def arch_to_dict(arch: Architecture) -> dict:
    return {"shape": list(arch.shape), "species": [list(s) for s in arch.species],
            "weights": [list(w) for w in arch.weights], "patch": list(arch.patch)}


def arch_from_dict(d: dict) -> Architecture:
    return Architecture(tuple(d["shape"]), tuple(tuple(s) for s in d["species"]),
                        tuple(tuple(w) for w in d["weights"]), tuple(d["patch"]))


def save_checkpoint(path, model: FieldModel, theta0, n_times: int, dt: float = 1.0, extra=None) -> None:
    meta = {"architecture": arch_to_dict(model.arch), "domain": list(model.domain), "side": repr(model.side),
            "theta0": [repr(float(v)) for v in theta0], "n_times": int(n_times), "dt": repr(float(dt))}
    if extra:
        meta["extra"] = extra
    write_fields(path, model.fields, meta)


def load_checkpoint(path) -> Checkpoint:
    fields, meta = read_fields(path)
    try:
        arch = arch_from_dict(meta["architecture"])
        model = FieldModel(arch, tuple(meta["domain"]), float(meta["side"]), fields)
        theta0 = np.array([float(v) for v in meta["theta0"]])
        return Checkpoint(model, theta0, int(meta["n_times"]), float(meta["dt"]), meta.get("extra", {}))
    except KeyError as exc:
        raise ValueError(f"{path}: checkpoint metadata lacks {exc}") from None
