"""Dynamic centered deep Boltzmann machines for learning moment closures
of spatial lattice reaction systems."""

from .dbm import Architecture
from .dynamics import FieldModel, InteractionTrajectory, integrate_forward
from .fem import BasisField
from .lattice_sim import SimulationConfig, SimulationDataset, lotka_volterra, run_ensemble
from .trainer import TrainConfig, train

__version__ = "0.1.0"
