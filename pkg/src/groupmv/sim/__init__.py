from .engine import (Basis, NoiseModel, Runner, ShotBatch, ShotRecord, SimError, basis_change, finish,
                     run_shot, run_shots, simulate)
from .tableau import Tableau, apply_gate, measure_z

__all__ = ["Basis", "NoiseModel", "Runner", "ShotBatch", "ShotRecord", "SimError", "Tableau", "apply_gate",
           "basis_change", "finish", "measure_z", "run_shot", "run_shots", "simulate"]
