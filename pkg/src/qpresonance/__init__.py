"""Perturbative solver and diagrammatic checks for resonant quasi-periodic
solutions of quasi-periodically forced one-dimensional systems."""

from .model import (BPoly, ForcingField, SpecError, SystemSpec, TrigPoly,
                    derive_forcing_from_hamiltonian, load_spec, sample_model,
                    save_spec)

__all__ = [
    "BPoly", "ForcingField", "SpecError", "SystemSpec", "TrigPoly",
    "derive_forcing_from_hamiltonian", "load_spec", "sample_model", "save_spec",
]
__version__ = "0.1.0"
