"""Real-space Kohn-Sham theory for molecules coupled to a quantized cavity mode.

Orbitals live on the tensor product of a real-space grid and a truncated
photon Fock space.  The package provides ground-state SCF, real-time
Taylor propagation, spectral post-processing (absorption, Rabi splitting,
high harmonics, charge transfer), a classical-photon comparison solver,
and an exact-diagonalization oracle for small 1D problems.  Atomic units
everywhere.
"""

__version__ = "0.1.0"

from .cavity import CavityMode, OrbitalSet, apply_hamiltonian, photon_occupations
from .grid import Grid
from .potentials import Density, ElectronSystem, Ion
from .propagate import LaserPulse, PropConfig, propagate
from .scf import ScfConfig, ScfState, scf_solve, total_energy
from .spectra import SpectrumConfig, cross_section, hhg_spectrum, polarizability
from .timeseries import TimeSeries

__all__ = [
    "CavityMode", "Density", "ElectronSystem", "Grid", "Ion", "LaserPulse",
    "OrbitalSet", "PropConfig", "ScfConfig", "ScfState", "SpectrumConfig",
    "TimeSeries", "apply_hamiltonian", "cross_section", "hhg_spectrum",
    "photon_occupations", "polarizability", "propagate", "scf_solve",
    "total_energy", "__version__",
]
