"""sclab: semiclassical mean-field lab.

Hartree-Fock and Vlasov dynamics with singular pair potentials, Wigner /
Weyl / Toeplitz transforms between them, exact few-fermion Fock-space
benchmarks, and randomized property tests of the operator inequalities the
analysis rests on.
"""

__version__ = "0.1.0"

from .grids import GridSpec
from .operators import (
    DensityOperator,
    OperatorMatrix,
    WeightOperator,
    matrix_function,
    quantum_grad_v,
    quantum_grad_x,
    schatten_norm,
    semiclassical_norm,
    sobolev_norm,
)
from .potential import KernelSpec, build_kernel, exchange_operator, hf_hamiltonian
from .vlasov import PhaseSpaceField, XiGrid, evolve_vlasov, spatial_density, step_vlasov
from .wigner import coherent_state, toeplitz_quantize, weyl_quantize, wigner_transform
from .hf import evolve, hf_energy, regularity_report, step_midpoint_unitary

__all__ = [
    "GridSpec",
    "DensityOperator",
    "OperatorMatrix",
    "WeightOperator",
    "KernelSpec",
    "PhaseSpaceField",
    "XiGrid",
    "schatten_norm",
    "semiclassical_norm",
    "sobolev_norm",
    "matrix_function",
    "quantum_grad_x",
    "quantum_grad_v",
    "build_kernel",
    "exchange_operator",
    "hf_hamiltonian",
    "step_midpoint_unitary",
    "evolve",
    "hf_energy",
    "regularity_report",
    "spatial_density",
    "step_vlasov",
    "evolve_vlasov",
    "wigner_transform",
    "weyl_quantize",
    "toeplitz_quantize",
    "coherent_state",
    "__version__",
]
