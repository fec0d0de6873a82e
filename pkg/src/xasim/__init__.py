"""Classical simulation and verification of quantum algorithms for X-ray absorption spectra."""

from xasim.errors import DarkStateError, NumericalError, ValidationError
from xasim.model import (
    DipoleOperator,
    FermionModel,
    HamiltonianModel,
    KernelSpec,
    QubitModel,
    apply_cvs,
    choose_tau,
    filter_dipole_to_core,
    ground_state,
    jordan_wigner,
    jordan_wigner_dipole,
    load_fermion_model,
    load_model,
    shift_and_normalize,
)
from xasim.spectrum import SpectrumEstimate

__version__ = "0.1.0"

__all__ = [
    "DarkStateError",
    "DipoleOperator",
    "FermionModel",
    "HamiltonianModel",
    "KernelSpec",
    "NumericalError",
    "QubitModel",
    "SpectrumEstimate",
    "ValidationError",
    "apply_cvs",
    "choose_tau",
    "filter_dipole_to_core",
    "ground_state",
    "jordan_wigner",
    "jordan_wigner_dipole",
    "load_fermion_model",
    "load_model",
    "shift_and_normalize",
]
