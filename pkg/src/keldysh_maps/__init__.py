"""Decoherence maps for driven few-level systems under correlated quantum
noise, with filter-function diagnostics and pulse optimization."""

__version__ = "0.1.0"

from .linalg import (CPTPReport, apply_superop, choi_of, commutator_superop,
                     conjugation_superop, cptp_check, dag, destroy,
                     dissipator_superop, matexp, unvec, vec)
from .spectra import (NoiseSpectrum, OhmicNoise, OneOverFNoise, SumSpectrum,
                      TabulatedSpectrum, TLSNoise, WhiteNoise,
                      bath_correlation_time)
from .propagation import (Carrier, Constant, DriveEnvelope, DriveTerm, EchoPi,
                          HyperbolicWindow, PiecewiseConstant, Sinusoid,
                          SwitchOff, SystemModel, coherent_displacement,
                          interaction_coupling, propagate, static_qubit,
                          unitarity_defect)
from .filters import (FilterDecomposition, filter_area, filter_function,
                      filter_kernel_diag, filter_strength, fourier_decompose,
                      operator_strength, overlap_phi, overlap_table,
                      spectral_overlap)
from .maps import (KeldyshMapResult, NegativeRateError,
                   TransitionDecomposition, build_keldysh_map,
                   decoherence_error, floquet_decomposition,
                   fullwave_self_energy, gate_error, keldysh_map,
                   lindblad_reference, principal_value_spectrum,
                   secular_self_energy, state_transfer_error,
                   static_decomposition)
from .control import (ControlProblem, GateObjective, OptimizeResult,
                      PulseParams, StateTransferObjective, cost, gradient,
                      optimize, repeat_gate_fidelity)
from .scenarios import (build_model, build_spectrum, decompose_scenario,
                        list_scenarios, load_scenario, run_scenario,
                        validate_config)
