"""Electric-field and ion-concentration sensing with a single NV centre in a nanodiamond."""
from .constants import DEFAULT_CONSTANTS, NVConstants
from .dsl import PulseSequence, SequenceSyntaxError, builtin, format_sequence, parse_sequence
from .electrostatics import (DielectricConfig, FieldStats, Ion, IonConfiguration, coefficient_A,
                             concentration_from_sigma, field_stats_mc, fit_sqrt_law,
                             potential_series, sample_ions, sigma_closed_form, single_ion_field,
                             total_field)
from .open_system import (FieldTrajectory, NoiseModel, StepSizeError, evolve_lindblad,
                          fid_with_dephasing, hahn_ensemble, lindblad_step,
                          sample_field_trajectory, t2_components)
from .pulse_engine import (InconsistentTraceError, SignalTrace, execute, extract_phi_e,
                           fid_phi_e_closed, fid_xi_perp_closed, fid_xi_z_closed, hahn_closed)
from .reconstruct import ProtocolSettings, ReconstructionResult, reconstruct_field, run_protocol
from .spectral import (FitResult, Spectrum, find_peaks, fit_alpha, fit_fid_frequency,
                       fit_hahn_decay, resolvable, spectrum)
from .spin import (DriveSettings, EigenSystem, NVFrequencies, build_drive, build_h0,
                   drive_propagator, eigensystem, field_to_frequencies, free_propagator)

__version__ = "0.1.0"
