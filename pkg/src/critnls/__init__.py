"""Numerics for nonlinear Schrodinger equations with a time-dependent harmonic
potential that decays at the critical rate ``1/(4 t^2)``.

Modules
-------
oscillator
    Fundamental solutions of ``zeta'' + sigma zeta = 0`` and their asymptotics.
nonlinearity
    Log-corrected power nonlinearities and the threshold-integral classifier.
spectral
    Grids, unitary Fourier transforms and the factorized linear propagator.
evolution
    Strang split-step integrator with monitors and growth diagnostics.
scattering
    Phase-corrected modified scattering diagnostics.
cli
    The ``critnls`` command.
"""

__version__ = "0.1.0"

from .errors import (BlowupDetected, ConfigError, CritNLSError, DomainEscape, MassEscape,
                     SingularTime, SpectralTail, UnderResolved)
from .oscillator import (FundamentalPair, SigmaKind, SigmaModel, asymptotic_coeffs, eval_sigma,
                         matching_residuals, solve_fundamental, solve_matching, verify_asymptotics,
                         wronskian)
from .nonlinearity import (NonlinearityParams, ThresholdReport, Verdict, classify_threshold,
                           eval_F, eval_FL, eval_FS, is_admissible_R, min_admissible_R)
from .spectral import (Field, Grid, apply_D, apply_M, box_size, fourier, gaussian,
                       inverse_fourier, mdfm_propagate, mdfm_pullback, sobolev_norm)
from .evolution import SolverConfig, Trajectory, evolve, step, track_weighted_growth
from .scattering import PhaseConvention, build_record, extract_W, profile_compare, verify_sup_bounds

__all__ = [name for name in dir() if not name.startswith("_")]
