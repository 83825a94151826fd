"""Bilinear control of the nonlinear Schrodinger equation on the torus."""

from .growth import GrowthStats, NoiseModel, monte_carlo, run_trajectory, sample_eta_unit
from .saturation import (DensityReport, FrequencySet, SaturationReport, SubspaceBasis, chain_connected,
                         closure_step, density_check, is_generator, is_saturating)
from .solver import BlowUp, ControlSchedule, SimParams, Trajectory, check_stability, evolve
from .spectral import Grid, SpectralField, imprint_phase, plane_wave, sobolev_norm
from .synthesis import (KickPlan, Leaf, Node, amplify_norm, compile, decompose, synthesize,
                        verify_limit)
from .transfer import eigenstate_transfer
from .trig import TrigPolynomial, apply_B

__version__ = "0.1.0"

__all__ = [
    "BlowUp", "ControlSchedule", "DensityReport", "FrequencySet", "Grid", "GrowthStats",
    "KickPlan", "Leaf", "Node", "NoiseModel", "SaturationReport", "SimParams", "SpectralField",
    "SubspaceBasis", "Trajectory", "TrigPolynomial", "amplify_norm", "apply_B", "chain_connected",
    "check_stability", "closure_step", "compile", "decompose", "density_check",
    "eigenstate_transfer", "evolve", "imprint_phase", "is_generator", "is_saturating",
    "monte_carlo", "plane_wave", "run_trajectory", "sample_eta_unit", "sobolev_norm",
    "synthesize", "verify_limit",
]
