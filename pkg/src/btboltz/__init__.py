"""Binary-ternary Boltzmann solver and verification suite near vacuum."""

from .phase_space import (Maxwellian, PhaseGrid, PhaseDensity, Tolerances,
                          maxwellian_eval, transport, l1_norm)
from .collision_maps import binary_map, ternary_map, u_tilde_mag, sample_impact
from .cross_sections import KernelConfig, angular_norm
from .estimates import (WellposednessConstants, convolution_constants,
                        wellposedness_constants, dimensional_constant)
from .operators import QuadratureSpec, OperatorResult, r_sharp, gain_sharp, loss_sharp
from .ks_solver import LinearProblem, solve_linear, ks_init, ks_solve

__version__ = "0.1.0"
