"""Decoherence of free electrons passing near a chiral thin film."""
from .units import DEFAULT_CONSTANTS, PhysicalConstants, sqrt_upper
from .materials import (ChiralOscillator, Environment, MaterialModel, Oscillator,
                        default_material, passivity_report, pasteur, permittivity)
from .slab import Geometry, fresnel_two_media, layer_matrices, reflection_matrix
from .greens import electron_line_kernel, im_gxx, upsilon, vacuum_im_gxx
from .quadrature import NumericsConfig, QuadratureResult, integrate_adaptive
from .response import (ResponseConfig, delta_a, delta_map, delta_point, delta_s, kernel_bundle,
                       kernel_grid, lateral_kernel_A, phase_phi, sigma_n, spectral_positivity,
                       spectral_weight, spread_kernel_S)
from .electron import ElectronParams, asym_gamma, gamma, mirrored, phi_i
from .observables import (energy_moments, energy_spectrum, eels_weak_coupling,
                          lateral_momentum_distribution, lateral_momentum_moments)

__version__ = "0.1.0"
