"""Finite-volume Schrödinger operators with correlated Gaussian potentials.

Monte Carlo checks of expected eigenvalue counts against Wegner-type
bounds, the generating-function construction behind those bounds, and a
demonstration that Gaussian fields need not have regular conditional laws.
"""
from .covariance import CovarianceSpec, assemble_matrix, evaluate, preset, validate
from .genfunc import (
    abstract_wegner_bound,
    analyze,
    build_coefficients,
    check_positivity,
    compute_R_L,
    derivative_at_one,
    find_leading_index,
    main_theorem_bound,
)
from .lattice import LatticeBox, MultiIndex, box_points, falling_factorial_product, monomial
from .sampler import conditional, draw, prepare
from .spectral import (
    assemble_hamiltonian,
    averaging_check,
    build_background,
    count_below,
    count_in_interval,
    eig_symmetric,
    spectral_projector,
)

__version__ = "0.1.0"
