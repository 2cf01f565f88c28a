"""Weyl-Heisenberg integral quantization with arbitrary weight functions."""
from ._accel import backend_name, set_threads
from .coeffs import CoeffTable4, cg_star_coeffs, convolve2, convolve4, ratio_coeffs, star_coeffs, tables_for
from .fock import (
    DimensionError,
    DomainError,
    FockOperator,
    FockVector,
    MagnitudeOverflowError,
    PhasePoint,
    basis,
    coherent,
    displacement,
    displacement_block,
    identity,
    ladder_ops,
    number_op,
    operator_from_csv,
    operator_to_csv,
    parity,
    quadrature_ops,
    rotation,
    time_reverse,
    trace_pair,
)
from .portraits import AccuracyWarning, duality_check, l_safe, lower_symbol, povm_diagnostic, wigner_map
from .quantizer import (
    DegreeCapError,
    DivergenceRiskError,
    build_m,
    displaced_m,
    position_kernel,
    quantize,
    quantize_grid,
    quantize_poly_qp,
    quantize_poly_z,
    quantize_separable_gauss,
)
from .sft import PhaseField, PhaseGrid, cartesian_grid, field_from_csv, field_to_csv, gauss_hermite_grid, polar_grid, sft
from .star import StarExpansion, operator_product_check, poisson, star, star_commutator
from .symbols import Poly2, SeparableLqPm, parse_poly, parse_symbol
from .weights import CoeffTable2, WeightSpec, classify_weight, invert_series, parse_weight, weight_taylor

__version__ = "0.1.0"
