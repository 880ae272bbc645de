"""Rosenblatt processes, their Volterra representation and a Girsanov-type change of measure."""

from .frac_calc import (
    FracOrder,
    frac_derivative,
    frac_integral,
    integration_by_parts_check,
    weighted_frac_op,
)
from .girsanov import (
    DriftRemoval,
    GirsanovDensity,
    GirsanovShift,
    NotReducibleError,
    ShiftSpec,
    drift_removal,
    indicator_shift,
    inverse_shift_identity,
    log_density,
    novikov_check,
    parse_shift,
    phi_from_theta,
    power_shift,
    shifted_rosenblatt_direct,
    shifted_rosenblatt_via_tilde,
    theta_from_phi,
)
from .grid import NoisePartition, SampledFunction, TimeGrid
from .kernels import (
    HurstParam,
    KernelMatrix,
    adjoint_op,
    adjoint_op_inverse,
    fbm_covariance,
    kh_inverse,
    make_hurst,
    rosenblatt_kernel,
    volterra_kernel,
    volterra_kernel_deriv,
)
from .simulate import (
    PathBundle,
    RosenblattSimulator,
    WienerIncrements,
    fbm_path,
    gen_increments,
    recover_wiener,
    rosenblatt_path,
    wiener_integral_fbm,
)
from .verify import McConfig, McReport, covariance_compare, ess, run_mc, weighted_moment

__version__ = "0.1.0"
