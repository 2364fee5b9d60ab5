"""Determinantal point processes on compact domains.

Finite-rank spectral kernels, exact sampling, Janossy densities, the
differential calculus on configurations (gradients, potential, drift,
integration by parts, quasi-invariance), the associated Langevin diffusion
and Monte Carlo checks of the identities that tie them together.
"""

from .calculus import (
    FlowMap,
    InfinitePotentialError,
    TestFunctional,
    VectorField,
    apply_generator,
    b_v,
    beta_field,
    directional_grad,
    divergence_op,
    drift,
    eval_functional,
    flow_apply,
    flow_jacobian,
    grad_functional,
    potential_U,
    quasi_invariance_weight,
)
from .domain import DomainDescriptor, DomainError
from .dynamics import CappedStep, NoTaming, SdeConfig, Tamed, TrajectoryRecord, collision_stats, evolve, stationarity_test
from .kernels import (
    PointConfiguration,
    SpectralKernel,
    UnsupportedOperatorError,
    correlation_fn,
    fredholm_det,
    j_kernel_eval,
    janossy_density,
    kernel_eval,
    log_janossy_density,
    make_bergman_kernel,
    make_dyson_kernel,
)
from .point_process import SampleBatch, domination_test, empirical_intensity, sample_dpp, sample_poisson
from .specs import load_kernel
from .stats import McEstimate
from .symmetric import vandermonde_schur_det
from .verification import IdentityReport, run_all

__version__ = "0.1.0"
