"""Delay-robust backstepping control of two coupled hyperbolic transport equations."""

from .errors import (CommensurabilityError, ConfigError, ContourError, ConvergenceError,
                     GridMismatchError, PreconditionError, SimulationError,
                     UnsupportedLawError)
from .model import (ConstantProfile, PlantConfig, StabilizabilityClass, TabulatedProfile,
                    characteristic_time, check_filter_conditions, check_gain_bound,
                    classify_open_loop_gain, gain_bound)
from .laws import (Filtered, FullCancellation, OpenLoop, PartialCancellation,
                   StaticBoundary, law_from_dict, law_to_dict)
from .kernels import (FeedbackGains, InverseKernelSet, KernelSet, compute_feedback_gains,
                      design, solve_inverse_kernels, solve_kernels, verify_kernel_residual)
from .pde_sim import PdeState, TraceRecord, l2_norm, simulate, transform_state

__version__ = "0.1.0"
