"""Hitting times of Bessel processes: series, explicit bounds, samplers and checks."""

from .hitting import (
    BesselHitParams,
    TailValue,
    UnconvergedError,
    density,
    exact_moment,
    exact_tail,
    laplace_transform,
    log_tail,
    mean_hitting_time,
    variance,
)
from .mc import McConfig, SampleBatch, sample_bm_exit, sample_kent, sample_sde
from .specfun import DomainError, ZeroCache, zero_table, zeros
from .verify import VerificationReport, check_left_tail_bounds, check_right_tail_bounds, fit_envelope_constants

__version__ = "0.1.0"
