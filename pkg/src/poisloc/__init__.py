"""Localization of a Poisson source on the plane from change-point event streams."""

from ._backend import backend_name
from .errors import (
    ConfigError,
    DegenerateMass,
    DomainError,
    ExclusionViolation,
    FormError,
    InsufficientReplications,
    SingularGeometry,
)
from .estimators import EstimateResult, Prior, bayes_estimate, estimate_arrival, mle_estimate, trilaterate
from .geometry import ParameterRectangle, PlanePoint, SensorArray, direction_frame, validate_identifiability
from .likelihood import SidedValue, expected_half_lr, hellinger, log_lr, log_lr_constant, log_lr_field
from .limit_process import LimitModel, ZetaSample, efficiency_bound, sample_ln_z, sample_zeta
from .signal import Constant, SignalModel, Tabulated
from .simulate import EventRecord, SimulationSeed, sample_events

__version__ = "0.1.0"
