"""Latency-aware inference routing: analytic latency model, router,
autoscaler emulation, offline planners and a discrete-event simulator."""

from .errors import (
    ConfigError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidAssignmentError,
    InvalidTimeError,
    LaimrError,
    NoDataError,
    RoutingFailureError,
    UnstableQueueError,
)
from .qmodel import (
    BatchLatencyParams,
    CalibrationParams,
    InstanceProfile,
    ModelProfile,
    QualityClass,
    QueueParams,
    Tier,
    calibrate,
    erlang_c,
    g_lambda,
    g_of_n,
    queue_delay,
)
from .metrics import RunMetrics, percentile

__version__ = "0.1.0"
