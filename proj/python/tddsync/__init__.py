"""Python access to the phase calibration simulator."""

import json

from ._tddsync import (
    ConfigError,
    TddsyncError,
    incidence_matrix,
    kalman_two_ap,
    run_experiment,
    scalar_riccati_fixed_point,
    sigma_nu_sq_from_spectrum_level,
    solve_phases,
)
from ._tddsync import schedule_json as _schedule_json


def schedule(strengths, m_min=0):
    """Measurement schedule of a threshold graph, as a dict."""
    return json.loads(_schedule_json(strengths, m_min))


__all__ = [
    "ConfigError",
    "TddsyncError",
    "incidence_matrix",
    "kalman_two_ap",
    "run_experiment",
    "scalar_riccati_fixed_point",
    "schedule",
    "sigma_nu_sq_from_spectrum_level",
    "solve_phases",
]
