"""Range-only 3D relative localization toolkit.

Estimators (trilateration, distance-matrix fitting, maximum likelihood),
GDOP/CRLB performance metrics, and a reproducible Monte-Carlo experiment
harness for agents carrying four ranging sensors.
"""

__version__ = "0.1.0"

from ._kernels import ACTIVE_BACKEND
from .exceptions import (
    AlignmentUnderdeterminedError,
    DegenerateGeometryError,
    EstimationError,
    GimbalLockError,
    InconsistentInputError,
    MeasurementFormatError,
)
from .geometry import (
    EulerAngles,
    Pose6D,
    SensorConfig,
    euler_from_rotation,
    isosceles_tetrahedron,
    regular_tetrahedron,
    rotation_from_euler,
    transform_body_points,
)
from .ranging import (
    NoiseModel,
    add_noise,
    jacobian_agent,
    jacobian_sensor,
    true_ranges_agent,
    true_ranges_sensor,
)
from .metrics import (
    AgentCrlb,
    AgentGdop,
    SphericalGrid,
    SweepResult,
    crlb_agent,
    crlb_sensor,
    gdop_agent,
    gdop_sensor,
    gdop_sweep,
)
from .edm import (
    AgentEstimate,
    EdmCheck,
    GramFactor,
    build_sdm,
    closest_edm,
    edmt_agent_individually,
    edmt_agent_jointly,
    edmt_sensor,
    is_edm,
    procrustes,
    realize_from_edm,
)
from .solvers import (
    EstimateReport,
    SolverOptions,
    frocvx_agent,
    frocvx_sensor,
    gauss_newton,
    mle_agent,
    mle_sensor,
    tt_agent,
    tt_sensor,
)
from .simharness import (
    AGENT_METHODS,
    SENSOR_METHODS,
    BenchReport,
    ConfigStudyResult,
    ExperimentConfig,
    RmseSummary,
    run_agent_experiment,
    run_bench,
    run_config_study,
    run_sensor_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
