"""Composite estimation for rotating-panel labor-force surveys, evaluated
exactly over an enumerable sample space."""

from .arrays import (
    ArrayMatrix,
    LabeledArray,
    array_mult,
    flat_index,
    flatten,
    pseudo_inverse,
    unflatten,
)
from .calibration import (
    CalibrationError,
    RegressionCompositeResult,
    calibrate_weights,
    regression_composite,
)
from .design import (
    RotationDesign,
    SampleAssignment,
    assignment,
    cluster,
    cps_month_mapping,
    enumerate_assignments,
)
from .enumeration import Enumeration
from .estimators import (
    AkCoefficients,
    BailarModel,
    MeasurementError,
    WeightSet,
    ak_linear_weights,
    ak_recursive,
    apply_linear,
    base_weights,
    blue,
    blue_bailar,
    design_matrices,
    direct_estimator,
    inject_measurement_error,
    mis_estimator,
)
from .evaluation import (
    EstimatorSpec,
    MomentReport,
    estimate_sigma,
    exact_linear_oracle,
    exact_moments,
    exact_sigma,
    linearized_variance,
    rate_jacobians,
    relative_mse_table,
)
from .optimize import (
    AkObjective,
    OptimizationResult,
    best_alpha,
    census_grid_ak,
    empirical_best,
    optimal_ak,
)
from .population import (
    Population,
    default_rate_targets,
    generate_population,
    population_totals,
    unemployment_rate,
)

__version__ = "0.1.0"
