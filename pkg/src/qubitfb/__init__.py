"""Monte Carlo simulation and protocol search for continuously measured qubit feedback."""
from .bloch import (BlochVector, PolarState, error_probability, excited_population, from_polar,
                    rotate_to_xz, thermal_equilibrium, to_polar, wrap_angle)
from .params import SimParams
from .policy import (TABLE1, ControlPolicy, ProtocolCoefficients, PublishedProtocol, axis_angle,
                     feedback_rotation, measurement_angle, published_coefficients, table_row)
from .sme import (IntegrationError, MeasurementAxis, StepResult, expectation_sigma_alpha, sme_step,
                  simulate_trajectory)

__version__ = "0.1.0"
