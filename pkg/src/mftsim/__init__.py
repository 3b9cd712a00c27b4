"""Multi-time Gaussian wave packets, beable flows, and ensemble statistics.

The library evolves superpositions of Heller Gaussian product packets over a
per-particle time vector T = (t_1, ..., t_n), integrates the guidance-law
flow of configurations along diagonal time charts, and provides the
finite-difference and statistical checks (equivariance, collapse
frequencies, cross-time sensitivity, EPR timing scans) used by the bundled
scenarios and the command line.
"""

from .errors import (NodeError, NodeStall, ParseError, Unclassifiable,
                     ValidationError)
from .packets import (GaussianPacket, Potential, PotentialSpec, evolve_packet,
                      packet_overlap)
from .wavefunction import (NODE_EPS, Amplitude, MftState, ProductState,
                           density, effective_coefficients, evaluate_psi,
                           gram_matrix, phase_gradient, quantum_potential,
                           state_fingerprint)
from .dynamics import (DEFAULT_STEP, BeableSheet, DiagonalChart, beable_at,
                       flow_ensemble, integrate_sheet, newton_report,
                       newton_residual, velocity_field)
from .residuals import (ResidualSummary, hj_continuity_residual,
                        probe_points, random_probe_points, residual_report,
                        schrodinger_residual)
from .ensemble import (CollapseScenario, EnsembleReport, SamplerConfig,
                       branch_weights, classify_batch, collapse_statistics,
                       equivariance_test, exact_marginal_cdf, sample_initial)
from .locality import (EprScanReport, SensitivityReport, Trajectory,
                       cross_time_sensitivity, epr_timing_scan,
                       sensitivity_scan, single_time_oracle)
from .scenario import (Scenario, bundled_names, load_bundled, load_scenario,
                       parse_scenario, serialize_scenario)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "Amplitude", "BACKEND", "BeableSheet", "CollapseScenario", "DEFAULT_STEP",
    "DiagonalChart", "EnsembleReport", "EprScanReport", "GaussianPacket",
    "MftState", "NODE_EPS", "NodeError", "NodeStall", "ParseError",
    "Potential", "PotentialSpec", "ProductState", "ResidualSummary",
    "SamplerConfig", "Scenario", "SensitivityReport", "Trajectory",
    "Unclassifiable", "ValidationError", "beable_at", "branch_weights",
    "bundled_names", "classify_batch", "collapse_statistics",
    "cross_time_sensitivity", "density", "effective_coefficients",
    "epr_timing_scan", "equivariance_test", "evaluate_psi", "evolve_packet",
    "exact_marginal_cdf", "flow_ensemble", "gram_matrix",
    "hj_continuity_residual", "integrate_sheet", "load_bundled",
    "load_scenario", "newton_report", "newton_residual", "packet_overlap",
    "parse_scenario", "phase_gradient", "probe_points", "quantum_potential",
    "random_probe_points", "residual_report", "sample_initial",
    "schrodinger_residual", "sensitivity_scan", "serialize_scenario",
    "single_time_oracle", "state_fingerprint", "velocity_field",
]
