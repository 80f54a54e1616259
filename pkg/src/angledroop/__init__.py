"""Angular droop control of networked DC/AC converters.

Graph utilities, the reduced angle model with its inverse-optimal droop
controller, linearized H2 coherence analysis, a detailed converter network
simulation, and a scenario-driven command line.
"""

from .converter_model import (
    ConverterNetworkParams,
    ConverterNetworkState,
    LoadEvent,
    measured_power,
    modulation_matrix,
    network_rhs,
    nominal_power_reference,
    practical_droop_rhs,
    run_converter,
    settle_nominal_state,
    state_slices,
)
from .errors import (
    AngleDroopError,
    InstabilityDetected,
    NoConvergence,
    NonFiniteState,
    ScenarioError,
    SecurityViolation,
    ZeroEigenvalueBeyondFirst,
)
from .linear_analysis import (
    CoherenceResult,
    LinearizedSystem,
    coherence_angular,
    coherence_frequency,
    empirical_coherence,
    h2_norm_oracle,
    linear_rhs,
    lqr_gain_control,
    lqr_weight_matrix,
    riccati_residual,
)
from .netgraph import (
    NetworkGraph,
    complete_graph,
    incidence_matrix,
    laplacian_eigenvalues,
    path_graph,
    ring_graph,
    security_check,
    weighted_laplacian,
)
from .reduced_model import ReducedSystem, SteadyState
from .scenarios import (
    BUILTINS,
    apply_overrides,
    build_graph,
    load_scenario,
    validate_scenario,
)
from .sim_engine import (
    SettleMetrics,
    Trajectory,
    rk4_step,
    settle_metrics,
    simulate,
    snap_to_grid,
    write_csv,
)

__version__ = "0.1.0"
