"""Mean-square stability certification for multiagent systems whose
communication links drop packets with spatio-temporally correlated
probabilities.

The package provides graph and Laplacian utilities, the geometry of
mode-probability simplices under per-link loss intervals, exact and
Monte Carlo moment oracles for Markov jump linear systems, LMI stability
tests from desk-scale brute force up to a network-size-independent
certificate, and interval fitting for measured transition matrices.
"""

from .errors import (
    DegenerateInterval,
    DisconnectedGraph,
    InputError,
    MjstabError,
    ModeCapExceeded,
    ParameterOutOfRange,
    SizeCapExceeded,
)
from .geometry import (
    Interval,
    Membership,
    Tpm,
    barycentric_coordinates,
    product_vector,
    simplex_membership,
    tpm_membership,
    vertex_matrix,
    vertex_matrix_determinant,
    vertex_probabilities,
)
from .graphs import (
    Graph,
    LaplacianSpectrum,
    complete_graph,
    cycle_graph,
    enumerate_loss_modes,
    laplacian,
    mode_index,
    path_graph,
    spectrum,
)
from .mjls import (
    AgentDynamics,
    ModeSystem,
    TrajectoryStats,
    assemble_modes,
    exact_moment_sequence,
    moment_spectral_radius,
    monte_carlo,
    project_disagreement,
    sample_tpm_in_hull,
)
from .fitting import (
    FitResult,
    IntervalSearchResult,
    fit_feasible,
    minimal_interval,
    synthesize_correlated_tpm,
)
from .sdp import SdpOutcome, SdpProblem, default_margin, solve_feasibility
from .stability import (
    Certificate,
    CertificateReport,
    MultiplierP,
    UncertainTpmSet,
    consensus_certificate,
    consensus_stability_test,
    decomposed_vertex_test,
    fixed_tpm_test,
    fixed_tpm_test_dual,
    multiplier_validity,
    scalable_stability_test,
    verify_certificate,
    vertex_set_test,
    vertex_tpm_test,
)

__version__ = "0.1.0"

__all__ = [
    "AgentDynamics",
    "Certificate",
    "CertificateReport",
    "DegenerateInterval",
    "DisconnectedGraph",
    "FitResult",
    "Graph",
    "InputError",
    "Interval",
    "IntervalSearchResult",
    "LaplacianSpectrum",
    "Membership",
    "MjstabError",
    "ModeCapExceeded",
    "ModeSystem",
    "MultiplierP",
    "ParameterOutOfRange",
    "SdpOutcome",
    "SdpProblem",
    "SizeCapExceeded",
    "Tpm",
    "TrajectoryStats",
    "UncertainTpmSet",
    "assemble_modes",
    "barycentric_coordinates",
    "complete_graph",
    "consensus_certificate",
    "consensus_stability_test",
    "cycle_graph",
    "decomposed_vertex_test",
    "default_margin",
    "enumerate_loss_modes",
    "exact_moment_sequence",
    "fit_feasible",
    "fixed_tpm_test",
    "fixed_tpm_test_dual",
    "laplacian",
    "minimal_interval",
    "mode_index",
    "moment_spectral_radius",
    "monte_carlo",
    "multiplier_validity",
    "path_graph",
    "product_vector",
    "project_disagreement",
    "sample_tpm_in_hull",
    "scalable_stability_test",
    "simplex_membership",
    "solve_feasibility",
    "spectrum",
    "synthesize_correlated_tpm",
    "tpm_membership",
    "verify_certificate",
    "vertex_matrix",
    "vertex_matrix_determinant",
    "vertex_probabilities",
    "vertex_set_test",
    "vertex_tpm_test",
]
