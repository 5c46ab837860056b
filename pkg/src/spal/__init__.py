"""Stochastic smoothed proximal augmented Lagrangian solvers.

Single-loop first-order methods for ``min f(x) s.t. Ax = b, x in X`` with
smooth nonconvex ``f`` and a projection-friendly polyhedral ``X``: a plain
variant, a dual-safeguarded variant for sampled constraints, and a
recursive-momentum variant, plus the step-size schedules, stationarity
certificates, numerical audits, and benchmark generators around them.

The compiled inner loops use numba when it is importable; set
``SPAL_PURE_NUMPY=1`` before import to force the plain numpy path (both
paths consume identical pre-drawn randomness, so results match).
"""

from .core import SeededRng, kron_identity, operator_norm
from .geometry import PolyhedralSet, project, violation
from .problem import (
    ConstrainedProblem,
    ObjectiveModel,
    QuadraticObjective,
    problem_from_dict,
    problem_to_dict,
    reformulate_inequality,
)
from .oracles import (
    AdditiveNoiseOracle,
    BernoulliEdgeSampler,
    DegenerateSampler,
    ExactOracle,
    FiniteAtomSampler,
    FiniteSumOracle,
    GaussianConstraintSampler,
)
from .solvers import (
    RunResult,
    SolverParams,
    StationarityCertificate,
    choose_My,
    derive_params_alg1,
    derive_params_storm,
    postprocess,
    run_alg1,
    run_alg2,
    run_alg3,
    snapshot_metrics,
    storm_minibatch_size,
)
from .diagnostics import (
    AuditReport,
    attach_potential,
    audit_error_bounds,
    audit_potential_lower_bound,
    audit_storm_recursion,
    hoffman_estimate,
    moreau_grad,
    potential_value,
    stationarity_residual,
)
from .benchmarks import (
    BenchmarkInstance,
    gen_consensus,
    gen_fair_classification,
    gen_network_slicing,
    gen_nonconvex_qp,
    make_instance,
)

__version__ = "0.1.0"

__all__ = [
    "SeededRng", "kron_identity", "operator_norm",
    "PolyhedralSet", "project", "violation",
    "ConstrainedProblem", "ObjectiveModel", "QuadraticObjective",
    "problem_from_dict", "problem_to_dict", "reformulate_inequality",
    "AdditiveNoiseOracle", "BernoulliEdgeSampler", "DegenerateSampler",
    "ExactOracle", "FiniteAtomSampler", "FiniteSumOracle",
    "GaussianConstraintSampler",
    "RunResult", "SolverParams", "StationarityCertificate",
    "choose_My", "derive_params_alg1", "derive_params_storm",
    "postprocess", "run_alg1", "run_alg2", "run_alg3", "snapshot_metrics",
    "storm_minibatch_size",
    "AuditReport", "attach_potential", "audit_error_bounds",
    "audit_potential_lower_bound", "audit_storm_recursion",
    "hoffman_estimate", "moreau_grad", "potential_value",
    "stationarity_residual",
    "BenchmarkInstance", "gen_consensus", "gen_fair_classification",
    "gen_network_slicing", "gen_nonconvex_qp", "make_instance",
    "__version__",
]
