"""Multi-modal multi-objective optimization by hill-valley clustering.

A niching evolutionary optimizer that approximates *all* equivalent
Pareto sets of a multi-objective problem, together with the benchmark
problems, IGD/IGDX/mode-ratio metrics, and a reproducible experiment
harness.
"""

from .archive import (
    ElitistArchive,
    Subarchive,
    construct_local_archives,
    discretize_if_needed,
    greedy_scattered_subset_selection,
    postprocess_approximation_set,
)
from .core import (
    BudgetExhausted,
    EvaluationCounter,
    Solution,
    dominates,
    fast_nondominated_sort,
    make_rng,
    nondominated_filter,
)
from .gaussian_core import ClusterModelState, CoreConfig, SubsetModel, core_opt_generation
from .hillvalley import (
    Cluster,
    ClusteringStats,
    HVTestCache,
    edge_length,
    hill_valley_test,
    multi_objective_clustering,
    single_objective_clustering,
    test_point_count,
)
from .metrics import MetricReport, achievable_limits, compute_report, igd, igdx, mode_ratio
from .optimizer import (
    RunConfig,
    RunResult,
    base_population_size,
    distribute_budgets,
    fixed_population_run,
    multi_start_run,
    protocol_population_size,
    run,
)
from .problems import (
    PROBLEM_NAMES,
    Evaluator,
    Problem,
    ReferenceSet,
    cached_reference_set,
    get_problem,
    sample_uniform,
)

__version__ = "0.1.0"
