"""stratforge: invent, evaluate, and combine command-line solver strategies.

The pipeline: model a solver's option space (space), evaluate strategy
portfolios over benchmarks under wall-clock limits (runner, evaluation),
specialize the most useful strategies on the problems they win (tuner,
invention), and assemble greedy-cover portfolios across variants and
timeouts (report).
"""

from .space import (
    Dependency,
    ParamSpec,
    SpaceError,
    Strategy,
    StrategySpace,
    load_space,
    load_strategies,
    save_strategies,
    space_to_doc,
)
from .runner import (
    ERROR,
    SOLVED,
    TIMEOUT,
    UNSOLVED,
    EvalOutcome,
    ExternalBackend,
    ProblemRef,
    RunnerError,
    SolverConfig,
    Task,
    append_outcomes,
    outcome_cache,
    read_outcomes,
    run_batch,
    run_jobs,
    run_task,
)
from .landscape import (
    Landscape,
    LandscapeError,
    SyntheticBackend,
    load_landscape,
    run_synthetic,
)
from .evaluation import (
    EvalMatrix,
    MatrixError,
    MergeError,
    best_partition,
    evaluate_portfolio,
    load_matrix,
    merge,
    save_matrix,
)
from .tuner import Objective, Tuner, TunerConfig, TunerError, local_search, score, tune
from .invention import (
    CampaignConfig,
    CampaignError,
    CampaignState,
    CheckpointError,
    Counters,
    PortfolioEntry,
    Provenance,
    checkpoint,
    fresh_state,
    invent,
    most_complementary,
    resume,
    select_initial,
    select_target,
)
from .report import (
    CoverItem,
    CoverStep,
    ReportError,
    escalate,
    greedy_cover,
    items_from_view,
    option_frequency,
    progress_to_csv,
    render_report,
)
from .benchmark import Benchmark, IngestError, VariantSpec, ingest, load_manifest
from .cli import dispatch, main

__version__ = "0.1.0"
