"""Test-time scaled Text-to-SQL engine and BIRD-style evaluation harness."""

from .catalog import (
    CatalogSnapshot,
    CellRecord,
    SchemaDoc,
    extract_text_cells,
    introspect,
    render_ddl,
    render_light,
)
from .dataset import Task, ingest_dataset
from .executor import (
    ExecutionOutcome,
    Fingerprint,
    ResultTable,
    canonicalize,
    compare_ex,
    execute,
    fingerprint,
    time_query,
)
from .gateway import (
    Backend,
    ChatRequest,
    ChatResponse,
    EndpointSpec,
    Gateway,
    HttpBackend,
    MockBackend,
    Profile,
    TraceSink,
    parse_sql,
)
from .generation import (
    CandidatePool,
    CandidateSql,
    GenerationTask,
    IclVariant,
    assemble_pool,
    default_icl_variants,
    generate_icl,
    generate_reasoning,
)
from .metrics import (
    EvalItem,
    MetricsReport,
    evaluate_items,
    execution_accuracy,
    pass_at_k,
    r_ves,
    soft_f1,
)
from .pipeline import (
    RunConfig,
    build_indexes,
    eval_predictions,
    run_ablation,
    run_benchmark,
    run_task,
)
from .prompts import render_prompt
from .refinement import fix_syntax, refine_pool, revise_group_representatives
from .retrieval import (
    TrigramEmbedder,
    UnderstandingContext,
    VectorIndex,
    build_cell_index,
    build_example_index,
    build_understanding,
    extract_keywords,
    extract_skeleton,
    retrieve_cells,
    retrieve_examples,
)
from .selection import (
    CandidateGroup,
    TournamentOutcome,
    group_candidates,
    majority_vote,
    pairwise_judge,
    run_tournament,
)
from .signals import (
    GrpoBatch,
    SelectionSample,
    build_selection_samples,
    grpo_objective,
    grpo_surrogate,
    reward_generation,
    reward_selection,
)

__version__ = "0.1.0"
