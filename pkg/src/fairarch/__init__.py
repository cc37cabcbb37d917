"""Search over small sequential CNNs balancing accuracy, demographic
fairness, and hardware cost, with a language model proposing candidates.

The pieces compose like this: `arch` defines the architecture documents and
their shape rules; `cost` prices an architecture for a device profile;
`fairness` scores per-sample predictions; `prompting` and `designer` turn the
best archived candidate into the next design request; `evaluation` turns a
design into metrics (synthetic, from a predictions file, or via an external
trainer process); `search` runs the loop and persists it; `cli` wraps it all.
"""

from .arch import (
    Activation,
    Architecture,
    Choices,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalPool,
    LayerSpec,
    Norm,
    Pool,
    TensorShape,
    ValidationReport,
    Violation,
    architecture_from_dict,
    architecture_to_dict,
    choices_from_dict,
    choices_to_dict,
    infer_shapes,
    parse_architecture,
    parse_choices,
    serialize_architecture,
    serialize_choices,
    structural_key,
    validate,
)
from .cost import (
    CostReport,
    DeviceProfile,
    LatencyEstimate,
    cost_report,
    cost_report_from_dict,
    cost_report_to_dict,
    count_flops,
    count_parameters,
    estimate_latency,
    estimate_peak_memory,
    parse_profile,
    profile_from_dict,
    profile_to_dict,
)
from .designer import (
    DesignOutcome,
    HttpBackend,
    LlmConfig,
    MockBackend,
    build_request_payload,
    complete,
    design_candidate,
    extract_architecture,
    llm_config_from_dict,
    make_backend,
)
from .errors import (
    ApiError,
    ConfigError,
    CorruptLogError,
    EmptyInput,
    ExhaustedRetries,
    ExtractionError,
    FairarchError,
    MalformedResponse,
    ParseError,
    PromptTooLarge,
    ProtocolError,
    SchemaError,
    SchemaMismatch,
    ShapeError,
    SpawnError,
    TemplateError,
    TrainerFailure,
    TrainerTimeout,
    TransportError,
    UndefinedRate,
)
from .evaluation import (
    DatasetSpec,
    EvaluatorSpec,
    build_train_request,
    default_schema,
    evaluate,
    evaluator_spec_from_dict,
    external_evaluate,
    predictions_evaluate,
    simulated_evaluate,
)
from .fairness import (
    AttributeSpec,
    ConfusionCounts,
    DemographicSchema,
    EvalRecord,
    GroupStat,
    MetricsRecord,
    RateDiffs,
    binary_confusion,
    eodd,
    eopp1,
    eopp2,
    format_metrics_report,
    group_accuracies,
    group_stat_to_dict,
    metrics_from_dict,
    metrics_from_records,
    metrics_to_dict,
    overall_accuracy,
    pairwise_rates,
    parse_predictions_csv,
    parse_schema,
    render_predictions_csv,
    schema_from_dict,
    schema_to_dict,
    unfairness,
)
from .prompting import (
    PromptBundle,
    PromptMeta,
    generate_prompt,
    load_default_arch_template,
    load_default_prompt_template,
    render_environment,
)
from .search import (
    DEFAULT_POLICY,
    Archive,
    ArchiveEntry,
    LoadedRun,
    LogRecord,
    SearchConfig,
    SearchResult,
    append_log,
    get_best_metrics,
    load_run,
    load_search_config,
    log_record_to_dict,
    prompt_hash,
    run_search,
    validate_policy,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
