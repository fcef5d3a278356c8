"""Streaming anomaly detection for web access logs with evidence fusion.

The pipeline: parse combined-format lines, group them into per-client
sessions, score request- and session-level features against learned
normal/intrusive profiles, fuse the per-feature verdicts through a
combination graph, and use disagreements between graph views to drive
online model adaptation under concept drift.
"""

from .config import ConfigError, RunConfig, from_dict, load_config
from .diagnosers import (
    Acda,
    AdaptationDisabled,
    DistModel,
    EmptyTrainingSet,
    GaussianModel,
    Model,
    SnapshotError,
    UntrainedModel,
    load_snapshot,
    snapshot,
    snapshot_digest,
    train,
)
from .engine import DetectionEngine, EngineOutput, train_agents
from .evidence import (
    Decision,
    Diagnosis,
    INTRUSIVE,
    NORMAL,
    TotalConflict,
    VACUOUS,
    combine,
    combine_all,
    decide,
)
from .eval_harness import (
    AttackTemplate,
    BatchMetrics,
    EmptyPool,
    InjectionPlan,
    TrafficProfile,
    batch_metrics,
    classify,
    generate_synthetic_clean,
    inject,
    load_attack_pool,
    run_drift_experiment,
    run_experiment,
)
from .features import (
    REQUEST_CHAR,
    REQUEST_TOKEN,
    SESSION_CHAR,
    SESSION_ERROR_RATIO,
    char_distribution,
    error_ratio,
    extract_feature,
    tokenize,
)
from .fusion_graph import (
    DiagnosisTrace,
    FusionGraph,
    GraphError,
    default_topology,
    diagnose_request,
    evaluate,
)
from .log_ingest import (
    FilterConfig,
    LogRecord,
    MalformedLine,
    Session,
    SessionStore,
    filter_record,
    iter_records,
    parse_line,
    percent_decode,
)
from .meta_diagnosis import (
    IntegrityConstraint,
    MetaDiagnosisResult,
    meta_diagnosis_set,
    meta_step,
    reference_decision,
)

__version__ = "0.1.0"
