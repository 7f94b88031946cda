"""Reading-log analytics: sessions, sequence metrics, engagement and trait moderation models."""

from .clustering import ClusterAssignment, ward_cluster, ward_linkage, znorm
from .config import Config
from .encoding import EncodedSequence, collapse_jumps, encode
from .engagement import EngagementConfig, compute_engagement, engagement_score, percentile_rank
from .ingest import IngestError, parse_events, parse_grades, parse_manifest, parse_questionnaire
from .metrics import n_jumps, n_responsive, n_stops, predominance, sequential, student_metrics
from .model import EventKind, RawEvent, Session, StudentProfile, Terminal
from .pipelines import AnalysisError, join_profiles, run_rq1, run_rq2
from .scales import cronbach_alpha, scale_score
from .sessions import sessionize
from .synth import gen_cohort

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "ClusterAssignment",
    "Config",
    "EncodedSequence",
    "EngagementConfig",
    "EventKind",
    "IngestError",
    "RawEvent",
    "Session",
    "StudentProfile",
    "Terminal",
    "collapse_jumps",
    "compute_engagement",
    "cronbach_alpha",
    "encode",
    "engagement_score",
    "gen_cohort",
    "join_profiles",
    "n_jumps",
    "n_responsive",
    "n_stops",
    "parse_events",
    "parse_grades",
    "parse_manifest",
    "parse_questionnaire",
    "percentile_rank",
    "predominance",
    "run_rq1",
    "run_rq2",
    "scale_score",
    "sequential",
    "sessionize",
    "student_metrics",
    "ward_cluster",
    "ward_linkage",
    "znorm",
]
