from .build_dataset import build_dataset
from .exceptions import BackendError, ParseError
from .ingest_corpus import ingest_corpus
from .run_config import RunConfig, resolve_run_config
from .run_simulation import compose_from_run_log, simulate_hypotheses
from .score_hypotheses import report_scores, score_hypotheses

__all__ = [
    "ingest_corpus",
    "build_dataset",
    "simulate_hypotheses",
    "compose_from_run_log",
    "score_hypotheses",
    "report_scores",
    "RunConfig",
    "resolve_run_config",
    "ParseError",
    "BackendError"
]
