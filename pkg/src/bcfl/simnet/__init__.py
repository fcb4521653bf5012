from .config import (
    CostModel,
    CryptoSection,
    DagSection,
    DataSection,
    ExperimentConfig,
    FedSection,
    QuantSection,
    SimSection,
)
from .logs import (
    METRICS_HEADER,
    EventLog,
    Finding,
    Message,
    MessageLog,
    MetricsWriter,
    RoundMetrics,
    audit_messages,
    emit_metrics,
    read_metrics,
)
from .runner import RoundClock, RunResult, build_data, plaintext_control, run_experiment, stream

__all__ = [name for name in dir() if not name.startswith("_")]
from .sweep import SUMMARY_HEADER, SweepPoint, SweepSpec, run_sweep, write_summary  # noqa: E402

__all__ = [name for name in dir() if not name.startswith("_")]
