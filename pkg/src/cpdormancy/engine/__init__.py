from .clocks import ActivityTrack, FixedClock, PoissonClock
from .core import (
    ACTIVE,
    DORMANT,
    Checkpoint,
    ClockBank,
    Configuration,
    Rates,
    RunResult,
    Script,
    SiteState,
    activity_at,
    init,
    run,
    survival_estimate,
    wilson_interval,
)
from .oracle import OracleBatch, oracle_batch, oracle_run
from .script import format_script, parse_script, read_script

__all__ = [
    "ACTIVE", "DORMANT", "ActivityTrack", "Checkpoint", "ClockBank", "Configuration", "FixedClock",
    "OracleBatch", "PoissonClock", "Rates", "RunResult", "Script", "SiteState", "activity_at",
    "format_script", "init", "oracle_batch", "oracle_run", "parse_script", "read_script", "run",
    "survival_estimate", "wilson_interval",
]
