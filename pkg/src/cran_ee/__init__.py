"""Energy-efficient joint precoding, multivariate fronthaul compression and
RU-user selection for cloud-RAN downlinks."""

from cran_ee.model import (
    ChannelRealization,
    Metrics,
    NetworkConfig,
    SolutionCandidate,
    check_feasibility,
    energy_efficiency,
    fronthaul_usage,
    power_breakdown,
    user_rate,
)

__all__ = [
    "ChannelRealization",
    "Metrics",
    "NetworkConfig",
    "SolutionCandidate",
    "check_feasibility",
    "energy_efficiency",
    "fronthaul_usage",
    "power_breakdown",
    "user_rate",
]

__version__ = "0.1.0"
