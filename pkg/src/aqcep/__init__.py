"""Rule-based complex event processing for air-quality sensor streams."""

from aqcep.pollutants import PollutantKind

__version__ = "0.1.0"

__all__ = ["PollutantKind", "__version__"]
