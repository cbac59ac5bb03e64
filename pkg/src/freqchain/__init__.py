"""Digital twin of an optical clock absolute-frequency measurement.

Chain compilation, comb/counter and ion simulation, and the line-center
analysis with an exact uncertainty budget.
"""

from .exactfreq import Frequency, UncertainFrequency, parse_frequency, format_frequency
from .chainspec import parse_chain, compile_equation, evaluate, propagate_uncertainty

__all__ = [
    "Frequency",
    "UncertainFrequency",
    "parse_frequency",
    "format_frequency",
    "parse_chain",
    "compile_equation",
    "evaluate",
    "propagate_uncertainty",
]
__version__ = "0.1.0"
