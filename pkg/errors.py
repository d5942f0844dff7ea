"""
Exception hierarchy shared by the lattice, algebra, statistics and experiment modules
"""
from typing import Any, Dict, Optional


class RGLatticeError(Exception):
    """Base class for all rg-lattice errors"""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = {k: v for k, v in details.items() if v is not None}

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable error report"""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class DomainError(RGLatticeError, ValueError):
    """Input outside the domain of an operation"""

    exit_code = 2


class ConfigError(DomainError):
    """Invalid or unresolvable experiment configuration"""


class UnknownExperimentError(ConfigError):
    """Requested experiment is not registered"""


class NumericFault(RGLatticeError, ArithmeticError):
    """Non-finite value produced during integration"""

    exit_code = 3

    def __init__(self, message: str, tick: Optional[int] = None, sample: Optional[int] = None, **details: Any):
        super().__init__(message, tick=tick, sample=sample, **details)
        self.tick = tick
        self.sample = sample

    def with_sample(self, sample: int) -> "NumericFault":
        """Copy of this fault carrying the sample index that triggered it"""
        return NumericFault(self.message, tick=self.tick, sample=sample)


class DegenerateProbeError(RGLatticeError):
    """Probe component too small for a ratio estimate"""


class GridMismatchError(RGLatticeError, ValueError):
    """Histograms defined on different bin grids"""


class EmptySampleError(RGLatticeError, ValueError):
    """Statistic requested from an empty sample"""


class InsufficientScalesError(RGLatticeError, ValueError):
    """Too few scales for a power-law fit"""


class OutputExistsError(RGLatticeError, FileExistsError):
    """Refusal to write into a non-empty output directory"""

    exit_code = 4
