"""Exception hierarchy for the simulator"""

from typing import List, Tuple


class FedOCError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(FedOCError, ValueError):
    """Invalid experiment configuration.

    Collects every problem found in one pass so the user can fix them together.

    Args:
        problems: List of (dotted field path, message) pairs
    """

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = list(problems)
        lines = [f"{path}: {message}" for path, message in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class TopologyError(FedOCError, ValueError):
    """Infeasible chain topology request."""


class DatasetError(FedOCError, ValueError):
    """Dataset violates its invariants."""


class DatasetFormatError(DatasetError):
    """Malformed IDX file (bad magic, truncation, count mismatch)."""


class PartitionError(FedOCError, ValueError):
    """Non-IID partition cannot be satisfied with the available samples."""


class ModelShapeError(FedOCError, ValueError):
    """Parameter vector or batch does not match the architecture descriptor."""


class AnalysisError(FedOCError, ValueError):
    """Bound evaluation requested on an unsupported run."""


class AggregationError(FedOCError, AssertionError):
    """Aggregation coefficients are negative or do not sum to one."""
