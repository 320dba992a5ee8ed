"""Exception types shared across the package."""


class GraphError(ValueError):
    """Invalid graph construction (cycles, dangling edges, bad target)."""


class QueryError(ValueError):
    """Invalid separation or stability query (unknown nodes, overlapping sets)."""


class SpecError(ValueError):
    """Invalid surgery or predictor specification."""


class CapacityError(RuntimeError):
    """Exhaustive enumeration would exceed the configured subset budget."""


class UnsupportedError(NotImplementedError):
    """A query or construction the framework deliberately refuses to guess at."""


class NoStableSolutionError(RuntimeError):
    """No stable distribution exists (an unstable edge points at the target)."""


class ModelError(ValueError):
    """Structural model violates its invariants (support mismatch, non-PSD noise)."""


class FitError(RuntimeError):
    """Weights could not be computed even after ridge regularisation."""


class ParseError(ValueError):
    """Malformed input file (JSON or CSV)."""
