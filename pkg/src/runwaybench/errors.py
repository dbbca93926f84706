"""Exception hierarchy shared by all runwaybench modules."""


class RunwayBenchError(Exception):
    pass


class GeometryError(RunwayBenchError, ValueError):
    """Degenerate geometry: zero-length runway, undefined angle, gimbal lock."""


class ProjectionError(RunwayBenchError, ValueError):
    """Singular projection or a pixel ray that never reaches the ground."""


class ValidationError(RunwayBenchError, ValueError):
    """Input document or value violates a documented invariant."""


class MetricError(RunwayBenchError, ValueError):
    """Metric undefined on the given input (e.g. no ground truth)."""
