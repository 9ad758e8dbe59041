"""Exception types shared across the package."""


class DegenerateSceneError(ValueError):
    """The scene lacks the structure a metric needs (no planes, no normals...)."""


class DegenerateVicinityError(ValueError):
    """A vicinity has too few points for the requested statistic."""


class UndefinedCorrelationError(ValueError):
    """A correlation coefficient is undefined (zero variance or all ties)."""
