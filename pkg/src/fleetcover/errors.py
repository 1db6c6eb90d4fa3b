"""Exception types shared across the planning stages."""


class FleetcoverError(Exception):
    """Base class for all planner errors."""


class InvalidGeometryError(FleetcoverError):
    """Raised for degenerate or self-intersecting geometry inputs."""


class InfeasibleError(FleetcoverError):
    """A stage cannot satisfy its constraints.

    ``stage`` names the pipeline stage, ``constraint`` the violated rule.
    """

    def __init__(self, message, stage=None, constraint=None):
        super().__init__(message)
        self.stage = stage
        self.constraint = constraint


class MapLoadError(FleetcoverError):
    """Structured input-file error; carries the offending feature index."""

    def __init__(self, message, feature_index=None):
        super().__init__(message)
        self.feature_index = feature_index


class ConfigError(FleetcoverError):
    """Bad or inconsistent configuration values."""
