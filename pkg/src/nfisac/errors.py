"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a config object carries values the model cannot accept."""


class GeometryError(ValueError):
    """Raised for degenerate placements (coincident points, r = 0, ...)."""


class SchemaError(ValueError):
    """Raised when a dataset or solution file violates the record schema."""
