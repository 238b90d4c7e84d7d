"""Exception types shared across the toolkit."""


class VistrackError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(VistrackError, ValueError):
    """Mask or feature dimensions are invalid or inconsistent."""


class MalformedRleError(VistrackError, ValueError):
    """Run-length counts violate the RLE invariants."""


class SchemaError(VistrackError, ValueError):
    """A file failed validation. Carries the offending path and field."""

    def __init__(self, message, path=None, field=None):
        self.path = path
        self.field = field
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


class ReferentialError(SchemaError):
    """A record references an undeclared id (category, video)."""


class EvaluationError(VistrackError, ValueError):
    """Evaluation inputs are inconsistent (unknown video/category, ...)."""


class ConfigError(VistrackError, ValueError):
    """A configuration value is out of range or unsatisfiable."""
