"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array extents are inconsistent with an operator's contract."""


class ParameterError(ValueError):
    """A scalar configuration value is out of range or missing."""


class GeometryError(ValueError):
    """A polygon is degenerate for the requested computation."""


class FormatError(ValueError):
    """A serialized file does not match its declared format."""
