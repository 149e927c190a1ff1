"""Exception hierarchy shared across the package."""


class GeopopError(Exception):
    """Base class for all errors raised by geopop."""


class GeoJSONError(GeopopError):
    """Malformed GeoJSON input."""

    def __init__(self, message, offset=None, feature_index=None):
        super().__init__(message)
        self.offset = offset
        self.feature_index = feature_index


class UnsupportedGeometryError(GeoJSONError):
    pass


class GeometryError(GeopopError):
    """Invalid or degenerate polygon."""


class RasterFormatError(GeopopError):
    pass


class TruncationError(RasterFormatError):
    pass


class CoverageError(GeopopError):
    """A polygon does not overlap the raster it is measured against."""


class DimensionError(GeopopError):
    pass


class StateError(GeopopError):
    pass


class NonFiniteGradientError(GeopopError):
    pass


class UndefinedMetricError(GeopopError):
    pass


class LabellingError(GeopopError):
    pass


class CapacityError(GeopopError):
    pass


class ModelFormatError(GeopopError):
    pass
