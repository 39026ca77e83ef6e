# svl/exceptions.py
"""
Engine error hierarchy.

Every error carries a short machine-readable ``kind``; commands print
``kind: message`` on a single line and map config errors to exit code 2.
"""


class SvlError(Exception):
    kind = "svl_error"


class ShapeError(SvlError):
    kind = "shape_mismatch"


class DimensionMismatch(ShapeError):
    kind = "dim_mismatch"


class DegenerateInputError(SvlError):
    kind = "degenerate_input"


class NonFiniteError(SvlError):
    kind = "non_finite"


class SpikeRangeError(SvlError):
    kind = "spike_range"


class FormatError(SvlError):
    kind = "format_error"


class DataError(SvlError):
    kind = "data_error"


class NotFoundError(DataError):
    kind = "not_found"


class ConfigError(SvlError):
    kind = "config_error"


class TrainingError(SvlError):
    kind = "training_error"
