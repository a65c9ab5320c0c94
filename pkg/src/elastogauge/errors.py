"""Exception hierarchy shared by every module."""


class ElastoGaugeError(Exception):
    """Base class for all package errors."""


class DimensionError(ElastoGaugeError, ValueError):
    pass


class SymmetryError(ElastoGaugeError, ValueError):
    pass


class PositivityError(ElastoGaugeError, ValueError):
    pass


class MetricError(ElastoGaugeError, ValueError):
    pass


class FieldOrderError(ElastoGaugeError):
    """A derivative was requested beyond the field's declared max order."""


class FieldError(ElastoGaugeError):
    pass


class JacobianError(ElastoGaugeError, ValueError):
    pass


class ConformalityError(ElastoGaugeError, ValueError):
    pass


class GaugeError(ElastoGaugeError, ValueError):
    pass


class DegenerateSlownessError(ElastoGaugeError, ValueError):
    pass


class StabilityError(ElastoGaugeError, RuntimeError):
    pass


class CornerError(ElastoGaugeError, ValueError):
    pass


class ConfigError(ElastoGaugeError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)
