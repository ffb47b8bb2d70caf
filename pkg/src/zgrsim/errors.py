"""Exception hierarchy shared by every zgrsim module."""


class ZGRError(Exception):
    """Base class for all errors raised by zgrsim."""


class ConfigError(ZGRError, ValueError):
    """Invalid configuration value or inconsistent combination of values."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ShapeError(ZGRError, ValueError):
    """Array dimensions do not match what the operation expects."""


class NumericError(ZGRError, ArithmeticError):
    """A computation produced a non-finite value."""


class EmptyRequestError(ZGRError, ValueError):
    """A zero-length draw was requested."""


class GuidanceUnavailable(ZGRError):
    """The gradient subspace is empty, so no guided direction can be formed."""


class DegenerateStatsError(ZGRError, ValueError):
    """Estimator statistics make a closed-form quantity undefined."""


class UnboundedSpeedup(ZGRError):
    """Speed-up is infinite because the BP surrogate is exact (zero bias and variance)."""


class DecodeError(ZGRError, ValueError):
    """A quantized block or wire payload is corrupt."""


class StragglerError(ZGRError):
    """A client report expected by the edge aggregator is missing."""

    def __init__(self, client_id, round_index, probe_index=None):
        self.client_id = client_id
        self.round = round_index
        self.probe_index = probe_index
        detail = f" probe {probe_index}" if probe_index is not None else ""
        super().__init__(f"missing loss report from client {client_id}{detail} in round {round_index}")
