"""Exception hierarchy.

The CLI maps the three families below onto its exit codes: configuration
problems exit 2, backend problems exit 3, data problems exit 4.
"""


class CBUError(Exception):
    pass


# -- configuration (exit 2) -------------------------------------------------
class ConfigError(CBUError):
    pass


class RenderError(ConfigError):
    pass


# -- backend (exit 3) -------------------------------------------------------
class BackendError(CBUError):
    def __init__(self, message, attempts=1):
        super().__init__(message)
        self.attempts = attempts


class BackendTimeout(BackendError):
    pass


class ProtocolError(BackendError):
    def __init__(self, message, status, attempts=1):
        super().__init__(message, attempts)
        self.status = status


# -- data (exit 4) ----------------------------------------------------------
class DataError(CBUError):
    pass


class StructuralError(DataError):
    pass


class ParseError(DataError):
    pass


class ScoreRangeError(ParseError):
    pass


class IntegrityError(DataError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class PipelineError(DataError):
    pass


class ArgumentError(DataError, ValueError):
    pass


class ConvergenceError(DataError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
