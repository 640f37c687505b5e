"""Exception hierarchy shared by every module."""


class LabError(Exception):
    """Base class for all errors raised by smallball_lab."""


class InputError(LabError, ValueError):
    """Malformed input: non-finite entries, dimension mismatch, bad files."""


class ParameterError(LabError, ValueError):
    """A scalar parameter is outside its admissible range."""


class DomainError(LabError, ValueError):
    """The operation is undefined for this object (e.g. the zero operator)."""


class PreconditionError(LabError, ValueError):
    """A mathematical precondition was checked and found violated."""

    def __init__(self, message, measured=None):
        super().__init__(message)
        self.measured = measured


class ConfigError(LabError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
