"""Exception hierarchy; each family maps to one CLI exit status."""


class IrsemError(Exception):
    exit_code = 1


class InputError(IrsemError):
    """Malformed or missing input file."""

    exit_code = 2

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class PrepError(IrsemError):
    exit_code = 3


class SpecificationError(IrsemError):
    """Model text or model/data mismatch."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        self.diagnostics = list(diagnostics or [])
        super().__init__(message)


class ModelSyntaxError(SpecificationError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class EstimationError(IrsemError):
    exit_code = 5


class NotNestedError(IrsemError):
    exit_code = 4
