"""Exception hierarchy shared across the package."""


class WaveFieldError(Exception):
    """Base class for all package errors."""


class NonPositiveParameter(WaveFieldError, ValueError):
    pass


class NonFiniteState(WaveFieldError, FloatingPointError):
    pass


class ProtocolOutOfRange(WaveFieldError, ValueError):
    pass


class NoWaveDetected(WaveFieldError):
    pass


class WrongVariant(WaveFieldError, ValueError):
    pass


class DegenerateField(WaveFieldError, ValueError):
    pass


class NoEventDetected(WaveFieldError):
    pass


class ShapeMismatch(WaveFieldError, ValueError):
    pass


class BadKernel(WaveFieldError, ValueError):
    pass


class UnstableStep(WaveFieldError, FloatingPointError):
    pass


class BadHeadCount(WaveFieldError, ValueError):
    pass


class EmptyAlphabet(WaveFieldError, ValueError):
    pass


class SingularSystem(WaveFieldError, ValueError):
    pass


class ParseError(WaveFieldError, ValueError):
    """Malformed input file. Always carries a line number and a field name."""

    def __init__(self, message, line=None, field=None, path=None):
        self.line = line
        self.field = field
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class IoError(WaveFieldError, OSError):
    pass
