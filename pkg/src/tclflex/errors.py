"""Exception hierarchy shared by all tclflex modules."""


class TclflexError(Exception):
    """Base class for every error raised by tclflex."""


class InvalidParameterError(TclflexError, ValueError):
    pass


class InvalidSpecError(TclflexError, ValueError):
    pass


class InvalidConfigError(TclflexError, ValueError):
    pass


class InvalidInputError(TclflexError, ValueError):
    pass


class InvalidProductError(TclflexError, KeyError):
    pass


class DegenerateScenarioError(TclflexError):
    """The certified-feasible end of a bisection interval failed its batch."""


class ParseError(TclflexError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(TclflexError, LookupError):
    pass
