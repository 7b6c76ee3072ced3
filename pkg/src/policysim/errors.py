"""Exception hierarchy shared by the engines; the CLI maps these to exit codes."""


class ParameterError(ValueError):
    """A model or sampler parameter is outside its valid domain."""


class DataError(ValueError):
    """Input data violates a precondition (domain, length, alignment)."""


class DegenerateDataError(DataError):
    """Input data carries no variation to work with."""


class NumericError(ArithmeticError):
    """An estimation routine failed to produce a usable answer."""
