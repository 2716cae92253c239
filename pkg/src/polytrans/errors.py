"""Exception hierarchy shared by every subsystem."""


class PolytransError(Exception):
    pass


# tensor core
class ShapeMismatch(PolytransError, ValueError):
    pass


class NonFiniteInput(PolytransError, ValueError):
    pass


class DomainError(PolytransError, ValueError):
    pass


class NumericalOverflow(PolytransError, ArithmeticError):
    pass


class NotScalar(PolytransError, ValueError):
    pass


class TapeConsumed(PolytransError, RuntimeError):
    pass


class NonDeterministicFunction(PolytransError, RuntimeError):
    pass


# information lab
class UnknownVariable(PolytransError, KeyError):
    pass


class OverlappingSets(PolytransError, ValueError):
    pass


class InvalidModel(PolytransError, ValueError):
    pass


class TooLargeToEnumerate(PolytransError, ValueError):
    pass


# gaussians / model
class DimMismatch(PolytransError, ValueError):
    pass


class ClampViolation(PolytransError, ValueError):
    """Raised in strict mode when a log-variance falls outside the clamp range."""


class MalformedSequence(PolytransError, ValueError):
    pass


class TooFewLanguages(PolytransError, ValueError):
    pass


class CheckpointFormatError(PolytransError, ValueError):
    pass


# corpus
class ConfigError(PolytransError, ValueError):
    pass


class UnknownLanguage(PolytransError, KeyError):
    pass


class UnknownToken(PolytransError, KeyError):
    pass


class ParseError(PolytransError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateId(PolytransError, ValueError):
    pass


# training
class MissingInstance(PolytransError, ValueError):
    pass


class AllPresent(PolytransError, ValueError):
    pass


class EmptyPool(PolytransError, ValueError):
    pass


# evaluation
class LengthMismatch(PolytransError, ValueError):
    pass


class EmptyCorpus(PolytransError, ValueError):
    pass


class NoPairs(PolytransError, ValueError):
    pass
