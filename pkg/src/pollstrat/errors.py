"""Exception hierarchy shared by all pollstrat modules."""


class PollstratError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PollstratError):
    """Input data violates a documented invariant."""


class RegistryError(ValidationError):
    pass


class MissingFocalOption(ValidationError):
    pass


class ZeroFocalVotes(ValidationError):
    pass


class RankDeficient(PollstratError):
    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = tuple(dependent_columns)


class InsufficientObservations(PollstratError):
    pass


class ZeroVariance(PollstratError):
    pass


class TooFewPairs(PollstratError):
    pass


class LengthMismatch(ValidationError):
    pass


class MissingCell(ValidationError):
    pass


class NoPollsAfterFilter(PollstratError):
    pass


class AllMissingDimension(PollstratError):
    pass


class MissingMarginal(PollstratError):
    pass


class MissingConditional(PollstratError):
    pass


class OutOfRange(ValidationError):
    pass


class UnknownState(ValidationError):
    pass


class DistributionInvalid(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class Unreadable(PollstratError):
    pass


class VersionMismatch(ValidationError):
    pass


class BootstrapExhausted(PollstratError):
    """Too many bootstrap redraws were needed to obtain valid replicates."""
