"""Exception hierarchy shared across the package."""


class BcflError(Exception):
    """Base class for all package errors."""


# ring / sampling
class RingMismatch(BcflError):
    pass


class DimensionError(BcflError, ValueError):
    pass


class InvalidSamplerSpec(BcflError, ValueError):
    pass


# secure aggregation
class ParamError(BcflError, ValueError):
    pass


class InvalidGradient(BcflError, ValueError):
    pass


class NoiseOverflow(BcflError):
    pass


class PartySetMismatch(BcflError):
    pass


class SingularMask(BcflError):
    pass


class FormatError(BcflError, ValueError):
    """Malformed or foreign serialized blob."""


# ledger
class DegenerateWeight(BcflError, ZeroDivisionError):
    pass


class NoSuccessors(BcflError):
    pass


class WalkTimeout(BcflError):
    pass


class OrphanParent(BcflError):
    pass


class ValidationFailed(BcflError):
    pass


class DuplicateTransaction(BcflError):
    pass


# federated math / local training
class NoUpdates(BcflError):
    pass


class DegenerateWeights(BcflError, ZeroDivisionError):
    pass


class EmptyDataset(BcflError, ValueError):
    pass


class DivergenceError(BcflError, FloatingPointError):
    pass


class SpecError(BcflError, ValueError):
    pass


# orchestration
class ConfigError(BcflError, ValueError):
    """Config schema violation; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class RoundError(BcflError):
    """Wraps a protocol failure with the episode/round where it happened."""

    def __init__(self, episode: int, round_: int, cause: Exception):
        super().__init__(f"episode {episode} round {round_}: {type(cause).__name__}: {cause}")
        self.episode = episode
        self.round = round_
        self.cause = cause
