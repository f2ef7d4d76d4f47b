"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received arguments violating its preconditions."""


class InvalidBandError(InvalidInputError):
    """A frequency band is malformed or lies outside the spectrum."""


class ScenarioError(InvalidInputError):
    """A scenario configuration violates one of its invariants."""
