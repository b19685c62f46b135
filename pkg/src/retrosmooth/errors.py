"""Exception types raised across the package."""


class RetrosmoothError(Exception):
    """Base class for all library errors."""


class InvalidMatrix(RetrosmoothError):
    """Matrix violates a structural requirement (shape, finiteness, Hermiticity, ...)."""


class NotPSD(RetrosmoothError):
    """Matrix has an eigenvalue too negative to be treated as round-off."""


class InvalidFactorization(RetrosmoothError):
    """Declared tensor factorization is inconsistent with the matrix dimension."""


class InvalidDistribution(RetrosmoothError):
    """Probability vector has negative entries or does not sum to one."""


class UnknownOutcome(RetrosmoothError):
    """Measurement record contains a label outside the model's alphabet."""


class ZeroProbabilityRecord(RetrosmoothError):
    """Conditioning on a record the model assigns zero probability."""


class StepTooCoarse(RetrosmoothError):
    """Time step too large for the first-order Kraus discretization."""


class EnumerationTooLarge(RetrosmoothError):
    """Exhaustive record enumeration would exceed the configured cap."""


class EvidenceOutsideSupport(RetrosmoothError):
    """Evidence operator has weight outside the support of the propagated prior."""


class MissingClassicalRegister(RetrosmoothError):
    """Operation needs a prior carrying a classical record register."""


class InvalidPOVM(RetrosmoothError):
    """Effects do not sum to the identity."""


class InvalidExtension(RetrosmoothError):
    """Extended prior is inconsistent with the declared system marginal."""


class NotClassicalLimit(RetrosmoothError):
    """Scenario is not expressible as a classical hidden-Markov model."""


class ScenarioError(RetrosmoothError):
    """Scenario configuration is malformed or internally inconsistent."""
