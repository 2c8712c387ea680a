"""Exception types shared across the package."""


class ExposureLabError(Exception):
    """Base class for all domain errors raised by this package."""


class EnumerationInfeasible(ExposureLabError):
    """An exact operation would require enumerating more points than the cap allows."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"enumeration of {size} points exceeds cap {cap}")


class UnrealizableExposure(ExposureLabError):
    """No assignment at all realizes the requested exposure for a unit."""

    def __init__(self, unit, label):
        self.unit = unit
        self.label = label
        super().__init__(f"unit {unit} can never realize exposure {label}")


class NotCorrectlySpecified(ExposureLabError):
    """An operation requiring constant outcomes within exposure classes found violations."""

    def __init__(self, units):
        self.units = tuple(units)
        super().__init__(f"outcomes vary within exposure classes for units {list(self.units)}")


class UndefinedOnSupport(ExposureLabError):
    """An estimator is undefined on assignments carrying positive probability."""

    def __init__(self, mass):
        self.mass = mass
        super().__init__(f"estimator undefined on support mass {mass}")


class EmptyExposureCell(ExposureLabError):
    """No unit in the data realized the requested exposure."""

    def __init__(self, label):
        self.label = label
        super().__init__(f"no unit realized exposure {label}")


class PositivityViolated(ExposureLabError):
    """A contrasted exposure has zero probability for some included unit."""

    def __init__(self, units=(), labels=()):
        self.units = tuple(units)
        self.labels = tuple(labels)
        super().__init__(
            f"zero exposure probability for units {list(self.units)} at labels {list(self.labels)}"
        )


class MissingJointProbability(ExposureLabError):
    """A required joint exposure probability is not available."""

    def __init__(self, i, j, d1, d2):
        self.pair = (i, j)
        self.labels = (d1, d2)
        super().__init__(f"missing joint probability for units ({i},{j}) at labels ({d1},{d2})")


class MissingGraph(ExposureLabError):
    """An exposure map kind requires an interference graph that was not supplied."""


class MissingCovariates(ExposureLabError):
    """A predictor or estimator requires covariates that the scenario does not carry."""


class InvalidParams(ExposureLabError):
    """Constructor parameters are out of range or inconsistent."""


class NoGroundTruth(ExposureLabError):
    """No exact or closed-form target effect is available for the scenario."""
