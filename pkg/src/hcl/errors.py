"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the evaluated formula."""


class InadmissibleProfileError(ValueError):
    """The profile does not define a non-degenerate convex lift on the interval."""


class CubicFormUndefined(ValueError):
    """The cubic form is queried at a corner of a profile that is only C^2 there."""


class IntegrationFault(RuntimeError):
    """A trajectory driven by a feasible control law escaped the feasible set."""
