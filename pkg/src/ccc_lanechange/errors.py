"""Exception hierarchy shared by all modules."""


class CccError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CccError, ValueError):
    """An argument lies outside the domain of a formula."""


class BoundViolation(CccError):
    """A state left its admissible box after an integration step."""

    def __init__(self, component: str, value: float, lower: float, upper: float):
        self.component = component
        self.value = value
        self.lower = lower
        self.upper = upper
        super().__init__(f"{component}={value:.6g} outside [{lower:.6g}, {upper:.6g}]")


class ConfigError(CccError, ValueError):
    """Invalid controller or simulation configuration."""


class ScenarioError(CccError, ValueError):
    """Scenario failed validation. ``path`` addresses the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InfeasibleError(CccError):
    """An optimisation problem has no feasible point."""

    def __init__(self, message: str = "infeasible", vehicle: str | None = None):
        self.vehicle = vehicle
        if vehicle is not None:
            message = f"vehicle {vehicle}: {message}"
        super().__init__(message)


class AllPairsInfeasibleError(InfeasibleError):
    """No candidate merge pair admits a feasible triplet."""


class NoConvergenceError(CccError):
    """The QP solver hit its iteration cap before reaching optimality."""
