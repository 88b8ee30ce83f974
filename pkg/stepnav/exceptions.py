class StepnavError(Exception):
    """Base for all stepnav errors; catch this to handle any stepnav failure."""


class ConfigError(StepnavError):
    """Raised for unknown config keys or values that do not parse."""


class ParseError(StepnavError):
    """Raised when an artifact file cannot be parsed (missing sections, malformed lines)."""


class GenerationError(StepnavError):
    """Raised when an environment cannot be generated (rejection budget exhausted)."""


class DynamicsError(StepnavError):
    """Raised when the LIP step map receives non-finite inputs."""


class PendulumBlowUpError(DynamicsError):
    """Raised when a step leaves the pendulum validity envelope. Carries the offending state."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class NoGaitError(StepnavError):
    """Raised when the gait QP is infeasible or runs out of iterations. Carries diagnostics."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class PlanningError(StepnavError):
    """Raised when the RRT expert finds no path within its sample budget."""


class TrainingError(StepnavError):
    """Raised when training hits non-finite parameters or losses."""


class ValidationError(StepnavError):
    """Raised when validation infrastructure fails, not for data errors themselves."""
