"""Exception hierarchy shared by every module.

Each class carries the CLI exit code used for its failure class.
"""


class StoryPlanError(Exception):
    exit_code = 1


class ExpressionError(StoryPlanError):
    """Malformed mutator/regex expression or document."""

    exit_code = 2

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ValidationError(StoryPlanError):
    exit_code = 3

    def __init__(self, report):
        if isinstance(report, str):
            report = [report]
        self.report = list(report)
        super().__init__("; ".join(self.report))


class AlphabetError(ValidationError):
    """Symbol outside an automaton's alphabet, or mismatched alphabets."""


class UnachievableError(StoryPlanError):
    """The story cannot be completed with probability one."""

    exit_code = 4

    def __init__(self, message, states=()):
        super().__init__(message)
        self.states = tuple(states)


class ConvergenceError(StoryPlanError):
    exit_code = 5

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ImproperPolicyError(StoryPlanError):
    pass


class ImpossibleObservationError(StoryPlanError):
    pass


class BeliefInvariantError(StoryPlanError):
    """A belief spread over more than one automaton state."""
