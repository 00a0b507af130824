"""Exceptions raised by the dynbaxter library."""


class DynBaxterError(Exception):
    """Base class for every library failure."""


class DomainError(DynBaxterError, ValueError):
    """Parameter outside the domain of a special function or model."""


class GroupoidError(DynBaxterError, ValueError):
    """Malformed groupoid, connecting set or connecting system."""


class NotComposable(GroupoidError):
    pass


class IncidenceViolation(GroupoidError):
    """Incidence matrix fails M1 C = C M2, the star condition or row coverage."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"{condition}: {detail}" if detail else condition)


class GradingError(DynBaxterError, ValueError):
    """A block key or shape breaks the groupoid grading."""


class NotInvertible(DynBaxterError):
    """A transfer operator or block has no inverse in some grade."""

    def __init__(self, message: str, grade=None):
        self.grade = grade
        super().__init__(message if grade is None else f"{message} (grade {grade})")


class PoleProximity(DynBaxterError):
    """Spectral parameter too close to a pole of a meromorphic family."""


class UnsupportedDimension(DynBaxterError, ValueError):
    pass


class NoConsistentAssignment(DynBaxterError):
    """No sign assignment brings the cell twist deviation under tolerance."""

    def __init__(self, message: str, table=None):
        self.table = table or []
        super().__init__(message)


class SchemaError(DynBaxterError, ValueError):
    """JSON input failed validation; the message names the offending field."""
