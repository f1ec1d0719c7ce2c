"""Exception hierarchy shared across the package."""


class DepVulnError(Exception):
    pass


class MalformedVersion(DepVulnError, ValueError):
    pass


class InvalidConstraint(DepVulnError, ValueError):
    pass


class UnsupportedKind(DepVulnError, TypeError):
    pass


class MalformedDocument(DepVulnError, ValueError):
    pass


class UnknownLibrary(DepVulnError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown library"


class InvalidRange(DepVulnError, ValueError):
    pass


class Unresolvable(DepVulnError):
    pass


class UnresolvableDependency(Unresolvable):
    """A dependency link whose constraint cannot be satisfied."""

    def __init__(self, src: str, library: str, constraint: str, reason: str = "") -> None:
        self.src = src
        self.library = library
        self.constraint = constraint
        self.reason = reason
        msg = f"{src} -> {library}@{constraint!r} is unresolvable"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class CycleBudgetExceeded(DepVulnError):
    pass


class BudgetInvalid(DepVulnError, ValueError):
    pass


class MismatchedRoots(DepVulnError, ValueError):
    pass
