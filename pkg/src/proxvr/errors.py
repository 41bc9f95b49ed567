"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (dimension mismatch, bad index, ...)."""


class ParseError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class RateDomainError(ValueError):
    """A convergence-rate formula was evaluated outside its domain."""


class ConvergenceFailure(RuntimeError):
    """An iterative routine exhausted its budget; carries the best certificate seen."""

    def __init__(self, message, best_certificate=None):
        super().__init__(message)
        self.best_certificate = best_certificate
