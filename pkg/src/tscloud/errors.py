"""Exception types shared across the package."""


class NoRuleFires(ValueError):
    """Every firing strength is zero, so normalized weights are undefined."""


class DivergedRun(RuntimeError):
    """Closed-loop output exceeded the overflow bound.

    ``trace`` holds the rows simulated before the guard tripped.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class GradientProbeFailed(RuntimeError):
    def __init__(self, index, value):
        super().__init__(f"objective not finite at probe of coordinate {index} (got {value})")
        self.index = index
        self.value = value


class ZeroGradient(ArithmeticError):
    """Previous gradient is exactly zero; the caller has already converged."""


class NoStabilizingSolution(ArithmeticError):
    pass


class SingularCoupling(ArithmeticError):
    """``I - P Q`` is numerically singular."""
