"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class OsbmError(Exception):
    """Base class for all errors raised by :mod:`osbm`."""


class ParameterError(OsbmError, ValueError):
    """Invalid model or configuration parameter."""


class NonPositiveParameter(ParameterError):
    def __init__(self, name: str, value: float | None = None):
        self.name = name
        self.value = value
        super().__init__(f"NonPositiveParameter({name}): got {value!r}, must be > 0")


class NonFiniteParameter(ParameterError):
    def __init__(self, name: str, value: float | None = None):
        self.name = name
        self.value = value
        super().__init__(f"NonFiniteParameter({name}): got {value!r}")


class SigmaRatioViolation(ParameterError):
    def __init__(self, sigma_plus: float, sigma_minus: float):
        super().__init__(
            f"SigmaRatioViolation: sigma_plus={sigma_plus!r} must be < sqrt(2)*sigma_minus={sigma_minus!r}*sqrt(2)"
        )


class DriftGapViolation(ParameterError):
    def __init__(self, beta1: float, beta2: float, theta: float):
        super().__init__(
            f"DriftGapViolation: |beta1 - beta2| = {abs(beta1 - beta2)!r} must be < 2*theta = {2 * theta!r}"
        )


class NonPositiveTime(ParameterError):
    def __init__(self, value=None):
        super().__init__(f"NonPositiveTime: time argument must be > 0, got {value!r}")


class NonPositiveHorizon(NonPositiveTime):
    pass


class NegativeLevel(ParameterError):
    def __init__(self, value=None):
        super().__init__(f"NegativeLevel: level must be >= 0, got {value!r}")


class NonPositiveLambda(ParameterError):
    def __init__(self, value=None):
        super().__init__(f"NonPositiveLambda: transform variable must be > 0, got {value!r}")


class QuadratureNonConvergence(OsbmError, ArithmeticError):
    def __init__(self, best_estimate: float, error_estimate: float, message: str = ""):
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate
        super().__init__(
            f"QuadratureNonConvergence(best_estimate={best_estimate!r}, "
            f"error_estimate={error_estimate!r}){': ' + message if message else ''}"
        )


class GridExhausted(OsbmError, RuntimeError):
    """The Brownian grid cannot be extended far enough to cover the horizon."""


class HorizonExceeded(OsbmError, ValueError):
    pass


class EmptySample(OsbmError, ValueError):
    pass


class UnknownSuite(OsbmError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"UnknownSuite: {name!r}")

    def __str__(self) -> str:
        return self.args[0]


class BudgetExceeded(OsbmError, RuntimeError):
    pass
