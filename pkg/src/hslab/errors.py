"""Exception types raised across hslab."""


class HslabError(Exception):
    pass


class EvalDomain(HslabError):
    """Sampled upper bound m fell below the declared lower bound delta."""


class EmptySupport(HslabError):
    pass


class CflViolation(HslabError):
    pass


class NonFinite(HslabError):
    pass


class MaxSteps(HslabError):
    pass


class SupportNearBoundary(HslabError):
    """Density support came within the guard band of the domain edge."""


class NotCongested(HslabError):
    pass


class LeftDomain(HslabError):
    pass


class RegionOutsidePositivity(HslabError):
    pass


class InitialOrderingFails(HslabError):
    pass


class MultipleFronts(HslabError):
    pass


class DegenerateDenominator(HslabError):
    pass


class NotAPatch(HslabError):
    pass


class ParseError(HslabError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(HslabError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
