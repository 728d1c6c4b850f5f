"""Exception types raised across the package."""


class QuasidiagError(Exception):
    """Base class for every error raised by quasidiag."""


class MonotonicityViolation(QuasidiagError):
    pass


class ResonantFrequency(QuasidiagError):
    def __init__(self, n, distance=0.0):
        self.n = tuple(int(v) for v in n)
        self.distance = distance
        super().__init__(f"exact resonance at n={self.n} (|n.omega| = {distance:.3g})")


class RegionOverlap(QuasidiagError):
    def __init__(self, step, first, second):
        self.step = step
        self.first = first
        self.second = second
        super().__init__(f"regions centred at {first} and {second} overlap at step {step}")


class InvalidAbsorptionQuery(QuasidiagError):
    pass


class DominanceViolation(QuasidiagError):
    def __init__(self, a, b, h, m=None, phase=None):
        self.a, self.b, self.h = a, b, h
        self.m = m
        self.phase = phase
        where = "" if m is None else f" for block {{0, {m}}}"
        if phase is not None:
            where += f" at phase {phase:.17g}"
        super().__init__(f"|h|={abs(h):.3g} not dominated by |b-a|={abs(b - a):.3g}{where}")


class ToleranceBreach(QuasidiagError):
    pass


class NoConvergence(QuasidiagError):
    pass


class CardinalityMismatch(QuasidiagError):
    pass


class DomainConditionViolated(QuasidiagError):
    pass


class ConfigError(QuasidiagError):
    """Invalid or incomplete run configuration."""
