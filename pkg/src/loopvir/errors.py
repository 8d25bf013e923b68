"""Exception hierarchy shared by all layers."""


class LoopvirError(Exception):
    """Base class for every error raised by this package."""


class JetOrderError(LoopvirError):
    def __init__(self, monomial, cap):
        self.monomial = monomial
        self.cap = cap
        super().__init__(f"jet order cap {cap} exceeded in monomial {monomial}")


class NonlocalInputError(LoopvirError):
    """An operation that only accepts local differential polynomials got a nonlocal one."""


class GridMismatchError(LoopvirError):
    pass


class SolvabilityError(LoopvirError):
    """A mean (zero wavenumber) component blocks an antiderivative."""

    def __init__(self, message, mode=None, magnitude=None):
        self.mode = mode
        self.magnitude = magnitude
        super().__init__(message)


class ResonanceError(LoopvirError):
    """Modes in the kernel of Lambda = -d/dx + c d/dy carry energy."""

    def __init__(self, modes, c):
        self.modes = list(modes)
        self.c = c
        shown = ", ".join(str(m) for m in self.modes[:8])
        more = "" if len(self.modes) <= 8 else f" (+{len(self.modes) - 8} more)"
        super().__init__(f"resonance obstruction at c={c}: modes {shown}{more}")


class StructureError(LoopvirError):
    """An algebraic identity that must hold failed for every admissible convention."""


class AccuracyError(LoopvirError):
    pass


class BlowUpError(LoopvirError):
    def __init__(self, last_good_t, message="non-finite field"):
        self.last_good_t = last_good_t
        super().__init__(f"{message}; last good t = {last_good_t!r}")


class ConfigError(LoopvirError):
    pass
