"""Exception types raised by cgolab."""

from __future__ import annotations


class CGOLabError(Exception):
    """Base class for all library errors."""


class SobolevBoundViolated(CGOLabError):
    """Sampled potential has discrete H^s norm above the class bound N."""


class BadExponents(CGOLabError, ValueError):
    """Interpolation orders are not related by t = (1-p) t0 + p t1."""


class DegenerateFrequency(CGOLabError, ValueError):
    """A frame was requested for the zero frequency."""


class ImaginaryRootViolation(CGOLabError, ValueError):
    """|xi|^2 (1/4 + tau^2) < k^2, so the imaginary part is not real."""


class ScheduleInfeasible(CGOLabError):
    """(E / 5R)^2 <= M^2: the measured distance is too large for the schedule."""


class InadmissibleFrame(CGOLabError, ValueError):
    """Frame fails |Im zeta| > M."""


class SymbolSingularity(CGOLabError):
    """The shifted Fourier symbol has a (numerical) zero on the lattice."""


class NoConvergence(CGOLabError):
    """Fixed-point iteration for the CGO remainder did not converge."""


class ExponentGuard(CGOLabError, ValueError):
    """|Im zeta| * |x| exceeds the overflow guard on the computational cell."""


class TraceNotVanishing(CGOLabError):
    """An assembled reflected solution does not vanish on x3 = 0."""


class NearResonance(CGOLabError):
    """The discrete Helmholtz operator is (nearly) singular."""


class EmptySet(CGOLabError, ValueError):
    """A Cauchy data set has no nonzero pairs."""


class SpanDeficient(CGOLabError):
    """A boundary trace is poorly represented by a data dictionary."""


class NonHermitian(CGOLabError, ValueError):
    """Recovered modes violate conjugate symmetry beyond tolerance."""


class ConfigError(CGOLabError, ValueError):
    """Invalid experiment configuration."""
