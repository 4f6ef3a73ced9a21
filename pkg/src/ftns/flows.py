"""Finite-time flow primitives.

The scaling function implemented here multiplies a vector by a
norm-dependent gain

    gamma(v) = c1 * ||v||^(-alpha1) + c2 * ||v||^(-alpha2)

with a fractional exponent alpha1 in (0, 1) and a negative exponent
alpha2 < 0.  Fields of the form gamma(v) * v decay to the origin in
finite time instead of merely exponentially.  The gain itself blows up
at the origin, but the product gamma(v) * v tends to zero there, so the
vector field admits a continuous extension; ``scaled_flow`` realises
that extension with a hard zero below a tiny norm threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A flow parameter falls outside its admissible range."""


class SingularityError(ValueError):
    """The scaling gain was requested too close to the origin."""


def exponents_from_q(q1: float, q2: float) -> tuple[float, float]:
    """Derive the pair of scaling exponents from the shape parameters.

    Requires q1 > 2 and 1 < q2 < 2.  Returns
    ((q1 - 2)/(q1 - 1), (q2 - 2)/(q2 - 1)); the first lies in (0, 1),
    the second is negative.
    """
    if not np.isfinite(q1) or not q1 > 2.0:
        raise ParameterError(f"q1 must satisfy q1 > 2 (open bound), got {q1!r}")
    if not np.isfinite(q2) or not 1.0 < q2 < 2.0:
        raise ParameterError(f"q2 must satisfy 1 < q2 < 2 (open bounds), got {q2!r}")
    return (q1 - 2.0) / (q1 - 1.0), (q2 - 2.0) / (q2 - 1.0)


@dataclass(frozen=True)
class FlowParams:
    """Exponents and gains of the finite-time scaling function.

    ``alpha1`` and ``alpha2`` are stored rather than recomputed per call
    so the consistency with (q1, q2) is checked once, at construction.
    Build instances with :meth:`from_q` unless the exponents are already
    at hand.
    """

    q1: float
    q2: float
    c1: float
    c2: float
    alpha1: float
    alpha2: float
    sing_eps: float = 1e-12

    def __post_init__(self) -> None:
        a1, a2 = exponents_from_q(self.q1, self.q2)
        if abs(a1 - self.alpha1) > 1e-12 or abs(a2 - self.alpha2) > 1e-12:
            raise ParameterError(
                "alpha1/alpha2 must equal the values derived from (q1, q2); "
                f"expected ({a1!r}, {a2!r}), got ({self.alpha1!r}, {self.alpha2!r})"
            )
        if self.c1 < 0.0 or self.c2 < 0.0:
            raise ParameterError(f"gains must be nonnegative, got c1={self.c1!r}, c2={self.c2!r}")
        if self.c1 + self.c2 <= 0.0:
            raise ParameterError("at least one of c1, c2 must be positive")
        if not self.sing_eps > 0.0:
            raise ParameterError(f"sing_eps must be positive, got {self.sing_eps!r}")

    @classmethod
    def from_q(
        cls,
        q1: float,
        q2: float,
        c1: float,
        c2: float,
        sing_eps: float = 1e-12,
    ) -> "FlowParams":
        a1, a2 = exponents_from_q(q1, q2)
        return cls(q1=q1, q2=q2, c1=c1, c2=c2, alpha1=a1, alpha2=a2, sing_eps=sing_eps)


def gamma(v: np.ndarray, p: FlowParams) -> float:
    """Norm-dependent scaling gain c1*||v||^(-alpha1) + c2*||v||^(-alpha2).

    Raises :class:`SingularityError` for ||v|| <= p.sing_eps; callers
    that need the product gamma(v)*v near the origin must use
    :func:`scaled_flow`, which is total.
    """
    n = float(np.linalg.norm(np.asarray(v, dtype=float)))
    if n <= p.sing_eps:
        raise SingularityError(
            f"gamma is undefined for ||v|| <= sing_eps ({n!r} <= {p.sing_eps!r})"
        )
    return p.c1 * n ** (-p.alpha1) + p.c2 * n ** (-p.alpha2)


def scaled_flow(v: np.ndarray, p: FlowParams) -> np.ndarray:
    """The vector field gamma(v)*v, continuously extended by 0 at the origin.

    Total function: for ||v|| <= p.sing_eps the zero vector is returned,
    which is the continuity limit since 1 - alpha1 > 0 and 1 - alpha2 > 1.
    The hard zero also gives simulated trajectories an exact equilibrium
    instead of branch chatter around the singularity.
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n <= p.sing_eps:
        return np.zeros_like(v)
    return (p.c1 * n ** (-p.alpha1) + p.c2 * n ** (-p.alpha2)) * v
