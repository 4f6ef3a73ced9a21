"""Dither probe and demodulation signal machinery.

The probe vector is M(t) = [sin(w1 t), ..., sin(wn t)].  Multiplying the
measured cost at the probed point by 2/a * M(t) (gradient channel) or by
the quadratic demodulation signals s(t) (Hessian channel) produces
signals whose averages over one common dither period equal the gradient
and the packed Hessian of the map, exactly so for quadratic maps and
valid frequency sets.

Frequency validity is enforced operationally: a frequency set is
accepted when the demodulation identities hold on a canonical quadratic
test map to tight tolerance, rather than through a closed-form
non-resonance condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm, pi
from typing import Callable, Optional

import numpy as np

from . import plant

#: Relative tolerance used by the demodulation oracle in validate_freqs.
ORACLE_RTOL = 1e-8

#: Tolerance for recognising frequency ratios as rational.  The
#: denominator cap keeps the common period within a sane multiple of the
#: individual dither periods; with it, typical irrationals (sqrt(2), the
#: golden ratio) cannot be approximated to within RATIO_RTOL.
RATIO_RTOL = 1e-9

_MAX_DENOMINATOR = 10 ** 4


class ShapeError(ValueError):
    """Input matrix/vector has the wrong shape or is not symmetric."""


class FrequencyError(ValueError):
    """The dither frequency set violates a validity condition."""


@dataclass(frozen=True)
class DitherSpec:
    """Probe amplitude, angular frequencies, and demodulation scaling.

    ``offdiag_scale`` multiplies the off-diagonal entries of the Hessian
    demodulation matrix; the default 4/a**2 is the value for which the
    period-averaged Hessian estimate of a quadratic map is exact (see
    ``hess_demod``).  It is configurable so alternative constants can be
    reproduced for comparison.
    """

    a: float
    omegas: np.ndarray
    offdiag_scale: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.a > 0.0 or not np.isfinite(self.a):
            raise FrequencyError(f"probe amplitude must be positive, got {self.a!r}")
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        if om.ndim != 1 or om.size == 0:
            raise FrequencyError("omegas must be a nonempty 1-d vector")
        if not np.all(np.isfinite(om)) or np.any(om <= 0.0):
            raise FrequencyError(f"frequencies must be positive and finite, got {om!r}")
        if len(set(om.tolist())) != om.size:
            raise FrequencyError(f"frequencies must be pairwise distinct, got {om!r}")
        om.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        if self.offdiag_scale is None:
            object.__setattr__(self, "offdiag_scale", 4.0 / self.a ** 2)
        elif not self.offdiag_scale > 0.0:
            raise FrequencyError(f"offdiag_scale must be positive, got {self.offdiag_scale!r}")

    @property
    def n(self) -> int:
        return int(self.omegas.size)


def sym_size(n: int) -> int:
    """Length n(n+1)/2 of the packed upper triangle of an n x n matrix."""
    return n * (n + 1) // 2


def vec_sym(S: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix into its row-major upper triangle.

    Entry order is S11, S12, ..., S1n, S22, ..., S2n, ..., Snn.  The
    input must be square and symmetric to 1e-12 relative tolerance.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max()))
    if float(np.abs(S - S.T).max()) > 1e-12 * scale:
        raise ShapeError("matrix is not symmetric within 1e-12 relative tolerance")
    iu, ju = np.triu_indices(S.shape[0])
    return S[iu, ju].copy()


def unvec_sym(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec_sym`: rebuild the symmetric matrix."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise ShapeError(f"expected a 1-d packed vector, got shape {s.shape}")
    n = int(round((np.sqrt(8.0 * s.size + 1.0) - 1.0) / 2.0))
    if sym_size(n) != s.size:
        raise ShapeError(f"length {s.size} is not a triangular number n(n+1)/2")
    S = np.zeros((n, n))
    iu, ju = np.triu_indices(n)
    S[iu, ju] = s
    S[ju, iu] = s
    return S


def probe(t, d: DitherSpec) -> np.ndarray:
    """Probe vector [sin(w1 t), ..., sin(wn t)].

    ``t`` may be a scalar or a 1-d array of times; with an array the
    result has the time axis first, shape (len(t), n).
    """
    t = np.asarray(t, dtype=float)
    return np.sin(np.multiply.outer(t, d.omegas))


def hess_demod(t, d: DitherSpec) -> np.ndarray:
    """Packed Hessian demodulation signal s(t).

    Diagonal entries are (16/a^2) * (sin(wi t)^2 - 1/2); off-diagonal
    entries are offdiag_scale * sin(wi t) * sin(wj t).  Scalar ``t``
    yields shape (n(n+1)/2,), a time array prepends the time axis.
    """
    si = probe(t, d)                              # (..., n)
    outer = si[..., :, None] * si[..., None, :]   # (..., n, n)
    S = d.offdiag_scale * outer
    diag = (16.0 / d.a ** 2) * (si * si - 0.5)
    idx = np.arange(d.n)
    S[..., idx, idx] = diag
    iu, ju = np.triu_indices(d.n)
    return S[..., iu, ju]


def delta1(y_probe: float, t, d: DitherSpec) -> np.ndarray:
    """Gradient demodulation (2/a) * y * M(t) for a measured cost y."""
    return (2.0 / d.a) * float(y_probe) * probe(t, d)


def delta2(y_probe: float, t, d: DitherSpec) -> np.ndarray:
    """Hessian demodulation y * s(t) for a measured cost y."""
    return float(y_probe) * hess_demod(t, d)


def _integer_harmonics(omegas: np.ndarray) -> tuple[np.ndarray, float]:
    """Express omegas as integer multiples of a base frequency.

    Returns (multiples, base) with omegas == multiples * base elementwise
    and gcd(multiples) == 1.  Raises FrequencyError when some ratio is
    not rational within RATIO_RTOL.
    """
    ratios = omegas / omegas[0]
    fracs = []
    for w, r in zip(omegas, ratios):
        f = Fraction(r).limit_denominator(_MAX_DENOMINATOR)
        if abs(float(f) - r) > RATIO_RTOL * r:
            raise FrequencyError(
                f"frequency ratio {w}/{omegas[0]} is not rational within tolerance"
            )
        fracs.append(f)
    den = 1
    for f in fracs:
        den = lcm(den, f.denominator)
    mult = np.array([f.numerator * (den // f.denominator) for f in fracs], dtype=np.int64)
    g = 0
    for m in mult:
        g = gcd(g, int(m))
    mult //= g
    base = float(omegas[0]) * g / den
    return mult, base


def common_period(d: DitherSpec) -> float:
    """Smallest T > 0 with all omega_i * T integer multiples of 2*pi."""
    _, base = _integer_harmonics(d.omegas)
    return 2.0 * pi / base


def quad_node_count(d: DitherSpec) -> int:
    """Trapezoid node budget: >= 32 nodes per cycle of the fastest dither."""
    mult, _ = _integer_harmonics(d.omegas)
    return max(256, 32 * int(mult.max()))


def period_average(fn: Callable[[np.ndarray], np.ndarray], d: DitherSpec,
                   num_nodes: Optional[int] = None) -> np.ndarray:
    """Average fn over one common dither period by composite trapezoid.

    ``fn`` must accept a 1-d array of times and return an array whose
    first axis is time.  The node count defaults to
    max(256, 32 * omega_max/omega_gcd), resolving the fastest
    oscillation with at least 32 nodes per cycle.
    """
    T = common_period(d)
    N = int(num_nodes) if num_nodes is not None else quad_node_count(d)
    t = np.linspace(0.0, T, N + 1)
    vals = np.asarray(fn(t), dtype=float)
    w = np.full(N + 1, 1.0 / N)
    w[0] = w[-1] = 0.5 / N
    return np.tensordot(w, vals, axes=1)


def averaged_demod(m: "plant.CostModel", x: np.ndarray, d: DitherSpec,
                   num_nodes: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Period averages of the two demodulation signals at a frozen point.

    Returns (avg delta1, avg delta2) at state ``x``; for quadratic maps
    and valid frequencies these equal grad h(x) and vec(H) exactly up to
    quadrature roundoff.
    """
    x = np.asarray(x, dtype=float)

    def both(t: np.ndarray) -> np.ndarray:
        M = probe(t, d)                        # (T, n)
        s = hess_demod(t, d)                   # (T, m)
        y = m.evaluate(x[None, :] + d.a * M)   # (T,)
        return np.concatenate([(2.0 / d.a) * y[:, None] * M, y[:, None] * s], axis=1)

    avg = period_average(both, d, num_nodes)
    return avg[: d.n], avg[d.n:]


@dataclass(frozen=True)
class Violation:
    """One machine-readable frequency-validation failure."""

    code: str
    message: str
    magnitude: Optional[float] = None


def _canonical_quadratic(n: int) -> tuple["plant.QuadraticCost", np.ndarray]:
    """Generic positive-definite quadratic used by the demodulation oracle."""
    H = np.ones((n, n)) + np.diag(np.arange(n, dtype=float) + n + 1.0)
    xstar = np.zeros(n)
    model = plant.QuadraticCost(hstar=H, xstar=xstar, ystar=0.5)
    x0 = 1.0 + 0.5 * np.arange(n, dtype=float)   # frozen point with nonzero gradient
    return model, x0


def validate_freqs(d: DitherSpec, n: int) -> list[Violation]:
    """Check a dither frequency set for the dimension-n problem.

    Returns an empty list when valid, else a list of violations.  Checks:
    dimension match; positive, distinct frequencies; rational ratios (a
    common period exists); and the demodulation oracle, i.e. on a
    canonical quadratic map the period-averaged demodulation signals
    reproduce the analytic gradient and packed Hessian to ORACLE_RTOL.
    The oracle runs with the canonical off-diagonal scaling 4/a^2 so the
    check reflects the frequencies, not the scale constant.
    """
    violations: list[Violation] = []
    om = d.omegas
    if om.size != n:
        violations.append(Violation(
            "dimension", f"{om.size} frequencies for a dimension-{n} problem"))
        return violations
    if np.any(om <= 0.0):
        violations.append(Violation("nonpositive", f"frequencies must be positive: {om!r}"))
    if len(set(om.tolist())) != om.size:
        violations.append(Violation("duplicate", f"duplicate frequency in {om!r}"))
    if violations:
        return violations
    try:
        common_period(d)
    except FrequencyError as exc:
        violations.append(Violation("irrational", str(exc)))
        return violations

    oracle_spec = DitherSpec(a=d.a, omegas=om.copy())
    model, x0 = _canonical_quadratic(n)
    d1_avg, d2_avg = averaged_demod(model, x0, oracle_spec)
    g_exact = model.gradient(x0)
    xi_exact = vec_sym(model.hstar)
    g_err = float(np.linalg.norm(d1_avg - g_exact) / np.linalg.norm(g_exact))
    h_err = float(np.linalg.norm(d2_avg - xi_exact) / np.linalg.norm(xi_exact))
    if g_err > ORACLE_RTOL:
        violations.append(Violation(
            "gradient_oracle",
            f"period-averaged gradient estimate off by relative {g_err:.3e}",
            g_err))
    if h_err > ORACLE_RTOL:
        violations.append(Violation(
            "hessian_oracle",
            f"period-averaged Hessian estimate off by relative {h_err:.3e}",
            h_err))
    return violations
