"""Right-hand sides of the three simulated systems and their monitors.

Three systems share the finite-time flow primitives:

* the full seeking system, driven by the dither probe and the two
  demodulation channels, with the packed Hessian estimate xi as state;
* the ideal Newton target flow, which uses the analytic gradient and
  Hessian oracles directly;
* the phase-averaged system, obtained by replacing each demodulation
  signal with its average over one common dither period at frozen state
  and then applying the scaled flow to the averaged argument.  For
  quadratic maps the averaged arguments equal H v + grad h(x) and
  xi - vec(H) exactly, which makes the optimum an exact equilibrium.

Also here: the coordinate transform behind the Lyapunov monitors, the
three Lyapunov evaluators, and the closed-form gain threshold that
guarantees finite-time decay of the first monitor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dither as dither_mod
from . import plant as plant_mod
from .dither import DitherSpec, averaged_demod, hess_demod, probe, sym_size, unvec_sym, vec_sym
from .flows import FlowParams, scaled_flow
from .plant import CostModel, ModelError, QuadraticCost


@dataclass(frozen=True)
class GainSet:
    """Strictly positive loop gains (state drive, direction, estimator)."""

    k: float
    K: float
    K2: float

    def __post_init__(self) -> None:
        for name in ("k", "K", "K2"):
            val = getattr(self, name)
            if not val > 0.0 or not np.isfinite(val):
                raise ValueError(f"gain {name} must be positive and finite, got {val!r}")


@dataclass
class EscState:
    """Full seeking-system state: decision x, direction v, packed Hessian xi."""

    x: np.ndarray
    v: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        n = self.x.size
        if self.v.size != n:
            raise ValueError(f"v has length {self.v.size}, expected {n}")
        if self.xi.size != sym_size(n):
            raise ValueError(f"xi has length {self.xi.size}, expected {sym_size(n)}")

    @property
    def n(self) -> int:
        return int(self.x.size)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x, self.v, self.xi])

    @classmethod
    def unpack(cls, y: np.ndarray, n: int) -> "EscState":
        y = np.asarray(y, dtype=float)
        return cls(x=y[:n], v=y[n:2 * n], xi=y[2 * n:])


@dataclass
class TargetState:
    """Ideal Newton-flow state: decision x and direction v."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if self.v.size != self.x.size:
            raise ValueError(f"v has length {self.v.size}, expected {self.x.size}")

    @property
    def n(self) -> int:
        return int(self.x.size)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])

    @classmethod
    def unpack(cls, y: np.ndarray, n: int) -> "TargetState":
        y = np.asarray(y, dtype=float)
        return cls(x=y[:n], v=y[n:2 * n])


def floor_spd(H: np.ndarray, rel: float = 1e-3) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix from below.

    The floor is rel * trace/n (or rel itself when the trace is not
    positive).  Used as an optional projection of the Hessian estimate
    in the direction dynamics: transient estimates with negative
    eigenvalues can push the direction loop into finite-time escape for
    aggressive seeds, and the decay analysis assumes positive
    definiteness.  Disabled by default.
    """
    lam, Q = np.linalg.eigh(H)
    tau = rel * float(np.trace(H)) / H.shape[0]
    if tau <= 0.0:
        tau = rel
    lam = np.maximum(lam, tau)
    return (Q * lam) @ Q.T


def _direction_matrix(xi: np.ndarray, pd_floor: Optional[float]) -> np.ndarray:
    H = unvec_sym(xi)
    if pd_floor is not None:
        H = floor_spd(H, pd_floor)
    return H


def esc_rhs(t: float, s: EscState, g: GainSet, p: FlowParams, d: DitherSpec,
            m: CostModel, pd_floor: Optional[float] = None) -> EscState:
    """Time derivative of the full seeking system.

    The cost is measured once per call, at the probed point
    x + a * M(t); both demodulation channels reuse that single sample.
    The direction dynamics use the current Hessian estimate
    unvec(xi), the only carrier of curvature information available to
    the implementable loop.
    """
    Mt = probe(t, d)
    y_probe = float(m.evaluate(s.x + d.a * Mt))
    d1 = (2.0 / d.a) * y_probe * Mt
    d2 = y_probe * hess_demod(t, d)
    H = _direction_matrix(s.xi, pd_floor)
    return EscState(
        x=g.k * scaled_flow(s.v, p),
        v=-g.K * scaled_flow(H @ s.v + d1, p),
        xi=-g.K2 * scaled_flow(s.xi - d2, p),
    )


def target_rhs(s: TargetState, g: GainSet, p: FlowParams, m: CostModel) -> TargetState:
    """Time derivative of the ideal finite-time Newton flow."""
    H = m.hessian(s.x)
    grad = m.gradient(s.x)
    return TargetState(
        x=g.k * scaled_flow(s.v, p),
        v=-g.K * scaled_flow(H @ s.v + grad, p),
    )


def averaged_rhs(s: EscState, g: GainSet, p: FlowParams, d: DitherSpec,
                 m: CostModel, pd_floor: Optional[float] = None,
                 num_nodes: Optional[int] = None) -> EscState:
    """Time derivative of the phase-averaged seeking system.

    The demodulation signals are averaged over one common dither period
    at the frozen state (composite trapezoid) and the scaled flow is
    applied to the averaged arguments H v + avg(delta1) and
    xi - avg(delta2).  Averaging the argument rather than the whole
    scaled field keeps the optimum an exact equilibrium, which is the
    property the decay monitors certify.
    """
    d1_avg, d2_avg = averaged_demod(m, s.x, d, num_nodes)
    H = _direction_matrix(s.xi, pd_floor)
    return EscState(
        x=g.k * scaled_flow(s.v, p),
        v=-g.K * scaled_flow(H @ s.v + d1_avg, p),
        xi=-g.K2 * scaled_flow(s.xi - d2_avg, p),
    )


def to_zg(s, m: CostModel) -> tuple[np.ndarray, np.ndarray]:
    """Transformed coordinates (z, g) = (H v + grad, grad).

    The curvature matrix H is the analytic Hessian for a target state
    and the current estimate unvec(xi) for a seeking state.
    """
    grad = m.gradient(s.x)
    if isinstance(s, EscState):
        H = unvec_sym(s.xi)
    else:
        H = m.hessian(s.x)
    return H @ s.v + grad, grad


def lyapunov_v1(z: np.ndarray, g: np.ndarray) -> float:
    """Quadratic energy (||z||^2 + ||g||^2) / 2 of the transformed state."""
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    return 0.5 * float(z @ z) + 0.5 * float(g @ g)


def lyapunov_v2(xi: np.ndarray, m: CostModel) -> float:
    """Hessian-estimate error energy ||xi - vec(H)||^2 / 2.

    Defined only for quadratic models, where the true curvature is a
    known constant.
    """
    if not isinstance(m, QuadraticCost):
        raise ModelError("the estimate-error monitor requires a quadratic model")
    err = np.asarray(xi, dtype=float) - vec_sym(m.hstar)
    return 0.5 * float(err @ err)


def lyapunov_v3(z: np.ndarray, g: np.ndarray) -> float:
    """Same quadratic energy as lyapunov_v1, on averaged coordinates."""
    return lyapunov_v1(z, g)


def gain_threshold(m: CostModel, k: float, p: FlowParams) -> tuple[float, float, float]:
    """Closed-form gain threshold for finite-time decay of the V1 monitor.

    Returns (k1min, k2min, Kstar).  For any direction gain K > Kstar the
    energy (||z||^2 + ||g||^2)/2 decays along the ideal Newton flow with
    a finite settling time.  Requires a quadratic model, whose extreme
    curvature eigenvalues enter the bounds.
    """
    if not isinstance(m, QuadraticCost):
        raise ModelError("gain_threshold requires a quadratic model")
    lam_min, lam_max = m.eigen_range()
    a1, a2 = p.alpha1, p.alpha2
    k1min = (lam_min ** -2.0 * (1.0 - a1) / (2.0 - a1)) ** (1.0 - a1)
    k2min = (lam_max ** (a2 - 2.0) / lam_min ** a2 * (1.0 - a2) / (2.0 - a2)) ** (1.0 - a2)
    kstar = 2.0 * k * max(
        k1min / (2.0 - a1) * lam_max ** (2.0 - a1) / lam_min,
        k2min / (2.0 - a2) * lam_max ** (2.0 - a2) / lam_min,
    )
    return k1min, k2min, kstar


# --- flat-vector adapters for the fixed-step integrator ---------------------
#
# These duplicate the small amount of math in the reference functions
# above to avoid per-call state objects in the integration hot loop;
# the test suite pins them to the reference implementations.


def _make_sflow(p: FlowParams) -> Callable[[np.ndarray], np.ndarray]:
    c1, c2, a1, a2, eps = p.c1, p.c2, p.alpha1, p.alpha2, p.sing_eps

    def sflow(w: np.ndarray) -> np.ndarray:
        nw = float(np.sqrt(w @ w))
        if nw <= eps:
            return np.zeros_like(w)
        return (c1 * nw ** (-a1) + c2 * nw ** (-a2)) * w

    return sflow


def make_esc_rhs(g: GainSet, p: FlowParams, d: DitherSpec, m: CostModel,
                 pd_floor: Optional[float] = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """Seeking-system RHS on packed state vectors [x, v, xi]."""
    n = m.dim
    om, a, offd = d.omegas, d.a, d.offdiag_scale
    iu, ju = np.triu_indices(n)
    diag_pos = np.flatnonzero(iu == ju)
    sflow = _make_sflow(p)
    k, K, K2 = g.k, g.K, g.K2

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v, xi = y[:n], y[n:2 * n], y[2 * n:]
        si = np.sin(om * t)
        y_probe = float(m.evaluate(x + a * si))
        d1 = (2.0 / a) * y_probe * si
        s = offd * (si[iu] * si[ju])
        s[diag_pos] = (16.0 / a ** 2) * (si * si - 0.5)
        H = np.empty((n, n))
        H[iu, ju] = xi
        H[ju, iu] = xi
        if pd_floor is not None:
            H = floor_spd(H, pd_floor)
        return np.concatenate([
            k * sflow(v),
            -K * sflow(H @ v + d1),
            -K2 * sflow(xi - y_probe * s),
        ])

    return rhs


def make_target_rhs(g: GainSet, p: FlowParams,
                    m: CostModel) -> Callable[[float, np.ndarray], np.ndarray]:
    """Target-flow RHS on packed state vectors [x, v]."""
    n = m.dim
    sflow = _make_sflow(p)
    k, K = g.k, g.K

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v = y[:n], y[n:]
        return np.concatenate([
            k * sflow(v),
            -K * sflow(m.hessian(x) @ v + m.gradient(x)),
        ])

    return rhs


def make_averaged_rhs(g: GainSet, p: FlowParams, d: DitherSpec, m: CostModel,
                      pd_floor: Optional[float] = None,
                      num_nodes: Optional[int] = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """Averaged-system RHS on packed state vectors, with cached quadrature.

    The trapezoid nodes and the probe/demodulation tables depend only on
    the dither spec, so they are precomputed once; each call then costs
    one vectorized batch of cost evaluations.
    """
    n = m.dim
    T = dither_mod.common_period(d)
    N = int(num_nodes) if num_nodes is not None else dither_mod.quad_node_count(d)
    tq = np.linspace(0.0, T, N + 1)
    Mq = probe(tq, d)                      # (N+1, n)
    Sq = hess_demod(tq, d)                 # (N+1, m)
    w = np.full(N + 1, 1.0 / N)
    w[0] = w[-1] = 0.5 / N
    iu, ju = np.triu_indices(n)
    sflow = _make_sflow(p)
    k, K, K2 = g.k, g.K, g.K2

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v, xi = y[:n], y[n:2 * n], y[2 * n:]
        yq = m.evaluate(x[None, :] + d.a * Mq)
        wy = w * yq
        d1_avg = (2.0 / d.a) * (wy @ Mq)
        d2_avg = wy @ Sq
        H = np.empty((n, n))
        H[iu, ju] = xi
        H[ju, iu] = xi
        if pd_floor is not None:
            H = floor_spd(H, pd_floor)
        return np.concatenate([
            k * sflow(v),
            -K * sflow(H @ v + d1_avg),
            -K2 * sflow(xi - d2_avg),
        ])

    return rhs


def monitor_channels(m: CostModel, system: str) -> dict[str, Callable[[float, np.ndarray], float]]:
    """Monitor channel evaluators keyed by channel name.

    ``system`` is one of ``esc``, ``averaged`` (packed [x, v, xi]) or
    ``target`` (packed [x, v]).  Channels that need information the run
    cannot provide (estimate-error monitors without a quadratic model,
    or xi-based monitors on a target run) evaluate to nan.
    """
    if system not in ("esc", "averaged", "target"):
        raise ValueError(f"unknown system {system!r}")
    n = m.dim
    quadratic = isinstance(m, QuadraticCost)
    xi_true = vec_sym(m.hstar) if quadratic else None
    xstar = m.xstar if quadratic else None
    has_xi = system in ("esc", "averaged")

    def chan_y(t: float, y: np.ndarray) -> float:
        # cost at the recorded, unperturbed state; never the probed point
        return float(m.evaluate(y[:n]))

    def chan_v1(t: float, y: np.ndarray) -> float:
        grad = m.gradient(y[:n])
        H = unvec_sym(y[2 * n:]) if has_xi else m.hessian(y[:n])
        return lyapunov_v1(H @ y[n:2 * n] + grad, grad)

    def chan_v2(t: float, y: np.ndarray) -> float:
        if not has_xi or not quadratic:
            return float("nan")
        return lyapunov_v2(y[2 * n:], m)

    def chan_v3(t: float, y: np.ndarray) -> float:
        if not has_xi:
            return float("nan")
        grad = m.gradient(y[:n])
        z = unvec_sym(y[2 * n:]) @ y[n:2 * n] + grad
        return lyapunov_v3(z, grad)

    def chan_err_x(t: float, y: np.ndarray) -> float:
        if xstar is None:
            return float("nan")
        return float(np.linalg.norm(y[:n] - xstar))

    def chan_err_xi(t: float, y: np.ndarray) -> float:
        if not has_xi or xi_true is None:
            return float("nan")
        return float(np.linalg.norm(y[2 * n:] - xi_true))

    return {
        "y": chan_y,
        "V1": chan_v1,
        "V2": chan_v2,
        "V3": chan_v3,
        "err_x": chan_err_x,
        "err_xi": chan_err_xi,
    }
