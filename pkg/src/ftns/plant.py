"""Static cost maps with analytic derivative oracles.

The seeking controller treats the map as a black box: only point
evaluations feed the closed loop.  The analytic gradient and Hessian
are exposed separately so the ideal Newton flow, the Lyapunov monitors,
and the test oracles can be driven without finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ModelError(ValueError):
    """Invalid cost-model construction or use."""


class CostModel:
    """Common interface of the evaluable maps below.

    ``evaluate`` accepts a single point of shape (n,) or a batch with
    the point axis last; derivatives are defined per point.
    """

    dim: int

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ModelError(f"point dimension {x.shape[-1]} != model dimension {self.dim}")
        return x


@dataclass
class QuadraticCost(CostModel):
    """h(x) = ystar + (x - xstar)' Hstar (x - xstar) / 2.

    ``hstar`` must be symmetric positive definite, so the map has its
    unique critical point (a minimum) at ``xstar`` with value ``ystar``.
    """

    hstar: np.ndarray
    xstar: np.ndarray
    ystar: float = 0.0

    def __post_init__(self) -> None:
        H = np.asarray(self.hstar, dtype=float)
        xs = np.atleast_1d(np.asarray(self.xstar, dtype=float))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ModelError(f"hstar must be square, got shape {H.shape}")
        if xs.ndim != 1 or xs.size != H.shape[0]:
            raise ModelError(f"xstar length {xs.size} != hstar size {H.shape[0]}")
        scale = max(1.0, float(np.abs(H).max()))
        if float(np.abs(H - H.T).max()) > 1e-12 * scale:
            raise ModelError("hstar must be symmetric")
        lam_min = float(np.linalg.eigvalsh(H).min())
        if lam_min <= 0.0:
            raise ModelError(f"hstar must be positive definite, min eigenvalue {lam_min!r}")
        self.hstar = H
        self.xstar = xs
        self.ystar = float(self.ystar)

    @property
    def dim(self) -> int:
        return int(self.xstar.size)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        dx = x - self.xstar
        return self.ystar + 0.5 * np.einsum("...i,ij,...j->...", dx, self.hstar, dx)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        return self.hstar @ (x - self.xstar)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        self._check_point(x)
        return self.hstar.copy()

    def eigen_range(self) -> tuple[float, float]:
        """(lambda_min, lambda_max) of the curvature matrix."""
        lam = np.linalg.eigvalsh(self.hstar)
        return float(lam[0]), float(lam[-1])


@dataclass
class PolynomialCost(CostModel):
    """Multivariate polynomial sum_k c_k * prod_i x_i^(e_ki).

    ``exponents`` is a (terms, n) array of nonnegative integers and
    ``coefficients`` the matching coefficient vector.  Unlike the
    quadratic family the Hessian need not be positive definite
    everywhere; validation of that assumption is left to callers, which
    warn rather than reject (see :func:`min_hessian_eig_sampled`).
    """

    exponents: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        E = np.atleast_2d(np.asarray(self.exponents, dtype=np.int64))
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if E.ndim != 2 or E.shape[0] != c.size:
            raise ModelError(
                f"{c.size} coefficients for exponent table of shape {E.shape}")
        if np.any(E < 0):
            raise ModelError("exponents must be nonnegative integers")
        self.exponents = E
        self.coefficients = c

    @property
    def dim(self) -> int:
        return int(self.exponents.shape[1])

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[Sequence[int], float]]) -> "PolynomialCost":
        """Build from (exponent tuple, coefficient) rows."""
        rows = list(terms)
        if not rows:
            raise ModelError("polynomial needs at least one term")
        E = np.array([list(e) for e, _ in rows], dtype=np.int64)
        c = np.array([co for _, co in rows], dtype=float)
        return cls(exponents=E, coefficients=c)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        powers = x[..., None, :] ** self.exponents      # (..., terms, n)
        return powers.prod(axis=-1) @ self.coefficients

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_point(x)
        g = np.zeros(self.dim)
        for j in range(self.dim):
            E = self.exponents
            mask = E[:, j] > 0
            if not mask.any():
                continue
            Ed = E[mask].copy()
            cd = self.coefficients[mask] * Ed[:, j]
            Ed[:, j] -= 1
            g[j] = (x[None, :] ** Ed).prod(axis=1) @ cd
        return g

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_point(x)
        H = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                E = self.exponents
                if i == j:
                    mask = E[:, i] > 1
                    if not mask.any():
                        continue
                    Ed = E[mask].copy()
                    cd = self.coefficients[mask] * Ed[:, i] * (Ed[:, i] - 1)
                    Ed[:, i] -= 2
                else:
                    mask = (E[:, i] > 0) & (E[:, j] > 0)
                    if not mask.any():
                        continue
                    Ed = E[mask].copy()
                    cd = self.coefficients[mask] * Ed[:, i] * Ed[:, j]
                    Ed[:, i] -= 1
                    Ed[:, j] -= 1
                val = (x[None, :] ** Ed).prod(axis=1) @ cd
                H[i, j] = H[j, i] = val
        return H


def eval_cost(m: CostModel, x: np.ndarray) -> float:
    """Measured output of the map at a point."""
    return float(m.evaluate(np.asarray(x, dtype=float)))


def grad_oracle(m: CostModel, x: np.ndarray) -> np.ndarray:
    """Analytic gradient at a point (testing/monitoring aid)."""
    return m.gradient(np.asarray(x, dtype=float))


def hess_oracle(m: CostModel, x: np.ndarray) -> np.ndarray:
    """Analytic Hessian at a point (testing/monitoring aid)."""
    return m.hessian(np.asarray(x, dtype=float))


def min_hessian_eig_sampled(m: CostModel, lo: float = -5.0, hi: float = 5.0,
                            num: int = 32, seed: int = 0) -> float:
    """Smallest Hessian eigenvalue over random sample points in a box.

    Used by validators to warn when a supplied polynomial violates the
    positive-curvature assumption on the sampled region.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(num):
        x = rng.uniform(lo, hi, size=m.dim)
        worst = min(worst, float(np.linalg.eigvalsh(m.hessian(x)).min()))
    return worst
