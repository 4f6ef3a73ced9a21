"""Fixed-step integration, trajectory recording, and experiment sweeps.

The dynamics are not Lipschitz at their equilibria and carry fast dither
oscillations, so integration uses classical fixed-step RK4: adaptive
controllers thrash on both features, while a fixed step tied to the
dither period is predictable and bit-reproducible.  Settling detection
follows the "enters and stays" convention: the settling time is the
first recorded time after which the trajectory never leaves the target
ball again.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np


class NonFiniteStateError(RuntimeError):
    """Integration produced a non-finite state (overflow or NaN)."""

    def __init__(self, t_fail: float, t_last: float, state_last: np.ndarray):
        super().__init__(
            f"non-finite state at t={t_fail!r}; last finite state at t={t_last!r}")
        self.t_fail = t_fail
        self.t_last = t_last
        self.state_last = state_last


class GridMismatchError(ValueError):
    """Two trajectories do not share the same time grid."""


@dataclass
class SimConfig:
    """Fixed-step integration settings.

    ``settle_target`` defaults to the known minimizer when the caller
    has one; ``record_stride`` thins the recorded samples.  A zero
    ``t_end`` records the initial state only.
    """

    t_end: float
    dt: float
    record_stride: int = 1
    settle_tol: float = 0.1
    settle_target: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.t_end < 0.0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end!r}")
        if int(self.record_stride) < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride!r}")
        self.record_stride = int(self.record_stride)
        if not self.settle_tol > 0.0:
            raise ValueError(f"settle_tol must be positive, got {self.settle_tol!r}")
        if self.settle_target is not None:
            self.settle_target = np.atleast_1d(np.asarray(self.settle_target, dtype=float))


@dataclass
class Trajectory:
    """Recorded samples of one integration run.

    ``states`` holds packed state vectors row per record; ``n`` is the
    length of the decision-variable block at the front of each row.
    ``channels`` maps monitor names to series aligned with ``times``.
    """

    times: np.ndarray
    states: np.ndarray
    n: int
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.states.shape[0] != self.times.size:
            raise ValueError("times and states must have equal length")
        for name, series in self.channels.items():
            if series.size != self.times.size:
                raise ValueError(f"channel {name!r} length mismatch")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("times must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        """Decision-variable block, shape (records, n)."""
        return self.states[:, : self.n]

    def component(self, name: str) -> np.ndarray:
        """Named state block: 'x', 'v', 'xi', or 'state' (everything)."""
        if name == "x":
            return self.states[:, : self.n]
        if name == "v":
            return self.states[:, self.n: 2 * self.n]
        if name == "xi":
            if self.states.shape[1] <= 2 * self.n:
                raise ValueError("trajectory has no xi block")
            return self.states[:, 2 * self.n:]
        if name == "state":
            return self.states
        raise ValueError(f"unknown component {name!r}")


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray], state0: np.ndarray,
              cfg: SimConfig, channels: Optional[Mapping[str, Callable]] = None,
              n: Optional[int] = None) -> Trajectory:
    """Integrate with classical RK4 at fixed step, recording monitors.

    Deterministic: identical inputs yield bit-identical trajectories.
    Aborts with :class:`NonFiniteStateError` (carrying the failing time
    and the last finite state) if the state overflows or turns NaN.
    """
    y = np.asarray(state0, dtype=float).copy()
    if n is None:
        n = y.size
    n_steps = int(round(cfg.t_end / cfg.dt)) if cfg.t_end > 0.0 else 0
    dt = cfg.dt
    stride = cfg.record_stride
    chans = dict(channels) if channels else {}

    rec_times = [0.0]
    rec_states = [y.copy()]
    rec_chan: dict[str, list] = {name: [fn(0.0, y)] for name, fn in chans.items()}

    for i in range(n_steps):
        t = i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = (i + 1) * dt
        if not np.all(np.isfinite(y)):
            raise NonFiniteStateError(t_next, rec_times[-1], rec_states[-1])
        if (i + 1) % stride == 0 or (i + 1) == n_steps:
            rec_times.append(t_next)
            rec_states.append(y.copy())
            for name, fn in chans.items():
                rec_chan[name].append(fn(t_next, y))

    return Trajectory(
        times=np.array(rec_times),
        states=np.array(rec_states),
        n=n,
        channels={name: np.array(vals) for name, vals in rec_chan.items()},
    )


def settling_time(tr: Trajectory, target: np.ndarray, tol: float) -> Optional[float]:
    """Earliest recorded time after which x stays within tol of target.

    Suffix check over the recorded samples ("enters and stays"), not the
    first crossing.  Returns None when the trajectory never settles.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    dist = np.linalg.norm(tr.x - target[None, :], axis=1)
    inside = dist <= tol
    if not inside[-1]:
        return None
    idx = len(inside)
    for i in range(len(inside) - 1, -1, -1):
        if inside[i]:
            idx = i
        else:
            break
    return float(tr.times[idx])


def sup_gap(a: Trajectory, b: Trajectory, component: str = "x") -> float:
    """Max over recorded times of the distance between state components.

    Both trajectories must share the time grid (run them with the same
    SimConfig); otherwise a :class:`GridMismatchError` is raised.
    """
    if a.times.size != b.times.size or not np.array_equal(a.times, b.times):
        raise GridMismatchError("trajectories were recorded on different time grids")
    pa = a.component(component)
    pb = b.component(component)
    if pa.shape != pb.shape:
        raise GridMismatchError(f"component {component!r} shapes differ: {pa.shape} vs {pb.shape}")
    return float(np.linalg.norm(pa - pb, axis=1).max())


def set_config_path(obj, path: str, value) -> None:
    """Assign into a nested attribute/key path like 'gains.k' or 'sim.x0[1]'.

    Intermediate segments may be attributes or mapping keys; a trailing
    [i] indexes into a sequence or array.
    """
    parts = path.split(".")
    for j, part in enumerate(parts):
        index = None
        if part.endswith("]"):
            part, _, idx = part[:-1].partition("[")
            index = int(idx)
        last = j == len(parts) - 1

        def get(o, name):
            if isinstance(o, Mapping):
                return o[name]
            return getattr(o, name)

        if last:
            if index is not None:
                container = get(obj, part)
                container[index] = value
            elif isinstance(obj, dict):
                if part not in obj:
                    raise KeyError(f"config path {path!r}: unknown key {part!r}")
                obj[part] = value
            else:
                if not hasattr(obj, part):
                    raise AttributeError(f"config path {path!r}: unknown field {part!r}")
                setattr(obj, part, value)
        else:
            obj = get(obj, part)
            if index is not None:
                obj = obj[index]


@dataclass
class SweepRow:
    """One sweep result: parameter value, metrics, or a failure note."""

    value: float
    settling_time: Optional[float] = None
    final_err: Optional[float] = None
    sup_gap: Optional[float] = None
    error: Optional[str] = None


def sweep(base_config, param_path: str, values: Iterable[float],
          run_one: Callable[[object], SweepRow]) -> list[SweepRow]:
    """Run one experiment per parameter value against a copied base config.

    ``run_one`` receives the modified config copy and returns a
    :class:`SweepRow` (its ``value`` field is overwritten here).  A
    failing run is recorded in its row; remaining runs are unaffected.
    Output order follows the input values.
    """
    rows: list[SweepRow] = []
    for val in values:
        cfg = copy.deepcopy(base_config)
        try:
            set_config_path(cfg, param_path, val)
            row = run_one(cfg)
        except Exception as exc:  # noqa: BLE001 - failures belong in the row
            row = SweepRow(value=float(val), error=f"{type(exc).__name__}: {exc}")
        row.value = float(val)
        rows.append(row)
    return rows
