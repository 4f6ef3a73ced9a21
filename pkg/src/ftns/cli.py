"""Config-driven command line front end.

Commands::

    ftns run      --config exp.cfg [--system esc|target|averaged] [--out DIR]
    ftns compare  --config exp.cfg [--out DIR]
    ftns sweep    --config exp.cfg --param gains.k --values 1,2,4 [--system S] [--out DIR]
    ftns validate --config exp.cfg

Configs are flat-sectioned TOML; see data/paper_sec4.cfg for the
bundled reference experiment.  Each run writes a CSV of the recorded
trajectory plus a .meta text file (echoed config, the step size
actually used, tool version, wall-clock duration) sufficient to
reproduce the run bit-exactly.

Exit codes: 0 success, 2 config/validation error, 3 numeric abort,
4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, controller, dither, flows, plant, sim

#: Relative eigenvalue floor applied to the Hessian estimate when the
#: optional projection is enabled in a config.
HESSIAN_FLOOR_REL = 1e-3

SYSTEMS = ("esc", "target", "averaged")


class ConfigError(ValueError):
    """Carries every problem found in a config file, not just the first."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    """A parsed and validated experiment description."""

    cost: plant.CostModel
    dither: dither.DitherSpec
    flow: flows.FlowParams
    gains: controller.GainSet
    t_end: float
    dt: Optional[float]
    x0: np.ndarray
    v0: np.ndarray
    xi0: np.ndarray
    settle_tol: float
    record_stride: int
    hessian_floor: bool
    out_dir: Path
    prefix: str
    raw: dict
    raw_text: str

    @property
    def n(self) -> int:
        return self.cost.dim

    @property
    def settle_target(self) -> Optional[np.ndarray]:
        if isinstance(self.cost, plant.QuadraticCost):
            return self.cost.xstar
        return None


def bundled_config_path(name: str = "paper_sec4.cfg") -> Path:
    """Filesystem path of a config shipped with the package."""
    return Path(str(resources.files("ftns").joinpath("data", name)))


class _SectionReader:
    """Pulls typed keys out of one config section, accumulating errors."""

    def __init__(self, section: str, data: dict, errors: list[str]):
        self.section = section
        self.data = data
        self.errors = errors

    def fail(self, key: str, msg: str) -> None:
        self.errors.append(f"{self.section}.{key}: {msg}")

    def get(self, key: str, kind: str, required: bool = True, default=None):
        if key not in self.data:
            if required:
                self.fail(key, "missing required key")
            return default
        val = self.data[key]
        try:
            if kind == "float":
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise TypeError
                return float(val)
            if kind == "int":
                if isinstance(val, bool) or not isinstance(val, int):
                    raise TypeError
                return int(val)
            if kind == "bool":
                if not isinstance(val, bool):
                    raise TypeError
                return bool(val)
            if kind == "str":
                if not isinstance(val, str):
                    raise TypeError
                return str(val)
            if kind == "vector":
                arr = np.asarray(val, dtype=float)
                if arr.ndim != 1:
                    raise TypeError
                return arr
            if kind == "matrix":
                arr = np.asarray(val, dtype=float)
                if arr.ndim != 2:
                    raise TypeError
                return arr
            if kind == "scalar_or_vector":
                arr = np.atleast_1d(np.asarray(val, dtype=float))
                if arr.ndim != 1:
                    raise TypeError
                return arr
        except (TypeError, ValueError):
            self.fail(key, f"expected {kind}, got {val!r}")
            return default
        raise AssertionError(f"unknown kind {kind}")


def _build_experiment(raw: dict, raw_text: str) -> ExperimentConfig:
    errors: list[str] = []

    for section in ("cost", "dither", "flow", "gains", "sim", "output"):
        if section not in raw or not isinstance(raw.get(section), dict):
            errors.append(f"{section}: missing section")
    if errors:
        raise ConfigError(errors)

    # cost
    r = _SectionReader("cost", raw["cost"], errors)
    kind = r.get("kind", "str")
    cost = None
    if kind == "quadratic":
        hstar = r.get("hstar", "matrix")
        xstar = r.get("xstar", "vector")
        ystar = r.get("ystar", "float")
        if hstar is not None and xstar is not None and ystar is not None:
            try:
                cost = plant.QuadraticCost(hstar=hstar, xstar=xstar, ystar=ystar)
            except plant.ModelError as exc:
                r.fail("hstar", str(exc))
    elif kind == "polynomial":
        expo = raw["cost"].get("exponents")
        coef = r.get("coefficients", "vector")
        if expo is None:
            r.fail("exponents", "missing required key")
        elif coef is not None:
            try:
                cost = plant.PolynomialCost(exponents=np.asarray(expo), coefficients=coef)
            except (plant.ModelError, ValueError) as exc:
                r.fail("exponents", str(exc))
    elif kind is not None:
        r.fail("kind", f"must be 'quadratic' or 'polynomial', got {kind!r}")

    # dither
    r = _SectionReader("dither", raw["dither"], errors)
    a = r.get("a", "float")
    omegas = r.get("omegas", "vector")
    offdiag = r.get("offdiag_scale", "float", required=False)
    dspec = None
    if a is not None and omegas is not None:
        try:
            dspec = dither.DitherSpec(a=a, omegas=omegas, offdiag_scale=offdiag)
        except dither.FrequencyError as exc:
            r.fail("omegas", str(exc))

    # flow
    r = _SectionReader("flow", raw["flow"], errors)
    q1 = r.get("q1", "float")
    q2 = r.get("q2", "float")
    c1 = r.get("c1", "float")
    c2 = r.get("c2", "float")
    sing_eps = r.get("sing_eps", "float", required=False, default=1e-12)
    flowp = None
    if None not in (q1, q2, c1, c2):
        try:
            flowp = flows.FlowParams.from_q(q1, q2, c1, c2, sing_eps=sing_eps)
        except flows.ParameterError as exc:
            r.fail("q1", str(exc))

    # gains
    r = _SectionReader("gains", raw["gains"], errors)
    k = r.get("k", "float")
    K = r.get("K", "float")
    K2 = r.get("K2", "float")
    gains = None
    if None not in (k, K, K2):
        try:
            gains = controller.GainSet(k=k, K=K, K2=K2)
        except ValueError as exc:
            r.fail("k", str(exc))

    # sim
    r = _SectionReader("sim", raw["sim"], errors)
    t_end = r.get("t_end", "float")
    dt = r.get("dt", "float", required=False)
    x0 = r.get("x0", "vector")
    v0 = r.get("v0", "scalar_or_vector")
    xi0 = r.get("xi0", "vector", required=False)
    settle_tol = r.get("settle_tol", "float")
    record_stride = r.get("record_stride", "int", required=False, default=1)
    hessian_floor = r.get("hessian_floor", "bool", required=False, default=False)
    if t_end is not None and t_end < 0.0:
        r.fail("t_end", f"must be nonnegative, got {t_end!r}")
    if dt is not None and dt <= 0.0:
        r.fail("dt", f"must be positive, got {dt!r}")

    # output
    r = _SectionReader("output", raw["output"], errors)
    directory = r.get("directory", "str")
    prefix = r.get("prefix", "str")

    # cross-section consistency
    n = cost.dim if cost is not None else None
    if n is not None:
        if dspec is not None and dspec.n != n:
            errors.append(f"dither.omegas: {dspec.n} frequencies for a dimension-{n} cost")
        if x0 is not None and x0.size != n:
            errors.append(f"sim.x0: length {x0.size}, expected {n}")
        if v0 is not None:
            if v0.size == 1:
                v0 = np.full(n, float(v0[0]))   # scalar seed broadcast to all components
            elif v0.size != n:
                errors.append(f"sim.v0: length {v0.size}, expected {n} (or a scalar)")
        m_len = dither.sym_size(n)
        if xi0 is None:
            xi0 = dither.vec_sym(np.eye(n))
        elif xi0.size != m_len:
            errors.append(f"sim.xi0: length {xi0.size}, expected {m_len}")
    if dspec is not None and n is not None and dspec.n == n:
        for v in dither.validate_freqs(dspec, n):
            errors.append(f"dither.omegas: [{v.code}] {v.message}")

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        cost=cost, dither=dspec, flow=flowp, gains=gains,
        t_end=t_end, dt=dt, x0=x0, v0=v0, xi0=xi0,
        settle_tol=settle_tol, record_stride=record_stride,
        hessian_floor=hessian_floor,
        out_dir=Path(directory), prefix=prefix,
        raw=raw, raw_text=raw_text,
    )


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file.

    Raises :class:`ConfigError` carrying the full list of problems
    (missing keys, type mismatches, dimension mismatches, frequency
    validation failures), each tagged with its section.key location.
    """
    path = Path(path)
    try:
        raw_text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    try:
        raw = tomllib.loads(raw_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"config: TOML syntax error: {exc}"]) from exc
    return _build_experiment(raw, raw_text)


# --- running ----------------------------------------------------------------


def dt_for_system(cfg: ExperimentConfig, system: str) -> float:
    """Step size for a run: explicit config value, else a per-system default.

    The dither-driven systems default to common_period/64 so the fastest
    probe cycle is well resolved; the target flow carries no dither and
    defaults to 1e-4, small enough to track its finite-time settling.
    """
    if cfg.dt is not None:
        return cfg.dt
    if system == "target":
        return 1e-4
    return dither.common_period(cfg.dither) / 64.0


def _check_dt(cfg: ExperimentConfig, system: str, dt: float) -> None:
    if system == "esc":
        limit = dither.common_period(cfg.dither) / 32.0
        if dt > limit:
            raise ConfigError(
                [f"sim.dt: {dt!r} exceeds common_period/32 = {limit!r} for the esc system"])


def _initial_state(cfg: ExperimentConfig, system: str) -> np.ndarray:
    if system == "target":
        return np.concatenate([cfg.x0, cfg.v0])
    return np.concatenate([cfg.x0, cfg.v0, cfg.xi0])


def _make_rhs(cfg: ExperimentConfig, system: str):
    pd_floor = HESSIAN_FLOOR_REL if cfg.hessian_floor else None
    if system == "esc":
        return controller.make_esc_rhs(cfg.gains, cfg.flow, cfg.dither, cfg.cost, pd_floor)
    if system == "averaged":
        return controller.make_averaged_rhs(cfg.gains, cfg.flow, cfg.dither, cfg.cost, pd_floor)
    if system == "target":
        return controller.make_target_rhs(cfg.gains, cfg.flow, cfg.cost)
    raise ValueError(f"unknown system {system!r}")


def run_system(cfg: ExperimentConfig, system: str,
               dt: Optional[float] = None) -> tuple[sim.Trajectory, float]:
    """Integrate one system of the experiment; returns (trajectory, dt used)."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}")
    dt_used = dt if dt is not None else dt_for_system(cfg, system)
    _check_dt(cfg, system, dt_used)
    scfg = sim.SimConfig(
        t_end=cfg.t_end, dt=dt_used, record_stride=cfg.record_stride,
        settle_tol=cfg.settle_tol, settle_target=cfg.settle_target)
    rhs = _make_rhs(cfg, system)
    chans = controller.monitor_channels(cfg.cost, system)
    tr = sim.integrate(rhs, _initial_state(cfg, system), scfg, channels=chans, n=cfg.n)
    return tr, dt_used


CHANNEL_ORDER = ("y", "V1", "V2", "V3", "err_x", "err_xi")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def csv_header(n: int) -> str:
    m = dither.sym_size(n)
    cols = ["t"]
    cols += [f"x{i+1}" for i in range(n)]
    cols += [f"v{i+1}" for i in range(n)]
    cols += [f"xi{i+1}" for i in range(m)]
    cols += list(CHANNEL_ORDER)
    return ",".join(cols)


def write_trajectory_csv(path: Path, tr: sim.Trajectory, n: int) -> None:
    """Stable CSV schema: t, x*, v*, xi*, then the monitor channels.

    Target-system rows carry the literal token nan in the xi block and
    in monitors that need it, keeping one schema across systems.  Full
    round-trip precision (17 significant digits) so downstream plotting
    and regression tests are not limited by serialization.
    """
    m = dither.sym_size(n)
    lines = [csv_header(n)]
    nan_xi = ["nan"] * m
    for i in range(tr.times.size):
        row = [_fmt(tr.times[i])]
        row += [_fmt(v) for v in tr.states[i, :2 * n]]
        if tr.states.shape[1] >= 2 * n + m:
            row += [_fmt(v) for v in tr.states[i, 2 * n:2 * n + m]]
        else:
            row += nan_xi
        row += [_fmt(tr.channels[name][i]) for name in CHANNEL_ORDER]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_meta(path: Path, cfg: ExperimentConfig, command: str, system: str,
               dt_used: float, steps: int, wall_s: float) -> None:
    lines = [
        f"tool: ftns {__version__}",
        f"command: {command}",
        f"system: {system}",
        f"dt_used: {_fmt(dt_used)}",
        f"steps: {steps}",
        f"record_stride: {cfg.record_stride}",
        f"hessian_floor: {str(cfg.hessian_floor).lower()}",
        f"wall_clock_s: {wall_s:.3f}",
        "--- config (verbatim) ---",
        cfg.raw_text,
    ]
    path.write_text("\n".join(lines))


def _prepare_outdir(cfg: ExperimentConfig, out_dir: Optional[str]) -> Path:
    out = Path(out_dir) if out_dir else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: ExperimentConfig, system: str, out_dir: Optional[str] = None) -> int:
    """Integrate one system and write <prefix>_<system>.csv and .meta."""
    out = _prepare_outdir(cfg, out_dir)
    t0 = time.perf_counter()
    try:
        tr, dt_used = run_system(cfg, system)
    except sim.NonFiniteStateError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0
    # explicit name assembly: prefixes may contain dots, so with_suffix is unsafe
    write_trajectory_csv(out / f"{cfg.prefix}_{system}.csv", tr, cfg.n)
    write_meta(out / f"{cfg.prefix}_{system}.meta", cfg, "run", system, dt_used,
               int(round(cfg.t_end / dt_used)), wall)
    return 0


def cmd_compare(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> int:
    """Run esc and averaged on one grid; write both CSVs plus the gap series."""
    out = _prepare_outdir(cfg, out_dir)
    dt_used = dt_for_system(cfg, "esc")
    t0 = time.perf_counter()
    try:
        tr_esc, _ = run_system(cfg, "esc", dt=dt_used)
        tr_avg, _ = run_system(cfg, "averaged", dt=dt_used)
    except sim.NonFiniteStateError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0
    write_trajectory_csv(out / f"{cfg.prefix}_esc.csv", tr_esc, cfg.n)
    write_trajectory_csv(out / f"{cfg.prefix}_averaged.csv", tr_avg, cfg.n)
    gap = np.linalg.norm(tr_esc.x - tr_avg.x, axis=1)
    lines = ["t,gap"] + [f"{_fmt(t)},{_fmt(gv)}" for t, gv in zip(tr_esc.times, gap)]
    (out / f"{cfg.prefix}_gap.csv").write_text("\n".join(lines) + "\n")
    for system in ("esc", "averaged"):
        write_meta(out / f"{cfg.prefix}_{system}.meta", cfg, "compare", system,
                   dt_used, int(round(cfg.t_end / dt_used)), wall)
    print(f"sup gap (x): {_fmt(sup_gap_value(tr_esc, tr_avg))}")
    return 0


def sup_gap_value(tr_a: sim.Trajectory, tr_b: sim.Trajectory) -> float:
    return sim.sup_gap(tr_a, tr_b, component="x")


def _sweep_runner(raw_text: str, system: str):
    def run_one(raw_modified: dict) -> sim.SweepRow:
        cfg = _build_experiment(raw_modified, raw_text)
        tr, _ = run_system(cfg, system)
        target = cfg.settle_target
        if target is None:
            raise ConfigError(["sweep: settling requires a quadratic cost model"])
        settle = sim.settling_time(tr, target, cfg.settle_tol)
        final_err = float(np.linalg.norm(tr.x[-1] - target))
        return sim.SweepRow(value=0.0, settling_time=settle, final_err=final_err)

    return run_one


def cmd_sweep(cfg: ExperimentConfig, param: str, values: Sequence[float],
              system: str = "esc", out_dir: Optional[str] = None) -> int:
    """One run per value of a dotted config path; write <prefix>_sweep.csv."""
    out = _prepare_outdir(cfg, out_dir)
    t0 = time.perf_counter()
    rows = sim.sweep(cfg.raw, param, values, _sweep_runner(cfg.raw_text, system))
    wall = time.perf_counter() - t0
    lines = ["value,settling_time,final_err"]
    for row in rows:
        st = _fmt(row.settling_time) if row.settling_time is not None else "nan"
        fe = _fmt(row.final_err) if row.final_err is not None else "nan"
        lines.append(f"{_fmt(row.value)},{st},{fe}")
        if row.error:
            print(f"value {row.value}: {row.error}", file=sys.stderr)
    (out / f"{cfg.prefix}_sweep.csv").write_text("\n".join(lines) + "\n")
    write_meta(out / f"{cfg.prefix}_sweep.meta", cfg, f"sweep {param}", system,
               dt_for_system(cfg, system), len(rows), wall)
    return 0


def cmd_validate(cfg: ExperimentConfig) -> int:
    """Re-check the config and the demodulation identities; print a report."""
    failures = 0

    def report(ok: bool, msg: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {msg}")
        failures += 0 if ok else 1

    report(True, f"config sections complete, dimension n={cfg.n}")
    violations = dither.validate_freqs(cfg.dither, cfg.n)
    report(not violations,
           "frequency set valid" if not violations
           else "frequency set: " + "; ".join(v.message for v in violations))

    if isinstance(cfg.cost, plant.QuadraticCost):
        d1_avg, d2_avg = dither.averaged_demod(cfg.cost, cfg.x0, cfg.dither)
        g_exact = cfg.cost.gradient(cfg.x0)
        xi_exact = dither.vec_sym(cfg.cost.hstar)
        g_err = float(np.linalg.norm(d1_avg - g_exact) / max(1.0, np.linalg.norm(g_exact)))
        h_err = float(np.linalg.norm(d2_avg - xi_exact) / np.linalg.norm(xi_exact))
        report(g_err <= dither.ORACLE_RTOL,
               f"gradient demodulation at x0, relative error {g_err:.3e}")
        report(h_err <= dither.ORACLE_RTOL,
               f"Hessian demodulation at x0, relative error {h_err:.3e}")
    else:
        lam = plant.min_hessian_eig_sampled(cfg.cost)
        if lam <= 0.0:
            print(f"WARN  sampled Hessian eigenvalue {lam:.3e} <= 0; "
                  "positive curvature is assumed by the design")
        report(True, "polynomial cost: demodulation identities hold to O(a) only")

    dt_esc = dt_for_system(cfg, "esc")
    limit = dither.common_period(cfg.dither) / 32.0
    report(dt_esc <= limit, f"esc step {dt_esc:.6g} <= common_period/32 = {limit:.6g}")
    return 0 if failures == 0 else 2


# --- entry point ------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ftns",
                                 description="finite-time Newton seeking simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config file (TOML)")
        p.add_argument("--out", default=None, help="output directory override")

    p_run = sub.add_parser("run", help="integrate one system")
    add_common(p_run)
    p_run.add_argument("--system", choices=SYSTEMS, default="esc")

    p_cmp = sub.add_parser("compare", help="esc vs averaged on one grid")
    add_common(p_cmp)

    p_swp = sub.add_parser("sweep", help="repeat a run over parameter values")
    add_common(p_swp)
    p_swp.add_argument("--param", required=True, help="dotted config path, e.g. gains.k")
    p_swp.add_argument("--values", required=True, help="comma-separated numbers")
    p_swp.add_argument("--system", choices=SYSTEMS, default="esc")

    p_val = sub.add_parser("validate", help="check a config and its dither identities")
    p_val.add_argument("--config", required=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            return cmd_run(cfg, args.system, args.out)
        if args.command == "compare":
            return cmd_compare(cfg, args.out)
        if args.command == "sweep":
            try:
                values = [float(s) for s in args.values.split(",") if s.strip()]
            except ValueError:
                print(f"error: --values must be numbers, got {args.values!r}", file=sys.stderr)
                return 2
            return cmd_sweep(cfg, args.param, values, args.system, args.out)
        if args.command == "validate":
            return cmd_validate(cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
