"""Command-line entry point: spreading speeds, shapes, simulations and checks.

Usage::

    roadspread speed --D 10 --theta-grid 181 --out results/
    roadspread shape --config run.toml
    roadspread simulate --dx 0.25 --T 40 --rays 0,0.5,1.2,1.5707963267948966
    roadspread verify --tol 1e-8

Configuration is a flat TOML file whose keys are the fields of
:class:`RunConfig`; command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import dispersion as ds
from . import geometry as geo
from . import pdesim as ps
from . import verify as vf
from .model import ModelParams, ParameterError, default_reaction, kpp_speed

log = logging.getLogger("roadspread")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

PARAM_KEYS = tuple(f.name for f in dataclasses.fields(ModelParams))

SPEED_COLUMNS = ["theta", "w_star", "alpha_star", "beta_star", "gamma", "phi_star",
                 "normal_speed", "w_star_derivative", "status"]
SHAPE_COLUMNS = ["theta_rad", "r", "n_x", "n_y", "label"]
GAP_COLUMNS = ["theta_rad", "w", "w_lower", "strip", "gap_lower", "gap_strip"]
TRACE_COLUMNS = ["theta", "t", "r", "trusted"]
SIM_SPEED_COLUMNS = ["theta", "speed", "quality", "n", "t_start", "t_end", "w_star", "rel_error", "status"]
VERIFY_COLUMNS = ["name", "passed", "margin", "detail"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    theta_grid: int = 181
    tol: float = 1e-8
    Lx: float = 60.0
    Ly: float = 60.0
    dx: float = 0.25
    T: float = 40.0
    rays: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.2, 0.5 * math.pi])
    cadence: float = 0.5
    r0: float = 2.0
    safety: float = 0.9
    level: float = 0.5
    window: float = 0.5
    r_min: float = 10.0
    snapshot_every: float = 0.0
    out: str = ""
    format: str = "csv"

    def __post_init__(self) -> None:
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.theta_grid < 1:
            raise ConfigError("theta_grid must be at least 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        for key in ("Lx", "Ly", "dx", "T", "cadence", "r0", "window"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if not 0 < self.safety <= 1:
            raise ConfigError("safety must lie in (0, 1]")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.r_min < 0 or self.snapshot_every < 0:
            raise ConfigError("r_min and snapshot_every must be non-negative")
        for th in self.rays:
            if abs(th) > 0.5 * math.pi + 1e-12:
                raise ConfigError(f"ray angle {th} outside [-pi/2, pi/2]")
        if self.out:
            path = Path(self.out)
            if path.exists() and not path.is_dir():
                raise ConfigError(f"output path {self.out} is not a directory")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        values = dict(values)
        known = {f.name for f in dataclasses.fields(cls)} - {"params"}
        unknown = set(values) - known - set(PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            params = ModelParams(**{k: float(values.pop(k)) for k in PARAM_KEYS if k in values})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if "rays" in values:
            values["rays"] = [float(r) for r in values["rays"]]
        return cls(params=params, **values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                return cls.from_mapping(tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_mapping(self) -> dict:
        out = dataclasses.asdict(self.params)
        for f in dataclasses.fields(self):
            if f.name != "params":
                out[f.name] = getattr(self, f.name)
        return out

    def to_toml(self) -> str:
        lines = []
        for key, value in self.to_mapping().items():
            if isinstance(value, str):
                text = json.dumps(value)
            elif isinstance(value, list):
                text = "[" + ", ".join(_toml_number(v) for v in value) + "]"
            else:
                text = _toml_number(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def thetas(self) -> np.ndarray:
        if self.theta_grid == 1:
            return np.array([0.5 * math.pi])
        return geo.theta_grid(self.theta_grid)


def _toml_number(value) -> str:
    if isinstance(value, bool) or isinstance(value, int):
        return str(int(value))
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    # repr round-trips floats exactly
    return repr(float(value))


# ---------------------------------------------------------------------------
# Commands return plain tables; emission is handled by ``main``.
# ---------------------------------------------------------------------------


def cmd_speed(config: RunConfig) -> list[dict]:
    rows = []
    for th in config.thetas():
        th = float(th)
        try:
            c = ds.w_star(config.params, th, config.tol)
        except (ds.SolverError, ValueError) as exc:
            log.warning("theta=%.6f: %s", th, exc)
            rows.append({k: math.nan for k in SPEED_COLUMNS} | {"theta": th, "status": f"failed: {exc}"})
            continue
        rows.append({
            "theta": th,
            "w_star": c.w_star,
            "alpha_star": c.alpha_star,
            "beta_star": c.beta_star,
            "gamma": c.gamma,
            "phi_star": c.phi_star,
            "normal_speed": ds.normal_speed(c),
            "w_star_derivative": ds.w_star_derivative(c),
            "status": "ok",
        })
    return rows


def cmd_shape(config: RunConfig) -> dict:
    """Shape tables: W, the lower shape and the strip envelope, their gaps and a summary."""
    n = max(config.theta_grid, 16)
    w = geo.expansion_shape(config.params, n, config.tol)
    lower = geo.lower_shape(config.params, n, c_star=float(w.radii[-1]))
    strip = geo.strip_shape(config.params, n)
    gap = geo.containment_gap(w, lower)
    gaps = [{
        "theta_rad": float(t),
        "w": float(rw),
        "w_lower": float(rl),
        "strip": float(rs),
        "gap_lower": float(rw - rl),
        "gap_strip": float(rs - rw),
    } for t, rw, rl, rs in zip(w.thetas, w.radii, lower.radii, strip.radii)]
    summary = geo.summary(config.params, w)
    summary.update({
        "convex": geo.is_convex(w),
        "gap_min": gap.min,
        "gap_max": gap.max,
        "theta_at_max_gap": gap.theta_at_max,
        "failed_nodes": int(np.count_nonzero(w.failed)),
    })
    return {"shape": w.rows() + lower.rows() + strip.rows(), "gaps": gaps, "summary": summary}


def cmd_simulate(config: RunConfig) -> dict:
    p = config.params
    reaction = default_reaction(p)
    grid = ps.Grid.from_spacing(config.Lx, config.Ly, config.dx)
    result = ps.run(p, reaction, grid, config.T, config.rays, config.cadence, r0=config.r0,
                    safety=config.safety, level=config.level,
                    snapshot_every=config.snapshot_every or None, stop_when_untrusted=True)
    traces = [{"theta": tr.theta, "t": t, "r": r, "trusted": ok}
              for tr in result.traces for t, r, ok in zip(tr.times, tr.radii, tr.trusted)]
    speeds = []
    for tr in result.traces:
        w = ds.w_star(p, tr.theta, config.tol).w_star
        try:
            fit = ps.measure_speed(tr, config.window, config.r_min)
        except ps.InsufficientSamplesError as exc:
            speeds.append({k: math.nan for k in SIM_SPEED_COLUMNS}
                          | {"theta": tr.theta, "w_star": w, "status": f"insufficient: {exc}"})
            continue
        speeds.append({
            "theta": tr.theta,
            "speed": fit.speed,
            "quality": fit.quality,
            "n": fit.n,
            "t_start": fit.t_start,
            "t_end": fit.t_end,
            "w_star": w,
            "rel_error": fit.speed / w - 1.0,
            "status": "flagged" if fit.flagged else "ok",
        })
    summary = {
        "c_K": kpp_speed(p),
        "dt": result.dt,
        "t_final": result.state.t,
        "nx": grid.nx,
        "ny": grid.ny,
        "bound_violations": result.bound_violations,
        "exit_time": result.exit_time,
    }
    return {"traces": traces, "speeds": speeds, "snapshots": result.snapshots, "summary": summary}


def cmd_verify(config: RunConfig) -> list[dict]:
    n = max(config.theta_grid, 16)
    return [c.as_row() for c in vf.run_suite(config.params, config.tol, n)]


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def write_table(rows: list[dict], columns: list[str], fmt: str, fh) -> None:
    if fmt == "json":
        json.dump([{k: row.get(k) for k in columns} for row in rows], fh, indent=1, default=_jsonable)
        fh.write("\n")
        return
    writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_value(row.get(k)) for k in columns})


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _emit(config: RunConfig, name: str, rows: list[dict], columns: list[str]) -> None:
    if not config.out:
        write_table(rows, columns, config.format, sys.stdout)
        return
    path = Path(config.out) / f"{name}.{config.format}"
    with open(path, "w", newline="") as fh:
        write_table(rows, columns, config.format, fh)


def _emit_summary(config: RunConfig, name: str, summary: dict) -> None:
    text = json.dumps(summary, indent=1, default=_jsonable)
    if config.out:
        (Path(config.out) / f"{name}.json").write_text(text + "\n")
    else:
        print(text)


def _emit_snapshots(config: RunConfig, snapshots: list[ps.SimState]) -> None:
    if not config.out:
        return
    for k, snap in enumerate(snapshots):
        X, Y = np.meshgrid(snap.grid.x, snap.grid.y)
        field_rows = [{"x": x, "y": y, "v": v} for x, y, v in
                      zip(X.ravel().tolist(), Y.ravel().tolist(), snap.v.ravel().tolist())]
        road_rows = [{"x": x, "u": u} for x, u in zip(snap.grid.x.tolist(), snap.u.tolist())]
        _emit(config, f"field_{k:04d}", field_rows, ["x", "y", "v"])
        _emit(config, f"road_{k:04d}", road_rows, ["x", "u"])


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat TOML file with run settings")
    common.add_argument("--out", metavar="DIR", help="directory for output files (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"], help="table format")
    common.add_argument("--theta-grid", dest="theta_grid", type=int, metavar="N",
                        help="number of angles on [-pi/2, pi/2]")
    common.add_argument("--tol", type=float, metavar="X", help="solver tolerance on the speed")
    common.add_argument("--save-config", metavar="PATH", help="write the effective config and continue")
    common.add_argument("-v", "--verbose", action="store_true")
    for key in PARAM_KEYS:
        common.add_argument(f"--{key}", type=float, metavar="X")

    parser = argparse.ArgumentParser(prog="roadspread", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("speed", parents=[common], help="spreading speed on an angle grid")
    sub.add_parser("shape", parents=[common], help="expansion shape, bounds and summary")
    sim = sub.add_parser("simulate", parents=[common], help="finite-difference run with fitted speeds")
    sim.add_argument("--Lx", type=float)
    sim.add_argument("--Ly", type=float)
    sim.add_argument("--dx", type=float)
    sim.add_argument("--T", type=float)
    sim.add_argument("--rays", type=_float_list, help="comma-separated ray angles")
    sim.add_argument("--cadence", type=float)
    sim.add_argument("--r0", type=float)
    sim.add_argument("--safety", type=float)
    sim.add_argument("--level", type=float)
    sim.add_argument("--window", type=float)
    sim.add_argument("--r-min", dest="r_min", type=float)
    sim.add_argument("--snapshot-every", dest="snapshot_every", type=float)
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        values = RunConfig.load(args.config).to_mapping()
    skip = {"command", "config", "save_config", "verbose"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            values[key] = value
    return RunConfig.from_mapping(values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        if config.out:
            Path(config.out).mkdir(parents=True, exist_ok=True)
        if args.save_config:
            Path(args.save_config).write_text(config.to_toml())
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "speed":
            _emit(config, "speed", cmd_speed(config), SPEED_COLUMNS)
        elif args.command == "shape":
            result = cmd_shape(config)
            _emit(config, "shape", result["shape"], SHAPE_COLUMNS)
            _emit(config, "gaps", result["gaps"], GAP_COLUMNS)
            _emit_summary(config, "summary", result["summary"])
        elif args.command == "simulate":
            result = cmd_simulate(config)
            _emit(config, "traces", result["traces"], TRACE_COLUMNS)
            _emit(config, "speeds", result["speeds"], SIM_SPEED_COLUMNS)
            _emit_snapshots(config, result["snapshots"])
            _emit_summary(config, "summary", result["summary"])
        else:
            rows = cmd_verify(config)
            for row in rows:
                status = "PASS" if row["passed"] else "FAIL"
                print(f"{status} {row['name']}: margin {row['margin']:.3e} {row['detail']}", file=sys.stderr)
            _emit(config, "verify", rows, VERIFY_COLUMNS)
            if not all(row["passed"] for row in rows):
                return EXIT_VERIFY
    except ps.InstabilityError as exc:
        print(f"simulation unstable: {exc} (last stable time {exc.last_stable})", file=sys.stderr)
        return EXIT_SOLVER
    except ds.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
