"""Command-line driver: single runs, parameter sweeps and file output.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure (also
used when any item of a sweep fails).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import assembly, geometry, postprocess, problems, solver, stencil
from .errors import NUMERICAL_ERRORS, ConfigError, STGFDMError

log = logging.getLogger("stgfdm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
OUT_ENV = "STGFDM_OUT"


@dataclass
class RunConfig:
    """Everything one solve needs.  ``None`` means "use the example's value"."""

    example: int = 1
    nx: int = 16
    dt: Optional[float] = None
    m: int = 60
    t_report: Optional[float] = None
    ratio: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    traction_form: str = "stress"
    time_scale: Union[str, float] = "auto"
    cull_factor: float = 0.25
    pitch_factor: float = 1.0
    min_nodes: Optional[int] = None
    band: Optional[float] = None  # <= 0 switches the graded side-1 band off
    level: Optional[int] = None
    solver: str = "direct"
    space_time_gradient: bool = False
    out: Optional[str] = None
    dump_cloud: bool = False
    dump_stars: bool = False
    dump_system: bool = False
    vtk: bool = False
    write_fields: bool = True
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.example not in (1, 2, 3, 4, 5):
            raise ConfigError(f"example must be 1..5, got {self.example}")
        if self.m < 10:
            raise ConfigError(f"m must be at least 10, got {self.m}")
        if self.nx < 4:
            raise ConfigError(f"nx must be at least 4, got {self.nx}")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        T = problems.example(self.example).T
        if self.dt is not None and not (0 < self.dt <= T):
            raise ConfigError(f"dt must satisfy 0 < dt <= {T}, got {self.dt}")
        if self.t_report is not None and not (0 <= self.t_report <= T):
            raise ConfigError(f"t_report outside [0, {T}]")
        for name in ("ratio", "beta1", "beta2", "rho1", "rho2"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive")
        if self.traction_form not in ("stress", "printed"):
            raise ConfigError(f"unknown traction form {self.traction_form!r}")
        if self.solver not in ("direct", "pardiso", "superlu", "gmres"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if not (isinstance(self.time_scale, str) and self.time_scale == "auto"):
            try:
                ok = float(self.time_scale) > 0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError("time_scale must be 'auto' or a positive number")
        return self

    def problem(self) -> problems.ProblemSpec:
        spec = problems.example(self.example)
        if self.ratio is not None:
            spec = spec.with_ratio(self.ratio)
        coeffs = {k: getattr(self, k) for k in ("beta1", "beta2", "rho1", "rho2")
                  if getattr(self, k) is not None}
        if coeffs:
            spec = spec.with_coefficients(**coeffs)
        ref = spec.refine
        if self.min_nodes is not None:
            ref = dataclasses.replace(ref, min_nodes=self.min_nodes)
        if self.band is not None:
            ref = dataclasses.replace(ref, band=self.band if self.band > 0 else None)
        if self.level is not None:
            ref = dataclasses.replace(ref, level=self.level)
        if self.dt is not None:
            spec = dataclasses.replace(spec, dt=self.dt)
        return dataclasses.replace(spec, refine=ref)

    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or "results")


@dataclass
class RunResult:
    config: RunConfig
    problem: problems.ProblemSpec
    cloud: geometry.PointCloud
    stencils: stencil.StencilSet
    system: assembly.SparseSystem
    solve: solver.SolveReport
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    report: postprocess.ErrorReport
    files: dict = field(default_factory=dict)


def run(config: RunConfig, write: Optional[bool] = None) -> RunResult:
    """Build, assemble, solve and measure one configuration.

    Files are written when ``config.out`` is set (or ``write=True``).  The
    reported wall time covers assembly and solve only.
    """
    config.validate()
    spec = config.problem()
    try:
        domain = spec.domain(config.nx)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ts = config.time_scale if isinstance(config.time_scale, str) else float(config.time_scale)
    cloud = geometry.generate_cloud(domain, spec.interface, spec.refine, m=config.m,
                                    cull_factor=config.cull_factor,
                                    pitch_factor=config.pitch_factor)
    stars = stencil.build_stencils(cloud, config.m, time_scale=ts)
    t0 = time.perf_counter()
    system = assembly.assemble(cloud, stars, spec, traction_form=config.traction_form)
    rep = solver.solve(system, solver.SolverOptions(method=config.solver))
    wall = time.perf_counter() - t0
    u, v, p = system.unknowns.split(rep.solution)
    meta = {"example": config.example, "m": config.m, "ratio": spec.ratio, "nx": config.nx,
            "dt": domain.dt, "level": cloud.level, "t_report": config.t_report,
            "solver": rep.backend, "relative_residual": rep.relative_residual}
    report = postprocess.error_report(cloud, stars, u, v, p, spec, config.t_report, wall, meta,
                                      config.space_time_gradient)
    result = RunResult(config, spec, cloud, stars, system, rep, u, v, p, report)
    if write or (write is None and config.out is not None):
        write_outputs(result)
    return result


def write_outputs(result: RunResult) -> dict:
    cfg = result.config
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    files = {"errors": postprocess.write_errors_csv([result.report], out / "errors.csv")}
    if cfg.write_fields:
        files["field"] = postprocess.write_field_csv(result.cloud, result.problem, result.u,
                                                     result.v, result.p, out / "field.csv")
    if cfg.dump_cloud:
        files["cloud"] = out / "cloud.csv"
        geometry.write_cloud_csv(result.cloud, files["cloud"])
    if cfg.dump_stars:
        files["stars"] = out / "stars.csv"
        stencil.write_stars_csv(result.cloud, result.stencils, files["stars"])
    if cfg.dump_system:
        files["system"] = out / "system.mtx"
        assembly.write_matrix_market(result.system, files["system"])
    if cfg.vtk:
        files["vtk"] = postprocess.write_vtk(
            result.cloud, {"u": result.u, "v": result.v, "p": result.p}, out / "solution.vtk")
    result.files = files
    return files


# ------------------------------------------------------------------ sweeps

SWEEP_AXES = ("m", "ratio", "nx")
ORDER_KEYS = ("u", "v", "p", "u1", "v1", "u2", "v2")


@dataclass
class SweepItem:
    value: float
    config: RunConfig
    report: Optional[postprocess.ErrorReport] = None
    error: Optional[str] = None


@dataclass
class SweepResult:
    axis: str
    items: list
    orders: dict  # (key, norm) -> list of orders between consecutive items
    path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return all(it.error is None for it in self.items)


def _sweep_worker(cfg: RunConfig):
    try:
        res = run(dataclasses.replace(cfg, out=None), write=False)
        return res.report, None
    except STGFDMError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep_configs(base: RunConfig, axis: str, values, couple_dt: bool = True):
    """One config per value.  On the nx axis dt shrinks with the spacing
    (``dt_k = dt_0 * nx_0 / nx_k``) unless ``couple_dt`` is False."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    cfgs = []
    for val in values:
        if axis == "nx":
            cfg = dataclasses.replace(base, nx=int(val))
            if couple_dt:
                dt0 = base.dt if base.dt is not None else problems.example(base.example).dt
                cfg.dt = dt0 * values[0] / int(val)
        elif axis == "m":
            cfg = dataclasses.replace(base, m=int(val))
        else:
            cfg = dataclasses.replace(base, ratio=float(val))
        cfgs.append(cfg)
    return cfgs


def sweep(base: RunConfig, axis: str, values, jobs: Optional[int] = None,
          couple_dt: bool = True, path=None) -> SweepResult:
    """Run every value independently; a failed item is recorded and the
    sweep goes on.  Writes ``sweep_<axis>.csv`` when ``base.out`` or ``path``
    is set."""
    cfgs = sweep_configs(base, axis, values, couple_dt)
    values = list(values)
    items = []
    for val, cfg in zip(values, cfgs):
        try:
            cfg.validate()
            items.append(SweepItem(val, cfg))
        except ConfigError as exc:
            items.append(SweepItem(val, cfg, error=f"ConfigError: {exc}"))
    todo = [it for it in items if it.error is None]
    jobs = jobs or base.jobs
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_worker, [it.config for it in todo]))
    else:
        outcomes = [_sweep_worker(it.config) for it in todo]
    for it, (rep, err) in zip(todo, outcomes):
        it.report, it.error = rep, err
        if err:
            log.warning("sweep item %s=%s failed: %s", axis, it.value, err)

    orders = {}
    if axis == "nx":
        for key in ORDER_KEYS:
            for norm in ("L2", "H1"):
                seq = [None]
                for a, b in zip(items, items[1:]):
                    try:
                        seq.append(postprocess.convergence_order(
                            getattr(a.report[key], norm), getattr(b.report[key], norm)))
                    except (AttributeError, TypeError, KeyError, ValueError):
                        seq.append(None)
                orders[(key, norm)] = seq
    result = SweepResult(axis, items, orders)
    if path is not None or base.out is not None:
        target = Path(path) if path is not None else base.out_dir() / f"sweep_{axis}.csv"
        result.path = write_sweep_csv(result, target)
    return result


def write_sweep_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order_cols = [f"order_{k}_{n}" for k, n in result.orders]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"sweep_{result.axis}"] + postprocess.ERROR_COLUMNS + order_cols + ["status"])
        for i, it in enumerate(result.items):
            if it.report is not None:
                row = postprocess.error_row(it.report)
                status = "ok"
            else:
                row = [str(it.config.example), "", str(it.config.m),
                       "" if it.config.ratio is None else str(it.config.ratio)]
                row += [""] * (len(postprocess.ERROR_COLUMNS) - len(row))
                status = it.error
            orders = []
            for key in result.orders:
                o = result.orders[key][i]
                orders.append("" if o is None else f"{o:.4f}")
            w.writerow([f"{it.value:g}"] + row + orders + [status])
    return path


# ------------------------------------------------------------------ CLI

_FLOAT_KEYS = {"dt", "t_report", "ratio", "beta1", "beta2", "rho1", "rho2",
               "cull_factor", "pitch_factor", "band"}
_INT_KEYS = {"example", "nx", "m", "min_nodes", "level", "jobs"}
_BOOL_KEYS = {"dump_cloud", "dump_stars", "dump_system", "vtk", "space_time_gradient",
              "write_fields"}
_STR_KEYS = {"traction_form", "solver", "out", "time_scale", "sweep", "values"}


def _coerce(key, raw):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _BOOL_KEYS:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if key in _STR_KEYS:
        return str(raw)
    raise ConfigError(f"unknown config key {key!r}")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stgfdm", description="Space-time GFDM solver for the moving-interface "
                "Stokes/parabolic benchmark problems.")
    S = argparse.SUPPRESS
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--example", type=int, default=S, help="benchmark problem 1..5")
    p.add_argument("--nx", type=int, default=S, help="spatial divisions per unit length")
    p.add_argument("--dt", type=float, default=S, help="time step (default: the example's)")
    p.add_argument("--m", type=int, default=S, help="neighbours per star")
    p.add_argument("--t-report", type=float, default=S,
                   help="measure errors on the slab [t-dt/2, t+dt/2] only")
    p.add_argument("--ratio", type=float, default=S, help="beta1/beta2 = rho1/rho2")
    for name in ("beta1", "beta2", "rho1", "rho2"):
        p.add_argument(f"--{name}", type=float, default=S)
    p.add_argument("--out", default=S, help=f"output directory (default ${OUT_ENV} or ./results)")
    p.add_argument("--dump-cloud", action="store_true", default=S)
    p.add_argument("--dump-stars", action="store_true", default=S)
    p.add_argument("--dump-system", action="store_true", default=S)
    p.add_argument("--vtk", action="store_true", default=S, help="also write legacy VTK")
    p.add_argument("--space-time-gradient", action="store_true", default=S,
                   help="include the t derivative in the H1 semi-norm")
    p.add_argument("--jobs", type=int, default=S, help="worker processes for sweeps")
    p.add_argument("--traction-form", choices=("stress", "printed"), default=S)
    p.add_argument("--solver", choices=("direct", "pardiso", "superlu", "gmres"), default=S)
    p.add_argument("--time-scale", default=S, help="'auto' or a positive number")
    p.add_argument("--cull-factor", type=float, default=S)
    p.add_argument("--pitch-factor", type=float, default=S)
    p.add_argument("--min-nodes", type=int, default=S)
    p.add_argument("--band", type=float, default=S)
    p.add_argument("--level", type=int, default=S)
    p.add_argument("--sweep", choices=SWEEP_AXES, default=S, help="sweep one parameter")
    p.add_argument("--values", default=S, help="comma-separated sweep values")
    p.add_argument("--fixed-dt", action="store_true",
                   help="keep dt fixed in an nx sweep instead of scaling it with 1/nx")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(argv=None):
    args = vars(build_parser().parse_args(argv))
    settings = {}
    if args.get("config"):
        settings.update(read_config_file(args["config"]))
    for key, val in args.items():
        if key in ("config", "verbose", "fixed_dt"):
            continue
        settings[key] = val
    sweep_axis = settings.pop("sweep", None)
    values = settings.pop("values", None)
    ts = settings.get("time_scale")
    if ts is not None and ts != "auto":
        try:
            settings["time_scale"] = float(ts)
        except ValueError as exc:
            raise ConfigError(f"bad time scale {ts!r}") from exc
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(settings) - known
    if unknown:
        raise ConfigError(f"unknown setting(s): {', '.join(sorted(unknown))}")
    cfg = RunConfig(**settings)
    if sweep_axis is not None:
        if not values:
            raise ConfigError("--sweep needs --values")
        try:
            parsed = [float(v) for v in str(values).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad sweep values {values!r}") from exc
        values = parsed
    return cfg, sweep_axis, values, args


def _summary(report: postprocess.ErrorReport) -> str:
    parts = []
    for f in ("u", "v", "p"):
        n = report[f]
        parts.append(f"{f}: Linf={n.Linf:.3e} L2={n.L2:.3e} H1={n.H1:.3e}")
    return f"N_T={report.N_T}  " + "  ".join(parts) + f"  time={report.wall_time:.1f}s"


def main(argv=None) -> int:
    try:
        cfg, axis, values, args = config_from_args(argv)
        logging.basicConfig(level=logging.INFO if args.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg.validate()
        if axis is None:
            res = run(cfg, write=True)
            print(_summary(res.report))
            print(f"wrote {', '.join(str(p) for p in res.files.values())}")
            return EXIT_OK
        res = sweep(cfg, axis, values, couple_dt=not args.get("fixed_dt"),
                    path=cfg.out_dir() / f"sweep_{axis}.csv")
        for it in res.items:
            line = _summary(it.report) if it.report is not None else f"FAILED {it.error}"
            print(f"{axis}={it.value:g}  {line}")
        if axis == "nx":
            for k in ("u1", "v1"):
                seq = res.orders[(k, "H1")][1:]
                print(f"H1 order {k}: " + ", ".join("-" if o is None else f"{o:.2f}" for o in seq))
        print(f"wrote {res.path}")
        return EXIT_OK if res.ok else EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
