"""Error norms, convergence orders and CSV/VTK output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingValues, NonPositiveError
from .geometry import Category, PointCloud
from .problems import ProblemSpec, exact_value
from .stencil import DT, DX, DY, StencilSet

FIELDS = ("u", "v", "p")
NORMS = ("Linf", "L2", "H1", "Linf_rel", "L2_rel", "H1_rel")


@dataclass(frozen=True)
class FieldNorms:
    Linf: float
    L2: float
    H1: float
    Linf_rel: float
    L2_rel: float
    H1_rel: float

    def as_dict(self):
        return {k: getattr(self, k) for k in NORMS}


@dataclass
class ErrorReport:
    """Norms keyed by field: ``u``, ``v``, ``p`` over every node carrying the
    field, and ``u1``, ``v1``, ``u2``, ``v2`` restricted to one side."""

    norms: dict
    N_T: int
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, fieldname) -> FieldNorms:
        return self.norms[fieldname]


def error_report(cloud, stencils, u, v, p, problem, t_report=None, wall_time=0.0,
                 metadata=None, space_time_gradient=False) -> ErrorReport:
    num = {"u": u, "v": v, "p": p}
    norms = {}
    for f in FIELDS:
        norms[f] = error_norms(cloud, stencils, num[f], problem, f, t_report,
                               space_time_gradient)
    for f in ("u", "v"):
        for s in (1, 2):
            norms[f"{f}{s}"] = error_norms(cloud, stencils, num[f], problem, f, t_report,
                                           space_time_gradient, side=s)
    return ErrorReport(norms=norms, N_T=len(cloud), wall_time=wall_time,
                       metadata=dict(metadata or {}))


def exact_nodal(cloud: PointCloud, problem: ProblemSpec, fieldname: str, d=(0, 0, 0)):
    """Exact values at every node, each evaluated with its own side's formula."""
    out = np.full(len(cloud), np.nan)
    side = cloud.side
    x, y, t = cloud.points.T
    for s in (1, 2):
        if fieldname == "p" and s == 2:
            continue
        m = side == s
        out[m] = exact_value(problem, fieldname, x[m], y[m], t[m], s, d)
    return out


def slab_mask(cloud: PointCloud, t_report=None):
    """Nodes in ``[t - dt/2, t + dt/2]``, or all nodes when ``t_report`` is None."""
    if t_report is None:
        return np.ones(len(cloud), bool)
    half = 0.5 * cloud.domain.dt
    t = cloud.points[:, 2]
    return (t >= t_report - half - 1e-12) & (t <= t_report + half + 1e-12)


def error_norms(
    cloud: PointCloud,
    stencils: StencilSet,
    numerical: np.ndarray,
    problem: ProblemSpec,
    fieldname: str,
    t_report=None,
    space_time_gradient: bool = False,
    side=None,
) -> FieldNorms:
    """Absolute and relative L-inf / L2 / H1 errors of one field.

    Means run over the selected nodes (all space-time nodes by default).
    The numerical gradient is the stencil's (dx, dy) rows applied to the
    numerical field; the exact gradient is analytic.  ``side`` (1 or 2)
    restricts the support to one subdomain, interface slots included.
    """
    numerical = np.asarray(numerical, float)
    if numerical.shape != (len(cloud),):
        raise MissingValues("numerical field must cover every node")
    mask = slab_mask(cloud, t_report)
    if fieldname == "p":
        mask &= cloud.side == 1
    if side is not None:
        mask &= cloud.side == side
    if not mask.any():
        raise MissingValues(f"no nodes carry {fieldname} in the requested support")
    nodes = np.nonzero(mask)[0]
    if np.any(~np.isfinite(numerical[stencils.idx[nodes]])):
        raise MissingValues(f"non-finite {fieldname} values in the norm support")
    exact = exact_nodal(cloud, problem, fieldname)
    rows = [(DX, (1, 0, 0)), (DY, (0, 1, 0))]
    if space_time_gradient:
        rows.append((DT, (0, 0, 1)))
    grad_err2 = np.zeros(len(nodes))
    grad_ex2 = np.zeros(len(nodes))
    for r, d in rows:
        gnum = stencils.apply(r, numerical, nodes)
        gex = exact_nodal(cloud, problem, fieldname, d)[nodes]
        grad_err2 += (gnum - gex) ** 2
        grad_ex2 += gex**2
    err = numerical[nodes] - exact[nodes]
    linf = float(np.max(np.abs(err)))
    l2 = float(np.sqrt(np.mean(err**2)))
    h1 = float(np.sqrt(np.mean(grad_err2)))

    def rel(a, b):
        return a / b if b > 0 else math.inf

    return FieldNorms(
        Linf=linf,
        L2=l2,
        H1=h1,
        Linf_rel=rel(linf, float(np.max(np.abs(exact[nodes])))),
        L2_rel=rel(l2, float(np.sqrt(np.mean(exact[nodes] ** 2)))),
        H1_rel=rel(h1, float(np.sqrt(np.mean(grad_ex2)))),
    )


def interface_distance(cloud: PointCloud, interface) -> np.ndarray:
    """First-order distance estimate ``|phi| / |grad phi|`` of every node to
    the interface at the node's own time."""
    x, y, t = cloud.points.T
    phi = interface.phi(x, y, t)
    gx, gy = interface.grad_phi_spatial(x, y, t)
    return np.abs(phi) / np.maximum(np.hypot(gx, gy), 1e-300)


def nodal_velocity_error(cloud: PointCloud, problem: ProblemSpec, u, v) -> np.ndarray:
    """Pointwise ``|(u, v) - (u, v)_exact|``."""
    eu = np.asarray(u) - exact_nodal(cloud, problem, "u")
    ev = np.asarray(v) - exact_nodal(cloud, problem, "v")
    return np.hypot(eu, ev)


def interface_localization(cloud, problem, u, v, width: float = 1.5):
    """(95th percentile of the nodal error over interface-adjacent nodes,
    median nodal error over all nodes).  A node is interface-adjacent when it
    lies within ``width`` local spacings of the interface."""
    err = nodal_velocity_error(cloud, problem, u, v)
    near = interface_distance(cloud, problem.interface) <= width * cloud.spacing
    return float(np.percentile(err[near], 95)), float(np.median(err))


def convergence_order(e_coarse: float, e_fine: float) -> float:
    """Observed order for a halved spacing."""
    if not (e_coarse > 0 and e_fine > 0):
        raise NonPositiveError("errors must be positive")
    return math.log(e_coarse / e_fine) / math.log(2.0)


# ------------------------------------------------------------------ output

ERROR_COLUMNS = (
    ["example", "N_T", "m", "ratio"]
    + [f"{f}_{n}" for f in FIELDS for n in NORMS]
    + ["wall_time"]
)
FIELD_COLUMNS = [
    "index", "x", "y", "t", "category",
    "u_num", "v_num", "p_num", "u_exact", "v_exact", "p_exact",
    "abs_err_u", "abs_err_v", "abs_err_p",
]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.10e}"


def error_row(report: ErrorReport) -> list:
    md = report.metadata
    row = [md.get("example", ""), report.N_T, md.get("m", ""), md.get("ratio", "")]
    for f in FIELDS:
        fn = report.norms[f]
        row += [getattr(fn, n) for n in NORMS]
    row.append(report.wall_time)
    return [_fmt(v) if not isinstance(v, str) else v for v in row]


def write_errors_csv(reports, path, extra_columns=None) -> Path:
    """One row per run; ``extra_columns`` maps column name -> per-row values."""
    path = Path(path)
    extra_columns = extra_columns or {}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS + list(extra_columns))
        for i, rep in enumerate(reports):
            extra = [_fmt(vals[i]) if vals[i] is not None else "" for vals in extra_columns.values()]
            w.writerow(error_row(rep) + extra)
    return path


def write_field_csv(cloud: PointCloud, problem: ProblemSpec, u, v, p, path) -> Path:
    path = Path(path)
    ex = {f: exact_nodal(cloud, problem, f) for f in FIELDS}
    num = {"u": u, "v": v, "p": p}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for i in range(len(cloud)):
            x, y, t = cloud.points[i]
            row = [i, x, y, t]
            vals = [num[f][i] for f in FIELDS] + [ex[f][i] for f in FIELDS]
            errs = [abs(num[f][i] - ex[f][i]) for f in FIELDS]
            w.writerow([_fmt(v) for v in row] + [Category(int(cloud.category[i])).name]
                       + [_fmt(v) for v in vals + errs])
    return path


def write_vtk(cloud: PointCloud, fields: dict, path) -> Path:
    """Legacy ASCII VTK point set (t as the third coordinate)."""
    path = Path(path)
    n = len(cloud)
    with path.open("w") as fh:
        fh.write("# vtk DataFile Version 3.0\nspace-time GFDM solution\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        np.savetxt(fh, cloud.points, fmt="%.10e")
        fh.write(f"CELLS {n} {2 * n}\n")
        np.savetxt(fh, np.column_stack([np.ones(n, int), np.arange(n)]), fmt="%d")
        fh.write(f"CELL_TYPES {n}\n")
        np.savetxt(fh, np.ones(n, int), fmt="%d")
        fh.write(f"POINT_DATA {n}\n")
        fh.write("SCALARS category int 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, cloud.category.astype(int), fmt="%d")
        for name, vals in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.nan_to_num(np.asarray(vals, float)), fmt="%.10e")
    return path
