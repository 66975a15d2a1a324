"""Row-wise assembly of the global space-time system ``K X = F``.

Unknowns are ordered ``(U; V; P)``.  Inside each velocity block the side-1
nodes come first, then side-2, each as (boundary + initial, interface,
interior); the pressure block repeats the side-1 ordering.  The equation
owned by unknown ``(node, field)`` is written to the row of the same index,
so K is square by construction:

* interior nodes: momentum rows (and the pressure Poisson row on side 1);
* box boundary and t = 0 nodes: Dirichlet velocity rows, and on side 1 a
  pressure row (``div u + p`` on the box, Poisson elsewhere);
* interface pairs: velocity continuity on the side-1 slot, the two traction
  rows on the side-2 slot, and Dirichlet pressure on the side-1 slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import InconsistentNormal, LengthMismatch, MissingStar, ShapeMismatch
from .geometry import Category, PointCloud
from .problems import ProblemSpec, exact_value, forcing, traction, traction_terms, velocity_jump
from .stencil import DT, DX, DXX, DY, DYY, StencilSet

C = Category
_GROUPS = {
    1: ((C.BOUNDARY1, C.INITIAL1), (C.INTERFACE1,), (C.INTERIOR1,)),
    2: ((C.BOUNDARY2, C.INITIAL2), (C.INTERFACE2,), (C.INTERIOR2,)),
}


@dataclass(frozen=True)
class UnknownMap:
    u: np.ndarray  # (N,) column of u at each node
    v: np.ndarray
    p: np.ndarray  # -1 on side-2 nodes
    n_cols: int
    order1: np.ndarray  # side-1 nodes in block order
    order2: np.ndarray

    @classmethod
    def build(cls, cloud: PointCloud) -> "UnknownMap":
        def ordered(side):
            parts = [cloud.indices(*cats) for cats in _GROUPS[side]]
            return np.concatenate(parts)

        o1, o2 = ordered(1), ordered(2)
        n = len(cloud)
        if len(o1) + len(o2) != n:
            raise ShapeMismatch("node categories do not partition the cloud")
        vel = np.concatenate([o1, o2])
        u = np.empty(n, np.int64)
        u[vel] = np.arange(n)
        v = u + n
        p = np.full(n, -1, np.int64)
        p[o1] = 2 * n + np.arange(len(o1))
        return cls(u=u, v=v, p=p, n_cols=2 * n + len(o1), order1=o1, order2=o2)

    def split(self, x: np.ndarray):
        """Nodal (u, v, p) arrays from a solution vector; p is NaN on side 2."""
        p = np.full(len(self.u), np.nan)
        p[self.order1] = x[self.p[self.order1]]
        return x[self.u], x[self.v], p

    def pack(self, u, v, p) -> np.ndarray:
        x = np.zeros(self.n_cols)
        x[self.u] = u
        x[self.v] = v
        x[self.p[self.order1]] = p[self.order1]
        return x


@dataclass
class SparseSystem:
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray
    n: int
    unknowns: UnknownMap = None

    def csr(self) -> sps.csr_matrix:
        return sps.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))

    def residual(self, x) -> np.ndarray:
        return residual(self, x)


def residual(system: SparseSystem, x) -> np.ndarray:
    """``K x - F`` from the triplets."""
    x = np.asarray(x, float)
    if x.shape != (system.n,):
        raise LengthMismatch(f"vector of length {x.shape} for a system of size {system.n}")
    kx = np.bincount(system.rows, weights=system.vals * x[system.cols], minlength=system.n)
    return kx - system.rhs


class _Rows:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
        self.r.append(rows.ravel())
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())

    def star(self, rows, colmap, st, nodes, coef):
        """Add ``coef`` (k, m+1) over the star columns of ``nodes``."""
        self.add(rows[:, None], colmap[st.idx[nodes]], coef)

    def arrays(self):
        return np.concatenate(self.r), np.concatenate(self.c), np.concatenate(self.v)


def assemble(
    cloud: PointCloud,
    stencils: StencilSet,
    problem: ProblemSpec,
    traction_form: str = "stress",
    row_scaling: bool = False,
) -> SparseSystem:
    if stencils is None or len(stencils) != len(cloud):
        raise MissingStar("every node needs a star")
    um = UnknownMap.build(cloud)
    n = um.n_cols
    P = cloud.points
    E = stencils.E
    rhs = np.full(n, np.nan)
    out = _Rows()
    b1, b2, r1, r2 = problem.beta1, problem.beta2, problem.rho1, problem.rho2

    def xyz(nodes):
        return P[nodes, 0], P[nodes, 1], P[nodes, 2]

    def identity(nodes, colmap, values):
        out.add(colmap[nodes], colmap[nodes], 1.0)
        rhs[colmap[nodes]] = values

    # side-1 interior: momentum + pressure Poisson
    i1 = cloud.indices(C.INTERIOR1)
    if len(i1):
        x, y, t = xyz(i1)
        lap = E[i1, DXX] + E[i1, DYY]
        mom = r1 * E[i1, DT] - b1 * lap
        out.star(um.u[i1], um.u, stencils, i1, mom)
        out.star(um.u[i1], um.p, stencils, i1, E[i1, DX])
        rhs[um.u[i1]] = forcing(problem, x, y, t, 1, "x")
        out.star(um.v[i1], um.v, stencils, i1, mom)
        out.star(um.v[i1], um.p, stencils, i1, E[i1, DY])
        rhs[um.v[i1]] = forcing(problem, x, y, t, 1, "y")
        _poisson(out, rhs, um, stencils, problem, i1, P)

    i2 = cloud.indices(C.INTERIOR2)
    if len(i2):
        x, y, t = xyz(i2)
        mom = r2 * E[i2, DT] - b2 * (E[i2, DXX] + E[i2, DYY])
        out.star(um.u[i2], um.u, stencils, i2, mom)
        rhs[um.u[i2]] = forcing(problem, x, y, t, 2, "x")
        out.star(um.v[i2], um.v, stencils, i2, mom)
        rhs[um.v[i2]] = forcing(problem, x, y, t, 2, "y")

    # Dirichlet velocity on the box faces and the initial slice
    for side, cats in ((1, (C.BOUNDARY1, C.INITIAL1)), (2, (C.BOUNDARY2, C.INITIAL2))):
        nodes = cloud.indices(*cats)
        if not len(nodes):
            continue
        x, y, t = xyz(nodes)
        identity(nodes, um.u, exact_value(problem, "u", x, y, t, side))
        identity(nodes, um.v, exact_value(problem, "v", x, y, t, side))

    # side-1 pressure rows on box / initial nodes
    bp = cloud.indices(C.BOUNDARY1, C.INITIAL1)
    on_box = bp[cloud.on_box[bp]]
    if len(on_box):
        x, y, t = xyz(on_box)
        rows = um.p[on_box]
        out.star(rows, um.u, stencils, on_box, E[on_box, DX])
        out.star(rows, um.v, stencils, on_box, E[on_box, DY])
        out.add(rows, rows, 1.0)
        div = (exact_value(problem, "u", x, y, t, 1, (1, 0, 0))
               + exact_value(problem, "v", x, y, t, 1, (0, 1, 0)))
        rhs[rows] = exact_value(problem, "p", x, y, t, 1) + div
    inner = bp[~cloud.on_box[bp]]
    if len(inner):
        _poisson(out, rhs, um, stencils, problem, inner, P)

    # interface pairs
    g1 = cloud.indices(C.INTERFACE1)
    if len(g1):
        g2 = cloud.partner[g1]
        if np.any(g2 < 0) or np.any(cloud.category[g2] != C.INTERFACE2):
            raise ShapeMismatch("interface slots are not paired")
        n1 = cloud.normals[g1]
        n2 = cloud.normals[g2]
        if np.any(~np.isfinite(n1)) or np.any(~np.isfinite(n2)):
            raise InconsistentNormal("interface node without a normal")
        x, y, t = xyz(g1)
        ju, jv = velocity_jump(problem, x, y, t)
        for colmap, jump in ((um.u, ju), (um.v, jv)):
            rows = colmap[g1]
            out.add(rows, rows, 1.0)
            out.add(rows, colmap[g2], -1.0)
            rhs[rows] = jump
        identity(g1, um.p, exact_value(problem, "p", x, y, t, 1))

        tau = traction(problem, x, y, t, n1, n2, form=traction_form)
        colmaps = {"u": um.u, "v": um.v, "p": um.p}
        drow = {"x": DX, "y": DY}
        for row_nodes, terms, value in zip((um.u[g2], um.v[g2]),
                                           traction_terms(traction_form, b1, b2, n1, n2), tau):
            for field, side, der, coef in terms:
                owner = g1 if side == 1 else g2
                if der is None:
                    out.add(row_nodes, colmaps[field][owner], coef)
                else:
                    out.star(row_nodes, colmaps[field], stencils, owner,
                             coef[:, None] * E[owner, drow[der]])
            rhs[row_nodes] = value

    rows, cols, vals = out.arrays()
    if np.any(np.isnan(rhs)):
        raise ShapeMismatch(f"{int(np.isnan(rhs).sum())} unknown(s) without an equation")
    if np.any(cols < 0):
        raise ShapeMismatch("star references a column outside the unknown map")
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rhs))):
        raise ShapeMismatch("non-finite entries in the assembled system")
    if row_scaling:
        scale = np.zeros(n)
        np.maximum.at(scale, rows, np.abs(vals))
        vals = vals / scale[rows]
        rhs = rhs / scale
    return SparseSystem(rows=rows, cols=cols, vals=vals, rhs=rhs, n=n, unknowns=um)


def _poisson(out, rhs, um, stencils, problem, nodes, P):
    E = stencils.E
    rows = um.p[nodes]
    out.star(rows, um.p, stencils, nodes, E[nodes, DXX] + E[nodes, DYY])
    rhs[rows] = forcing(problem, P[nodes, 0], P[nodes, 1], P[nodes, 2], 1, "p")


def write_matrix_market(system: SparseSystem, path) -> None:
    import scipy.io

    scipy.io.mmwrite(str(path), system.csr().tocoo(), comment="space-time GFDM system K")
    np.savetxt(str(path) + ".rhs", system.rhs)
