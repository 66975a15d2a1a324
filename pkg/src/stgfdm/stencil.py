"""Weighted Taylor least-squares derivative stencils on space-time stars.

For a centre node and its ``m`` nearest same-side neighbours the nine first
and second partial derivatives in (x, y, t) are fitted by minimising

    sum_k w_k^2 (u_0 - u_k + s_k . D)^2,
    s_k = (h, l, r, h^2/2, l^2/2, r^2/2, h l, h r, l r),

which gives ``A D = B U`` and the stencil matrix ``E = A^-1 B`` (9 x (m+1),
column 0 is the centre).  All stars of a cloud are built in one batched
solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientNeighbors, SingularMomentMatrix
from .geometry import PointCloud

ROWS = ("x", "y", "t", "xx", "yy", "tt", "xy", "xt", "yt")
DX, DY, DT, DXX, DYY, DTT, DXY, DXT, DYT = range(9)
ROW_INDEX = {name: i for i, name in enumerate(ROWS)}

# (dx, dy, dt) derivative orders of each row
ROW_ORDERS = (
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (2, 0, 0), (0, 2, 0), (0, 0, 2),
    (1, 1, 0), (1, 0, 1), (0, 1, 1),
)

COND_LIMIT = 1e12


def weight(d, d_m):
    """Quartic spline weight, 1 at the centre and 0 from ``d_m`` outward."""
    q = np.asarray(d, float) / d_m
    w = 1 - 6 * q**2 + 8 * q**3 - 3 * q**4
    return np.where(q <= 1, w, 0.0)


@dataclass(frozen=True)
class Star:
    center_index: int
    neighbor_indices: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    E: Optional[np.ndarray] = None

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([[self.center_index], self.neighbor_indices])


@dataclass(frozen=True)
class StencilSet:
    """Stars of every node in a cloud, stored as stacked arrays.

    ``idx[i]`` lists node ``i`` followed by its neighbours; ``E[i]`` is the
    matching 9 x (m+1) stencil matrix.
    """

    idx: np.ndarray  # (N, m+1)
    offsets: np.ndarray  # (N, m, 3)
    weights: np.ndarray  # (N, m)
    E: np.ndarray  # (N, 9, m+1)
    cond: np.ndarray  # (N,) condition number of the scaled moment matrix

    @property
    def m(self) -> int:
        return self.idx.shape[1] - 1

    def __len__(self):
        return len(self.idx)

    def star(self, i: int) -> Star:
        return Star(int(self.idx[i, 0]), self.idx[i, 1:].copy(),
                    self.offsets[i].copy(), self.weights[i].copy(), self.E[i].copy())

    def apply(self, row: Union[int, str], values: np.ndarray, nodes=None) -> np.ndarray:
        """Derivative estimate ``E[row] @ values[star]`` at ``nodes`` (default all)."""
        r = ROW_INDEX[row] if isinstance(row, str) else row
        sel = slice(None) if nodes is None else nodes
        return np.einsum("nj,nj->n", self.E[sel, r, :], values[self.idx[sel]])


def _time_scales(cloud: PointCloud, centers, time_scale):
    if isinstance(time_scale, str):
        if time_scale != "auto":
            raise ValueError(f"unknown time scale {time_scale!r}")
        return cloud.spacing[centers] / cloud.domain.dt
    ts = np.asarray(time_scale, float)
    if ts.ndim == 0:
        return np.full(len(centers), float(ts))
    return ts[centers]


def _metric(points, s):
    return np.column_stack([points[:, 0], points[:, 1], s * points[:, 2]])


def select_stars(cloud: PointCloud, m: int, time_scale: Union[str, float] = "auto"):
    """m nearest same-side neighbours of every node.

    Distances are Euclidean in (x, y, s t); ``s`` is a fixed float, a per-node
    array, or ``"auto"``: the centre's local spacing divided by dt, which
    makes the grid isotropic in the metric.  Ties are broken by lower index.
    Returns ``(neighbors, metric_distances)``, both (N, m).
    """
    n = len(cloud)
    nbr = np.empty((n, m), dtype=np.int64)
    dist = np.empty((n, m))
    side = cloud.side
    for s_ in (1, 2):
        elig = np.nonzero(side == s_)[0]
        if len(elig) < m + 1:
            raise InsufficientNeighbors(
                f"side {s_} has {len(elig)} eligible nodes, star needs {m} neighbours"
            )
        scales = _time_scales(cloud, elig, time_scale)
        for sc in np.unique(scales):
            centers = elig[scales == sc]
            tree = cKDTree(_metric(cloud.points[elig], sc))
            q = _metric(cloud.points[centers], sc)
            nb, dd = _knn_tiebreak(tree, q, elig, centers, m)
            nbr[centers] = nb
            dist[centers] = dd
    return nbr, dist


def _knn_tiebreak(tree, q, elig, centers, m, pad=24):
    k = min(m + 1 + pad, len(elig))
    out_nb = np.empty((len(q), m), dtype=np.int64)
    out_d = np.empty((len(q), m))
    todo = np.arange(len(q))
    while len(todo):
        d, loc = tree.query(q[todo], k=k)
        g = elig[loc]
        d = np.where(g == centers[todo, None], np.inf, d)
        key = np.round(d, 12)
        order = np.lexsort((g, key), axis=-1)
        g = np.take_along_axis(g, order, -1)
        key = np.take_along_axis(key, order, -1)
        d = np.take_along_axis(d, order, -1)
        # the shell of the m-th neighbour must be fully inside the query
        ok = (key[:, -1] > key[:, m - 1]) | (k == len(elig))
        done = todo[ok]
        out_nb[done] = g[ok, :m]
        out_d[done] = d[ok, :m]
        todo = todo[~ok]
        k = min(2 * k, len(elig))
    return out_nb, out_d


def select_star(cloud: PointCloud, center: int, m: int, time_scale="auto") -> Star:
    """Single-node version of :func:`select_stars` (brute force)."""
    side = cloud.side
    elig = np.nonzero(side == side[center])[0]
    elig = elig[elig != center]
    if len(elig) < m:
        raise InsufficientNeighbors(f"{len(elig)} eligible nodes for a star of {m}")
    sc = _time_scales(cloud, np.array([center]), time_scale)[0]
    diff = cloud.points[elig] - cloud.points[center]
    d = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + (sc * diff[:, 2]) ** 2)
    order = np.lexsort((elig, np.round(d, 12)))[:m]
    nb = elig[order]
    dk = d[order]
    return Star(center, nb, cloud.points[nb] - cloud.points[center], weight(dk, dk.max()))


def taylor_basis(offsets: np.ndarray) -> np.ndarray:
    """Rows s_k for offsets (..., 3) -> (..., 9)."""
    h, l, r = offsets[..., 0], offsets[..., 1], offsets[..., 2]
    return np.stack([h, l, r, h * h / 2, l * l / 2, r * r / 2, h * l, h * r, l * r], axis=-1)


def _scale_vector(offsets):
    Ls = np.max(np.abs(offsets[..., :2]), axis=(-2, -1))
    Lt = np.max(np.abs(offsets[..., 2]), axis=-1)
    Ls = np.where(Ls > 0, Ls, 1.0)
    Lt = np.where(Lt > 0, Lt, 1.0)
    one = np.ones_like(Ls)
    return np.stack([one / Ls, one / Ls, one / Lt, one / Ls**2, one / Ls**2, one / Lt**2,
                     one / Ls**2, one / (Ls * Lt), one / (Ls * Lt)], axis=-1)


def stencil_matrices(offsets: np.ndarray, weights: np.ndarray, centers=None):
    """Batched ``E = A^-1 B`` for stars given as (N, m, 3) offsets and (N, m) weights.

    The weighted fit is solved in per-star scaled variables (unit spatial and
    temporal extent) through a QR factorisation of the weighted Taylor matrix,
    which gives the same E as the normal equations without squaring their
    condition number.  The returned ``cond`` is the 2-norm condition number of
    the scaled moment matrix.
    """
    s = taylor_basis(offsets)
    sc = _scale_vector(offsets)
    M = weights[:, :, None] * (s * sc[:, None, :])
    Q, R = np.linalg.qr(M)
    sv = np.linalg.svd(R, compute_uv=False)
    with np.errstate(divide="ignore"):
        cond = (sv[:, 0] / sv[:, -1]) ** 2
    bad = ~(cond <= COND_LIMIT)
    if np.any(bad):
        where = np.nonzero(bad)[0] if centers is None else np.asarray(centers)[bad]
        raise SingularMomentMatrix(
            f"{int(bad.sum())} degenerate star(s), e.g. node {int(where[0])} "
            f"(cond {cond[bad][0]:.3g})"
        )
    # R^-1 Q^T W maps neighbour values to scaled derivatives; the centre
    # column makes every row annihilate constants
    Bn = np.linalg.solve(R, np.transpose(Q, (0, 2, 1)) * weights[:, None, :])
    E = np.concatenate([-Bn.sum(axis=2, keepdims=True), Bn], axis=2) * sc[:, :, None]
    return E, cond


def build_stencil(star: Star) -> Star:
    E, _ = stencil_matrices(star.offsets[None], star.weights[None], [star.center_index])
    return Star(star.center_index, star.neighbor_indices, star.offsets, star.weights, E[0])


def _moment_cond(offsets, weights):
    sh = taylor_basis(offsets) * _scale_vector(offsets)[:, None, :]
    A = np.einsum("nk,nki,nkj->nij", weights**2, sh, sh)
    return np.linalg.cond(A)


AUTO_RETRIES = 4
LEVELS_FALLBACK = 3


def _select_by_levels(cloud: PointCloud, centers, m: int, scales):
    """Stars drawn from the ``LEVELS_FALLBACK`` time slices nearest to each
    centre, an equal share of spatially nearest same-side nodes per slice.

    Used for centres whose metric-nearest star stays degenerate, e.g. near
    t = 0 next to a subdomain that moves farther than its own size within a
    couple of steps.
    """
    pts = cloud.points
    side = cloud.side
    times = np.unique(pts[:, 2])
    nbr = np.empty((len(centers), m), dtype=np.int64)
    dist = np.empty((len(centers), m))
    for row, c in enumerate(centers):
        t0 = pts[c, 2]
        levels = times[np.lexsort((times, np.abs(times - t0)))][:LEVELS_FALLBACK]
        pools = []
        for lev in levels:
            cand = np.nonzero((side == side[c]) & (pts[:, 2] == lev))[0]
            cand = cand[cand != c]
            d = np.hypot(pts[cand, 0] - pts[c, 0], pts[cand, 1] - pts[c, 1])
            pools.append(cand[np.lexsort((cand, np.round(d, 12)))])
        chosen = []
        quota = [m // len(pools) + (1 if k < m % len(pools) else 0) for k in range(len(pools))]
        taken = [min(q, len(pool)) for q, pool in zip(quota, pools)]
        short = m - sum(taken)
        for k, pool in enumerate(pools):  # refill from slices with spare nodes
            extra = min(short, len(pool) - taken[k])
            taken[k] += extra
            short -= extra
        if short > 0:
            raise InsufficientNeighbors(f"node {c}: fewer than {m} neighbours on nearby slices")
        for k, pool in enumerate(pools):
            chosen.extend(pool[: taken[k]])
        chosen = np.array(chosen, dtype=np.int64)
        off = pts[chosen] - pts[c]
        d = np.sqrt(off[:, 0] ** 2 + off[:, 1] ** 2 + (scales[c] * off[:, 2]) ** 2)
        order = np.lexsort((chosen, np.round(d, 12)))
        nbr[row], dist[row] = chosen[order], d[order]
    return nbr, dist


def build_stencils(cloud: PointCloud, m: int = 60, time_scale="auto", chunk=4096) -> StencilSet:
    """Stars and stencil matrices for every node.

    With ``time_scale="auto"`` a star that comes out degenerate (typically all
    neighbours on one or two time slices, next to a patch of denser nodes) is
    re-selected with its time scale halved, up to ``AUTO_RETRIES`` times; any
    star still degenerate then draws its neighbours slice by slice from the
    nearest three time levels.
    """
    n = len(cloud)
    if isinstance(time_scale, str) and time_scale == "auto":
        scales0 = _time_scales(cloud, np.arange(n), "auto")
        scales = scales0.copy()
        nbr, dist = select_stars(cloud, m, scales)

        def degenerate():
            off = cloud.points[nbr] - cloud.points[:, None, :]
            w = weight(dist, dist.max(axis=1, keepdims=True))
            return ~(_moment_cond(off, w) <= COND_LIMIT)

        bad = degenerate()
        for _ in range(AUTO_RETRIES):
            if not bad.any():
                break
            scales = np.where(bad, scales / 2, scales)
            nb2, d2 = select_stars(cloud, m, scales)
            nbr[bad], dist[bad] = nb2[bad], d2[bad]
            bad = degenerate()
        if bad.any():
            centers = np.nonzero(bad)[0]
            nbr[centers], dist[centers] = _select_by_levels(cloud, centers, m, scales0)
    else:
        nbr, dist = select_stars(cloud, m, time_scale)
    offsets = cloud.points[nbr] - cloud.points[:, None, :]
    weights = weight(dist, dist.max(axis=1, keepdims=True))
    E = np.empty((n, 9, m + 1))
    cond = np.empty(n)
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        E[a:b], cond[a:b] = stencil_matrices(offsets[a:b], weights[a:b], np.arange(a, b))
    idx = np.concatenate([np.arange(n)[:, None], nbr], axis=1)
    return StencilSet(idx=idx, offsets=offsets, weights=weights, E=E, cond=cond)


def apply_row(star: Star, row: Union[int, str], values: Union[Callable, np.ndarray]) -> float:
    """Collocated derivative ``sum_j E[row, j] values(node_j)``."""
    r = ROW_INDEX[row] if isinstance(row, str) else row
    nodes = star.nodes
    vals = np.array([values(int(j)) for j in nodes]) if callable(values) else np.asarray(values)[nodes]
    return float(star.E[r] @ vals)


def write_stars_csv(cloud: PointCloud, stencils: StencilSet, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center", "neighbor", "h", "l", "r", "omega"])
        for i in range(len(stencils)):
            for k in range(stencils.m):
                h, l, r = stencils.offsets[i, k]
                w.writerow([i, int(stencils.idx[i, k + 1]), f"{h:.12e}", f"{l:.12e}",
                            f"{r:.12e}", f"{stencils.weights[i, k]:.12e}"])
