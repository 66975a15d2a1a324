"""Space-time point clouds around a moving level-set interface.

The 2-D spatial box is extruded along ``t`` into a stack of time slices.  Each
slice carries a tensor grid classified by the sign of ``phi`` (``phi > 0`` is
the outer fluid side 1, ``phi < 0`` the inner structure side 2), an explicitly
sampled ring of interface nodes duplicated once per side, and optionally a
finer lattice inside side 2 ("locally dense nodes").
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGradient, EmptySubdomain, InterfaceSamplingFailed


class Category(enum.IntEnum):
    INTERIOR1 = 0
    INTERIOR2 = 1
    BOUNDARY1 = 2
    BOUNDARY2 = 3
    INITIAL1 = 4
    INITIAL2 = 5
    INTERFACE1 = 6
    INTERFACE2 = 7

    @property
    def side(self) -> int:
        return 1 if self.value % 2 == 0 else 2


class Region(enum.Enum):
    OMEGA1 = "Omega1"
    OMEGA2 = "Omega2"
    GAMMA = "Gamma"


SIDE1 = (Category.INTERIOR1, Category.BOUNDARY1, Category.INITIAL1, Category.INTERFACE1)
SIDE2 = (Category.INTERIOR2, Category.BOUNDARY2, Category.INITIAL2, Category.INTERFACE2)


@dataclass(frozen=True)
class SpaceTimeDomain:
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)
    t_range: tuple[float, float] = (0.0, 1.0)
    nx: int = 16
    dt: float = 0.1

    def __post_init__(self):
        if self.nx < 1 or self.dt <= 0:
            raise ValueError("spatial and temporal pitch must be positive")
        for lo, hi in (self.x_range, self.y_range, self.t_range):
            if not hi > lo:
                raise ValueError("empty domain interval")
        if abs(self.nt * self.dt - self.duration) > 1e-9 * self.duration:
            raise ValueError(f"dt={self.dt} does not divide [0, T]")

    @property
    def h(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.nx

    @property
    def ny(self) -> int:
        return int(round((self.y_range[1] - self.y_range[0]) / self.h))

    @property
    def duration(self) -> float:
        return self.t_range[1] - self.t_range[0]

    @property
    def nt(self) -> int:
        return int(round(self.duration / self.dt))

    def times(self) -> np.ndarray:
        return self.t_range[0] + self.dt * np.arange(self.nt + 1)


@dataclass(frozen=True)
class RefinementPolicy:
    """Locally dense nodes around side 2.

    The spacing is halved (at most ``max_depth`` times) until every time
    slice holds at least ``min_nodes`` side-2 grid nodes.  With ``band`` set,
    side 1 is graded toward the interface as well: refinement level k
    covers the strip within ``band * h_k`` of the interface.  ``band=None``
    refines side 2 alone.  ``level`` pins the refinement depth instead of
    searching for it, which keeps every spacing halving in a refinement
    study.
    """

    min_nodes: int = 0
    max_depth: int = 4
    band: Optional[float] = None
    level: Optional[int] = None


@dataclass(frozen=True)
class LevelSetInterface:
    """Moving interface ``phi(x, y, t) = 0``.

    ``center``/``radius`` describe the curve in polar form about a moving
    centre when available; they are used for parametric sampling.  Without
    them the curve is located by bisection along grid edges.
    """

    phi: Callable
    grad_phi_spatial: Callable
    center: Optional[Callable] = None
    radius: Optional[Callable] = None
    name: str = ""
    scale: float = 1.0

    def normal(self, x, y, t, side: int = 1) -> np.ndarray:
        """Unit normal(s) of shape (k, 2); side 1 points toward ``phi < 0``."""
        gx, gy = self.grad_phi_spatial(x, y, t)
        gx, gy = np.atleast_1d(gx), np.atleast_1d(gy)
        norm = np.hypot(gx, gy)
        if np.any(norm < 1e-12):
            raise DegenerateGradient("|grad phi| < 1e-12 on the interface")
        n1 = -np.stack([gx / norm, gy / norm], axis=-1)
        return n1 if side == 1 else -n1

    def sample(self, t: float, pitch: float, box=None) -> np.ndarray:
        """Points on the zero set at time ``t`` with arclength pitch ~ ``pitch``."""
        if self.center is not None and self.radius is not None:
            return self._sample_polar(t, pitch)
        if box is None:
            raise InterfaceSamplingFailed("grid-edge sampling needs a bounding box")
        return self._sample_edges(t, pitch, box)

    def _sample_polar(self, t, pitch):
        cx, cy = self.center(t)
        th = np.linspace(0.0, 2 * np.pi, 4097)
        r = self.radius(th, t)
        px, py = cx + r * np.cos(th), cy + r * np.sin(th)
        s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(px), np.diff(py)))])
        n = max(8, int(math.ceil(s[-1] / pitch)))
        th_i = np.interp(np.arange(n) * s[-1] / n, s, th)
        pts = self._polish_rays(t, cx, cy, th_i, self.radius(th_i, t))
        return pts

    def _polish_rays(self, t, cx, cy, th, r0):
        d = np.stack([np.cos(th), np.sin(th)], axis=-1)
        pts = np.array([cx, cy]) + r0[:, None] * d
        res = np.abs(self.phi(pts[:, 0], pts[:, 1], t))
        tol = 1e-10 * self.scale
        bad = res > tol
        if np.any(bad):
            lo = 0.5 * r0[bad]
            hi = 1.5 * r0[bad]
            db = d[bad]

            def f(s):
                q = np.array([cx, cy]) + s[:, None] * db
                return self.phi(q[:, 0], q[:, 1], t)

            flo, fhi = f(lo), f(hi)
            if np.any(np.sign(flo) == np.sign(fhi)):
                raise InterfaceSamplingFailed("no sign change along sampling ray")
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                left = np.sign(fm) == np.sign(flo)
                lo = np.where(left, mid, lo)
                flo = np.where(left, fm, flo)
                hi = np.where(left, hi, mid)
            pts[bad] = np.array([cx, cy]) + (0.5 * (lo + hi))[:, None] * db
            res = np.abs(self.phi(pts[:, 0], pts[:, 1], t))
            if np.any(res > tol):
                raise InterfaceSamplingFailed("ray bisection did not converge")
        return pts

    def _sample_edges(self, t, pitch, box):
        (x0, x1), (y0, y1) = box
        hs = pitch / 2
        xs = np.linspace(x0, x1, max(2, int(round((x1 - x0) / hs)) + 1))
        ys = np.linspace(y0, y1, max(2, int(round((y1 - y0) / hs)) + 1))
        gx, gy = np.meshgrid(xs, ys)
        ph = self.phi(gx, gy, t)
        found = []
        for axis in (0, 1):
            a, b = (ph[:, :-1], ph[:, 1:]) if axis == 0 else (ph[:-1, :], ph[1:, :])
            idx = np.nonzero(np.sign(a) != np.sign(b))
            if not idx[0].size:
                continue
            if axis == 0:
                lo = np.stack([gx[:, :-1][idx], gy[:, :-1][idx]], -1)
                hi = np.stack([gx[:, 1:][idx], gy[:, 1:][idx]], -1)
            else:
                lo = np.stack([gx[:-1, :][idx], gy[:-1, :][idx]], -1)
                hi = np.stack([gx[1:, :][idx], gy[1:, :][idx]], -1)
            flo = self.phi(lo[:, 0], lo[:, 1], t)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = self.phi(mid[:, 0], mid[:, 1], t)
                left = (np.sign(fm) == np.sign(flo))[:, None]
                lo = np.where(left, mid, lo)
                hi = np.where(left, hi, mid)
                flo = np.where(left[:, 0], fm, flo)
            found.append(0.5 * (lo + hi))
        if not found:
            return np.zeros((0, 2))
        pts = np.concatenate(found)
        if np.any(np.abs(self.phi(pts[:, 0], pts[:, 1], t)) > 1e-10 * self.scale):
            raise InterfaceSamplingFailed("edge bisection did not converge")
        order = np.lexsort((pts[:, 0], pts[:, 1]))
        keep = []
        tree_pts = []
        for i in order:
            if tree_pts and np.min(np.hypot(*(np.array(tree_pts) - pts[i]).T)) < 0.75 * pitch:
                continue
            keep.append(i)
            tree_pts.append(pts[i])
        return pts[keep]


def classify_point(p, interface: LevelSetInterface, tol: float = 1e-12) -> Region:
    x, y, t = p
    phi = float(interface.phi(x, y, t))
    if abs(phi) <= tol:
        return Region.GAMMA
    return Region.OMEGA1 if phi > 0 else Region.OMEGA2


def interface_normal(p, interface: LevelSetInterface, side: int) -> np.ndarray:
    """Unit normal at an interface point; side 1 points out of side 1."""
    x, y, t = p
    return interface.normal(x, y, t, side)[0]


@dataclass(frozen=True)
class SpaceTimeNode:
    index: int
    position: tuple[float, float, float]
    category: Category
    normal: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class PointCloud:
    """Immutable node arrays; interface nodes are stored once per side."""

    points: np.ndarray  # (N, 3) x, y, t
    category: np.ndarray  # (N,) Category values
    normals: np.ndarray  # (N, 2), NaN off the interface
    spacing: np.ndarray  # (N,) local spatial pitch
    partner: np.ndarray  # (N,) paired interface slot or -1
    on_box: np.ndarray  # (N,) lies on the spatial box boundary
    domain: SpaceTimeDomain
    level: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def side(self) -> np.ndarray:
        return np.where(self.category % 2 == 0, 1, 2)

    @property
    def counts(self) -> dict[Category, int]:
        c = np.bincount(self.category, minlength=len(Category))
        return {cat: int(c[cat]) for cat in Category}

    def indices(self, *cats) -> np.ndarray:
        return np.nonzero(np.isin(self.category, [int(c) for c in cats]))[0]

    def node(self, i: int) -> SpaceTimeNode:
        n = self.normals[i]
        return SpaceTimeNode(
            index=i,
            position=tuple(float(v) for v in self.points[i]),
            category=Category(int(self.category[i])),
            normal=None if np.isnan(n[0]) else (float(n[0]), float(n[1])),
        )

    def __iter__(self) -> Iterator[SpaceTimeNode]:
        return (self.node(i) for i in range(len(self)))


def _lattice(lo, hi, h, origin):
    """Coordinates origin + k h inside [lo, hi]."""
    k0 = math.ceil((lo - origin) / h - 1e-9)
    k1 = math.floor((hi - origin) / h + 1e-9)
    return origin + h * np.arange(k0, k1 + 1)


def _slice_nodes(domain, interface, t, level, cull_factor, pitch_factor, band):
    """Grid and interface nodes of one time slice.

    Returns ``(pts1, sp1, pts2, sp2, ring, sp_ring)`` with per-node spacings.
    """
    h = domain.h
    (x0, x1), (y0, y1) = domain.x_range, domain.y_range
    hf = h / 2**level
    box = (domain.x_range, domain.y_range)
    xs = x0 + h * np.arange(domain.nx + 1)
    ys = y0 + h * np.arange(domain.ny + 1)
    coarse = np.stack([a.ravel() for a in np.meshgrid(xs, ys)], -1)

    ring = interface.sample(t, pitch_factor * h, box=box)
    graded = level > 0 and len(ring) > 0 and band is not None
    dense = interface.sample(t, hf / 16, box=box) if len(ring) else None
    tree = cKDTree(dense) if len(ring) else None

    def lattice(k, margin):
        hk = h / 2**k
        bx = _lattice(max(x0, ring[:, 0].min() - margin), min(x1, ring[:, 0].max() + margin), hk, x0)
        by = _lattice(max(y0, ring[:, 1].min() - margin), min(y1, ring[:, 1].max() + margin), hk, y0)
        return np.stack([a.ravel() for a in np.meshgrid(bx, by)], -1)

    fine = lattice(level, hf) if level > 0 and len(ring) else coarse
    if graded:
        # level k covers the strip within band * h_k of the interface; each
        # node keeps the finest level whose strip contains it
        cand, sp_cand = [coarse], [np.full(len(coarse), h)]
        for k in range(1, level + 1):
            hk = h / 2**k
            pts = lattice(k, band * hk + hk)
            d, _ = tree.query(pts)
            pts = pts[d < band * hk]
            cand.append(pts)
            sp_cand.append(np.full(len(pts), hk))
        cand = np.concatenate(cand)
        sp_cand = np.concatenate(sp_cand)
        key = np.round(cand / hf).astype(np.int64)
        order = np.lexsort((sp_cand, key[:, 1], key[:, 0]))
        _, first = np.unique(key[order], axis=0, return_index=True)
        keep = order[first]
        cand, sp_cand = cand[keep], sp_cand[keep]
        ring = interface.sample(t, pitch_factor * hf, box=box)
        sp_ring = hf
    else:
        cand, sp_cand = coarse, np.full(len(coarse), h)
        sp_ring = h

    phi1 = interface.phi(cand[:, 0], cand[:, 1], t)
    pts1, sp1 = cand[phi1 > 0], sp_cand[phi1 > 0]
    phi2 = interface.phi(fine[:, 0], fine[:, 1], t)
    pts2 = fine[phi2 < 0]
    sp2 = np.full(len(pts2), hf)

    if tree is not None:
        if len(pts1):
            d1, _ = tree.query(pts1)
            keep = d1 >= cull_factor * sp1
            pts1, sp1 = pts1[keep], sp1[keep]
        if len(pts2):
            d2, _ = tree.query(pts2)
            keep = d2 >= cull_factor * sp2
            pts2, sp2 = pts2[keep], sp2[keep]
    return pts1, sp1, pts2, sp2, ring, sp_ring


def _assemble_cloud(domain, interface, level, cull_factor, pitch_factor, band):
    (x0, x1), (y0, y1) = domain.x_range, domain.y_range
    blocks = []
    per_slice2 = []
    for j, t in enumerate(domain.times()):
        pts1, sp1, pts2, sp2, ring, sp_ring = _slice_nodes(
            domain, interface, t, level, cull_factor, pitch_factor, band
        )
        per_slice2.append(len(pts2))
        initial = j == 0
        for pts, side, sp in ((pts1, 1, sp1), (pts2, 2, sp2)):
            if not len(pts):
                continue
            on_box = (
                (np.abs(pts[:, 0] - x0) < 1e-12) | (np.abs(pts[:, 0] - x1) < 1e-12)
                | (np.abs(pts[:, 1] - y0) < 1e-12) | (np.abs(pts[:, 1] - y1) < 1e-12)
            )
            if initial:
                cat = np.full(len(pts), Category.INITIAL1 if side == 1 else Category.INITIAL2)
            else:
                interior = Category.INTERIOR1 if side == 1 else Category.INTERIOR2
                bnd = Category.BOUNDARY1 if side == 1 else Category.BOUNDARY2
                cat = np.where(on_box, bnd, interior)
            blocks.append((pts, t, cat, np.full((len(pts), 2), np.nan), sp, on_box, None))
        if len(ring):
            n1 = interface.normal(ring[:, 0], ring[:, 1], t, side=1)
            spr = np.full(len(ring), sp_ring)
            blocks.append((ring, t, np.full(len(ring), Category.INTERFACE1), n1, spr,
                           np.zeros(len(ring), bool), "pair"))
            blocks.append((ring, t, np.full(len(ring), Category.INTERFACE2), -n1, spr,
                           np.zeros(len(ring), bool), "pair"))

    pts, cats, nrm, spc, box, partner = [], [], [], [], [], []
    start = 0
    pending = None
    for p2, t, cat, n, sp, ob, tag in blocks:
        k = len(p2)
        pts.append(np.column_stack([p2, np.full(k, t)]))
        cats.append(cat.astype(np.int8))
        nrm.append(n)
        spc.append(np.asarray(sp, float))
        box.append(ob)
        if tag == "pair":
            if pending is None:
                pending = start
                partner.append(np.arange(start + k, start + 2 * k))
            else:
                partner.append(np.arange(pending, pending + k))
                pending = None
        else:
            partner.append(np.full(k, -1))
        start += k
    return PointCloud(
        points=np.concatenate(pts),
        category=np.concatenate(cats),
        normals=np.concatenate(nrm),
        spacing=np.concatenate(spc),
        partner=np.concatenate(partner).astype(np.int64),
        on_box=np.concatenate(box),
        domain=domain,
        level=level,
        meta={"side2_per_slice": per_slice2},
    )


def generate_cloud(
    domain: SpaceTimeDomain,
    interface: LevelSetInterface,
    refine: RefinementPolicy = RefinementPolicy(),
    *,
    m: int = 60,
    cull_factor: float = 0.25,
    pitch_factor: float = 1.0,
) -> PointCloud:
    """Build the space-time cloud.

    Grid nodes closer than ``cull_factor`` times their local spacing to the
    interface are dropped.  Interface rings are sampled at an arclength pitch
    of ``pitch_factor`` times the local spacing.  Side 2 is refined uniformly
    across slices to ``refine.level`` or, if unset, to the shallowest level
    meeting ``refine.min_nodes``.
    """
    if refine.level is not None:
        cloud = _assemble_cloud(domain, interface, int(refine.level), cull_factor,
                                pitch_factor, refine.band)
    else:
        level = 0
        while True:
            cloud = _assemble_cloud(domain, interface, level, cull_factor, pitch_factor,
                                    refine.band)
            if min(cloud.meta["side2_per_slice"]) >= refine.min_nodes or level >= refine.max_depth:
                break
            level += 1
    side = cloud.side
    for s in (1, 2):
        if np.count_nonzero(side == s) < m + 1:
            raise EmptySubdomain(
                f"side {s} holds {np.count_nonzero(side == s)} nodes, need at least {m + 1}"
            )
    return cloud


def write_cloud_csv(cloud: PointCloud, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "t", "category", "nx", "ny"])
        for i in range(len(cloud)):
            x, y, t = cloud.points[i]
            n = cloud.normals[i]
            nn = ["", ""] if np.isnan(n[0]) else [f"{n[0]:.12e}", f"{n[1]:.12e}"]
            w.writerow([i, f"{x:.12e}", f"{y:.12e}", f"{t:.12e}",
                        Category(int(cloud.category[i])).name] + nn)
