"""Manufactured-solution benchmark problems.

Each problem carries piecewise-constant coefficients, a moving level-set
interface and an exact velocity/pressure field.  The exact fields are kept
as sympy expressions so every derivative the scheme needs (forcing, pressure
Poisson source, traction data) is obtained symbolically and evaluated through
``lambdify``; nothing is hand-copied.

Velocity formulas are written as ``g / beta`` where ``beta`` is the
coefficient of the side being evaluated.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import NotOnInterface, SideMismatch, UnknownExample
from .geometry import LevelSetInterface, RefinementPolicy, SpaceTimeDomain

X, Y, T_, BETA = sp.symbols("x y t beta", real=True)

_R = sp.Rational


class ExactSolution:
    """Closed-form u, v, p with cached derivative evaluators.

    ``u`` and ``v`` may contain the symbol ``BETA``; it is substituted with the
    coefficient of the requested side at evaluation time.
    """

    def __init__(self, u: sp.Expr, v: sp.Expr, p: sp.Expr, name: str = ""):
        self.exprs = {"u": u, "v": v, "p": p}
        self.name = name

    def expr(self, field: str, d: tuple[int, int, int] = (0, 0, 0)) -> sp.Expr:
        e = self.exprs[field]
        for sym, k in zip((X, Y, T_), d):
            if k:
                e = sp.diff(e, sym, k)
        return e

    @functools.lru_cache(maxsize=None)
    def _compiled(self, field: str, d: tuple[int, int, int]):
        return sp.lambdify((X, Y, T_, BETA), self.expr(field, d), modules="numpy")

    def __call__(self, field, x, y, t, beta=1.0, d=(0, 0, 0)) -> np.ndarray:
        x, y, t = np.broadcast_arrays(
            np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
        )
        out = self._compiled(field, tuple(d))(x, y, t, beta)
        return np.broadcast_to(np.asarray(out, float), x.shape).copy()


# ---------------------------------------------------------------- interfaces


def _polar_interface(cx, cy, radius_expr, name, squared=False):
    """Level set of a star-shaped curve ``rho = R(theta, t)`` about a moving centre.

    ``squared`` uses ``rho^2 - R^2`` (the printed circle form), otherwise
    ``rho - R``.
    """
    dx, dy = X - cx, Y - cy
    theta = sp.atan2(dy, dx)
    rad = radius_expr(theta)
    if squared:
        phi = dx**2 + dy**2 - rad**2
    else:
        phi = sp.sqrt(dx**2 + dy**2) - rad
    args = (X, Y, T_)
    phi_f = sp.lambdify(args, phi, "numpy")
    gx_f = sp.lambdify(args, sp.diff(phi, X), "numpy")
    gy_f = sp.lambdify(args, sp.diff(phi, Y), "numpy")

    th = sp.Symbol("theta", real=True)
    r_f = sp.lambdify((th, T_), radius_expr(th), "numpy")
    c_f = sp.lambdify(T_, (cx, cy), "numpy")

    def _bcast(f):
        def g(x, y, t):
            x, y, t = np.broadcast_arrays(
                np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
            )
            return np.broadcast_to(np.asarray(f(x, y, t), float), x.shape).copy()

        return g

    phi_b, gx_b, gy_b = _bcast(phi_f), _bcast(gx_f), _bcast(gy_f)

    def grad(x, y, t):
        return gx_b(x, y, t), gy_b(x, y, t)

    def center(t):
        c = c_f(float(t))
        return float(c[0]), float(c[1])

    def radius(theta, t):
        theta = np.asarray(theta, float)
        return np.broadcast_to(np.asarray(r_f(theta, float(t)), float), theta.shape).copy()

    return LevelSetInterface(
        phi=phi_b,
        grad_phi_spatial=grad,
        center=center,
        radius=radius,
        name=name,
    )


def circle_interface(cx, cy, r, name="circle") -> LevelSetInterface:
    return _polar_interface(cx, cy, lambda th: r + 0 * th, name, squared=True)


def octagon_interface(cx, cy, n=8) -> LevelSetInterface:
    """Eight-lobed interface; the printed expression is taken as the polar radius."""

    def rad(th):
        return _R(1, 2) * _R(3, 10 * n**2) * (1 + 2 * n + n**2 - (n + 1) * sp.cos(n * th))

    return _polar_interface(cx, cy, rad, f"octagon(n={n})")


def flower_interface(petals: int, T: float = 1.0, w: float = 0.1, center=(0.5, 0.5)):
    """Flower ``0.4(0.8 + 0.2 sin(k theta))`` relaxing linearly to the circle r0 = 0.2.

    The centre drifts as ``center + (w t, w t)``; at ``t = T`` the curve is the
    equilibrium circle.
    """
    Tq = sp.nsimplify(T)
    wq = sp.nsimplify(w)
    s = T_ / Tq

    def rad(th):
        return (1 - s) * _R(2, 5) * (_R(4, 5) + _R(1, 5) * sp.sin(petals * th)) + s * _R(1, 5)

    cx = sp.nsimplify(center[0]) + wq * T_
    cy = sp.nsimplify(center[1]) + wq * T_
    return _polar_interface(cx, cy, rad, f"flower(k={petals})")


# ------------------------------------------------------------ problem specs


@dataclass(frozen=True)
class ProblemSpec:
    example: int
    beta1: float
    beta2: float
    rho1: float
    rho2: float
    interface: LevelSetInterface
    exact: ExactSolution
    T: float = 1.0
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)
    dt: float = 0.1
    refine: RefinementPolicy = RefinementPolicy()

    def beta(self, side):
        return np.where(np.asarray(side) == 1, self.beta1, self.beta2)

    def rho(self, side):
        return np.where(np.asarray(side) == 1, self.rho1, self.rho2)

    @property
    def ratio(self) -> float:
        return self.beta1 / self.beta2

    def domain(self, nx: int, dt: float | None = None) -> SpaceTimeDomain:
        return SpaceTimeDomain(
            x_range=self.x_range,
            y_range=self.y_range,
            t_range=(0.0, self.T),
            nx=nx,
            dt=self.dt if dt is None else dt,
        )

    def with_coefficients(self, **kw) -> "ProblemSpec":
        return dataclasses.replace(self, **kw)

    def with_ratio(self, ratio: float) -> "ProblemSpec":
        """beta1/beta2 = rho1/rho2 = ratio, keeping the inner-side values."""
        return dataclasses.replace(self, beta1=ratio * self.beta2, rho1=ratio * self.rho2)


def _circle_family(a, c, p_time_factor):
    phi = (X - a) ** 2 + (Y - c) ** 2 - _R(1, 100)
    u = (Y - c) * phi * T_ / BETA
    v = -(X - a) * phi * T_ / BETA
    p = _R(1, 10) * (X**3 - Y**3) * phi * (T_ if p_time_factor else 1)
    return u, v, p


def _flower_family(w):
    wq = sp.nsimplify(w)
    s = (X - wq * T_) ** 2 + (Y - wq * T_) ** 2 - _R(1, 16)
    u = (Y - wq * T_) * sp.sin(s) * sp.sin(T_) / BETA
    v = -(X - wq * T_) * sp.sin(s) * sp.sin(T_) / BETA
    p = _R(1, 10) * (X**3 - Y**3) * s
    return u, v, p


@functools.lru_cache(maxsize=None)
def _example_parts(n: int):
    tenth = _R(1, 10)
    if n == 1:
        a = c = _R(3, 10) + tenth * T_
        exact = ExactSolution(*_circle_family(a, c, False), name="example1")
        return exact, circle_interface(a, c, tenth, "phi1")
    if n in (2, 3):
        a = _R(3, 10) + tenth * (T_ + sp.sin(5 * T_))
        c = _R(3, 10) + tenth * (T_ + T_**3)
        exact = ExactSolution(*_circle_family(a, c, True), name=f"example{n}")
        if n == 2:
            return exact, circle_interface(a, c, tenth, "phi2")
        return exact, octagon_interface(a, c, 8)
    if n in (4, 5):
        exact = ExactSolution(*_flower_family(0.1), name=f"example{n}")
        return exact, flower_interface(3 if n == 4 else 8, T=1.0, w=0.1)
    raise UnknownExample(f"unknown example {n!r}; expected 1..5")


def example(n: int) -> ProblemSpec:
    """Benchmark problem ``n`` in 1..5 with its published coefficients."""
    if n not in (1, 2, 3, 4, 5):
        raise UnknownExample(f"unknown example {n!r}; expected 1..5")
    exact, iface = _example_parts(n)
    if n in (1, 2, 3):
        return ProblemSpec(
            example=n, beta1=100.0, beta2=1.0, rho1=100.0, rho2=1.0,
            interface=iface, exact=exact, dt=0.1,
            refine=RefinementPolicy(min_nodes=80, band=4.0) if n in (1, 2) else RefinementPolicy(),
        )
    beta1 = 1000.0 if n == 4 else 10000.0
    return ProblemSpec(
        example=n, beta1=beta1, beta2=1.0, rho1=1.0, rho2=1.0,
        interface=iface, exact=exact, dt=1.0 / 20.0,
        refine=RefinementPolicy(min_nodes=0),
    )


# ----------------------------------------------------------- derived data

_PHI_TOL = 1e-12


def _check_side(spec, x, y, t, side):
    phi = spec.interface.phi(x, y, t)
    tol = 1e-9 * spec.interface.scale
    bad = (phi < -tol) if side == 1 else (phi > tol)
    if np.any(bad):
        raise SideMismatch(f"{int(np.count_nonzero(bad))} point(s) not on side {side}")


def exact_value(spec: ProblemSpec, field, x, y, t, side, d=(0, 0, 0)):
    beta = spec.beta1 if side == 1 else spec.beta2
    return spec.exact(field, x, y, t, beta, d)


def forcing(spec: ProblemSpec, x, y, t, side: int, component: str, check=True):
    """Momentum source on ``side`` for ``component`` in {'x', 'y'}, or the
    pressure Poisson source ``'p'`` (divergence of the side-1 forcing)."""
    if check:
        _check_side(spec, x, y, t, side)
    beta = spec.beta1 if side == 1 else spec.beta2
    rho = spec.rho1 if side == 1 else spec.rho2
    ev = spec.exact

    def mom(field, extra):
        # rho d/dt - beta (dxx + dyy), shifted by an extra derivative multi-index
        ex, ey, et = extra
        return (
            rho * ev(field, x, y, t, beta, (ex, ey, et + 1))
            - beta * ev(field, x, y, t, beta, (ex + 2, ey, et))
            - beta * ev(field, x, y, t, beta, (ex, ey + 2, et))
        )

    if component == "p":
        if side != 1:
            raise SideMismatch("pressure source only exists on side 1")
        return (
            mom("u", (1, 0, 0))
            + mom("v", (0, 1, 0))
            + ev("p", x, y, t, beta, (2, 0, 0))
            + ev("p", x, y, t, beta, (0, 2, 0))
        )
    field = {"x": "u", "y": "v"}[component]
    f = mom(field, (0, 0, 0))
    if side == 1:
        f = f + ev("p", x, y, t, beta, (1, 0, 0) if component == "x" else (0, 1, 0))
    return f


def traction_terms(form: str, beta1, beta2, n1, n2):
    """Linear interface-flux operator as a list of terms per row.

    Each term is ``(field, side, derivative, coefficient)`` with derivative in
    {'x', 'y', None}.  ``n1``/``n2`` are (k, 2) arrays.  ``form='printed'``
    follows the component-wise discrete scheme literally (including ``+p``);
    ``form='stress'`` is ``(beta1 grad u1 - p1 I) n1 + beta2 grad u2 n2``.
    """
    n11, n12 = n1[:, 0], n1[:, 1]
    n21, n22 = n2[:, 0], n2[:, 1]
    if form == "printed":
        row1 = [
            ("u", 1, "x", beta1 * n11),
            ("p", 1, None, n11),
            ("v", 1, "x", beta1 * n12),
            ("u", 2, "x", beta2 * n21),
            ("v", 2, "x", beta2 * n22),
        ]
        row2 = [
            ("v", 1, "y", beta1 * n21),
            ("p", 1, None, n21),
            ("u", 1, "y", beta1 * n11),
            ("u", 2, "y", beta2 * n12),
            ("v", 2, "y", beta2 * n22),
        ]
    elif form == "stress":
        row1 = [
            ("u", 1, "x", beta1 * n11),
            ("u", 1, "y", beta1 * n12),
            ("p", 1, None, -n11),
            ("u", 2, "x", beta2 * n21),
            ("u", 2, "y", beta2 * n22),
        ]
        row2 = [
            ("v", 1, "x", beta1 * n11),
            ("v", 1, "y", beta1 * n12),
            ("p", 1, None, -n12),
            ("v", 2, "x", beta2 * n21),
            ("v", 2, "y", beta2 * n22),
        ]
    else:
        raise ValueError(f"unknown traction form {form!r}")
    return row1, row2


_DERIV = {"x": (1, 0, 0), "y": (0, 1, 0), None: (0, 0, 0)}


def traction(spec: ProblemSpec, x, y, t, n1, n2, form="stress", check=True):
    """Traction data (tau1, tau2) of the exact fields at interface points."""
    x, y, t = (np.atleast_1d(np.asarray(a, float)) for a in (x, y, t))
    if check:
        phi = spec.interface.phi(x, y, t)
        if np.any(np.abs(phi) > 1e-8 * spec.interface.scale):
            raise NotOnInterface("traction requested off the interface")
    n1 = np.atleast_2d(np.asarray(n1, float))
    n2 = np.atleast_2d(np.asarray(n2, float))
    out = []
    for row in traction_terms(form, spec.beta1, spec.beta2, n1, n2):
        acc = np.zeros_like(x)
        for field, side, der, coef in row:
            acc += coef * exact_value(spec, field, x, y, t, side, _DERIV[der])
        out.append(acc)
    return out[0], out[1]


def velocity_jump(spec: ProblemSpec, x, y, t):
    """(u1 - u2, v1 - v2) of the exact fields; zero wherever the formula's
    level-set factor vanishes."""
    ju = exact_value(spec, "u", x, y, t, 1) - exact_value(spec, "u", x, y, t, 2)
    jv = exact_value(spec, "v", x, y, t, 1) - exact_value(spec, "v", x, y, t, 2)
    return ju, jv
