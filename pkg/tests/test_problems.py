"""Manufactured problems, checked against hand-typed formulas and a
finite-difference oracle that shares no code with the symbolic pipeline."""

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from stgfdm import problems
from stgfdm.errors import NotOnInterface, SideMismatch, UnknownExample
from stgfdm.problems import BETA, T_, X, Y, exact_value, forcing, traction, velocity_jump


def ex1_fields(x, y, t, beta):
    a = c = 0.3 + 0.1 * t
    phi = (x - a) ** 2 + (y - c) ** 2 - 0.01
    return (y - c) * phi * t / beta, -(x - a) * phi * t / beta, 0.1 * (x**3 - y**3) * phi


def ex2_fields(x, y, t, beta):
    a = 0.3 + 0.1 * (t + np.sin(5 * t))
    c = 0.3 + 0.1 * (t + t**3)
    phi = (x - a) ** 2 + (y - c) ** 2 - 0.01
    return (y - c) * phi * t / beta, -(x - a) * phi * t / beta, 0.1 * (x**3 - y**3) * phi * t


def ex4_fields(x, y, t, beta, w=0.1):
    s = (x - w * t) ** 2 + (y - w * t) ** 2 - 0.0625
    return ((y - w * t) * np.sin(s) * np.sin(t) / beta, -(x - w * t) * np.sin(s) * np.sin(t) / beta,
            0.1 * (x**3 - y**3) * s)


HAND = {1: ex1_fields, 2: ex2_fields, 3: ex2_fields, 4: ex4_fields, 5: ex4_fields}


def fd(f, x, y, t, d, h=1e-4):
    """Central difference of f(x, y, t) for one multi-index of order <= 2."""
    dx, dy, dt = d
    if sum(d) == 0:
        return f(x, y, t)
    axis = 0 if dx else (1 if dy else 2)
    e = np.zeros(3)
    e[axis] = h
    if max(d) == 2:
        return (f(x + e[0], y + e[1], t + e[2]) - 2 * f(x, y, t) + f(x - e[0], y - e[1], t - e[2])) / h**2
    if sum(d) == 1:
        return (f(x + e[0], y + e[1], t + e[2]) - f(x - e[0], y - e[1], t - e[2])) / (2 * h)
    raise ValueError(d)


def random_points(spec, side, n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.02, 0.98, size=(400 * n, 3))
    phi = spec.interface.phi(*pts.T)
    keep = phi > 1e-3 if side == 1 else phi < -1e-3
    pts = pts[keep][:n]
    assert len(pts) == n
    return pts.T


# ----------------------------------------------------------------- specs


def test_published_coefficients():
    assert problems.example(1).beta1 == 100
    assert problems.example(1).beta2 == 1
    assert problems.example(1).rho1 == 100
    assert problems.example(4).beta1 == 1000
    assert problems.example(5).beta1 == 10000
    assert problems.example(4).rho1 == 1


@pytest.mark.parametrize("n", [0, 6, "1"])
def test_unknown_example(n):
    with pytest.raises(UnknownExample):
        problems.example(n)
    with pytest.raises(KeyError):  # UnknownExample is a KeyError
        problems.example(n)


def test_with_ratio_and_coefficients():
    spec = problems.example(1).with_ratio(1e4)
    assert spec.beta1 == 1e4 * spec.beta2 and spec.rho1 == 1e4 * spec.rho2
    assert spec.ratio == 1e4
    assert problems.example(1).with_coefficients(beta2=2.0).beta(np.array([1, 2])).tolist() == [100, 2]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("side", [1, 2])
def test_exact_fields_match_hand_formulas(n, side):
    spec = problems.example(n)
    beta = spec.beta1 if side == 1 else spec.beta2
    x, y, t = random_points(spec, side, 50, n)
    hand = HAND[n](x, y, t, beta)
    for k, f in enumerate("uvp"):
        assert np.allclose(exact_value(spec, f, x, y, t, side), hand[k], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_exact_derivatives_match_fd(n):
    spec = problems.example(n)
    x, y, t = random_points(spec, 1, 30, 10 + n)
    for k, f in enumerate("uvp"):
        def g(a, b, c):
            return HAND[n](a, b, c, spec.beta1)[k]
        for d in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0)]:
            ex = exact_value(spec, f, x, y, t, 1, d)
            assert np.allclose(ex, fd(g, x, y, t, d), rtol=1e-5, atol=1e-7 * max(1, np.abs(ex).max()))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_velocity_is_divergence_free(n):
    e = problems.example(n).exact
    div = sp.diff(e.exprs["u"], X) + sp.diff(e.exprs["v"], Y)
    assert sp.simplify(div) == 0


# --------------------------------------------------------------- forcing


@pytest.mark.parametrize("n", [1, 2, 4, 5])
@pytest.mark.parametrize("side", [1, 2])
def test_forcing_matches_fd_oracle(n, side):
    spec = problems.example(n)
    beta, rho = (spec.beta1, spec.rho1) if side == 1 else (spec.beta2, spec.rho2)
    x, y, t = random_points(spec, side, 40, 20 + n + side)
    for k, comp in enumerate("xy"):
        def g(a, b, c):
            return HAND[n](a, b, c, beta)[k]

        def p(a, b, c):
            return HAND[n](a, b, c, beta)[2]

        ref = rho * fd(g, x, y, t, (0, 0, 1)) - beta * (fd(g, x, y, t, (2, 0, 0)) + fd(g, x, y, t, (0, 2, 0)))
        if side == 1:
            ref = ref + fd(p, x, y, t, (1, 0, 0) if comp == "x" else (0, 1, 0))
        got = forcing(spec, x, y, t, side, comp)
        assert np.allclose(got, ref, rtol=1e-5, atol=1e-6 * np.abs(ref).max())


def test_side2_forcing_at_disk_centre():
    """f = rho2 du2/dt - beta2 lap u2 on side 2 at t = 0, evaluated by hand.

    Every velocity term carries a factor t, so at t = 0 the Laplacian vanishes
    and du/dt reduces to the t-free prefactor: (y - c) phi for u and
    -(x - a) phi for v.  Both are zero at the disk centre."""
    spec = problems.example(1)
    assert forcing(spec, 0.3, 0.3, 0.0, 2, "x") == pytest.approx(0.0, abs=1e-15)
    assert forcing(spec, 0.3, 0.3, 0.0, 2, "y") == pytest.approx(0.0, abs=1e-15)
    x, y = 0.33, 0.28
    phi = (x - 0.3) ** 2 + (y - 0.3) ** 2 - 0.01
    assert forcing(spec, x, y, 0.0, 2, "y") == pytest.approx(-(x - 0.3) * phi, rel=1e-12)
    assert forcing(spec, x, y, 0.0, 2, "x") == pytest.approx((y - 0.3) * phi, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_pressure_source_is_divergence_of_forcing(n):
    spec = problems.example(n)
    x, y, t = random_points(spec, 1, 30, 40 + n)

    def f1(a, b, c):
        return forcing(spec, a, b, c, 1, "x", check=False)

    def f2(a, b, c):
        return forcing(spec, a, b, c, 1, "y", check=False)

    ref = fd(f1, x, y, t, (1, 0, 0), 1e-5) + fd(f2, x, y, t, (0, 1, 0), 1e-5)
    got = forcing(spec, x, y, t, 1, "p")
    assert np.allclose(got, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


def test_forcing_side_checks():
    spec = problems.example(1)
    with pytest.raises(SideMismatch):
        forcing(spec, 0.3, 0.3, 0.0, 1, "x")  # disk centre is on side 2
    with pytest.raises(SideMismatch):
        forcing(spec, 0.9, 0.9, 0.0, 2, "x")
    with pytest.raises(SideMismatch):
        forcing(spec, 0.3, 0.3, 0.0, 2, "p")


def test_zero_solution_gives_zero_data():
    zero = problems.ExactSolution(sp.Integer(0), sp.Integer(0), sp.Integer(0))
    spec = problems.example(1).with_coefficients(exact=zero)
    x, y, t = random_points(spec, 1, 10, 1)
    for comp in "xyp":
        assert np.all(forcing(spec, x, y, t, 1, comp) == 0)
    n1 = spec.interface.normal(0.4, 0.3, 0.0)
    assert traction(spec, 0.4, 0.3, 0.0, n1, -n1) == (0, 0)


# --------------------------------------------------------------- interface


def test_velocity_vanishes_on_circles():
    for n in (1, 2):
        spec = problems.example(n)
        for t in (0.0, 0.37, 1.0):
            pts = spec.interface.sample(t, 0.01)
            x, y = pts.T
            ju, jv = velocity_jump(spec, x, y, t)
            assert np.max(np.abs(ju)) < 1e-12 and np.max(np.abs(jv)) < 1e-12
            assert np.max(np.abs(exact_value(spec, "u", x, y, t, 1))) < 1e-12


def test_flower_velocity_jump_is_nonzero():
    spec = problems.example(4)
    pts = spec.interface.sample(0.5, 0.02)
    ju, jv = velocity_jump(spec, pts[:, 0], pts[:, 1], 0.5)
    hand = [HAND[4](pts[:, 0], pts[:, 1], 0.5, b) for b in (spec.beta1, spec.beta2)]
    assert np.allclose(ju, hand[0][0] - hand[1][0])
    assert np.max(np.abs(ju)) > 1e-4


def test_traction_by_hand():
    """Example 1 at (0.4, 0.3, 0) with n1 = (-1, 0): stress-form traction
    (beta1 grad u1 - p I) n1 + beta2 grad u2 n2 from FD derivatives."""
    spec = problems.example(1)
    x, y, t = 0.4, 0.3, 0.0
    n1, n2 = np.array([-1.0, 0.0]), np.array([1.0, 0.0])

    def comp(k, beta):
        def g(a, b, c):
            return ex1_fields(a, b, c, beta)[k]
        return np.array([fd(g, x, y, t, (1, 0, 0)), fd(g, x, y, t, (0, 1, 0))])

    p = ex1_fields(x, y, t, 1.0)[2]
    tau = []
    for k in (0, 1):
        tau.append(spec.beta1 * comp(k, spec.beta1) @ n1 - p * n1[k] + spec.beta2 * comp(k, spec.beta2) @ n2)
    got = traction(spec, x, y, t, n1, n2)
    assert np.allclose(np.concatenate(got), tau, atol=1e-9)
    # at t = 0 the velocity vanishes identically, so only the pressure term is left
    assert np.allclose(np.concatenate(got), [-p * n1[0], -p * n1[1]], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.05, 1.0), st.sampled_from(["stress", "printed"]))
def test_traction_is_linear_in_normals(theta, t, form):
    spec = problems.example(2)
    cx, cy = spec.interface.center(t)
    x, y = cx + 0.1 * np.cos(theta), cy + 0.1 * np.sin(theta)
    n1 = spec.interface.normal(x, y, t)
    a = np.concatenate(traction(spec, x, y, t, n1, -n1, form))
    b = np.concatenate(traction(spec, x, y, t, -n1, n1, form))
    assert np.allclose(a, -b, atol=1e-12)


def test_traction_off_interface():
    spec = problems.example(1)
    with pytest.raises(NotOnInterface):
        traction(spec, 0.9, 0.9, 0.0, [[1, 0]], [[-1, 0]])


def test_unknown_traction_form():
    with pytest.raises(ValueError):
        problems.traction_terms("bogus", 1, 1, np.zeros((1, 2)), np.zeros((1, 2)))


def test_beta_symbol_is_substituted():
    e = problems.example(1).exact
    assert BETA in e.exprs["u"].free_symbols and T_ in e.exprs["u"].free_symbols
    assert e("u", 0.5, 0.5, 0.5, beta=2.0) == pytest.approx(0.5 * e("u", 0.5, 0.5, 0.5, beta=1.0))
