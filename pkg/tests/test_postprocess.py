import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stgfdm import problems
from stgfdm.errors import MissingValues, NonPositiveError
from stgfdm.postprocess import (
    ERROR_COLUMNS,
    FIELD_COLUMNS,
    NORMS,
    ErrorReport,
    convergence_order,
    error_norms,
    error_report,
    exact_nodal,
    interface_distance,
    interface_localization,
    slab_mask,
    write_errors_csv,
    write_field_csv,
    write_vtk,
)
from stgfdm.problems import T_, X, Y


# -------------------------------------------------------------- orders


def test_convergence_order_examples():
    assert convergence_order(4e-4, 1e-4) == pytest.approx(2.0)
    assert convergence_order(1e-4, 1e-4) == 0.0
    assert round(convergence_order(5.68e-6, 5.26e-7), 2) == 3.43


@pytest.mark.parametrize("pair", [(0.0, 1e-4), (1e-4, 0.0), (-1.0, 1.0), (math.nan, 1.0)])
def test_convergence_order_rejects_non_positive(pair):
    with pytest.raises(NonPositiveError):
        convergence_order(*pair)


@given(st.floats(1e-12, 1e3), st.floats(-4, 4))
def test_convergence_order_inverts_halving(e, k):
    assert convergence_order(e, e / 2**k) == pytest.approx(k, abs=1e-9)


# ---------------------------------------------------------------- norms


def exact_fields(run):
    return [exact_nodal(run.cloud, run.problem, f) for f in "uvp"]


def test_exact_samples_have_zero_nodal_error(small_run):
    u, v, p = exact_fields(small_run)
    for name, vals in zip("uvp", (u, v, p)):
        n = error_norms(small_run.cloud, small_run.stencils, vals, small_run.problem, name)
        assert n.Linf == 0.0 and n.L2 == 0.0
        # H1 compares stencil gradients of exact samples with analytic ones,
        # so it only vanishes up to truncation (checked on quadratics below)
        assert np.isfinite(n.H1)


def test_constant_offset(small_run):
    u, _, _ = exact_fields(small_run)
    eps = 1e-3
    base = error_norms(small_run.cloud, small_run.stencils, u, small_run.problem, "u")
    off = error_norms(small_run.cloud, small_run.stencils, u + eps, small_run.problem, "u")
    assert off.Linf == pytest.approx(eps)
    assert off.L2 == pytest.approx(eps)
    assert off.H1 == pytest.approx(base.H1, rel=1e-6)


def quadratic_problem(run):
    ex = problems.ExactSolution(X**2 + Y * T_ - 0.5 * X * Y, 2 * X * T_ - Y**2, X + Y + T_)
    return run.problem.with_coefficients(exact=ex)


def test_h1_is_exact_for_quadratics(small_run):
    spec = quadratic_problem(small_run)
    for name in "uvp":
        vals = exact_nodal(small_run.cloud, spec, name)
        n = error_norms(small_run.cloud, small_run.stencils, vals, spec, name,
                        space_time_gradient=True)
        # round-off only; the worst stars have scaled condition numbers near 1e11
        assert n.H1_rel < 1e-7


def test_norm_definitions(small_run):
    """Hand computation of the mean-square norms on a perturbed field."""
    spec = quadratic_problem(small_run)
    cloud = small_run.cloud
    ex = exact_nodal(cloud, spec, "u")
    rng = np.random.default_rng(0)
    err = 1e-3 * rng.normal(size=len(cloud))
    n = error_norms(cloud, small_run.stencils, ex + err, spec, "u")
    assert n.Linf == pytest.approx(np.abs(err).max())
    assert n.L2 == pytest.approx(np.sqrt(np.mean(err**2)))
    assert n.L2_rel == pytest.approx(n.L2 / np.sqrt(np.mean(ex**2)))
    assert n.Linf_rel == pytest.approx(n.Linf / np.abs(ex).max())
    gx = small_run.stencils.apply("x", err)
    gy = small_run.stencils.apply("y", err)
    assert n.H1 == pytest.approx(np.sqrt(np.mean(gx**2 + gy**2)), rel=1e-6)


def test_side_and_pressure_support(small_run):
    cloud = small_run.cloud
    u, v, p = exact_fields(small_run)
    assert np.all(np.isnan(p[cloud.side == 2]))
    assert np.all(np.isfinite(p[cloud.side == 1]))
    # pressure norms ignore side 2, so NaN there is fine
    error_norms(cloud, small_run.stencils, np.nan_to_num(p), small_run.problem, "p")
    pert = u.copy()
    pert[cloud.side == 2] += 1.0
    n1 = error_norms(cloud, small_run.stencils, pert, small_run.problem, "u", side=1)
    n2 = error_norms(cloud, small_run.stencils, pert, small_run.problem, "u", side=2)
    assert n1.Linf == 0.0 and n2.Linf == pytest.approx(1.0)


def test_missing_values(small_run):
    u, _, _ = exact_fields(small_run)
    with pytest.raises(MissingValues):
        error_norms(small_run.cloud, small_run.stencils, u[:-1], small_run.problem, "u")
    bad = u.copy()
    bad[0] = np.nan
    with pytest.raises(MissingValues):
        error_norms(small_run.cloud, small_run.stencils, bad, small_run.problem, "u")


def test_slab_mode(small_run):
    cloud = small_run.cloud
    mask = slab_mask(cloud, 0.5)
    assert np.all(np.abs(cloud.points[mask, 2] - 0.5) <= 0.05 + 1e-12)
    assert mask.sum() < len(cloud)
    assert slab_mask(cloud).all()
    u, _, _ = exact_fields(small_run)
    err = np.zeros(len(cloud))
    err[~mask] = 1.0  # errors outside the slab are ignored
    n = error_norms(cloud, small_run.stencils, u + err, small_run.problem, "u", t_report=0.5)
    assert n.Linf == 0.0


def test_error_report_keys(small_run):
    rep = small_run.report
    assert set(rep.norms) == {"u", "v", "p", "u1", "v1", "u2", "v2"}
    assert rep.N_T == len(small_run.cloud)
    assert set(rep["u"].as_dict()) == set(NORMS)
    assert rep.metadata["example"] == 1
    for key in rep.norms:
        assert all(np.isfinite(list(rep[key].as_dict().values())))


# ---------------------------------------------------------- localization


def test_interface_distance_on_circle(small_run):
    cloud = small_run.cloud
    x, y, t = cloud.points.T
    exact = np.abs(np.hypot(x - 0.3 - 0.1 * t, y - 0.3 - 0.1 * t) - 0.1)
    d = interface_distance(cloud, small_run.problem.interface)
    near = exact < 0.02  # |phi| / |grad phi| is a first-order estimate
    assert np.allclose(d[near], exact[near], rtol=0.3, atol=1e-12)


def test_interface_localization_values(small_run):
    p95, med = interface_localization(small_run.cloud, small_run.problem, small_run.u, small_run.v)
    assert p95 > 0 and med > 0
    u, v, _ = exact_fields(small_run)
    assert interface_localization(small_run.cloud, small_run.problem, u, v) == (0.0, 0.0)


# ---------------------------------------------------------------- output


def test_errors_csv(tmp_path, small_run):
    path = write_errors_csv([], tmp_path / "empty.csv")
    rows = list(csv.reader(path.open()))
    assert rows == [ERROR_COLUMNS]
    assert len(ERROR_COLUMNS) == 4 + 18 + 1
    path = write_errors_csv([small_run.report], tmp_path / "errors.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 1
    r = rows[0]
    assert int(r["N_T"]) == len(small_run.cloud)
    assert int(r["example"]) == 1 and int(r["m"]) == 30
    assert float(r["ratio"]) == pytest.approx(100.0)
    assert float(r["u_L2"]) == pytest.approx(small_run.report["u"].L2, rel=1e-9)
    assert float(r["p_H1_rel"]) == pytest.approx(small_run.report["p"].H1_rel, rel=1e-9)


def test_errors_csv_extra_columns(tmp_path, small_run):
    path = write_errors_csv([small_run.report, small_run.report], tmp_path / "e.csv",
                            extra_columns={"order": [None, 1.5]})
    rows = list(csv.DictReader(path.open()))
    assert [r["order"] for r in rows] == ["", "1.5000000000e+00"]


def test_field_csv(tmp_path, small_run):
    path = write_field_csv(small_run.cloud, small_run.problem, small_run.u, small_run.v,
                           small_run.p, tmp_path / "field.csv")
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == FIELD_COLUMNS
    assert len(rows) == len(small_run.cloud)
    side2 = int(np.nonzero(small_run.cloud.side == 2)[0][0])
    assert rows[side2]["p_num"] == "" and rows[side2]["p_exact"] == ""
    i = 7
    assert float(rows[i]["abs_err_u"]) == pytest.approx(
        abs(float(rows[i]["u_num"]) - float(rows[i]["u_exact"])), rel=1e-8, abs=1e-15)


def test_vtk(tmp_path, small_run):
    path = write_vtk(small_run.cloud, {"u": small_run.u, "p": small_run.p}, tmp_path / "s.vtk")
    text = path.read_text().splitlines()
    n = len(small_run.cloud)
    assert text[0].startswith("# vtk DataFile")
    assert f"POINTS {n} double" in text
    assert f"POINT_DATA {n}" in text
    assert "SCALARS u double 1" in text and "SCALARS p double 1" in text


def test_error_report_on_fabricated_fields(small_run):
    u, v, p = exact_fields(small_run)
    rep = error_report(small_run.cloud, small_run.stencils, u, v, np.nan_to_num(p),
                       small_run.problem, wall_time=1.5, metadata={"example": 1})
    assert isinstance(rep, ErrorReport)
    assert rep["u"].L2 == 0.0 and rep.wall_time == 1.5
