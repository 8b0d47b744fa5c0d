import math

import numpy as np
import pytest

from nonlocal_fv.diagnostics import (
    DiagnosticsError, ErrorTable, InvariantMonitor, RunReport, check_step_invariants,
    entropy_levels, entropy_residual, eoc, l1_error, total_variation, tv_bound,
)
from nonlocal_fv.flux import make_scheme, scheme_constants
from nonlocal_fv.model import InitialData, Piece, get_kernel, make_model
from nonlocal_fv.quadrature import compute_weights
from nonlocal_fv.solver import SolverError, GridSpec, SolverState, initial_cells, run, step

ARR = make_model("arrhenius", (0.0, 0.8))
ONE_WEIGHT = compute_weights(get_kernel("constant"), 0.01, 0.01)
TINY = GridSpec(0.0, 0.03, 0.01, 1.0, lam=0.1)
PULSE = SolverState(0.0, np.array([0.0, 0.8, 0.0]), 0, TINY)


def test_total_variation_examples():
    assert total_variation([0, 0.8, 0]) == pytest.approx(1.6)
    assert total_variation(np.full(7, 0.3)) == 0.0
    for n in (3, 10, 1000):
        assert total_variation(np.linspace(0, 1, n)) == pytest.approx(1.0, abs=1e-14)
    assert total_variation([0.0, 1.0], "periodic") == 2.0


def test_tv_bound_examples():
    lin = get_kernel("linear")
    assert tv_bound(0.0, ARR, lin, 0.1, 1.6) == 1.6
    assert tv_bound(0.5, ARR, lin, 0.1, 1.6) == pytest.approx(math.exp(17) * 1.6, rel=1e-13)
    nl = make_model("custom", (0, 1), g_coeffs=(0, 1, -1),
                    velocity=__import__("nonlocal_fv.model", fromlist=["linear_velocity"]).linear_velocity())
    expo = 0.3 * lin.omega_at_zero(0.1) * nl.bound_dv * (2 * nl.bound_g + nl.bound_dg * nl.rho_norm)
    assert tv_bound(0.3, nl, lin, 0.1, 2.0) == pytest.approx(math.exp(expo) * 2.0)


def test_eoc():
    # rates from rounded printed errors
    assert eoc([0.0343, 0.0178])[0] == pytest.approx(math.log2(0.0343 / 0.0178), rel=1e-15)
    assert eoc([0.0343, 0.0178])[0] == pytest.approx(0.9482, abs=5e-3)
    assert eoc([0.0085, 0.0026])[0] == pytest.approx(1.7090, abs=1e-4)
    assert eoc([3 * 2.0 ** -n for n in range(6)]) == [1.0] * 5
    assert eoc([0.1, 0.0, 0.05]) == [None, None]
    with pytest.raises(DiagnosticsError):
        eoc([0.1])


def test_l1_error():
    assert l1_error(np.array([0.8]), np.array([0.7, 0.9]), 2, dx=1.0) == pytest.approx(0.0, abs=1e-16)
    c = np.full(4, 0.3)
    assert l1_error(c, np.full(4 * 64, 0.3), 64, dx=0.1) == 0.0
    assert l1_error(c, c, 1, dx=0.1) == 0.0
    with pytest.raises(DiagnosticsError):
        l1_error(c, np.zeros(7), 2, dx=0.1)
    # point comparison on center-anchored grids: coarse centers every r-th fine center
    assert l1_error(np.array([1.0, 2.0]), np.array([1.0, 5.0, 2.5]), 2, dx=0.5,
                    method="point") == pytest.approx(0.25)
    with pytest.raises(DiagnosticsError):
        l1_error(np.array([1.0, 2.0]), np.zeros(4), 2, dx=0.5, method="point")


def test_l1_error_is_symmetric_after_restriction():
    rng = np.random.default_rng(5)
    a, b = rng.uniform(size=(2, 16))
    assert l1_error(a, b, 1, dx=0.1) == pytest.approx(l1_error(b, a, 1, dx=0.1), abs=0)


def test_entropy_residual_three_cells():
    s = make_scheme("godunov", ARR)
    nxt, _ = step(PULSE, s, ONE_WEIGHT, TINY, ARR)
    res = entropy_residual(PULSE, nxt, [-0.5, 0.0, 0.1, 0.3, 0.5, 0.7, 0.8, 1.0], s, ONE_WEIGHT, TINY)
    assert res.full <= 1e-12
    with pytest.raises(DiagnosticsError):
        entropy_residual(PULSE, PULSE, [0.1], s, ONE_WEIGHT, TINY)


def test_entropy_residual_constant_state():
    grid = GridSpec(0.0, 1.0, 0.01, 1.0, lam=0.3, boundary="periodic")
    w = compute_weights(get_kernel("linear"), 0.1, 0.01)
    s = make_scheme("lax_friedrichs", ARR)
    st = SolverState(0.0, np.full(100, 0.4), 0, grid)
    nxt, _ = step(st, s, w, grid, ARR)
    res = entropy_residual(st, nxt, np.linspace(-0.2, 1, 13), s, w, grid)
    assert res.full <= 1e-15 and res.half <= 1e-15


def test_entropy_levels():
    np.testing.assert_allclose(entropy_levels(0.0, 0.8, 0.05), np.arange(1, 16) * 0.05, atol=1e-15)
    np.testing.assert_allclose(entropy_levels(0.0, 0.01, 0.003), [0.003, 0.006, 0.009])


def test_step_invariants_three_cells():
    s = make_scheme("godunov", ARR)
    nxt, rep = step(PULSE, s, ONE_WEIGHT, TINY, ARR)
    report = RunReport("godunov", 0.01, 0.1, "arrhenius", initial_l1=0.008)
    limit = tv_bound(nxt.time, ARR, get_kernel("constant"), 0.01, 1.6)
    res = check_step_invariants(PULSE, nxt, rep, scheme_constants(s), ARR, TINY, report,
                                bounds=(0.0, 0.8), tv_limit=limit)
    assert all(res.values())
    # outflow ghosts repeat the edge cell, so the last jump to 0 is absent
    assert rep.tv == pytest.approx(1.525, abs=1e-15)
    assert total_variation(np.append(nxt.cells, 0.0)) == pytest.approx(1.55, abs=1e-15)
    assert report.passed and len(report.records) == 1


def test_lambda_violation_is_detected():
    grid = GridSpec(0.0, 2.0, 0.01, 0.2, lam=3.0)
    w = compute_weights(get_kernel("linear"), 0.1, 0.01)
    cells = initial_cells(InitialData((Piece(0.75, 1.25, 0.8),)), grid)
    s = make_scheme("godunov", ARR)
    mon = InvariantMonitor(ARR, get_kernel("linear"), w, s, grid, cells)
    try:
        run(ARR, s, w, grid, cells, strict=False, monitor=mon)
    except SolverError:
        pass   # a blow-up to non-finite values is also acceptable; records precede it
    assert mon.report.failed("maximum_principle")
    assert not mon.report.passed


def test_error_table_csv():
    t = ErrorTable([0, 1], [0.01, 0.005], {"godunov": [0.02, 0.01]})
    lines = t.to_csv().splitlines()
    assert lines[0] == "n,dx,godunov_l1_error,godunov_eoc"
    assert lines[1] == "0,0.01,0.02,"
    assert lines[2] == "1,0.005,0.01,1.0"
    with pytest.raises(DiagnosticsError):
        ErrorTable([0, 1], [0.01, 0.004], {"g": [1, 2]})
