import numpy as np
import pytest

from gridcert import kernels
from gridcert.netmodel import Mode, NodeKind, ReducedNetwork, assemble_admittance, parse_case
from gridcert.numerics import sup_norm
from gridcert.powerflow import (ResidualModel, ShortCircuitError, SolverConfig, Variant,
                                approx_newton_solve, build_model, jacobian, newton_solve,
                                residual)
from gridcert.synthetic import random_case

from conftest import two_node_text


def two_node_voltage(g, p, v_master=1.0):
    # g v^2 - g v_v v - p = 0, upper root
    return (g * v_master + np.sqrt((g * v_master) ** 2 + 4 * g * p)) / (2 * g)


def test_unloaded_residual_vanishes(ieee21):
    model = build_model(ieee21.scaled(0.0), Mode.MASTER_SLAVE)
    # node 14 shunt makes the flat start non-stationary; drop it for this check
    no_shunt = parse_case(
        "#master 1 1.0\nfrom,to,r,P,inv_C\n1,2,0.01,0,0.05\n2,3,0.02,0,0.05\n2,4,0.01,0,0.05\n")
    f = residual(build_model(no_shunt), np.ones(3))
    np.testing.assert_allclose(f, 0.0, atol=1e-12)
    assert sup_norm(residual(model, np.ones(model.size))) == pytest.approx(0.1231, abs=5e-5)


def test_flat_start_residual(ieee21_ms):
    f0 = sup_norm(residual(ieee21_ms, np.ones(ieee21_ms.size)))
    assert f0 == pytest.approx(0.796470017556558, rel=1e-10)


def test_zero_voltage_rejected(ieee21_ms):
    v = np.ones(ieee21_ms.size)
    v[3] = 0.0
    with pytest.raises(ShortCircuitError):
        residual(ieee21_ms, v)
    with pytest.raises(ShortCircuitError):
        jacobian(ieee21_ms, v)


def test_jacobian_at_flat_start(ieee21_ms, ieee21):
    jac = jacobian(ieee21_ms, np.ones(ieee21_ms.size))
    np.testing.assert_allclose(jac, -np.diag(ieee21_ms.power) - ieee21_ms.net.y_pp)
    droopless = parse_case("#mode island\n#master 1 1.0\nfrom,to,r,P,inv_C\n"
                           "1,2,0.01,-0.1,0\n2,3,0.02,0.3,0\n1,4,0.01,-0.2,0\n")
    model = build_model(droopless)
    np.testing.assert_allclose(jacobian(model, np.ones(3)),
                               -np.diag(model.power) - model.net.y_s)


def _fd_jacobian(model, v, h=1e-6):
    cols = []
    for i in range(v.size):
        e = np.zeros(v.size)
        e[i] = h
        cols.append((residual(model, v + e) - residual(model, v - e)) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("mode", [Mode.MASTER_SLAVE, Mode.ISLAND])
def test_jacobian_matches_central_differences(mode, ieee21, rng):
    model = build_model(ieee21, mode)
    for _ in range(50):
        v = rng.uniform(0.7, 1.3, size=model.size)
        jac = jacobian(model, v)
        err = np.max(np.abs(jac - _fd_jacobian(model, v)))
        assert err <= 1e-5 * max(1.0, np.abs(jac).max())


@pytest.mark.parametrize("name", ["residual", "jacobian"])
def test_numpy_and_numba_kernels_agree(name, ieee21_island, rng):
    m = ieee21_island
    for _ in range(20):
        v = rng.uniform(0.8, 1.2, size=m.size)
        if name == "residual":
            args = (m._a, m._c, m._b, m._y, v)
        else:
            args = (m._a, m._y, v)
        a = kernels.NUMPY_KERNELS[name](*args)
        b = kernels.NUMBA_KERNELS[name](*args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)


def test_newton_ieee21_trace(ieee21_ms):
    res = newton_solve(ieee21_ms, SolverConfig(tol=1e-12))
    r = res.trace.residual_norms
    assert res.converged and res.iterations == 3
    assert r[0] == pytest.approx(0.796470017556558, rel=1e-10)
    assert r[1] == pytest.approx(1.58828382884e-4, rel=1e-6)
    assert r[2] == pytest.approx(1.2215e-11, rel=0.02)
    assert r[3] < 1e-12


def test_unloaded_converges_at_iteration_zero():
    case = parse_case("#master 1 1.0\nfrom,to,r,P,inv_C\n1,2,0.01,0,0.05\n2,3,0.02,0,0.05\n")
    for solver in (newton_solve, approx_newton_solve):
        res = solver(build_model(case))
        assert res.converged and res.iterations == 0
        np.testing.assert_array_equal(res.voltages, np.ones(2))


def test_two_node_closed_form():
    model = build_model(parse_case(two_node_text(r=0.01, p=-0.1)))
    expected = (1 + np.sqrt(1 + 4 * (-0.1) / 100)) / 2
    assert expected == pytest.approx(0.998998997995, rel=1e-11)
    for solver in (newton_solve, approx_newton_solve):
        res = solver(model)
        assert res.voltages[0] == pytest.approx(expected, abs=1e-12)


def test_two_node_random_oracle(rng):
    for _ in range(50):
        g = rng.uniform(50, 300)
        p = rng.uniform(-0.2, 0.2) * g
        model = build_model(parse_case(two_node_text(r=1 / g, p=p)))
        expected = two_node_voltage(g, p)
        for solver in (newton_solve, approx_newton_solve):
            res = solver(model, SolverConfig(tol=1e-12, max_iter=200,
                                              variant=Variant.NEWTON))
            assert res.converged
            assert abs(res.voltages[0] - expected) <= 1e-10


def test_approx_first_iterate_bit_identical(ieee21_ms, ieee21_island):
    for model in (ieee21_ms, ieee21_island):
        a = newton_solve(model).trace.records[1].v
        b = approx_newton_solve(model).trace.records[1].v
        assert a.tobytes() == b.tobytes()


def test_approx_ieee21_trace(ieee21_ms):
    res = approx_newton_solve(ieee21_ms)
    r = res.trace.residual_norms
    assert res.converged
    np.testing.assert_allclose(r[2:4], [8.7443442e-8, 5.2993e-11], rtol=0.01)


def test_island_fig4_traces(ieee21_island_ref):
    newton = newton_solve(ieee21_island_ref).trace.residual_norms
    approx = approx_newton_solve(ieee21_island_ref).trace.residual_norms
    np.testing.assert_allclose(newton[:3], [0.877898964219528, 0.004385437319859,
                                            3.20721296e-7], rtol=1e-6)
    np.testing.assert_allclose(approx[:6], [0.877898964219528, 0.004385437319859,
                                            6.5337705128e-5, 1.171717181e-6, 2.073515e-8,
                                            3.66552e-10], rtol=1e-3)
    # roundoff-level from here on
    assert approx[6] == pytest.approx(6.484e-12, rel=0.02)
    assert len(approx) - 1 in (7, 8)


def test_trace_consistency(ieee21_ms):
    res = newton_solve(ieee21_ms)
    recs = res.trace.records
    for k in range(len(recs) - 1):
        assert recs[k].step_norm == pytest.approx(sup_norm(recs[k + 1].v - recs[k].v), rel=1e-12)
    assert np.isnan(recs[-1].step_norm)
    assert sup_norm(residual(ieee21_ms, res.voltages)) <= 1e-12
    assert res.min_voltage > 0


def test_divergence_reported(ieee21):
    # heavy loading: flat-start Newton leaves the positive orthant or stalls
    model = build_model(ieee21.scaled(-40.0), Mode.MASTER_SLAVE)
    res = newton_solve(model, SolverConfig(max_iter=40))
    assert not res.converged
    assert res.status in ("diverged", "max_iter")


def test_max_iter_reported(ieee21_ms):
    res = approx_newton_solve(ieee21_ms, SolverConfig(max_iter=2, variant="approx"))
    assert res.status == "max_iter"
    assert res.iterations == 2
    assert not res.converged


def test_singular_initial_jacobian():
    # droopless island, Y_s = [[50,-50],[-50,50]]; P = -100 makes -diag(P) - Y_s singular
    case = parse_case("#mode island\n#master 1 1.0\nfrom,to,r,P,inv_C\n"
                      "1,2,0.01,-100,0\n1,3,0.01,-100,0\n")
    model = build_model(case)
    for solver in (newton_solve, approx_newton_solve):
        assert solver(model).status == "singular_jacobian"


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    assert SolverConfig(variant="approx-newton").variant is Variant.APPROX


def full_model(case):
    """Master-slave model keeping class-r nodes as explicit zero-power unknowns."""
    blocks = assemble_admittance(case)
    nv = len(blocks.v_ids)
    ids = blocks.p_ids + blocks.r_ids
    y = blocks.y[nv:, nv:].copy()
    shunt = np.array([case.node(n).shunt for n in ids])
    y += np.diag(shunt)
    net = ReducedNetwork(y_pp=y, y_pv=blocks.y[nv:, :nv], y_vv=blocks.y[:nv, :nv],
                         y_s=np.zeros((0, 0)), index_map=ids, master_ids=blocks.v_ids,
                         mode=Mode.MASTER_SLAVE)
    power = np.array([case.node(n).power for n in ids])
    return ResidualModel(Mode.MASTER_SLAVE, net, power, np.zeros(len(ids)),
                         np.ones(len(ids)), case.v_master)


def test_kron_equivalence(rng):
    checked = 0
    while checked < 50:
        case = random_case(rng, int(rng.integers(3, 21)), p_scale=0.5, zero_frac=0.3,
                           shunt_frac=0.15, extra_edges=int(rng.integers(0, 3)))
        if not any(n.kind in (NodeKind.ZERO_INJECTION, NodeKind.RESISTIVE) for n in case.nodes):
            continue
        red = newton_solve(build_model(case, Mode.MASTER_SLAVE))
        full = newton_solve(full_model(case))
        assert red.converged and full.converged
        np.testing.assert_allclose(full.voltages[:red.voltages.size], red.voltages, atol=1e-10)
        checked += 1
