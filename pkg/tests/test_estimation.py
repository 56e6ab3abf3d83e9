import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import estimated, solved
from hexpde import estimation as est
from hexpde.estimation import EstimationError, Strategy
from hexpde.mesh import build_cube_mesh, face_neighbours
from hexpde.reference import FACES, Q2_NODES, q1_eval

REF = np.array([[1, -1, -1], [1, 1, -1], [-1, 1, 1], [1, 1, 1], [-1, -1, -1]], dtype=float)
unit = st.floats(-1.0, 1.0)


def test_dimensions():
    assert [len(s.nodes) for s in Strategy] == [19, 7, 19, 7]
    assert Strategy("q2rh").reduced and not Strategy.Q2H.reduced
    assert Strategy.Q1RH2.piecewise and not Strategy.Q2RH.piecewise


def test_reduced_nodes_are_face_centres_and_centre():
    for node in Strategy.Q2RH.nodes:
        assert np.abs(Q2_NODES[node]).sum() <= 1


def test_q2h_centre_bubble():
    b = est.bubble_basis("q2h", [0, 0, 0]).values[0]
    k = Strategy.Q2H.nodes.index(21)
    assert b[k] == 1.0 and np.count_nonzero(b) == 1


@pytest.mark.parametrize("s", list(Strategy))
def test_bubbles_are_lagrangian_at_their_nodes(s):
    b = est.bubble_basis(s, Q2_NODES[list(s.nodes)]).values
    assert np.allclose(b, np.eye(len(s.nodes)), atol=1e-14)
    assert np.allclose(est.bubble_basis(s, Q2_NODES[:8]).values, 0.0, atol=1e-14)


def test_q1h2_octant_centre():
    b = est.bubble_basis("q1h2", [0.5, 0.5, 0.5]).values[0]
    assert np.all((b >= 0) & (b <= 1))
    for k, node in enumerate(Strategy.Q1H2.nodes):
        c = Q2_NODES[node]
        expect = np.prod([1 - 0.5 if ci == 0 else (0.5 if ci > 0 else 0.0) for ci in c])
        assert b[k] == pytest.approx(expect)
        if np.any(c < 0):
            assert b[k] == 0


@given(unit, unit, unit)
def test_piecewise_gradient_finite_difference(x, y, z):
    p = np.array([x, y, z])
    if np.any(np.abs(p) < 1e-3) or np.any(np.abs(p) > 1 - 1e-3):
        return  # kinks on the octant planes
    b = est.bubble_basis("q1h2", p)
    h = 1e-6
    for a in range(3):
        d = np.zeros(3)
        d[a] = h
        fd = (est.bubble_basis("q1h2", p + d).values - est.bubble_basis("q1h2", p - d).values) / (2 * h)
        assert np.allclose(fd[0], b.ref_gradients[0, :, a], atol=1e-7)


def test_residual_constant_solution():
    mesh = build_cube_mesh(2)
    r = est.interior_residual(mesh, np.full(27, 3.0), 1.0, REF)
    assert np.allclose(r, 1.0)


def test_residual_xyz_harmonic():
    mesh = build_cube_mesh(3)
    v = mesh.dofs(1)[0]
    u = v[:, 0] * v[:, 1] * v[:, 2]
    r = est.interior_residual(mesh, u, lambda x: 2.0 + x[:, 0], REF)
    xq = np.matmul(q1_eval(REF).values[None], v[mesh.dofs(1)[1]])
    assert np.allclose(r, 2.0 + xq[..., 0], atol=1e-12)


def test_residual_interpolant_of_x_squared():
    corners = Q2_NODES[:8][None].astype(float)
    u = corners[0, :, 0] ** 2
    lap = est.laplacian_q1(corners, u[None], REF)
    assert np.allclose(lap, 0.0, atol=1e-14)


def _fd_laplacian(corners, u, xi, h=1e-3):
    """Finite-difference Laplacian of x -> u(xi(x)) via Newton inversion."""
    from hexpde.io import _inverse_map

    x0 = q1_eval(xi[None]).values[0] @ corners

    def f(x):
        r = _inverse_map(corners[None], x[None], iters=60, tol=1e-15)[0]
        return q1_eval(r[None]).values[0] @ u

    total = 0.0
    for a in range(3):
        d = np.zeros(3)
        d[a] = h
        total += (f(x0 + d) - 2 * f(x0) + f(x0 - d)) / h**2
    return total


@given(st.integers(0, 10_000))
def test_laplacian_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    corners = Q2_NODES[:8].astype(float) + 0.1 * rng.uniform(-1, 1, (8, 3))
    u = rng.normal(size=8)
    xi = rng.uniform(-0.5, 0.5, 3)
    lap = est.laplacian_q1(corners[None], u[None], xi[None])[0, 0]
    assert lap == pytest.approx(_fd_laplacian(corners, u, xi), abs=2e-5 * (1 + abs(lap)))


def test_jumps_vanish_for_linear():
    mesh = build_cube_mesh(3)
    v = mesh.dofs(1)[0]
    u = 1 + 2 * v[:, 0] - v[:, 1] + 0.5 * v[:, 2]
    for e in range(mesh.n_elements):
        for f in range(1, 7):
            assert np.abs(est.flux_jumps(mesh, u, e, f)).max() < 1e-12


@pytest.mark.parametrize("s1,s2", [(1.0, 3.0), (-2.0, 0.5)])
def test_jump_of_kinked_function(s1, s2):
    mesh = build_cube_mesh(2)
    v = mesh.dofs(1)[0]
    u = np.where(v[:, 0] <= 0, s1 * v[:, 0], s2 * v[:, 0])
    centroids = v[mesh.dofs(1)[1]].mean(axis=1)
    e = int(np.flatnonzero(centroids[:, 0] < 0)[0])
    f = FACES.index((0, 1)) + 1
    jump = est.flux_jumps(mesh, u, e, f)
    assert np.allclose(jump, 0.5 * (s2 - s1))
    assert np.allclose(np.abs(jump), 0.5 * abs(s1 - s2))


def test_boundary_face_jump_zero():
    mesh = build_cube_mesh(2)
    sol = solved("cube", 2)
    e, f = mesh.boundary_faces[0]
    assert np.all(est.flux_jumps(mesh, sol.u, int(e), int(f)) == 0)


def test_jumps_single_valued_cube2():
    sol = solved("cube", 2)
    mesh = sol.mesh
    nbr = face_neighbours(mesh)
    checked = 0
    for e in range(mesh.n_elements):
        for f in range(6):
            o = nbr[e, f]
            if o < 0:
                continue
            ax, side = FACES[f]
            g = FACES.index((ax, -side))
            assert nbr[o, g] == e
            a = est.flux_jumps(mesh, sol.u, e, f + 1)
            b = est.flux_jumps(mesh, sol.u, int(o), g + 1)
            # (grad u_B - grad u_A).n_A == (grad u_A - grad u_B).n_B: one value per face
            assert np.allclose(a, b, atol=1e-12)
            checked += 1
    assert checked == 24


@pytest.mark.parametrize("s", list(Strategy))
def test_zero_data_zero_estimate(s):
    mesh = build_cube_mesh(4)
    r = est.estimate(mesh, np.zeros(125), 0.0, s)
    assert r.global_ == 0.0 and np.all(r.per_element == 0)


@pytest.mark.parametrize("s", list(Strategy))
@pytest.mark.parametrize("bc", [False, True])
def test_local_solve_consistency(s, bc):
    sol = solved("staircase", 4)
    K, r = est.local_problems(sol.mesh, sol.u, 1.0, s, bc)
    e = np.linalg.solve(K, r[..., None])[..., 0]
    a = np.einsum("ei,eij,ej->e", e, K, e)
    b = np.einsum("ei,ei->e", r, e)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)
    ee = estimated("staircase", 4, s.value, bc)
    assert np.allclose(ee.per_element ** 2, b, rtol=1e-10, atol=1e-15)
    assert np.all(ee.per_element >= 0)
    assert ee.global_ ** 2 == pytest.approx(np.sum(ee.per_element ** 2), rel=1e-12)


def test_staircase_frozen(oracles):
    assert estimated("staircase", 4, "q2rh", False).global_ == pytest.approx(
        oracles["staircase4_estimate_q2rh"], rel=1e-12)


def test_batching_does_not_change_result():
    sol = solved("cube", 8)
    a = est.estimate(sol.mesh, sol.u, 1.0, "q1rh2", True, batch_size=37)
    b = estimated("cube", 8, "q1rh2", True)
    assert np.allclose(a.per_element, b.per_element, rtol=1e-13)


@pytest.mark.parametrize("s", list(Strategy))
@pytest.mark.parametrize("bc", ["on", "off"])
def test_cube8_frozen(s, bc, oracles):
    got = estimated("cube", 8, s.value, bc == "on").global_
    assert got == pytest.approx(oracles["cube8_estimates"][f"{s.value}_{bc}"], rel=1e-10)


@pytest.mark.parametrize("n", [8, 16])
@pytest.mark.parametrize("bc", [False, True])
def test_full_dominates_reduced(n, bc):
    g = {s: estimated("cube", n, s, bc).global_ for s in ("q2h", "q2rh", "q1h2", "q1rh2")}
    assert g["q2h"] >= g["q2rh"] and g["q1h2"] >= g["q1rh2"]


@pytest.mark.parametrize("s", list(Strategy))
def test_correction_lowers_estimate(s):
    for problem, n in (("cube", 8), ("staircase", 4), ("manufactured", 8)):
        assert estimated(problem, n, s.value, False).global_ >= estimated(problem, n, s.value, True).global_


def test_default_strategy_is_q2rh():
    sol = solved("cube", 4)
    r = est.estimate(sol.mesh, sol.u)
    assert r.strategy is Strategy.Q2RH and r.boundary_correction is False


def test_accepts_discrete_system():
    sol = solved("cube", 4)
    assert est.estimate(sol.system, sol.u).global_ == pytest.approx(est.estimate(sol.mesh, sol.u).global_)


def test_rejects_q2():
    sol = solved("cube", 4, 2)
    with pytest.raises(EstimationError, match="requires Q1"):
        est.estimate(sol.mesh, sol.u)
    with pytest.raises(EstimationError, match="requires Q1"):
        est.estimate(sol.system, sol.u)
    with pytest.raises(ValueError):
        est.estimate(sol.mesh, sol.u[:10])


def test_unknown_strategy():
    with pytest.raises(ValueError):
        Strategy("q3h")


def test_cube32_q2h_estimate():
    assert estimated("cube", 32, "q2h", True).global_ == pytest.approx(0.037648, rel=0.02)


def test_effectivity():
    assert est.effectivity(0.1, 1.01, 1.0) == pytest.approx(1.0)
    assert est.effectivity(0.05, 1.01, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        est.effectivity(0.1, 0.9, 1.0)


def test_effectivity_cube16_q2rh():
    sol = solved("cube", 16)
    theta = est.effectivity(estimated("cube", 16, "q2rh", True).global_, 0.64539192, sol.energy_sq)
    assert theta == pytest.approx(0.9297, abs=0.02)


def test_degenerate_element_signals():
    mesh = build_cube_mesh(2)
    nodes = mesh.nodes.copy()
    # collapse one element's vertices onto a plane
    e0 = mesh.elements_q2[0]
    nodes[e0, 2] = nodes[e0[0], 2]
    bad = type(mesh)(nodes, mesh.elements_q2, mesh.boundary_nodes, mesh.boundary_faces,
                     mesh.domain_tag, mesh.vertex_mask, mesh.params)
    with pytest.raises(Exception):
        est.estimate(bad, np.zeros(27), 1.0)
