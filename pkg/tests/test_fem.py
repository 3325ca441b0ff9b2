import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from subdiffinv.fem import (
    InvalidCoefficientError,
    assemble_boundary_load,
    assemble_mass,
    assemble_stiffness,
    assemble_system,
    build_interval_mesh,
    build_unit_square_mesh,
    integrate_dofs,
    l2_project,
)

MESHES = [
    pytest.param(lambda: build_interval_mesh(1), id="1d-1"),
    pytest.param(lambda: build_interval_mesh(7), id="1d-7"),
    pytest.param(lambda: build_unit_square_mesh(1), id="2d-1"),
    pytest.param(lambda: build_unit_square_mesh(5), id="2d-5"),
]


def cos_bump_1d(x):
    return 1.0 + np.cos(2 * np.pi * x[:, 0])


def cos_bump_2d(x):
    return (1.0 + np.cos(np.pi * x[:, 0])) * (1.0 + np.cos(np.pi * x[:, 1]))


# {{{ meshes


def test_interval_mesh_small():
    mesh = build_interval_mesh(1)
    assert mesh.nodes[:, 0].tolist() == [0.0, 1.0]
    assert mesh.nelements == 1 and mesh.h == 1.0

    mesh = build_interval_mesh(2)
    assert mesh.nodes[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert mesh.nelements == 2 and mesh.h == 0.5


def test_interval_mesh_measures():
    mesh = build_interval_mesh(100)
    assert mesh.nnodes == 101
    assert mesh.measures.sum() == pytest.approx(1.0, abs=1e-14)
    assert len(mesh.boundary_facets) == 2


@pytest.mark.parametrize("n", [1, 4, 8])
def test_square_mesh_counts(n):
    mesh = build_unit_square_mesh(n)
    assert mesh.nnodes == (n + 1) ** 2
    assert mesh.nelements == 2 * n * n
    assert mesh.h == pytest.approx(np.sqrt(2) / n)
    assert mesh.measures.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(mesh.measures, 0.5 / n**2)

    edges = np.asarray(mesh.boundary_facets)
    assert len(edges) == 4 * n
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    assert lengths.sum() == pytest.approx(4.0, abs=1e-14)


@pytest.mark.parametrize("builder", [build_interval_mesh, build_unit_square_mesh])
def test_mesh_rejects_zero(builder):
    with pytest.raises(ValueError):
        builder(0)


# }}}


# {{{ matrices


def test_mass_row_sums_1d():
    M = assemble_mass(build_interval_mesh(2))
    np.testing.assert_allclose(M.sum(axis=1).A1, [0.25, 0.5, 0.25], rtol=1e-15)


def test_stiffness_stencil_1d():
    K = assemble_stiffness(build_interval_mesh(2)).toarray()
    assert K[1, 1] == pytest.approx(4.0)
    assert K[1, 0] == pytest.approx(-2.0)
    assert K[1, 2] == pytest.approx(-2.0)


@pytest.mark.parametrize("make_mesh", MESHES)
def test_matrix_invariants(make_mesh):
    mesh = make_mesh()
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)
    ones = np.ones(mesh.nnodes)

    assert ones @ M @ ones == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(K @ ones)) < 1e-12
    assert abs(M - M.T).max() == 0.0
    assert abs(K - K.T).max() < 1e-14
    assert np.all(M.diagonal() > 0)
    assert np.min(np.linalg.eigvalsh(K.toarray())) > -1e-12


@pytest.mark.parametrize("make_mesh", MESHES)
def test_mass_positive_definite(make_mesh):
    M = assemble_mass(make_mesh()).tocsc()
    # inverse iteration for the smallest eigenvalue
    lu = spla.splu(M)
    v = np.random.default_rng(0).standard_normal(M.shape[0])
    for _ in range(200):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
    lam_min = v @ (M @ v)
    assert lam_min > 0
    exact = np.min(np.linalg.eigvalsh(M.toarray()))
    assert exact * (1 - 1e-12) <= lam_min <= exact * (1 + 1e-2)


def test_stiffness_is_linear_in_coefficient():
    mesh = build_unit_square_mesh(4)

    def a0(x):
        return 1.0 + x[:, 0] * x[:, 1]

    K1 = assemble_stiffness(mesh, a0)
    K2 = assemble_stiffness(mesh, lambda x: 2.0 * a0(x))
    assert abs(K2 - 2 * K1).max() < 1e-14


def test_stiffness_rejects_nonpositive_coefficient():
    mesh = build_interval_mesh(4)
    with pytest.raises(InvalidCoefficientError):
        assemble_stiffness(mesh, lambda x: x[:, 0] - 0.5)
    with pytest.raises(InvalidCoefficientError):
        assemble_stiffness(mesh, 0.0)


def test_boundary_load():
    mesh1 = build_interval_mesh(4)
    assert np.all(assemble_boundary_load(mesh1, 0.0) == 0)
    np.testing.assert_array_equal(assemble_boundary_load(mesh1, 1.0), [1, 0, 0, 0, 1])
    b = assemble_boundary_load(mesh1, lambda x: 3.0 + x[:, 0])
    np.testing.assert_allclose(b, [3, 0, 0, 0, 4])

    mesh2 = build_unit_square_mesh(6)
    b = assemble_boundary_load(mesh2, 1.0)
    assert b.sum() == pytest.approx(4.0, abs=1e-13)
    assert np.all(assemble_boundary_load(mesh2, None) == 0)


# }}}


# {{{ projection and integration


@pytest.mark.parametrize("make_mesh", MESHES)
def test_projection_reproduces_constants(make_mesh):
    system = assemble_system(make_mesh())
    np.testing.assert_allclose(l2_project(system, 2.5), 2.5, atol=1e-10)


@pytest.mark.parametrize("make_mesh", MESHES)
def test_projection_is_identity_on_p1(make_mesh):
    system = assemble_system(make_mesh())
    x = system.mesh.nodes

    def v(y):
        return 0.3 + y @ np.arange(1.0, y.shape[1] + 1)

    np.testing.assert_allclose(l2_project(system, v), v(x), atol=1e-10)


def test_projection_preserves_mean_1d():
    system = assemble_system(build_interval_mesh(100))
    c = l2_project(system, cos_bump_1d)
    assert integrate_dofs(system, c) == pytest.approx(1.0, abs=1e-6)


def test_projection_preserves_mean_2d():
    system = assemble_system(build_unit_square_mesh(16))
    c = l2_project(system, cos_bump_2d)
    assert integrate_dofs(system, c) == pytest.approx(1.0, abs=1e-3)


def test_projection_integral_matches_load_quadrature():
    # testing with phi = 1 gives int P_h v = sum_i b_i exactly
    for mesh in (build_interval_mesh(9), build_unit_square_mesh(5)):
        system = assemble_system(mesh)

        def v(x):
            return np.exp(np.sum(x, axis=1))

        b = system.M @ l2_project(system, v)
        assert integrate_dofs(system, l2_project(system, v)) == pytest.approx(b.sum(), abs=1e-10)


def test_integrate_dofs():
    s1 = assemble_system(build_interval_mesh(5))
    s2 = assemble_system(build_unit_square_mesh(3))
    assert integrate_dofs(s1, np.ones(s1.ndofs)) == pytest.approx(1.0, abs=1e-14)
    assert integrate_dofs(s2, 2 * np.ones(s2.ndofs)) == pytest.approx(2.0, abs=1e-14)

    batch = np.vstack([np.ones(s1.ndofs), 3 * np.ones(s1.ndofs)])
    np.testing.assert_allclose(integrate_dofs(s1, batch), [1.0, 3.0])

    with pytest.raises(ValueError):
        integrate_dofs(s1, np.ones(s1.ndofs + 1))


def test_projection_integral_converges_quadratically_2d():
    def v(x):
        return np.sin(3 * x[:, 0] + 1) * np.cosh(x[:, 1])

    # exact integral: (cos 1 - cos 4) / 3 * sinh 1
    exact = (np.cos(1.0) - np.cos(4.0)) / 3 * np.sinh(1.0)
    errors = []
    for n in (4, 8, 16, 32):
        system = assemble_system(build_unit_square_mesh(n))
        errors.append(abs(integrate_dofs(system, l2_project(system, v)) - exact))

    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(slopes > 1.8)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), coeffs=st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_projection_of_quadratic_integrates_exactly_1d(n, coeffs):
    a, b, c = coeffs
    system = assemble_system(build_interval_mesh(n))

    def v(x):
        return a + b * x[:, 0] + c * x[:, 0] ** 2

    exact = a + b / 2 + c / 3
    assert integrate_dofs(system, l2_project(system, v)) == pytest.approx(exact, abs=1e-10)


# }}}
