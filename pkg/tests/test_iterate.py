import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from pqss.errors import (FlatnessViolationError, LambdaTooSmallError,
                         MonotonicityBreakdownError, NonconvergenceError)
from pqss.fem import Field, p_jacobian, weak_residual_system, weighted_mass_matrix
from pqss.iterate import (IterateOptions, SolutionBundle, is_positive, monotone_iterate,
                          newton_system, solve_existence, solve_multiplicity)
from pqss.mesh import build_interval_mesh
from pqss.nonlinearity import NonlinearityQuad, polynomial_sum
from pqss.problem import ProblemParams
from pqss.spectral import torsion_function
from pqss.subsuper import OrderedPair, ordering_report, torsion_supersolution

from conftest import ex31_quad

NL = ex31_quad()
BASE = ProblemParams(2.0, 2.0, 1.0, 1.0, 1.0, 1.0)
ZERO = polynomial_sum([(0.0, 0.0)])


@pytest.fixture(scope="module")
def existence(interval128):
    return solve_existence(interval128, BASE, NL)


def test_existence_fixture(existence, interval128):
    b = existence.bundle
    assert max(b.residual_norms) < 1e-8
    inner = interval128.interior_nodes
    assert np.all(b.u.values[inner] > 0) and np.all(b.v.values[inner] > 0)
    assert is_positive(b)
    pair = existence.pair
    assert np.all(pair.sub_u.values <= b.u.values) and np.all(b.u.values <= pair.super_u.values)
    assert np.all(pair.sub_v.values <= b.v.values) and np.all(b.v.values <= pair.super_v.values)
    ru, rv = weak_residual_system(b.u, b.v, existence.params, NL)
    assert (ru.norm, rv.norm) == b.residual_norms
    tail = b.history[-5:]
    assert all(x >= y for x, y in zip(tail, tail[1:]))


def test_up_limit_below_down_limit(existence):
    down = monotone_iterate(existence.pair, existence.params, NL, "down")
    up = existence.bundle
    assert np.all(up.u.values <= down.u.values + 1e-9 * down.u.max())
    assert np.all(up.v.values <= down.v.values + 1e-9 * down.v.max())


def test_fixed_point_pair(existence):
    b = existence.bundle
    pair = OrderedPair(b.u, b.v, b.u, b.v, ordering={"passed": True})
    opts = IterateOptions(order_tol=1e-8)
    again = monotone_iterate(pair, existence.params, NL, "up", opts)
    assert again.iterations == 1 and again.history[0] <= 1e-10


def test_existence_deterministic(interval128, existence):
    other = solve_existence(interval128, BASE, NL)
    assert other.bundle.iterations == existence.bundle.iterations
    assert other.bundle.residual_norms == existence.bundle.residual_norms
    assert np.array_equal(other.bundle.u.values, existence.bundle.u.values)


def test_zero_parameters_rejected(interval128):
    with pytest.raises(LambdaTooSmallError) as exc:
        solve_existence(interval128, ProblemParams(2, 2), NL, mode="fixed")
    assert exc.value.stage == "subsolution"


def test_breakdown_from_non_subsolution(existence):
    b = existence.bundle
    big_u, big_v = b.u * 2.0, b.v * 2.0
    pair = OrderedPair(big_u, big_v, big_u * 2.0, big_v * 2.0, ordering={"passed": True})
    with pytest.raises(MonotonicityBreakdownError) as exc:
        monotone_iterate(pair, existence.params, NL, "up")
    assert exc.value.iteration == 1


def test_iteration_cap(existence):
    with pytest.raises(NonconvergenceError) as exc:
        monotone_iterate(existence.pair, existence.params, NL, "up", IterateOptions(max_iter=2))
    assert isinstance(exc.value.last, SolutionBundle) and exc.value.last.iterations == 2


def _direct_linear(mesh, lam, c):
    """(K - M)u = λ M v + λ c ∫ξ, (K - M)v = λ M u + λ c ∫ξ, solved as one block system."""
    inner = mesh.interior_nodes
    K = p_jacobian(mesh, np.zeros(mesh.num_nodes), 2.0, 0.0)[inner][:, inner]
    M = weighted_mass_matrix(mesh, 1.0)
    ones = (M @ np.ones(mesh.num_nodes))[inner]
    M = M[inner][:, inner]
    A = sp.bmat([[K - M, -lam * M], [-lam * M, K - M]]).tocsc()
    x = spsolve(A, lam * c * np.concatenate([ones, ones]))
    u, v = np.zeros(mesh.num_nodes), np.zeros(mesh.num_nodes)
    n = inner.size
    u[inner], v[inner] = x[:n], x[n:]
    return u, v


@pytest.mark.parametrize("offset", [0.0, 1.0])
def test_linear_oracle(offset):
    mesh = build_interval_mesh(128)
    terms = [(1.0, 1.0)] + ([(offset, 0.0)] if offset else [])
    lin = polynomial_sum(terms)
    nl = NonlinearityQuad(lin, lin, ZERO, ZERO)
    params = ProblemParams(2.0, 2.0, 1.0, 1.0, 0.0, 0.0)
    tor = torsion_function(mesh, 2.0)
    zero = Field.constant(mesh, 0.0)
    su, sv, _, _ = torsion_supersolution(params, nl, tor, tor, lower=(zero, zero))
    pair = OrderedPair(zero, zero, su, sv, ordering=ordering_report(zero, zero, su, sv))
    opts = IterateOptions(step_tol=1e-13, res_tol=1e-10)
    bundle = monotone_iterate(pair, params, nl, "down", opts)
    ref_u, ref_v = _direct_linear(mesh, 1.0, offset)
    err = max(np.max(np.abs(bundle.u.values - ref_u)), np.max(np.abs(bundle.v.values - ref_v)))
    assert err < 1e-8
    if offset:
        assert ref_u.max() > 0.1


def test_newton_polishes_perturbed_solution(existence):
    b = existence.bundle
    x = b.u.mesh.nodes[:, 0]
    bump = 1e-3 * b.u.max() * np.sin(np.pi * x) ** 2
    u, v, res = newton_system(Field(b.u.mesh, b.u.values + bump), b.v, existence.params, NL,
                              tol=1e-9)
    assert res <= 1e-9
    assert np.max(np.abs(u.values - b.u.values)) < 1e-6 * b.u.max()


def test_is_positive_excludes_zero(interval128):
    tiny = Field.constant(interval128, 0.0)
    b = SolutionBundle(tiny, tiny, (0.0, 0.0), 1, (), "psi-zeta")
    assert not is_positive(b)
    eps_field = Field(interval128, 1e-12 * np.sin(np.pi * interval128.nodes[:, 0]))
    assert not is_positive(SolutionBundle(eps_field, eps_field, (0.0, 0.0), 1, (), "x"))


def test_multiplicity_flatness_gate(interval128):
    with pytest.raises(FlatnessViolationError):
        solve_multiplicity(interval128, BASE, NL)
