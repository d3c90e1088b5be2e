import numpy as np
import pytest
import scipy.sparse as sp

from conftest import smooth_positive
from refugia.fields import Region, ScalarField, SystemState, constant_state
from refugia.geometry import GridSpec, RefugeShape, build_geometry
from refugia.operators import ModelParams, assemble_jacobian
from refugia.spectral import (
    StabilityFlag,
    classify_stability,
    classify_value,
    leading_eigenvalue,
    semitrivial_leading_analytic,
)
from refugia.steady import NewtonConfig, newton_solve, solve_kernel_function


def _semitrivial_jacobian(params, geom):
    st = constant_state(geom, params.lam, 0.0)
    return assemble_jacobian(params, st.u, st.v, geom)


def test_diagonal_operator():
    J = sp.diags([-3.0, -1.0, 2.0]).tocsr()
    ep = leading_eigenvalue(J)
    assert ep.value == pytest.approx(2.0, abs=1e-12)
    assert np.argmax(np.abs(ep.vector)) == 2
    assert abs(ep.vector[2]) == pytest.approx(1.0)


def test_semitrivial_leading_matches_formula(geom16):
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.2)
    ep = leading_eigenvalue(_semitrivial_jacobian(p, geom16))
    assert ep.value == pytest.approx(-0.2, abs=1e-8)
    assert not ep.complex_pair
    # the predator part of the eigenvector is the (near-)constant mode
    v_part = ep.vector[geom16.n_omega :]
    assert np.ptp(v_part) <= 1e-6 * np.max(np.abs(v_part))


def test_semitrivial_marginal_at_threshold(geom16):
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.0)
    J = _semitrivial_jacobian(p, geom16)
    ep = leading_eigenvalue(J)
    assert abs(ep.value) <= 1e-8
    assert classify_stability(J) is StabilityFlag.MARGINAL


def test_analytic_oracle_values():
    assert semitrivial_leading_analytic(
        ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.2)
    ) == pytest.approx(-0.2)
    p_star = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.0)
    assert semitrivial_leading_analytic(p_star) == pytest.approx(0.0, abs=1e-15)
    prey_dominated = ModelParams(lam=0.1, m=0.0, c=1.0, b=1.0, mu=5.0)
    assert semitrivial_leading_analytic(prey_dominated) == pytest.approx(-0.1)


def test_prey_dominated_case_against_dense(geom16):
    p = ModelParams(lam=0.1, m=0.0, c=1.0, b=1.0, mu=5.0)
    J = _semitrivial_jacobian(p, geom16)
    ep = leading_eigenvalue(J)
    dense = np.max(np.linalg.eigvals(J.toarray()).real)
    assert ep.value == pytest.approx(-0.1, abs=1e-8)
    assert ep.value == pytest.approx(dense, abs=1e-8)


def test_classification_across_threshold(geom16):
    cases = [(1.2, StabilityFlag.STABLE), (0.9, StabilityFlag.UNSTABLE)]
    for mu, expected in cases:
        p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=mu)
        assert classify_stability(_semitrivial_jacobian(p, geom16)) is expected


def test_monotone_slope_until_cap(geom16):
    # gamma(mu) = 1 - mu until it saturates at -lam = -1 (for mu >= 2)
    mus = np.linspace(1.5, 2.5, 6)
    gammas = [
        leading_eigenvalue(
            _semitrivial_jacobian(ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=m), geom16)
        ).value
        for m in mus
    ]
    for mu, g in zip(mus, gammas):
        assert g == pytest.approx(max(-1.0, 1.0 - mu), abs=1e-8)
    diffs = np.diff(gammas[:3])  # uncapped part: slope exactly -1
    np.testing.assert_allclose(diffs, -0.2, atol=1e-8)


def test_oracle_agreement_random_draws(geom16):
    rng = np.random.default_rng(41)
    for _ in range(8):
        p = ModelParams(
            lam=rng.uniform(0.3, 2.0),
            m=rng.uniform(0.0, 2.0),
            c=rng.uniform(0.5, 3.0),
            b=rng.uniform(0.5, 2.0),
            mu=rng.uniform(0.2, 2.5),
        )
        ep = leading_eigenvalue(_semitrivial_jacobian(p, geom16))
        assert ep.value == pytest.approx(semitrivial_leading_analytic(p), abs=1e-8)
        assert ep.residual <= 1e-8


def test_dense_equivalence_on_coexistence_state():
    geom = build_geometry(GridSpec(20, 20), RefugeShape.rectangle((0.5, 0.5), (0.125, 0.125)))
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=0.9)
    kt = solve_kernel_function(p, geom)
    x0 = constant_state(geom, 1.0, 0.0).as_vector() + 0.1 * kt.direction(geom)
    state = newton_solve(
        SystemState.from_vector(np.maximum(x0, 0.0), geom.n_omega), p, NewtonConfig(), geom
    ).state
    J = assemble_jacobian(p, state.u, state.v, geom)
    ep = leading_eigenvalue(J)
    dense = np.linalg.eigvals(J.toarray())
    assert ep.value == pytest.approx(np.max(dense.real), abs=1e-8)


def test_eigen_residual_contract(geom16):
    rng = np.random.default_rng(43)
    p = ModelParams(lam=1.2, m=0.5, c=2.0, b=1.0, mu=0.8)
    u = ScalarField(smooth_positive(geom16.grid, rng).ravel(), Region.OMEGA)
    v = geom16.from_grid(smooth_positive(geom16.grid, rng, base=0.4), Region.OMEGA1)
    J = assemble_jacobian(p, u, v, geom16)
    ep = leading_eigenvalue(J)
    assert np.max(np.abs(ep.vector)) == pytest.approx(1.0)
    assert np.max(np.abs(J @ ep.vector - ep.value * ep.vector)) <= 1e-8


def test_complex_pair_is_flagged():
    # pure rotation: eigenvalues +/- i, no real eigenpair exists
    J = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
    ep = leading_eigenvalue(J)
    assert ep.complex_pair
    assert ep.value == pytest.approx(0.0, abs=1e-10)
    assert classify_value(ep.value) is StabilityFlag.MARGINAL
