import numpy as np
import pytest

from conftest import smooth_positive
from refugia.errors import NegativePrey, RegionMismatch
from refugia.fields import Region, ScalarField, SystemState, constant_state
from refugia.geometry import GridSpec, RefugeShape, build_geometry
from refugia.operators import (
    ModelParams,
    assemble_jacobian,
    dump_operator,
    laplacian_neumann,
    nonlinear_diffusion,
    reaction_terms,
    residual_steady,
    rhs_transient,
)

PARAMS = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=0.9)


def _profile_grids():
    return [build_geometry(GridSpec(n, n), RefugeShape.empty()) for n in (32, 64, 128)]


def test_laplacian_annihilates_constants(geom64):
    f = ScalarField(np.full(geom64.n_omega, 3.7), Region.OMEGA)
    assert np.all(laplacian_neumann(f, geom64).values == 0.0)
    g = ScalarField(np.full(geom64.n_omega1, -2.2), Region.OMEGA1)
    assert np.all(laplacian_neumann(g, geom64).values == 0.0)


def test_nonlinear_diffusion_annihilates_constants(geom64):
    u = ScalarField(np.full(geom64.n_omega, 0.8), Region.OMEGA)
    assert np.all(nonlinear_diffusion(u, geom64).values == 0.0)


def test_laplacian_cosine_convergence():
    errors = []
    for geom in _profile_grids():
        X, _ = geom.grid.cell_centers()
        f = ScalarField(np.cos(np.pi * X).ravel(), Region.OMEGA)
        exact = -np.pi**2 * np.cos(np.pi * X).ravel()
        errors.append(np.max(np.abs(laplacian_neumann(f, geom).values - exact)))
    orders = [np.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9
    # absolute size at 64 cells/side: C * h^2 with C ~ pi^4 / 12
    assert errors[1] <= 10.0 * (1.0 / 64) ** 2


def test_nonlinear_diffusion_convergence():
    errors = []
    for geom in _profile_grids():
        X, Y = geom.grid.cell_centers()
        u = 2.0 + np.cos(np.pi * X) * np.cos(np.pi * Y)
        gradsq = np.pi**2 * (
            np.sin(np.pi * X) ** 2 * np.cos(np.pi * Y) ** 2
            + np.cos(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2
        )
        exact = gradsq + u * (-2.0 * np.pi**2 * np.cos(np.pi * X) * np.cos(np.pi * Y))
        out = nonlinear_diffusion(ScalarField(u.ravel(), Region.OMEGA), geom)
        errors.append(np.max(np.abs(out.values - exact.ravel())))
    orders = [np.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def test_smallest_nonzero_laplacian_eigenvalue_is_pi_squared():
    geom = build_geometry(GridSpec(16, 16), RefugeShape.empty())
    dense = geom.lap_omega.toarray()
    eigs = np.sort(np.linalg.eigvalsh(-(dense + dense.T) / 2))
    assert abs(eigs[0]) < 1e-10  # constant mode
    # discrete eigenvalue pi^2 * (1 - (pi h)^2 / 12 + ...) with h = 1/16
    assert eigs[1] == pytest.approx(np.pi**2, abs=0.04)


def test_interior_half_laplacian_identity(geom64):
    rng = np.random.default_rng(3)
    u = smooth_positive(geom64.grid, rng, base=2.0)
    nd = nonlinear_diffusion(ScalarField(u.ravel(), Region.OMEGA), geom64)
    half = laplacian_neumann(ScalarField((u**2).ravel(), Region.OMEGA), geom64)
    diff = np.abs(nd.values - 0.5 * half.values).reshape(64, 64)
    interior = diff[1:-1, 1:-1]
    assert interior.max() <= 1e-8


def test_conservation_of_flux_forms(geom64):
    rng = np.random.default_rng(5)
    u = smooth_positive(geom64.grid, rng, base=1.5)
    nd = nonlinear_diffusion(ScalarField(u.ravel(), Region.OMEGA), geom64)
    assert abs(nd.values.sum()) <= 1e-7  # telescoping fluxes, 1/h^2 scale
    lap = laplacian_neumann(ScalarField(u.ravel(), Region.OMEGA), geom64)
    assert abs(lap.values.sum()) <= 1e-7
    v = geom64.from_grid(smooth_positive(geom64.grid, rng, base=0.7), Region.OMEGA1)
    lap_v = laplacian_neumann(v, geom64)
    assert abs(lap_v.values.sum()) <= 1e-7


def test_negative_prey_rejected(geom16):
    u = np.full(geom16.n_omega, 1.0)
    u[7] = -1e-6
    with pytest.raises(NegativePrey):
        nonlinear_diffusion(ScalarField(u, Region.OMEGA), geom16)


def test_tiny_negative_clamped(geom16):
    u = np.full(geom16.n_omega, 1.0)
    u[7] = -5e-13  # inside the clamp band
    out = nonlinear_diffusion(ScalarField(u, Region.OMEGA), geom16)
    assert np.all(np.isfinite(out.values))


def test_nonlinear_diffusion_requires_prey_region(geom16):
    v = ScalarField(np.ones(geom16.n_omega1), Region.OMEGA1)
    with pytest.raises(RegionMismatch):
        nonlinear_diffusion(v, geom16)


def test_reaction_terms_vanish_at_carrying_capacity(geom32):
    for lam in (1.0, 2.0, 0.5):
        p = ModelParams(lam=lam, m=1.0, c=2.0, b=1.0, mu=0.9)
        st = constant_state(geom32, lam, 0.0)
        f_u, f_v = reaction_terms(p, st.u, st.v, geom32)
        assert np.max(np.abs(f_u.values)) == 0.0
        assert np.max(np.abs(f_v.values)) == 0.0


def test_reaction_terms_vanish_at_origin(geom32):
    st = constant_state(geom32, 0.0, 0.0)
    f_u, f_v = reaction_terms(PARAMS, st.u, st.v, geom32)
    assert np.max(np.abs(f_u.values)) == 0.0
    assert np.max(np.abs(f_v.values)) == 0.0


def test_reaction_terms_hand_values(geom32):
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=1.0)
    st = constant_state(geom32, 1.0, 1.0)
    f_u, f_v = reaction_terms(p, st.u, st.v, geom32)
    fu_grid = geom32.to_grid(f_u)
    # on a predator-domain cell: 1 - 1 - (1*1*1)/2 = -0.5; inside the refuge: 0
    assert fu_grid[geom32.omega1_mask] == pytest.approx(-0.5)
    assert np.all(fu_grid[~geom32.omega1_mask] == 0.0)
    # predator equation: -1 + (2*1*1)/2 = 0
    assert np.max(np.abs(f_v.values)) == 0.0


def test_reaction_terms_against_scalar_oracle(geom16):
    rng = np.random.default_rng(11)
    p = ModelParams(lam=1.3, m=0.7, c=1.9, b=1.4, mu=0.8)
    ug = smooth_positive(geom16.grid, rng)
    vg = smooth_positive(geom16.grid, rng, base=0.6)
    u = ScalarField(ug.ravel(), Region.OMEGA)
    v = geom16.from_grid(vg, Region.OMEGA1)
    f_u, f_v = reaction_terms(p, u, v, geom16)

    def scalar_fu(uu, vv, in_omega1):
        bb = p.b if in_omega1 else 0.0
        return p.lam * uu - uu * uu - bb * uu * vv / (1.0 + p.m * uu)

    def scalar_fv(uu, vv):
        return -p.mu * vv + p.c * uu * vv / (1.0 + p.m * uu)

    fu_grid = geom16.to_grid(f_u)
    for i, j in ((0, 0), (5, 9), (8, 8), (15, 3)):
        in_o1 = bool(geom16.omega1_mask[i, j])
        vv = vg[i, j] if in_o1 else 0.0
        assert fu_grid[i, j] == pytest.approx(scalar_fu(ug[i, j], vv, in_o1), rel=1e-12)
    fv_grid = geom16.to_grid(f_v)
    assert fv_grid[5, 9] == pytest.approx(scalar_fv(ug[5, 9], vg[5, 9]), rel=1e-12)


def test_residual_zero_on_trivial_states(geom64):
    for lam in (1.0, 2.0):
        p = ModelParams(lam=lam, m=1.0, c=2.0, b=1.0, mu=1.1)
        st = constant_state(geom64, lam, 0.0)
        assert np.max(np.abs(residual_steady(p, st.u, st.v, geom64))) == 0.0
    st0 = constant_state(geom64, 0.0, 0.0)
    assert np.max(np.abs(residual_steady(PARAMS, st0.u, st0.v, geom64))) == 0.0


def test_residual_recomposition(geom32):
    rng = np.random.default_rng(17)
    u = ScalarField(smooth_positive(geom32.grid, rng).ravel(), Region.OMEGA)
    v = geom32.from_grid(smooth_positive(geom32.grid, rng, base=0.5), Region.OMEGA1)
    res = residual_steady(PARAMS, u, v, geom32)
    f_u, f_v = reaction_terms(PARAMS, u, v, geom32)
    expected_u = nonlinear_diffusion(u, geom32).values + f_u.values
    expected_v = laplacian_neumann(v, geom32).values + f_v.values
    np.testing.assert_allclose(res[: geom32.n_omega], expected_u, rtol=0, atol=1e-14)
    np.testing.assert_allclose(res[geom32.n_omega :], expected_v, rtol=0, atol=1e-14)


def test_rhs_transient_equilibrium(geom32):
    p = ModelParams(lam=1.5, m=1.0, c=2.0, b=1.0, mu=0.9, r=3.7)
    st = constant_state(geom32, 1.5, 0.0)
    du, dv = rhs_transient(p, st.u, st.v, geom32)
    assert np.max(np.abs(du.values)) == 0.0
    assert np.max(np.abs(dv.values)) == 0.0


def test_rhs_transient_matches_steady_residual(geom32):
    # with d_u = d_v = 1 and r = lam the prey reaction is lam*u - u^2
    rng = np.random.default_rng(23)
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=0.9, d_u=1.0, d_v=1.0, r=1.0)
    u = ScalarField(smooth_positive(geom32.grid, rng).ravel(), Region.OMEGA)
    v = geom32.from_grid(smooth_positive(geom32.grid, rng, base=0.4), Region.OMEGA1)
    du, dv = rhs_transient(p, u, v, geom32)
    res = residual_steady(p, u, v, geom32)
    np.testing.assert_allclose(
        np.concatenate([du.values, dv.values]), res, rtol=0, atol=1e-12
    )


def test_rhs_transient_pointwise_logistic(geom32):
    p = ModelParams(lam=1.0, m=1.0, c=2.0, b=1.0, mu=0.9, r=2.5)
    st = constant_state(geom32, 0.5, 0.0)
    du, _ = rhs_transient(p, st.u, st.v, geom32)
    assert du.values == pytest.approx(2.5 * 0.5 * 0.5)  # r * (lam/2) * (1 - 1/2)


def test_jacobian_block_structure_at_semitrivial(geom32):
    st = constant_state(geom32, 1.0, 0.0)
    J = assemble_jacobian(PARAMS, st.u, st.v, geom32)
    n = geom32.n_omega
    C = J[n:, :n]
    assert C.nnz == 0 or np.max(np.abs(C.data)) == 0.0
    ones_u = np.ones(n)
    np.testing.assert_allclose((J[:n, :n] @ ones_u), -1.0, rtol=0, atol=1e-11)


def test_jacobian_matches_finite_differences(geom16):
    rng = np.random.default_rng(29)
    eps = 1e-6
    for _ in range(3):
        u = ScalarField(smooth_positive(geom16.grid, rng).ravel(), Region.OMEGA)
        v = geom16.from_grid(smooth_positive(geom16.grid, rng, base=0.5), Region.OMEGA1)
        J = assemble_jacobian(PARAMS, u, v, geom16)
        x0 = np.concatenate([u.values, v.values])

        def resid(x):
            st = SystemState.from_vector(x, geom16.n_omega)
            return residual_steady(PARAMS, st.u, st.v, geom16)

        d = rng.normal(size=x0.size)
        d /= np.max(np.abs(d))
        fd = (resid(x0 + eps * d) - resid(x0 - eps * d)) / (2 * eps)
        jd = J @ d
        assert np.linalg.norm(fd - jd) <= 1e-6 * np.linalg.norm(jd)


def test_block_triangular_spectrum_at_any_prey_profile():
    geom = build_geometry(GridSpec(8, 8), RefugeShape.rectangle((0.5, 0.5), (0.15, 0.15)))
    rng = np.random.default_rng(31)
    u = ScalarField(smooth_positive(geom.grid, rng).ravel(), Region.OMEGA)
    v = ScalarField(np.zeros(geom.n_omega1), Region.OMEGA1)
    J = assemble_jacobian(PARAMS, u, v, geom).toarray()
    n = geom.n_omega
    spectrum = np.sort_complex(np.linalg.eigvals(J))
    blocks = np.sort_complex(
        np.concatenate([np.linalg.eigvals(J[:n, :n]), np.linalg.eigvals(J[n:, n:])])
    )
    np.testing.assert_allclose(spectrum, blocks, rtol=0, atol=1e-7)


def test_operator_dump_round_trips(tmp_path, geom16):
    st = constant_state(geom16, 1.0, 0.0)
    J = assemble_jacobian(PARAMS, st.u, st.v, geom16)
    path = tmp_path / "op.txt"
    dump_operator(J, path)
    lines = path.read_text().splitlines()
    header = lines[0].split()
    assert header[2:4] == [str(J.shape[0]), str(J.shape[1])]
    row, col, val = lines[1].split()
    assert J[int(row), int(col)] == pytest.approx(float(val), rel=1e-15)
