"""Discrete spatial operators and residuals for the steady and transient systems.

Steady system (dimensionless), discretized with zero-flux conditions:

    0 = div(u grad u) + lam*u - u^2 - b(x)*u*v/(1 + m*u)   on OMEGA
    0 = lap v - mu*v + c*u*v/(1 + m*u)                     on OMEGA1

The density-dependent diffusion div(u grad u) is discretized in conservative
flux form with arithmetic face averages, so constants are annihilated and the
discrete integral over the habitat telescopes to zero. The transient system
carries coefficients d_u, d_v and logistic rate r in front of the same terms,
with the prey growth written as r*u*(1 - u/lam).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NegativePrey, RegionMismatch
from .fields import Region, ScalarField
from .geometry import DomainGeometry, _face_matrix

#: fields dipping below this are an error; values in [TOL_NEGATIVE, 0] clamp to 0
TOL_NEGATIVE = -1e-12


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: lam (carrying capacity), m (handling time),
    c (conversion), b (attack rate), mu (predator mortality); the transient
    form also uses diffusivities d_u, d_v and logistic rate r.

    Validation is permissive enough for degenerate test configurations
    (e.g. pure-diffusion checks set r = b = mu = c = 0); the run-config layer
    enforces the stricter biological ranges.
    """

    lam: float
    m: float
    c: float
    b: float
    mu: float
    d_u: float = 1.0
    d_v: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        for name in ("m", "c", "b", "mu", "r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_u <= 0 or self.d_v <= 0:
            raise ValueError("diffusivities must be positive")

    def with_mu(self, mu: float) -> "ModelParams":
        return ModelParams(self.lam, self.m, self.c, self.b, mu, self.d_u, self.d_v, self.r)


def clamp_nonnegative(values: np.ndarray, what: str = "field") -> np.ndarray:
    """Zero out rounding-level negatives; reject anything below TOL_NEGATIVE."""
    lo = float(values.min()) if values.size else 0.0
    if lo < TOL_NEGATIVE:
        raise NegativePrey(f"{what} has value {lo:.3e} below {TOL_NEGATIVE}")
    if lo < 0.0:
        values = np.where(values < 0.0, 0.0, values)
    return values


def laplacian_neumann(f: ScalarField, geom: DomainGeometry) -> ScalarField:
    """Zero-flux 5-point Laplacian of a field on its own region.

    Applied in difference form so constants map to exact zeros; faces leaving
    the region contribute nothing (ghost reflection).
    """
    geom.check_field(f)
    nx, ny = geom.grid.nx, geom.grid.ny
    if f.region is Region.OMEGA:
        g = f.values.reshape(nx, ny)
        ok_x = ok_y = None
    else:
        g = _v_on_grid(f, geom)
        m = geom.omega1_mask
        ok_x = m[:-1, :] & m[1:, :]
        ok_y = m[:, :-1] & m[:, 1:]
    out = np.zeros_like(g)
    dx = (g[1:, :] - g[:-1, :]) / geom.grid.hx**2
    if ok_x is not None:
        dx = np.where(ok_x, dx, 0.0)
    out[:-1, :] += dx
    out[1:, :] -= dx
    dy = (g[:, 1:] - g[:, :-1]) / geom.grid.hy**2
    if ok_y is not None:
        dy = np.where(ok_y, dy, 0.0)
    out[:, :-1] += dy
    out[:, 1:] -= dy
    if f.region is Region.OMEGA:
        return ScalarField(out.ravel(), Region.OMEGA)
    return ScalarField(out[geom.omega1_mask], Region.OMEGA1)


def nonlinear_diffusion(u: ScalarField, geom: DomainGeometry) -> ScalarField:
    """div(u grad u) in conservative flux form with arithmetic face averages."""
    if u.region is not Region.OMEGA:
        raise RegionMismatch("nonlinear diffusion acts on prey fields (OMEGA)")
    geom.check_field(u)
    vals = clamp_nonnegative(u.values, "prey density")
    g = vals.reshape(geom.grid.nx, geom.grid.ny)
    out = np.zeros_like(g)
    dx = (g[1:, :] - g[:-1, :]) * (0.5 * (g[1:, :] + g[:-1, :])) / geom.grid.hx**2
    out[:-1, :] += dx
    out[1:, :] -= dx
    dy = (g[:, 1:] - g[:, :-1]) * (0.5 * (g[:, 1:] + g[:, :-1])) / geom.grid.hy**2
    out[:, :-1] += dy
    out[:, 1:] -= dy
    return ScalarField(out.ravel(), Region.OMEGA)


def _v_on_grid(v: ScalarField, geom: DomainGeometry) -> np.ndarray:
    g = np.zeros((geom.grid.nx, geom.grid.ny))
    g[geom.omega1_mask] = v.values
    return g


def reaction_terms(
    params: ModelParams, u: ScalarField, v: ScalarField, geom: DomainGeometry
) -> tuple[ScalarField, ScalarField]:
    """Pointwise reaction terms of the steady system.

    Inside the refuge the prey-predator coupling vanishes because the attack
    rate is zero there; the predator field is never referenced inside it.
    """
    geom.check_field(u)
    geom.check_field(v)
    ug = u.values.reshape(geom.grid.nx, geom.grid.ny)
    vg = _v_on_grid(v, geom)
    b_field = np.where(geom.omega1_mask, params.b, 0.0)
    holling = ug / (1.0 + params.m * ug)
    f_u = params.lam * ug - ug**2 - b_field * holling * vg
    u1 = ug[geom.omega1_mask]
    f_v = -params.mu * v.values + params.c * (u1 / (1.0 + params.m * u1)) * v.values
    return (
        ScalarField(f_u.ravel(), Region.OMEGA),
        ScalarField(f_v, Region.OMEGA1),
    )


def residual_steady(
    params: ModelParams, u: ScalarField, v: ScalarField, geom: DomainGeometry
) -> np.ndarray:
    """Concatenated steady residual [prey equation on OMEGA; predator on OMEGA1]."""
    f_u, f_v = reaction_terms(params, u, v, geom)
    diff_u = nonlinear_diffusion(u, geom)
    lap_v = laplacian_neumann(v, geom)
    return np.concatenate([diff_u.values + f_u.values, lap_v.values + f_v.values])


def rhs_transient(
    params: ModelParams, u: ScalarField, v: ScalarField, geom: DomainGeometry
) -> tuple[ScalarField, ScalarField]:
    """Right-hand side of the transient system.

        du/dt = d_u * div(u grad u) + r*u*(1 - u/lam) - b(x)*u*v/(1 + m*u)
        dv/dt = d_v * lap v - mu*v + c*u*v/(1 + m*u)

    With d_u = d_v = 1 and r = lam the prey reaction equals lam*u - u^2 and
    the right-hand side coincides with the steady residual.
    """
    geom.check_field(u)
    geom.check_field(v)
    ug = u.values.reshape(geom.grid.nx, geom.grid.ny)
    vg = _v_on_grid(v, geom)
    b_field = np.where(geom.omega1_mask, params.b, 0.0)
    holling = ug / (1.0 + params.m * ug)
    react_u = params.r * ug * (1.0 - ug / params.lam) - b_field * holling * vg
    du = params.d_u * nonlinear_diffusion(u, geom).values + react_u.ravel()
    u1 = ug[geom.omega1_mask]
    react_v = -params.mu * v.values + params.c * (u1 / (1.0 + params.m * u1)) * v.values
    dv = params.d_v * laplacian_neumann(v, geom).values + react_v
    return ScalarField(du, Region.OMEGA), ScalarField(dv, Region.OMEGA1)


def diffusion_linearization(u_values: np.ndarray, geom: DomainGeometry) -> sp.csr_matrix:
    """Exact derivative of the flux-form div(u grad u) with respect to u.

    A perturbation a contributes div(a grad u) + div(u grad a); per face
    (p, q) the flux derivative is w*(u_q*a_q - u_p*a_p), i.e. side values
    (u_p, u_q) in the face-matrix convention.
    """
    up = u_values
    ax, bx = geom.face_u_x
    ay, by = geom.face_u_y
    return _face_matrix(
        geom.n_omega,
        geom.face_u_x,
        geom.face_u_y,
        geom.grid,
        vals_x=(up[ax], up[bx]),
        vals_y=(up[ay], up[by]),
    )


def frozen_diffusion_matrix(u_values: np.ndarray, geom: DomainGeometry) -> sp.csr_matrix:
    """Linear operator a -> div(ubar grad a) with face coefficients frozen at u."""
    ax, bx = geom.face_u_x
    ay, by = geom.face_u_y
    fx = 0.5 * (u_values[ax] + u_values[bx])
    fy = 0.5 * (u_values[ay] + u_values[by])
    return _face_matrix(
        geom.n_omega,
        geom.face_u_x,
        geom.face_u_y,
        geom.grid,
        vals_x=(fx, fx),
        vals_y=(fy, fy),
    )


def assemble_jacobian(
    params: ModelParams, u: ScalarField, v: ScalarField, geom: DomainGeometry
) -> sp.csr_matrix:
    """Analytic Jacobian of the steady residual, ordered [u on OMEGA; v on OMEGA1].

    At the semitrivial state (lam, 0) the v-rows lose their u-dependence
    (block-triangular structure); the u-block reduces to lam*(lap - I) and the
    v-block to lap - mu + c*lam/(1 + m*lam).
    """
    geom.check_field(u)
    geom.check_field(v)
    n, n1 = geom.n_omega, geom.n_omega1
    uv = u.values
    vg = _v_on_grid(v, geom).ravel()
    b_flat = np.where(geom.omega1_flat, params.b, 0.0)
    denom = 1.0 + params.m * uv

    duu = diffusion_linearization(uv, geom).tocoo()
    rows = [duu.row]
    cols = [duu.col]
    data = [duu.data]

    # prey reaction diagonal: lam - 2u - b(x)*v / (1 + m*u)^2
    diag_u = params.lam - 2.0 * uv - b_flat * vg / denom**2
    cells = np.arange(n)
    rows.append(cells), cols.append(cells), data.append(diag_u)

    o1 = np.flatnonzero(geom.omega1_flat)
    vcols = n + geom.v_index.ravel()[o1]
    # d(prey)/dv: -b * u/(1 + m*u) on predator-domain cells
    rows.append(o1)
    cols.append(vcols)
    data.append(-params.b * uv[o1] / denom[o1])
    # d(predator)/du: c * v / (1 + m*u)^2
    rows.append(vcols)
    cols.append(o1)
    data.append(params.c * vg[o1] / denom[o1] ** 2)
    # d(predator)/dv: lap - mu + c*u/(1 + m*u)
    lv = geom.lap_omega1.tocoo()
    rows.append(lv.row + n), cols.append(lv.col + n), data.append(lv.data)
    diag_v = -params.mu + params.c * uv[o1] / denom[o1]
    rows.append(vcols), cols.append(vcols), data.append(diag_v)

    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + n1, n + n1),
    ).tocsr()


def residual_mu_derivative(v: ScalarField, geom: DomainGeometry) -> np.ndarray:
    """d(residual)/d(mu): zero on prey rows, -v on predator rows."""
    return np.concatenate([np.zeros(geom.n_omega), -v.values])


def dump_operator(op: sp.spmatrix, path) -> None:
    """Write a sparse operator as 'row col value' text lines (coordinate form)."""
    coo = op.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for r, c, val in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {val:.17g}\n")
