"""Damped Newton solver for the steady system and the kernel-function solve
that yields the bifurcation tangent.

At the bifurcation point the linearization at the predator-free state has the
one-dimensional kernel spanned by (-alpha, 1), where alpha solves the
zero-flux Helmholtz problem  -lap alpha + alpha = b(x) / (1 + m*lam)  on the
habitat. That direction is the first-order shape of the emerging coexistence
branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailure, NoConvergence, SingularJacobian
from .fields import Region, ScalarField, SystemState
from .geometry import DomainGeometry
from .operators import ModelParams, assemble_jacobian, residual_steady

#: direct sparse solves must meet this relative residual
LINSOLVE_RTOL = 1e-12


@dataclass(frozen=True)
class NewtonConfig:
    tol_residual: float = 1e-10  # inf-norm of the steady residual
    max_iter: int = 50
    backtrack_factor: float = 0.5
    min_step: float = 2.0**-10

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")


@dataclass
class SteadyResult:
    state: SystemState
    iterations: int
    residual_norm: float
    residual_history: list[float] = field(default_factory=list)


def _residual_of(x: np.ndarray, params: ModelParams, geom: DomainGeometry) -> np.ndarray:
    st = SystemState.from_vector(x, geom.n_omega)
    return residual_steady(params, st.u, st.v, geom)


def newton_solve(
    state0: SystemState,
    params: ModelParams,
    cfg: NewtonConfig,
    geom: DomainGeometry,
) -> SteadyResult:
    """Solve the steady system by damped Newton with nonnegativity clamping.

    Iterates (including line-search trial points) are clamped to the
    nonnegative orthant before the residual is evaluated. Raises
    SingularJacobian when the linear solve fails, which callers near the
    bifurcation point treat as a proximity signal, and NoConvergence when the
    iteration or line-search budget runs out.
    """
    x = np.maximum(state0.as_vector(), 0.0)
    res = _residual_of(x, params, geom)
    rnorm = float(np.max(np.abs(res)))
    history = [rnorm]

    for it in range(cfg.max_iter):
        if rnorm <= cfg.tol_residual:
            return SteadyResult(SystemState.from_vector(x, geom.n_omega), it, rnorm, history)
        st = SystemState.from_vector(x, geom.n_omega)
        J = assemble_jacobian(params, st.u, st.v, geom)
        try:
            lu = spla.splu(J.tocsc())
        except RuntimeError as exc:
            raise SingularJacobian(f"Newton linear solve failed: {exc}") from exc
        delta = lu.solve(-res)
        if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 1e12 * (
            1.0 + np.max(np.abs(x))
        ):
            raise SingularJacobian("Newton update blew up; Jacobian numerically singular")

        step = 1.0
        while True:
            x_trial = np.maximum(x + step * delta, 0.0)
            res_trial = _residual_of(x_trial, params, geom)
            rnorm_trial = float(np.max(np.abs(res_trial)))
            if rnorm_trial < rnorm:
                break
            step *= cfg.backtrack_factor
            if step < cfg.min_step:
                raise NoConvergence(
                    f"line search stalled at residual {rnorm:.3e} (iteration {it})"
                )
        x, res, rnorm = x_trial, res_trial, rnorm_trial
        history.append(rnorm)

    if rnorm <= cfg.tol_residual:
        return SteadyResult(SystemState.from_vector(x, geom.n_omega), cfg.max_iter, rnorm, history)
    raise NoConvergence(f"residual {rnorm:.3e} after {cfg.max_iter} iterations")


@dataclass
class KernelTangent:
    """Null direction of the bifurcation-point linearization: alpha on the
    habitat paired with the constant 1 on the predator domain; the branch
    tangent in (u, v) coordinates is (-alpha, 1)."""

    alpha: ScalarField
    beta_const: float = 1.0

    def direction(self, geom: DomainGeometry) -> np.ndarray:
        """Concatenated (-alpha, 1) over [u cells; v cells]."""
        return np.concatenate(
            [-self.alpha.values, np.full(geom.n_omega1, self.beta_const)]
        )

    def unit_direction(self, geom: DomainGeometry) -> np.ndarray:
        d = self.direction(geom)
        return d / np.max(np.abs(d))


def solve_kernel_function(params: ModelParams, geom: DomainGeometry) -> KernelTangent:
    """Solve -lap alpha + alpha = b(x)/(1 + m*lam) with zero flux on the habitat.

    The right-hand side vanishes inside the refuge, so alpha dips there and
    peaks on the predator domain; with no refuge alpha is the constant
    b/(1 + m*lam). The solve is independent of mu.
    """
    n = geom.n_omega
    A = (sp.identity(n, format="csr") - geom.lap_omega).tocsc()
    rhs = np.where(geom.omega1_flat, params.b, 0.0) / (1.0 + params.m * params.lam)
    try:
        lu = spla.splu(A)
        alpha = lu.solve(rhs)
        # one pass of iterative refinement to push the residual to the floor
        alpha += lu.solve(rhs - A @ alpha)
    except RuntimeError as exc:
        raise LinearSolveFailure(f"kernel-function solve failed: {exc}") from exc
    rel = np.linalg.norm(A @ alpha - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.all(np.isfinite(alpha)) or rel > LINSOLVE_RTOL:
        raise LinearSolveFailure(f"kernel-function solve met only {rel:.3e} relative residual")
    return KernelTangent(ScalarField(alpha, Region.OMEGA))
