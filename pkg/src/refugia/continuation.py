"""Branch tracing and the bifurcation audit.

The predator-free line is traced directly (its states are known), the leading
eigenvalue crossing on it is located by a bracketing root find, the
coexistence branch is entered along the kernel tangent and continued by
pseudo-arclength, and the stability exchange, eigenvalue sign relation, and
branch tangency are audited into a report.

The arclength metric over (state, mu) pairs is sqrt(mean(dx^2) + dmu^2),
which keeps step sizes grid-independent and comparable to the predator
amplitude. The amplitude itself (spatial mean of v over the predator domain)
is the measurable proxy for the branch parameter: the v-tangent at the
bifurcation is the constant 1, so amplitude = s to first order.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ContinuationStalled,
    FellBackToSemitrivial,
    NoConvergence,
    NoCrossing,
)
from .fields import SystemState, constant_state
from .geometry import DomainGeometry
from .operators import (
    ModelParams,
    assemble_jacobian,
    residual_mu_derivative,
    residual_steady,
)
from .spectral import StabilityFlag, classify_value, leading_eigenvalue
from .steady import KernelTangent, NewtonConfig, newton_solve, solve_kernel_function

#: |mu - mu*| and |gamma| bands inside which the sign relation is not audited
MU_BAND = 1e-4
GAMMA_BAND = 1e-6

#: default initial mu offset at branch switching, as a fraction of mu*
DELTA_SWITCH_FRACTION = 1e-2


class RegionOfApplicabilityWarning(UserWarning):
    """The sign-relation audit was fed a branch it is not meant for."""


class BranchLabel(enum.Enum):
    SEMITRIVIAL = "semitrivial"
    NONTRIVIAL = "nontrivial"


@dataclass
class BranchPoint:
    mu: float
    state: SystemState
    s: float  # accumulated arclength from the bifurcation point (nontrivial branch)
    amplitude: float  # spatial mean of v over the predator domain
    gamma: float  # leading eigenvalue of the linearization
    flag: StabilityFlag
    residual_norm: float
    eigen_residual: float = float("nan")


@dataclass
class Branch:
    label: BranchLabel
    points: list[BranchPoint]
    params: ModelParams  # mu field is per-point; the rest is shared
    geom: DomainGeometry

    def mus(self) -> np.ndarray:
        return np.array([p.mu for p in self.points])

    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])


def amplitude_of(state: SystemState) -> float:
    """Spatial mean of the predator field over the predator domain."""
    return float(state.v.values.mean()) if state.v.values.size else 0.0


def _semitrivial_gamma(params: ModelParams, mu: float, geom: DomainGeometry):
    st = constant_state(geom, params.lam, 0.0)
    J = assemble_jacobian(params.with_mu(mu), st.u, st.v, geom)
    return leading_eigenvalue(J)


def trace_semitrivial(
    params_base: ModelParams,
    mu_range: tuple[float, float],
    n_points: int,
    geom: DomainGeometry,
) -> Branch:
    """The predator-free branch: states are exactly (lam, 0), no solve needed;
    the leading eigenvalue is computed per point. The s field is not
    meaningful on this branch and is recorded as 0."""
    lo, hi = mu_range
    if lo <= 0 or hi < lo or (n_points > 1 and hi == lo):
        raise ValueError("mu_range must satisfy 0 < lo <= hi (lo < hi for several points)")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    pts = []
    for mu in np.linspace(lo, hi, n_points):
        ep = _semitrivial_gamma(params_base, float(mu), geom)
        st = constant_state(geom, params_base.lam, 0.0)
        pts.append(
            BranchPoint(
                mu=float(mu),
                state=st,
                s=0.0,
                amplitude=0.0,
                gamma=ep.value,
                flag=classify_value(ep.value),
                residual_norm=0.0,
                eigen_residual=ep.residual,
            )
        )
    return Branch(BranchLabel.SEMITRIVIAL, pts, params_base, geom)


def detect_transcritical(branch: Branch, tol_gamma: float = 1e-10, max_iter: int = 100) -> float:
    """Locate the eigenvalue crossing on the predator-free branch.

    Bracketing root find (regula falsi with bisection safeguard) on the
    leading eigenvalue as a function of mu, to |gamma| <= tol_gamma. The
    eigenvalue is affine in mu near the crossing, so this converges in a
    handful of evaluations. Raises NoCrossing when gamma has constant sign
    over the branch.
    """
    if branch.label is not BranchLabel.SEMITRIVIAL:
        raise ValueError("crossing detection runs on the semitrivial branch")
    gam = branch.gammas()
    mus = branch.mus()
    near = np.abs(gam) <= tol_gamma
    if np.any(near):
        return float(mus[np.argmax(near)])
    sign_change = np.flatnonzero(np.sign(gam[:-1]) != np.sign(gam[1:]))
    if sign_change.size == 0:
        raise NoCrossing(
            f"leading eigenvalue keeps sign {np.sign(gam[0]):+.0f} over mu in "
            f"[{mus[0]:g}, {mus[-1]:g}]"
        )
    i = int(sign_change[0])
    mu_lo, g_lo = float(mus[i]), float(gam[i])
    mu_hi, g_hi = float(mus[i + 1]), float(gam[i + 1])

    geom, params = branch.geom, branch.params
    for it in range(max_iter):
        mu_new = (g_hi * mu_lo - g_lo * mu_hi) / (g_hi - g_lo)
        if not (mu_lo < mu_new < mu_hi):  # secant degenerated; bisect
            mu_new = 0.5 * (mu_lo + mu_hi)
        g_new = _semitrivial_gamma(params, mu_new, geom).value
        if abs(g_new) <= tol_gamma:
            return mu_new
        if np.sign(g_new) == np.sign(g_lo):
            mu_lo, g_lo = mu_new, g_new
        else:
            mu_hi, g_hi = mu_new, g_new
        if it % 3 == 2:  # safeguard: force bracket shrinkage
            mu_mid = 0.5 * (mu_lo + mu_hi)
            g_mid = _semitrivial_gamma(params, mu_mid, geom).value
            if abs(g_mid) <= tol_gamma:
                return mu_mid
            if np.sign(g_mid) == np.sign(g_lo):
                mu_lo, g_lo = mu_mid, g_mid
            else:
                mu_hi, g_hi = mu_mid, g_mid
    raise NoConvergence(f"crossing refinement did not reach |gamma| <= {tol_gamma:g}")


def _point_from_state(
    state: SystemState,
    mu: float,
    s: float,
    params: ModelParams,
    geom: DomainGeometry,
) -> BranchPoint:
    J = assemble_jacobian(params.with_mu(mu), state.u, state.v, geom)
    ep = leading_eigenvalue(J)
    res = residual_steady(params.with_mu(mu), state.u, state.v, geom)
    return BranchPoint(
        mu=mu,
        state=state,
        s=s,
        amplitude=amplitude_of(state),
        gamma=ep.value,
        flag=classify_value(ep.value),
        residual_norm=float(np.max(np.abs(res))),
        eigen_residual=ep.residual,
    )


def branch_switch(
    mu_star: float,
    params: ModelParams,
    geom: DomainGeometry,
    s0: float,
    delta_switch: float | None = None,
    newton_cfg: NewtonConfig | None = None,
    tangent: KernelTangent | None = None,
) -> BranchPoint:
    """Step off the predator-free line onto the coexistence branch.

    Predictor: (lam, 0) + s0 * (-alpha, 1) at mu = mu* - delta_switch;
    corrector: plain Newton at that fixed mu. Raises FellBackToSemitrivial
    when the corrected amplitude collapses below s0/10 (predictor too weak;
    increase s0 or delta_switch).
    """
    if not 0.0 < s0 <= 0.1 * params.lam:
        raise ValueError(f"s0 must lie in (0, 0.1*lam], got {s0}")
    delta = DELTA_SWITCH_FRACTION * mu_star if delta_switch is None else delta_switch
    mu_sw = mu_star - delta
    kt = tangent if tangent is not None else solve_kernel_function(params, geom)
    x0 = constant_state(geom, params.lam, 0.0).as_vector() + s0 * kt.direction(geom)
    predictor = SystemState.from_vector(np.maximum(x0, 0.0), geom.n_omega)
    result = newton_solve(predictor, params.with_mu(mu_sw), newton_cfg or NewtonConfig(), geom)
    amp = amplitude_of(result.state)
    if amp < s0 / 10.0:
        raise FellBackToSemitrivial(
            f"corrected amplitude {amp:.3e} < s0/10 = {s0/10:.3e} at mu = {mu_sw:g}"
        )
    dx = result.state.as_vector() - constant_state(geom, params.lam, 0.0).as_vector()
    s_init = float(np.sqrt(np.mean(dx**2) + (mu_sw - mu_star) ** 2))
    return _point_from_state(result.state, mu_sw, s_init, params, geom)


def _metric_norm(dx: np.ndarray, dmu: float) -> float:
    return float(np.sqrt(np.mean(dx**2) + dmu**2))


def _bordered_correct(
    x: np.ndarray,
    mu: float,
    t_x: np.ndarray,
    t_mu: float,
    y0_x: np.ndarray,
    y0_mu: float,
    ds: float,
    params: ModelParams,
    geom: DomainGeometry,
    tol_residual: float,
    max_iter: int = 20,
):
    """Newton on [steady residual; arclength constraint] with (x, mu) unknown."""
    n = x.size
    n_cells = geom.n_omega
    scale = 1.0 / n  # metric weight of the state part
    for _ in range(max_iter):
        st = SystemState.from_vector(x, n_cells)
        p_mu = params.with_mu(mu)
        res = residual_steady(p_mu, st.u, st.v, geom)
        con = scale * float(t_x @ (x - y0_x)) + t_mu * (mu - y0_mu) - ds
        if np.max(np.abs(res)) <= tol_residual and abs(con) <= 1e-10 * max(1.0, abs(ds)):
            return SystemState.from_vector(x, n_cells), mu, float(np.max(np.abs(res)))
        J = assemble_jacobian(p_mu, st.u, st.v, geom)
        dmu_col = residual_mu_derivative(st.v, geom)
        bordered = sp.bmat(
            [
                [J, sp.csc_matrix(dmu_col.reshape(-1, 1))],
                [sp.csc_matrix((scale * t_x).reshape(1, -1)), sp.csc_matrix([[t_mu]])],
            ],
            format="csc",
        )
        try:
            delta = spla.splu(bordered).solve(-np.concatenate([res, [con]]))
        except RuntimeError:
            return None
        if not np.all(np.isfinite(delta)):
            return None
        x = np.maximum(x + delta[:-1], 0.0)
        mu = mu + float(delta[-1])
    return None


def continue_branch(
    start: BranchPoint,
    direction,
    n_steps: int,
    ds: float,
    params: ModelParams,
    geom: DomainGeometry,
    label: BranchLabel = BranchLabel.NONTRIVIAL,
    newton_cfg: NewtonConfig | None = None,
    amplitude_cap: float | None = None,
    min_ds_factor: int = 64,
) -> Branch:
    """Pseudo-arclength predictor-corrector continuation from a converged point.

    direction is the initial tangent guess: either a pair (dx, dmu) with dx an
    array over the unknowns or None for a pure-mu direction, or a single
    concatenated array of length n_unknowns + 1. Subsequent tangents are
    secants through the last two points. The step halves on corrector failure
    down to ds/min_ds_factor, after which ContinuationStalled is raised.
    """
    cfg = newton_cfg or NewtonConfig()
    n = geom.n_unknowns
    if isinstance(direction, tuple):
        dx0, dmu0 = direction
        dx0 = np.zeros(n) if dx0 is None else np.asarray(dx0, dtype=float)
    else:
        arr = np.asarray(direction, dtype=float)
        dx0, dmu0 = arr[:-1], float(arr[-1])
    nrm = _metric_norm(dx0, dmu0)
    if nrm == 0.0:
        raise ValueError("direction must be nonzero")
    t_x, t_mu = dx0 / nrm, dmu0 / nrm

    points = [start]
    y_x = start.state.as_vector()
    y_mu = start.mu
    s_accum = start.s
    for _ in range(n_steps):
        if amplitude_cap is not None and points[-1].amplitude >= amplitude_cap:
            break
        ds_cur = ds
        accepted = None
        while accepted is None:
            x_pred = np.maximum(y_x + ds_cur * t_x, 0.0)
            mu_pred = y_mu + ds_cur * t_mu
            accepted = _bordered_correct(
                x_pred, mu_pred, t_x, t_mu, y_x, y_mu, ds_cur,
                params, geom, cfg.tol_residual,
            )
            if accepted is None:
                ds_cur *= 0.5
                if ds_cur < ds / min_ds_factor:
                    raise ContinuationStalled(
                        f"corrector kept failing down to ds = {ds_cur:.3e} "
                        f"after {len(points) - 1} accepted steps"
                    )
        state_new, mu_new, _ = accepted
        s_accum += ds_cur
        points.append(_point_from_state(state_new, mu_new, s_accum, params, geom))

        x_new = state_new.as_vector()
        sec_x, sec_mu = x_new - y_x, mu_new - y_mu
        sec_nrm = _metric_norm(sec_x, sec_mu)
        if sec_nrm > 0:
            sec_x, sec_mu = sec_x / sec_nrm, sec_mu / sec_nrm
            if np.mean(sec_x * t_x) + sec_mu * t_mu < 0:
                sec_x, sec_mu = -sec_x, -sec_mu
            t_x, t_mu = sec_x, sec_mu
        y_x, y_mu = x_new, mu_new
    return Branch(label, points, params, geom)


def solve_at_amplitude(
    params: ModelParams,
    geom: DomainGeometry,
    amplitude: float,
    mu_guess: float,
    state_guess: SystemState | None = None,
    tangent: KernelTangent | None = None,
    newton_cfg: NewtonConfig | None = None,
    max_iter: int = 30,
) -> BranchPoint:
    """Coexistence point with the predator amplitude pinned and mu free.

    Newton on [steady residual; mean(v) - amplitude = 0] over (state, mu).
    Used to sample the branch at prescribed amplitudes when auditing the
    tangent structure.
    """
    cfg = newton_cfg or NewtonConfig()
    n_cells = geom.n_omega
    if state_guess is None:
        kt = tangent if tangent is not None else solve_kernel_function(params, geom)
        x = constant_state(geom, params.lam, 0.0).as_vector() + amplitude * kt.direction(geom)
        x = np.maximum(x, 0.0)
    else:
        x = state_guess.as_vector()
    mu = mu_guess
    n1 = geom.n_omega1
    c_x = np.concatenate([np.zeros(geom.n_omega), np.full(n1, 1.0 / n1)])
    for _ in range(max_iter):
        st = SystemState.from_vector(x, n_cells)
        p_mu = params.with_mu(mu)
        res = residual_steady(p_mu, st.u, st.v, geom)
        con = float(st.v.values.mean()) - amplitude
        if np.max(np.abs(res)) <= cfg.tol_residual and abs(con) <= 1e-12:
            return _point_from_state(st, mu, amplitude, params, geom)
        J = assemble_jacobian(p_mu, st.u, st.v, geom)
        dmu_col = residual_mu_derivative(st.v, geom)
        bordered = sp.bmat(
            [
                [J, sp.csc_matrix(dmu_col.reshape(-1, 1))],
                [sp.csc_matrix(c_x.reshape(1, -1)), sp.csc_matrix([[0.0]])],
            ],
            format="csc",
        )
        try:
            delta = spla.splu(bordered).solve(-np.concatenate([res, [con]]))
        except RuntimeError as exc:
            raise NoConvergence(f"amplitude-pinned solve failed: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise NoConvergence("amplitude-pinned solve produced non-finite update")
        x = np.maximum(x + delta[:-1], 0.0)
        mu = mu + float(delta[-1])
    raise NoConvergence(f"amplitude-pinned solve: no convergence in {max_iter} iterations")


@dataclass
class AuditRow:
    mu: float
    gamma: float
    passed: bool


@dataclass
class SignRelationAudit:
    rows: list[AuditRow]
    n_pass: int
    n_fail: int
    n_excluded: int
    applicable: bool = True
    note: str = ""

    @property
    def all_pass(self) -> bool:
        return self.n_fail == 0 and self.n_pass > 0


def verify_sign_relation(
    branch: Branch,
    mu_star: float,
    mu_band: float = MU_BAND,
    gamma_band: float = GAMMA_BAND,
) -> SignRelationAudit:
    """Audit sign(mu - mu*) == sign(gamma) pointwise along the branch.

    Points inside the marginality bands are excluded (the relation is
    asymptotic and numerically meaningless there). On the nontrivial branch
    the relation holds on both sides of mu*; on the semitrivial line it is
    reversed (gamma = mu* - mu), so feeding that branch in draws a
    RegionOfApplicabilityWarning and an inapplicable audit.
    """
    if len(branch.points) < 5:
        raise ValueError("sign-relation audit needs at least 5 branch points")
    applicable = branch.label is BranchLabel.NONTRIVIAL
    note = ""
    if not applicable:
        note = (
            "audit fed the semitrivial branch: there the relation reads "
            "sign(mu - mu*) = -sign(gamma)"
        )
        warnings.warn(note, RegionOfApplicabilityWarning, stacklevel=2)
    rows = []
    n_excluded = 0
    for p in branch.points:
        if abs(p.mu - mu_star) <= mu_band or abs(p.gamma) <= gamma_band:
            n_excluded += 1
            continue
        rows.append(
            AuditRow(p.mu, p.gamma, np.sign(p.mu - mu_star) == np.sign(p.gamma))
        )
    n_pass = sum(r.passed for r in rows)
    return SignRelationAudit(
        rows, n_pass, len(rows) - n_pass, n_excluded, applicable, note
    )
