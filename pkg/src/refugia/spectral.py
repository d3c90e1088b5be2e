"""Leading-eigenvalue computation and linearized stability classification.

The workhorse is real shift-and-invert power iteration over a small shift
ladder, polished by Rayleigh-quotient iteration. The ladder combines fixed
shifts {0, +1/2, -1/2} with a shift just right of the Gershgorin right edge,
which always brackets the rightmost real eigenvalue, plus an upward climb
from the best candidate found. On the predator-free branch the leading
eigenvalue has a closed form (the constant predator mode is grid-exact),
which serves as an analytic oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenNoConvergence
from .operators import ModelParams

#: eigenvalues within this margin of zero classify as MARGINAL
STABILITY_MARGIN = 1e-6

#: residual contract: ||J x - value x||_inf <= RESIDUAL_TOL * ||x||_inf
RESIDUAL_TOL = 1e-8


class StabilityFlag(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass
class EigenPair:
    """Leading eigenvalue (largest real part found), its eigenvector with
    inf-norm 1, and the achieved residual. For a dominating complex pair the
    real part is reported, complex_pair is set, and the residual refers to
    the two-dimensional invariant-subspace block."""

    value: float
    vector: np.ndarray
    residual: float
    complex_pair: bool = False


def _gershgorin_right_edge(J: sp.spmatrix) -> float:
    csr = J.tocsr()
    diag = csr.diagonal()
    abs_rows = np.asarray(abs(csr).sum(axis=1)).ravel()
    return float(np.max(diag + (abs_rows - np.abs(diag))))


def _factorize(J: sp.csc_matrix, sigma: float):
    """LU of (J - sigma I), perturbing sigma if it hits an eigenvalue exactly."""
    n = J.shape[0]
    eye = sp.identity(n, format="csc")
    for attempt in range(4):
        try:
            return spla.splu((J - sigma * eye).tocsc()), sigma
        except RuntimeError:
            sigma = sigma + 1e-8 * (1.0 + abs(sigma)) * 10.0**attempt
    return None, sigma


def _rayleigh(J, x) -> float:
    return float((x @ (J @ x)) / (x @ x))


def _normalize(y: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(y)))
    return y / y[k]  # fixes both scale and sign deterministically


class _Candidate:
    __slots__ = ("value", "vector", "residual", "history")

    def __init__(self):
        self.value = np.nan
        self.vector = None
        self.residual = np.inf
        self.history = []


def _iterate_from_shift(J, Jcsc, sigma, x0, floor, power_iters=40, rayleigh_iters=15):
    """Inverse power iteration at fixed shift, then Rayleigh polishing."""
    cand = _Candidate()
    lu, sigma = _factorize(Jcsc, sigma)
    if lu is None:
        return cand
    x = _normalize(x0.astype(float))
    stale = 0
    for _ in range(power_iters):
        y = lu.solve(x)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) == 0.0:
            return cand
        x = _normalize(y)
        theta = _rayleigh(J, x)
        res = float(np.max(np.abs(J @ x - theta * x)))
        cand.history.append(x)
        if res < cand.residual:
            cand.value, cand.vector, cand.residual = theta, x.copy(), res
            stale = 0
        else:
            stale += 1
        if res <= max(floor, 1e-10) or stale >= 4:
            break
    for _ in range(rayleigh_iters):
        if cand.residual <= floor:
            break
        lu, _ = _factorize(Jcsc, cand.value)
        if lu is None:
            break
        y = lu.solve(cand.vector)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) == 0.0:
            break
        x = _normalize(y)
        theta = _rayleigh(J, x)
        res = float(np.max(np.abs(J @ x - theta * x)))
        cand.history.append(x)
        if res < cand.residual:
            cand.value, cand.vector, cand.residual = theta, x.copy(), res
        else:
            break
    return cand


def _complex_block(J, history):
    """Project onto the span of the last two iterates; a complex conjugate
    pair dominating the iteration shows up as complex eigenvalues of the
    projected 2x2 block with a small block residual."""
    if len(history) < 2:
        return None
    q1 = history[-1] / np.linalg.norm(history[-1])
    q2 = history[-2] - (history[-2] @ q1) * q1
    nq2 = np.linalg.norm(q2)
    if nq2 < 1e-12:
        return None
    q2 = q2 / nq2
    Q = np.column_stack([q1, q2])
    T = Q.T @ (J @ Q)
    w = np.linalg.eigvals(T)
    block_res = float(np.max(np.abs(J @ Q - Q @ T)))
    if np.max(np.abs(w.imag)) <= 1e-10:
        return None
    lead = w[np.argmax(w.real)]
    return float(lead.real), Q[:, 0], block_res


def leading_eigenvalue(
    J: sp.spmatrix,
    residual_tol: float = RESIDUAL_TOL,
    extra_shifts: tuple[float, ...] = (),
) -> EigenPair:
    """Eigenvalue of largest real part reachable by shift-and-invert iteration.

    Raises EigenNoConvergence if no candidate meets the residual contract and
    no dominating complex pair can be identified.
    """
    J = J.tocsr()
    n = J.shape[0]
    if J.shape[0] != J.shape[1]:
        raise ValueError("operator must be square")
    Jcsc = J.tocsc()
    norm_inf = float(np.max(np.asarray(abs(J).sum(axis=1)).ravel())) or 1.0
    floor = max(5e-15 * norm_inf, 1e-14)
    x0 = np.ones(n)

    edge = _gershgorin_right_edge(J)
    shifts = [0.0, 0.5, -0.5, edge + 0.01 * (1.0 + abs(edge))]
    shifts.extend(extra_shifts)

    converged: list[_Candidate] = []
    attempted: list[_Candidate] = []
    for sigma in shifts:
        cand = _iterate_from_shift(J, Jcsc, sigma, x0, floor)
        attempted.append(cand)
        if cand.vector is not None and cand.residual <= residual_tol:
            converged.append(cand)

    if converged:
        best = max(converged, key=lambda c: c.value)
        # climb upward in case a larger real eigenvalue sits beyond the ladder
        for _ in range(8):
            cand = _iterate_from_shift(J, Jcsc, best.value + 0.5, x0, floor)
            if (
                cand.vector is not None
                and cand.residual <= residual_tol
                and cand.value > best.value + 1e-10
            ):
                best = cand
            else:
                break
        return EigenPair(best.value, best.vector, best.residual)

    for cand in attempted:
        block = _complex_block(J, cand.history)
        if block is not None and block[2] <= 1e-6 * norm_inf:
            real_part, vec, res = block
            return EigenPair(real_part, _normalize(vec), res, complex_pair=True)

    raise EigenNoConvergence(
        f"no eigenpair met residual {residual_tol:g} over shifts {shifts}"
    )


def semitrivial_leading_analytic(params: ModelParams) -> float:
    """Exact leading eigenvalue of the linearization at the predator-free state.

    The linearization is block triangular there: the prey block lam*(lap - I)
    tops out at -lam (constant mode), the predator block at
    c*lam/(1 + m*lam) - mu (constant Neumann mode, grid-exact).
    """
    return max(-params.lam, params.c * params.lam / (1.0 + params.m * params.lam) - params.mu)


def classify_value(value: float, margin: float = STABILITY_MARGIN) -> StabilityFlag:
    if value < -margin:
        return StabilityFlag.STABLE
    if value > margin:
        return StabilityFlag.UNSTABLE
    return StabilityFlag.MARGINAL


def classify_stability(J: sp.spmatrix, margin: float = STABILITY_MARGIN) -> StabilityFlag:
    """Stability of the state whose linearization is J, by the sign of the
    leading eigenvalue with a symmetric marginality band."""
    return classify_value(leading_eigenvalue(J).value, margin)
