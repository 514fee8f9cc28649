"""Low-rank recovery of the gradient matrix from sketched measurements.

The measurement bundle from :mod:`subspace_bandit.sampling` gives a linear
sketch ``y ~ Phi(X)`` of the stacked-gradient matrix ``X`` whose column space
is spanned by the rows of the hidden mixing matrix.  This module recovers a
low-rank estimate of ``X`` by solving a matrix Dantzig selector

    minimize ||M||_*   subject to   ||Phi*(y - Phi(M))||_op <= lam

via nuclear-norm-penalized proximal descent with continuation, then reads the
subspace estimate off the top left singular vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sampling import SamplingSets, apply_adjoint

RANK_FLOOR = 1e-12


class DegenerateRecoveryError(RuntimeError):
    """Raised when the recovered matrix carries no energy in the target rank."""


def compute_lambda(
    c2: float,
    epsilon: float,
    d: int,
    m_x: int,
    m_phi: int,
    k: int,
    sigma_eff: float,
    delta: float,
    gamma: float,
) -> float:
    """Constraint level for the Dantzig selector.

    Combines the second-order sketch bias (scales like ``epsilon``) with the
    averaged-noise term (scales like ``sigma_eff / epsilon``); both pick up
    the isometry slack factor ``sqrt(1 + delta)``.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if sigma_eff < 0:
        raise ValueError(f"sigma_eff must be nonnegative, got {sigma_eff}")
    m = max(d, m_x)
    curvature = c2 * epsilon * d * m_x * k**2 / (2.0 * math.sqrt(m_phi))
    noise = 4.0 * gamma * sigma_eff * math.sqrt(m_x * m_phi * m) / epsilon
    return math.sqrt(1.0 + delta) * (curvature + noise)


def ds_error_bound(lam: float, k: int, c0: float = 4.0) -> float:
    """Frobenius error guarantee for the rank-k truncated selector solution."""
    return 2.0 * math.sqrt(c0 * k) * lam


def operator_norm(
    mat: np.ndarray,
    max_steps: int = 50,
    tol: float = 1e-8,
    v0: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Largest singular value by power iteration on ``mat.T @ mat``.

    Returns ``(sigma1, v)`` where ``v`` is the right singular vector, usable
    as a warm start for the next call on a nearby matrix.
    """
    n = mat.shape[1]
    if v0 is not None and v0.shape == (n,):
        v = v0.astype(float, copy=True)
    else:
        v = np.ones(n) / math.sqrt(n)
    sigma = 0.0
    for _ in range(max_steps):
        w = mat.T @ (mat @ v)
        norm = np.linalg.norm(w)
        if norm <= 0.0:
            return 0.0, v
        v_new = w / norm
        sigma_new = math.sqrt(norm)
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new, v_new
        sigma, v = sigma_new, v_new
    return sigma, v


@dataclass(frozen=True)
class DantzigProblem:
    """One selector instance: sketch targets, sampling sets, level, target rank."""

    y: np.ndarray
    sets: SamplingSets
    lam: float
    k: int

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        object.__setattr__(self, "lam", float(self.lam))


@dataclass
class SolverConfig:
    max_iters: int = 5000
    rel_tol: float = 1e-7
    feas_tol: float = 1e-6
    tau_shrink: float = 0.3
    max_outer: int = 40
    power_steps: int = 50
    power_tol: float = 1e-8


@dataclass
class SolveInfo:
    iterations: int
    outer_rounds: int
    converged: bool
    feasible: bool
    residual_norm: float
    tau_final: float


def _svt(mat: np.ndarray, thresh: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``thresh * ||.||_*``."""
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - thresh, 0.0)
    keep = s > 0.0
    if not np.any(keep):
        return np.zeros_like(mat)
    return (u[:, keep] * s[keep]) @ vt[keep]


def _fista(flat_op, y, shape, tau, lipschitz, start, max_iters, rel_tol):
    """Accelerated proximal descent for tau*||M||_* + 0.5*||Phi(M) - y||^2."""
    m_cur = start.copy()
    z = start.copy()
    t = 1.0
    step = 1.0 / lipschitz
    iters = 0
    converged = False
    for iters in range(1, max_iters + 1):
        resid = flat_op @ z.ravel() - y
        grad = (flat_op.T @ resid).reshape(shape)
        m_new = _svt(z - step * grad, tau * step)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = m_new + ((t - 1.0) / t_new) * (m_new - m_cur)
        change = np.linalg.norm(m_new - m_cur)
        scale = max(1.0, np.linalg.norm(m_new))
        m_cur = m_new
        t = t_new
        if change <= rel_tol * scale:
            converged = True
            break
    return m_cur, iters, converged


def solve_dantzig(
    problem: DantzigProblem, cfg: Optional[SolverConfig] = None
) -> tuple[np.ndarray, SolveInfo]:
    """Solve the selector by continuation over the nuclear-norm penalty weight.

    Each penalized subproblem is solved by FISTA with singular value
    thresholding and warm starts; the weight is driven down geometrically
    until the dual residual ``||Phi*(y - Phi(M))||_op`` sits at or below
    ``lam`` (within ``feas_tol`` relative).  The penalized and constrained
    formulations meet at the constraint boundary, so the final iterate is the
    selector solution up to solver tolerance.
    """
    cfg = cfg or SolverConfig()
    sets = problem.sets
    y = np.asarray(problem.y, dtype=float)
    d = sets.points.shape[1]
    m_x = sets.points.shape[0]
    shape = (d, m_x)

    dual0 = apply_adjoint(sets, y)
    dual0_norm = float(np.linalg.norm(dual0, 2))
    if problem.lam >= dual0_norm:
        # zero is already feasible, and it has minimal nuclear norm
        info = SolveInfo(
            iterations=0,
            outer_rounds=0,
            converged=True,
            feasible=True,
            residual_norm=dual0_norm,
            tau_final=problem.lam,
        )
        return np.zeros(shape), info

    flat_op = sets.flat_operator()
    lipschitz = float(np.linalg.norm(flat_op, 2)) ** 2

    # continuation: start just under the level where zero is optimal, and
    # aim slightly inside the constraint so inexact subproblem solves still
    # land feasible
    tau = 0.9 * dual0_norm
    tau_floor = max(problem.lam * (1.0 - 10.0 * cfg.feas_tol), 0.0)
    if tau <= tau_floor:
        tau = tau_floor

    m_cur = np.zeros(shape)
    total_iters = 0
    outer = 0
    sub_converged = False
    cur_tol = cfg.rel_tol
    power_v: Optional[np.ndarray] = None
    while outer < cfg.max_outer:
        outer += 1
        m_cur, iters, sub_converged = _fista(
            flat_op, y, shape, tau, lipschitz, m_cur, cfg.max_iters, cur_tol
        )
        total_iters += iters
        dual = apply_adjoint(sets, y - flat_op @ m_cur.ravel())
        dual_norm, power_v = operator_norm(
            dual, max_steps=cfg.power_steps, tol=cfg.power_tol, v0=power_v
        )
        at_floor = tau <= tau_floor * (1.0 + 1e-12)
        if dual_norm <= problem.lam * (1.0 + cfg.feas_tol) and at_floor:
            # the break is decisive, so confirm the power-iteration estimate
            # with the exact norm; an undershoot means one more grind round
            dual_norm = float(np.linalg.norm(dual, 2))
            if dual_norm <= problem.lam * (1.0 + cfg.feas_tol):
                break
        if not at_floor:
            tau = max(tau * cfg.tau_shrink, tau_floor)
        else:
            # stalled at the target weight with the dual residual still above
            # the constraint: the iterate-change stop fired too early, so
            # tighten it and let the next round grind further down
            cur_tol = max(cur_tol * 1e-2, 1e-15)

    dual = apply_adjoint(sets, y - flat_op @ m_cur.ravel())
    residual_norm = float(np.linalg.norm(dual, 2))
    feasible = bool(residual_norm <= problem.lam * (1.0 + cfg.feas_tol))
    info = SolveInfo(
        iterations=total_iters,
        outer_rounds=outer,
        converged=bool(sub_converged and feasible),
        feasible=feasible,
        residual_norm=residual_norm,
        tau_final=tau,
    )
    return m_cur, info


def truncate_rank_k(mat: np.ndarray, k: int) -> np.ndarray:
    """Best rank-k approximation in Frobenius norm (truncated SVD)."""
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = min(k, s.size)
    return (u[:, :r] * s[:r]) @ vt[:r]


def singular_values(mat: np.ndarray) -> np.ndarray:
    return np.linalg.svd(mat, compute_uv=False)


def extract_subspace(mat_k: np.ndarray, k: int) -> np.ndarray:
    """Row-orthonormal (k, d) basis from the top-k left singular vectors.

    Raises :class:`DegenerateRecoveryError` when the k-th singular value is
    numerically zero, meaning the solve produced no usable rank-k signal.
    """
    u, s, _ = np.linalg.svd(mat_k, full_matrices=False)
    if s.size < k or s[k - 1] <= RANK_FLOOR:
        raise DegenerateRecoveryError(
            "degenerate recovery: singular value "
            f"{0.0 if s.size < k else float(s[k - 1]):.3e} at rank {k} is below "
            f"{RANK_FLOOR:.0e} (spectrum: {np.array2string(s[: k + 3], precision=3)})"
        )
    basis = u[:, :k].T.copy()
    # fix signs so repeated runs give bit-identical bases
    for i in range(k):
        j = int(np.argmax(np.abs(basis[i])))
        if basis[i, j] < 0:
            basis[i] = -basis[i]
    return basis


def subspace_error(a: np.ndarray, a_hat: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors of two row spaces."""
    a = np.asarray(a, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float)
    if a.shape[1] != a_hat.shape[1]:
        raise ValueError(
            f"ambient dimensions differ: {a.shape[1]} vs {a_hat.shape[1]}"
        )
    return float(np.linalg.norm(a.T @ a - a_hat.T @ a_hat, "fro"))


@dataclass
class RecoveryResult:
    """Everything phase 2 needs, plus solver diagnostics for the record."""

    estimate: np.ndarray
    estimate_rank_k: np.ndarray
    basis: np.ndarray
    lam: float
    spectrum: np.ndarray
    info: SolveInfo
    subspace_err: Optional[float] = None
    error_bound: Optional[float] = None


def recover_subspace(
    problem: DantzigProblem,
    cfg: Optional[SolverConfig] = None,
    true_basis: Optional[np.ndarray] = None,
    c0: float = 4.0,
) -> RecoveryResult:
    """Solve, truncate to rank k, and extract the subspace estimate."""
    estimate, info = solve_dantzig(problem, cfg)
    est_k = truncate_rank_k(estimate, problem.k)
    spectrum = singular_values(estimate)
    basis = extract_subspace(est_k, problem.k)
    err = None if true_basis is None else subspace_error(true_basis, basis)
    return RecoveryResult(
        estimate=estimate,
        estimate_rank_k=est_k,
        basis=basis,
        lam=problem.lam,
        spectrum=spectrum,
        info=info,
        subspace_err=err,
        error_bound=ds_error_bound(problem.lam, problem.k, c0),
    )


def result_to_dict(result: RecoveryResult) -> dict:
    """JSON-ready summary (drops the dense matrices, keeps the basis)."""
    out = {
        "basis": result.basis.tolist(),
        "lambda": result.lam,
        "spectrum": result.spectrum.tolist(),
        "error_bound": result.error_bound,
        "iterations": result.info.iterations,
        "outer_rounds": result.info.outer_rounds,
        "converged": result.info.converged,
        "feasible": result.info.feasible,
        "residual_norm": result.info.residual_norm,
    }
    if result.subspace_err is not None:
        out["subspace_err"] = result.subspace_err
    return out
