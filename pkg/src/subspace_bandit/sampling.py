"""Phase-1 sampling: base points, probe directions, and finite-difference
measurements of the gradient matrix.

The measurement operator maps a d x m_X matrix X to the m_Phi numbers
Phi(X)_i = sum_j phi_{i,j}^T X[:, j].  With X holding the mean-reward
gradients at the base points, one-sided finite differences of rewards along
the probe directions produce noisy linear measurements of X.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envs import DomainError, Environment, gradient_mean_reward, mean_hess, sample_rewards
from .util import uniform_sphere

UNIT_NORM_TOL = 1e-12
PLAN_SLACK = 1e-12


@dataclass(frozen=True)
class SamplingPlan:
    """Sizes and step length for one measurement collection.

    m_X base points on the unit sphere, m_Phi probe directions per base
    point, finite-difference step epsilon, and resampling factor N (each
    distinct point is queried N times and averaged).
    """

    m_X: int
    m_Phi: int
    epsilon: float
    N: int = 1

    def __post_init__(self):
        if self.m_X < 1:
            raise ValueError(f"m_X must be >= 1, got {self.m_X}")
        if self.m_Phi < 1:
            raise ValueError(f"m_Phi must be >= 1, got {self.m_Phi}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")

    def budget(self) -> int:
        """Queries consumed by one collection: N * m_X * (m_Phi + 1)."""
        return self.N * self.m_X * (self.m_Phi + 1)

    def step_reach(self, d: int) -> float:
        """Worst-case distance a shifted point moves off the sphere:
        epsilon * ||phi|| = epsilon * sqrt(d / m_Phi)."""
        return self.epsilon * np.sqrt(d / self.m_Phi)


@dataclass
class SamplingSets:
    """Realized base points and probe directions.

    points: (m_X, d), unit rows.  directions: (m_Phi, m_X, d) with entries
    exactly +/- 1/sqrt(m_Phi).  seed records how the draw was seeded when an
    integer seed was used (None when drawn from a caller-owned generator).
    """

    points: np.ndarray
    directions: np.ndarray
    seed: Optional[int] = None
    _flat: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def m_X(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def m_Phi(self) -> int:
        return self.directions.shape[0]

    def flat_operator(self) -> np.ndarray:
        """The (m_Phi, d * m_X) matrix F with Phi(X) = F @ X.ravel()."""
        if self._flat is None:
            m_phi = self.m_Phi
            self._flat = np.ascontiguousarray(
                self.directions.transpose(0, 2, 1).reshape(m_phi, self.d * self.m_X)
            )
        return self._flat


def draw_sampling_sets(plan: SamplingPlan, d: int, rng) -> SamplingSets:
    """Draw base points (uniform on S^{d-1}) and Rademacher probe directions.

    rng may be an integer seed (recorded on the result) or a numpy Generator.
    Points are drawn before directions, so the layout is reproducible from the
    seed alone.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    points = uniform_sphere(rng, plan.m_X, d)
    signs = rng.integers(0, 2, size=(plan.m_Phi, plan.m_X, d)).astype(float) * 2.0 - 1.0
    directions = signs / np.sqrt(plan.m_Phi)
    return SamplingSets(points=points, directions=directions, seed=seed)


def apply_operator(sets: SamplingSets, X: np.ndarray) -> np.ndarray:
    """Phi(X): contract each direction block against the columns of X."""
    X = np.asarray(X, dtype=float)
    if X.shape != (sets.d, sets.m_X):
        raise ValueError(f"X must have shape {(sets.d, sets.m_X)}, got {X.shape}")
    return sets.flat_operator() @ X.ravel()


def apply_adjoint(sets: SamplingSets, v: np.ndarray) -> np.ndarray:
    """Phi^*(v) = sum_i v_i Phi_i, a d x m_X matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape != (sets.m_Phi,):
        raise ValueError(f"v must have shape {(sets.m_Phi,)}, got {v.shape}")
    return (sets.flat_operator().T @ v).reshape(sets.d, sets.m_X)


@dataclass
class MeasurementBundle:
    """One collection's outputs: the measurement vector plus bookkeeping."""

    y: np.ndarray
    sets: SamplingSets
    plan: SamplingPlan
    budget_used: int
    averaged_base: np.ndarray
    averaged_shifted: np.ndarray


def shifted_points(sets: SamplingSets, epsilon: float) -> np.ndarray:
    """All shifted query points, shape (m_Phi * m_X, d), grouped by direction
    index i (rows i * m_X + j hold x_j + epsilon * phi_{i,j})."""
    pts = sets.points[None, :, :] + epsilon * sets.directions
    return pts.reshape(-1, sets.d)


def collect_measurements(env: Environment, sets: SamplingSets, plan: SamplingPlan) -> MeasurementBundle:
    """Query the environment at base and shifted points and form y.

    Every distinct point is queried N times and averaged.  Base points are
    queried first, then shifted points grouped by direction index.  All
    domain checks happen before the first query, so an infeasible plan costs
    no budget.
    """
    if sets.d != env.d:
        raise ValueError(f"sets have d = {sets.d} but environment has d = {env.d}")
    reach = plan.step_reach(env.d)
    if reach > env.nu + PLAN_SLACK:
        raise DomainError(
            f"step size infeasible: epsilon * sqrt(d / m_Phi) = {reach:.6g} exceeds nu = {env.nu:.6g}"
        )
    shifted = shifted_points(sets, plan.epsilon)
    worst = float(np.max(np.linalg.norm(shifted, axis=1)))
    if worst > 1.0 + env.nu + PLAN_SLACK:
        raise DomainError(
            f"shifted point outside the action ball: max norm {worst:.12g} > {1.0 + env.nu:.12g}"
        )

    start = env.query_count
    averaged_base = sample_rewards(env, sets.points, repeats=plan.N)
    flat_shifted = sample_rewards(env, shifted, repeats=plan.N)
    averaged_shifted = flat_shifted.reshape(plan.m_Phi, plan.m_X)
    used = env.query_count - start
    expected = plan.budget()
    if used != expected:
        raise RuntimeError(f"budget accounting broken: used {used}, expected {expected}")

    y = (averaged_shifted - averaged_base[None, :]).sum(axis=1) / plan.epsilon
    return MeasurementBundle(
        y=y,
        sets=sets,
        plan=plan,
        budget_used=used,
        averaged_base=averaged_base,
        averaged_shifted=averaged_shifted,
    )


# ---------- analysis helpers ----------


def phase1_target(env: Environment, sets: SamplingSets) -> np.ndarray:
    """The matrix the measurements are linear in: columns are mean-reward
    gradients at the base points (rank <= k).  Free of budget."""
    cols = [gradient_mean_reward(env, x) for x in sets.points]
    return np.stack(cols, axis=1)


def second_order_residual(env: Environment, sets: SamplingSets, epsilon: float) -> np.ndarray:
    """Closed-form curvature term: at sigma = 0, y - Phi(X) equals
    (epsilon / 2) * sum_j phi^T hess phi, exact for families with constant
    Hessian (linear and the quadratics)."""
    family = env.mean.family
    if family not in ("linear", "norm-squared", "centered-quadratic"):
        raise ValueError(f"no closed-form curvature term for family {family!r}")
    Hg = mean_hess(env.mean, np.zeros(env.k))
    AD = sets.directions @ env.A.T  # (m_Phi, m_X, k)
    quad = np.einsum("ijk,kl,ijl->i", AD, Hg, AD)
    return 0.5 * epsilon * quad


def second_order_bound(plan: SamplingPlan, d: int, c2: float, k: int) -> float:
    """Magnitude bound on the curvature term:
    (epsilon / 2) * C2 * k^2 * m_X * (d / m_Phi)."""
    return 0.5 * plan.epsilon * c2 * k**2 * plan.m_X * (d / plan.m_Phi)


def rip_ratio(sets: SamplingSets, X: np.ndarray) -> float:
    """||Phi(X)||^2 / ||X||_F^2 (scale-invariant by construction)."""
    X = np.asarray(X, dtype=float)
    fro2 = float(np.sum(X * X))
    if fro2 == 0.0:
        raise ValueError("X must be nonzero")
    v = apply_operator(sets, X)
    return float(v @ v) / fro2


def rip_ratio_sample(sets: SamplingSets, k: int, trials: int, rng) -> tuple:
    """Range of the isometry ratio over random rank-k matrices.

    Each trial draws X = L @ R with Gaussian factors (rank k almost surely),
    Frobenius-normalized.  Returns (min ratio, max ratio) over the trials.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    lo, hi = np.inf, -np.inf
    for _ in range(trials):
        L = rng.standard_normal((sets.d, k))
        R = rng.standard_normal((k, sets.m_X))
        X = L @ R
        X /= np.linalg.norm(X)
        ratio = rip_ratio(sets, X)
        lo = min(lo, ratio)
        hi = max(hi, ratio)
    return lo, hi


# ---------- serialization ----------


def bundle_to_json(bundle: MeasurementBundle) -> dict:
    """JSON-ready form: measurement vector, plan, draw seed, budget, and d."""
    return {
        "y": bundle.y.tolist(),
        "plan": {
            "m_X": bundle.plan.m_X,
            "m_Phi": bundle.plan.m_Phi,
            "epsilon": bundle.plan.epsilon,
            "N": bundle.plan.N,
        },
        "seed": bundle.sets.seed,
        "d": bundle.sets.d,
        "budget_used": bundle.budget_used,
    }


def bundle_from_json(data: dict) -> MeasurementBundle:
    """Rebuild a bundle from its JSON form.

    The sampling sets are regenerated from the recorded seed (the draw is
    deterministic), so this only works for bundles drawn from an integer
    seed.  Averaged per-point rewards are not serialized.
    """
    if data.get("seed") is None:
        raise ValueError("bundle was not drawn from an integer seed; cannot regenerate sets")
    plan = SamplingPlan(**data["plan"])
    sets = draw_sampling_sets(plan, int(data["d"]), int(data["seed"]))
    y = np.asarray(data["y"], dtype=float)
    if y.shape != (plan.m_Phi,):
        raise ValueError(f"y has shape {y.shape}, expected {(plan.m_Phi,)}")
    return MeasurementBundle(
        y=y,
        sets=sets,
        plan=plan,
        budget_used=int(data["budget_used"]),
        averaged_base=np.array([]),
        averaged_shifted=np.array([]),
    )
