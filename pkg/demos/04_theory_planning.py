#!/usr/bin/env python3
# Theory-mode planning: every constant of the analysis, derived from
# (n, d, k, sigma, c2, alpha, nu) alone.  No environment is touched.

from subspace_bandit import StepSizeError, TheoryConstants, plan_parameters

D, K, C2, ALPHA, NU = 10, 1, 1.0, 0.4, 0.2

# Noiseless case first: the resampling factor N stays at 1 and the
# phase-1 budget n1 = N * m_X * (m_Phi + 1) is fixed, so feasibility is
# just a question of n outgrowing it.
print("sigma = 0")
print(f"{'n':>12} {'f':>8} {'m_X':>5} {'m_Phi':>9} {'N':>3} {'epsilon':>9} {'n1':>11}  feasible")
for n in (10**6, 10**8, 10**9):
    p = plan_parameters(n, D, K, 0.0, C2, ALPHA, NU, TheoryConstants())
    print(
        f"{p.n:>12} {p.f:>8.4f} {p.m_X:>5} {p.m_Phi:>9} {p.N:>3} "
        f"{p.epsilon:>9.5f} {p.n1:>11}  {p.feasible}"
    )

# With noise the story changes: N must crush the effective noise below
# the step-size interval's well-posedness threshold, and N grows faster
# than n at these constants.  The planner flags this honestly instead of
# repairing it.
print()
print("sigma = 0.05")
for n in (10**6, 10**10):
    p = plan_parameters(n, D, K, 0.05, C2, ALPHA, NU, TheoryConstants())
    print(
        f"n = {n:.0e}: N = {p.N:.3e}, n1 = {p.n1:.3e}, feasible = {p.feasible}, "
        f"minimal feasible n = {p.minimal_feasible_n}"
    )

# The alternate exploration exponent for k <= 2 halves the decay of f,
# which tames N by orders of magnitude.
print()
print("sigma = 0.05, alternate exponent mode")
p = plan_parameters(
    10**10, D, K, 0.05, C2, ALPHA, NU, TheoryConstants(f_exponent_mode="remark")
)
print(f"n = 1e10: N = {p.N:.3e}, n1 = {p.n1:.3e}, feasible = {p.feasible}")

# Constants outside their admissible ranges are rejected up front.
try:
    plan_parameters(10**6, D, K, 0.0, C2, ALPHA, NU, TheoryConstants(delta=0.9))
except (StepSizeError, ValueError) as exc:
    print()
    print("delta = 0.9 rejected:", exc)
