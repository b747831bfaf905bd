"""Candidate-control generation: adjoint-based projected gradient, brute force.

The gradient field is the control derivative of the Hamiltonian along the
iterate's own trajectory and adjoint; by the exact discrete duality this is
the exact gradient of the discrete cost, so fixed-step ascent on the
Hamiltonian descends the cost.  Brute force enumerates a product grid over the
box and certifies tiny instances independently of any gradient information.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .adjoint import hu_field, solve_first_adjoint
from .errors import BudgetError, StepSizeError
from .forward import solve_state
from .problems import ControlProblem, cost

__all__ = ["projected_gradient", "brute_force_search", "GradientTrace"]

BRUTE_FORCE_BUDGET = 10 ** 6


@dataclass
class GradientTrace:
    costs: list
    grad_norms: list
    step_halvings: int
    converged: bool
    stalled: bool = False

    @property
    def iterations(self) -> int:
        return len(self.costs) - 1


def projected_gradient(p: ControlProblem, u0: np.ndarray, step: float = 0.5,
                       max_iter: int = 200, grad_tol: float = 1e-9,
                       ) -> tuple[np.ndarray, GradientTrace]:
    """Fixed-step projected ascent on the Hamiltonian (descent on the cost).

    A proposed step is halved (up to 20 times) whenever it fails to keep the
    cost finite and non-increasing, so the recorded cost trace is monotone.
    Stops when the projected-gradient norm falls below ``grad_tol``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    u = p.check_control_path(np.asarray(u0, dtype=float)).copy()
    dt = p.algebra.dt
    j_curr = cost(p, u, solve_state(p, u))
    costs = [j_curr]
    grad_norms = []
    halvings_total = 0
    converged = False
    stalled = False
    for _ in range(max_iter):
        xbar = solve_state(p, u)
        adj = solve_first_adjoint(p, xbar, u)
        grad = hu_field(p, adj)
        moved = (p.control_set.project(u + step * grad) - u) / step
        pg_norm = float(np.sqrt(dt * np.sum(moved * moved)))
        grad_norms.append(pg_norm)
        if pg_norm <= grad_tol:
            converged = True
            break
        s = step
        accepted = False
        saw_nonfinite = False
        for _halving in range(21):
            cand = p.control_set.project(u + s * grad)
            j_cand = cost(p, cand, solve_state(p, cand))
            if not np.isfinite(j_cand):
                saw_nonfinite = True
            elif j_cand <= j_curr:
                accepted = True
                break
            s *= 0.5
            halvings_total += 1
        if not accepted:
            if saw_nonfinite:
                raise StepSizeError("cost stayed non-finite after 20 halvings")
            # finite but no decrease at machine precision: stationary for
            # this arithmetic, stop here rather than fail
            stalled = True
            break
        u, j_curr = cand, j_cand
        costs.append(j_curr)
    return u, GradientTrace(costs=costs, grad_norms=grad_norms,
                            step_halvings=halvings_total, converged=converged,
                            stalled=stalled)


def brute_force_search(p: ControlProblem, grid_points_per_dim: int,
                       budget: int = BRUTE_FORCE_BUDGET) -> tuple[np.ndarray, float]:
    """Exhaustive minimum over piecewise-constant controls on a product grid.

    Enumeration is lexicographic and ties keep the earlier (lexicographically
    smallest) control, so the result is deterministic.
    """
    if grid_points_per_dim < 1:
        raise ValueError("need at least one grid point per dimension")
    if not p.control_set.is_bounded():
        raise ValueError("brute force requires a bounded control box")
    n, m = p.algebra.n, p.m
    total = grid_points_per_dim ** (n * m)
    if total > budget:
        raise BudgetError(f"{total} grid controls exceed the budget {budget}")
    if grid_points_per_dim == 1:
        axes = [np.array([0.5 * (p.control_set.lower[i] + p.control_set.upper[i])])
                for i in range(m)]
    else:
        axes = [np.linspace(p.control_set.lower[i], p.control_set.upper[i],
                            grid_points_per_dim) for i in range(m)]
    best_u = None
    best_j = np.inf
    for combo in itertools.product(range(grid_points_per_dim), repeat=n * m):
        u = np.empty((n, m))
        for k in range(n):
            for i in range(m):
                u[k, i] = axes[i][combo[k * m + i]]
        j = cost(p, u, solve_state(p, u))
        if j < best_j:
            best_j = j
            best_u = u
    return best_u, float(best_j)
