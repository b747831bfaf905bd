"""First- and second-order optimality functionals and their consistency checks.

``first_order_integral`` is the gating integral: by the exact discrete duality
it equals minus the derivative of the cost along the convex perturbation, so a
difference quotient of the cost must reproduce it to rounding.

``second_order_functional`` assembles the curvature functional whose sign the
second-order necessary condition constrains on gated directions.  Its value
equals minus the second epsilon-derivative of the cost, which
``taylor_consistency`` verifies by Richardson extrapolation of cost sweeps.

A note on the assembled display: a variant that applies the state-direction
diffusion operator to control directions is dimensionally inconsistent (those
operators act on state-space elements, not control vectors), so the functional
here uses the control-direction diffusion derivative throughout, matching the
duality bookkeeping that produces it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import (
    AdjointPair,
    SecondAdjoint,
    _p_block_terms,
    compute_P,
    hu_field,
    huu_matrix,
    hxu_pairing,
    q_terms,
    solve_first_adjoint,
)
from .errors import ContractError
from .forward import solve_first_variation, solve_state
from .problems import ControlProblem, cost

__all__ = [
    "first_order_integral",
    "second_order_functional",
    "SecondOrderBreakdown",
    "second_order_breakdown",
    "taylor_consistency",
    "TaylorReport",
    "verify_theorem",
    "TheoremReport",
    "default_gate_tolerance",
]


def first_order_integral(p: ControlProblem, ubar: np.ndarray, u: np.ndarray,
                         adj: AdjointPair) -> float:
    """Gate integral sum_k dt <H_u(k), u_k - ubar_k>; equals -dJ/deps at 0."""
    ubar = p.check_control_path(ubar)
    u = p.check_control_path(u)
    hu = hu_field(p, adj)
    return float(p.algebra.dt * np.sum(hu * (u - ubar)))


@dataclass
class SecondOrderBreakdown:
    """Pieces of the curvature functional, kept for diagnostics."""

    value: float
    curvature_part: complex  # control curvature + mixed curvature terms
    p_part: complex          # five P-pairings (summation-by-parts form)
    q_part: float            # eliminated martingale combination
    imag_abs: float          # imaginary magnitude discarded by the final Re


def second_order_breakdown(p: ControlProblem, ubar: np.ndarray, u: np.ndarray,
                           adj: AdjointPair, sa: SecondAdjoint,
                           x1) -> SecondOrderBreakdown:
    ubar = p.check_control_path(ubar)
    u = p.check_control_path(u)
    if sa.adj is not adj:
        raise ContractError("second adjoint was built from a different first adjoint")
    if not np.array_equal(ubar, sa.ubar):
        raise ContractError("functional must be evaluated at the adjoint's base control")
    du = u - ubar
    alg = p.algebra
    curix = 0.0 + 0.0j
    for k in range(alg.n):
        yh, yk = adj.duality_pair(k)
        huu = huu_matrix(p, k, sa.xbar[k], ubar[k], yh, yk)
        curix += alg.dt * complex(du[k] @ huu @ du[k])
        xu = hxu_pairing(p, k, sa.xbar[k], ubar[k], yh, yk)
        if xu is not None:
            curix += alg.dt * 2.0 * xu(x1[k], du[k])
    pb = _p_block_terms(p, sa, x1, du)
    qt = q_terms(p, sa, x1, du)
    total = curix + pb
    return SecondOrderBreakdown(
        value=float(total.real + qt),
        curvature_part=curix, p_part=pb, q_part=qt,
        imag_abs=abs(total.imag))


def second_order_functional(p: ControlProblem, ubar: np.ndarray, u: np.ndarray,
                            adj: AdjointPair, sa: SecondAdjoint, x1) -> float:
    """Curvature functional S; equals -d2J/deps2 at 0 along u - ubar."""
    return second_order_breakdown(p, ubar, u, adj, sa, x1).value


def _richardson(values: list[float], order: int) -> list[float]:
    w = 2.0 ** order
    return [(w * values[i + 1] - values[i]) / (w - 1.0) for i in range(len(values) - 1)]


@dataclass
class TaylorReport:
    fo: float
    s: float
    a_est: float
    b_est: float
    s_est: float
    rel_err_a: float
    rel_err_b: float
    rel_err_s: float
    fit_residual: float
    eps: list
    gaps: list
    passed: bool


def taylor_consistency(p: ControlProblem, ubar: np.ndarray, u: np.ndarray,
                       eps_list, tol: float = 1e-3) -> TaylorReport:
    """Cost-sweep cross-check of both functionals.

    Fits J(u^eps) - J(ubar) = a eps + b eps^2 (+ higher order); the duality
    identities force a = -FO and b = -S/2.  Estimates use two Richardson
    levels over a halving sweep, so smooth higher-order terms drop to O(eps^2)
    of the finest point.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_list) < 3:
        raise ValueError("need at least three sweep points")
    ubar = p.check_control_path(ubar)
    u = p.check_control_path(u)
    du = u - ubar

    xbar = solve_state(p, ubar)
    adj = solve_first_adjoint(p, xbar, ubar)
    sa = compute_P(p, xbar, ubar, adj)
    x1 = solve_first_variation(p, xbar, du)
    fo = first_order_integral(p, ubar, u, adj)
    s = second_order_functional(p, ubar, u, adj, sa, x1)

    j0 = cost(p, ubar, xbar)
    gaps = []
    for eps in eps_list:
        ueps = ubar + eps * du
        if not all(p.control_set.contains(ueps[k]) for k in range(p.algebra.n)):
            raise ValueError(f"perturbed control at eps={eps} leaves the admissible box")
        gaps.append(cost(p, ueps, solve_state(p, ueps)) - j0)

    a_vals = [g / e for g, e in zip(gaps, eps_list)]
    a_est = _richardson(_richardson(a_vals, 1), 2)[-1]
    # subtract the first-order Taylor term a*eps = -FO*eps before scaling
    s_vals = [-2.0 * (g + e * fo) / (e * e) for g, e in zip(gaps, eps_list)]
    s_est = _richardson(_richardson(s_vals, 1), 2)[-1]

    design = np.stack([np.array(eps_list), np.array(eps_list) ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(design, np.array(gaps), rcond=None)
    fit_res = float(np.linalg.norm(design @ coef - np.array(gaps)))
    b_est = float(coef[1])

    # scale against the larger expansion coefficient so a vanishing gate or a
    # vanishing curvature (stationary or flat directions) cannot inflate the
    # ratios; truncation errors live on the scale of the surviving terms
    scale = max(abs(fo), abs(s), 1e-12)
    rel_a = abs(a_est + fo) / max(abs(fo), scale * 1e-3)
    rel_b = abs(b_est + 0.5 * s) / max(abs(0.5 * s), scale * 1e-3)
    rel_s = abs(s_est - s) / max(abs(s), scale * 1e-3)
    return TaylorReport(fo=fo, s=s, a_est=float(a_est), b_est=b_est, s_est=float(s_est),
                        rel_err_a=rel_a, rel_err_b=rel_b, rel_err_s=rel_s,
                        fit_residual=fit_res, eps=eps_list, gaps=gaps,
                        passed=bool(rel_a <= tol and rel_s <= tol))


def default_gate_tolerance(p: ControlProblem, adj: AdjointPair) -> float:
    """1e-8 scaled by the size of the control-derivative field."""
    hu = hu_field(p, adj)
    scale = 1.0 + p.algebra.dt * float(np.sum(np.linalg.norm(hu, axis=1)))
    return 1e-8 * scale


@dataclass
class TheoremReport:
    rows: list          # (fo, s, gated, ok) per candidate
    fo_tol: float
    s_tol: float
    verdict: bool

    @property
    def gated_count(self) -> int:
        return sum(1 for _, _, gated, _ in self.rows if gated)


def verify_theorem(p: ControlProblem, ubar: np.ndarray, candidates: list,
                   fo_tol: float | None = None, s_tol: float = 1e-6) -> TheoremReport:
    """Check the second-order necessary condition over a candidate family.

    For every candidate whose gate integral vanishes within ``fo_tol`` the
    curvature functional must be <= ``s_tol``.  Ungated candidates are reported
    but make no assertion.
    """
    ubar = p.check_control_path(ubar)
    xbar = solve_state(p, ubar)
    adj = solve_first_adjoint(p, xbar, ubar)
    sa = compute_P(p, xbar, ubar, adj)
    if fo_tol is None:
        fo_tol = default_gate_tolerance(p, adj)
    rows = []
    verdict = True
    for u in candidates:
        u = p.check_control_path(u)
        fo = first_order_integral(p, ubar, u, adj)
        x1 = solve_first_variation(p, xbar, u - ubar)
        s = second_order_functional(p, ubar, u, adj, sa, x1)
        gated = abs(fo) <= fo_tol
        ok = (not gated) or (s <= s_tol)
        verdict = verdict and ok
        rows.append((fo, s, gated, ok))
    return TheoremReport(rows=rows, fo_tol=float(fo_tol), s_tol=float(s_tol),
                         verdict=verdict)
