"""Verification suites behind the CLI: one function per suite.

Every suite draws randomness from a generator seeded by (config seed, suite
index), so reruns and suite subsets reproduce bit-identical numbers.  Suites
return plain metric dictionaries (floats, ints, strings, short lists) ready
for canonical serialization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .adjoint import (
    TestTuple,
    compute_P,
    first_duality_residual,
    solve_first_adjoint,
    transposition_residual,
)
from .clifford import (
    CliffordElement,
    inner,
    make_algebra,
    mul_dw_left,
    mul_dw_right,
    multiply_batch,
    parity,
    star,
    state_m,
)
from .conditions import (
    first_order_integral,
    second_order_functional,
    taylor_consistency,
    verify_theorem,
)
from .config import SUITE_ORDER, RunConfig
from .forward import order_estimate_slopes, solve_first_variation, solve_state
from .matrices import realization_for
from .optimize import brute_force_search, projected_gradient
from .problems import ProblemSpec, cost, make_problem

__all__ = ["SuiteResult", "run_suite", "run_all", "suite_rng"]


@dataclass
class SuiteResult:
    name: str
    status: str  # "pass" | "fail"
    metrics: dict
    plotdata: dict | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def suite_rng(seed: int, suite: str) -> np.random.Generator:
    idx = SUITE_ORDER.index(suite)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(idx,)))


def _tol(cfg: RunConfig, suite: str, key: str, default):
    val = cfg.tolerances.get(suite, {}).get(key, default)
    return type(default)(val)


def _interior_control(p, rng, shape, span=0.6):
    lo = np.where(np.isfinite(p.control_set.lower), p.control_set.lower, -1.0)
    hi = np.where(np.isfinite(p.control_set.upper), p.control_set.upper, 1.0)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * span
    return mid + (2.0 * rng.random(shape) - 1.0) * half


def _unit_rows(rng, count, dim):
    z = rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _unit_rows_on_support(rng, count, dim, support):
    """Unit-norm rows living on a shared random blade support."""
    z = np.zeros((count, dim), dtype=np.complex128)
    z[:, support] = rng.standard_normal((count, support.size)) \
        + 1j * rng.standard_normal((count, support.size))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


# -- algebra -----------------------------------------------------------------

def run_algebra(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "algebra")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    probes = int(_tol(cfg, "algebra", "probes", 10000))
    law_tol = _tol(cfg, "algebra", "laws", 1e-10)
    oracle_tol = _tol(cfg, "algebra", "oracle", 1e-12)

    worst = {"assoc": 0.0, "anticommute": 0.0, "star": 0.0, "parity": 0.0,
             "trace": 0.0, "orthonormal": 0.0, "square": 0.0}
    chunk = 250
    # The laws are multilinear, so probing random sparse supports with random
    # coefficients tests them as strongly as dense draws; a dense tail keeps
    # full-width products in the mix at an affordable cost.
    dense_tail = min(probes, max(50, probes // 100))
    support_width = min(alg.dim, 16)
    done = 0
    while done < probes:
        b = min(chunk, probes - done)
        if done < probes - dense_tail:
            A, B, C = (
                _unit_rows_on_support(
                    rng, b, alg.dim,
                    np.sort(rng.choice(alg.dim, size=support_width, replace=False)))
                for _ in range(3))
        else:
            A, B, C = (_unit_rows(rng, b, alg.dim) for _ in range(3))
        ab = multiply_batch(alg, A, B)
        res = multiply_batch(alg, ab, C) - multiply_batch(alg, A, multiply_batch(alg, B, C))
        worst["assoc"] = max(worst["assoc"], float(np.abs(res).max()))
        res = np.conj(ab) * alg.reversal_signs \
            - multiply_batch(alg, np.conj(B) * alg.reversal_signs,
                             np.conj(A) * alg.reversal_signs)
        worst["star"] = max(worst["star"], float(np.abs(res).max()))
        res = ab * alg.parity_signs \
            - multiply_batch(alg, A * alg.parity_signs, B * alg.parity_signs)
        worst["parity"] = max(worst["parity"], float(np.abs(res).max()))
        ba = multiply_batch(alg, B, A)
        res = np.abs(ab[:, 0] - ba[:, 0])
        worst["trace"] = max(worst["trace"], float(res.max()))

        # generator relations and blade orthonormality, index arithmetic only
        table = alg.sign_table
        gi = rng.integers(1, alg.n + 1, size=b)
        gj = rng.integers(1, alg.n + 1, size=b)
        for i, j in zip(gi, gj):
            si, sj = 1 << (i - 1), 1 << (j - 1)
            if i == j:
                worst["square"] = max(worst["square"], abs(table[si, si] - 1.0))
            else:
                worst["anticommute"] = max(
                    worst["anticommute"], abs(table[si, sj] + table[sj, si]))
        ss = rng.integers(0, alg.dim, size=b)
        tt = rng.integers(0, alg.dim, size=b)
        for s, t in zip(ss, tt):
            es = CliffordElement.blade(alg, int(s))
            et = CliffordElement.blade(alg, int(t))
            val = state_m(star(es) * et)
            want = 1.0 if s == t else 0.0
            worst["orthonormal"] = max(worst["orthonormal"], abs(val - want))
        done += b

    # explicit matrix realization as an independent oracle
    n_or = min(alg.n, 6)
    alg_or = make_algebra(n_or, cfg.t0, cfg.T) if n_or != alg.n else alg
    mr = realization_for(alg_or)
    oracle_err = 0.0
    for _ in range(12):
        a = CliffordElement(alg_or, _unit_rows(rng, 1, alg_or.dim)[0])
        b = CliffordElement(alg_or, _unit_rows(rng, 1, alg_or.dim)[0])
        am, bm = mr.to_matrix(a), mr.to_matrix(b)
        oracle_err = max(oracle_err, float(np.max(np.abs(
            (a * b).coeffs - mr.from_matrix(alg_or, am @ bm).coeffs))))
        oracle_err = max(oracle_err, float(np.max(np.abs(
            star(a).coeffs - mr.from_matrix(alg_or, am.conj().T).coeffs))))
        oracle_err = max(oracle_err, abs(state_m(a) - mr.state(am)))
        oracle_err = max(oracle_err, abs(inner(a, b) - mr.inner(am, bm)))

    ok = max(worst.values()) <= law_tol and oracle_err <= oracle_tol
    metrics = {"probes": probes, "law_tol": law_tol,
               "max_law_residual": max(worst.values()), **worst,
               "oracle_n": n_or, "oracle_tol": oracle_tol, "oracle_residual": oracle_err}
    return SuiteResult("algebra", "pass" if ok else "fail", metrics)


# -- isometry ----------------------------------------------------------------

def run_isometry(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "isometry")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    probes = int(_tol(cfg, "isometry", "probes", 1000))
    tol = _tol(cfg, "isometry", "tol", 1e-10)

    worst_iso = 0.0
    worst_parity = 0.0
    for _ in range(probes):
        total = np.zeros(alg.dim, dtype=np.complex128)
        acc = 0.0
        for k in range(alg.n):
            keep = alg.adapted_mask(k)
            f = CliffordElement(alg, np.where(
                keep, rng.standard_normal(alg.dim) + 1j * rng.standard_normal(alg.dim), 0))
            g = CliffordElement(alg, np.where(
                keep, rng.standard_normal(alg.dim) + 1j * rng.standard_normal(alg.dim), 0))
            lhs = mul_dw_right(f, k + 1) + mul_dw_left(g, k + 1)
            red = mul_dw_right(f + parity(g), k + 1)
            scale = max(lhs.norm(), 1.0)
            worst_parity = max(worst_parity, float(np.max(np.abs(
                lhs.coeffs - red.coeffs))) / scale)
            total += lhs.coeffs
            acc += alg.dt * (f + parity(g)).norm() ** 2
        nrm = float(np.linalg.norm(total)) ** 2
        worst_iso = max(worst_iso, abs(nrm - acc) / max(nrm, acc, 1.0))

    ok = worst_iso <= tol and worst_parity <= tol
    return SuiteResult("isometry", "pass" if ok else "fail",
                       {"probes": probes, "tol": tol,
                        "isometry_residual": worst_iso,
                        "parity_reduction_residual": worst_parity})


# -- orders ------------------------------------------------------------------

def run_orders(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "orders")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    eps = [2.0 ** -e for e in range(3, 10)]
    ubar = _interior_control(p, rng, (alg.n, p.m), span=0.5)
    u = _interior_control(p, rng, (alg.n, p.m), span=1.0)
    rep = order_estimate_slopes(p, ubar, u, eps)
    lo1, hi1 = _tol(cfg, "orders", "slope1_lo", 0.9), _tol(cfg, "orders", "slope1_hi", 1.1)
    lo2, hi2 = _tol(cfg, "orders", "slope2_lo", 1.8), _tol(cfg, "orders", "slope2_hi", 2.2)
    min3 = _tol(cfg, "orders", "slope3_min", 2.5)
    ok = rep.dx.within(lo1, hi1) and rep.dx_minus_x1.within(lo2, hi2) \
        and rep.dx_minus_x1_x2.at_least(min3)

    def describe(fit):
        return {"slope": fit.slope, "exact": fit.exact}

    plot = {"orders_sweep": [(e, v0, v1, v2) for (e, v0), (_, v1), (_, v2) in zip(
        rep.dx.points, rep.dx_minus_x1.points, rep.dx_minus_x1_x2.points)]}
    return SuiteResult("orders", "pass" if ok else "fail",
                       {"deviation": describe(rep.dx),
                        "deviation_minus_linear": describe(rep.dx_minus_x1),
                        "deviation_minus_quadratic": describe(rep.dx_minus_x1_x2)},
                       plotdata=plot)


# -- gradient ----------------------------------------------------------------

def run_gradient(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "gradient")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    trials = int(_tol(cfg, "gradient", "trials", 5))
    dual_tol = _tol(cfg, "gradient", "duality", 1e-10)
    fd_tol = _tol(cfg, "gradient", "fd", 1e-6)
    h = _tol(cfg, "gradient", "fd_step", 1e-4)

    ubar = _interior_control(p, rng, (alg.n, p.m), span=0.5)
    xbar = solve_state(p, ubar)
    adj = solve_first_adjoint(p, xbar, ubar)
    j0 = cost(p, ubar, xbar)

    worst_dual = 0.0
    worst_fd = 0.0
    for _ in range(trials):
        du = rng.uniform(-0.3, 0.3, size=(alg.n, p.m))
        x1 = solve_first_variation(p, xbar, du)
        worst_dual = max(worst_dual, first_duality_residual(p, adj, x1, du))
        fo = first_order_integral(p, ubar, ubar + du, adj)
        jp = cost(p, ubar + h * du, solve_state(p, ubar + h * du))
        jm = cost(p, ubar - h * du, solve_state(p, ubar - h * du))
        dj = (jp - jm) / (2 * h)
        worst_fd = max(worst_fd, abs(dj + fo) / max(abs(fo), abs(dj), 1e-8))

    ok = worst_dual <= dual_tol and worst_fd <= fd_tol
    return SuiteResult("gradient", "pass" if ok else "fail",
                       {"trials": trials, "duality_tol": dual_tol,
                        "duality_residual": worst_dual,
                        "fd_tol": fd_tol, "fd_residual": worst_fd})


# -- adjoint (transposition) ---------------------------------------------------

def run_adjoint(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "adjoint")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    pairs_n = int(_tol(cfg, "adjoint", "pairs", 100))
    trans_tol = _tol(cfg, "adjoint", "transposition", 1e-9)
    closed_tol = _tol(cfg, "adjoint", "closed_form", 1e-10)

    ubar = _interior_control(p, rng, (alg.n, p.m), span=0.5)
    xbar = solve_state(p, ubar)
    adj = solve_first_adjoint(p, xbar, ubar)
    sa = compute_P(p, xbar, ubar, adj)

    term_y = float(np.max(np.abs((adj.y[alg.n] + p.g_x(xbar.terminal)).coeffs)))
    term_p = 0.0
    if p.g_xx is not None:
        gxx = p.g_xx(xbar.terminal)
        for _ in range(8):
            v = CliffordElement(alg, _unit_rows(rng, 1, alg.dim)[0])
            w = CliffordElement(alg, _unit_rows(rng, 1, alg.dim)[0])
            term_p = max(term_p, abs(sa.P[alg.n].pair(v, w) + gxx(v, w)))
    else:
        term_p = float(np.max(np.abs(sa.P[alg.n].lin)))

    def rand_adapted(k):
        keep = alg.adapted_mask(k)
        c = rng.standard_normal(alg.dim) + 1j * rng.standard_normal(alg.dim)
        return CliffordElement(alg, np.where(keep, c, 0))

    tuples = []
    for i in range(pairs_n):
        k = int(rng.integers(0, alg.n))
        mk = lambda: TestTuple(k=k, zeta=rand_adapted(k),
                               mu=[rand_adapted(j) for j in range(k, alg.n)])
        tuples.append((mk(), mk()))
    trans_res = transposition_residual(p, sa, tuples)

    # closed form on an auxiliary zero-dynamics running-cost instance
    q_rate = 0.7
    p_free = make_problem(alg, ProblemSpec.gallery("free", q=q_rate, r=0.0, s=0.0,
                                                   x_tgt=None))
    u0 = np.zeros((alg.n, p_free.m))
    x0t = solve_state(p_free, u0)
    adj0 = solve_first_adjoint(p_free, x0t, u0)
    sa0 = compute_P(p_free, x0t, u0, adj0)
    closed_err = 0.0
    for k in range(alg.n + 1):
        keep = alg.adapted_mask(k)
        want = np.diag(np.where(keep, -2.0 * q_rate * (alg.T - alg.time(k)), 0.0)
                       .astype(complex))
        closed_err = max(closed_err, float(np.max(np.abs(sa0.P[k].lin - want))))

    sym_err = 0.0
    for k in range(alg.n + 1):
        z1, z2 = rand_adapted(k), rand_adapted(k)
        a, b = sa.P[k].pair(z2, z1), sa.P[k].pair(z1, z2)
        sym_err = max(sym_err, abs(a.real - b.real) / (1 + abs(a)))

    ok = (trans_res <= trans_tol and closed_err <= closed_tol
          and term_y <= 1e-14 and term_p <= 1e-12 and sym_err <= 1e-9)
    return SuiteResult("adjoint", "pass" if ok else "fail",
                       {"pairs": pairs_n, "transposition_tol": trans_tol,
                        "transposition_residual": trans_res,
                        "terminal_y_error": term_y, "terminal_p_error": term_p,
                        "closed_form_error": closed_err,
                        "real_symmetry_error": sym_err})


# -- second order --------------------------------------------------------------

def run_second_order(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "second_order")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    tol = _tol(cfg, "second_order", "tol", 1e-3)
    eps = [2.0 ** -e for e in range(4, 9)]
    ubar = _interior_control(p, rng, (alg.n, p.m), span=0.4)
    u = _interior_control(p, rng, (alg.n, p.m), span=0.9)
    rep = taylor_consistency(p, ubar, u, eps, tol=tol)
    plot = {"taylor_sweep": [(e, g) for e, g in zip(rep.eps, rep.gaps)]}
    return SuiteResult("second_order", "pass" if rep.passed else "fail",
                       {"tol": tol, "fo": rep.fo, "s": rep.s,
                        "a_est": rep.a_est, "s_est": rep.s_est,
                        "rel_err_first_order": rep.rel_err_a,
                        "rel_err_second_order": rep.rel_err_s,
                        "fit_residual": rep.fit_residual},
                       plotdata=plot)


# -- theorem -------------------------------------------------------------------

def _grid_candidates(p, points: int):
    axes = [np.linspace(p.control_set.lower[i], p.control_set.upper[i], points)
            for i in range(p.m)]
    n, m = p.algebra.n, p.m
    out = []
    for combo in itertools.product(range(points), repeat=n * m):
        u = np.empty((n, m))
        for k in range(n):
            for i in range(m):
                u[k, i] = axes[i][combo[k * m + i]]
        out.append(u)
    return out


def run_theorem(cfg: RunConfig) -> SuiteResult:
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    points = int(_tol(cfg, "theorem", "grid_points", 5))
    s_tol = _tol(cfg, "theorem", "s_tol", 1e-6)
    fo_tol = cfg.tolerances.get("theorem", {}).get("fo_tol")
    analytic_tol = _tol(cfg, "theorem", "analytic_tol", 1e-10)

    ubar, j_star = brute_force_search(p, points)
    candidates = _grid_candidates(p, points)
    report = verify_theorem(p, ubar, candidates, fo_tol=fo_tol, s_tol=s_tol)

    # analytic companion: pure control cost, S = -2r ||du||^2 exactly
    r_rate = 0.5
    p_free = make_problem(alg, ProblemSpec.gallery(
        "free", m=p.m, lower=tuple(p.control_set.lower), upper=tuple(p.control_set.upper),
        q=0.0, r=r_rate, s=0.0, x_tgt=None))
    u0 = np.zeros((alg.n, p.m))
    x0t = solve_state(p_free, u0)
    adj0 = solve_first_adjoint(p_free, x0t, u0)
    sa0 = compute_P(p_free, x0t, u0, adj0)
    analytic_err = 0.0
    analytic_ok = True
    for u in candidates:
        x1 = solve_first_variation(p_free, x0t, u - u0)
        s_val = second_order_functional(p_free, u0, u, adj0, sa0, x1)
        want = -2.0 * r_rate * alg.dt * float(np.sum(u * u))
        analytic_err = max(analytic_err, abs(s_val - want))
        analytic_ok = analytic_ok and s_val <= s_tol

    ok = report.verdict and analytic_err <= analytic_tol and analytic_ok
    gated_s = [s for fo, s, gated, _ in report.rows if gated]
    metrics = {"grid_points": points, "candidates": len(candidates),
               "brute_force_value": j_star,
               "fo_tol": report.fo_tol, "s_tol": s_tol,
               "gated_count": report.gated_count,
               "max_gated_s": max(gated_s) if gated_s else 0.0,
               "analytic_max_error": analytic_err,
               "verdict_ok": report.verdict,
               "fo_s_table": [[fo, s] for fo, s, _, _ in report.rows]}
    plot = {"theorem_fo_s": [(fo, s) for fo, s, _, _ in report.rows]}
    return SuiteResult("theorem", "pass" if ok else "fail", metrics, plotdata=plot)


# -- optimize ------------------------------------------------------------------

def run_optimize(cfg: RunConfig) -> SuiteResult:
    rng = suite_rng(cfg.seed, "optimize")
    alg = make_algebra(cfg.n_steps, cfg.t0, cfg.T, cap=cfg.cap)
    p = make_problem(alg, cfg.problem)
    step = _tol(cfg, "optimize", "step", 0.5)
    max_iter = int(_tol(cfg, "optimize", "max_iter", 300))
    grad_tol = _tol(cfg, "optimize", "grad_tol", 1e-9)
    points = int(_tol(cfg, "optimize", "grid_points", 5))

    u0 = _interior_control(p, rng, (alg.n, p.m), span=0.8)
    u, trace = projected_gradient(p, u0, step=step, max_iter=max_iter,
                                  grad_tol=grad_tol)
    metrics = {"iterations": trace.iterations, "final_cost": trace.costs[-1],
               "final_grad_norm": trace.grad_norms[-1] if trace.grad_norms else 0.0,
               "converged": trace.converged, "stalled": trace.stalled,
               "step_halvings": trace.step_halvings}
    ok = trace.converged or trace.stalled
    if p.control_set.is_bounded() and points ** (alg.n * p.m) <= 10 ** 5:
        _, j_bf = brute_force_search(p, points)
        metrics["brute_force_value"] = j_bf
        ok = ok and trace.costs[-1] <= j_bf + 1e-9
    monotone = all(nxt - prev <= 1e-14
                   for prev, nxt in zip(trace.costs[:-1], trace.costs[1:]))
    metrics["trace_monotone"] = monotone
    plot = {"optimize_trace": [(float(i), c) for i, c in enumerate(trace.costs)]}
    return SuiteResult("optimize", "pass" if (ok and monotone) else "fail",
                       metrics, plotdata=plot)


_RUNNERS = {
    "algebra": run_algebra,
    "isometry": run_isometry,
    "orders": run_orders,
    "gradient": run_gradient,
    "adjoint": run_adjoint,
    "second_order": run_second_order,
    "theorem": run_theorem,
    "optimize": run_optimize,
}


def run_suite(cfg: RunConfig, name: str) -> SuiteResult:
    return _RUNNERS[name](cfg)


def run_all(cfg: RunConfig) -> list[SuiteResult]:
    return [run_suite(cfg, name) for name in cfg.suites]
