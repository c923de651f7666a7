"""DC optimal power flow with D-FACTS reactances and the angle-constrained MTD variant.

The reactance-dependent problems are solved by decomposition: for fixed
reactances the dispatch is an exact linear program; the D-FACTS reactances
are searched by multi-start bounded local refinement over the D-FACTS box.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, minimize

from ._validation import check_random_state
from .estimation import build_measurement_matrix
from .grid import GridCase, incidence_matrix
from .subspace import orthonormal_basis, smallest_principal_angle

log = logging.getLogger(__name__)

FLOW_TOL = 1e-6
BALANCE_TOL = 1e-6
#: Cost per MW of flow-limit violation in the elastic LP used by the outer search.
VIOLATION_PENALTY = 1e5
#: A restart must beat the incumbent by this relative margin to replace it.
TIE_RTOL = 1e-7


class InfeasibleError(RuntimeError):
    """No feasible dispatch or perturbation was found."""

    def __init__(self, message: str, best_angle: float | None = None):
        super().__init__(message)
        self.best_angle = best_angle


@dataclass(frozen=True, eq=False)
class DispatchSolution:
    g: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    flows: np.ndarray
    cost: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PerturbationPlan:
    x_prime: np.ndarray
    H_prime: np.ndarray
    gamma_achieved: float
    dispatch: DispatchSolution
    c_mtd: float
    baseline_cost: float
    gamma_th: float = 0.0
    smallest_angle: float = 0.0


class _DispatchLP:
    """Reusable DC-OPF linear program for one grid and load vector."""

    def __init__(self, grid: GridCase, load):
        self.grid = grid
        self.load = np.asarray(load, dtype=float)
        if self.load.shape != (grid.n_bus,):
            raise ValueError(f"load must have {grid.n_bus} entries")
        self.A = incidence_matrix(grid)
        self.cost = np.array([g.cost for g in grid.generators])
        self.g_bounds = [(g.gmin, g.gmax) for g in grid.generators]
        self.n_lp = 0

    def matrices(self, x):
        base = self.grid.base_mva
        At = self.A.T / np.asarray(x)[:, None]
        F = base * At[:, self.grid.non_ref]
        B = base * (self.A @ At)[:, self.grid.non_ref]
        return F, B

    def _solve(self, x, elastic: bool, cost=None, extra_ub=None):
        grid = self.grid
        G, n, L = grid.n_gen, len(grid.non_ref), grid.n_branch
        F, B = self.matrices(x)
        k = L if elastic else 0
        c = np.r_[self.cost if cost is None else cost, np.zeros(n), np.full(k, VIOLATION_PENALTY)]
        A_eq = np.hstack([grid.gen_matrix, -B, np.zeros((grid.n_bus, k))])
        zg = np.zeros((L, G))
        slack = -np.eye(L) if elastic else np.zeros((L, 0))
        A_ub = np.vstack([np.hstack([zg, F, slack]), np.hstack([zg, -F, slack])])
        b_ub = np.r_[grid.fmax, grid.fmax]
        if extra_ub is not None:
            row, rhs = extra_ub
            A_ub = np.vstack([A_ub, np.r_[row, np.zeros(n + k)]])
            b_ub = np.r_[b_ub, rhs]
        bounds = self.g_bounds + [(None, None)] * n + [(0, None)] * k
        self.n_lp += 1
        return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=self.load,
                       bounds=bounds, method="highs")

    def value(self, x) -> tuple[float, float]:
        """Elastic objective and total flow-limit violation (MW) at reactances ``x``."""
        val, viol, _ = self.value_and_grad(x, grad=False)
        return val, viol

    def value_and_grad(self, x, grad: bool = True):
        """Elastic LP value, violation and its gradient in ``x`` from the duals.

        For fixed primal optimum the derivative of the constraint matrices in
        ``x`` acts like a right-hand-side change of ``-dA z``, so
        ``dv/dx = -y_eq^T (dA_eq/dx) z - y_ub^T (dA_ub/dx) z``.
        """
        x = np.asarray(x, dtype=float)
        res = self._solve(x, elastic=True)
        L = self.grid.n_branch
        if res.status != 0:
            return math.inf, math.inf, None
        viol = float(res.x[-L:].sum())
        if not grad:
            return float(res.fun), viol, None
        G = self.grid.n_gen
        theta = res.x[G:G + len(self.grid.non_ref)]
        F, _ = self.matrices(x)
        fx = (F @ theta) / x  # f_l / x_l
        y_eq = res.eqlin.marginals
        y_ub = res.ineqlin.marginals
        g = -(y_eq @ self.A) * fx - (y_ub[L:2 * L] - y_ub[:L]) * fx
        return float(res.fun), viol, g

    def solve(self, x, lexicographic: bool = False) -> DispatchSolution:
        grid = self.grid
        x = np.asarray(x, dtype=float)
        res = self._solve(x, elastic=False)
        G = grid.n_gen
        if res.status != 0:
            nan = np.full(G, np.nan)
            return DispatchSolution(nan, x, np.full(len(grid.non_ref), np.nan),
                                    np.full(grid.n_branch, np.nan), math.inf, False,
                                    {"status": res.status, "message": res.message})
        sol = res.x
        if lexicographic:
            sol = self._lexicographic(x, float(res.fun), sol)
        g, theta = sol[:G], sol[G:]
        F, _ = self.matrices(x)
        return DispatchSolution(g, x, theta, F @ theta, float(self.cost @ g), True,
                                {"status": 0})

    def _lexicographic(self, x, opt: float, sol):
        """Among cost-optimal dispatches pick the lexicographically smallest ``g``."""
        G = self.grid.n_gen
        cap = opt + 1e-9 * max(1.0, abs(opt))
        fixed_ub = list(self.g_bounds)
        for i in range(G):
            e = np.zeros(G)
            e[i] = 1.0
            saved = self.g_bounds
            self.g_bounds = fixed_ub
            res = self._solve(x, elastic=False, cost=e, extra_ub=(self.cost, cap))
            self.g_bounds = saved
            if res.status != 0:
                break
            lo = fixed_ub[i][0]
            fixed_ub[i] = (lo, max(lo, res.x[i] + 1e-9))
            sol = res.x
        return sol


def dispatch_lp(grid: GridCase, load=None, x=None, lexicographic: bool = True) -> DispatchSolution:
    """Least-cost dispatch for fixed reactances (default: case reactances and loads)."""
    load = grid.loads if load is None else load
    x = grid.x if x is None else grid.check_reactances(x)
    return _DispatchLP(grid, load).solve(x, lexicographic)


def check_dispatch(grid: GridCase, load, sol: DispatchSolution) -> list[str]:
    """Re-check every OPF constraint independently of the solver; returns violations."""
    problems = []
    if not sol.feasible:
        return ["solution flagged infeasible"]
    load = np.asarray(load, dtype=float)
    gmin = np.array([g.gmin for g in grid.generators])
    gmax = np.array([g.gmax for g in grid.generators])
    if np.any(sol.g < gmin - 1e-6) or np.any(sol.g > gmax + 1e-6):
        problems.append("generator limits violated")
    A = incidence_matrix(grid)
    theta = np.zeros(grid.n_bus)
    theta[grid.non_ref] = sol.theta
    f = grid.base_mva * (A.T @ theta) / sol.x
    if np.any(np.abs(f - sol.flows) > 1e-6):
        problems.append("flows inconsistent with angles")
    if np.any(np.abs(f) > grid.fmax + FLOW_TOL):
        problems.append("flow limits violated")
    if np.any(np.abs(grid.gen_matrix @ sol.g - load - A @ f) > BALANCE_TOL):
        problems.append("power balance violated")
    if np.any(sol.x < grid.x_min - 1e-9) or np.any(sol.x > grid.x_max + 1e-9):
        problems.append("reactances outside D-FACTS limits")
    cost = float(np.array([g.cost for g in grid.generators]) @ sol.g)
    if abs(cost - sol.cost) > 1e-6 * max(1.0, abs(cost)):
        problems.append("reported cost does not match dispatch")
    return problems


class AngleToReference:
    """Separation angle between ``Col(H_ref)`` and ``Col(H(x))`` with a cached basis."""

    def __init__(self, grid: GridCase, H_ref):
        self.grid = grid
        self.Q_ref = orthonormal_basis(H_ref).Q
        self.H_ref = np.asarray(H_ref, dtype=float)

    def __call__(self, x) -> float:
        Q = orthonormal_basis(build_measurement_matrix(self.grid, x)).Q
        P = self.Q_ref
        s = max(scipy.linalg.norm(Q - P @ (P.T @ Q), 2), scipy.linalg.norm(P - Q @ (Q.T @ P), 2))
        return float(np.arcsin(min(1.0, s)))


@dataclass
class SearchOptions:
    n_starts: int = 100
    seed: int = 0
    maxiter: int = 100
    include_default: bool = True


def restart_points(d: int, opts: SearchOptions) -> list[np.ndarray]:
    """Random starts in the unit box; start ``k`` comes from stream ``(seed, k)``."""
    return [np.random.default_rng(np.random.SeedSequence(opts.seed, spawn_key=(1, k))).uniform(size=d)
            for k in range(opts.n_starts)]


def _search(grid: GridCase, load, opts: SearchOptions, angle: AngleToReference | None = None,
            gamma_th: float = 0.0, extra_starts=()):
    """Multi-start SLSQP over the D-FACTS reactances (scaled to the unit box).

    The objective is the elastic LP value, whose gradient comes from the LP
    duals; the angle constraint uses finite differences. A restart only
    counts if its end point is flow-feasible and meets the angle threshold.
    Returns ``(best_x, best_cost, diagnostics)``.
    """
    lp = _DispatchLP(grid, load)
    idx = grid.dfacts_index
    lo, hi = grid.x_min[idx], grid.x_max[idx]
    x_base = grid.x.copy()
    d = len(idx)

    def feasible_at(x):
        val, viol = lp.value(x)
        gam = angle(x) if angle is not None else math.inf
        return val, viol <= FLOW_TOL and gam >= gamma_th - 1e-6, gam

    if d == 0 or np.all(hi == lo):
        val, ok, gam = feasible_at(x_base)
        diag = {"restarts": 0, "lp_solves": lp.n_lp, "best_trace": [], "max_angle": gam if angle else 0.0}
        return (x_base, val, diag) if ok else (None, math.inf, diag)

    span = hi - lo

    def to_x(u):
        x = x_base.copy()
        x[idx] = lo + np.clip(u, 0.0, 1.0) * span
        return x

    scale = max(1.0, abs(lp.value(x_base)[0]))
    memo: dict[bytes, tuple[float, np.ndarray]] = {}

    def fun(u):
        key = np.asarray(u).tobytes()
        if key not in memo:
            val, _, grad = lp.value_and_grad(to_x(u))
            memo.clear()
            memo[key] = (val / scale, grad[idx] * span / scale)
        return memo[key][0]

    def jac(u):
        fun(u)
        return memo[np.asarray(u).tobytes()][1]

    cons = []
    if angle is not None and gamma_th > 0:
        cons = [{"type": "ineq", "fun": lambda u: angle(to_x(u)) - gamma_th}]

    starts = [np.clip((np.asarray(x)[idx] - lo) / span, 0.0, 1.0) for x in extra_starts]
    if opts.include_default:
        starts.append(np.clip((x_base[idx] - lo) / span, 0.0, 1.0))
    starts += restart_points(d, opts)[: max(0, opts.n_starts - len(starts))]

    best_x, best_val, trace, max_angle = None, math.inf, [], 0.0
    for u0 in starts:
        res = minimize(fun, u0, jac=jac, method="SLSQP", bounds=[(0.0, 1.0)] * d,
                       constraints=cons, options={"maxiter": opts.maxiter, "ftol": 1e-10})
        for u in (res.x, u0):
            x = to_x(u)
            val, ok, gam = feasible_at(x)
            if angle is not None:
                max_angle = max(max_angle, gam)
            if ok and (best_x is None or val < best_val - TIE_RTOL * max(1.0, abs(best_val))):
                best_x, best_val = x, val
        trace.append(best_val)
    diag = {"restarts": len(starts), "lp_solves": lp.n_lp, "best_trace": trace, "max_angle": max_angle}
    return best_x, best_val, diag


def baseline_opf(grid: GridCase, load=None, n_starts: int = 100, seed: int = 0,
                 maxiter: int = 100, extra_starts=()) -> DispatchSolution:
    """Least-cost dispatch jointly over generation and D-FACTS reactances.

    ``extra_starts`` are tried first; among optima of equal cost (within a
    relative 1e-7) the earliest start wins.
    """
    load = grid.loads if load is None else np.asarray(load, dtype=float)
    x, val, diag = _search(grid, load, SearchOptions(n_starts, seed, maxiter), extra_starts=extra_starts)
    if x is None:
        raise InfeasibleError("no feasible dispatch at any sampled reactance setting")
    sol = _DispatchLP(grid, load).solve(x, lexicographic=True)
    sol.diagnostics.update(diag)
    return sol


def mtd_cost(c_opf_base: float, c_opf_mtd: float) -> float:
    """Relative OPF-cost increase caused by the MTD perturbation."""
    if not c_opf_base > 0:
        raise ValueError("baseline OPF cost must be positive")
    c = (c_opf_mtd - c_opf_base) / c_opf_base
    if c < -1e-9:
        log.warning("negative MTD cost %.3g: baseline OPF was not globally optimal", c)
    return c


def mtd_opf(grid: GridCase, load, H_attacker, gamma_th: float, baseline: DispatchSolution | None = None,
            n_starts: int = 100, seed: int = 0, maxiter: int = 100, extra_starts=()) -> PerturbationPlan:
    """Least-cost reactances and dispatch whose measurement matrix is at least
    ``gamma_th`` away from ``H_attacker``.

    Raises :class:`InfeasibleError` (with the largest angle seen) if no
    feasible point meets the angle constraint.
    """
    if not 0.0 <= gamma_th <= math.pi / 2:
        raise ValueError("gamma_th must lie in [0, pi/2]")
    load = grid.loads if load is None else np.asarray(load, dtype=float)
    if baseline is None:
        baseline = baseline_opf(grid, load, n_starts, seed, maxiter)
    angle = AngleToReference(grid, H_attacker)
    starts = [baseline.x, *extra_starts]
    x, val, diag = _search(grid, load, SearchOptions(n_starts, seed, maxiter), angle, gamma_th, starts)
    if x is None:
        raise InfeasibleError(f"angle {gamma_th:.4f} unattainable within D-FACTS limits "
                              f"(largest found {diag['max_angle']:.4f})", diag["max_angle"])
    sol = _DispatchLP(grid, load).solve(x, lexicographic=True)
    sol.diagnostics.update(diag)
    H_prime = build_measurement_matrix(grid, x)
    return PerturbationPlan(
        x_prime=x, H_prime=H_prime, gamma_achieved=angle(x), dispatch=sol,
        c_mtd=mtd_cost(baseline.cost, sol.cost), baseline_cost=baseline.cost,
        gamma_th=gamma_th, smallest_angle=smallest_principal_angle(H_attacker, H_prime),
    )
