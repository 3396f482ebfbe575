"""Subgradient minimization of the exact-penalty dual objective.

The penalized dual objective is

    g_alpha(y) = -b'y + alpha * max(-lambda_min(Z(y)), 0),   Z(y) = C - A'y,

whose minimizer coincides with the dual SDP solution whenever alpha exceeds
the nuclear norm of the primal solution.  A subgradient is -b when the slack
matrix is strictly feasible and -b + alpha * A(vv') otherwise, with v a unit
eigenvector of the smallest eigenvalue; each iteration therefore costs one
matrix-free extreme eigenpair.  Step schedules are pluggable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .problems import SdpProblem, SlackOperator
from .spectral import EigensolverConfig, min_eigpair


class DivergenceError(RuntimeError):
    """The dual iteration blew up (objective grew by more than 1e6x)."""


# --------------------------------------------------------------------------
# penalty weight
# --------------------------------------------------------------------------

@dataclass
class PenaltyConfig:
    """How to pick the penalty weight alpha.

    rule 'explicit' uses ``alpha``; 'trace-scaled' uses
    ``scale * problem.trace_hint`` (requires the hint); 'doubling' is handled
    by :func:`search_alpha_doubling`.
    """

    rule: str = "explicit"
    alpha: float | None = None
    scale: float = 1.1
    max_doublings: int = 12

    def resolve(self, problem: SdpProblem) -> float:
        if self.rule == "explicit":
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("explicit rule needs alpha > 0")
            return float(self.alpha)
        if self.rule == "trace-scaled":
            if problem.trace_hint is None:
                raise ValueError("trace-scaled rule needs problem.trace_hint")
            return float(self.scale * problem.trace_hint)
        raise ValueError(f"cannot resolve alpha for rule {self.rule!r}")


# --------------------------------------------------------------------------
# objective and subgradient
# --------------------------------------------------------------------------

def eval_penalized(problem: SdpProblem, y: np.ndarray, alpha: float,
                   eig_cfg: EigensolverConfig | None = None,
                   v0: np.ndarray | None = None):
    """(g_alpha(y), lambda_min(Z(y)), v, converged).

    v is returned even when the slack matrix is strictly feasible, so the
    caller can reuse it as a warm start.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    pair = min_eigpair(SlackOperator(problem, y), eig_cfg, v0=v0)
    g_val = float(-(problem.b @ y) + alpha * max(-pair.value, 0.0))
    return g_val, pair.value, pair.vector, pair.converged


def subgradient(problem: SdpProblem, y: np.ndarray, alpha: float,
                lam_min: float, v: np.ndarray) -> np.ndarray:
    """Subgradient of g_alpha at y given the smallest slack eigenpair.

    On the boundary lambda_min = 0 the selection beta = 0 (plain -b) is used;
    any element of the subdifferential is valid for subgradient steps.
    """
    if lam_min < 0.0:
        return -problem.b + alpha * problem.constraints.forward_rank1(v, v)
    return -problem.b.copy()


# --------------------------------------------------------------------------
# step schedules
# --------------------------------------------------------------------------

class PolyakSchedule:
    """eta_k = (g(y_k) - target) / ||g_k||^2 with a tiny positive floor."""

    kind = "polyak-estimate"

    def __init__(self, target: float):
        self.target = float(target)

    def reset(self):
        pass

    def step(self, k: int, g_val: float, subgrad: np.ndarray) -> float:
        sq = float(subgrad @ subgrad)
        if sq == 0.0:
            return 1e-12
        return max((g_val - self.target) / sq, 1e-16 / np.sqrt(sq))


class SqrtSchedule:
    """eta_k = eta0 / sqrt(k), k counted from 1."""

    kind = "fixed/sqrt-k"

    def __init__(self, eta0: float = 1.0):
        if eta0 <= 0:
            raise ValueError("eta0 must be positive")
        self.eta0 = float(eta0)

    def reset(self):
        pass

    def step(self, k: int, g_val: float, subgrad: np.ndarray) -> float:
        return self.eta0 / np.sqrt(k)


class AdaptiveNormSchedule:
    """eta_k = eta0 / sqrt(sum_{i<=k} ||g_i||^2), an AdaGrad-style scaling."""

    kind = "adaptive-accumulated"

    def __init__(self, eta0: float = 1.0):
        if eta0 <= 0:
            raise ValueError("eta0 must be positive")
        self.eta0 = float(eta0)
        self._acc = 0.0

    def reset(self):
        self._acc = 0.0

    def step(self, k: int, g_val: float, subgrad: np.ndarray) -> float:
        self._acc += float(subgrad @ subgrad)
        return self.eta0 / np.sqrt(max(self._acc, 1e-300))


def make_schedule(kind: str, **kwargs):
    if kind in ("polyak", "polyak-estimate"):
        return PolyakSchedule(kwargs["target"])
    if kind in ("sqrt", "fixed/sqrt-k"):
        return SqrtSchedule(kwargs.get("eta0", 1.0))
    if kind in ("adaptive", "adaptive-accumulated"):
        return AdaptiveNormSchedule(kwargs.get("eta0", 1.0))
    raise ValueError(f"unknown schedule kind {kind!r}")


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

@dataclass
class StopRule:
    max_iters: int | None = None
    time_budget: float | None = None
    target_gval: float | None = None

    def __post_init__(self):
        if self.max_iters is None and self.time_budget is None \
                and self.target_gval is None:
            raise ValueError("need at least one active stopping criterion")


@dataclass
class DualIterate:
    y: np.ndarray
    g_val: float
    lam_min: float
    v: np.ndarray
    subgrad: np.ndarray
    iter: int
    wall_time: float
    eig_converged: bool = True


@dataclass
class TraceRow:
    iter: int
    g_val: float
    lam_min: float
    wall_time: float
    step: float
    best_g_val: float


@dataclass
class DualSolveResult:
    best: DualIterate
    last: DualIterate
    trace: list
    iterations: int
    status: str          # 'max_iters' | 'time_budget' | 'target' | 'diverged'

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def solve_dual(problem: SdpProblem, alpha: float, schedule,
               eig_cfg: EigensolverConfig | None = None,
               stop: StopRule | None = None,
               y0: np.ndarray | None = None,
               callback=None) -> DualSolveResult:
    """Run y_{k+1} = y_k - eta_k g_k on the penalized dual objective.

    The best iterate (lowest g) is tracked separately from the last one;
    the trace records scalars only, so memory stays O(m + n + iterations).
    ``callback(k, iterate)``, when given, runs after each iterate is scored
    (used by the CLI to trigger scheduled primal recoveries).
    """
    eig_cfg = eig_cfg or EigensolverConfig()
    stop = stop or StopRule(max_iters=1000)
    schedule.reset()
    y = np.zeros(problem.m) if y0 is None else np.asarray(y0, dtype=float).copy()
    best: DualIterate | None = None
    last: DualIterate | None = None
    trace: list[TraceRow] = []
    t0 = time.perf_counter()
    g_ref = None
    status = "max_iters"
    v_warm = None
    k = 0
    while True:
        k += 1
        if stop.max_iters is not None and k > stop.max_iters:
            status = "max_iters"
            break
        if stop.time_budget is not None and time.perf_counter() - t0 > stop.time_budget:
            status = "time_budget"
            break
        g_val, lam, v, eig_ok = eval_penalized(problem, y, alpha, eig_cfg, v0=v_warm)
        v_warm = v
        g = subgradient(problem, y, alpha, lam, v)
        now = time.perf_counter() - t0
        it = DualIterate(y.copy(), g_val, lam, v, g, k, now, eig_ok)
        last = it
        if best is None or g_val < best.g_val:
            best = it
        if g_ref is None:
            g_ref = max(abs(g_val), 1.0)
        elif g_val > 1e6 * g_ref:
            status = "diverged"
            eta = 0.0
            trace.append(TraceRow(k, g_val, lam, now, eta, best.g_val))
            break
        if callback is not None:
            callback(k, it)
        if stop.target_gval is not None and best.g_val <= stop.target_gval:
            eta = 0.0
            trace.append(TraceRow(k, g_val, lam, now, eta, best.g_val))
            status = "target"
            break
        eta = float(schedule.step(k, g_val, g))
        trace.append(TraceRow(k, g_val, lam, now, eta, best.g_val))
        y = y - eta * g
    if best is None:   # stopped before the first evaluation
        g_val, lam, v, eig_ok = eval_penalized(problem, y, alpha, eig_cfg)
        g = subgradient(problem, y, alpha, lam, v)
        best = last = DualIterate(y.copy(), g_val, lam, v, g, 0,
                                  time.perf_counter() - t0, eig_ok)
    return DualSolveResult(best, last, trace, len(trace), status)


# --------------------------------------------------------------------------
# feasibility: bound and repair
# --------------------------------------------------------------------------

def infeasibility_bound(alpha: float, alpha_lower: float, eps: float) -> float:
    """Lower bound on lambda_min(Z(y)) for an eps-suboptimal penalized iterate.

    alpha_lower is the infimum of tr(X) over primal solutions (the trace
    hint for constant-trace problems, else 0); the bound is -eps/(alpha -
    alpha_lower) and is vacuous unless alpha exceeds it.
    """
    if alpha <= alpha_lower:
        raise ValueError("bound requires alpha > alpha_lower")
    if eps < 0:
        raise ValueError("suboptimality must be nonnegative")
    return -eps / (alpha - alpha_lower)


@dataclass
class RepairResult:
    y: np.ndarray
    gamma: float
    lam_min: float
    attempts: int


def repair_feasibility(problem: SdpProblem, y1: np.ndarray, y2: np.ndarray,
                       eig_cfg: EigensolverConfig | None = None,
                       lam1: float | None = None,
                       lam2: float | None = None,
                       max_attempts: int = 6) -> RepairResult:
    """Blend an infeasible iterate with a strictly feasible anchor.

    With eps = max(-lambda_min(Z(y1)), 0) and lam2 = lambda_min(Z(y2)) > 0,
    the combination gamma*y1 + (1-gamma)*y2 at gamma = lam2/(eps + lam2) is
    dual feasible.  The eigenvalue of the blend is re-checked numerically and
    eps is inflated by 10x per retry if the check fails.
    """
    eig_cfg = eig_cfg or EigensolverConfig()
    if lam1 is None:
        lam1 = min_eigpair(SlackOperator(problem, y1), eig_cfg).value
    if lam2 is None:
        lam2 = min_eigpair(SlackOperator(problem, y2), eig_cfg).value
    if lam2 <= 0:
        raise ValueError("anchor y2 must be strictly dual feasible "
                         "(for C > 0, y = 0 works)")
    eps = max(-lam1, 0.0)
    for attempt in range(1, max_attempts + 1):
        gamma = lam2 / (eps + lam2) if eps > 0 else 1.0
        y_blend = gamma * y1 + (1.0 - gamma) * y2
        lam_blend = min_eigpair(SlackOperator(problem, y_blend), eig_cfg).value
        if lam_blend >= -eig_cfg.tol:
            return RepairResult(y_blend, gamma, lam_blend, attempt)
        eps = max(eps * 10.0, 10.0 * abs(lam_blend))
    return RepairResult(y_blend, gamma, lam_blend, max_attempts)


# --------------------------------------------------------------------------
# high-accuracy polish at desk scale (certification runs)
# --------------------------------------------------------------------------

def refine_dual(problem: SdpProblem, alpha: float, y0: np.ndarray,
                g_tol: float = 1e-8, max_cuts: int = 2000,
                radius: float | None = None,
                eig_cfg: EigensolverConfig | None = None):
    """Cutting-plane refinement of min g_alpha for small m.

    Subgradient recurrences stall at tight tolerances, so certification-grade
    runs (exact-penalty checks and the like) polish the incumbent with a
    Kelley cutting-plane model inside an adaptive box trust region.  Each
    step solves a small LP (HiGHS via scipy); the model minimum bounds
    g_alpha from below within the box, so ``g_best - bound <= g_tol`` is an
    honest termination certificate when the box is inactive.

    Returns (y_best, g_best, gap).
    """
    from scipy.optimize import linprog

    if eig_cfg is None:
        eig_cfg = EigensolverConfig(tol=1e-10)
    m = problem.m

    def oracle(y):
        g_val, lam, v, _ = eval_penalized(problem, y, alpha, eig_cfg)
        return g_val, subgradient(problem, y, alpha, lam, v)

    y_c = np.asarray(y0, dtype=float).copy()
    R = radius if radius is not None else max(0.1 * (1.0 + np.linalg.norm(y_c, np.inf)), 1e-3)
    pts, vals, subs = [], [], []
    g_best = np.inf
    y_best = y_c.copy()

    def add_cut(y):
        nonlocal g_best, y_best
        g_val, s = oracle(y)
        pts.append(y.copy())
        vals.append(g_val)
        subs.append(s)
        if g_val < g_best:
            g_best = g_val
            y_best = y.copy()
        return g_val

    add_cut(y_c)
    bound = -np.inf
    for _ in range(max_cuts):
        ncuts = len(pts)
        # variables (y, t): minimize t s.t. t >= g_j + s_j'(y - y_j), |y - y_c| <= R
        A_ub = np.zeros((ncuts, m + 1))
        b_ub = np.zeros(ncuts)
        for j in range(ncuts):
            A_ub[j, :m] = subs[j]
            A_ub[j, m] = -1.0
            b_ub[j] = subs[j] @ pts[j] - vals[j]
        bounds = [(y_c[i] - R, y_c[i] + R) for i in range(m)] + [(None, None)]
        res = linprog(np.concatenate([np.zeros(m), [1.0]]),
                      A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if not res.success:
            break
        y_lp = res.x[:m]
        bound = res.x[m]
        add_cut(y_lp)
        scale = max(1.0, abs(g_best))
        on_boundary = np.any(np.abs(y_lp - y_c) >= R - 1e-12 * (1 + R))
        gap = g_best - bound
        if on_boundary:
            # box was active: the bound is not global, grow and recenter
            R *= 2.0
            y_c = y_best.copy()
            continue
        if gap <= g_tol * scale:
            return y_best, g_best, gap
        if len(pts) % 25 == 0:
            y_c = y_best.copy()
    return y_best, g_best, g_best - bound


# --------------------------------------------------------------------------
# doubling search over alpha
# --------------------------------------------------------------------------

def search_alpha_doubling(problem: SdpProblem, schedule_factory, stop: StopRule,
                          recover_fn, eig_cfg: EigensolverConfig | None = None,
                          max_doublings: int = 12, improvement: float = 0.9):
    """Solve the penalized dual for alpha = 2, 4, 8, ... sequentially.

    After each solve, ``recover_fn(problem, y_best)`` must return the primal
    feasibility residual of a recovery from that dual; the search stops once
    the residual fails to improve by the given factor and returns
    (alpha, result, history).
    """
    best = None
    history = []
    for d in range(1, max_doublings + 1):
        alpha = float(2 ** d)
        result = solve_dual(problem, alpha, schedule_factory(alpha),
                            eig_cfg=eig_cfg, stop=stop)
        residual = float(recover_fn(problem, result.best.y))
        history.append((alpha, result.best.g_val, residual))
        if best is None or residual < improvement * best[2]:
            best = (alpha, result, residual)
            if residual == 0.0:
                break
        else:
            break
    return best[0], best[1], history
