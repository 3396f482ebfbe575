"""Quality metrics, conditioning estimates, and computable error bounds.

Everything here is a pure function of its inputs.  The headline quantities:

* suboptimality bound  tr(CX) + g_alpha(y)     (valid bound when y feasible)
* infeasibility        max(||A(X) - b||, (-lambda_min(X))+)
* scaled (DIMACS-style) feasibility and primal-dual gap measures
* the threshold T = lambda_{n-r}(Z(y)), sigma_min of the compressed map,
  and the conditioning ratio kappa_V = sigma_max(A) / sigma_min(A_V)
* a computable bound on ||X_hat - X_star||_F from (eps, T, kappa_V) and an
  operator-norm bound B, with B itself derivable from any feasible point of
  the least-squares recovery problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dual import eval_penalized
from .problems import SdpProblem, SlackOperator
from .recovery import CompressedOperators, CompressedSolution
from .spectral import EigensolverConfig, constraint_operator_norm


# --------------------------------------------------------------------------
# svec coordinates on Sym^r
# --------------------------------------------------------------------------

def svec_dim(r: int) -> int:
    return r * (r + 1) // 2


def svec_basis(r: int):
    """Orthonormal basis of Sym^r: E_ii and (E_ij + E_ji)/sqrt(2), i < j."""
    for i in range(r):
        E = np.zeros((r, r))
        E[i, i] = 1.0
        yield E
    s = 1.0 / np.sqrt(2.0)
    for i in range(r):
        for j in range(i + 1, r):
            E = np.zeros((r, r))
            E[i, j] = E[j, i] = s
            yield E


def svec(S: np.ndarray) -> np.ndarray:
    r = S.shape[0]
    out = np.empty(svec_dim(r))
    out[:r] = np.diag(S)
    k = r
    s = np.sqrt(2.0)
    for i in range(r):
        for j in range(i + 1, r):
            out[k] = s * S[i, j]
            k += 1
    return out


# --------------------------------------------------------------------------
# quality report
# --------------------------------------------------------------------------

@dataclass
class QualityReport:
    primal_objective: float        # tr(CX) = tr(C_V S)
    g_alpha: float
    primal_subopt_bound: float     # tr(CX) + g_alpha(y); bound when y feasible
    primal_infeas: float           # max(||AX - b||, (-lambda_min(X))+)
    dual_infeas: float             # (-lambda_min(Z(y)))+
    dimacs_feas: float             # ||AX - b|| / (||b|| + 1)
    dimacs_gap: float              # |tr(CX)+g| / (|tr(CX)|+|g|+1)
    distance_bound: float | None = None

    def as_dict(self) -> dict:
        return {
            "primal_objective": self.primal_objective,
            "g_alpha": self.g_alpha,
            "primal_subopt_bound": self.primal_subopt_bound,
            "primal_infeas": self.primal_infeas,
            "dual_infeas": self.dual_infeas,
            "dimacs_feas": self.dimacs_feas,
            "dimacs_gap": self.dimacs_gap,
            "distance_bound": self.distance_bound,
        }


def dimacs_feasibility(residual_norm: float, b: np.ndarray) -> float:
    return residual_norm / (np.linalg.norm(b) + 1.0)


def dimacs_gap(primal_objective: float, g_alpha: float) -> float:
    return abs(primal_objective + g_alpha) / (
        abs(primal_objective) + abs(g_alpha) + 1.0)


def quality(problem: SdpProblem, solution: CompressedSolution, y: np.ndarray,
            alpha: float, ops: CompressedOperators | None = None,
            eig_cfg: EigensolverConfig | None = None,
            g_alpha: float | None = None, lam_min: float | None = None,
            distance_bound: float | None = None) -> QualityReport:
    """Score a compressed primal against a dual vector, matrix-free.

    tr(CX) is read off the compressed cost, A(X) through the compressed
    forward map; g_alpha and lambda_min(Z(y)) are recomputed unless supplied.
    """
    if ops is None:
        from .recovery import compress
        ops = compress(problem, solution.V)
    S = solution.S
    obj = float(np.sum(ops.C_V * S))
    residual = float(np.linalg.norm(ops.forward(S) - problem.b))
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    x_negative = max(-float(w[0]), 0.0) if w.size else 0.0
    if g_alpha is None or lam_min is None:
        g_alpha, lam_min, _, _ = eval_penalized(problem, y, alpha, eig_cfg)
    return QualityReport(
        primal_objective=obj,
        g_alpha=float(g_alpha),
        primal_subopt_bound=obj + float(g_alpha),
        primal_infeas=max(residual, x_negative),
        dual_infeas=max(-float(lam_min), 0.0),
        dimacs_feas=dimacs_feasibility(residual, problem.b),
        dimacs_gap=dimacs_gap(obj, float(g_alpha)),
        distance_bound=distance_bound,
    )


# --------------------------------------------------------------------------
# conditioning of the compressed map
# --------------------------------------------------------------------------

@dataclass
class SigmaMinResult:
    value: float
    structural_zero: bool    # r(r+1)/2 > m forces a nullspace


def sigma_min_AV(ops: CompressedOperators) -> SigmaMinResult:
    """Smallest singular value of S -> A_V(S) on Sym^r.

    The map is materialized in orthonormal svec coordinates (q = r(r+1)/2
    columns, each a single symmetrized rank-one oracle call) and the Gram
    matrix's smallest eigenvalue is extracted; q exceeding m makes the value
    structurally 0.
    """
    r, m = ops.r, ops.problem.m
    q = svec_dim(r)
    if q > m:
        return SigmaMinResult(0.0, True)
    V = ops.V
    fr1 = ops.problem.constraints.forward_rank1
    F = np.empty((m, q))
    for i in range(r):
        F[:, i] = fr1(V[:, i], V[:, i])
    k = r
    s = np.sqrt(2.0)
    for i in range(r):
        for j in range(i + 1, r):
            F[:, k] = s * fr1(V[:, i], V[:, j])
            k += 1
    H = F.T @ F
    w = np.linalg.eigvalsh(0.5 * (H + H.T))
    return SigmaMinResult(float(np.sqrt(max(w[0], 0.0))), False)


@dataclass
class ConditioningReport:
    T: float | None
    sigma_min_AV: float
    sigma_max_A: float
    kappa_V: float            # inf when sigma_min_AV = 0
    clustered: bool
    structural_zero: bool

    @property
    def well_posed(self) -> bool:
        return (self.T is not None and self.T > 0
                and self.sigma_min_AV > 0)


def conditioning(problem: SdpProblem, ops: CompressedOperators,
                 threshold: float | None, clustered: bool = False,
                 norm_iters: int = 200, seed: int = 0) -> ConditioningReport:
    """Collect T, sigma_min(A_V), sigma_max(A), and their ratio kappa_V.

    kappa_V estimates the robustness ratio of the recovery using the current
    basis in place of the unknown optimal one.
    """
    smin = sigma_min_AV(ops)
    smax = constraint_operator_norm(problem, iters=norm_iters, seed=seed)
    kap = smax / smin.value if smin.value > 0 else math.inf
    return ConditioningReport(threshold, smin.value, smax, kap,
                              clustered, smin.structural_zero)


# --------------------------------------------------------------------------
# computable distance / parameter bounds
# --------------------------------------------------------------------------

def opnorm_bound_from_feasible(eps: float, T: float, kappa_V: float,
                               S_opnorm: float, delta_S: float,
                               sigma_min_AV: float) -> float:
    """Bound on ||X_star||_op from any PSD S with residual delta_S.

    Solving the scalar inequality

        x <= ||S||_op + (1+kappa_V)(eps/T) + delta_S/sigma_min(A_V)
             + sqrt(2) * phi * sqrt(x),        phi = (1+kappa_V) sqrt(eps/T),

    for x = ||X_star||_op (quadratic in sqrt(x)) gives

        B = (phi/sqrt(2) + sqrt(phi^2/2 + c))^2,

    with c the constant term above.
    """
    if T <= 0 or sigma_min_AV <= 0:
        raise ValueError("requires T > 0 and sigma_min_AV > 0")
    phi = (1.0 + kappa_V) * math.sqrt(eps / T)
    c = S_opnorm + (1.0 + kappa_V) * (eps / T) + delta_S / sigma_min_AV
    root = phi / math.sqrt(2.0) + math.sqrt(phi * phi / 2.0 + max(c, 0.0))
    return root * root


@dataclass
class DistanceBound:
    value: float
    well_posed: bool
    B: float | None = None


def distance_bound_minfeas(eps: float, T: float, kappa_V: float,
                           B: float | None = None, *,
                           S_opnorm: float | None = None,
                           delta_S: float | None = None,
                           sigma_min_AV: float | None = None) -> DistanceBound:
    """Computable bound (1 + kappa_V)(eps/T + sqrt(2 (eps/T) B)) on
    ||X_hat - X_star||_F for the least-feasibility recovery.

    When B (a bound on ||X_star||_op) is unknown, it is derived from a
    feasible point via :func:`opnorm_bound_from_feasible`; in that case
    S_opnorm, delta_S and sigma_min_AV are required.  T <= 0 or a vanishing
    sigma_min signals an ill-posed recovery (y far from optimal, or the
    problem degenerate) and is flagged rather than bounded.
    """
    if eps < 0:
        raise ValueError("suboptimality must be nonnegative")
    if T <= 0 or not math.isfinite(kappa_V):
        return DistanceBound(math.inf, False, B)
    if B is None:
        if S_opnorm is None or delta_S is None or sigma_min_AV is None:
            raise ValueError("deriving B needs S_opnorm, delta_S, sigma_min_AV")
        if sigma_min_AV <= 0:
            return DistanceBound(math.inf, False, None)
        B = opnorm_bound_from_feasible(eps, T, kappa_V, S_opnorm, delta_S,
                                       sigma_min_AV)
    ratio = eps / T
    val = (1.0 + kappa_V) * (ratio + math.sqrt(2.0 * ratio * B))
    return DistanceBound(float(val), True, float(B))


def minobj_parameters(eps: float, T: float, B: float, sigma_max_A: float,
                      r: int, c_fro: float, c_op: float,
                      conservative: bool = True):
    """(delta0, eps0) for the ball-constrained recovery.

    delta0  'conservative' uses the safety-factor-2 radius
    sigma_max(A) (eps/T + 2 sqrt(2 eps B / T)); with conservative=False the
    tight radius sigma_max(A) (eps/T + sqrt(2 (eps/T) B)) is returned.  The
    suboptimality envelope is

        eps0 = min( ||C||_F (eps/T + sqrt(2 (eps/T) B)),
                    ||C||_op (eps/T + sqrt(2 r (eps/T) B)) ).
    """
    if T <= 0:
        raise ValueError("ill-posed: requires T > 0")
    ratio = eps / T
    root = math.sqrt(2.0 * ratio * B)
    if conservative:
        delta0 = sigma_max_A * (ratio + 2.0 * root)
    else:
        delta0 = sigma_max_A * (ratio + root)
    eps0 = min(c_fro * (ratio + root),
               c_op * (ratio + math.sqrt(float(r)) * root))
    return float(delta0), float(eps0)


def cost_norms(problem: SdpProblem, iters: int = 200, seed: int = 0):
    """(||C||_F, ||C||_op): Frobenius exact from the sparse data, operator
    norm by power iteration (dense eigvalsh below n = 64)."""
    fro = problem.cost.fro_norm()
    n = problem.n
    if n <= 64:
        C = np.zeros((n, n))
        rows, cols, vals = problem.cost.coo()
        np.add.at(C, (rows, cols), vals)
        op = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (C + C.T)))))
        return fro, op
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    est = 0.0
    for _ in range(iters):
        w = problem.cost.apply(u)
        est = max(est, abs(float(u @ w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        u = w / nw
    return fro, float(est)


# --------------------------------------------------------------------------
# desk-scale regularity and growth checks (dense, oracle-side)
# --------------------------------------------------------------------------

def _dense_cost(problem: SdpProblem) -> np.ndarray:
    n = problem.n
    C = np.zeros((n, n))
    rows, cols, vals = problem.cost.coo()
    np.add.at(C, (rows, cols), vals)
    return 0.5 * (C + C.T)


def _dense_adjoint(problem: SdpProblem, y: np.ndarray) -> np.ndarray:
    n = problem.n
    W = np.zeros((n, n))
    for k in range(problem.m):
        rows, cols, vals = problem.constraints.constraint_coo(k)
        np.add.at(W, (rows, cols), y[k] * vals)
    return 0.5 * (W + W.T)


def _numerical_rank(w: np.ndarray, rtol: float) -> int:
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return 0
    return int(np.sum(np.abs(w) > rtol * scale))


@dataclass
class RegularityReport:
    strong_duality_gap: float
    complementarity_residual: float
    rank_X: int
    rank_Z: int
    strict_complementarity_rank_sum: int
    n: int
    primal_unique: bool | None = None
    dual_unique: bool | None = None

    @property
    def strictly_complementary(self) -> bool:
        return self.strict_complementarity_rank_sum == self.n


def regularity_probe(problem: SdpProblem, X_star: np.ndarray,
                     y_star: np.ndarray, rank_rtol: float = 1e-7,
                     uniqueness_solves: int = 0,
                     uniqueness_tol: float = 1e-5) -> RegularityReport:
    """Desk-scale regularity report against an oracle solution.

    Reports the duality gap, ||X Z||_F, numerical ranks of X and Z(y) at the
    relative threshold, and their sum versus n.  With uniqueness_solves > 0
    the dense oracle is rerun from that many random starts and the spread of
    the returned solutions decides the (non-)uniqueness flags.
    """
    C = _dense_cost(problem)
    Z = C - _dense_adjoint(problem, y_star)
    gap = float(np.sum(C * X_star) - problem.b @ y_star)
    comp = float(np.linalg.norm(X_star @ Z))
    rank_x = _numerical_rank(np.linalg.eigvalsh(0.5 * (X_star + X_star.T)), rank_rtol)
    rank_z = _numerical_rank(np.linalg.eigvalsh(0.5 * (Z + Z.T)), rank_rtol)
    primal_unique = dual_unique = None
    if uniqueness_solves > 0:
        from .oracle import solve_dense
        sols = [solve_dense(problem, init_seed=s, max_n=problem.n)
                for s in range(uniqueness_solves)]
        x_spread = max(np.linalg.norm(s.X - sols[0].X) for s in sols)
        y_spread = max(np.linalg.norm(s.y - sols[0].y) for s in sols)
        ref_x = max(1.0, float(np.linalg.norm(sols[0].X)))
        ref_y = max(1.0, float(np.linalg.norm(sols[0].y)))
        primal_unique = bool(x_spread <= uniqueness_tol * ref_x)
        dual_unique = bool(y_spread <= uniqueness_tol * ref_y)
    return RegularityReport(gap, comp, rank_x, rank_z, rank_x + rank_z,
                            problem.n, primal_unique, dual_unique)


@dataclass
class GrowthSample:
    y: np.ndarray
    feasible: bool
    lhs: float | None
    rhs: float | None

    @property
    def passed(self) -> bool | None:
        if not self.feasible:
            return None
        return self.lhs <= self.rhs + 1e-9 * (1.0 + abs(self.rhs))


def quadratic_growth_check(problem: SdpProblem, X_star: np.ndarray,
                           y_star: np.ndarray, y_samples,
                           rank_rtol: float = 1e-7,
                           feas_tol: float = 1e-9) -> list[GrowthSample]:
    """Check the growth inequality bounding ||(Z(y), y) - (Z*, y*)||.

    The comparison operator D(Z, y) = (Z - P Z P, Z + A'y), with P the
    orthogonal projector onto range(Z(y_star)), is materialized densely in
    svec coordinates and its smallest singular value taken by dense SVD;
    intended for n <= 10.  Infeasible samples are skipped (feasible=False).
    """
    n, m = problem.n, problem.m
    C = _dense_cost(problem)
    Z_star = C - _dense_adjoint(problem, y_star)
    wz, Uz = np.linalg.eigh(0.5 * (Z_star + Z_star.T))
    scale_z = max(float(np.max(np.abs(wz))), 1e-300)
    U = Uz[:, np.abs(wz) > rank_rtol * scale_z]
    P = U @ U.T

    wx = np.linalg.eigvalsh(0.5 * (X_star + X_star.T))
    scale_x = max(float(np.max(np.abs(wx))), 1e-300)
    pos = wx[wx > rank_rtol * scale_x]
    lam_pos = float(pos.min()) if pos.size else 0.0

    q = svec_dim(n)
    cols = []
    for E in svec_basis(n):
        img1 = E - P @ E @ P
        img2 = E.copy()
        cols.append(np.concatenate([svec(0.5 * (img1 + img1.T)), svec(img2)]))
    for k in range(m):
        ek = np.zeros(m)
        ek[k] = 1.0
        W = _dense_adjoint(problem, ek)
        cols.append(np.concatenate([np.zeros(q), svec(W)]))
    D = np.column_stack(cols)
    sigma_min_D = float(np.linalg.svd(D, compute_uv=False)[-1])

    d_star = float(problem.b @ y_star)
    out = []
    for y in y_samples:
        y = np.asarray(y, dtype=float)
        Z = C - _dense_adjoint(problem, y)
        lam_min = float(np.linalg.eigvalsh(Z)[0])
        if lam_min < -feas_tol or lam_pos <= 0 or sigma_min_D <= 0:
            out.append(GrowthSample(y, False, None, None))
            continue
        eps = max(d_star - float(problem.b @ y), 0.0)
        lhs = float(np.sqrt(np.linalg.norm(Z - Z_star) ** 2
                            + np.linalg.norm(y - y_star) ** 2))
        z_op = float(np.max(np.abs(np.linalg.eigvalsh(Z))))
        rhs = (eps / lam_pos + np.sqrt(2.0 * eps * z_op / lam_pos)) / sigma_min_D
        out.append(GrowthSample(y, True, lhs, float(rhs)))
    return out
