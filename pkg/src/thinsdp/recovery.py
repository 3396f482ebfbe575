"""Low-rank primal recovery from the small-eigenvalue slack eigenspace.

Given a dual vector y and a rank budget r, recovery compresses the problem
onto the span V of the r smallest eigenvectors of Z(y) and solves, over PSD
r-by-r matrices S representing X = V S V',

  option 1:  minimize 1/2 ||A(V S V') - b||^2                (least feasibility)
  option 2:  minimize tr(V'CV S) s.t. ||A(V S V') - b|| <= delta,

the first by accelerated projected gradient, the second by a primal-dual
splitting whose dual step projects onto the shifted norm ball.  delta for
option 2 is gamma times the option-1 residual.  Nothing here forms an
n-by-n matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problems import SdpProblem, SlackOperator
from .spectral import (Eigenbasis, EigensolverConfig, project_ball,
                       project_psd, smallest_subspace)


class InfeasibleDeltaError(ValueError):
    """The norm-ball budget is below the attainable residual."""


# --------------------------------------------------------------------------
# compressed operators
# --------------------------------------------------------------------------

class CompressedOperators:
    """The maps S -> A(V S V') and y -> V'(A'y)V for a fixed orthonormal V.

    forward() expands S in its eigenbasis and feeds symmetrized rank-one
    terms to the constraint oracle (r oracle calls); adjoint() applies the
    adjoint oracle to the columns of V.  C_V = V'CV is materialized (r x r),
    and the operator norm of the compressed map is cached via power
    iteration on adjoint(forward(.)).
    """

    def __init__(self, problem: SdpProblem, V: np.ndarray,
                 norm_iters: int = 80, seed: int = 0):
        self.problem = problem
        self.V = np.ascontiguousarray(V, dtype=float)
        self.n, self.r = self.V.shape
        CV = self.V.T @ problem.cost.apply_matrix(self.V)
        self.C_V = 0.5 * (CV + CV.T)
        self.op_norm = self._estimate_norm(norm_iters, seed)

    def forward(self, S: np.ndarray) -> np.ndarray:
        w, W = np.linalg.eigh(0.5 * (S + S.T))
        U = self.V @ W
        out = np.zeros(self.problem.m)
        fr1 = self.problem.constraints.forward_rank1
        for i in range(self.r):
            if w[i] != 0.0:
                out += w[i] * fr1(U[:, i], U[:, i])
        return out

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        Zc = self.problem.constraints.adjoint_apply_matrix(y, self.V)
        M = self.V.T @ Zc
        return 0.5 * (M + M.T)

    def _estimate_norm(self, iters: int, seed: int) -> float:
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((self.r, self.r))
        S = 0.5 * (S + S.T)
        S /= np.linalg.norm(S)
        best = 0.0
        for _ in range(max(iters, 1)):
            G = self.adjoint(self.forward(S))
            best = max(best, max(float(np.sum(S * G)), 0.0))
            nG = np.linalg.norm(G)
            if nG == 0.0:
                break
            S = G / nG
        return float(np.sqrt(best))


def compress(problem: SdpProblem, V: np.ndarray | Eigenbasis,
             norm_iters: int = 80, seed: int = 0) -> CompressedOperators:
    if isinstance(V, Eigenbasis):
        V = V.V
    return CompressedOperators(problem, V, norm_iters=norm_iters, seed=seed)


# --------------------------------------------------------------------------
# solutions and configuration
# --------------------------------------------------------------------------

@dataclass
class CompressedSolution:
    """A PSD factor S with the basis V it lives in: X = V S V'."""

    V: np.ndarray
    S: np.ndarray
    which: str                     # 'minfeas' | 'minobj'
    residual: float                # ||A(V S V') - b||
    objective: float               # tr(V'CV S)
    converged: bool
    iterations: int

    @property
    def r(self) -> int:
        return self.S.shape[0]

    def dense(self) -> np.ndarray:
        """Materialize X = V S V' (test/diagnostic use at desk scale only)."""
        return self.V @ self.S @ self.V.T


@dataclass
class ApgConfig:
    max_iters: int = 20000
    tol: float = 1e-9
    restart_every: int = 100


@dataclass
class CpConfig:
    max_iters: int = 200000
    tol: float = 1e-9
    theta: float = 1.0
    check_every: int = 25


DEFAULT_RANK_CAP = 24


@dataclass
class RecoveryConfig:
    r: int | None = None           # None = Barvinok-Pataki default
    gamma: float = 1.1
    rank_cap: int = DEFAULT_RANK_CAP
    apg: ApgConfig = field(default_factory=ApgConfig)
    cp: CpConfig = field(default_factory=CpConfig)

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")


def default_rank(m: int, n: int, cap: int = DEFAULT_RANK_CAP) -> int:
    """Largest r with r(r+1)/2 <= m, capped by the budget and by n-1."""
    r = int((np.sqrt(8.0 * m + 1.0) - 1.0) / 2.0)
    while (r + 1) * (r + 2) // 2 <= m:
        r += 1
    while r > 1 and r * (r + 1) // 2 > m:
        r -= 1
    return max(1, min(r, cap, n - 1))


# --------------------------------------------------------------------------
# option 1: least-squares feasibility by accelerated projected gradient
# --------------------------------------------------------------------------

def solve_minfeas(ops: CompressedOperators, b: np.ndarray,
                  cfg: ApgConfig | None = None) -> CompressedSolution:
    """min 1/2 ||A_V(S) - b||^2 over PSD S, FISTA with fixed-interval restart.

    Convergence is declared on the projected-gradient mapping norm; the
    step uses the cached ||A_V|| estimate inflated by 1%.
    """
    cfg = cfg or ApgConfig()
    r = ops.r
    lip = max((1.01 * ops.op_norm) ** 2, 1e-300)
    S = np.zeros((r, r))
    W = S.copy()
    t = 1.0
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        grad = ops.adjoint(ops.forward(W) - b)
        S_new = project_psd(W - grad / lip)
        gm = lip * np.linalg.norm(S_new - W)
        if gm <= cfg.tol:
            # confirm the mapping at the new point before declaring victory
            grad_s = ops.adjoint(ops.forward(S_new) - b)
            back = project_psd(S_new - grad_s / lip)
            if lip * np.linalg.norm(back - S_new) <= cfg.tol:
                S = S_new
                converged = True
                break
        if it % cfg.restart_every == 0:
            t_new = 1.0
            W = S_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            W = S_new + ((t - 1.0) / t_new) * (S_new - S)
        S = S_new
        t = t_new
    res = float(np.linalg.norm(ops.forward(S) - b))
    obj = float(np.sum(ops.C_V * S))
    return CompressedSolution(ops.V, S, "minfeas", res, obj, converged, it)


# --------------------------------------------------------------------------
# option 2: objective minimization inside a feasibility ball
# --------------------------------------------------------------------------

def solve_minobj(ops: CompressedOperators, b: np.ndarray, delta: float,
                 cfg: CpConfig | None = None,
                 minfeas_residual: float | None = None) -> CompressedSolution:
    """min tr(C_V S) s.t. ||A_V(S) - b|| <= delta over PSD S.

    Primal-dual iteration with dual step through the Moreau identity for the
    shifted ball, primal PSD-projected gradient step, and extrapolation:

        y+ = y + sigma (A_V Sbar - b) - sigma P_B(delta)(y/sigma + A_V Sbar - b)
        S+ = P_psd(S - tau A_V' y+ - tau C_V)
        Sbar+ = S+ + theta (S+ - S)

    tau = sigma = 0.99 / ||A_V|| with the cached norm inflated by 1%.
    """
    cfg = cfg or CpConfig()
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if minfeas_residual is not None and minfeas_residual > delta + 1e-12 * (1 + delta):
        raise InfeasibleDeltaError(
            f"delta={delta:g} below attainable residual {minfeas_residual:g}")
    r = ops.r
    norm_eff = max(1.01 * ops.op_norm, 1e-300)
    tau = sigma = 0.99 / norm_eff
    S = np.zeros((r, r))
    Sbar = S.copy()
    y = np.zeros(len(b))
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        q = y / sigma + ops.forward(Sbar) - b
        y_new = sigma * (q - project_ball(q, delta))
        S_new = project_psd(S - tau * ops.adjoint(y_new) - tau * ops.C_V)
        Sbar = S_new + cfg.theta * (S_new - S)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            p_res = np.linalg.norm((S - S_new) / tau - ops.adjoint(y - y_new))
            d_res = np.linalg.norm((y - y_new) / sigma - ops.forward(S - S_new))
            if (p_res <= cfg.tol * (1.0 + np.linalg.norm(S_new))
                    and d_res <= cfg.tol * (1.0 + np.linalg.norm(y_new))):
                S, y = S_new, y_new
                converged = True
                break
        S, y = S_new, y_new
    res = float(np.linalg.norm(ops.forward(S) - b))
    obj = float(np.sum(ops.C_V * S))
    return CompressedSolution(ops.V, S, "minobj", res, obj, converged, it)


# --------------------------------------------------------------------------
# the full recovery step
# --------------------------------------------------------------------------

@dataclass
class RecoveryResult:
    basis: Eigenbasis
    ops: CompressedOperators
    minfeas: CompressedSolution
    minobj: CompressedSolution | None
    delta: float | None

    @property
    def threshold(self) -> float | None:
        """T = lambda_{n-r}(Z(y)), the (r+1)-th smallest Ritz value."""
        return self.basis.threshold_estimate

    @property
    def solution(self) -> CompressedSolution:
        return self.minobj if self.minobj is not None else self.minfeas


def recover(problem: SdpProblem, y: np.ndarray, r: int | None = None,
            option: int = 1, cfg: RecoveryConfig | None = None,
            eig_cfg: EigensolverConfig | None = None) -> RecoveryResult:
    """Recover a rank-r PSD factor from a dual vector (feasible or not).

    Computes the eigenbasis of the r smallest slack eigenvalues, always
    solves the least-feasibility problem, and for option 2 additionally
    minimizes the compressed objective inside the ball of radius
    gamma * (option-1 residual).
    """
    if option not in (1, 2):
        raise ValueError("option must be 1 or 2")
    cfg = cfg or RecoveryConfig()
    eig_cfg = eig_cfg or EigensolverConfig()
    if r is None:
        r = cfg.r if cfg.r is not None else default_rank(problem.m, problem.n,
                                                         cfg.rank_cap)
    basis = smallest_subspace(SlackOperator(problem, np.asarray(y, dtype=float)),
                              r, eig_cfg)
    ops = compress(problem, basis.V, seed=eig_cfg.seed)
    minfeas = solve_minfeas(ops, problem.b, cfg.apg)
    minobj = None
    delta = None
    if option == 2:
        delta = cfg.gamma * minfeas.residual
        minobj = solve_minobj(ops, problem.b, delta, cfg.cp,
                              minfeas_residual=minfeas.residual)
    return RecoveryResult(basis, ops, minfeas, minobj, delta)
