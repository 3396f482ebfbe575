"""Dense, small-scale reference solver producing high-accuracy ground truth.

The oracle runs an operator-splitting iteration on the full-dimensional
problem: alternating projection onto the affine set {A(X) = b} (through a
precomputed Cholesky factorization of the constraint Gram matrix) and onto
the PSD cone (dense eigendecomposition), with scaled dual updates,
over-relaxation, and residual balancing.  The dual vector is read off the
affine-projection multipliers and averaged over a trailing window.  Returned
solutions are trusted only through their KKT residuals, which are checked
densely and stored on the result.

Also provides a planted-instance generator whose exact primal/dual pair is
known by construction, used to exercise everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problems import (FormatError, GenericSparseMap, SdpProblem,
                       SparseSymmetricCost)
from .spectral import project_psd


@dataclass
class DenseSolution:
    X: np.ndarray
    y: np.ndarray
    p_star: float
    d_star: float
    primal_residual: float      # ||A(X) - b||
    dual_residual: float        # lambda_min(Z(y)), sign kept
    gap: float                  # p_star - d_star
    iterations: int
    converged: bool

    @property
    def gap_ok(self) -> bool:
        return abs(self.gap) <= 1e-8 * (1.0 + abs(self.p_star))


def dense_cost(problem: SdpProblem) -> np.ndarray:
    n = problem.n
    C = np.zeros((n, n))
    rows, cols, vals = problem.cost.coo()
    np.add.at(C, (rows, cols), vals)
    return 0.5 * (C + C.T)


def dense_constraint_stack(problem: SdpProblem) -> np.ndarray:
    """(m, n*n) matrix whose k-th row is vec(A_k)."""
    n, m = problem.n, problem.m
    A = np.zeros((m, n * n))
    for k in range(m):
        rows, cols, vals = problem.constraints.constraint_coo(k)
        np.add.at(A[k], rows * n + cols, vals)
    return A


def solve_dense(problem: SdpProblem, max_n: int = 50, max_iters: int = 200000,
                rho: float = 1.0, over_relax: float = 1.6,
                check_every: int = 25, y_window: int = 100,
                primal_tol: float = 3e-10, dual_tol: float = 3e-10,
                gap_tol: float = 3e-9,
                init_seed: int | None = None) -> DenseSolution:
    """High-accuracy primal-dual solution of a desk-scale SDP.

    Deterministic for fixed inputs (zero initialization unless ``init_seed``
    asks for a randomized start, used by uniqueness probes).  Raises
    FormatError beyond the size limit; returns ``converged=False`` when the
    iteration stalls or diverges instead of certifying.
    """
    n, m = problem.n, problem.m
    if n > max_n:
        raise FormatError(f"dense oracle limited to n <= {max_n} (got {n})")
    if m > 2500:
        raise FormatError(f"dense oracle limited to m <= 2500 (got {m})")
    C = dense_cost(problem)
    Amat = dense_constraint_stack(problem)
    b = problem.b
    G = Amat @ Amat.T
    try:
        cho = scipy.linalg.cho_factor(G)
        solve_gram = lambda rhs: scipy.linalg.cho_solve(cho, rhs)
    except scipy.linalg.LinAlgError:
        Gpinv = np.linalg.pinv(G, rcond=1e-12)
        solve_gram = lambda rhs: Gpinv @ rhs

    if init_seed is None:
        Y = np.zeros((n, n))
    else:
        rng = np.random.default_rng(init_seed)
        M = rng.standard_normal((n, n))
        Y = project_psd(0.5 * (M + M.T))
    U = np.zeros((n, n))
    b_scale = 1.0 + np.linalg.norm(b)
    y_hist: list[np.ndarray] = []
    y_best = np.zeros(m)
    it = 0
    converged = False

    def kkt(y_try):
        Z = C - (Amat.T @ y_try).reshape(n, n)
        lam = float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[0])
        pfeas = float(np.linalg.norm(Amat @ Y.ravel() - b))
        p_val = float(np.sum(C * Y))
        gap = p_val - float(b @ y_try)
        ok = (pfeas <= primal_tol * b_scale
              and lam >= -dual_tol
              and abs(gap) <= gap_tol * (1.0 + abs(p_val)))
        return ok, pfeas, lam, p_val, gap

    for it in range(1, max_iters + 1):
        V = Y - U
        W = V - C / rho
        nu = solve_gram(Amat @ W.ravel() - b)
        X = W - (Amat.T @ nu).reshape(n, n)
        y_cur = -rho * nu
        Xh = over_relax * X + (1.0 - over_relax) * Y
        Y_new = project_psd(Xh + U)
        U = U + Xh - Y_new
        prim_r = np.linalg.norm(X - Y_new)
        dual_r = rho * np.linalg.norm(Y_new - Y)
        Y = Y_new
        y_hist.append(y_cur)
        if len(y_hist) > y_window:
            y_hist.pop(0)
        if not np.isfinite(prim_r) or np.linalg.norm(Y) > 1e9 * b_scale:
            break
        if it % check_every == 0:
            y_avg = np.mean(y_hist, axis=0)
            for cand in (y_avg, y_cur):
                ok, *_ = kkt(cand)
                if ok:
                    y_best = cand
                    converged = True
                    break
            if converged:
                break
        if it % 50 == 0 and it >= 100:
            if prim_r > 10.0 * dual_r:
                rho *= 1.5
                U /= 1.5
            elif dual_r > 10.0 * prim_r:
                rho /= 1.5
                U *= 1.5
    if not converged:
        y_best = np.mean(y_hist, axis=0) if y_hist else np.zeros(m)
    _, pfeas, lam, p_val, gap = kkt(y_best)
    return DenseSolution(
        X=Y, y=y_best, p_star=p_val, d_star=float(b @ y_best),
        primal_residual=pfeas, dual_residual=lam, gap=gap,
        iterations=it, converged=converged)


def enumerate_solution_rank(solution: DenseSolution, rank_rtol: float = 1e-7):
    """(r_star, V_star): numerical rank of X_star and its range basis."""
    X = 0.5 * (solution.X + solution.X.T)
    w, Q = np.linalg.eigh(X)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    keep = w > rank_rtol * scale
    r = int(np.sum(keep))
    order = np.argsort(w)[::-1][:r]
    return r, Q[:, order]


# --------------------------------------------------------------------------
# planted instances with exact ground truth
# --------------------------------------------------------------------------

@dataclass
class PlantedTruth:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    p_star: float
    d_star: float
    rank: int
    V: np.ndarray            # range basis of X_star
    lam_pos_X: float         # smallest positive eigenvalue of X_star
    threshold_Z: float       # smallest positive eigenvalue of Z(y_star)


def planted_instance(n: int, r: int, m: int, seed: int = 0,
                     density: float = 0.5, max_tries: int = 20):
    """Random strictly-complementary SDP with known primal/dual solution.

    Draws sparse symmetric constraint matrices, a rank-r primal X = V S V'
    with S > 0, and a slack Z = U D U' supported on the orthogonal
    complement with D > 0; the cost C = Z + A'y closes the KKT system
    exactly.  Instances with a singular constraint Gram matrix or a
    rank-deficient compressed map are redrawn.
    """
    if r >= n:
        raise ValueError("need r < n")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        mats = []
        for _k in range(m):
            M = np.zeros((n, n))
            mask = rng.random((n, n)) < density
            vals = rng.standard_normal((n, n)) * mask
            M = vals + vals.T
            mats.append(M)
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        V, U = Q[:, :r], Q[:, r:]
        w_x = rng.uniform(1.0, 2.0, size=r)
        X = (V * w_x) @ V.T                  # X_star = V diag(w_x) V'
        w_z = rng.uniform(1.0, 2.0, size=n - r)
        Z = (U * w_z) @ U.T
        y = rng.standard_normal(m)
        Amap = GenericSparseMap(mats)
        Aty = np.zeros((n, n))
        for k in range(m):
            Aty += y[k] * mats[k]
        C = Z + Aty
        b = np.array([float(np.sum(mats[k] * X)) for k in range(m)])
        problem = SdpProblem(n=n, m=m, cost=SparseSymmetricCost(C),
                             constraints=Amap, b=b,
                             trace_hint=float(np.trace(X)))
        # regularity screens: full-rank Gram, injective compressed map
        Amat = dense_constraint_stack(problem)
        if np.linalg.matrix_rank(Amat) < m:
            continue
        from .diagnostics import sigma_min_AV
        from .recovery import compress
        ops = compress(problem, V)
        if sigma_min_AV(ops).value <= 1e-8:
            continue
        p_star = float(np.sum(C * X))
        truth = PlantedTruth(X=X, y=y, Z=Z, p_star=p_star, d_star=float(b @ y),
                             rank=r, V=V, lam_pos_X=float(w_x.min()),
                             threshold_Z=float(w_z.min()))
        return problem, truth
    raise RuntimeError("could not draw a regular planted instance")
