"""Matrix-free eigensolvers and the small projections used by recovery.

The workhorse is a thick-restart Lanczos iteration with full
reorthogonalization, run on -Z so the smallest eigenvalues of the slack
operator become the largest of the iterated operator.  Storage is one
n-by-(max_lanczos_dim+1) basis plus the small projected matrix; no
factorizations, no shift-invert.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problems import SdpProblem


class MatrixOperator:
    """Adapter giving ndarray / sparse matrices the operator interface."""

    def __init__(self, M):
        if M.shape[0] != M.shape[1]:
            raise ValueError("operator must be square")
        self._M = M
        self.n = M.shape[0]

    def apply(self, u):
        return self._M @ u


@dataclass
class EigensolverConfig:
    """Knobs for the Lanczos iteration.

    max_lanczos_dim defaults to min(n, max(4k + 20, 100)) for k wanted pairs;
    tol is a relative residual tolerance on ||Z v - theta v||.
    """

    tol: float = 1e-8
    max_lanczos_dim: int | None = None
    restarts: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def resolved_dim(self, n: int, k: int) -> int:
        L = self.max_lanczos_dim
        if L is None:
            L = min(n, max(4 * k + 20, 100))
        if L < k + 2 and k + 2 <= n:
            raise ValueError("max_lanczos_dim must be at least k + 2")
        return int(min(max(L, min(k + 2, n)), n))


@dataclass
class EigPair:
    value: float
    vector: np.ndarray
    residual: float
    converged: bool


@dataclass
class Eigenbasis:
    """Orthonormal basis of the r-smallest invariant subspace of Z(y).

    threshold_estimate is the (r+1)-th smallest Ritz value, the quantity
    T = lambda_{n-r}(Z) driving recovery quality.  clustered signals that
    the r-th and (r+1)-th eigenvalues coincide to ~1e-10, in which case the
    subspace itself is not well defined (any invariant subspace meeting the
    residual tolerance is returned).
    """

    V: np.ndarray
    ritz_values: np.ndarray
    residual_norms: np.ndarray
    threshold_estimate: float | None
    converged: bool
    clustered: bool = False

    @property
    def r(self) -> int:
        return self.V.shape[1]


# --------------------------------------------------------------------------
# thick-restart Lanczos (largest eigenpairs of a symmetric operator)
# --------------------------------------------------------------------------

def _rayleigh_ritz(H, dim, k):
    Hd = H[:dim, :dim]
    theta, Y = np.linalg.eigh(0.5 * (Hd + Hd.T))
    order = np.argsort(theta)[::-1][:k]
    return theta, Y, order


def _trlan_largest(apply_op, n, k, L, tol, max_restarts, rng, v0=None,
                   check_every=10):
    """Top-k eigenpairs of a symmetric operator via thick-restart Lanczos.

    Returns (values desc, vectors, residual estimates, converged).  Full
    two-pass reorthogonalization keeps the basis orthonormal to machine
    precision, so Ritz residual estimates |beta * y_last| are trustworthy.
    """
    k = min(k, n)
    L = int(min(max(L, k + 2), n))
    Q = np.zeros((n, L + 1))
    H = np.zeros((L + 1, L + 1))

    if v0 is not None and np.linalg.norm(v0) > 0:
        q = np.asarray(v0, dtype=float).copy()
    else:
        q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    j0 = 0

    for _cycle in range(max_restarts + 1):
        j = j0
        while j < L:
            w = apply_op(Q[:, j])
            h = Q[:, :j + 1].T @ w
            w = w - Q[:, :j + 1] @ h
            h2 = Q[:, :j + 1].T @ w
            w = w - Q[:, :j + 1] @ h2
            h = h + h2
            H[:j + 1, j] = h
            H[j, :j + 1] = h
            beta = float(np.linalg.norm(w))
            scale = max(1.0, float(np.max(np.abs(np.diag(H[:j + 1, :j + 1])))))
            if beta <= 1e-13 * scale:
                dim = j + 1
                if dim >= n:
                    # basis spans the whole space: Rayleigh-Ritz is exact
                    theta, Y, order = _rayleigh_ritz(H, dim, min(k, dim))
                    vals = theta[order]
                    vecs = Q[:, :dim] @ Y[:, order]
                    return vals, vecs, np.zeros(len(order)), True
                # invariant subspace hit early; a single Krylov sequence sees
                # one copy of each eigenvalue, so inject a fresh random
                # direction (zero coupling keeps H = Q'BQ exact) and continue
                w = rng.standard_normal(n)
                h = Q[:, :j + 1].T @ w
                w = w - Q[:, :j + 1] @ h
                h2 = Q[:, :j + 1].T @ w
                w = w - Q[:, :j + 1] @ h2
                Q[:, j + 1] = w / np.linalg.norm(w)
                H[j + 1, j] = H[j, j + 1] = 0.0
            else:
                Q[:, j + 1] = w / beta
                H[j + 1, j] = H[j, j + 1] = beta
            j += 1
            if j >= k and (j == L or (j - j0) % check_every == 0):
                theta, Y, order = _rayleigh_ritz(H, j, k)
                res = np.abs(H[j, j - 1] * Y[j - 1, order])
                bounds = tol * np.maximum(1.0, np.abs(theta[order]))
                if np.all(res <= bounds):
                    vals = theta[order]
                    vecs = Q[:, :j] @ Y[:, order]
                    return vals, vecs, res, True
        # thick restart: lock the leading Ritz vectors plus the residual vector
        theta, Y, _ = _rayleigh_ritz(H, L, L)
        order_all = np.argsort(theta)[::-1]
        nkeep = min(k + max(5, k), L - 2)
        idx = order_all[:nkeep]
        beta_c = H[L, L - 1]
        Qk = Q[:, :L] @ Y[:, idx]
        qres = Q[:, L].copy()
        Q[:, :nkeep] = Qk
        Q[:, nkeep] = qres
        H[:] = 0.0
        H[:nkeep, :nkeep] = np.diag(theta[idx])
        s = beta_c * Y[L - 1, idx]
        H[nkeep, :nkeep] = s
        H[:nkeep, nkeep] = s
        j0 = nkeep

    # restarts exhausted: the locked prefix holds the best Ritz data
    vals = np.diag(H)[:k].copy()
    vecs = Q[:, :k].copy()
    res = np.abs(H[j0, :k]).copy()
    return vals, vecs, res, False


def _explicit_residuals(apply_op, vals, vecs):
    res = np.empty(len(vals))
    for i in range(len(vals)):
        res[i] = np.linalg.norm(apply_op(vecs[:, i]) - vals[i] * vecs[:, i])
    return res


def min_eigpair(op, cfg: EigensolverConfig | None = None,
                v0: np.ndarray | None = None) -> EigPair:
    """Smallest eigenpair of a symmetric operator (``.apply`` / ``.n``).

    Runs Lanczos on the negated operator; the returned residual is the
    explicitly recomputed ||Z v - lambda v||.  A non-converged run returns
    the best Ritz pair with ``converged=False`` and lets the caller decide.
    """
    cfg = cfg or EigensolverConfig()
    n = op.n
    rng = np.random.default_rng(cfg.seed)
    neg = lambda u: -op.apply(u)
    L = cfg.resolved_dim(n, 1)
    vals, vecs, _, ok = _trlan_largest(neg, n, 1, L, 0.5 * cfg.tol,
                                       cfg.restarts, rng, v0=v0)
    lam = -vals[0]
    v = vecs[:, 0]
    resid = float(np.linalg.norm(op.apply(v) - lam * v))
    converged = ok and resid <= cfg.tol * max(1.0, abs(lam))
    return EigPair(float(lam), v, resid, converged)


def _merge_rayleigh_ritz(apply_op, V1, V2, k):
    """Rayleigh-Ritz on the union of two bases; k smallest pairs."""
    M = np.concatenate([V1, V2], axis=1)
    Qm, Rm = np.linalg.qr(M)
    keep = np.abs(np.diag(Rm)) > 1e-10
    Qm = Qm[:, keep]
    BQ = np.column_stack([apply_op(Qm[:, i]) for i in range(Qm.shape[1])])
    Hm = Qm.T @ BQ
    w, Y = np.linalg.eigh(0.5 * (Hm + Hm.T))
    k = min(k, len(w))
    return w[:k], Qm @ Y[:, :k]


def smallest_subspace(op, r: int, cfg: EigensolverConfig | None = None,
                      v0: np.ndarray | None = None,
                      verify: bool = True) -> Eigenbasis:
    """Invariant subspace of the r smallest eigenvalues, plus the threshold.

    Also computes the (r+1)-th smallest Ritz value as the threshold estimate
    T = lambda_{n-r}(Z).  Storage is Theta(n * max_lanczos_dim).

    A single Krylov sequence sees only one direction of a multiple
    eigenvalue, so by default the result is cross-checked against a second
    run from an independent start; on disagreement the two bases are merged
    by a Rayleigh-Ritz step.
    """
    cfg = cfg or EigensolverConfig()
    n = op.n
    if not (1 <= r < n):
        raise ValueError("need 1 <= r < n")
    k = min(r + 1, n)
    neg = lambda u: -op.apply(u)
    L = cfg.resolved_dim(n, k)

    def run(seed, start):
        rng = np.random.default_rng(seed)
        vals, vecs, _, ok = _trlan_largest(neg, n, k, L, 0.5 * cfg.tol,
                                           cfg.restarts, rng, v0=start)
        return -vals[:k], vecs[:, :k], ok     # ascending smallest of op

    lam, vecs, ok = run(cfg.seed, v0)
    if verify and ok:
        lam2, vecs2, ok2 = run(cfg.seed + 1, None)
        agree_tol = max(100 * cfg.tol, 1e-12)
        if ok2 and np.any(np.abs(lam - lam2) > agree_tol * np.maximum(1.0, np.abs(lam))):
            lam, vecs = _merge_rayleigh_ritz(op.apply, vecs, vecs2, k)

    V = vecs[:, :r]
    ritz = lam[:r]
    resid = _explicit_residuals(op.apply, ritz, V)
    threshold = float(lam[r]) if k == r + 1 else None
    converged = ok and bool(
        np.all(resid <= cfg.tol * np.maximum(1.0, np.abs(ritz))))
    clustered = False
    if threshold is not None:
        clustered = abs(ritz[-1] - threshold) <= 1e-10 * max(1.0, abs(threshold))
    return Eigenbasis(V, ritz, resid, threshold, converged, clustered)


# --------------------------------------------------------------------------
# projections
# --------------------------------------------------------------------------

def project_psd(S: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: symmetrize, clamp negative eigenvalues."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise ValueError("project_psd: non-finite input")
    S = 0.5 * (S + S.T)
    w, Q = np.linalg.eigh(S)
    if w.size and w[0] >= 0.0:
        return S
    w = np.maximum(w, 0.0)
    return (Q * w) @ Q.T


def project_ball(v: np.ndarray, delta: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius delta at the origin."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    nv = np.linalg.norm(v)
    if nv <= delta:
        return v.copy()
    if delta == 0.0:
        return np.zeros_like(v)
    return v * (delta / nv)


# --------------------------------------------------------------------------
# operator norm of the constraint map
# --------------------------------------------------------------------------

_GENERIC_POWER_LIMIT = 2000


def operator_norm_Amap(problem: SdpProblem, iters: int = 50,
                       seed: int = 0) -> float:
    """Lower-bound estimate of sigma_max(A) by power iteration on A A'.

    The Rayleigh quotient of power iterates on the PSD Gram operator is
    nondecreasing, so the estimate is monotone in ``iters`` for a fixed
    seed and never exceeds the true value.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    cons = problem.constraints
    if cons.variant == "generic-sparse" and problem.n > _GENERIC_POWER_LIMIT:
        raise ValueError(
            "power iteration through generic sparse constraints is limited "
            f"to n <= {_GENERIC_POWER_LIMIT}; supply a structured map")
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(problem.m)
    y /= np.linalg.norm(y)
    best = 0.0
    for _ in range(iters):
        z = cons.gram_apply(y)
        best = max(best, max(float(y @ z), 0.0))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        y = z / nz
    return float(np.sqrt(best))


def constraint_operator_norm(problem: SdpProblem, iters: int = 200,
                             seed: int = 0) -> float:
    """sigma_max(A): closed form when the map structure gives one, else
    the power-iteration estimate."""
    exact = problem.constraints.sigma_max_exact()
    if exact is not None:
        return exact
    return operator_norm_Amap(problem, iters=iters, seed=seed)
