"""SDP data model: matrix-free cost/constraint oracles and instance builders.

A standard-form SDP ``min tr(CX) s.t. A(X) = b, X PSD`` is represented by an
:class:`SdpProblem` holding the three data-access oracles

    u -> C u,    (u, v) -> A((u v' + v u')/2),    (y, u) -> (A' y) u,

so no n-by-n matrix is ever materialized by this module.  Three constraint
map families are provided: generic sparse matrices, the diagonal map used by
the Max-Cut relaxation, and the lifted entry-observation map used by matrix
completion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class FormatError(ValueError):
    """Malformed problem data: bad indices, self-loops, duplicates, ..."""


# --------------------------------------------------------------------------
# cost oracles
# --------------------------------------------------------------------------

class CostOracle:
    """Matrix-free action ``u -> C u`` of the symmetric cost matrix."""

    representation = "abstract"
    n: int

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_matrix(self, U: np.ndarray) -> np.ndarray:
        """Apply the oracle to every column of U (default: column loop)."""
        return np.column_stack([self.apply(U[:, j]) for j in range(U.shape[1])])

    def coo(self):
        """(rows, cols, vals) triplets of C, both triangles included."""
        raise NotImplementedError

    def fro_norm(self) -> float:
        _, _, vals = self.coo()
        return float(np.linalg.norm(vals))


class SparseSymmetricCost(CostOracle):
    representation = "sparse-symmetric"

    def __init__(self, matrix):
        M = sp.csr_matrix(matrix)
        if M.shape[0] != M.shape[1]:
            raise FormatError("cost matrix must be square")
        asym = abs(M - M.T)
        if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(M).max()):
            raise FormatError("cost matrix must be symmetric")
        self._M = M
        self.n = M.shape[0]

    def apply(self, u):
        return self._M @ u

    def apply_matrix(self, U):
        return self._M @ U

    def coo(self):
        M = self._M.tocoo()
        return M.row.copy(), M.col.copy(), M.data.copy()


class NegatedLaplacianCost(CostOracle):
    """C = -L for a graph Laplacian L stored sparsely (Max-Cut cost)."""

    representation = "negated-laplacian"

    def __init__(self, laplacian):
        self._L = sp.csr_matrix(laplacian)
        self.n = self._L.shape[0]

    def apply(self, u):
        return -(self._L @ u)

    def apply_matrix(self, U):
        return -(self._L @ U)

    def coo(self):
        M = self._L.tocoo()
        return M.row.copy(), M.col.copy(), -M.data.copy()

    @property
    def laplacian(self):
        return self._L


class IdentityCost(CostOracle):
    representation = "identity"

    def __init__(self, n):
        self.n = int(n)

    def apply(self, u):
        return u.copy()

    def apply_matrix(self, U):
        return U.copy()

    def coo(self):
        idx = np.arange(self.n)
        return idx, idx.copy(), np.ones(self.n)

    def fro_norm(self):
        return float(np.sqrt(self.n))


# --------------------------------------------------------------------------
# constraint maps
# --------------------------------------------------------------------------

class ConstraintMap:
    """The linear map A : Sym^n -> R^m through its rank-one oracles."""

    variant = "abstract"
    m: int
    n: int

    def forward_rank1(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """A((u v' + v u')/2)."""
        raise NotImplementedError

    def adjoint_apply(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        """(A' y) u."""
        raise NotImplementedError

    def adjoint_apply_matrix(self, y: np.ndarray, U: np.ndarray) -> np.ndarray:
        """(A' y) U, column-wise by default."""
        return np.column_stack(
            [self.adjoint_apply(y, U[:, j]) for j in range(U.shape[1])]
        )

    def gram_apply(self, y: np.ndarray) -> np.ndarray:
        """A(A' y), the m-by-m Gram operator of the map."""
        raise NotImplementedError

    def sigma_max_exact(self) -> float | None:
        """Closed-form largest singular value, when the structure gives one."""
        return None

    def constraint_coo(self, k: int):
        """(rows, cols, vals) triplets of A_k, both triangles included."""
        raise NotImplementedError


class GenericSparseMap(ConstraintMap):
    """A_i given explicitly as sparse symmetric matrices."""

    variant = "generic-sparse"

    def __init__(self, matrices):
        mats = [sp.csr_matrix(A) for A in matrices]
        if not mats:
            raise FormatError("constraint list must be nonempty")
        n = mats[0].shape[0]
        for A in mats:
            if A.shape != (n, n):
                raise FormatError("constraint matrices must share one square shape")
        self._mats = mats
        self.m = len(mats)
        self.n = n

    def forward_rank1(self, u, v):
        return np.array([u @ (A @ v) for A in self._mats])

    def adjoint_apply(self, y, u):
        out = np.zeros(self.n)
        for yi, A in zip(y, self._mats):
            if yi != 0.0:
                out += yi * (A @ u)
        return out

    def adjoint_apply_matrix(self, y, U):
        W = self._weighted_sum(y)
        return W @ U

    def _weighted_sum(self, y):
        W = sp.csr_matrix((self.n, self.n))
        for yi, A in zip(y, self._mats):
            if yi != 0.0:
                W = W + yi * A
        return W

    def gram_apply(self, y):
        W = self._weighted_sum(y)
        return np.array([(A.multiply(W)).sum() for A in self._mats])

    def constraint_coo(self, k):
        A = self._mats[k].tocoo()
        return A.row.copy(), A.col.copy(), A.data.copy()

    @property
    def matrices(self):
        return list(self._mats)


class DiagonalMap(ConstraintMap):
    """A(X) = diag(X); adjoint A'y = Diag(y).  Used by Max-Cut (m = n)."""

    variant = "diag-equality"

    def __init__(self, n):
        self.n = int(n)
        self.m = int(n)

    def forward_rank1(self, u, v):
        return u * v

    def adjoint_apply(self, y, u):
        return y * u

    def adjoint_apply_matrix(self, y, U):
        return y[:, None] * U

    def gram_apply(self, y):
        return y.copy()

    def sigma_max_exact(self):
        return 1.0

    def constraint_coo(self, k):
        return np.array([k]), np.array([k]), np.array([1.0])


class EntryObservationMap(ConstraintMap):
    """A_k = (E_{i_k j_k} + E_{j_k i_k})/2 on the lifted 2-block matrix.

    Index pairs are stored 0-based with i_k < n1 <= j_k; for symmetric X the
    k-th constraint value is X[i_k, j_k].
    """

    variant = "entry-observation"

    def __init__(self, n, rows, cols, n1=None):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.size == 0:
            raise FormatError("observation list must be nonempty (m >= 1)")
        if rows.size != cols.size:
            raise FormatError("row/col index arrays must match")
        if rows.min() < 0 or cols.max() >= n:
            raise FormatError("entry index out of range")
        if n1 is not None and (rows.max() >= n1 or cols.min() < n1):
            raise FormatError("lifted structure requires i <= n1 < j")
        pairs = set(zip(rows.tolist(), cols.tolist()))
        if len(pairs) != rows.size:
            raise FormatError("duplicate observation index pair")
        self.n = int(n)
        self.m = int(rows.size)
        self.rows = rows
        self.cols = cols
        self.n1 = n1

    def forward_rank1(self, u, v):
        return 0.5 * (u[self.rows] * v[self.cols] + u[self.cols] * v[self.rows])

    def adjoint_apply(self, y, u):
        out = np.zeros(self.n)
        np.add.at(out, self.rows, 0.5 * y * u[self.cols])
        np.add.at(out, self.cols, 0.5 * y * u[self.rows])
        return out

    def adjoint_apply_matrix(self, y, U):
        W = sp.coo_matrix(
            (np.concatenate([0.5 * y, 0.5 * y]),
             (np.concatenate([self.rows, self.cols]),
              np.concatenate([self.cols, self.rows]))),
            shape=(self.n, self.n)).tocsr()
        return W @ U

    def gram_apply(self, y):
        # distinct off-diagonal pairs: A(A'y) = y/2
        return 0.5 * y

    def sigma_max_exact(self):
        return float(np.sqrt(0.5))

    def constraint_coo(self, k):
        i, j = self.rows[k], self.cols[k]
        return np.array([i, j]), np.array([j, i]), np.array([0.5, 0.5])


# --------------------------------------------------------------------------
# problem container and slack operator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SdpProblem:
    """Standard-form SDP data accessed through matrix-free oracles.

    trace_hint, when set, is a known bound on the nuclear norm of the primal
    solution and drives the default penalty weight.
    """

    n: int
    m: int
    cost: CostOracle
    constraints: ConstraintMap
    b: np.ndarray
    trace_hint: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise FormatError("need n >= 1 and m >= 1")
        b = np.asarray(self.b, dtype=float)
        if b.shape != (self.m,):
            raise FormatError("right-hand side length must equal m")
        object.__setattr__(self, "b", b)
        if self.cost.n != self.n or self.constraints.n != self.n:
            raise FormatError("oracle dimensions disagree with n")
        if self.constraints.m != self.m:
            raise FormatError("constraint count disagrees with m")


@dataclass(frozen=True)
class SlackOperator:
    """Matrix-free action of sign * (C - A'y) on vectors."""

    problem: SdpProblem
    y: np.ndarray
    sign: int = 1

    @property
    def n(self) -> int:
        return self.problem.n

    def apply(self, u: np.ndarray) -> np.ndarray:
        w = self.problem.cost.apply(u) - self.problem.constraints.adjoint_apply(self.y, u)
        return w if self.sign == 1 else -w

    def apply_matrix(self, U: np.ndarray) -> np.ndarray:
        W = self.problem.cost.apply_matrix(U) - self.problem.constraints.adjoint_apply_matrix(self.y, U)
        return W if self.sign == 1 else -W


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

def _merge_edges(edges):
    merged = {}
    for e in edges:
        if len(e) == 2:
            i, j, w = e[0], e[1], 1.0
        else:
            i, j, w = e
        i, j, w = int(i), int(j), float(w)
        if i == j:
            raise FormatError(f"self-loop at vertex {i}")
        if i < 1 or j < 1:
            raise FormatError("vertex indices are 1-based and positive")
        if w < 0:
            raise FormatError("negative edge weight")
        key = (min(i, j), max(i, j))
        merged[key] = merged.get(key, 0.0) + w
    return merged


def build_maxcut(edges, n_vertices: int | None = None) -> SdpProblem:
    """Max-Cut relaxation: min tr(-L X) s.t. diag(X) = 1, X PSD.

    ``edges`` is an iterable of (i, j, w) with 1-based vertex indices and
    nonnegative weights; duplicate edges are summed.  The vertex count is the
    largest index seen unless ``n_vertices`` overrides it.
    """
    merged = _merge_edges(edges)
    max_idx = max((j for _, j in merged), default=0)
    n = int(n_vertices) if n_vertices is not None else max_idx
    if n < 2:
        raise FormatError("graph needs at least 2 vertices")
    if max_idx > n:
        raise FormatError("vertex index out of range")
    if merged:
        ii = np.array([i - 1 for i, _ in merged])
        jj = np.array([j - 1 for _, j in merged])
        ww = np.array(list(merged.values()))
        W = sp.coo_matrix((np.concatenate([ww, ww]),
                           (np.concatenate([ii, jj]), np.concatenate([jj, ii]))),
                          shape=(n, n)).tocsr()
        deg = np.asarray(W.sum(axis=1)).ravel()
        L = sp.diags(deg) - W
    else:
        L = sp.csr_matrix((n, n))
    return SdpProblem(
        n=n,
        m=n,
        cost=NegatedLaplacianCost(L),
        constraints=DiagonalMap(n),
        b=np.ones(n),
        trace_hint=float(n),
    )


def build_matrix_completion(n1: int, n2: int, observations) -> SdpProblem:
    """Nuclear-norm completion SDP on the lifted (n1+n2)-dimensional variable.

    Observations are (i, j, value) with 1 <= i <= n1, 1 <= j <= n2 and
    distinct (i, j).  The cost is the identity (objective tr W1 + tr W2),
    and trace_hint is left unset for the caller to supply.
    """
    obs = list(observations)
    if not obs:
        raise FormatError("observation list must be nonempty (m >= 1)")
    rows, cols, vals = [], [], []
    for i, j, v in obs:
        i, j = int(i), int(j)
        if not (1 <= i <= n1) or not (1 <= j <= n2):
            raise FormatError(f"observation index ({i},{j}) out of range")
        rows.append(i - 1)
        cols.append(n1 + j - 1)
        vals.append(float(v))
    n = int(n1) + int(n2)
    cmap = EntryObservationMap(n, rows, cols, n1=int(n1))
    return SdpProblem(
        n=n,
        m=cmap.m,
        cost=IdentityCost(n),
        constraints=cmap,
        b=np.array(vals),
        trace_hint=None,
    )


# --------------------------------------------------------------------------
# synthetic instances
# --------------------------------------------------------------------------

def random_maxcut(n: int, edge_prob: float = 0.1, seed: int = 0,
                  weighted: bool = True) -> SdpProblem:
    """Erdos-Renyi Max-Cut instance with uniform(0.1, 1) weights."""
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < edge_prob:
                w = float(rng.uniform(0.1, 1.0)) if weighted else 1.0
                edges.append((i, j, w))
    if not edges:  # keep the instance connected enough to be nontrivial
        edges = [(i, i + 1, 1.0) for i in range(1, n)]
    return build_maxcut(edges, n_vertices=n)


def synthetic_matrix_completion(n1: int, n2: int, rank: int = 5, seed: int = 0,
                                num_obs: int | None = None):
    """Rank-``rank`` sign-factor completion instance, seed-controlled.

    The ground truth is X = U V with U in {+-1}^{n1 x rank} and
    V in {+-1}^{rank x n2}; ``num_obs`` entries are observed uniformly at
    random (default: 25 (n1+n2) log(n1+n2), capped at n1*n2).  Returns
    (problem, X_true); the problem's trace_hint is set to the nuclear norm
    of the lifted solution, 2 ||X||_*.
    """
    rng = np.random.default_rng(seed)
    U = rng.choice([-1.0, 1.0], size=(n1, rank))
    V = rng.choice([-1.0, 1.0], size=(rank, n2))
    X = U @ V
    total = n1 * n2
    if num_obs is None:
        num_obs = int(round(25 * (n1 + n2) * np.log(n1 + n2)))
    num_obs = max(1, min(int(num_obs), total))
    flat = rng.choice(total, size=num_obs, replace=False)
    obs = [(int(k // n2) + 1, int(k % n2) + 1, float(X[k // n2, k % n2])) for k in flat]
    problem = build_matrix_completion(n1, n2, obs)
    nuc = float(np.linalg.norm(X, "nuc"))
    problem = SdpProblem(problem.n, problem.m, problem.cost, problem.constraints,
                         problem.b, trace_hint=2.0 * nuc)
    return problem, X


# --------------------------------------------------------------------------
# consistency checking
# --------------------------------------------------------------------------

@dataclass
class AdjointReport:
    max_adjoint_violation: float
    max_symmetry_violation: float
    probes: int
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return (self.max_adjoint_violation <= self.tol
                and self.max_symmetry_violation <= self.tol)


def adjoint_consistency_check(problem: SdpProblem, probes: int = 16,
                              seed: int = 0, tol: float = 1e-10) -> AdjointReport:
    """Probe <A(W), y> = <W, A'y> and u'Cv = v'Cu on random unit draws.

    Report-only: returns the largest relative violation over ``probes``
    draws of unit u, v in R^n and unit y in R^m.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    cons, cost = problem.constraints, problem.cost
    worst_adj = 0.0
    worst_sym = 0.0
    for _ in range(probes):
        u = rng.standard_normal(problem.n)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(problem.n)
        v /= np.linalg.norm(v)
        y = rng.standard_normal(problem.m)
        y /= np.linalg.norm(y)
        lhs = cons.forward_rank1(u, v) @ y
        rhs = u @ cons.adjoint_apply(y, v)
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
        cu = cost.apply(u)
        cv = cost.apply(v)
        s1, s2 = u @ cv, v @ cu
        worst_sym = max(worst_sym, abs(s1 - s2) / max(1.0, abs(s1), abs(s2)))
    return AdjointReport(worst_adj, worst_sym, probes, tol)
