"""Dense strictly convex QP with inequality rows, solved by active-set enumeration.

    minimize   1/2 z^T Q z + q^T z
    subject to A z <= b

Candidate active sets are visited by increasing cardinality and, within a
cardinality, in lexicographic order; the first candidate whose equality
constrained KKT point is primal feasible with nonnegative multipliers is
returned. Because Q is positive definite that point is the unique global
minimizer, and the visiting order implements the tie-break for degenerate
geometry. Multipliers of a KKT point can always be supported on linearly
independent rows, so cardinalities above ``dim(z)`` are never needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

MAX_DIM = 8
MAX_ROWS = 32

SYM_TOL = 1e-12
FEAS_TOL = 1e-9
MULT_TOL = 1e-9
STAT_TOL = 1e-8
COMPL_TOL = 1e-8
SINGULAR_TOL = 1e-12


class QpEnvelopeError(ValueError):
    """Problem data violate the solver's design envelope."""


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).reshape(-1)
        d = q.size
        A = np.asarray(self.A, dtype=float).reshape(-1, d) if np.size(self.A) else np.zeros((0, d))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if Q.shape != (d, d):
            raise QpEnvelopeError(f"Q has shape {Q.shape}, expected ({d}, {d})")
        if A.shape[0] != b.size:
            raise QpEnvelopeError("A and b disagree on the number of rows")
        if d > MAX_DIM or A.shape[0] > MAX_ROWS:
            raise QpEnvelopeError(f"problem size d={d}, k={A.shape[0]} exceeds envelope")
        if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(q)) \
                or not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
            raise QpEnvelopeError("non-finite problem data")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > SYM_TOL * scale:
            raise QpEnvelopeError("Q is not symmetric")
        try:
            np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise QpEnvelopeError("Q is not positive definite") from exc
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def trusted(cls, Q, q, A, b) -> "QpProblem":
        """Wrap float arrays already known to be well formed (no validation)."""
        obj = object.__new__(cls)
        for name, val in (("Q", Q), ("q", q), ("A", A), ("b", b)):
            object.__setattr__(obj, name, val)
        return obj

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q @ z + self.q @ z)

    def tol_scale(self) -> float:
        return 1.0 + (float(np.abs(self.b).max()) if self.b.size else 0.0)


@dataclass(frozen=True)
class QpSolution:
    z_star: np.ndarray
    active_set: tuple
    multipliers: np.ndarray
    status: str
    objective: float = float("nan")

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def kkt_residuals(p: QpProblem, sol: QpSolution) -> dict:
    """Stationarity, primal/dual feasibility and complementarity residuals."""
    z, mu = sol.z_star, sol.multipliers
    slack = p.b - p.A @ z
    return {
        "stationarity": float(np.linalg.norm(p.Q @ z + p.q + p.A.T @ mu)),
        "primal": float(max(0.0, -slack.min())) if slack.size else 0.0,
        "dual": float(max(0.0, -mu.min())) if mu.size else 0.0,
        "complementarity": float(np.max(np.abs(mu * slack))) if mu.size else 0.0,
    }


def certify(p: QpProblem, sol: QpSolution) -> bool:
    """True if ``sol`` satisfies the KKT conditions at the fixed tolerances."""
    if not sol.solved:
        return False
    r = kkt_residuals(p, sol)
    s = p.tol_scale()
    grad_scale = 1.0 + float(np.linalg.norm(p.q)) + float(np.linalg.norm(p.Q @ sol.z_star))
    return (r["stationarity"] <= STAT_TOL * grad_scale
            and r["primal"] <= FEAS_TOL * s
            and r["dual"] <= MULT_TOL * (1.0 + float(np.max(np.abs(sol.multipliers), initial=0.0)))
            and r["complementarity"] <= COMPL_TOL * s * (1.0 + float(np.max(np.abs(sol.multipliers), initial=0.0))))


@lru_cache(maxsize=None)
def _subsets(k: int, card: int) -> np.ndarray:
    return np.array(list(combinations(range(k), card)), dtype=np.intp).reshape(-1, card)


def _first_valid(M, r, S, mu, feas_tol):
    """Index into ``S`` of the first candidate that is dual and primal feasible."""
    mu_scale = 1.0 + np.abs(mu).max(axis=1)
    dual_ok = (mu >= -MULT_TOL * mu_scale[:, None]).all(axis=1)
    cand = np.flatnonzero(dual_ok)
    if cand.size == 0:
        return None
    # row values after the step: r - M[:, S] mu
    Msub = M[:, S[cand]].transpose(1, 0, 2)
    new_r = r[None, :] - np.einsum("nkc,nc->nk", Msub, mu[cand])
    primal_ok = (new_r <= feas_tol).all(axis=1)
    if not primal_ok.any():
        return None
    return int(cand[np.argmax(primal_ok)])


def _scalar_search(M, r, k, card, feas_tol):
    """Cardinality 1 or 2 candidates in lexicographic order, with closed-form solves.

    Same acceptance tests as ``_first_valid``; plain floats are much cheaper
    than batched array work at these sizes.
    """
    Ml, rl = M.tolist(), r.tolist()
    rows = range(k)
    if card == 1:
        for i in rows:
            mii = Ml[i][i]
            if mii <= 0:
                continue
            mu = rl[i] / mii
            if mu < -MULT_TOL * (1.0 + abs(mu)):
                continue
            if all(rl[j] - Ml[j][i] * mu <= feas_tol for j in rows):
                return (i,), (mu,)
        return None
    for i in rows:
        mii = Ml[i][i]
        for j in range(i + 1, k):
            mjj, mij = Ml[j][j], Ml[i][j]
            dprod = mii * mjj
            det = dprod - mij * mij
            if not (dprod > 0 and abs(det) > SINGULAR_TOL * dprod):
                continue
            mu_i = (rl[i] * mjj - rl[j] * mij) / det
            mu_j = (mii * rl[j] - mij * rl[i]) / det
            # one refinement step; Cramer's rule alone is loose on near-parallel rows
            ri = rl[i] - mii * mu_i - mij * mu_j
            rj = rl[j] - mij * mu_i - mjj * mu_j
            mu_i += (ri * mjj - rj * mij) / det
            mu_j += (mii * rj - mij * ri) / det
            floor = -MULT_TOL * (1.0 + max(abs(mu_i), abs(mu_j)))
            if mu_i < floor or mu_j < floor:
                continue
            if all(rl[l] - Ml[l][i] * mu_i - Ml[l][j] * mu_j <= feas_tol for l in rows):
                return (i, j), (mu_i, mu_j)
    return None


def _kkt_polish(p: QpProblem, act, z, mu):
    """Re-solve the equality-constrained KKT system of the active rows directly."""
    d, c = p.dim, len(act)
    As = p.A[act]
    K = np.zeros((d + c, d + c))
    K[:d, :d] = p.Q
    K[:d, d:] = As.T
    K[d:, :d] = As
    try:
        sol = np.linalg.solve(K, np.concatenate([-p.q, p.b[act]]))
    except np.linalg.LinAlgError:
        return z, mu
    if not np.all(np.isfinite(sol)):
        return z, mu
    return sol[:d], sol[d:]


def solve_qp(p: QpProblem) -> QpSolution:
    """Return the unique minimizer of ``p`` with its KKT multipliers."""
    d, k = p.dim, p.n_rows
    Qinv = np.linalg.inv(p.Q)
    z0 = -Qinv @ p.q
    if k == 0:
        return QpSolution(z0, (), np.zeros(0), "solved", p.objective(z0))

    A, b = p.A, p.b
    QiAt = Qinv @ A.T                          # (d, k)
    M = A @ QiAt                               # Gram matrix of the rows in the Q^-1 metric
    r = A @ z0 - b                             # row violations at the unconstrained optimum
    feas_tol = FEAS_TOL * p.tol_scale()

    if (r <= feas_tol).all():
        return QpSolution(z0, (), np.zeros(k), "solved", p.objective(z0))

    diag = M.diagonal()
    for card in range(1, min(k, d) + 1):
        if card <= 2:
            found = _scalar_search(M, r, k, card, feas_tol)
            if found is None:
                continue
            act, mu_act = found
        else:
            # subsets singular in the Gram metric are skipped
            S = _subsets(k, card)
            Ms = M[S[:, :, None], S[:, None, :]]
            dprod = diag[S].prod(axis=1)
            ok = (dprod > 0) & (np.abs(np.linalg.det(Ms)) > SINGULAR_TOL * dprod)
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                continue
            Sok = S[idx]
            mu = np.linalg.solve(Ms[idx], r[Sok][..., None])[..., 0]
            j = _first_valid(M, r, Sok, mu, feas_tol)
            if j is None:
                continue
            act, mu_act = tuple(int(i) for i in Sok[j]), mu[j]
        z, mu_act = _kkt_polish(p, list(act), z0 - QiAt[:, list(act)] @ np.asarray(mu_act),
                                np.asarray(mu_act))
        full_mu = np.zeros(k)
        full_mu[list(act)] = np.maximum(mu_act, 0.0)
        return QpSolution(z, act, full_mu, "solved", p.objective(z))

    return QpSolution(np.full(d, np.nan), (), np.zeros(k), "infeasible")


def check_strict_feasibility(p: QpProblem) -> tuple[bool, np.ndarray]:
    """Look for a point with every row strictly satisfied.

    Maximizes a common slack ``s`` (capped at 1) via a small LP; the rows are
    strictly feasible iff the optimum slack is positive.
    """
    d, k = p.dim, p.n_rows
    if k == 0:
        return True, np.zeros(d)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    row_norm = np.linalg.norm(p.A, axis=1)
    row_norm[row_norm == 0] = 1.0
    A_ub = np.hstack([p.A / row_norm[:, None], np.ones((k, 1))])
    b_ub = p.b / row_norm
    bounds = [(None, None)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return False, np.full(d, np.nan)
    z = res.x[:d]
    strict = bool(res.x[-1] > FEAS_TOL and np.all(p.A @ z < p.b))
    return strict, z
