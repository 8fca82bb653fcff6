"""
Linear program containers, conversion to standard form and presolve.

Everything downstream works on the standard form

    min c @ x   s.t.   A @ x == b,   x >= 0

with a dense ``A`` of full row rank.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, RankDeficient, StructuralError

RANK_RTOL = 1e-10


def _as_matrix(M, n_cols):
    if M is None:
        return np.zeros((0, n_cols))
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return M.reshape(0, n_cols)
    if M.ndim != 2:
        raise StructuralError(f"constraint matrix must be 2-D, got shape {M.shape}")
    return M


def _as_vector(v):
    if v is None:
        return np.zeros(0)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass(frozen=True)
class GeneralProblem:
    """An LP (or MILP) with equality and ``<=`` rows and ``x >= 0``.

    ``integrality`` flags are metadata for the discrete oracles; the
    interior point layer always solves the continuous relaxation.
    """

    c: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    sense: str = "min"
    integrality: np.ndarray = None

    def __post_init__(self):
        c = _as_vector(self.c)
        n = c.size
        if n == 0:
            raise StructuralError("problem has no variables")
        A_eq, A_ub = _as_matrix(self.A_eq, n), _as_matrix(self.A_ub, n)
        b_eq, b_ub = _as_vector(self.b_eq), _as_vector(self.b_ub)
        for name, M, rhs in (("A_eq", A_eq, b_eq), ("A_ub", A_ub, b_ub)):
            if M.shape[1] != n:
                raise StructuralError(
                    f"{name} has {M.shape[1]} columns but there are {n} variables")
            if M.shape[0] != rhs.size:
                raise StructuralError(
                    f"{name} has {M.shape[0]} rows but its rhs has {rhs.size} entries")
        if self.sense not in ("min", "max"):
            raise StructuralError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.integrality is None:
            integ = np.zeros(n, dtype=bool)
        else:
            integ = np.asarray(self.integrality, dtype=bool).reshape(-1)
            if integ.size != n:
                raise StructuralError("integrality flags do not match variable count")
        for arr in (c, A_eq, b_eq, A_ub, b_ub):
            if not np.all(np.isfinite(arr)):
                raise StructuralError("problem data contains non-finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "A_ub", A_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "integrality", integ)

    @property
    def n_vars(self):
        return self.c.size

    def objective(self, x):
        return float(self.c @ np.asarray(x, dtype=float))

    def with_objective(self, c):
        return replace(self, c=c)

    def is_feasible(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if np.any(x < -tol):
            return False
        if self.A_eq.shape[0] and np.any(np.abs(self.A_eq @ x - self.b_eq) > tol):
            return False
        if self.A_ub.shape[0] and np.any(self.A_ub @ x - self.b_ub > tol):
            return False
        return True

    def to_dict(self):
        return {
            "sense": self.sense,
            "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "A_ub": self.A_ub.tolist(),
            "b_ub": self.b_ub.tolist(),
            "integrality": self.integrality.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"sense", "c", "A_eq", "b_eq", "A_ub", "b_ub", "integrality"}
        if unknown:
            raise StructuralError(f"unknown problem fields: {sorted(unknown)}")
        if "c" not in d:
            raise StructuralError("problem is missing 'c'")
        n = len(d["c"])
        return cls(
            c=d["c"],
            A_eq=_as_matrix(d.get("A_eq") or None, n),
            b_eq=d.get("b_eq"),
            A_ub=_as_matrix(d.get("A_ub") or None, n),
            b_ub=d.get("b_ub"),
            sense=d.get("sense", "min"),
            integrality=d.get("integrality"),
        )


@dataclass(frozen=True)
class StandardFormLP:
    """``min c @ x  s.t.  A @ x == b, x >= 0``.

    Columns ``var_map[i]`` hold original variable ``i``; columns in
    ``slack_range`` are slacks of the ``<=`` rows.  ``sign`` is -1 when the
    original problem was a maximisation (its objective was negated).
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    var_map: np.ndarray = None
    slack_range: tuple = (0, 0)
    sign: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape != (b.size, c.size):
            raise StructuralError(
                f"A has shape {A.shape}, expected ({b.size}, {c.size})")
        var_map = (np.arange(c.size) if self.var_map is None
                   else np.asarray(self.var_map, dtype=int))
        if len(set(var_map.tolist())) != var_map.size or np.any(var_map >= c.size):
            raise StructuralError("original variables must map to distinct columns")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "var_map", var_map)
        object.__setattr__(self, "slack_range", tuple(int(i) for i in self.slack_range))

    @property
    def k(self):
        return self.c.size

    @property
    def p(self):
        return self.b.size

    def original_solution(self, x):
        return np.asarray(x)[self.var_map]

    def original_objective(self, x):
        """Objective value in the sense and units of the original problem."""
        return self.sign * float(self.c @ np.asarray(x))

    def embed_cost(self, c_original):
        """Standard-form cost vector for an original-sense objective."""
        c = np.zeros(self.k)
        c[self.var_map] = self.sign * np.asarray(c_original, dtype=float)
        return c

    def with_cost(self, c):
        return replace(self, c=c)


@dataclass(frozen=True)
class PresolveReport:
    removed_rows: tuple = ()
    rank_deficient: bool = False
    row_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))


def to_standard_form(problem):
    """Append one slack column per ``<=`` row and negate ``c`` for maximisation."""
    n = problem.n_vars
    m_eq, m_ub = problem.A_eq.shape[0], problem.A_ub.shape[0]
    sign = 1.0 if problem.sense == "min" else -1.0

    A = np.zeros((m_eq + m_ub, n + m_ub))
    A[:m_eq, :n] = problem.A_eq
    A[m_eq:, :n] = problem.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([problem.b_eq, problem.b_ub])
    c = np.concatenate([sign * problem.c, np.zeros(m_ub)])
    return StandardFormLP(c=c, A=A, b=b, var_map=np.arange(n),
                          slack_range=(n, n + m_ub), sign=sign)


def check_full_row_rank(A, rtol=RANK_RTOL):
    """True iff the rows of ``A`` are linearly independent."""
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    if p == 0:
        return True
    if p > A.shape[1]:
        return False
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return False
    return int(np.sum(s > rtol * s[0])) == p


def presolve(lp, rtol=RANK_RTOL):
    """Drop zero and dependent rows, then scale rows to unit infinity norm.

    Raises
    ------
    InfeasibleError
        A dropped row contradicts the kept ones (e.g. ``0 = 1``).
    RankDeficient
        The kept rows are still numerically dependent.
    """
    A, b = lp.A, lp.b
    p = A.shape[0]
    row_norm = np.abs(A).max(axis=1) if p else np.zeros(0)
    b_tol = 1e-9 * (1.0 + (np.abs(b).max() if p else 0.0))

    zero = row_norm == 0.0
    if np.any(np.abs(b[zero]) > b_tol):
        raise InfeasibleError("zero constraint row with nonzero right-hand side")
    nz = np.flatnonzero(~zero)

    # unit-norm rows before the rank decision so the tolerance is scale-free
    As = A[nz] / row_norm[nz, None]
    bs = b[nz] / row_norm[nz]
    keep = nz
    rank_deficient = False
    if nz.size:
        _, R, piv = scipy.linalg.qr(As.T, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > rtol * d[0]))
        if rank < nz.size:
            rank_deficient = True
            sel = np.sort(piv[:rank])
            x0 = np.linalg.lstsq(As[sel], bs[sel], rcond=None)[0]
            if np.any(np.abs(As @ x0 - bs) > 1e-9 * (1.0 + np.abs(bs).max())):
                raise InfeasibleError("linearly dependent rows are inconsistent")
            keep = nz[sel]
            As, bs = As[sel], bs[sel]

    if not check_full_row_rank(As, rtol):
        raise RankDeficient("constraint matrix is rank deficient after presolve")
    removed = tuple(int(i) for i in np.setdiff1d(np.arange(p), keep))
    report = PresolveReport(removed_rows=removed, rank_deficient=rank_deficient,
                            row_scale=1.0 / row_norm[keep])
    return replace(lp, A=As, b=bs), report
