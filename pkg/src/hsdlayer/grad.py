"""
Backward pass: Jacobians of the LP layer solution with respect to ``c``.

Three formulations are available:

``hsd``
    Differentiate the homogeneous self-dual system at the terminal
    interior point.  The coefficient matrix is the one of the reduced
    Newton system, so the forward factorisation machinery is reused with
    ``M`` replaced by ``M + alpha I``.
``kkt-log``
    Differentiate the KKT conditions of the log-barrier problem,
    ``f_xx = lam X^-2``.
``kkt-sq``
    Differentiate the KKT conditions of ``c'x + lam_sq ||x||^2`` on the
    inactive set of its own (exactly solved) regularised problem.

For ``hsd`` the right-hand side accounts for the residuals the early
stopped iterate still carries: every iterate satisfies
``A x - b tau = theta (A e - b)`` etc., and the dual/gap residuals of the
all-ones start depend on ``c``.  With the scaled point
``x' = x / tau`` and ``rho = theta / tau`` the system is

    K [dx; dy; dtau] = [(1 - rho) I; 0; (x' - rho e)']

followed by the quotient rule ``d x' = dx - x' dtau``.  ``rho = 0`` and no
quotient rule gives the textbook form ``[I; 0; x']`` (``hsd-literal``).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalFailure
from .solver import NormalEquations, assemble_reduced

FORMULATIONS = ("hsd", "hsd-literal", "kkt-log", "kkt-sq")
ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class GradConfig:
    formulation: str = "hsd"
    damping: float = 1e-6
    lambda_sq: float = 0.1

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.formulation == "kkt-sq" and not self.lambda_sq > 0:
            raise ValueError("lambda_sq must be positive for kkt-sq")


@dataclass(frozen=True)
class Jacobian:
    """``dxdc[i, j] = d x_i / d c_j``; optional ``dydc`` and ``dtaudc``."""

    dxdc: np.ndarray
    dydc: np.ndarray = None
    dtaudc: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.dxdc)):
            raise NumericalFailure("Jacobian has non-finite entries")


class BackwardContext:
    """Terminal iterate of a forward solve plus the factorised ``M + alpha I``.

    The factorisation is built from the raw (unscaled) iterate so that the
    matrix is bit-identical to the one the forward pass would assemble at
    the same point; ``X^-1 T`` and ``kappa / tau`` do not change under the
    ``1 / tau`` rescaling.
    """

    def __init__(self, lp, point, damping=0.0):
        if not point.is_interior():
            raise ValueError("backward context needs a strictly interior point")
        self.lp = lp
        self.point = point
        tau = point.tau
        self.x = point.x / tau
        self.y = point.y / tau
        self.t = point.t / tau
        self.kappa = point.kappa / tau
        self.lam = point.lam / tau ** 2
        self.rho = point.theta / tau
        self.damping = damping
        self._normal = None

    @classmethod
    def from_solution(cls, lp, sol, damping=0.0):
        return cls(lp, sol.point, damping)

    @property
    def normal(self):
        if self._normal is None:
            pt = self.point
            self._normal = NormalEquations(self.lp.A, pt.x, pt.t, shift=self.damping,
                                           retry_shift=self.damping)
        return self._normal

    @property
    def kappa_over_tau(self):
        return self.point.kappa / self.point.tau

    def reduced_matrix(self):
        pt = self.point
        return assemble_reduced(self.lp.A, self.lp.b, self.lp.c, pt.x, pt.t, pt.tau, pt.kappa)


def damp(M, alpha):
    return M + alpha * np.eye(M.shape[0])


def hsd_rhs(ctx, literal=False):
    """Block right-hand side ``(R1, R2, R3)`` of the differentiated HSD system."""
    k, p = ctx.lp.k, ctx.lp.p
    rho = 0.0 if literal else ctx.rho
    return (1.0 - rho) * np.eye(k), np.zeros((p, k)), ctx.x - rho


def dxdc_hsd(ctx, literal=False):
    """Jacobian of the scaled solution ``x / tau`` from the HSD system.

    One factorisation of ``M + alpha I`` serves all ``k`` columns.  With
    ``literal=True`` the raw ``dx`` block of ``K^-1 [I; 0; x']`` is returned
    instead.
    """
    R1, R2, R3 = hsd_rhs(ctx, literal)
    lp = ctx.lp
    dx, dy, dtau = ctx.normal.solve_reduced(lp.c, lp.b, ctx.kappa_over_tau, R1, R2, R3)
    info = {"damping": ctx.normal.alpha, "raw": (dx, dy, dtau)}
    if literal:
        return Jacobian(dxdc=dx, dydc=dy, dtaudc=dtau, info=info)
    return Jacobian(dxdc=dx - np.outer(ctx.x, dtau), dydc=dy - np.outer(ctx.y, dtau),
                    dtaudc=dtau, info=info)


def _saddle_solve(H_inv, A, rhs_x):
    """Solve ``[[H, -A'], [A, 0]] [dx; dy] = [rhs_x; 0]`` for diagonal ``H``."""
    S = A @ (H_inv[:, None] * A.T)
    factor = scipy.linalg.cho_factor(S)
    dy = scipy.linalg.cho_solve(factor, -A @ (H_inv[:, None] * rhs_x))
    dx = H_inv[:, None] * (rhs_x + A.T @ dy)
    return dx, dy


def log_barrier_jacobian(A, x, lam):
    """Solve ``[[lam X^-2, -A'], [A, 0]] [dx; dy] = -[I; 0]``.

    The (1,1) block is diagonal, so the saddle system reduces to
    ``A H^-1 A'``; if that fails to factorise the block is shifted by
    ``1e-8 max(H)`` and then ``1e-6``.
    """
    k = x.size
    h = lam / x ** 2
    last = None
    for shift in (0.0, 1e-8, 1e-6):
        hs = h + shift * np.max(h)
        try:
            dx, dy = _saddle_solve(1.0 / hs, A, -np.eye(k))
        except (np.linalg.LinAlgError, ValueError) as exc:
            last = exc
            continue
        if np.all(np.isfinite(dx)):
            return Jacobian(dxdc=dx, dydc=dy, info={"shift": shift, "hessian": hs})
    raise NumericalFailure(f"log-barrier saddle system is singular: {last}")


def dxdc_kkt_logbarrier(ctx):
    """Log-barrier Jacobian at the scaled terminal ``x`` and ``lam``."""
    return log_barrier_jacobian(ctx.lp.A, ctx.x, ctx.lam)


def solve_barrier(lp, lam, tol=1e-12, max_iter=200):
    """Minimise ``c'x - lam sum(log x)`` subject to ``Ax = b``.

    Infeasible-start primal-dual Newton iteration whose centering target
    ``mu = max(lam, 0.1 x't / k)`` decreases to ``lam`` and then stays
    there.  Returns ``(x, y, t)`` with ``x * t = lam``.
    """
    A, b, c = lp.A, lp.b, lp.c
    k, p = lp.k, lp.p
    x, t, y = np.ones(k), np.ones(k), np.zeros(p)
    scale = 1.0 + max(np.max(np.abs(b), initial=0.0), np.max(np.abs(c), initial=0.0))
    for _ in range(max_iter):
        mu = max(lam, 0.1 * (x @ t) / k)
        rp = b - A @ x
        rd = c - A.T @ y - t
        rc = mu - x * t
        if (mu == lam and max(np.max(np.abs(rp), initial=0.0),
                              np.max(np.abs(rd))) <= tol * scale
                and np.max(np.abs(rc)) <= tol * lam):
            return x, y, t
        d = x / t
        M = A @ (d[:, None] * A.T)
        rhs = rp - A @ ((rc - x * rd) / t)
        try:
            dy = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), rhs)
        except np.linalg.LinAlgError:
            raise NumericalFailure("barrier normal matrix became singular; the "
                                   "feasible set may have no interior") from None
        dx = (rc - x * rd) / t + d * (A.T @ dy)
        dt = rd - A.T @ dy
        step = 1.0
        for v, dv in ((x, dx), (t, dt)):
            neg = dv < 0
            if np.any(neg):
                step = min(step, 0.99 * np.min(-v[neg] / dv[neg]))
        x, y, t = x + step * dx, y + step * dy, t + step * dt
    raise NumericalFailure("barrier problem did not converge")


def solve_regularized_qp(lp, lambda_sq, tol=1e-12, max_iter=200):
    """Minimise ``c'x + lambda_sq ||x||^2`` subject to ``Ax = b, x >= 0``.

    Semismooth Newton on the concave dual

        g(y) = b'y - lambda_sq ||max(0, A'y - c) / (2 lambda_sq)||^2

    whose maximiser gives ``x = max(0, A'y - c) / (2 lambda_sq)``.
    """
    A, b, c = lp.A, lp.b, lp.c
    p = A.shape[0]
    two_lam = 2.0 * lambda_sq

    def primal(y):
        return np.maximum(0.0, A.T @ y - c) / two_lam

    def dual_value(y):
        x = primal(y)
        return b @ y - lambda_sq * x @ x

    y = np.zeros(p)
    x = primal(y)
    scale = 1.0 + np.max(np.abs(b), initial=0.0)
    for _ in range(max_iter):
        grad = b - A @ x
        if np.max(np.abs(grad), initial=0.0) <= tol * scale:
            return x, y
        free = (A.T @ y - c) > 0
        AF = A[:, free]
        H = AF @ AF.T / two_lam
        # regularise in proportion to the residual: robust far away, Newton near the end
        mu = 1e-12 * (1.0 + np.trace(H)) + 1e-4 * np.linalg.norm(grad)
        d = np.linalg.solve(H + mu * np.eye(p), grad)
        g0 = dual_value(y)
        # Armijo with slack for round-off; near the optimum the predicted
        # increase drops below the precision of g(y)
        slack = 1e-14 * (1.0 + abs(g0))
        for direction in (d, grad):
            slope, step = grad @ direction, 1.0
            while (step > 1e-12 and dual_value(y + step * direction)
                   < g0 + 1e-4 * step * slope - slack):
                step *= 0.5
            if step > 1e-12:
                break
        else:
            raise NumericalFailure("regularised QP line search stalled")
        y = y + step * direction
        x = primal(y)
    raise NumericalFailure("regularised QP did not converge")


def dxdc_kkt_squared(lp, lambda_sq, x=None):
    """Jacobian of the squared-norm regularised solution on its inactive set.

    Solves ``[[2 lambda_sq I, -A_F'], [A_F, 0]] [dx_F; dy] = -[I_F; 0]`` for
    the inactive components ``F`` (``x_i > 1e-6 max(1, ||x||_inf)``);
    entries involving active components are zero.  The solution is
    ``dx_F = -Z Z' / (2 lambda_sq)`` for an orthonormal basis ``Z`` of the
    null space of ``A_F``, which is exactly zero when ``A_F`` has full
    column rank.  ``x`` may be passed to skip the forward QP solve.
    """
    if not lambda_sq > 0:
        raise ValueError("lambda_sq must be positive")
    if x is None:
        x, _ = solve_regularized_qp(lp, lambda_sq)
    k, p = lp.k, lp.p
    free = x > ACTIVE_TOL * max(1.0, np.max(np.abs(x)))
    J = np.zeros((k, k))
    dydc = np.zeros((p, k))
    info = {"x": x, "inactive": np.flatnonzero(free), "empty_inactive": not np.any(free)}
    if not np.any(free):
        return Jacobian(dxdc=J, dydc=dydc, info=info)
    AF = lp.A[:, free]
    nf = AF.shape[1]
    # dx_F = -Z Z' / (2 lambda_sq) with Z an orthonormal null-space basis of A_F;
    # a trivial null space gives an exactly zero block
    _, sv, Vt = np.linalg.svd(AF)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 0.0)))
    Z = Vt[rank:].T
    JF = -(Z @ Z.T) / (2.0 * lambda_sq)
    dyF = np.linalg.lstsq(AF.T, 2.0 * lambda_sq * JF + np.eye(nf), rcond=None)[0]
    J[np.ix_(free, free)] = JF
    dydc[:, free] = dyF
    K = np.block([[2.0 * lambda_sq * np.eye(nf), -AF.T], [AF, np.zeros((p, p))]])
    R = -np.vstack([np.eye(nf), np.zeros((p, nf))])
    info["saddle"] = (K, R, np.vstack([JF, dyF]))
    return Jacobian(dxdc=J, dydc=dydc, info=info)


def jacobian(ctx, cfg):
    """Dispatch on ``cfg.formulation``; ``ctx.damping`` is only used by ``hsd``."""
    if cfg.formulation == "hsd":
        return dxdc_hsd(ctx)
    if cfg.formulation == "hsd-literal":
        return dxdc_hsd(ctx, literal=True)
    if cfg.formulation == "kkt-log":
        return dxdc_kkt_logbarrier(ctx)
    return dxdc_kkt_squared(ctx.lp, cfg.lambda_sq)


def vjp(ctx, grad_x, cfg=None):
    """``(dx/dc)' grad_x`` via the full Jacobian."""
    cfg = cfg or GradConfig(formulation="hsd", damping=ctx.damping)
    grad_x = np.asarray(grad_x, dtype=float)
    if grad_x.shape != (ctx.lp.k,):
        raise ValueError(f"grad_x must have length {ctx.lp.k}")
    return jacobian(ctx, cfg).dxdc.T @ grad_x
