"""
Homogeneous self-dual interior point method for standard-form LPs.

The iteration follows the homogeneous algorithm of Andersen & Andersen:
each step solves the linearised self-dual system for a search direction,
takes a fraction-to-the-boundary step, and updates the barrier parameter
``lam = (x @ t + tau * kappa) / (k + 1)``.  The loop stops as soon as
``lam`` reaches a cut-off, which deliberately leaves the iterate off
the optimal face so that the backward system stays well conditioned.

Two details make the early-stopped point a smooth function of ``c``:

* the last step is shortened so that ``lam`` lands exactly on the cut-off;
* a few pure centering steps (``gamma = 1``, ``eta = 0``) follow.  They
  leave ``lam`` and the residuals unchanged and drive ``x * t`` and
  ``tau * kappa`` onto ``lam``.

The residuals of every iterate equal ``theta`` times the residuals of the
starting point; ``theta`` is tracked because the backward pass needs it.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, NumericalFailure, Unconverged

logger = logging.getLogger(__name__)

MAX_DAMPING_RETRIES = 3
PIVOT_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class InteriorPoint:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    tau: float
    kappa: float
    lam: float
    theta: float = 1.0

    def is_interior(self):
        return (np.all(self.x > 0) and np.all(self.t > 0)
                and self.tau > 0 and self.kappa > 0)


@dataclass(frozen=True)
class SolverConfig:
    """Forward-pass settings.

    ``eta=None`` means ``1 - gamma``.  ``damping`` is the first Tikhonov
    shift tried when the Cholesky factorisation of the normal matrix fails.
    ``center_steps=0`` together with ``land_on_cutoff=False`` gives the
    bare loop that stops at the first iterate below the cut-off.
    """

    lambda_cutoff: float = 1e-8
    max_iter: int = 200
    gamma: float = 0.1
    eta: float = None
    step_fraction: float = 0.99
    damping: float = 1e-6
    predictor_corrector: bool = False
    land_on_cutoff: bool = True
    center_steps: int = 30
    center_tol: float = 1e-12

    def __post_init__(self):
        if not self.lambda_cutoff > 0:
            raise ValueError("lambda_cutoff must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def eta_value(self):
        return 1.0 - self.gamma if self.eta is None else self.eta


@dataclass(frozen=True)
class LPSolution:
    """Output of :func:`solve`.

    ``x``, ``y``, ``t`` are the iterate divided by ``tau``.  ``lam`` is the
    barrier parameter of that scaled point, ``lam_unscaled / tau**2``;
    ``point`` keeps the raw terminal iterate for the backward pass.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    objective: float
    lam: float
    iterations: int
    residuals: dict
    point: InteriorPoint
    damping_used: float = 0.0
    center_iterations: int = 0
    centrality: float = float("nan")


def initialize(k, p):
    """All-ones start: ``x = t = e``, ``y = 0``, ``tau = kappa = 1``, ``lam = 1``."""
    x, t = np.ones(k), np.ones(k)
    return InteriorPoint(x=x, y=np.zeros(p), t=t, tau=1.0, kappa=1.0,
                         lam=(x @ t + 1.0) / (k + 1))


def newton_rhs(pt, lp, gamma, eta):
    """Right-hand side ``(r_p, r_d, r_g, r_xt, r_tk)`` of the Newton system."""
    A, b, c = lp.A, lp.b, lp.c
    r_p = -eta * (A @ pt.x - b * pt.tau)
    r_d = -eta * (A.T @ pt.y + pt.t - c * pt.tau)
    r_g = -eta * (-c @ pt.x + b @ pt.y - pt.kappa)
    r_xt = -(pt.x * pt.t - gamma * pt.lam)
    r_tk = -(pt.tau * pt.kappa - gamma * pt.lam)
    return r_p, r_d, r_g, r_xt, r_tk


def reduce_rhs(pt, residuals):
    """Eliminate ``d_t`` and ``d_kappa``: the rhs of the 3-block system."""
    r_p, r_d, r_g, r_xt, r_tk = residuals
    return r_d - r_xt / pt.x, r_p, r_g + r_tk / pt.tau


def assemble_reduced(A, b, c, x, t, tau, kappa):
    """Dense matrix ``[[-X^-1 T, A', -c], [A, 0, -b], [-c', b', kappa/tau]]``.

    Only used for verification; the solves go through :class:`NormalEquations`.
    """
    p, k = A.shape
    K = np.zeros((k + p + 1, k + p + 1))
    K[:k, :k] = np.diag(-t / x)
    K[:k, k:k + p] = A.T
    K[:k, -1] = -c
    K[k:k + p, :k] = A
    K[k:k + p, -1] = -b
    K[-1, :k] = -c
    K[-1, k:k + p] = b
    K[-1, -1] = kappa / tau
    return K


class NormalEquations:
    """Cholesky factorisation of ``M + shift I`` with ``M = A diag(x/t) A'``.

    Solves ``W [u; v] = [r1; r2]`` with ``W = [[-X^-1 T, A'], [A, 0]]``
    through ``M v = A D r1 + r2`` and ``u = D (A' v - r1)``.  If the
    factorisation fails and ``retry_shift`` is given, shifts of
    ``retry_shift``, ``10 retry_shift`` and ``100 retry_shift`` are tried in
    turn (a zero ``retry_shift`` means ``1e-12 max(diag M)``).  The shift
    finally used is ``self.alpha``.
    """

    def __init__(self, A, x, t, shift=0.0, retry_shift=None):
        self.A = A
        self.D = x / t
        self.M = A @ (self.D[:, None] * A.T)
        p = A.shape[0]
        shifts = [shift]
        if retry_shift is not None:
            base = retry_shift or 1e-12 * max(1.0, np.max(np.diag(self.M), initial=0.0))
            shifts += [max(base * 10.0 ** i, shift) for i in range(MAX_DAMPING_RETRIES)]
        self.factor = None
        for alpha in shifts:
            Mbar = self.M + alpha * np.eye(p) if alpha else self.M
            try:
                factor = scipy.linalg.cho_factor(Mbar, check_finite=True)
            except (np.linalg.LinAlgError, ValueError):
                continue
            piv = np.diag(factor[0]) ** 2
            # a singular PSD matrix can factorise with a round-off sized pivot
            tiny = PIVOT_RTOL * np.max(np.diag(Mbar), initial=0.0)
            if np.all(np.isfinite(factor[0])) and np.all(piv > tiny):
                self.factor, self.alpha = factor, alpha
                break
        if self.factor is None:
            raise NumericalFailure("normal matrix is not positive definite after damping")
        if self.alpha != shift:
            logger.debug("normal matrix needed damping %.3g", self.alpha)

    def solve_W(self, r1, r2):
        D = self.D if np.ndim(r1) == 1 else self.D[:, None]
        v = scipy.linalg.cho_solve(self.factor, self.A @ (D * r1) + r2)
        u = D * (self.A.T @ v - r1)
        return u, v

    def solve_reduced(self, c, b, kappa_over_tau, r1, r2, r3):
        """Solve the 3-block system by two ``W`` solves and a scalar Schur step."""
        p, q = self.solve_W(c, b)
        u, v = self.solve_W(r1, r2)
        denom = -c @ p + b @ q + kappa_over_tau
        x3 = (r3 + c @ u - b @ v) / denom
        if np.ndim(r1) == 1:
            return u + p * x3, v + q * x3, x3
        return u + np.outer(p, x3), v + np.outer(q, x3), x3


def solve_reduced(lp, pt, rhs, damping=0.0, normal=None):
    """Directions ``(d_x, d_y, d_tau)`` for the reduced rhs ``(r1, r2, r3)``."""
    if normal is None:
        normal = NormalEquations(lp.A, pt.x, pt.t, retry_shift=damping)
    r1, r2, r3 = rhs
    return normal.solve_reduced(lp.c, lp.b, pt.kappa / pt.tau, r1, r2, r3)


def recover_dt_dkappa(pt, d_x, d_tau, r_xt, r_tk):
    d_t = (r_xt - pt.t * d_x) / pt.x
    d_kappa = (r_tk - pt.kappa * d_tau) / pt.tau
    return d_t, d_kappa


def step_size(pt, direction, rho):
    """Largest ``omega <= 1`` keeping ``x, t, tau, kappa`` strictly positive.

    ``direction`` is ``(d_x, d_y, d_t, d_tau, d_kappa)``; the ratio test is
    scaled by ``rho`` so the new point stays strictly interior.
    """
    d_x, _, d_t, d_tau, d_kappa = direction
    values = np.concatenate([pt.x, pt.t, [pt.tau, pt.kappa]])
    steps = np.concatenate([d_x, d_t, [d_tau, d_kappa]])
    neg = steps < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, rho * float(np.min(-values[neg] / steps[neg])))


def _direction(lp, pt, normal, gamma, eta, correction=None):
    residuals = newton_rhs(pt, lp, gamma, eta)
    if correction is not None:
        dx_dt, dtau_dkappa = correction
        r_p, r_d, r_g, r_xt, r_tk = residuals
        residuals = (r_p, r_d, r_g, r_xt - dx_dt, r_tk - dtau_dkappa)
    d_x, d_y, d_tau = solve_reduced(lp, pt, reduce_rhs(pt, residuals), normal=normal)
    d_t, d_kappa = recover_dt_dkappa(pt, d_x, d_tau, residuals[3], residuals[4])
    return d_x, d_y, d_t, float(d_tau), float(d_kappa)


def _advance(pt, direction, omega, k, eta):
    d_x, d_y, d_t, d_tau, d_kappa = direction
    x = pt.x + omega * d_x
    t = pt.t + omega * d_t
    tau = pt.tau + omega * d_tau
    kappa = pt.kappa + omega * d_kappa
    lam = (x @ t + tau * kappa) / (k + 1)
    return InteriorPoint(x=x, y=pt.y + omega * d_y, t=t, tau=tau, kappa=kappa,
                         lam=lam, theta=pt.theta * (1.0 - omega * eta))


def _landing_step(pt, direction, target, k):
    """Smallest ``omega > 0`` with ``lam(omega) == target``, or None."""
    d_x, _, d_t, d_tau, d_kappa = direction
    a = d_x @ d_t + d_tau * d_kappa
    b = pt.x @ d_t + pt.t @ d_x + pt.tau * d_kappa + pt.kappa * d_tau
    c0 = pt.x @ pt.t + pt.tau * pt.kappa - target * (k + 1)
    if abs(a) <= 1e-14 * abs(b):
        roots = [-c0 / b] if b != 0 else []
    else:
        disc = b * b - 4 * a * c0
        if disc < 0:
            return None
        q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
        roots = [q / a, c0 / q] if q != 0 else []
    roots = [r for r in roots if r > 0]
    return min(roots) if roots else None


def centrality(pt):
    """``max |x t / lam - 1|`` over the complementarity pairs."""
    return float(max(np.max(np.abs(pt.x * pt.t / pt.lam - 1.0)),
                     abs(pt.tau * pt.kappa / pt.lam - 1.0)))


def _center(lp, pt, cfg):
    k = lp.k
    dev = centrality(pt)
    steps = 0
    while steps < cfg.center_steps and dev > cfg.center_tol:
        try:
            normal = NormalEquations(lp.A, pt.x, pt.t)
        except NumericalFailure:
            break
        direction = _direction(lp, pt, normal, 1.0, 0.0)
        if not all(np.all(np.isfinite(d)) for d in direction):
            break
        omega = step_size(pt, direction, cfg.step_fraction)
        new = _advance(pt, direction, omega, k, 0.0)
        new_dev = centrality(new)
        if not new.is_interior() or new_dev >= dev:
            break
        pt, dev = new, new_dev
        steps += 1
    return pt, steps, dev


def _certificate(pt, lp):
    by, cx = lp.b @ pt.y, lp.c @ pt.x
    if by > 0 and cx < 0:
        kind = "infeasible_or_unbounded"
    elif by > 0:
        kind = "infeasible"
    elif cx < 0:
        kind = "unbounded"
    else:
        kind = "infeasible_or_unbounded"
    return InfeasibleError(
        f"homogeneous embedding converged to tau={pt.tau:.3g}, kappa={pt.kappa:.3g}; "
        f"problem appears {kind.replace('_', ' ')}", kind=kind)


def _finish(pt, lp, iterations, damping_used, center_iterations=0):
    x, y, t = pt.x / pt.tau, pt.y / pt.tau, pt.t / pt.tau
    residuals = {
        "primal": float(np.max(np.abs(lp.A @ x - lp.b), initial=0.0)),
        "dual": float(np.max(np.abs(lp.A.T @ y + t - lp.c), initial=0.0)),
        "gap": float(x @ t),
    }
    return LPSolution(x=x, y=y, t=t, objective=float(lp.c @ x),
                      lam=pt.lam / pt.tau ** 2, iterations=iterations,
                      residuals=residuals, point=pt, damping_used=damping_used,
                      center_iterations=center_iterations, centrality=centrality(pt))


def solve(lp, cfg=None):
    """Run the homogeneous interior point method on a presolved LP.

    Parameters
    ----------
    lp : StandardFormLP
        Problem with full-row-rank ``A``.
    cfg : SolverConfig, optional

    Returns
    -------
    LPSolution

    Raises
    ------
    Unconverged
        ``max_iter`` steps without reaching the cut-off; carries the last
        iterate as ``solution``.
    InfeasibleError
        ``tau`` collapsed while ``kappa`` stayed positive.
    NumericalFailure
        The normal matrix could not be factorised even with damping.
    """
    cfg = cfg or SolverConfig()
    k, p = lp.k, lp.p
    pt = initialize(k, p)
    eta = cfg.eta_value
    iteration = 0
    damping_used = 0.0

    while pt.lam > cfg.lambda_cutoff:
        if iteration >= cfg.max_iter:
            raise Unconverged(
                f"lambda={pt.lam:.3g} above cut-off {cfg.lambda_cutoff:.3g} "
                f"after {iteration} iterations",
                solution=_finish(pt, lp, iteration, damping_used))

        normal = NormalEquations(lp.A, pt.x, pt.t, retry_shift=cfg.damping)
        damping_used = max(damping_used, normal.alpha)
        if cfg.predictor_corrector:
            affine = _direction(lp, pt, normal, 0.0, 1.0)
            a = step_size(pt, affine, 1.0)
            gamma = (1 - a) ** 2 * min(0.1, 1 - a)
            step_eta = 1.0 - gamma
            correction = (affine[0] * affine[2], affine[3] * affine[4])
            direction = _direction(lp, pt, normal, gamma, step_eta, correction)
        else:
            step_eta = eta
            direction = _direction(lp, pt, normal, cfg.gamma, eta)
        if not all(np.all(np.isfinite(d)) for d in direction):
            raise NumericalFailure("non-finite search direction")

        omega = step_size(pt, direction, cfg.step_fraction)
        landed = False
        if cfg.land_on_cutoff:
            omega_land = _landing_step(pt, direction, cfg.lambda_cutoff, k)
            if omega_land is not None and omega_land <= omega:
                omega, landed = omega_land, True
        pt = _advance(pt, direction, omega, k, step_eta)
        iteration += 1
        if not pt.is_interior():
            raise NumericalFailure("iterate left the interior (round-off in the step)")
        if pt.tau < 1e-10 and pt.kappa > 1e-6:
            raise _certificate(pt, lp)
        if landed:
            break

    if pt.tau < 1e-6 * pt.kappa:
        raise _certificate(pt, lp)
    n_center = 0
    if cfg.center_steps > 0:
        pt, n_center, _ = _center(lp, pt, cfg)
    return _finish(pt, lp, iteration, damping_used, n_center)
