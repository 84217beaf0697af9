"""Variational implicit time stepping for u_tt + A_s u + W'(u) = 0.

Each step minimizes the functional

    J(u) = |u - 2 u_prev + u_prevprev|_M^2 / (2 tau^2)
           + (1/2) u^T A_s u + sum_j m_j W(u_j)

over the free nodes, optionally restricted to the set {u >= g} for a nodal
obstacle g.  The potential integral uses lumped-mass quadrature (row sums
m_j of M), which keeps its gradient diagonal and makes the nodal max with g
the exact projection in the lumped metric.  Minimization is projected
gradient descent with multiplicative step adaptation: grow the step on
decrease, shrink and retry otherwise.  An optional spectral preconditioner
(obstacle-free only) rescales eigencomponents by 1/(1/tau^2 + lambda^s),
which is the exact inverse Hessian of the quadratic part.

Velocities are backward differences v_i = (u_i - u_{i-1})/tau; the history
starts from u_{-1} = u0 - tau*v0, or from a mode-truncated v0 when the
smoothed initialization is selected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError, ConfigurationError, SolverFailure
from .operators import OperatorSet
from .potentials import LIPSCHITZ_RANGE, Potential

_AUTO_TOL_SCALE = 1e-9
_DEFAULT_MAX_ITER = 50_000
# Near the minimizer the true decrease of J drops below what double precision
# resolves in a value of size |J|, while the gradient residual still carries
# signal.  Proposals whose J ties within this slack are therefore accepted
# when they also reduce the residual; without the tie rule the descent stalls
# several orders of magnitude above tolerance.
_TIE_SLACK = 1e-13


@dataclass(frozen=True)
class SolverParams:
    """Inner projected-gradient solver controls.

    tol: absolute stopping threshold on the mass-weighted projected-gradient
        norm; None resolves per step to 1e-9 * (1 + residual at warm start).
    step0: initial step size; None resolves to tau^2 (plain gradient) or
        1.0 (spectral preconditioning, where the natural step is unit).
    precondition: "off" or "spectral"; spectral requires an obstacle-free run.
    """

    tol: float | None = None
    max_iter: int = _DEFAULT_MAX_ITER
    step0: float | None = None
    grow: float = 1.2
    shrink: float = 0.5
    precondition: str = "off"

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not (self.grow > 1.0 > self.shrink > 0.0):
            raise ConfigurationError("need grow > 1 > shrink > 0")
        if self.precondition not in ("off", "spectral"):
            raise ConfigurationError(f"unknown preconditioner {self.precondition!r}")


@dataclass
class SchemeConfig:
    """Complete description of one run."""

    T: float
    n_steps: int
    ops: OperatorSet
    potential: Potential
    u0: np.ndarray
    v0: np.ndarray
    obstacle: np.ndarray | None = None
    init_mode: str = "standard"
    k_max: int | None = None
    solver: SolverParams = field(default_factory=SolverParams)

    def validate(self):
        if not self.T > 0:
            raise ConfigurationError("horizon T must be positive")
        if self.n_steps < 2:
            raise ConfigurationError("need n_steps >= 2")
        nf = self.ops.n_free
        for name, vec in (("u0", self.u0), ("v0", self.v0)):
            if np.shape(vec) != (nf,):
                raise ConfigurationError(f"{name} must have length {nf}")
        if self.init_mode not in ("standard", "smoothed"):
            raise ConfigurationError(f"unknown init_mode {self.init_mode!r}")
        if self.obstacle is not None:
            if self.potential.m != 1:
                raise ConfigurationError("obstacle runs require a one-component potential")
            if np.shape(self.obstacle) != (nf,):
                raise ConfigurationError(f"obstacle must have length {nf}")
            if np.any(self.u0 < self.obstacle):
                raise ConfigurationError("u0 must satisfy u0 >= g at every node")
            if self.solver.precondition != "off":
                raise ConfigurationError(
                    "spectral preconditioning and obstacle projection do not commute"
                )


class Trajectory:
    """States u_i (i = -1..n), derived velocities, and per-step records."""

    def __init__(self, config: SchemeConfig, tau: float, states: np.ndarray,
                 iterations: np.ndarray, residuals: np.ndarray, tols: np.ndarray):
        self.config = config
        self.tau = float(tau)
        self.states = states              # (n + 2, n_free), row i+1 <-> u_i
        self.iterations = iterations      # (n,), solve stats for steps 1..n
        self.residuals = residuals
        self.tols = tols
        n = config.n_steps
        self.energies = np.empty((n + 1, 4))
        for i in range(n + 1):
            self.energies[i] = energy(self, i)

    @property
    def n_steps(self) -> int:
        return self.config.n_steps

    def u(self, i: int) -> np.ndarray:
        if not -1 <= i <= self.n_steps:
            raise ConfigurationError(f"state index {i} out of range")
        return self.states[i + 1]

    def v(self, i: int) -> np.ndarray:
        if not 0 <= i <= self.n_steps:
            raise ConfigurationError(f"velocity index {i} out of range")
        return (self.states[i + 1] - self.states[i]) / self.tau

    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class StepResult:
    u: np.ndarray
    iterations: int
    residual: float
    tol: float
    j_path: tuple  # functional values along accepted iterates


def step_functional(ops: OperatorSet, potential: Potential, u, u1, u2,
                    tau: float) -> float:
    """J(u) for inertia history (u1, u2) = (previous, one before)."""
    u = np.asarray(u, dtype=float)
    return _grad_and_value(ops, potential, u, np.asarray(u1, dtype=float),
                           np.asarray(u2, dtype=float), tau)[0]


def _grad_and_value(ops, potential, u, u1, u2, tau):
    d = u - 2.0 * u1 + u2
    md = ops.M @ d
    au = ops.A_s @ u
    j = (float(d @ md) / (2.0 * tau**2)
         + 0.5 * float(u @ au) + float(u @ ops.lift_load) + ops.lift_const
         + float(ops.lumps @ potential.value(u)))
    grad = md / tau**2 + au + ops.lift_load + ops.lumps * potential.gradient(u)
    return j, grad


def _stationarity(ops, u, grad, obstacle) -> float:
    """Mass-weighted norm of the projected gradient; under an obstacle the
    maximum of the projected norm, the worst negative dual density, and the
    normalized complementarity product (all must vanish at a minimizer)."""
    if obstacle is None:
        return float(np.sqrt(max(grad @ ops.solve_mass(grad), 0.0)))
    active = u <= obstacle
    pg = np.where(active, np.minimum(grad, 0.0), grad)
    pg_norm = float(np.sqrt(max(pg @ ops.solve_mass(pg), 0.0)))
    dual_violation = max(0.0, -float(np.min(grad / ops.lumps)))
    slack = u - obstacle
    compl = abs(float(grad @ slack)) / (1.0 + np.sqrt(float(slack @ (ops.M @ slack))))
    return max(pg_norm, dual_violation, compl)


def minimize_step(ops: OperatorSet, potential: Potential, u1, u2, tau: float,
                  obstacle=None, solver: SolverParams = SolverParams(),
                  warm_start=None) -> StepResult:
    """Minimize the step functional from a feasible warm start.

    Raises SolverFailure (carrying the best iterate) if max_iter is reached
    above tolerance, and BlowupError on NaN in the functional or gradient.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    u = np.array(u1 if warm_start is None else warm_start, dtype=float)
    if obstacle is not None and np.any(u < obstacle):
        raise ConfigurationError("warm start is infeasible for the obstacle")

    j_cur, grad = _grad_and_value(ops, potential, u, u1, u2, tau)
    if not (np.isfinite(j_cur) and np.all(np.isfinite(grad))):
        raise BlowupError("non-finite functional or gradient at warm start")
    res = _stationarity(ops, u, grad, obstacle)
    tol = solver.tol if solver.tol is not None else _AUTO_TOL_SCALE * (1.0 + res)

    spectral = solver.precondition == "spectral"
    if spectral and obstacle is not None:
        raise ConfigurationError("spectral preconditioning requires an obstacle-free step")
    alpha = solver.step0 if solver.step0 is not None else (1.0 if spectral else tau**2)
    scale = (1.0 / (1.0 / tau**2 + np.maximum(ops.lam, 0.0) ** ops.s)
             if spectral else None)

    iters = 0
    j_path = [j_cur]
    while res > tol:
        if iters >= solver.max_iter:
            raise SolverFailure(
                f"no convergence in {solver.max_iter} iterations "
                f"(residual {res:.3e} > tol {tol:.3e})",
                best=u, residual=res, iterations=iters)
        direction = ops.Phi @ (scale * (ops.Phi.T @ grad)) if spectral else grad
        candidate = u - alpha * direction
        if obstacle is not None:
            candidate = np.maximum(candidate, obstacle)
        j_new, grad_new = _grad_and_value(ops, potential, candidate, u1, u2, tau)
        if not (np.isfinite(j_new) and np.all(np.isfinite(grad_new))):
            raise BlowupError("non-finite functional or gradient during descent")
        iters += 1
        res_new = _stationarity(ops, candidate, grad_new, obstacle)
        tie = j_new <= j_cur + _TIE_SLACK * (1.0 + abs(j_cur))
        if j_new < j_cur or (tie and res_new <= res):
            u, j_cur, grad, res = candidate, j_new, grad_new, res_new
            alpha *= solver.grow
            j_path.append(j_cur)
        else:
            alpha *= solver.shrink
    return StepResult(u=u, iterations=iters, residual=res, tol=tol,
                      j_path=tuple(j_path))


def effective_v0(config: SchemeConfig) -> np.ndarray:
    """Initial velocity actually used: v0, or its truncation onto leading
    eigenmodes in smoothed mode (cutoff from k_max, else the smallest band
    carrying 99.9% of the M-norm of v0)."""
    if config.init_mode != "smoothed":
        return np.asarray(config.v0, dtype=float)
    ops = config.ops
    coeff = ops.Phi.T @ (ops.M @ config.v0)
    total = float(np.sqrt(coeff @ coeff))
    if config.k_max is not None:
        k = min(int(config.k_max), coeff.size)
        if k < 1:
            raise ConfigurationError("k_max must be >= 1")
    elif total == 0.0:
        return np.zeros_like(coeff)
    else:
        norms = np.sqrt(np.cumsum(coeff * coeff))
        k = int(np.searchsorted(norms, 0.999 * total)) + 1
        k = min(k, coeff.size)
    return ops.Phi[:, :k] @ coeff[:k]


def run(config: SchemeConfig) -> Trajectory:
    """Execute the time loop and return the full trajectory.

    Solver errors are re-raised with the failing step index attached.
    """
    config.validate()
    ops = config.ops
    n = config.n_steps
    tau = config.T / n
    nf = ops.n_free

    v0n = effective_v0(config)
    states = np.zeros((n + 2, nf))
    states[0] = config.u0 - tau * v0n   # u_{-1}
    states[1] = config.u0
    iterations = np.zeros(n, dtype=int)
    residuals = np.zeros(n)
    tols = np.zeros(n)

    range_warned = False
    for i in range(1, n + 1):
        try:
            result = minimize_step(
                ops, config.potential, u1=states[i], u2=states[i - 1], tau=tau,
                obstacle=config.obstacle, solver=config.solver,
                warm_start=states[i])
        except SolverFailure as exc:
            raise SolverFailure(f"step {i}: {exc}", best=exc.best,
                                residual=exc.residual, iterations=exc.iterations,
                                step=i) from exc
        except BlowupError as exc:
            raise BlowupError(f"step {i}: {exc}", step=i) from exc
        states[i + 1] = result.u
        iterations[i - 1] = result.iterations
        residuals[i - 1] = result.residual
        tols[i - 1] = result.tol
        if not range_warned and np.max(np.abs(result.u)) > LIPSCHITZ_RANGE:
            warnings.warn(
                "nodal values left [-2, 2]; the Lipschitz certificate of the "
                "potential gradient no longer covers the iterates",
                RuntimeWarning, stacklevel=2)
            range_warned = True
    return Trajectory(config, tau, states, iterations, residuals, tols)


def energy(traj: Trajectory, i: int):
    """(kinetic, fractional, potential, total) at step i (0 <= i <= n)."""
    ops = traj.config.ops
    u = traj.u(i)
    v = traj.v(i)
    kin = 0.5 * float(v @ (ops.M @ v))
    frac = (0.5 * float(u @ (ops.A_s @ u)) + float(u @ ops.lift_load)
            + ops.lift_const)
    pot = float(ops.lumps @ traj.config.potential.value(u))
    return kin, frac, pot, kin + frac + pot


def eval_interpolants(traj: Trajectory, t: float):
    """(piecewise-constant state, piecewise-linear state, velocity) at time t.

    The constant interpolant takes the value u_i on (t_{i-1}, t_i] and
    u_{-1} at t = -tau; the linear one blends u_{i-1} and u_i on the same
    interval; the velocity is the backward difference v_i there.
    """
    tau, n = traj.tau, traj.n_steps
    fuzz = 1e-9 * tau
    if not (-tau - fuzz <= t <= traj.config.T + fuzz):
        raise ValueError(f"time {t} outside [-tau, T]")
    if t <= -tau + fuzz:
        return traj.u(-1), traj.u(-1), traj.v(0)
    i = int(np.ceil(t / tau - 1e-9))
    i = min(max(i, 0), n)
    theta = (t - (i - 1) * tau) / tau
    u_bar = traj.u(i)
    u_lin = theta * traj.u(i) + (1.0 - theta) * traj.u(i - 1)
    return u_bar, u_lin, traj.v(i)


def _el_residual_vector(ops, potential, traj, i):
    u, u1, u2 = traj.u(i), traj.u(i - 1), traj.u(i - 2)
    return (ops.M @ (u - 2.0 * u1 + u2) / traj.tau**2
            + ops.A_s @ u + ops.lift_load + ops.lumps * potential.gradient(u))


def el_residual(ops: OperatorSet, potential: Potential, traj: Trajectory,
                i: int) -> float:
    """Mass-weighted norm of the discrete Euler-Lagrange residual at step i.

    At most the solver tolerance after a converged obstacle-free step.
    """
    if not 1 <= i <= traj.n_steps:
        raise ConfigurationError(f"step index {i} out of range")
    r = _el_residual_vector(ops, potential, traj, i)
    return float(np.sqrt(max(r @ ops.solve_mass(r), 0.0)))


def vi_residuals(ops: OperatorSet, potential: Potential, traj: Trajectory,
                 i: int, g: np.ndarray):
    """Variational-inequality residuals at step i of an obstacle run.

    Returns (min_dual, complementarity): the smallest residual density
    (lumped-mass scaling, must be >= -tol) and |r . (u_i - g)| (must be
    <= tol * (1 + |u_i - g|_M)).  Thresholds are enforced by tests.
    """
    if not 1 <= i <= traj.n_steps:
        raise ConfigurationError(f"step index {i} out of range")
    r = _el_residual_vector(ops, potential, traj, i)
    min_dual = float(np.min(r / ops.lumps))
    complementarity = abs(float(r @ (traj.u(i) - g)))
    return min_dual, complementarity
