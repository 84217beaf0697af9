"""Verification instruments: discrete Gronwall bound, energy-drift and
convergence studies, independent reference integrators, interface tracking,
interface-energy accounting, and no-contact residual checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, NumericError
from .operators import Mesh1D, OperatorSet
from .stepper import (SchemeConfig, Trajectory, _el_residual_vector,
                      effective_v0, run)

_GRONWALL_SLACK = 1e-12


def discrete_gronwall_bound(A: float, B: float, N: int) -> float:
    """Bound A * exp(B) for sequences with y_0 = 0 and
    y_n <= A + (B/N) * sum_{j<n} y_j."""
    if A < 0 or B < 0:
        raise ConfigurationError("Gronwall constants must be non-negative")
    if N < 1:
        raise ConfigurationError("need N >= 1")
    return float(A) * float(np.exp(B))


def check_gronwall_sequence(y, A: float, B: float) -> float:
    """Validate the Gronwall hypothesis for y and assert the bound.

    Returns A * exp(B).  Raises with the index of the first violation if the
    hypothesis fails; raises NumericError if the bound itself were exceeded
    (impossible for a genuine hypothesis-satisfying sequence).
    """
    y = np.asarray(y, dtype=float)
    N = y.size - 1
    bound = discrete_gronwall_bound(A, B, N)
    if y[0] != 0.0:
        raise ConfigurationError("hypothesis violated at index 0: y_0 must be 0")
    if np.any(y < 0):
        raise ConfigurationError(
            f"hypothesis violated at index {int(np.argmax(y < 0))}: negative term")
    partial = np.concatenate(([0.0], np.cumsum(y)[:-1]))
    rhs = A + (B / N) * partial
    bad = y > rhs + _GRONWALL_SLACK * (1.0 + np.abs(rhs))
    if np.any(bad):
        raise ConfigurationError(f"hypothesis violated at index {int(np.argmax(bad))}")
    if np.any(y > bound + _GRONWALL_SLACK * (1.0 + bound)):
        raise NumericError("sequence exceeds its Gronwall bound")
    return bound


def energy_drift(traj: Trajectory):
    """(max_i E_i - E_0, full drift series).  Negative drifts are legitimate:
    obstacle contact dissipates energy."""
    totals = traj.energies[:, 3]
    series = totals - totals[0]
    return float(series.max()), series


def oracle_recurrence(lambda_s: float, a0: float, a1: float, tau: float,
                      n: int) -> np.ndarray:
    """Exact per-mode solution of the scheme: series of n + 1 coefficients
    starting from (a0, a1) with a_i = (2 a_{i-1} - a_{i-2}) / (1 + tau^2 * lambda_s).

    Bitwise independent of the minimization path, so it can serve as an
    oracle for eigenmode runs.
    """
    if lambda_s < 0:
        raise ConfigurationError("lambda_s must be >= 0")
    out = np.empty(n + 1)
    out[0] = a0
    if n >= 1:
        out[1] = a1
    denom = 1.0 + tau**2 * lambda_s
    for i in range(2, n + 1):
        out[i] = (2.0 * out[i - 1] - out[i - 2]) / denom
    return out


@dataclass(frozen=True)
class MolReference:
    """States of the semidiscrete system at the scheme's grid times."""

    times: np.ndarray
    states: np.ndarray      # (n + 1, n_free)
    velocities: np.ndarray

    def terminal(self) -> np.ndarray:
        return self.states[-1]


def oracle_mol(config: SchemeConfig, substeps: int = 50) -> MolReference:
    """Independent reference: classical fourth-order one-step integration of
    u'' = -M^{-1}(A_s u + load + lumped W'(u)) at substep tau/substeps.

    Uses the same effective initial velocity as the scheme so both
    discretizations target the same trajectory.
    """
    if config.obstacle is not None:
        raise ConfigurationError("reference integrator handles obstacle-free runs only")
    config.validate()
    ops = config.ops
    n = config.n_steps
    tau = config.T / n
    h = tau / substeps

    def accel(u):
        return -ops.solve_mass(ops.A_s @ u + ops.lift_load
                               + ops.lumps * config.potential.gradient(u))

    u = np.array(config.u0, dtype=float)
    v = effective_v0(config)
    states = np.empty((n + 1, ops.n_free))
    vels = np.empty_like(states)
    states[0], vels[0] = u, v
    for i in range(1, n + 1):
        for _ in range(substeps):
            k1u, k1v = v, accel(u)
            k2u, k2v = v + 0.5 * h * k1v, accel(u + 0.5 * h * k1u)
            k3u, k3v = v + 0.5 * h * k2v, accel(u + 0.5 * h * k2u)
            k4u, k4v = v + h * k3v, accel(u + h * k3u)
            u = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NumericError(f"reference integration blew up before step {i}")
        states[i], vels[i] = u, v
    return MolReference(times=tau * np.arange(n + 1), states=states,
                        velocities=vels)


@dataclass(frozen=True)
class RefinementRow:
    n: int
    tau: float
    error: float        # terminal M-norm gap against the reference
    max_drift: float


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    error_slope: float  # fitted exponent of error ~ tau^p
    drift_slope: float

    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    def drifts(self) -> np.ndarray:
        return np.array([r.max_drift for r in self.rows])


def _loglog_slope(taus, values) -> float:
    mask = np.asarray(values) > 0
    if mask.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(np.asarray(taus)[mask]),
                            np.log(np.asarray(values)[mask]), 1)[0])


def convergence_study(base_config: SchemeConfig, n_list) -> ConvergenceReport:
    """Rerun the scheme over a refinement ladder and compare terminal states
    to the reference integrator in the M-norm.

    The reference integrator cannot follow a constrained evolution, so for
    obstacle runs the error column is nan and only the drift column is
    meaningful.  On a failing refinement the original error is re-raised with
    the rows completed so far attached as `partial_rows`.
    """
    n_list = list(n_list)
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError("need at least 3 strictly increasing refinement levels")
    ops = base_config.ops
    rows = []
    for n in n_list:
        cfg = replace(base_config, n_steps=int(n))
        try:
            traj = run(cfg)
            ref = oracle_mol(cfg) if cfg.obstacle is None else None
        except Exception as exc:
            exc.partial_rows = tuple(rows)
            raise
        if ref is None:
            err = float("nan")
        else:
            gap = traj.u(n) - ref.terminal()
            err = float(np.sqrt(max(gap @ (ops.M @ gap), 0.0)))
        rows.append(RefinementRow(n=int(n), tau=cfg.T / n, error=err,
                                  max_drift=energy_drift(traj)[0]))
    taus = [r.tau for r in rows]
    return ConvergenceReport(
        rows=tuple(rows),
        error_slope=_loglog_slope(taus, [r.error for r in rows]),
        drift_slope=_loglog_slope(taus, [max(r.max_drift, 0.0) for r in rows]),
    )


def interface_radius(mesh: Mesh1D, u: np.ndarray):
    """Innermost sign change of the nodal profile u (all nodes), located by
    linear interpolation between the bracketing nodes; None without one."""
    u = np.asarray(u, dtype=float)
    if u.shape != mesh.nodes.shape:
        raise ConfigurationError("expected one value per mesh node")
    crossings = []
    for j in range(u.size - 1):
        if u[j] == 0.0:
            crossings.append(float(mesh.nodes[j]))
        elif u[j] * u[j + 1] < 0.0:
            h = mesh.nodes[j + 1] - mesh.nodes[j]
            crossings.append(float(mesh.nodes[j] + h * u[j] / (u[j] - u[j + 1])))
    if u[-1] == 0.0:
        crossings.append(float(mesh.nodes[-1]))
    if not crossings:
        return None
    if len(crossings) > 1:
        warnings.warn(f"{len(crossings)} sign changes; reporting the innermost",
                      RuntimeWarning, stacklevel=2)
    return crossings[0]


def cosine_reference(R0: float, t: float) -> float:
    """Shrinking-interface reference radius R0 * cos(t / R0), defined while
    the interface exists (0 <= t < R0 * pi / 2)."""
    if R0 <= 0:
        raise ConfigurationError("R0 must be positive")
    if not 0.0 <= t < R0 * np.pi / 2.0:
        raise ValueError(f"time {t} outside [0, R0*pi/2)")
    return float(R0 * np.cos(t / R0))


@dataclass(frozen=True)
class InterfaceTrace:
    """Measured zero-crossing radii against the cosine reference."""

    times: np.ndarray
    measured: np.ndarray   # nan where no crossing was found
    reference: np.ndarray
    rel_errors: np.ndarray


def track_interface(traj: Trajectory, r0: float, stride: int = 1) -> InterfaceTrace:
    """Sample the interface radius every `stride` steps while the reference
    is defined, always including the final step."""
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    mesh = traj.config.ops.mesh
    t_max = r0 * np.pi / 2.0
    times, meas, refs, rel = [], [], [], []
    steps = list(range(0, traj.n_steps + 1, stride))
    if steps[-1] != traj.n_steps:
        steps.append(traj.n_steps)
    for i in steps:
        t = i * traj.tau
        if t >= t_max:
            break
        radius = interface_radius(mesh, mesh.embed(traj.u(i)))
        ref = cosine_reference(r0, t)
        times.append(t)
        meas.append(np.nan if radius is None else radius)
        refs.append(ref)
        rel.append(np.nan if radius is None else abs(radius - ref) / r0)
    return InterfaceTrace(times=np.array(times), measured=np.array(meas),
                          reference=np.array(refs), rel_errors=np.array(rel))


def _require_gl(traj: Trajectory, eps: float, ops: OperatorSet):
    pot = traj.config.potential
    if pot.kind != "gl_scaled":
        raise ConfigurationError("needs an eps-scaled potential")
    if pot.m != 1:
        raise ConfigurationError("interface accounting is one-component only")
    if ops.s != 1.0:
        raise ConfigurationError("interface accounting assumes s = 1")
    if abs(eps - pot.eps) > 1e-12 * pot.eps:
        raise ConfigurationError(f"eps {eps} does not match the potential ({pot.eps})")


def gl_energy_accounting(traj: Trajectory, eps: float, ops: OperatorSet):
    """(series of eps * E_i, space-time interface-energy sum).

    The space-time sum accumulates eps * |grad_{t,x} u|^2 + W(u)/eps over the
    piecewise-constant interpolant: tau * sum_i [eps * (v_i^T M v_i
    + |grad u_i|^2) + eps * (scaled potential integral)].
    """
    _require_gl(traj, eps, ops)
    kin = traj.energies[:, 0]
    frac = traj.energies[:, 1]
    pot = traj.energies[:, 2]
    scaled = eps * traj.energies[:, 3]
    mm = traj.tau * float(np.sum(eps * (2.0 * kin[1:] + 2.0 * frac[1:] + pot[1:])))
    return scaled, mm


def lagrangian_density(traj: Trajectory, i: int, eps: float,
                       ops: OperatorSet) -> np.ndarray:
    """Scaled Lagrange density eps * [(-v^2 + |grad u|^2)/2 + W(u)/eps^2] at
    every node, with |grad u|^2 averaged onto nodes from cell gradients."""
    _require_gl(traj, eps, ops)
    mesh = ops.mesh
    u_full = mesh.embed(traj.u(i))
    v_full = mesh.embed(traj.v(i), boundary="zero")
    cell_grad_sq = (np.diff(u_full) / np.diff(mesh.nodes)) ** 2
    grad_sq = np.empty_like(u_full)
    grad_sq[0] = cell_grad_sq[0]
    grad_sq[-1] = cell_grad_sq[-1]
    grad_sq[1:-1] = 0.5 * (cell_grad_sq[:-1] + cell_grad_sq[1:])
    dens = 0.5 * (-v_full**2 + grad_sq) + traj.config.potential.value(u_full)
    return eps * dens


def no_contact_check(traj: Trajectory, g: np.ndarray, delta: float):
    """(mask of nodes staying delta above the obstacle at every step,
    max masked Euler-Lagrange residual over all steps).

    The masked residual uses the lumped mass weights so it stays local to the
    mask; it is bounded by the solver tolerance wherever contact never
    happened.  An empty mask reports 0.
    """
    g = np.asarray(g, dtype=float)
    ops = traj.config.ops
    states = traj.states[1:]     # u_0..u_n
    mask = np.min(states - g, axis=0) > delta
    if not np.any(mask):
        return mask, 0.0
    worst = 0.0
    for i in range(1, traj.n_steps + 1):
        r = _el_residual_vector(ops, traj.config.potential, traj, i)
        val = float(np.sqrt(np.sum(r[mask] ** 2 / ops.lumps[mask])))
        worst = max(worst, val)
    return mask, worst
