"""1d finite element operators with fractional spectral calculus.

Piecewise-linear elements on an interval, optionally carrying the radial
volume weight r**(d-1) so that radially symmetric problems in d ambient
dimensions reduce to one dimension.  Mass and stiffness forms are assembled
over the unconstrained ("free") nodes; fixed endpoint values enter through a
precomputed load offset.  Fractional powers of the operator are spectral:
with the generalized eigenpairs K phi = lambda M phi (M-orthonormal), the
order-s stiffness is A_s = (M Phi) Lambda**s (M Phi)^T, which reproduces
A_0 = M and A_1 = K exactly up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericError

_EIG_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Mesh1D:
    """Nodes of a 1d interval mesh plus geometry weight and endpoint data.

    nodes: strictly increasing coordinates, length n_cells + 1.
    geometry: "line" (unit weight) or "radial" (weight r**(dim - 1)).
    dim: ambient dimension; only meaningful for radial geometry.
    dirichlet: (left, right) fixed endpoint values; None marks a free endpoint.
    """

    nodes: np.ndarray
    geometry: str = "line"
    dim: int = 1
    dirichlet: tuple[float | None, float | None] = (None, None)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ConfigurationError("mesh needs at least 2 cells (3 nodes)")
        if not np.all(np.diff(nodes) > 0):
            raise ConfigurationError("mesh nodes must be strictly increasing")
        if self.geometry not in ("line", "radial"):
            raise ConfigurationError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "radial":
            if self.dim < 1:
                raise ConfigurationError("radial geometry needs dim >= 1")
            if nodes[0] != 0.0:
                raise ConfigurationError("radial mesh must start at r = 0")
            if self.dirichlet[0] is not None:
                raise ConfigurationError(
                    "r = 0 is a symmetry endpoint and cannot carry a Dirichlet value"
                )

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def free(self) -> np.ndarray:
        """Indices of unconstrained nodes."""
        idx = np.arange(self.nodes.size)
        keep = np.ones(self.nodes.size, dtype=bool)
        if self.dirichlet[0] is not None:
            keep[0] = False
        if self.dirichlet[1] is not None:
            keep[-1] = False
        return idx[keep]

    @property
    def n_free(self) -> int:
        return self.free.size

    def weight(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.geometry == "radial" and self.dim > 1:
            return x ** (self.dim - 1)
        return np.ones_like(x)

    def embed(self, values: np.ndarray, boundary: str = "data") -> np.ndarray:
        """Expand a free-node vector to all nodes.

        boundary="data" fills constrained slots with the Dirichlet values
        (states); boundary="zero" fills them with 0 (velocities, residuals).
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_free,):
            raise ConfigurationError("free-node vector has wrong length")
        full = np.zeros(self.nodes.size)
        full[self.free] = values
        if boundary == "data":
            if self.dirichlet[0] is not None:
                full[0] = self.dirichlet[0]
            if self.dirichlet[1] is not None:
                full[-1] = self.dirichlet[1]
        elif boundary != "zero":
            raise ConfigurationError(f"unknown boundary fill {boundary!r}")
        return full


def build_mesh(a, b, n_cells, geometry="line", dim=1,
               dirichlet=(None, None)) -> Mesh1D:
    """Uniform mesh of [a, b] with n_cells cells."""
    if not b > a:
        raise ConfigurationError(f"need b > a, got [{a}, {b}]")
    if n_cells < 2:
        raise ConfigurationError("need at least 2 cells")
    nodes = np.linspace(float(a), float(b), int(n_cells) + 1)
    return Mesh1D(nodes=nodes, geometry=geometry, dim=dim,
                  dirichlet=(dirichlet[0], dirichlet[1]))


def _assemble_all_nodes(mesh: Mesh1D):
    """Mass and stiffness over all nodes, Gauss quadrature exact for the
    polynomial weight against piecewise-linear products."""
    n = mesh.nodes.size
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    npts = max(2, (mesh.dim + 3) // 2)
    gx, gw = np.polynomial.legendre.leggauss(npts)
    for c in range(n - 1):
        xl, xr = mesh.nodes[c], mesh.nodes[c + 1]
        h = xr - xl
        x = 0.5 * (xl + xr) + 0.5 * h * gx
        w = 0.5 * h * gw * mesh.weight(x)
        wsum = w.sum()
        phi0 = (xr - x) / h
        phi1 = (x - xl) / h
        mass[c, c] += w @ (phi0 * phi0)
        mass[c + 1, c + 1] += w @ (phi1 * phi1)
        cross = w @ (phi0 * phi1)
        mass[c, c + 1] += cross
        mass[c + 1, c] += cross
        stiff[c, c] += wsum / h**2
        stiff[c + 1, c + 1] += wsum / h**2
        stiff[c, c + 1] -= wsum / h**2
        stiff[c + 1, c] -= wsum / h**2
    return mass, stiff


def assemble_forms(mesh: Mesh1D):
    """Free-node mass and stiffness forms (tridiagonal, symmetric)."""
    mass, stiff = _assemble_all_nodes(mesh)
    free = mesh.free
    return mass[np.ix_(free, free)], stiff[np.ix_(free, free)]


def spectral_decompose(M: np.ndarray, K: np.ndarray):
    """Generalized symmetric eigenpairs K phi = lambda M phi.

    Returns (lam, Phi) with lam ascending and Phi^T M Phi = identity.
    Eigenvector signs are fixed so the largest-magnitude entry is positive,
    which keeps runs reproducible across invocations.
    """
    try:
        lam, phi = scipy.linalg.eigh(K, M)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"generalized eigendecomposition failed: {exc}") from exc
    for k in range(phi.shape[1]):
        j = int(np.argmax(np.abs(phi[:, k])))
        if phi[j, k] < 0:
            phi[:, k] = -phi[:, k]
    resid = K @ phi - (M @ phi) * lam
    scale = (np.linalg.norm(K @ phi, axis=0)
             + (1.0 + np.abs(lam)) * np.linalg.norm(M @ phi, axis=0))
    worst = float(np.max(np.linalg.norm(resid, axis=0) / scale))
    if worst > _EIG_RESIDUAL_TOL:
        raise NumericError(
            f"eigenpair residual {worst:.3e} exceeds {_EIG_RESIDUAL_TOL:.1e}"
        )
    return lam, phi


@dataclass(frozen=True)
class OperatorSet:
    """Assembled forms, spectrum, and fractional stiffness for one mesh.

    Immutable after construction; shared freely across runs.  lift_load and
    lift_const carry the coupling of free nodes to fixed endpoint values
    (both zero when the Dirichlet data vanish); they use the local (order-1)
    stiffness and are only exercised with s = 1 in practice.
    """

    mesh: Mesh1D
    M: np.ndarray
    K: np.ndarray
    lam: np.ndarray
    Phi: np.ndarray
    s: float
    A_s: np.ndarray
    lumps: np.ndarray
    lift_load: np.ndarray
    lift_const: float
    mass_chol: tuple

    @property
    def n_free(self) -> int:
        return self.M.shape[0]

    def solve_mass(self, r: np.ndarray) -> np.ndarray:
        """M^{-1} r via the cached Cholesky factor.

        Skips the finiteness check: blowup detection is the caller's job and
        this sits on the solver's hot path.
        """
        return scipy.linalg.cho_solve(self.mass_chol, r, check_finite=False)


def build_operators(mesh: Mesh1D, s: float) -> OperatorSet:
    if s < 0:
        raise ConfigurationError("fractional order s must be >= 0")
    mass_all, stiff_all = _assemble_all_nodes(mesh)
    free = mesh.free
    constrained = np.setdiff1d(np.arange(mesh.nodes.size), free)
    M = mass_all[np.ix_(free, free)]
    K = stiff_all[np.ix_(free, free)]
    if constrained.size:
        gvals = np.array([
            mesh.dirichlet[0] if j == 0 else mesh.dirichlet[1]
            for j in constrained
        ], dtype=float)
        lift_load = stiff_all[np.ix_(free, constrained)] @ gvals
        lift_const = 0.5 * gvals @ stiff_all[np.ix_(constrained, constrained)] @ gvals
    else:
        lift_load = np.zeros(free.size)
        lift_const = 0.0
    lam, phi = spectral_decompose(M, K)
    mphi = M @ phi
    a_s = (mphi * np.maximum(lam, 0.0) ** s) @ mphi.T
    a_s = 0.5 * (a_s + a_s.T)
    # nodal quadrature weights: the full hat integrals int phi_j w dx, so the
    # lumped measure equals the domain measure minus the constrained-node lumps
    lumps = mass_all.sum(axis=1)[free]
    return OperatorSet(
        mesh=mesh, M=M, K=K, lam=lam, Phi=phi, s=float(s), A_s=a_s,
        lumps=lumps, lift_load=lift_load, lift_const=float(lift_const),
        mass_chol=scipy.linalg.cho_factor(M),
    )


def fractional_apply(ops: OperatorSet, u: np.ndarray) -> np.ndarray:
    """A_s u, the order-s stiffness applied to a free-node vector."""
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.n_free,):
        raise ConfigurationError("vector length does not match free nodes")
    return ops.A_s @ u


def seminorm_s(ops: OperatorSet, u: np.ndarray) -> float:
    """Order-s seminorm sqrt(u^T A_s u)."""
    u = np.asarray(u, dtype=float)
    q = float(u @ fractional_apply(ops, u))
    if q < -1e-12 * (1.0 + float(u @ u)):
        raise NumericError(f"quadratic form returned {q:.3e} < 0")
    return np.sqrt(max(q, 0.0))


def poincare_constant(ops: OperatorSet) -> float:
    """Sharp discrete constant C_s with ||u||_M <= C_s sqrt(u^T A_s u).

    Requires a constrained endpoint so the smallest eigenvalue is positive.
    """
    if ops.mesh.dirichlet[0] is None and ops.mesh.dirichlet[1] is None:
        raise ConfigurationError("Poincare constant needs a Dirichlet constraint")
    lam1 = float(ops.lam[0])
    if lam1 <= 0.0:
        raise ConfigurationError(f"smallest eigenvalue {lam1:.3e} is not positive")
    return lam1 ** (-ops.s / 2.0)
