"""Reference-configuration elasticity: St. Venant-Kirchhoff and linear
models, P1 elements, analytic-tangent Newton.

The 2D reduction is interpreted as plane strain, so the 3D Lame-parameter
formulas apply unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, region_boundary_edges, eval_field
from .geometry import tri_rule, seg_rule
from .linalg import SparseSystem, apply_dirichlet, solve_direct

STVK = "stvk"
LINEAR = "linear"

_I2 = np.eye(2)


class InvertedElementError(RuntimeError):
    """det F <= 0 somewhere during assembly."""


class NewtonError(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class Material:
    """Elastic material with Lame parameters mu, lam."""
    model: str = STVK
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.model not in (STVK, LINEAR):
            raise ValueError(f"unknown material model {self.model!r}")
        if self.mu <= 0.0 or self.lam <= 0.0:
            raise ValueError("Lame parameters must be positive")

    @classmethod
    def from_young_poisson(cls, E, nu, model=STVK):
        mu = E / (2.0 + 2.0 * nu)
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return cls(model, mu, lam)


def strain_energy(F, material):
    """Strain energy density (St. Venant-Kirchhoff only)."""
    F = np.asarray(F, float)
    E = 0.5 * (F.T @ F - _I2)
    return material.mu * np.trace(E @ E) + 0.5 * material.lam * np.trace(E) ** 2


def first_piola(F, material):
    """First Piola-Kirchhoff stress for a 2x2 deformation gradient."""
    F = np.asarray(F, float)
    if material.model == STVK:
        if np.linalg.det(F) <= 0.0:
            raise InvertedElementError("det F <= 0")
        E = 0.5 * (F.T @ F - _I2)
        S = 2.0 * material.mu * E + material.lam * np.trace(E) * _I2
        return F @ S
    eps = 0.5 * ((F - _I2) + (F - _I2).T)
    return 2.0 * material.mu * eps + material.lam * np.trace(eps) * _I2


def piola_tangent(F, material, dF):
    """Directional derivative of first_piola at F in direction dF."""
    F = np.asarray(F, float)
    dF = np.asarray(dF, float)
    if material.model == STVK:
        E = 0.5 * (F.T @ F - _I2)
        S = 2.0 * material.mu * E + material.lam * np.trace(E) * _I2
        dE = 0.5 * (F.T @ dF + dF.T @ F)
        dS = 2.0 * material.mu * dE + material.lam * np.trace(dE) * _I2
        return dF @ S + F @ dS
    deps = 0.5 * (dF + dF.T)
    return 2.0 * material.mu * deps + material.lam * np.trace(deps) * _I2


@dataclass
class SolidProblem:
    """Solid equilibrium problem on (a tagged region of) a reference mesh.

    ``interface_load`` is a nodal functional over mesh vertices, (nv, 2),
    typically produced by the fluid traction transfer; ``dirichlet`` maps
    exterior boundary markers to displacement callbacks and wins over any
    nodal data at shared vertices.  ``dirichlet_nodes`` prescribes values
    directly at vertices (used by the mesh-motion problem).
    """
    mesh: Mesh
    material: Material
    region_tag: int | None = None
    body_force: object = None
    dirichlet: dict = field(default_factory=dict)
    dirichlet_nodes: tuple = ()          # (node_ids, values (k, 2))
    neumann: dict = field(default_factory=dict)
    interface_load: np.ndarray | None = None
    quad_order: int = 2

    def __post_init__(self):
        if self.region_tag is None:
            self.cells = np.arange(self.mesh.nc)
        else:
            self.cells = self.mesh.region_cells(self.region_tag)
        active = np.zeros(self.mesh.nv, dtype=bool)
        if len(self.cells):
            active[self.mesh.cells[self.cells].ravel()] = True
        self.vmap = np.full(self.mesh.nv, -1, dtype=np.int64)
        self.vmap[active] = np.arange(active.sum())
        self.nactive = int(active.sum())
        self.ndof = 2 * self.nactive
        self._collect_bcs()

    def _collect_bcs(self):
        cdofs = {}
        if self.region_tag is None:
            edges = [(int(i), int(j), None, int(m))
                     for (i, j), m in zip(self.mesh.boundary_edges,
                                          self.mesh.boundary_markers)]
        else:
            edges = region_boundary_edges(self.mesh, self.region_tag)
        self._neumann_edges = []
        for i, j, _cell, kind in edges:
            if isinstance(kind, tuple):
                continue  # interface with another region: Neumann side
            g = self.dirichlet.get(kind)
            if g is not None:
                for v in (i, j):
                    val = np.asarray(g(self.mesh.vertices[v]), float)
                    for c in range(2):
                        cdofs[2 * self.vmap[v] + c] = val[c]
            t = self.neumann.get(kind)
            if t is not None:
                self._neumann_edges.append((i, j, t))
        if self.dirichlet_nodes:
            nodes, values = self.dirichlet_nodes
            for v, val in zip(nodes, values):
                if self.vmap[v] < 0:
                    raise ValueError(f"dirichlet node {v} not in the solid region")
                for c in range(2):
                    cdofs.setdefault(2 * self.vmap[v] + c, float(val[c]))
        self.constrained_dofs = np.array(sorted(cdofs), dtype=np.int64)
        self.constrained_values = np.array([cdofs[d] for d in self.constrained_dofs])

    def scatter(self, U):
        """Active dof vector -> full (nv, 2) nodal field (zeros off-region)."""
        out = np.zeros((self.mesh.nv, 2))
        act = self.vmap >= 0
        out[act, 0] = U[2 * self.vmap[act]]
        out[act, 1] = U[2 * self.vmap[act] + 1]
        return out

    def gather(self, field_nodal):
        U = np.zeros(self.ndof)
        act = self.vmap >= 0
        U[2 * self.vmap[act]] = field_nodal[act, 0]
        U[2 * self.vmap[act] + 1] = field_nodal[act, 1]
        return U


def assemble_solid(problem, u_current):
    """Residual vector and analytic tangent at the current displacement.

    ``u_current`` is an active dof vector; the residual pairs internal
    forces against body force, edge tractions and the interface load.
    """
    mesh = problem.mesh
    mat = problem.material
    U = np.asarray(u_current, float)
    R = np.zeros(problem.ndof)
    K = SparseSystem(problem.ndof)

    for cell in problem.cells:
        cell = int(cell)
        g = mesh.p1_grads[cell]
        A = mesh.cell_areas[cell]
        conn = mesh.cells[cell]
        slots = problem.vmap[conn]
        dofs = np.column_stack([2 * slots, 2 * slots + 1])  # (3, 2)
        u_loc = np.column_stack([U[dofs[:, 0]], U[dofs[:, 1]]])
        gradu = u_loc.T @ g
        F = _I2 + gradu
        if mat.model == STVK and np.linalg.det(F) <= 0.0:
            raise InvertedElementError(f"inverted element: cell {cell}")
        P = first_piola(F, mat)
        R_loc = A * (g @ P.T)                 # (a, i)
        np.add.at(R, dofs.ravel(), R_loc.ravel())

        Kloc = np.empty((6, 6))
        for b in range(3):
            for j in range(2):
                dF = np.zeros((2, 2))
                dF[j, :] = g[b]
                dP = piola_tangent(F, mat, dF)
                col = A * (g @ dP.T)          # (a, i)
                Kloc[:, 2 * b + j] = col.ravel()
        loc = dofs.ravel()
        K.add(np.repeat(loc, 6), np.tile(loc, 6), Kloc.ravel())

    # external loads enter the residual with a minus sign
    if problem.body_force is not None:
        lam, w = tri_rule(problem.quad_order)
        for cell in problem.cells:
            cell = int(cell)
            pts = lam @ mesh.cell_points[cell]
            fv = eval_field(problem.body_force, pts)
            conn = mesh.cells[cell]
            slots = problem.vmap[conn]
            A = mesh.cell_areas[cell]
            rv = A * np.einsum("q,qa,qi->ai", w, lam, fv)
            dofs = np.column_stack([2 * slots, 2 * slots + 1])
            np.add.at(R, dofs.ravel(), -rv.ravel())

    if problem._neumann_edges:
        xs, ws = seg_rule(max(problem.quad_order, 2))
        for i, j, t in problem._neumann_edges:
            a, b = mesh.vertices[i], mesh.vertices[j]
            length = np.hypot(*(b - a))
            pts = a[None, :] + xs[:, None] * (b - a)[None, :]
            tv = eval_field(t, pts)
            lam = np.column_stack([1.0 - xs, xs])
            for vloc, v in enumerate((i, j)):
                for c in range(2):
                    R[2 * problem.vmap[v] + c] -= np.sum(ws * length * lam[:, vloc] * tv[:, c])

    if problem.interface_load is not None:
        L = problem.gather(np.asarray(problem.interface_load, float))
        R -= L

    return R, K


@dataclass
class SolidSolution:
    displacement: np.ndarray   # (nv, 2) nodal field
    iterations: int
    residuals: list


def solve_newton(problem, tol=1e-10, maxit=25, rtol=0.0, u0=None):
    """Full Newton iteration; converges when the free-dof residual norm
    drops below ``tol`` (or ``rtol`` times its initial value).

    ``u0`` is an optional nodal warm start; Dirichlet values always win.
    """
    U = np.zeros(problem.ndof) if u0 is None else problem.gather(np.asarray(u0))
    U[problem.constrained_dofs] = problem.constrained_values
    free = np.ones(problem.ndof, dtype=bool)
    free[problem.constrained_dofs] = False

    residuals = []
    updates = 0
    r0 = None
    for _ in range(maxit + 1):
        R, K = assemble_solid(problem, U)
        rnorm = float(np.linalg.norm(R[free])) if free.any() else 0.0
        residuals.append(rnorm)
        if r0 is None:
            r0 = rnorm
        if rnorm <= tol or (rtol > 0.0 and rnorm <= rtol * r0):
            return SolidSolution(problem.scatter(U), max(1, updates), residuals)
        if updates >= maxit:
            break
        K.rhs = -R
        K.set_dirichlet(problem.constrained_dofs,
                        np.zeros(len(problem.constrained_dofs)))
        delta = solve_direct(apply_dirichlet(K))
        U = U + delta
        updates += 1
    raise NewtonError(
        f"Newton did not converge in {maxit} iterations "
        f"(last residual {residuals[-1]:.3e})", residuals)


def p1_mass_matrix(mesh, cells=None):
    """Scalar P1 mass matrix over the given cells (full vertex numbering)."""
    if cells is None:
        cells = np.arange(mesh.nc)
    cells = np.asarray(cells, dtype=np.int64)
    rows, cols, vals = [], [], []
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for c in cells:
        conn = mesh.cells[c]
        M = base * mesh.cell_areas[c]
        rows.append(np.repeat(conn, 3))
        cols.append(np.tile(conn, 3))
        vals.append(M.ravel())
    if not rows:
        return sp.csr_matrix((mesh.nv, mesh.nv))
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.nv, mesh.nv)).tocsr()


def l2_norm(mesh, cells, field_nodal):
    """L2 norm of a nodal vector field over the given cells."""
    M = p1_mass_matrix(mesh, cells)
    field_nodal = np.asarray(field_nodal, float)
    if field_nodal.ndim == 1:
        field_nodal = field_nodal[:, None]
    return float(np.sqrt(sum(col @ (M @ col) for col in field_nodal.T)))


def h1_seminorm_error(mesh, cells, field_nodal, exact_grad, order=4):
    """H1 seminorm of (P1 field - exact field) over the given cells."""
    lam, w = tri_rule(order)
    total = 0.0
    for c in np.asarray(cells, dtype=np.int64):
        g = mesh.p1_grads[c]
        conn = mesh.cells[c]
        gradu = np.einsum("ai,aj->ij", field_nodal[conn], g)
        pts = lam @ mesh.cell_points[c]
        ge = eval_field(exact_grad, pts)
        diff = gradu[None, :, :] - ge
        total += mesh.cell_areas[c] * np.sum(w * np.einsum("qij,qij->q", diff, diff))
    return float(np.sqrt(total))


def l2_error(mesh, cells, field_nodal, exact, order=4):
    """L2 norm of (P1 field - exact field) over the given cells."""
    lam, w = tri_rule(order)
    total = 0.0
    for c in np.asarray(cells, dtype=np.int64):
        conn = mesh.cells[c]
        pts = lam @ mesh.cell_points[c]
        vals = lam @ field_nodal[conn]
        diff = vals - eval_field(exact, pts)
        total += mesh.cell_areas[c] * np.sum(w * np.einsum("qi,qi->q", diff, diff))
    return float(np.sqrt(total))


def h1_error(mesh, cells, field_nodal, exact, exact_grad, order=4):
    """Full H1 norm of (P1 field - exact field) over the given cells."""
    semi = h1_seminorm_error(mesh, cells, field_nodal, exact_grad, order)
    l2 = l2_error(mesh, cells, field_nodal, exact, order)
    return float(np.hypot(semi, l2))
