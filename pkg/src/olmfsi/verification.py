"""Manufactured solutions, convergence studies and the elastic-flap demo.

The coupled manufactured problem is a layered strip: a channel-like fluid
on (0, L) x (0, Rf) whose upper part moves, topped by an elastic layer of
thickness Hs.  The solid displacement is a prescribed vertical bump
H(x) = Hs * 2 x (1 - x); the fluid map stretches the strip vertically,
(x, y) -> (x, y (1 + H(x)/Rf)), and the fluid velocity is the Piola
transform of a reference parabolic profile, which keeps it exactly
divergence free on the deformed domain.  All forcing terms, the outflow
traction and the auxiliary interface traction (compensating the stress
jump the constructed fields leave behind) are derived symbolically.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .mesh import (Mesh, build_rect_mesh, build_tensor_mesh, FLUID, SOLID,
                   LEFT, RIGHT, BOTTOM, TOP, GAMMA_FF)
from .geometry import build_topology, seg_rule
from .stokes import CompositeSpace, FluidProblem, solve_stokes, error_norms, BG, FRONT
from .solid import Material, STVK, h1_error
from .coupling import FsiProblem, FsiConfig, fsi_fixed_point
from .vtkio import write_vtk_mesh, write_vtk_topology


# -- symbolic helpers -------------------------------------------------------


def _vec_field(xsym, ysym, exprs):
    fns = [sp.lambdify((xsym, ysym), e, "numpy") for e in exprs]

    def call(pts):
        pts = np.asarray(pts, float).reshape(-1, 2)
        cols = [np.broadcast_to(np.asarray(f(pts[:, 0], pts[:, 1]), float),
                                (len(pts),)) for f in fns]
        return np.stack(cols, axis=-1)

    call.vectorized = True
    return call


def _mat_field(xsym, ysym, exprs2x2):
    flat = [exprs2x2[i][j] for i in range(2) for j in range(2)]
    fns = [sp.lambdify((xsym, ysym), e, "numpy") for e in flat]

    def call(pts):
        pts = np.asarray(pts, float).reshape(-1, 2)
        cols = [np.broadcast_to(np.asarray(f(pts[:, 0], pts[:, 1]), float),
                                (len(pts),)) for f in fns]
        return np.stack(cols, axis=-1).reshape(len(pts), 2, 2)

    call.vectorized = True
    return call


def _scalar_field(xsym, ysym, expr):
    fn = sp.lambdify((xsym, ysym), expr, "numpy")

    def call(pts):
        pts = np.asarray(pts, float).reshape(-1, 2)
        return np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1]), float),
                               (len(pts),)).copy()

    call.vectorized = True
    return call


def _traction_field(xsym, ysym, sigma):
    """Callback (points, normal) -> sigma(points) . normal."""
    mat = _mat_field(xsym, ysym, [[sigma[0, 0], sigma[0, 1]],
                                  [sigma[1, 0], sigma[1, 1]]])

    def call(pts, n):
        return mat(pts) @ np.asarray(n, float)

    return call


# -- fluid-only manufactured problem ---------------------------------------


@dataclass
class ManufacturedStokes2d:
    """Smooth divergence-free field on the unit square with matching force."""
    viscosity: float
    u: object
    grad_u: object
    p: object
    f: object


def build_manufactured_stokes(viscosity=1.0):
    x, y = sp.symbols("x y", real=True)
    pi = sp.pi
    psi = sp.sin(pi * x) * sp.sin(pi * y) / pi
    ux = sp.diff(psi, y)
    uy = -sp.diff(psi, x)
    p = sp.sin(pi * x) * sp.sin(pi * y) - sp.Rational(4) / pi ** 2
    nu = sp.Float(viscosity)
    fx = -nu * (sp.diff(ux, x, 2) + sp.diff(ux, y, 2)) + sp.diff(p, x)
    fy = -nu * (sp.diff(uy, x, 2) + sp.diff(uy, y, 2)) + sp.diff(p, y)
    grad = [[sp.diff(ux, x), sp.diff(ux, y)], [sp.diff(uy, x), sp.diff(uy, y)]]
    return ManufacturedStokes2d(
        viscosity=viscosity,
        u=_vec_field(x, y, [ux, uy]),
        grad_u=_mat_field(x, y, grad),
        p=_scalar_field(x, y, p),
        f=_vec_field(x, y, [fx, fy]),
    )


# -- coupled manufactured problem -------------------------------------------


@dataclass
class ManufacturedFsi2d:
    """Closed-form fields of the layered-strip FSI reference problem."""
    L: float
    Rf: float
    R1: float
    Hs: float
    U0: float
    viscosity: float
    material: Material
    u: object
    grad_u: object
    p: object
    f: object
    fluid_traction: object       # (points, normal) -> traction of nu*grad(u) - p I
    us: object                   # solid displacement, reference coords
    grad_us: object
    f_solid: object
    t_a: object                  # auxiliary traction on the reference interface
    um: object                   # exact fluid-domain stretching displacement
    div_u: object


def build_manufactured(L=1.0, Rf=0.4, R1=0.3, Hs=0.1, U0=1.0,
                       viscosity=0.001, E_s=10.0, nu_s=0.3):
    if min(L, Rf, R1, Hs, U0, viscosity, E_s) <= 0 or not 0 < nu_s < 0.5 \
            or R1 >= Rf:
        raise ValueError("need positive parameters, R1 < Rf and nu_s in (0, 0.5)")
    x, y = sp.symbols("x y", real=True)
    H = Hs * 2 * x * (1 - x)
    Hp = sp.diff(H, x)
    J = 1 + H / Rf

    # velocity: Piola transform of the reference profile U0*(y(Rf-y), 0),
    # written directly in physical coordinates
    yr = y / J
    ux = U0 * yr * (Rf - yr) / J
    uy = ux * yr * Hp / Rf
    p = 1 - x
    nu = sp.Float(viscosity)

    grad_u = sp.Matrix([[sp.diff(ux, x), sp.diff(ux, y)],
                        [sp.diff(uy, x), sp.diff(uy, y)]])
    fx = -nu * (sp.diff(ux, x, 2) + sp.diff(ux, y, 2)) + sp.diff(p, x)
    fy = -nu * (sp.diff(uy, x, 2) + sp.diff(uy, y, 2)) + sp.diff(p, y)
    sigma = nu * grad_u - p * sp.eye(2)
    div_u = sp.simplify(sp.diff(ux, x) + sp.diff(uy, y))

    # solid: vertical bump, St. Venant-Kirchhoff, plane strain
    material = Material.from_young_poisson(E_s, nu_s, STVK)
    mu, lam = material.mu, material.lam
    F = sp.Matrix([[1, 0], [Hp, 1]])
    E = (F.T * F - sp.eye(2)) / 2
    S = 2 * mu * E + lam * E.trace() * sp.eye(2)
    Pi = F * S
    f_solid = [-sp.diff(Pi[i, 0], x) for i in range(2)]  # fields depend on x only
    grad_us = [[sp.Integer(0), sp.Integer(0)], [Hp, sp.Integer(0)]]

    # auxiliary traction on the reference interface y = Rf with the
    # solid-outward normal (0, -1); the fluid term uses the Nanson vector
    # of the interface map, J F^{-T} n = (H', -1)
    n_ref = sp.Matrix([0, -1])
    nanson = sp.Matrix([Hp, -1])
    sigma_iface = sigma.subs(y, Rf * J)
    t_a = Pi * n_ref - sigma_iface * nanson

    return ManufacturedFsi2d(
        L=L, Rf=Rf, R1=R1, Hs=Hs, U0=U0, viscosity=viscosity,
        material=material,
        u=_vec_field(x, y, [ux, uy]),
        grad_u=_mat_field(x, y, [[grad_u[0, 0], grad_u[0, 1]],
                                 [grad_u[1, 0], grad_u[1, 1]]]),
        p=_scalar_field(x, y, p),
        f=_vec_field(x, y, [fx, fy]),
        fluid_traction=_traction_field(x, y, sigma),
        us=_vec_field(x, y, [sp.Integer(0), H]),
        grad_us=_mat_field(x, y, grad_us),
        f_solid=_vec_field(x, y, f_solid),
        t_a=_vec_field(x, y, [t_a[0], t_a[1]]),
        um=_vec_field(x, y, [sp.Integer(0), y * H / Rf]),
        div_u=_scalar_field(x, y, div_u),
    )


def remark_edges(mesh, fn):
    """New mesh with boundary markers fn(old_marker, v0, v1, adjacent_cell)."""
    markers = []
    for e, ((i, j), m) in enumerate(zip(mesh.boundary_edges, mesh.boundary_markers)):
        cell = mesh.boundary_cell_of_edge(e)
        markers.append(int(fn(int(m), int(i), int(j), cell)))
    return Mesh(mesh.vertices, mesh.cells, mesh.boundary_edges,
                np.array(markers, dtype=np.int64), mesh.region_tags, validate=False)


def manufactured_meshes(level, mf=None, bg_nx=8, bg_ny=4, front_nx=8,
                        front_nf=2, front_ns=2, bg_top=0.38):
    """Background and composite moving meshes, uniformly refined per level."""
    mf = mf or build_manufactured()
    s = 2 ** level
    bg = build_rect_mesh(bg_nx * s, bg_ny * s, [(0.0, 0.0), (mf.L, bg_top)])
    xs = np.linspace(0.0, mf.L, front_nx * s + 1)
    ys = np.concatenate([np.linspace(mf.R1, mf.Rf, front_nf * s + 1),
                         np.linspace(mf.Rf, mf.Rf + mf.Hs, front_ns * s + 1)[1:]])
    front = build_tensor_mesh(xs, ys,
                              region_fn=lambda c: SOLID if c[1] > mf.Rf else FLUID)
    front = remark_edges(front, lambda m, i, j, c: GAMMA_FF if m == BOTTOM else m)
    return bg, front


def interface_load_vector(mesh, traction_fn, fluid_tag=FLUID, solid_tag=SOLID,
                          order=4):
    """Nodal load from a traction prescribed on the reference interface."""
    from .mesh import region_boundary_edges
    xs, ws = seg_rule(order)
    load = np.zeros((mesh.nv, 2))
    for i, j, _cell, kind in region_boundary_edges(mesh, solid_tag):
        if not isinstance(kind, tuple):
            continue
        a, b = mesh.vertices[i], mesh.vertices[j]
        length = np.hypot(*(b - a))
        pts = a[None, :] + xs[:, None] * (b - a)[None, :]
        tv = np.asarray(traction_fn(pts), float).reshape(-1, 2)
        lam = np.column_stack([1.0 - xs, xs])
        for vloc, v in enumerate((i, j)):
            load[v] += length * np.einsum("q,q,qi->i", ws, lam[:, vloc], tv)
    return load


def manufactured_fsi_problem(mf, level, **mesh_kw):
    """Assemble the FsiProblem for one refinement level."""
    bg, front = manufactured_meshes(level, mf, **mesh_kw)
    fluid = FluidProblem(
        viscosity=mf.viscosity,
        body_force=mf.f,
        neumann=((BG, RIGHT, mf.fluid_traction), (FRONT, RIGHT, mf.fluid_traction)),
    )

    def g_fluid(xv):
        return mf.u(xv)[0]

    def g_solid(xv):
        return mf.us(xv)[0]

    extra = interface_load_vector(front, mf.t_a)
    # pin the moving mesh at the channel ends: the exact stretching keeps
    # the inlet/outlet planes fixed, and letting them drift would punch
    # uncovered slivers into the mesh union near the background corners
    fluid_verts = np.unique(front.cells[front.region_tags == FLUID])
    on_ends = fluid_verts[(np.abs(front.vertices[fluid_verts, 0]) < 1e-12)
                          | (np.abs(front.vertices[fluid_verts, 0] - mf.L) < 1e-12)]
    pins = (on_ends, np.zeros((len(on_ends), 2)))
    # all fluid-adjacent boundary edges may couple: any part interior to
    # the background must be tied to the background field
    return FsiProblem(
        background=bg,
        front_ref=front,
        fluid=fluid,
        solid_material=mf.material,
        bg_dirichlet={LEFT: g_fluid, BOTTOM: g_fluid},
        front_dirichlet={LEFT: g_fluid},
        ff_markers=None,
        solid_body_force=mf.f_solid,
        solid_dirichlet={LEFT: g_solid, RIGHT: g_solid, TOP: g_solid},
        solid_extra_load=extra,
        motion_extra_dirichlet=pins,
        pin_pressure=False,
    )


# -- convergence reporting ---------------------------------------------------


def eoc_sequence(errors):
    """log2 of successive error ratios; first entry is None."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out


@dataclass
class ConvergenceReport:
    """Per-level mesh sizes, errors, convergence orders and iteration counts."""
    hs: list = field(default_factory=list)
    err_u: list = field(default_factory=list)
    err_p: list = field(default_factory=list)
    err_s: list = field(default_factory=list)      # may hold None entries
    iters: list = field(default_factory=list)
    eoc_u: list = field(default_factory=list)
    eoc_p: list = field(default_factory=list)
    eoc_s: list = field(default_factory=list)

    def add(self, h, err_u, err_p, err_s=None, iters=None):
        self.hs.append(float(h))
        self.err_u.append(float(err_u))
        self.err_p.append(float(err_p))
        self.err_s.append(None if err_s is None else float(err_s))
        self.iters.append(iters)
        self._recompute()

    def _recompute(self):
        self.eoc_u = eoc_sequence(self.err_u)
        self.eoc_p = eoc_sequence(self.err_p)
        if any(e is not None for e in self.err_s):
            self.eoc_s = eoc_sequence([e for e in self.err_s])
        else:
            self.eoc_s = [None] * len(self.err_s)

    def rows(self):
        def fmt(v):
            return "" if v is None else repr(v)
        for k in range(len(self.hs)):
            yield [k, repr(self.hs[k]), repr(self.err_u[k]), fmt(self.eoc_u[k]),
                   repr(self.err_p[k]), fmt(self.eoc_p[k]),
                   fmt(self.err_s[k]), fmt(self.eoc_s[k]), fmt(self.iters[k])]

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["level", "h", "err_u_h1", "eoc_u", "err_p_l2", "eoc_p",
                        "err_s_h1", "eoc_s", "iters"])
            for row in self.rows():
                w.writerow(row)


# -- runners ------------------------------------------------------------------


def stokes_patch_setup(level, patch=(0.2731, 0.3231, 0.6331, 0.6831),
                       bg_n0=8, fr_n0=4):
    s = 2 ** level
    bg = build_rect_mesh(bg_n0 * s, bg_n0 * s, [(0.0, 0.0), (1.0, 1.0)])
    x0, y0, x1, y1 = patch
    fr = build_rect_mesh(fr_n0 * s, fr_n0 * s, [(x0, y0), (x1, y1)])
    return bg, fr


def run_stokes_convergence(levels=4, viscosity=1.0, gamma=10.0, delta=0.5,
                           out_dir=None, verbose=False):
    """Fluid-only convergence study on overlapping meshes.

    A smooth manufactured solution is solved on a fixed background square
    overlapped by an interior patch mesh; both meshes are refined uniformly.
    """
    if levels < 2:
        raise ValueError("need at least 2 levels")
    ms = build_manufactured_stokes(viscosity)

    def g_of(pt):
        return ms.u(pt)[0]

    report = ConvergenceReport()
    last = None
    for lvl in range(levels):
        bg, fr = stokes_patch_setup(lvl)
        topo = build_topology(bg, fr)
        space = CompositeSpace(bg, fr, topo,
                               bg_dirichlet={m: g_of for m in (LEFT, RIGHT, BOTTOM, TOP)},
                               interface_g=None, pin_pressure=True)
        prob = FluidProblem(viscosity=viscosity, body_force=ms.f,
                            gamma=gamma, delta=delta)
        sol = solve_stokes(prob, space, topo)
        eu, ep = error_norms(sol, ms.u, ms.grad_u, ms.p, topo, order=4)
        report.add(bg.cell_diameters.max(), eu, ep)
        last = (sol, topo)
        if verbose:
            print(f"level {lvl}: h={report.hs[-1]:.4f} "
                  f"err_u={eu:.4e} err_p={ep:.4e}")
    if out_dir:
        write_outputs(None, report, out_dir)
        sol, topo = last
        write_vtk_mesh(os.path.join(out_dir, "background.vtk"),
                       sol.space.background,
                       {"velocity": sol.velocity(BG), "pressure": sol.pressure(BG)})
        write_vtk_mesh(os.path.join(out_dir, "front.vtk"), sol.space.front,
                       {"velocity": sol.velocity(FRONT), "pressure": sol.pressure(FRONT)})
        write_vtk_topology(os.path.join(out_dir, "cut_geometry.vtk"), topo)
    return report


def run_convergence(levels=3, config=None, out_dir=None, verbose=False,
                    mf=None, **mesh_kw):
    """Full FSI manufactured convergence study (one fixed-point run per level)."""
    if levels < 2:
        raise ValueError("need at least 2 levels")
    mf = mf or build_manufactured()
    config = config or FsiConfig()
    log_path = os.path.join(out_dir, "iterations.csv") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    report = ConvergenceReport()
    state = None
    for lvl in range(levels):
        problem = manufactured_fsi_problem(mf, lvl, **mesh_kw)
        try:
            state = fsi_fixed_point(problem, config, log_path=log_path)
        except Exception as exc:
            raise RuntimeError(f"FSI solve failed at level {lvl}: {exc}") from exc
        eu, ep = error_norms(state.fluid, mf.u, mf.grad_u, mf.p, state.topo,
                             order=4)
        es = h1_error(problem.front_ref,
                      problem.front_ref.region_cells(SOLID),
                      state.solid_displacement, mf.us, mf.grad_us)
        report.add(problem.background.cell_diameters.max(), eu, ep, es,
                   state.iterations)
        if verbose:
            print(f"level {lvl}: err_u={eu:.4e} err_p={ep:.4e} err_s={es:.4e} "
                  f"iters={state.iterations}")
    if out_dir:
        write_outputs(state, report, out_dir)
    return report


# -- elastic flap demo --------------------------------------------------------


FLAP_CHANNEL = (2.5, 0.41)
FLAP_SIZE = (0.06, 0.24)
FLAP_BASE = (1.25, 0.0)


def _rotate(points, angle_deg, center):
    th = np.deg2rad(angle_deg)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return (np.asarray(points) - center) @ R.T + center


def flap_meshes(angle_deg=0.0, res=1, margin=0.08):
    """Channel background mesh and the composite box around the flap.

    Upright (angle 0) the flap stands on the channel floor and the box
    bottom is flush with it.  Rotated, the whole box pivots about the flap
    base center; the flap is then fully surrounded by a fluid collar
    (including below its base, which acts as an immersed mount) and box
    parts leaving the channel simply stop participating in the coupling.
    Returns (background, box, clamp_nodes).
    """
    Lc, Hc = FLAP_CHANNEL
    Ws, Hs = FLAP_SIZE
    cx, cy = FLAP_BASE
    bg = build_rect_mesh(72 * res, 12 * res, [(0.0, 0.0), (Lc, Hc)])

    x0, x1 = cx - Ws / 2 - margin, cx + Ws / 2 + margin
    nxm = max(2, int(np.ceil(margin / 0.03)) * res)
    nxf = max(2, int(np.ceil(Ws / 0.03)) * res)
    nyf = max(6, int(np.ceil(Hs / 0.03)) * res)
    nym = max(2, int(np.ceil(margin / 0.03)) * res)
    xs = np.concatenate([np.linspace(x0, cx - Ws / 2, nxm + 1),
                         np.linspace(cx - Ws / 2, cx + Ws / 2, nxf + 1)[1:],
                         np.linspace(cx + Ws / 2, x1, nxm + 1)[1:]])
    ys = np.concatenate([np.linspace(0.0, Hs, nyf + 1),
                         np.linspace(Hs, Hs + margin, nym + 1)[1:]])
    if angle_deg != 0.0:
        # immersed mount: fluid collar below the flap base as well
        ys = np.concatenate([np.linspace(-margin, 0.0, nym + 1)[:-1], ys])

    def region(c):
        return SOLID if (abs(c[0] - cx) < Ws / 2 and 0.0 < c[1] < Hs) else FLUID

    box = build_tensor_mesh(xs, ys, region_fn=region)
    clamp = np.flatnonzero((np.abs(box.vertices[:, 1]) < 1e-12)
                           & (np.abs(box.vertices[:, 0] - cx) < Ws / 2 + 1e-12))

    def mark(m, i, j, cell):
        if m == BOTTOM and angle_deg == 0.0:
            return BOTTOM        # flush with the channel floor
        return GAMMA_FF
    box = remark_edges(box, mark)

    if angle_deg != 0.0:
        box = Mesh(_rotate(box.vertices, angle_deg, np.array([cx, cy])),
                   box.cells, box.boundary_edges, box.boundary_markers,
                   box.region_tags, validate=False)
    return bg, box, clamp


def flap_problem(angle_deg=0.0, E_s=15.0, nu_s=0.3, viscosity=0.001,
                 ubar=0.45, res=1, gamma=10.0, delta=0.5):
    """Channel flow around an elastic flap, optionally rotated."""
    bg, box, clamp = flap_meshes(angle_deg, res)
    Lc, Hc = FLAP_CHANNEL

    def inflow(xv):
        yv = xv[1]
        return np.array([ubar * 4.0 * yv * (Hc - yv) / Hc ** 2, 0.0])

    def noslip(xv):
        return np.zeros(2)

    fluid = FluidProblem(viscosity=viscosity, body_force=None,
                         gamma=gamma, delta=delta)
    front_dirichlet = {} if angle_deg != 0.0 else {BOTTOM: noslip}
    pins = None
    if angle_deg == 0.0:
        # the fluid collar rests on the channel floor and must not lift off,
        # otherwise covered floor cells next to the clamped flap base turn
        # into cut cells touching the solid
        fluid_verts = np.unique(box.cells[box.region_tags == FLUID])
        floor = fluid_verts[np.abs(box.vertices[fluid_verts, 1]) < 1e-12]
        pins = (floor, np.zeros((len(floor), 2)))
    return FsiProblem(
        background=bg,
        front_ref=box,
        fluid=fluid,
        solid_material=Material.from_young_poisson(E_s, nu_s, STVK),
        bg_dirichlet={LEFT: inflow, BOTTOM: noslip, TOP: noslip},
        front_dirichlet=front_dirichlet,
        ff_markers=None,
        solid_dirichlet_nodes=(clamp, np.zeros((len(clamp), 2))),
        motion_extra_dirichlet=pins,
        pin_pressure=False,        # do-nothing outlet fixes the pressure level
    )


def flap2d(angle_deg=0.0, config=None, out_dir=None, **kw):
    """Run the flap case to convergence and optionally write field output.

    The default configuration ramps the fluid load over the first outer
    iterations: the flap deforms strongly, and the uncoupled initial load
    overshoots what a static equilibrium supports on fine meshes.
    """
    problem = flap_problem(angle_deg, **kw)
    config = config or FsiConfig(load_ramp=4)
    log_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "iterations.csv")
    state = fsi_fixed_point(problem, config, log_path=log_path)
    if out_dir:
        write_outputs(state, None, out_dir)
    return state, problem


# -- output -------------------------------------------------------------------


def write_outputs(state, report, out_dir):
    """Field output (legacy VTK) plus the convergence table."""
    os.makedirs(out_dir, exist_ok=True)
    if report is not None:
        report.to_csv(os.path.join(out_dir, "convergence.csv"))
    if state is None:
        return
    space = state.space
    sol = state.fluid
    write_vtk_mesh(os.path.join(out_dir, "background.vtk"), space.background,
                   {"velocity": sol.velocity(BG), "pressure": sol.pressure(BG)},
                   title="background fluid")
    write_vtk_mesh(os.path.join(out_dir, "front.vtk"), space.front,
                   {"velocity": sol.velocity(FRONT), "pressure": sol.pressure(FRONT)},
                   title="moving fluid mesh (current configuration)")
    ref = state.front_current  # same connectivity as the reference mesh
    write_vtk_mesh(os.path.join(out_dir, "displacement.vtk"), ref,
                   {"solid_displacement": state.solid_displacement,
                    "mesh_displacement": state.mesh_displacement},
                   title="composite mesh displacements")
    if state.topo is not None:
        write_vtk_topology(os.path.join(out_dir, "cut_geometry.vtk"), state.topo)
