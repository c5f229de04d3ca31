"""Named example systems and the end-to-end engine pipeline.

Every acceptance criterion runs through here: an entry builds its field
(or equivariant/continuation data), `run_field_complex` shoots the
moduli and assembles the check-complex, and the oracle spec (when the
entry has one) states how to drive the same dynamics on a plain grid
chart for the independent Conley-index comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from flowhom.complexes import (CheckComplex, KIND_TO_THETA, LocusSpec, assemble,
                               betti_tuple, f2_homology, tier1_load)
from flowhom.config import Tolerances, tol_profile
from flowhom.errors import DimensionMismatch, UnknownCatalogEntry
from flowhom.expressions import FieldFamily, ScalarField, SymbolicVectorField
from flowhom.fields import (EquivariantField, Pin2Action, QuasiGradientField,
                            StationaryManifold, find_stationary_loci,
                            verify_quasi_gradient)
from flowhom.flow import ModuliSpace, build_moduli, expected_moduli_dim
from flowhom.geometry import FixedLocus, ManifoldModel, make_level_set_manifold
from flowhom.strata import CellModel, CellularModuli

_VARS3 = ["x", "y", "z"]


# -- engine pipeline -------------------------------------------------------------


@dataclass
class EngineRun:
    name: str
    field: QuasiGradientField
    certificate: object
    loci: list[StationaryManifold]
    moduli: list[ModuliSpace]
    cellular: list[CellularModuli]
    complex: CheckComplex
    betti: dict[int, int]
    reps: dict[int, list[str]]
    classes_by_pair: dict[tuple[str, str], list]
    notes: list[str] = field(default_factory=list)

    @property
    def betti_tuple(self) -> tuple[int, ...]:
        return betti_tuple(self.betti)

    def report(self) -> dict:
        from flowhom.fields import locus_summary
        return {
            "name": self.name,
            "certificate": self.certificate.report() if self.certificate else None,
            "loci": [locus_summary(b) for b in self.loci],
            "moduli": [m.summary() for m in self.moduli],
            "betti": {str(k): v for k, v in sorted(self.betti.items())},
            "homology_generators": {str(k): v for k, v in sorted(self.reps.items())},
            "complex": self.complex.summary(),
            "notes": self.notes,
        }


def _sphere_transfer_entries(ms: ModuliSpace) -> tuple[int, int]:
    """(0-cell, 2-cell) entries of an identity-like sphere-to-sphere transfer."""
    bases = {}
    for cls in ms.classes:
        key = tuple(np.round(cls.ev_minus, 4))
        bases.setdefault(key, []).append(cls)
    fiber_counts = {k: len(v) for k, v in bases.items()}
    fiber = int(round(np.median(list(fiber_counts.values())))) % 2
    ev_plus = np.array([c.ev_plus for c in ms.classes])
    ev_minus = np.array([c.ev_minus for c in ms.classes])
    spread_plus = np.ptp(ev_plus, axis=0).max()
    degree = 1 if spread_plus > 0.5 * np.ptp(ev_minus, axis=0).max() else 0
    return fiber, degree


def cellular_from_moduli(ms: ModuliSpace) -> CellularModuli | None:
    """Cellular shadow of a numeric moduli space; None when nothing lands."""
    src, dst = ms.source, ms.target
    src_model = CellModel("sphere2" if src.dim == 2 else "point")
    dst_model = CellModel("sphere2" if dst.dim == 2 else "point")
    shape = (len(dst_model.cells), len(src_model.cells))
    mat = np.zeros(shape, dtype=int)
    shift = ms.expected_dim - src.dim
    filled = False
    if src.dim == 0 and dst.dim == 0 and ms.expected_dim == 0:
        mat[0, 0] = (ms.count_mod2 or 0) % 2
        filled = True
    elif src.dim == 2 and dst.dim == 2 and ms.expected_dim == 2 and ms.classes:
        fiber, degree = _sphere_transfer_entries(ms)
        mat[0, 0] = fiber
        mat[1, 1] = degree
        filled = True
    elif src.dim == 2 and dst.dim == 0 and ms.expected_dim == 2 and ms.classes:
        bases = {tuple(np.round(c.ev_minus, 4)) for c in ms.classes}
        mat[0, 0] = int(round(len(ms.classes) / max(len(bases), 1))) % 2
        filled = True
    if not filled and not any(
            ci == cj + shift for ci in dst_model.cells for cj in src_model.cells):
        return None
    if not filled:
        return None
    return CellularModuli(
        source=src.name, target=dst.name, source_model=src_model,
        target_model=dst_model, dim=ms.expected_dim, source_dim=src.dim,
        matrix=tuple(tuple(int(v) for v in row) for row in mat),
        boundary_obstructed=ms.boundary_obstructed)


def run_field_complex(F: QuasiGradientField, name: str, seed: int = 0,
                      budget: int = 64, grid_density: int = 7,
                      t_max: float = 400.0, verify_axioms: bool = True,
                      cluster_radius: float = 0.1,
                      strict_dims: bool = True) -> EngineRun:
    """Full pipeline: certificate, loci, moduli, check-complex, homology."""
    cert = verify_quasi_gradient(F, n_samples=300, seed=seed) if verify_axioms else None
    loci = find_stationary_loci(F, grid_density=grid_density, seed=seed,
                                cluster_radius=cluster_radius)
    moduli: list[ModuliSpace] = []
    cellular: list[CellularModuli] = []
    classes_by_pair: dict[tuple[str, str], list] = {}
    notes: list[str] = []
    for B in loci:
        for Bp in loci:
            if B.name == Bp.name or B.f_value <= Bp.f_value + 1e-10:
                continue
            exp_dim, _ = expected_moduli_dim(B, Bp)
            if exp_dim < 0 or exp_dim > 2:
                continue
            ms = build_moduli(F, loci, B, Bp, budget=budget, seed=seed, t_max=t_max)
            moduli.append(ms)
            if ms.classes:
                classes_by_pair[(B.name, Bp.name)] = ms.classes
            if not ms.accepted and ms.classes:
                msg = (f"moduli {B.name}->{Bp.name}: est_dim {ms.est_dim} != "
                       f"expected {ms.expected_dim}")
                if strict_dims:
                    raise DimensionMismatch(msg)
                notes.append(msg)
            cm = cellular_from_moduli(ms)
            if cm is not None:
                cellular.append(cm)
    specs = [LocusSpec(b.name, b.kind, b.index,
                       "sphere2" if b.dim == 2 else "point") for b in loci]
    cx = assemble(specs, cellular)
    betti, reps = f2_homology(cx)
    return EngineRun(name, F, cert, loci, moduli, cellular, cx, betti, reps,
                     classes_by_pair, notes)


# -- catalog field builders -------------------------------------------------------


def _sphere_manifold(tols: Tolerances) -> ManifoldModel:
    return make_level_set_manifold(["x**2 + y**2 + z**2 - 1"], None, 3,
                                   box=[[-1.3] * 3, [1.3] * 3], tols=tols)


def _sphere_gradient_field(f_expr: str, tols: Tolerances,
                           name: str) -> QuasiGradientField:
    M = _sphere_manifold(tols)
    f = ScalarField.parse(f_expr, _VARS3)
    return QuasiGradientField(M, SymbolicVectorField.sphere_gradient(f), f, name=name)


def build_s2_height(tols) -> QuasiGradientField:
    return _sphere_gradient_field("z", tols, "s2-height")


def build_s2_morse(tols) -> QuasiGradientField:
    """Six-point Morse function: two maxima, two saddles, two minima."""
    return _sphere_gradient_field("z*(1 + 1.5*x)", tols, "s2-morse")


def build_interval_cubic(tols) -> QuasiGradientField:
    M = make_level_set_manifold([], "x**2 - 1", 1, box=[[-1.4], [1.4]],
                                var_names=["x"], tols=tols)
    f = ScalarField.parse("x**2/2 - x**4/4", ["x"])
    v = SymbolicVectorField.parse(["x*(1 - x**2)"], ["x"])
    return QuasiGradientField(M, v, f, name="interval-cubic")


def build_hemisphere(tols) -> QuasiGradientField:
    """Upper hemisphere with the boundary-obstructed composite structure."""
    M = make_level_set_manifold(["x**2 + y**2 + z**2 - 1"], "-z", 3,
                                box=[[-1.3] * 3, [1.3] * 3], tols=tols)
    f = ScalarField.parse("(x**2 - y**2)*(1 + 2*z**2)", _VARS3)
    return QuasiGradientField(M, SymbolicVectorField.sphere_gradient(f), f,
                              name="hemisphere-obstructed")


def build_rotation_bad(tols) -> QuasiGradientField:
    """Rotation field on S^2 with f = z: no taming function exists."""
    M = _sphere_manifold(tols)
    v = SymbolicVectorField.parse(["-y", "x", "0"], _VARS3)
    f = ScalarField.parse("z", _VARS3)
    return QuasiGradientField(M, v, f, name="rotation-bad")


def build_plane(name: str, exprs: list[str], tols,
                box=((-1.2, -1.2), (1.2, 1.2))) -> QuasiGradientField:
    M = make_level_set_manifold([], None, 2, box=np.asarray(box),
                                var_names=["x", "y"], tols=tols)
    v = SymbolicVectorField.parse(exprs, ["x", "y"])
    # taming functions for the linear saddle/node examples
    fmap = {
        "plane-saddle": "(x**2 + y**2)/2",
        "plane-attractor": "(x**2 + y**2)/2",
        "plane-repeller": "-(x**2 + y**2)/2",
        "smale-defect": "x**3/3 - x",
    }
    f = ScalarField.parse(fmap.get(name, "0"), ["x", "y"])
    return QuasiGradientField(M, v, f, name=name)


# -- equivariant builders ----------------------------------------------------------


def _hopf_pullback_expr() -> list[sp.Expr]:
    """f(h(q)) for f = x^2 + 2 y^2 + 3 z^2 on the Hopf base."""
    x1, y1, x2, y2 = sp.symbols("x1 y1 x2 y2", real=True)
    hx = 2 * (x1 * x2 + y1 * y2)
    hy = 2 * (x1 * y2 - y1 * x2)
    hz = x1**2 + y1**2 - x2**2 - y2**2
    F = hx**2 + 2 * hy**2 + 3 * hz**2
    return [x1, y1, x2, y2], sp.expand(F)


def build_s3_hopf(tols) -> EquivariantField:
    """Pin(2) acting on S(H) by left multiplication; F is the pulled-back Morse fn."""
    syms, F = _hopf_pullback_expr()
    names = [str(s) for s in syms]
    M = make_level_set_manifold(["x1**2 + y1**2 + x2**2 + y2**2 - 1"], None, 4,
                                var_names=names, box=[[-1.3] * 4, [1.3] * 4],
                                tols=tols)
    f = ScalarField(F, syms)
    v = SymbolicVectorField.sphere_gradient(f)
    base = QuasiGradientField(M, v, f, name="s3-hopf")
    action = Pin2Action.quaternionic(1)
    return EquivariantField(base, action, np.zeros((0, 4)))


def build_s4_suspension(tols) -> EquivariantField:
    """Pin(2) on S(H + R): fixed poles, one quaternionic eigenvalue each."""
    names = [f"x{i}" for i in range(1, 6)]
    M = make_level_set_manifold(["x1**2 + x2**2 + x3**2 + x4**2 + x5**2 - 1"],
                                None, 5, var_names=names,
                                box=[[-1.3] * 5, [1.3] * 5], tols=tols)
    f = ScalarField.parse("x1**2 + x2**2 + x3**2 + x4**2", names)
    v = SymbolicVectorField.sphere_gradient(f)
    base = QuasiGradientField(M, v, f, name="s4-suspension")
    action = Pin2Action.quaternionic(1, extra_fixed=1)
    poles = np.zeros((2, 5))
    poles[0, 4], poles[1, 4] = 1.0, -1.0
    return EquivariantField(base, action, poles)


def s4_fixed_locus() -> FixedLocus:
    poles = np.zeros((2, 5))
    poles[0, 4], poles[1, 4] = 1.0, -1.0
    return FixedLocus(kind="points", points=poles)


# -- continuation builders -----------------------------------------------------------


def _sphere_grad_family(f_expr: sp.Expr, param: sp.Symbol) -> FieldFamily:
    xs = sp.symbols("x y z", real=True)
    r2 = sum(t**2 for t in xs)
    grads = [sp.diff(f_expr, t) for t in xs]
    radial = sum(g * t for g, t in zip(grads, xs))
    exprs = [sp.expand(r2 * g - radial * t) for g, t in zip(grads, xs)]
    return FieldFamily(exprs, list(xs), param)


def build_homotopy(name: str, tols) -> dict:
    """Continuation catalog: returns endpoint fields and the family."""
    from flowhom.continuation import Homotopy
    x, y, z, s = sp.symbols("x y z s", real=True)
    M = _sphere_manifold(tols)
    if name == "cont-const":
        F0 = build_s2_height(tols)
        H = Homotopy.constant(F0)
        return {"H": H, "F0": F0, "F1": F0}
    if name == "cont-rotate":
        theta = sp.pi / 3 * (s + 1) / 2
        f_s = sp.cos(theta) * z + sp.sin(theta) * x
        H = Homotopy(_sphere_grad_family(f_s, s), M, name=name)
        F0 = build_s2_height(tols)
        f1 = ScalarField(sp.cos(sp.pi / 3) * z + sp.sin(sp.pi / 3) * x, [x, y, z])
        F1 = QuasiGradientField(M, SymbolicVectorField.sphere_gradient(f1), f1,
                                name="s2-height-tilted")
        return {"H": H, "F0": F0, "F1": F1}
    if name == "psi-triple":
        # v0 = v2: six-point Morse function; v1: plain height
        f_morse = z * (1 + sp.Rational(3, 2) * x)
        blend01 = (1 - s) / 2 * f_morse + (1 + s) / 2 * z
        blend12 = (1 - s) / 2 * z + (1 + s) / 2 * f_morse
        from flowhom.continuation import Homotopy as Ht
        H01 = Ht(_sphere_grad_family(blend01, s), M, name="morse->height")
        H12 = Ht(_sphere_grad_family(blend12, s), M, name="height->morse")
        H02 = Ht(_sphere_grad_family(f_morse + 0 * s, s), M, name="const-morse")
        F0 = build_s2_morse(tols)
        F1 = build_s2_height(tols)
        return {"H01": H01, "H12": H12, "H02": H02, "F0": F0, "F1": F1, "F2": F0}
    raise UnknownCatalogEntry(name)


# -- oracle chart specs ----------------------------------------------------------------


def _shell_rhs(f_expr: str, c: float = 3.0):
    """Ambient extension of a sphere-gradient flow, radially attracted to S^2."""
    syms = sp.symbols("x y z", real=True)
    f = sp.sympify(f_expr, locals={"x": syms[0], "y": syms[1], "z": syms[2]})
    r2 = sum(t**2 for t in syms)
    grads = [sp.diff(f, t) for t in syms]
    radial = sum(g * t for g, t in zip(grads, syms))
    v = [sp.expand(r2 * g - radial * t) for g, t in zip(grads, syms)]
    rhs_exprs = [sp.expand(-(vi + c * (r2 - 1) * t)) for vi, t in zip(v, syms)]
    fn = sp.lambdify(syms, rhs_exprs, modules="numpy")

    def rhs(points):
        pts = np.atleast_2d(points)
        vals = fn(pts[:, 0], pts[:, 1], pts[:, 2])
        return np.column_stack([np.broadcast_to(v, pts[:, 0].shape) for v in vals])

    return rhs


def _hemisphere_chart_rhs(rotate: float = np.pi / 4):
    """Disk-chart pushforward of the hemisphere flow, rotated in the plane.

    The function is even in z, so the graph-chart field is polynomial in
    (x, y) after substituting z^2 = 1 - x^2 - y^2.  The rotation moves
    the polynomial continuation's spurious exterior zeros (at radius
    sqrt(3/2) on the diagonals) onto the axes, outside the oracle box.
    """
    x, y, z = sp.symbols("x y z", real=True)
    f = (x**2 - y**2) * (1 + 2 * z**2)
    r2 = x**2 + y**2 + z**2
    grads = [sp.diff(f, t) for t in (x, y, z)]
    radial = sum(g * t for g, t in zip(grads, (x, y, z)))
    vx = sp.expand(r2 * grads[0] - radial * x).subs(z**2, 1 - x**2 - y**2)
    vy = sp.expand(r2 * grads[1] - radial * y).subs(z**2, 1 - x**2 - y**2)
    vx, vy = sp.expand(vx), sp.expand(vy)
    fn = sp.lambdify((x, y), [vx, vy], modules="numpy")
    c, s = np.cos(rotate), np.sin(rotate)
    R = np.array([[c, -s], [s, c]])

    def rhs(points):
        pts = np.atleast_2d(points) @ R          # chart coords -> field coords
        vals = fn(pts[:, 0], pts[:, 1])
        v = np.column_stack([np.broadcast_to(t, pts[:, 0].shape) for t in vals])
        return -(v @ R.T)

    return rhs


def _field_rhs(F: QuasiGradientField):
    def rhs(points):
        return -F.v.value(points)
    return rhs


@dataclass
class OracleSpec:
    rhs: object
    box: np.ndarray
    resolution: int
    tau: float | None = None
    mask_ball: float | None = None
    wall_axes: tuple[int, ...] = ()

    def run(self, scale: int = 1) -> dict:
        from flowhom.oracle import grid_conley_index
        mask = None
        if self.mask_ball is not None:
            r = self.mask_ball
            mask = lambda pts: np.linalg.norm(pts, axis=1) < r
        return grid_conley_index(self.rhs, self.box, self.resolution * scale,
                                 tau=self.tau, mask=mask, wall_axes=self.wall_axes)


# -- the catalog -----------------------------------------------------------------------


@dataclass
class CatalogEntry:
    name: str
    kind: str                       # field | equivariant | continuation | tier1 | plane
    description: str
    build: object = None
    oracle: object = None           # () -> OracleSpec
    expected: dict = field(default_factory=dict)


def _tier1_hemisphere() -> dict:
    loci = [
        {"name": "min+", "kind": "interior", "index": 0},
        {"name": "min-", "kind": "interior", "index": 0},
        {"name": "pole", "kind": "interior", "index": 1},
        {"name": "ex+", "kind": "boundary-stable", "index": 1},
        {"name": "ex-", "kind": "boundary-stable", "index": 1},
        {"name": "ey+", "kind": "boundary-unstable", "index": 1},
        {"name": "ey-", "kind": "boundary-unstable", "index": 1},
        {"name": "max+", "kind": "interior", "index": 2},
        {"name": "max-", "kind": "interior", "index": 2},
    ]
    moduli = [
        {"source": "pole", "target": "min+", "dim": 0, "matrix": [[1]]},
        {"source": "pole", "target": "min-", "dim": 0, "matrix": [[1]]},
        {"source": "max+", "target": "pole", "dim": 0, "matrix": [[1]]},
        {"source": "max-", "target": "pole", "dim": 0, "matrix": [[1]]},
        {"source": "max+", "target": "ex+", "dim": 0, "matrix": [[1]]},
        {"source": "max-", "target": "ex-", "dim": 0, "matrix": [[1]]},
        {"source": "ex+", "target": "ey+", "dim": 0, "matrix": [[1]], "obstructed": True},
        {"source": "ex+", "target": "ey-", "dim": 0, "matrix": [[1]], "obstructed": True},
        {"source": "ex-", "target": "ey+", "dim": 0, "matrix": [[1]], "obstructed": True},
        {"source": "ex-", "target": "ey-", "dim": 0, "matrix": [[1]], "obstructed": True},
        {"source": "ey+", "target": "min+", "dim": 0, "matrix": [[1]]},
        {"source": "ey-", "target": "min-", "dim": 0, "matrix": [[1]]},
    ]
    return {"loci": loci, "moduli": moduli}


def _tier1_shquad() -> dict:
    """S(H + H~)-type invariant module: degrees 0,1,2,4,5,6 with Q and V towers."""
    loci = [{"name": f"p{d}", "kind": "interior", "index": d}
            for d in (0, 1, 2, 4, 5, 6)]
    return {
        "loci": loci, "moduli": [],
        "eta": [("p1", "p0"), ("p2", "p1"), ("p5", "p4"), ("p6", "p5")],
        "zeta": [("p4", "p0"), ("p5", "p1"), ("p6", "p2")],
    }


def _tier1_bad() -> dict:
    return {
        "loci": [
            {"name": "a", "kind": "interior", "index": 2},
            {"name": "b", "kind": "interior", "index": 1},
            {"name": "c", "kind": "interior", "index": 0},
        ],
        "moduli": [
            {"source": "a", "target": "b", "dim": 0, "matrix": [[1]]},
            {"source": "b", "target": "c", "dim": 0, "matrix": [[1]]},
        ],
    }


def _entries() -> dict[str, CatalogEntry]:
    E: dict[str, CatalogEntry] = {}
    E["s2-height"] = CatalogEntry(
        "s2-height", "field", "height gradient on the unit 2-sphere",
        build=build_s2_height,
        oracle=lambda: OracleSpec(_shell_rhs("z"), np.array([[-1.3] * 3, [1.3] * 3]),
                                  14, tau=0.6, mask_ball=0.5),
        expected={"betti": (1, 0, 1), "n_loci": 2})
    E["s2-morse"] = CatalogEntry(
        "s2-morse", "field", "six-point Morse function on the 2-sphere",
        build=build_s2_morse,
        oracle=lambda: OracleSpec(_shell_rhs("z*(1 + 1.5*x)"),
                                  np.array([[-1.35] * 3, [1.35] * 3]),
                                  14, tau=0.5, mask_ball=0.5),
        expected={"betti": (1, 0, 1), "n_loci": 6})
    E["interval-cubic"] = CatalogEntry(
        "interval-cubic", "field", "cubic field on [-1, 1] with unstable endpoints",
        build=build_interval_cubic,
        oracle=lambda: OracleSpec(
            lambda p: -p[:, 0:1] * (1 - p[:, 0:1] ** 2),
            np.array([[-1.0], [1.0]]), 24, wall_axes=(0,)),
        expected={"betti": (1,), "n_loci": 3})
    E["hemisphere-obstructed"] = CatalogEntry(
        "hemisphere-obstructed", "field",
        "hemisphere flow whose d^2 = 0 needs the boundary-obstructed composite",
        build=build_hemisphere,
        oracle=lambda: OracleSpec(_hemisphere_chart_rhs(),
                                  np.array([[-1.1, -1.1], [1.1, 1.1]]), 22),
        expected={"betti": (1,), "n_loci": 9})
    E["rotation-bad"] = CatalogEntry(
        "rotation-bad", "field", "rotation field: the taming axiom fails",
        build=build_rotation_bad, expected={"verify_fails": "iv_taming"})
    E["plane-saddle"] = CatalogEntry(
        "plane-saddle", "plane", "linear saddle in the plane",
        build=lambda tols: build_plane("plane-saddle", ["-x", "y"], tols),
        oracle=lambda: OracleSpec(
            lambda p: np.column_stack([p[:, 0], -p[:, 1]]),
            np.array([[-1.0, -1.0], [1.0, 1.0]]), 16),
        expected={"betti": (0, 1)})
    E["plane-attractor"] = CatalogEntry(
        "plane-attractor", "plane", "attracting point in the plane",
        build=lambda tols: build_plane("plane-attractor", ["x", "y"], tols),
        oracle=lambda: OracleSpec(lambda p: -np.asarray(p, dtype=float),
                                  np.array([[-1.0, -1.0], [1.0, 1.0]]), 16),
        expected={"betti": (1,)})
    E["plane-repeller"] = CatalogEntry(
        "plane-repeller", "plane", "repelling point in the plane",
        build=lambda tols: build_plane("plane-repeller", ["-x", "-y"], tols),
        oracle=lambda: OracleSpec(lambda p: np.asarray(p, dtype=float).copy(),
                                  np.array([[-1.0, -1.0], [1.0, 1.0]]), 16),
        expected={"betti": (0, 0, 1)})
    E["smale-defect"] = CatalogEntry(
        "smale-defect", "plane",
        "engineered saddle-saddle connection with transversality defect 1",
        build=lambda tols: build_plane("smale-defect", ["x**2 - 1", "-x*y"], tols,
                                       box=((-1.6, -1.0), (1.6, 1.0))),
        expected={"defect": 1})
    E["s3-hopf"] = CatalogEntry(
        "s3-hopf", "equivariant",
        "Pin(2) on S(H): quotient RP^2 pipeline with the Q-tower",
        build=build_s3_hopf,
        expected={"invariant_betti": (1, 1, 1)})
    E["s4-suspension"] = CatalogEntry(
        "s4-suspension", "equivariant",
        "Pin(2) on S(H + R): blown-up poles give boundary 2-sphere loci",
        build=build_s4_suspension,
        expected={"betti": (1, 0, 1, 0), "invariant_betti": (1, 1, 1, 0)})
    E["cont-const"] = CatalogEntry(
        "cont-const", "continuation", "constant homotopy: F is the identity",
        build=lambda tols: build_homotopy("cont-const", tols),
        expected={"F_identity": True})
    E["cont-rotate"] = CatalogEntry(
        "cont-rotate", "continuation", "height axis rotated by pi/3",
        build=lambda tols: build_homotopy("cont-rotate", tols),
        expected={"F_iso": True})
    E["psi-triple"] = CatalogEntry(
        "psi-triple", "continuation",
        "morse->height->morse vs constant: the Psi identity",
        build=lambda tols: build_homotopy("psi-triple", tols),
        expected={"psi_identity": True})
    E["tier1-hemisphere"] = CatalogEntry(
        "tier1-hemisphere", "tier1", "exact table of the hemisphere complex",
        build=lambda tols=None: _tier1_hemisphere(),
        expected={"betti": (1, 0, 0)})
    E["tier1-shquad"] = CatalogEntry(
        "tier1-shquad", "tier1",
        "declared S(H + H~)-type module with nontrivial V",
        build=lambda tols=None: _tier1_shquad(),
        expected={"betti": (1, 1, 1, 0, 1, 1, 1)})
    E["tier1-bad-dsq"] = CatalogEntry(
        "tier1-bad-dsq", "tier1", "broken table: d^2 != 0 is rejected",
        build=lambda tols=None: _tier1_bad(),
        expected={"raises": "DSquaredNonzero"})
    return E


CATALOG = _entries()


def get_entry(name: str) -> CatalogEntry:
    if name not in CATALOG:
        raise UnknownCatalogEntry(
            f"unknown catalog entry {name!r}; known: {sorted(CATALOG)}")
    return CATALOG[name]


_RUN_CACHE: dict = {}


def cached_run(name: str, seed: int = 0, budget: int = 64,
               profile: str = "default") -> EngineRun:
    """Run a field-type catalog entry once per session and reuse the result."""
    key = (name, seed, budget, profile)
    if key not in _RUN_CACHE:
        entry = get_entry(name)
        tols = tol_profile(profile)
        F = entry.build(tols)
        grid = 9 if F.manifold.ambient_dim <= 1 else 7
        _RUN_CACHE[key] = run_field_complex(F, name, seed=seed, budget=budget,
                                            grid_density=grid)
    return _RUN_CACHE[key]
