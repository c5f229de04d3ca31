"""The Pin(2) pipeline: quotient models, j-invariant complex, Q and V.

The engine works in the intermediate quotient X^sigma/S^1, where the
residual involution j acts.  Two quotient charts cover the catalog:
the Hopf quotient S^3 -> S^2 (j descends to the antipodal map) and the
suspension chart S(H + R)^sigma/S^1 = S^2 x [-1, 1] whose boundary
spheres are the blown-up fixed points.

Q is the degree -1 operator cut down by a real-line section (zero set a
j-invariant great sphere); its matrix entries are crossing parities of
trajectories with the section's zero set, which over F2 reduce to sign
comparisons at the two landing points.  V needs a rank-4 cut and dies
on every catalog quotient by dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowhom.complexes import CheckComplex, Generator, LocusSpec, assemble, f2_homology
from flowhom.errors import JNotChainMap, NonFreeAction, NonTransverseSection, NotChainMap
from flowhom.expressions import NumericScalarField, NumericVectorField
from flowhom.f2 import F2Matrix, vec_indices
from flowhom.fields import EquivariantField, QuasiGradientField, StationaryManifold
from flowhom.geometry import ManifoldModel, make_level_set_manifold
from flowhom.strata import CellModel, CellularModuli

# -- quotient charts -----------------------------------------------------------


def _hopf_point(q: np.ndarray) -> np.ndarray:
    """Hopf map on unit quaternions (z1, z2) -> S^2, vectorized."""
    q = np.atleast_2d(q)
    x1, y1, x2, y2 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.column_stack([
        2 * (x1 * x2 + y1 * y2),
        2 * (x1 * y2 - y1 * x2),
        x1**2 + y1**2 - x2**2 - y2**2,
    ])


def _hopf_lift(p: np.ndarray) -> np.ndarray:
    """One S^1-lift per point of S^2 (chart switch away from the south pole)."""
    p = np.atleast_2d(p)
    out = np.empty((len(p), 4))
    for i, (px, py, pz) in enumerate(p):
        if pz > -0.5:
            a = np.sqrt((1 + pz) / 2)
            out[i] = [a, 0.0, (px) / (2 * a), (py) / (2 * a)]
        else:
            b = np.sqrt((1 - pz) / 2)
            out[i] = [px / (2 * b), -py / (2 * b), b, 0.0]
    return out


def _hopf_differential(q: np.ndarray) -> np.ndarray:
    x1, y1, x2, y2 = q
    return np.array([
        [2 * x2, 2 * y2, 2 * x1, 2 * y1],
        [2 * y2, -2 * x2, -2 * y1, 2 * x1],
        [2 * x1, 2 * y1, -2 * x2, -2 * y2],
    ])


@dataclass
class QuotientModel:
    """Chart model of X^sigma/S^1 with the induced field and involution."""

    manifold: ManifoldModel
    field: QuasiGradientField
    j_matrix: np.ndarray
    name: str
    lift: object = None          # chart point -> point upstairs

    def check_equivariance(self, upstairs: EquivariantField, n: int = 32,
                           seed: int = 0) -> float:
        return upstairs.equivariance_residual(n_samples=n, seed=seed)


def hopf_quotient(E: EquivariantField, tols=None) -> QuotientModel:
    """S(H)/S^1 = S^2 with j the antipodal map; the field pushes forward.

    Freeness of the S^1-action is automatic on the unit sphere of H; the
    pushforward value dh(v) must be independent of the chosen lift, which
    is checked on samples.
    """
    up = E.base_field

    def v_quot(pts: np.ndarray) -> np.ndarray:
        lifts = _hopf_lift(pts)
        vals = up.v.value(lifts)
        out = np.empty((len(pts), 3))
        for i, (q, vv) in enumerate(zip(lifts, vals)):
            out[i] = _hopf_differential(q) @ vv
        return out

    def f_quot(pts: np.ndarray) -> np.ndarray:
        return up.f.value(_hopf_lift(pts))

    M = make_level_set_manifold(["x**2 + y**2 + z**2 - 1"], None, 3,
                                box=[[-1.3] * 3, [1.3] * 3])
    if tols is not None:
        M.tols = tols
    # lift-independence of the pushforward == the action is free and v equivariant
    rng = np.random.default_rng(7)
    probe = rng.normal(size=(16, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    lifts = _hopf_lift(probe)
    theta = 1.234
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, c, -s], [0, 0, s, c]])
    v1 = np.array([_hopf_differential(q) @ up.v.value_at(q) for q in lifts])
    lifts2 = lifts @ rot.T
    v2 = np.array([_hopf_differential(q) @ up.v.value_at(q) for q in lifts2])
    if np.abs(v1 - v2).max() > 1e-7:
        raise NonFreeAction("pushforward depends on the S^1 lift")

    Fq = QuasiGradientField(
        M, NumericVectorField(3, v_quot), NumericScalarField(3, f_quot),
        name="hopf-quotient")
    return QuotientModel(M, Fq, -np.eye(3), name="s2-antipodal",
                         lift=lambda p: _hopf_lift(np.atleast_2d(p))[0])


def suspension_quotient(E: EquivariantField, tols=None,
                        symbolic_v: list[str] | None = None,
                        symbolic_f: str | None = None) -> QuotientModel:
    """S(H + R)^sigma/S^1 = S^2 x [-1, 1]; j is antipodal on the sphere factor.

    A point (w, c) lifts to (sqrt(1 - c^2) * hopf_lift(w), c); the chart
    collapses each blown-up pole to its exceptional boundary sphere.
    The numeric pushforward is only defined strictly inside the chart,
    so a symbolic chart field may be declared; it is cross-checked
    against the pushforward on interior samples before being accepted.
    """
    up = E.base_field

    def lift(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        w, c = pts[:, :3], pts[:, 3]
        r = np.sqrt(np.clip(1 - c**2, 0.0, None))
        q = _hopf_lift(w) * r[:, None]
        return np.column_stack([q, c])

    def v_quot(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ups = lift(pts)
        vals = up.v.value(ups)
        out = np.empty((len(pts), 4))
        for i, (p, xq, vv) in enumerate(zip(pts, ups, vals)):
            c = p[3]
            r = np.sqrt(max(1 - c**2, 1e-14))
            q = xq[:4] / r
            # dw/dt = dh(q_hat) dq_hat/dt with dq_hat/dt the sphere part of v/r
            vq = vv[:4]
            radial = float(q @ vq)
            v_sph = (vq - radial * q) / r
            out[i, :3] = _hopf_differential(q) @ v_sph
            out[i, 3] = vv[4]
        return out

    def f_quot(pts: np.ndarray) -> np.ndarray:
        return up.f.value(lift(pts))

    M = make_level_set_manifold(["x**2 + y**2 + z**2 - 1"], "w**2 - 1", 4,
                                var_names=["x", "y", "z", "w"],
                                box=[[-1.3, -1.3, -1.3, -1.02],
                                     [1.3, 1.3, 1.3, 1.02]])
    if tols is not None:
        M.tols = tols
    J = np.diag([-1.0, -1.0, -1.0, 1.0])

    if symbolic_v is not None:
        from flowhom.expressions import ScalarField, SymbolicVectorField
        names = ["x", "y", "z", "w"]
        v_sym = SymbolicVectorField.parse(symbolic_v, names)
        f_sym = ScalarField.parse(symbolic_f, names) if symbolic_f else None
        rng = np.random.default_rng(11)
        w = rng.normal(size=(24, 3))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        probe = np.column_stack([w, rng.uniform(-0.9, 0.9, size=24)])
        gap_v = float(np.abs(v_sym.value(probe) - v_quot(probe)).max())
        if gap_v > 1e-8:
            raise NonFreeAction(
                f"declared chart field differs from the pushforward by {gap_v:.2e}")
        if f_sym is not None:
            gap_f = float(np.abs(f_sym.value(probe) - f_quot(probe)).max())
            if gap_f > 1e-8:
                raise NonFreeAction(
                    f"declared chart taming differs from the pullback by {gap_f:.2e}")
        Fq = QuasiGradientField(M, v_sym, f_sym or NumericScalarField(4, f_quot),
                                name="suspension-quotient")
    else:
        Fq = QuasiGradientField(M, NumericVectorField(4, v_quot),
                                NumericScalarField(4, f_quot),
                                name="suspension-quotient")
    return QuotientModel(M, Fq, J, name="s2xI-antipodal", lift=lambda p: lift(p)[0])


# -- j-action on the complex -----------------------------------------------------


def locus_pairing(loci: list[StationaryManifold], j: np.ndarray,
                  tol: float = 1e-5) -> dict[str, tuple[str, bool]]:
    """Map each locus to (j-image locus, j fixes the locus setwise)."""
    pairing = {}
    for b in loci:
        img = b.representative_points @ j.T
        tgt = None
        for c in loci:
            if all(c.distance(p) < max(tol, 1e-4) for p in img):
                tgt = c
                break
        if tgt is None:
            raise NonFreeAction(f"j-image of locus {b.name} is not a detected locus")
        pairing[b.name] = (tgt.name, tgt.name == b.name)
    return pairing


def j_matrix_on_generators(cx: CheckComplex, pairing: dict) -> F2Matrix:
    """Chain-level involution when every j-fixed locus is a point.

    The antipodal map on a j-fixed 2-sphere locus is not captured by a
    signed permutation of its two cellular generators; those runs go
    through the intermediate-quotient complex instead.
    """
    gens = cx.check_generators
    pos = {(g.locus, g.cell_dim): i for i, g in enumerate(gens)}
    J = F2Matrix.zeros(len(gens), len(gens))
    for i, g in enumerate(gens):
        tgt, fixed = pairing[g.locus]
        if fixed and g.cell_dim > 0:
            raise JNotChainMap(
                f"locus {g.locus} is j-fixed with positive-dimensional cells; "
                "use the quotient-complex route")
        J[pos[(tgt, g.cell_dim)], i] = 1
    return J


@dataclass
class InvariantComplex:
    base: CheckComplex
    j_action: F2Matrix
    inv_basis: list[int]                  # bitmasks over base check generators
    d_inv: F2Matrix
    degrees: list[int]

    def betti(self) -> dict[int, int]:
        if not self.degrees:
            return {}
        out = {}
        for d in range(max(self.degrees) + 1):
            cols = [i for i, dd in enumerate(self.degrees) if dd == d]
            sub = F2Matrix([_select(r, cols) for r in self.d_inv.rows], len(cols))
            from_up = [i for i, dd in enumerate(self.degrees) if dd == d + 1]
            img_rows = []
            for j in from_up:
                col = 0
                for bit, i in enumerate(cols):
                    if self.d_inv[i, j]:
                        col |= 1 << bit
                img_rows.append(col)
            out[d] = len(sub.kernel_basis()) - F2Matrix(img_rows, len(cols)).rank()
        return out


def _select(row: int, cols: list[int]) -> int:
    out = 0
    for bit, c in enumerate(cols):
        if (row >> c) & 1:
            out |= 1 << bit
    return out


def invariant_subcomplex(cx: CheckComplex, J: F2Matrix) -> InvariantComplex:
    """Basis of ker(J + 1) with the restricted differential."""
    n = len(cx.check_generators)
    if not ((J @ J) + F2Matrix.identity(n)).is_zero():
        raise JNotChainMap("j_action is not an involution")
    comm = (J @ cx.d_check) + (cx.d_check @ J)
    if not comm.is_zero():
        raise JNotChainMap("j does not commute with the differential")
    JplusI = J + F2Matrix.identity(n)
    basis = JplusI.kernel_basis()
    degs = []
    for vec in basis:
        ds = {cx.check_generators[i].degree for i in vec_indices(vec)}
        if len(ds) != 1:
            raise JNotChainMap("invariant basis vector mixes degrees")
        degs.append(ds.pop())
    # express d(basis) in the basis
    cols_mat = F2Matrix.zeros(n, len(basis))
    for j, vec in enumerate(basis):
        for i in vec_indices(vec):
            cols_mat[i, j] = 1
    d_inv = F2Matrix.zeros(len(basis), len(basis))
    for j, vec in enumerate(basis):
        img = cx.d_check.apply(vec)
        sol = cols_mat.solve(img)
        if sol is None:
            raise JNotChainMap("differential does not preserve the invariant basis")
        for i in vec_indices(sol):
            d_inv[i, j] = 1
    return InvariantComplex(cx, J, basis, d_inv, degs)


def quotient_complex(loci: list[StationaryManifold], pairing: dict,
                     cellular: list[CellularModuli]) -> CheckComplex:
    """Check-complex of X^sigma/Pin(2): j-orbits of loci, transfer moduli.

    Swapped pairs collapse to one locus of the same model; j-fixed
    2-sphere loci become RP2 loci (all internal mod-2 differentials
    vanish).  Moduli matrices transfer by summing over target lifts; the
    identity-like sphere transfers of the catalog descend cellwise.
    """
    reps: dict[str, StationaryManifold] = {}
    orbit: dict[str, str] = {}
    fixed_sphere: dict[str, bool] = {}
    for b in loci:
        tgt, fixed = pairing[b.name]
        rep = min(b.name, tgt)
        orbit[b.name] = rep
        if rep not in reps or b.name == rep:
            reps[rep] = b
        fixed_sphere[rep] = fixed and b.dim == 2

    specs = []
    for rep, b in sorted(reps.items()):
        model = "rp2" if fixed_sphere[rep] else ("sphere2" if b.dim == 2 else "point")
        specs.append(LocusSpec(f"q{rep}", b.kind, b.index, model))
    spec_by = {s.name: s for s in specs}

    seen = {}
    for m in cellular:
        src_rep, dst_rep = orbit[m.source], orbit[m.target]
        if m.source != src_rep:
            continue  # one lift per orbit: trajectories from the chosen lift
        key = (f"q{src_rep}", f"q{dst_rep}")
        src_spec, dst_spec = spec_by[key[0]], spec_by[key[1]]
        shape = (len(dst_spec.cells), len(src_spec.cells))
        acc = seen.setdefault(key, {"dim": m.dim,
                                    "matrix": np.zeros(shape, dtype=int),
                                    "obstructed": m.boundary_obstructed})
        down = np.zeros(shape, dtype=int)
        for i, ci in enumerate(dst_spec.cells):
            for j, cj in enumerate(src_spec.cells):
                if ci - cj == m.dim - (2 if src_spec.model != "point" else 0):
                    # cellwise transfer of an identity-like map
                    up_i = m.target_model.cells.index(ci) if ci in m.target_model.cells else None
                    up_j = m.source_model.cells.index(cj) if cj in m.source_model.cells else None
                    if up_i is not None and up_j is not None:
                        down[i, j] = m.matrix[up_i][up_j]
                    elif ci == cj + m.dim - src_spec.dim:
                        down[i, j] = 1  # middle RP2 cell rides the identity transfer
        acc["matrix"] = (acc["matrix"] + down) % 2

    moduli = []
    for (srcn, dstn), acc in sorted(seen.items()):
        src_spec, dst_spec = spec_by[srcn], spec_by[dstn]
        moduli.append(CellularModuli(
            source=srcn, target=dstn,
            source_model=CellModel(src_spec.model), target_model=CellModel(dst_spec.model),
            dim=acc["dim"], source_dim=src_spec.dim,
            matrix=tuple(tuple(int(v) for v in row) for row in acc["matrix"]),
            boundary_obstructed=acc["obstructed"]))
    return assemble(specs, moduli)


# -- Q and V operators -------------------------------------------------------------


@dataclass
class LineSection:
    """Real-line section model: zero set is a j-invariant great sphere."""

    normal: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points)[:, : len(self.normal)] @ self.normal


def crossing_parity(section: LineSection, start: np.ndarray, end: np.ndarray) -> int:
    """Mod-2 crossing count of a trajectory with the section's zero set.

    f-monotone trajectories meet the zero sphere transversally, so the
    parity is determined by the section signs at the two limit points.
    """
    v0 = float(section(start[None, :])[0])
    v1 = float(section(end[None, :])[0])
    if abs(v0) < 1e-9 or abs(v1) < 1e-9:
        raise NonTransverseSection("section vanishes at a stationary point")
    return int(np.sign(v0) != np.sign(v1))


def q_operator(cx: CheckComplex, moduli: list, section: LineSection) -> F2Matrix:
    """Assemble m(eta): the degree -1 chain map from eta-cut moduli.

    The eta-cut keeps (trajectory, zero-crossing) pairs, so the matrix
    entries between point cells come from the zero-dimensional moduli:
    each isolated trajectory contributes its crossing parity with the
    section's zero set.  Higher-dimensional moduli only produce chains
    that factor through lower cells and are negligible.
    """
    gens = cx.check_generators
    pos = {(g.locus, g.cell_dim): i for i, g in enumerate(gens)}
    M = F2Matrix.zeros(len(gens), len(gens))
    for ms in sorted(moduli, key=lambda m: (m.source.name, m.target.name)):
        if ms.expected_dim != 0 or not ms.classes:
            continue
        srcn, dstn = ms.source.name, ms.target.name
        if (srcn, 0) not in pos or (dstn, 0) not in pos:
            continue
        total = 0
        for cls in ms.classes:
            total ^= crossing_parity(section, cls.ev_minus, cls.ev_plus)
        if total:
            M[pos[(dstn, 0)], pos[(srcn, 0)]] = 1
    # chain-map verification over F2
    comm = (cx.d_check @ M) + (M @ cx.d_check)
    if not comm.is_zero():
        for i, row in enumerate(comm.rows):
            if row:
                j = row.bit_length() - 1
                raise NotChainMap(
                    f"m(eta) fails to commute with d at {gens[i].name} <- {gens[j].name}")
    return M


def v_operator(cx: CheckComplex, zeta_entries: dict | None = None) -> F2Matrix:
    """Assemble m(zeta), the degree -4 operator from a rank-4 cut.

    Every catalog quotient has dimension < 4, so the generic cut-down
    moduli are empty and the operator vanishes; Tier-1 data may declare
    nonzero entries, which are degree-audited here.
    """
    gens = cx.check_generators
    M = F2Matrix.zeros(len(gens), len(gens))
    if zeta_entries:
        pos = {(g.locus, g.cell_dim): i for i, g in enumerate(gens)}
        for (src, dst), bit in zeta_entries.items():
            if bit % 2:
                M[pos[dst], pos[src]] = 1
        degs = [g.degree for g in gens]
        for i in range(M.nrows):
            for j in range(M.ncols):
                if M[i, j] and degs[j] - degs[i] != 4:
                    raise NotChainMap("m(zeta) entry does not drop degree by 4")
        comm = (cx.d_check @ M) + (M @ cx.d_check)
        if not comm.is_zero():
            raise NotChainMap("m(zeta) fails to commute with d")
    return M


def restrict_operator(inv: InvariantComplex, M: F2Matrix) -> F2Matrix:
    """Restrict a j-equivariant chain operator to the invariant subcomplex."""
    n = len(inv.base.check_generators)
    comm = (inv.j_action @ M) + (M @ inv.j_action)
    if not comm.is_zero():
        raise NotChainMap("operator does not commute with j")
    cols_mat = F2Matrix.zeros(n, len(inv.inv_basis))
    for j, vec in enumerate(inv.inv_basis):
        for i in vec_indices(vec):
            cols_mat[i, j] = 1
    out = F2Matrix.zeros(len(inv.inv_basis), len(inv.inv_basis))
    for j, vec in enumerate(inv.inv_basis):
        img = M.apply(vec)
        sol = cols_mat.solve(img)
        if sol is None:
            raise NotChainMap("operator image leaves the invariant subcomplex")
        for i in vec_indices(sol):
            out[i, j] = 1
    return out


def homology_action(inv: InvariantComplex, M: F2Matrix) -> dict:
    """Matrices induced on invariant homology, degree by degree."""
    degs = inv.degrees
    if not degs:
        return {}
    bases = {}
    for d in set(degs):
        cols = [i for i, dd in enumerate(degs) if dd == d]
        sub = F2Matrix([_select(r, cols) for r in inv.d_inv.rows], len(cols))
        kernel = sub.kernel_basis()
        from_up = [i for i, dd in enumerate(degs) if dd == d + 1]
        img = []
        for j in from_up:
            col = 0
            for bit, i in enumerate(cols):
                if inv.d_inv[i, j]:
                    col |= 1 << bit
            img.append(col)
        from flowhom.oracle import HomologyBasis
        bases[d] = (cols, HomologyBasis.build(kernel, img, len(cols)))

    actions = {}
    for d, (cols, basis) in sorted(bases.items()):
        if not basis.reps:
            continue
        # degree shift of M read off from any nonzero entry
        shifts = set()
        for i in range(M.nrows):
            for j in vec_indices(M.rows[i]):
                shifts.add(degs[j] - degs[i])
        shift = shifts.pop() if len(shifts) == 1 else None
        if shift is None:
            continue
        d2 = d - shift
        if d2 not in bases:
            continue
        cols2, basis2 = bases[d2]
        rowmap = {c: bit for bit, c in enumerate(cols2)}
        out = F2Matrix.zeros(len(basis2.reps), len(basis.reps))
        for j, rep in enumerate(basis.reps):
            full = 0
            for bit, c in enumerate(cols):
                if (rep >> bit) & 1:
                    full |= 1 << c
            img_full = M.apply(full)
            img = 0
            for i in vec_indices(img_full):
                if i in rowmap:
                    img |= 1 << rowmap[i]
            coords = basis2.coords(img)
            for i in vec_indices(coords):
                out[i, j] = 1
        actions[d] = out
    return actions


def module_presentation(inv: InvariantComplex, Q: F2Matrix, V: F2Matrix) -> dict:
    """Graded module report with the F[Q, V]/(Q^3) relation checks."""
    betti = inv.betti()
    q_h = homology_action(inv, Q)
    v_h = homology_action(inv, V) if not V.is_zero() else {}
    q3_zero = True
    for d, m1 in q_h.items():
        m2 = q_h.get(d - 1)
        m3 = q_h.get(d - 2)
        if m2 is not None and m3 is not None:
            if not (m3 @ (m2 @ m1)).is_zero():
                q3_zero = False
    qv_commute = True
    for d, mv in v_h.items():
        mq_low, mq_high = q_h.get(d - 4), q_h.get(d)
        if mq_low is not None and mq_high is not None:
            left = mq_low @ mv
            mv2 = v_h.get(d - 1)
            if mv2 is not None:
                if not (left + (mv2 @ mq_high)).is_zero():
                    qv_commute = False
    return {
        "betti": {str(k): v for k, v in sorted(betti.items())},
        "q_on_homology": {str(d): m.to_array().tolist() for d, m in sorted(q_h.items())},
        "v_on_homology": {str(d): m.to_array().tolist() for d, m in sorted(v_h.items())},
        "relations": {"Q3_zero": q3_zero, "QV_commute": qv_commute},
    }
