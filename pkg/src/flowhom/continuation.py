"""Continuation maps and chain homotopies from lifted fields.

A homotopy of fields is lifted to X x [-1, 1] in the compactified
parameter chart: the parameter coordinate s drifts by ds/dt =
kappa (1 - s^2), so the endpoint complexes sit on the two boundary
slices and the interpolating moduli are ordinary connecting orbits of
the lifted field.  With the taming function -s, the engine's f-level
slicing is exactly the s = 0 section.  The chain homotopy Psi comes
from a two-parameter lift on X x [-1, 1]^2 whose edge flows reproduce
the three pairwise homotopies exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from flowhom.complexes import CheckComplex, Generator, THETAS
from flowhom.errors import DegreeMismatch, IdentityFailed
from flowhom.expressions import FieldFamily, ScalarField, SymbolicVectorField
from flowhom.f2 import F2Matrix
from flowhom.fields import (BOUNDARY_STABLE, BOUNDARY_UNSTABLE, INTERIOR,
                            QuasiGradientField, StationaryManifold)
from flowhom.flow import count_connections
from flowhom.geometry import ManifoldModel


@dataclass
class Homotopy:
    """Family v_s on a fixed closed manifold, s in [-1, 1], with endpoints."""

    family: FieldFamily
    manifold: ManifoldModel
    kappa: float = 1.0
    name: str = "homotopy"

    def endpoint_field(self, side: int, f_expr: ScalarField | None = None,
                       taming: ScalarField | None = None) -> SymbolicVectorField:
        return self.family.at(float(side))

    def validate_endpoints(self, v0: SymbolicVectorField, v1: SymbolicVectorField,
                           n: int = 32, seed: int = 0) -> float:
        pts = self.manifold.random_points(n, seed=seed, name="homotopy-endpoints")
        worst = 0.0
        for side, v in ((-1.0, v0), (1.0, v1)):
            a = self.family.value(pts, np.full(len(pts), side))
            worst = max(worst, float(np.abs(a - v.value(pts)).max()))
        return worst

    @classmethod
    def constant(cls, F: QuasiGradientField, kappa: float = 1.0) -> "Homotopy":
        s = sp.Symbol("s", real=True)
        fam = FieldFamily(list(F.v.exprs), F.v.symbols, s)
        return cls(fam, F.manifold, kappa, name="constant")


def lift_field(H: Homotopy) -> QuasiGradientField:
    """The lifted quasi-gradient on X x [-1, 1].

    The s-component is stored so that the engine's flow convention
    d(gamma)/dt = -v gives ds/dt = +kappa (1 - s^2): s sweeps from the
    v0 slice to the v1 slice, and the slices are the only stationary
    levels.  The lifted taming function is -s.
    """
    M = H.manifold
    d = M.ambient_dim
    names = [str(sym) for sym in H.family.symbols] + [str(H.family.param)]
    syms = list(H.family.symbols) + [H.family.param]
    s = H.family.param
    exprs = list(H.family.exprs) + [-H.kappa * (1 - s**2)]
    v_lift = SymbolicVectorField(exprs, syms)

    box = np.hstack([M.box, [[-1.02], [1.02]]])
    constraints = list(M.constraints)
    lifted_gs = []
    for g in constraints:
        lifted_gs.append(ScalarField(g.expr, syms))
    rho = ScalarField(s**2 - 1, syms)
    M_lift = ManifoldModel(d + 1, lifted_gs, rho, box, tols=M.tols)
    f_lift = ScalarField(-s, syms)
    return QuasiGradientField(M_lift, v_lift, f_lift, name=f"lift({H.name})")


def lifted_loci(H: Homotopy, loci0: list[StationaryManifold],
                loci1: list[StationaryManifold]) -> tuple[QuasiGradientField, list]:
    """Embed the endpoint loci on the boundary slices of the lifted manifold."""
    F = lift_field(H)
    out = []
    for side, loci, tag in ((-1.0, loci0, "a"), (1.0, loci1, "b")):
        for b in loci:
            pts = np.column_stack([b.representative_points,
                                   np.full(len(b.representative_points), side)])
            model = None
            if b.model is not None:
                span = np.vstack([b.model.span, np.zeros((1, 3))])
                from flowhom.fields import Sphere2Model
                model = Sphere2Model(np.append(b.model.center, side),
                                     b.model.radius, span)
            out.append(StationaryManifold(
                name=f"{b.name}{tag}",
                kind=BOUNDARY_UNSTABLE if side < 0 else BOUNDARY_STABLE,
                index=b.index + (1 if side < 0 else 0),
                dim=b.dim, representative_points=pts,
                f_value=-side, model=model))
    return F, out


@dataclass
class ContinuationEntry:
    source: str
    target: str
    count: int
    expected_dim: int


def continuation_moduli(H: Homotopy, loci0, loci1, seed: int = 0,
                        budget: int = 48, t_max: float = 400.0) -> list[ContinuationEntry]:
    """Zero-dimensional interpolating moduli counts between endpoint loci.

    The expected dimension is ind(B0) - ind(B1) + dim B0 (one more when
    boundary-obstructed); entries are collected for the F-map, i.e. for
    pairs of equal degree.
    """
    F, lift_loci = lifted_loci(H, loci0, loci1)
    by_name = {b.name: b for b in lift_loci}
    entries = []
    for b0 in loci0:
        for b1 in loci1:
            exp_dim = b0.index - b1.index + b0.dim
            if exp_dim != 0 or b0.dim > 0:
                continue
            src, dst = by_name[f"{b0.name}a"], by_name[f"{b1.name}b"]
            count, _ = count_connections(
                F, lift_loci, src, dst, seed=seed, t_max=t_max, budget=budget)
            entries.append(ContinuationEntry(b0.name, b1.name, count % 2, exp_dim))
    return entries


def _block(entries: list[ContinuationEntry], gens0: list[Generator],
           gens1: list[Generator]) -> F2Matrix:
    M = F2Matrix.zeros(len(gens1), len(gens0))
    table = {(e.source, e.target): e.count for e in entries}
    for j, g0 in enumerate(gens0):
        for i, g1 in enumerate(gens1):
            if g0.cell_dim == g1.cell_dim == 0:
                M[i, j] = table.get((g0.locus, g1.locus), 0)
    return M


def build_F(cx0: CheckComplex, cx1: CheckComplex,
            entries: list[ContinuationEntry]) -> F2Matrix:
    """Assemble the continuation chain map

        F = [ F^o_o                  F^u_o d^s_u + d^u_o F^s_u ]
            [ F^o_s    F^s_s + F^u_s d^s_u + d^u_s F^s_u       ]

    mixing v0's d^s_u with v1's d^u_* blocks.
    """
    g0, g1 = cx0.generators, cx1.generators
    F = {}
    for a in THETAS:
        for b in THETAS:
            F[(a, b)] = _block(entries, g0[a], g1[b])
    top_left = F[("o", "o")]
    top_right = (F[("u", "o")] @ cx0.blocks[("s", "u")]) + \
        (cx1.blocks[("u", "o")] @ F[("s", "u")])
    bot_left = F[("o", "s")]
    bot_right = F[("s", "s")] + (F[("u", "s")] @ cx0.blocks[("s", "u")]) + \
        (cx1.blocks[("u", "s")] @ F[("s", "u")])

    n0o, n0s = len(g0["o"]), len(g0["s"])
    n1o, n1s = len(g1["o"]), len(g1["s"])
    out = F2Matrix.zeros(n1o + n1s, n0o + n0s)
    for i in range(n1o):
        for j in range(n0o):
            out[i, j] = top_left[i, j]
        for j in range(n0s):
            out[i, n0o + j] = top_right[i, j]
    for i in range(n1s):
        for j in range(n0o):
            out[n1o + i, j] = bot_left[i, j]
        for j in range(n0s):
            out[n1o + i, n0o + j] = bot_right[i, j]

    degs0 = [g.degree for g in cx0.check_generators]
    degs1 = [g.degree for g in cx1.check_generators]
    for i in range(out.nrows):
        for j in range(out.ncols):
            if out[i, j] and degs1[i] != degs0[j]:
                raise DegreeMismatch(
                    f"F entry {cx1.check_generators[i].name} <- "
                    f"{cx0.check_generators[j].name} is not degree 0")
    return out


def verify_chain_map(Fmat: F2Matrix, cx0: CheckComplex, cx1: CheckComplex) -> dict:
    """Check d1 F = F d0 exactly over F2; failures name the generator."""
    lhs = cx1.d_check @ Fmat
    rhs = Fmat @ cx0.d_check
    diff = lhs + rhs
    if diff.is_zero():
        return {"chain_map": True, "witness": None}
    for i, row in enumerate(diff.rows):
        if row:
            j = row.bit_length() - 1
            return {"chain_map": False,
                    "witness": (cx1.check_generators[i].name,
                                cx0.check_generators[j].name)}
    return {"chain_map": True, "witness": None}


# -- two-parameter interpolation and Psi --------------------------------------


def _smoothstep(t: sp.Symbol) -> sp.Expr:
    """Monotone [-1,1] -> [0,1] bump with flat ends."""
    u = (t + 1) / 2
    return 3 * u**2 - 2 * u**3


@dataclass
class HomotopySquare:
    """Three pairwise homotopies blended over (s, u) in [-1,1]^2.

    Edge flows are exact: u = -1 carries the 01 homotopy in s, s = -1
    the 02 homotopy in u, s = +1 the 12 homotopy in u, and u = +1 is
    constantly v2.
    """

    h01: Homotopy
    h02: Homotopy
    h12: Homotopy
    kappa: float = 1.0

    def lifted_field(self) -> QuasiGradientField:
        M = self.h01.manifold
        xs = list(self.h01.family.symbols)
        s = sp.Symbol("s_cont", real=True)
        u = sp.Symbol("u_cont", real=True)
        v01 = [e.subs(self.h01.family.param, s) for e in self.h01.family.exprs]
        v02 = [e.subs(self.h02.family.param, u) for e in self.h02.family.exprs]
        v12 = [e.subs(self.h12.family.param, u) for e in self.h12.family.exprs]
        v0 = [e.subs(self.h01.family.param, -1) for e in self.h01.family.exprs]
        v1 = [e.subs(self.h01.family.param, 1) for e in self.h01.family.exprs]
        p, q = _smoothstep(u), _smoothstep(s)
        exprs = []
        for k in range(len(xs)):
            blend = (1 - q) * v02[k] + q * v12[k] \
                + (1 - p) * (v01[k] - (1 - q) * v0[k] - q * v1[k])
            exprs.append(sp.expand(blend))
        syms = xs + [s, u]
        exprs = [sp.expand(e) for e in exprs]
        exprs.append(-self.kappa * (1 - s**2))
        exprs.append(-self.kappa * (1 - u**2))
        v_hat = SymbolicVectorField(exprs, syms)

        box = np.hstack([M.box, [[-1.02, -1.02], [1.02, 1.02]]])
        gs = [ScalarField(g.expr, syms) for g in M.constraints]
        rho = ScalarField(sp.Rational(1, 2) * (s**2 + u**2) - 1, syms)
        M_hat = ManifoldModel(M.ambient_dim + 2, gs, rho, box, tols=M.tols)
        f_hat = ScalarField(-(s + u) / 2, syms)
        return QuasiGradientField(M_hat, v_hat, f_hat, name="psi-square")


def psi_moduli(square: HomotopySquare, loci0, loci2, seed: int = 0,
               budget: int = 48, t_max: float = 600.0) -> list[ContinuationEntry]:
    """Counts of isolated two-parameter trajectories (degree +1 slots)."""
    F = square.lifted_field()
    corner_lo, corner_hi = -1.0, 1.0
    lifted = []
    for side, loci, tag in ((corner_lo, loci0, "a"), (corner_hi, loci2, "b")):
        for b in loci:
            pts = np.column_stack([
                b.representative_points,
                np.full(len(b.representative_points), side),
                np.full(len(b.representative_points), side)])
            lifted.append(StationaryManifold(
                name=f"{b.name}{tag}",
                kind=BOUNDARY_UNSTABLE if side < 0 else BOUNDARY_STABLE,
                index=b.index + (2 if side < 0 else 0),
                dim=b.dim, representative_points=pts, f_value=-side))
    by_name = {b.name: b for b in lifted}
    entries = []
    for b0 in loci0:
        for b2 in loci2:
            exp_dim = b0.index - b2.index + b0.dim + 1
            if exp_dim != 0 or b0.dim > 0:
                continue
            src, dst = by_name[f"{b0.name}a"], by_name[f"{b2.name}b"]
            count, _ = count_connections(
                F, lifted, src, dst, seed=seed, t_max=t_max, budget=budget)
            entries.append(ContinuationEntry(b0.name, b2.name, count % 2, exp_dim))
    return entries


def build_Psi(cx0: CheckComplex, cx2: CheckComplex,
              entries: list[ContinuationEntry]) -> F2Matrix:
    """Assemble Psi with the same block pattern as the continuation map."""
    g0, g2 = cx0.generators, cx2.generators
    P = {(a, b): _block(entries, g0[a], g2[b]) for a in THETAS for b in THETAS}
    top_left = P[("o", "o")]
    top_right = (P[("u", "o")] @ cx0.blocks[("s", "u")]) + \
        (cx2.blocks[("u", "o")] @ P[("s", "u")])
    bot_left = P[("o", "s")]
    bot_right = P[("s", "s")] + (P[("u", "s")] @ cx0.blocks[("s", "u")]) + \
        (cx2.blocks[("u", "s")] @ P[("s", "u")])
    n0o, n0s = len(g0["o"]), len(g0["s"])
    n2o, n2s = len(g2["o"]), len(g2["s"])
    out = F2Matrix.zeros(n2o + n2s, n0o + n0s)
    for i in range(n2o):
        for j in range(n0o):
            out[i, j] = top_left[i, j]
        for j in range(n0s):
            out[i, n0o + j] = top_right[i, j]
    for i in range(n2s):
        for j in range(n0o):
            out[n2o + i, j] = bot_left[i, j]
        for j in range(n0s):
            out[n2o + i, n0o + j] = bot_right[i, j]
    return out


def verify_psi_identity(Psi: F2Matrix, F02: F2Matrix, F12: F2Matrix, F01: F2Matrix,
                        cx0: CheckComplex, cx2: CheckComplex) -> dict:
    """Check dPsi + Psi d = F02 + F12 F01 exactly over F2."""
    lhs = (cx2.d_check @ Psi) + (Psi @ cx0.d_check)
    rhs = F02 + (F12 @ F01)
    diff = lhs + rhs
    if diff.is_zero():
        return {"identity": True, "witness": None}
    for i, row in enumerate(diff.rows):
        if row:
            j = row.bit_length() - 1
            return {"identity": False,
                    "witness": (cx2.check_generators[i].name,
                                cx0.check_generators[j].name)}
    return {"identity": True, "witness": None}
