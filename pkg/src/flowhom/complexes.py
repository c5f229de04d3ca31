"""The check-complex: block differential, F2 homology, degree audits.

Generators are cells of stationary-locus models graded by
deg = dim(cell) + ind(B); the differential is the 2x2 block matrix

    [ d^o_o            d^u_o d^s_u ]
    [ d^o_s    d^s_s + d^u_s d^s_u ]

on C^o + C^s, where the boundary-obstructed moduli only ever appear
inside the composite terms through C^u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from flowhom.errors import DegreeMismatch, DSquaredNonzero
from flowhom.f2 import F2Matrix, vec_indices
from flowhom.strata import CellModel, CellularModuli

THETAS = ("o", "s", "u")
KIND_TO_THETA = {"interior": "o", "boundary-stable": "s", "boundary-unstable": "u"}


@dataclass(frozen=True)
class Generator:
    locus: str
    cell_dim: int
    index: int
    theta: str

    @property
    def degree(self) -> int:
        return self.cell_dim + self.index

    @property
    def name(self) -> str:
        return f"{self.locus}[{self.cell_dim}]"


def degree_of(g: Generator) -> int:
    """Degree of a generator: dim of its chain plus the Morse index."""
    return g.degree


@dataclass(frozen=True)
class LocusSpec:
    name: str
    kind: str                 # interior | boundary-stable | boundary-unstable
    index: int
    model: str = "point"      # point | sphere2 | rp2

    @property
    def theta(self) -> str:
        return KIND_TO_THETA[self.kind]

    @property
    def cells(self):
        return CellModel(self.model).cells

    @property
    def dim(self) -> int:
        return CellModel(self.model).dim


@dataclass
class CheckComplex:
    """Graded F2 complex with the assembled block differential."""

    loci: list[LocusSpec]
    generators: dict[str, list[Generator]]        # per theta
    blocks: dict[tuple[str, str], F2Matrix]       # (src, dst) -> d^src_dst
    check_generators: list[Generator] = field(init=False)
    d_check: F2Matrix = field(init=False)

    def __post_init__(self):
        self.check_generators = self.generators["o"] + self.generators["s"]
        no, ns = len(self.generators["o"]), len(self.generators["s"])
        d = F2Matrix.zeros(no + ns, no + ns)
        oo = self.blocks[("o", "o")]
        os_ = self.blocks[("o", "s")]
        su = self.blocks[("s", "u")]
        uo = self.blocks[("u", "o")]
        us = self.blocks[("u", "s")]
        ss = self.blocks[("s", "s")]
        top_right = uo @ su
        bot_right = ss + (us @ su)
        for i in range(no):
            for j in range(no):
                d[i, j] = oo[i, j]
            for j in range(ns):
                d[i, no + j] = top_right[i, j]
        for i in range(ns):
            for j in range(no):
                d[no + i, j] = os_[i, j]
            for j in range(ns):
                d[no + i, no + j] = bot_right[i, j]
        self.d_check = d

    # -- audits --------------------------------------------------------------

    def degrees(self) -> list[int]:
        return [g.degree for g in self.check_generators]

    def audit_degree(self) -> list[tuple[str, str]]:
        """Nonzero entries of d_check must drop degree by exactly one."""
        degs = self.degrees()
        bad = []
        for i, gi in enumerate(self.check_generators):
            for j, gj in enumerate(self.check_generators):
                if self.d_check[i, j] and degs[j] - degs[i] != 1:
                    bad.append((gi.name, gj.name))
        return bad

    def verify(self) -> None:
        bad = self.audit_degree()
        if bad:
            raise DegreeMismatch(f"degree-violating entries: {bad[:4]}")
        sq = self.d_check @ self.d_check
        if not sq.is_zero():
            for i, row in enumerate(sq.rows):
                if row:
                    j = vec_indices(row)[0]
                    raise DSquaredNonzero(
                        "d_check^2 != 0, signalling missing broken strata or wrong "
                        f"transversality at {self.check_generators[i].name} <- "
                        f"{self.check_generators[j].name}",
                        witness=(self.check_generators[i].name,
                                 self.check_generators[j].name))

    def index_drop_decomposition(self) -> dict[int, int]:
        """Count of nonzero d_check entries per Morse-index drop."""
        out: dict[int, int] = {}
        for i, gi in enumerate(self.check_generators):
            for j, gj in enumerate(self.check_generators):
                if self.d_check[i, j]:
                    m = gj.index - gi.index
                    out[m] = out.get(m, 0) + 1
        return out

    def summary(self) -> dict:
        betti, _ = f2_homology(self)
        return {
            "n_generators": len(self.check_generators),
            "generator_degrees": self.degrees(),
            "betti": betti,
            "index_drops": self.index_drop_decomposition(),
        }


def assemble(loci: list[LocusSpec], moduli: list[CellularModuli],
             verify: bool = True) -> CheckComplex:
    """Build the check-complex from loci and cellular moduli data."""
    gens: dict[str, list[Generator]] = {t: [] for t in THETAS}
    for spec in sorted(loci, key=lambda s: s.name):
        for c in spec.cells:
            gens[spec.theta].append(Generator(spec.name, c, spec.index, spec.theta))
    pos = {t: {(g.locus, g.cell_dim): i for i, g in enumerate(gens[t])} for t in THETAS}
    spec_by_name = {s.name: s for s in loci}

    blocks = {(a, b): F2Matrix.zeros(len(gens[b]), len(gens[a]))
              for a in THETAS for b in THETAS}
    for m in moduli:
        src, dst = spec_by_name[m.source], spec_by_name[m.target]
        ta, tb = src.theta, dst.theta
        expected = src.index - dst.index + src.dim - 1
        if m.boundary_obstructed:
            expected += 1
        if m.dim != expected:
            raise DegreeMismatch(
                f"moduli {m.source}->{m.target} has dim {m.dim}, expected {expected}")
        M = blocks[(ta, tb)]
        for i, _ in enumerate(dst.cells):
            for j, _ in enumerate(src.cells):
                if m.matrix[i][j] % 2:
                    M[pos[tb][(dst.name, dst.cells[i])],
                      pos[ta][(src.name, src.cells[j])]] = 1
    cx = CheckComplex(sorted(loci, key=lambda s: s.name), gens, blocks)
    if verify:
        cx.verify()
    return cx


def f2_homology(cx: CheckComplex) -> tuple[dict[int, int], dict[int, list[str]]]:
    """Betti numbers per degree and homology generator representatives."""
    degs = cx.degrees()
    if not degs:
        return {}, {}
    gens = cx.check_generators
    n = len(gens)
    by_deg: dict[int, list[int]] = {}
    for i, d in enumerate(degs):
        by_deg.setdefault(d, []).append(i)

    betti: dict[int, int] = {}
    reps: dict[int, list[str]] = {}
    for d in range(0, max(degs) + 1):
        cols = by_deg.get(d, [])
        if not cols:
            betti[d] = 0
            reps[d] = []
            continue
        # boundary out of degree d
        sub = F2Matrix([_select_bits(row, cols) for row in cx.d_check.rows], len(cols))
        kernel = sub.kernel_basis()
        # image arriving from degree d+1, expressed in degree-d coordinates
        cols_up = by_deg.get(d + 1, [])
        img_rows = []
        for j in cols_up:
            col = 0
            for bit, i in enumerate(cols):
                if cx.d_check[i, j]:
                    col |= 1 << bit
            img_rows.append(col)
        img = F2Matrix(img_rows, len(cols))
        rank_img = img.rank()
        betti[d] = len(kernel) - rank_img
        # representatives: kernel vectors independent of the image
        red, piv = img.rref()
        basis_rows = [r for r in red.rows if r]
        chosen = []
        for vec in kernel:
            probe = vec
            for r in basis_rows:
                low = r & -r
                if probe & low:
                    probe ^= r
            if probe:
                basis_rows.append(probe)
                chosen.append(vec)
            if len(chosen) >= betti[d]:
                break
        reps[d] = ["+".join(gens[cols[b]].name for b in vec_indices(v)) for v in chosen]
    return betti, reps


def _select_bits(row: int, cols: list[int]) -> int:
    out = 0
    for bit, c in enumerate(cols):
        if (row >> c) & 1:
            out |= 1 << bit
    return out


def betti_tuple(betti: dict[int, int], top: int | None = None) -> tuple[int, ...]:
    if not betti:
        return ()
    top = max(betti) if top is None else top
    return tuple(betti.get(d, 0) for d in range(top + 1))


# -- Tier-1 exact input -----------------------------------------------------


def tier1_load(data: dict) -> tuple[list[LocusSpec], list[CellularModuli]]:
    """Parse the exact (Tier-1) table format.

    {"loci":  [{"name", "kind", "index", "model"}],
     "moduli": [{"source", "target", "dim", "matrix", "obstructed"?}]}

    Matrices are target-cells x source-cells over {0, 1}.
    """
    loci = [LocusSpec(x["name"], x["kind"], int(x["index"]), x.get("model", "point"))
            for x in data["loci"]]
    by_name = {s.name: s for s in loci}
    moduli = []
    for m in data.get("moduli", []):
        src, dst = by_name[m["source"]], by_name[m["target"]]
        moduli.append(CellularModuli(
            source=src.name, target=dst.name,
            source_model=CellModel(src.model), target_model=CellModel(dst.model),
            dim=int(m["dim"]), source_dim=src.dim,
            matrix=tuple(tuple(int(v) for v in row) for row in m["matrix"]),
            boundary_obstructed=bool(m.get("obstructed", False))))
    return loci, moduli
