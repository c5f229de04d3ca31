"""Combinatorial skeleton of delta-chains.

Only the face poset and mod-2 cellular mapping data are modeled; the
analytic local thickenings have no finite description and stay out of
scope.  Stationary-manifold targets carry tiny cellular models (point:
one 0-cell; 2-sphere: a 0-cell and a 2-cell; the intermediate-quotient
RP2 model adds a 1-cell), and every chain map is recorded through mod-2
mapping degrees onto those cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from flowhom.errors import InvalidPoset, NotTransverse

POINT_CELLS = (0,)
SPHERE2_CELLS = (0, 2)
RP2_CELLS = (0, 1, 2)

CELL_MODELS = {"point": POINT_CELLS, "sphere2": SPHERE2_CELLS, "rp2": RP2_CELLS}


@dataclass(frozen=True)
class CellModel:
    """Cellular model of a stationary manifold."""

    name: str

    @property
    def cells(self) -> tuple[int, ...]:
        return CELL_MODELS[self.name]

    @property
    def dim(self) -> int:
        return max(self.cells)


@dataclass
class FacePoset:
    """Graded face poset with the two-middles (diamond) property."""

    dims: dict[str, int]
    downsets: dict[str, frozenset]      # face -> all faces <= it, including itself

    def __post_init__(self):
        self._validate()

    # -- construction ----------------------------------------------------

    @classmethod
    def from_containment(cls, dims: dict[str, int],
                         contains: list[tuple[str, str]]) -> "FacePoset":
        """Build from (sub, super) containment pairs; closure is computed."""
        below: dict[str, set] = {f: {f} for f in dims}
        for sub, sup in contains:
            if sub not in dims or sup not in dims:
                raise InvalidPoset(f"containment names unknown face: {(sub, sup)}")
            below[sup].add(sub)
        changed = True
        while changed:
            changed = False
            for f in dims:
                grown = set(below[f])
                for g in list(below[f]):
                    grown |= below[g]
                if grown != below[f]:
                    below[f] = grown
                    changed = True
        return cls(dims, {f: frozenset(s) for f, s in below.items()})

    @classmethod
    def from_simplices(cls, simplices: list[tuple]) -> "FacePoset":
        """Face poset of a pure simplicial complex given by top simplices."""
        faces: set[tuple] = set()
        for s in simplices:
            vs = tuple(sorted(set(s)))
            for k in range(1, len(vs) + 1):
                faces.update(combinations(vs, k))
        dims = {str(f): len(f) - 1 for f in faces}
        downs = {}
        for f in faces:
            fs = set(f)
            downs[str(f)] = frozenset(
                str(g) for g in faces if set(g) <= fs)
        return cls(dims, downs)

    @classmethod
    def simplex(cls, dim: int) -> "FacePoset":
        return cls.from_simplices([tuple(range(dim + 1))])

    @classmethod
    def closed_top(cls, dim: int, name: str = "top") -> "FacePoset":
        """A single closed top face with no proper faces (closed manifold model)."""
        return cls({name: dim}, {name: frozenset([name])})

    # -- structure ---------------------------------------------------------

    @property
    def top_dim(self) -> int:
        return max(self.dims.values())

    def faces_of_dim(self, d: int) -> list[str]:
        return sorted(f for f, k in self.dims.items() if k == d)

    def proper_below(self, f: str) -> frozenset:
        return self.downsets[f] - {f}

    def covers(self, f: str) -> list[str]:
        """Faces covered by f (one dimension down, immediate)."""
        d = self.dims[f]
        return sorted(g for g in self.proper_below(f) if self.dims[g] == d - 1)

    def restrict(self, f: str) -> "FacePoset":
        keep = self.downsets[f]
        return FacePoset({g: self.dims[g] for g in keep},
                         {g: self.downsets[g] for g in keep})

    # -- validation ----------------------------------------------------------

    def _validate(self):
        for f, down in self.downsets.items():
            if f not in down:
                raise InvalidPoset(f"face {f} missing from its own downset")
            for g in down:
                if g != f and self.dims[g] >= self.dims[f]:
                    raise InvalidPoset(
                        f"face {g} (dim {self.dims[g]}) inside {f} (dim {self.dims[f]})")
        # graded: maximal proper subfaces sit exactly one dimension down
        for f in self.dims:
            proper = self.proper_below(f)
            for g in proper:
                between = [h for h in proper if h != g and g in self.downsets[h]]
                if not between and self.dims[g] != self.dims[f] - 1:
                    raise InvalidPoset(
                        f"containment {g} < {f} skips dimension "
                        f"{self.dims[g]} -> {self.dims[f]} with nothing between")
        # diamond: codimension-2 pairs have exactly two middle faces
        for f in self.dims:
            d = self.dims[f]
            for g in self.proper_below(f):
                if self.dims[g] != d - 2:
                    continue
                middles = [h for h in self.proper_below(f)
                           if self.dims[h] == d - 1 and g in self.downsets[h]]
                if len(middles) != 2:
                    raise InvalidPoset(
                        f"{len(middles)} middle faces between {g} and {f}; need 2")


@dataclass
class DeltaChain:
    """A chain over one stationary manifold, recorded by cellular degrees.

    `degrees[i]` is the mod-2 mapping degree onto cell i of the target's
    cellular model; it may only be nonzero when that cell's dimension
    equals the chain dimension.
    """

    skeleton: FacePoset
    target: str                   # locus name
    model: CellModel
    degrees: tuple[int, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.skeleton.top_dim
        if len(self.degrees) != len(self.model.cells):
            raise ValueError("degree vector does not match the cellular model")
        for deg, cdim in zip(self.degrees, self.model.cells):
            if deg % 2 and cdim != self.dim:
                raise ValueError(
                    f"nonzero degree on a dim-{cdim} cell of a dim-{self.dim} chain")

    @classmethod
    def generator(cls, target: str, model: CellModel, cell_dim: int) -> "DeltaChain":
        """The fundamental chain of one cell of the target's model."""
        skel = FacePoset.closed_top(cell_dim)
        degs = tuple(1 if c == cell_dim else 0 for c in model.cells)
        return cls(skel, target, model, degs)


def boundary_faces(sigma: DeltaChain) -> list[DeltaChain]:
    """Restrictions of the chain to the codimension-1 faces of its skeleton."""
    out = []
    for top in sigma.skeleton.faces_of_dim(sigma.dim):
        for f in sigma.skeleton.covers(top):
            sub = sigma.skeleton.restrict(f)
            degs = tuple(0 for _ in sigma.model.cells)
            out.append(DeltaChain(sub, sigma.target, sigma.model, degs))
    return out


def boundary_multiset(poset: FacePoset) -> dict[str, int]:
    """Codim-2 face counts of d(d(top faces)); all even iff d0^2 = 0."""
    counts: dict[str, int] = {}
    for top in poset.faces_of_dim(poset.top_dim):
        for f in poset.covers(top):
            for g in poset.covers(f):
                counts[g] = counts.get(g, 0) + 1
    return counts


def is_negligible(sigma: DeltaChain, ambient_dim: int | None = None) -> bool:
    """True iff the cell map factors through lower cells, or the chain is too big.

    Chains of dimension >= dim(ambient complex) + 2 are identically zero.
    """
    ambient = sigma.model.dim if ambient_dim is None else ambient_dim
    if sigma.dim >= ambient + 2:
        return True
    return all(deg % 2 == 0 for deg, cdim in zip(sigma.degrees, sigma.model.cells)
               if cdim == sigma.dim)


@dataclass
class CellularModuli:
    """Cellular shadow of a moduli space M(B, B').

    `matrix[i][j]` is the mod-2 degree with which the part of M sitting
    over cell j of B (through ev_-) maps onto cell i of B' (through
    ev_+).  Entries are only meaningful when the cell dimensions satisfy
    dim c_i = dim c_j + dim M - dim B; the rest must vanish.
    """

    source: str
    target: str
    source_model: CellModel
    target_model: CellModel
    dim: int
    source_dim: int
    matrix: tuple[tuple[int, ...], ...]
    transverse: bool = True
    boundary_obstructed: bool = False

    def __post_init__(self):
        shift = self.dim - self.source_dim
        for i, ci in enumerate(self.target_model.cells):
            for j, cj in enumerate(self.source_model.cells):
                if self.matrix[i][j] % 2 and ci != cj + shift:
                    raise ValueError(
                        f"moduli entry ({i},{j}) violates the dimension shift {shift}")


def fiber_product(sigma: DeltaChain, moduli: CellularModuli) -> DeltaChain | None:
    """sigma x_B M as a chain over the moduli target; None is the zero chain."""
    if sigma.target != moduli.source:
        raise ValueError(f"chain over {sigma.target} cannot pair with moduli "
                         f"from {moduli.source}")
    if not moduli.transverse:
        raise NotTransverse(f"moduli {moduli.source}->{moduli.target} not transverse")
    new_dim = sigma.dim + moduli.dim - moduli.source_dim
    if new_dim < 0:
        return None
    degs = []
    for i, ci in enumerate(moduli.target_model.cells):
        acc = 0
        for j, _ in enumerate(moduli.source_model.cells):
            acc ^= (moduli.matrix[i][j] & sigma.degrees[j])
        degs.append(acc if ci == new_dim else 0)
    out = DeltaChain(FacePoset.closed_top(new_dim), moduli.target,
                     moduli.target_model, tuple(degs))
    if is_negligible(out):
        return None
    return out
