"""Independent brute-force verifiers.

Nothing here shares code paths with the shooting pipeline: the grid
Conley index integrates with its own fixed-step RK4 over a cubical
outer approximation, and the homology backends (cubical, cellular,
simplicial) are plain F2 eliminations.  These outputs are the ground
truth the engine is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from flowhom.errors import DSquaredNonzero, NotIsolating, TruncationTooLow
from flowhom.f2 import F2Matrix, rank_sparse, vec_indices

# -- cubical machinery -------------------------------------------------------


def _rk4_map(rhs, points: np.ndarray, tau: float, n_steps: int = 8) -> np.ndarray:
    h = tau / n_steps
    x = np.array(points, dtype=float)
    for _ in range(n_steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@dataclass
class CubicalGrid:
    box: np.ndarray                  # (2, d)
    resolution: np.ndarray           # cubes per axis

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(2, -1)
        self.d = self.box.shape[1]
        res = np.asarray(self.resolution, dtype=int).ravel()
        self.resolution = np.broadcast_to(res, (self.d,)).copy() if res.size in (1, self.d) \
            else res
        if self.resolution.size != self.d:
            raise ValueError("resolution must be scalar or one entry per axis")
        self.width = (self.box[1] - self.box[0]) / self.resolution

    def cube_of(self, points: np.ndarray) -> np.ndarray:
        """Floor indices; out-of-grid points keep their true (outside) index."""
        pts = np.nan_to_num(np.asarray(points, dtype=float),
                            nan=1e6, posinf=1e6, neginf=-1e6)
        return np.floor((pts - self.box[0]) / self.width).astype(int)

    def center(self, cube: tuple) -> np.ndarray:
        return self.box[0] + (np.asarray(cube) + 0.5) * self.width

    def samples(self, cube: tuple) -> np.ndarray:
        """Dense sample points of a cube: a 3^d lattice for d <= 3, corners above."""
        base = self.box[0] + np.asarray(cube) * self.width
        grid_pts = [0.02, 0.5, 0.98] if self.d <= 3 else [0.02, 0.98]
        offs = np.array(list(product(grid_pts, repeat=self.d)))
        return base + offs * self.width

    def all_cubes(self):
        return product(*(range(int(r)) for r in self.resolution))

    def inside(self, cube) -> bool:
        return all(0 <= c < r for c, r in zip(cube, self.resolution))

    def neighbors(self, cube):
        for off in product((-1, 0, 1), repeat=self.d):
            if all(o == 0 for o in off):
                continue
            yield tuple(c + o for c, o in zip(cube, off))


def _cubical_pair_betti(top_N: set, top_L: set, d: int) -> tuple[int, ...]:
    """F2 Betti numbers of the relative cubical pair (N, L).

    Cells are elementary faces of the top cubes; the relative complex
    keeps faces of N that are not faces of L.
    """
    def faces_of(tops: set) -> set:
        cells = set()
        for cube in tops:
            lo = tuple(cube)
            for ext in product((0, 1), repeat=d):
                if all(e == 1 for e in ext):
                    cells.add((lo, ext))
                    continue
                anchors = [(lo[i], lo[i] + 1) if ext[i] == 1 else (lo[i], lo[i] + 1)
                           for i in range(d)]
                for pick in product(*[(0, 1) if ext[i] == 0 else (0,) for i in range(d)]):
                    coord = tuple(lo[i] + (pick[i] if ext[i] == 0 else 0)
                                  for i in range(d))
                    cells.add((coord, ext))
        return cells

    cells_N = faces_of(top_N)
    cells_L = faces_of(top_L)
    rel = sorted(cells_N - cells_L)
    by_dim: dict[int, list] = {}
    for c in rel:
        by_dim.setdefault(sum(c[1]), []).append(c)
    index = {k: {c: i for i, c in enumerate(v)} for k, v in by_dim.items()}

    def boundary_cols(k: int) -> list[int]:
        cols = []
        rows = index.get(k - 1, {})
        for c in by_dim.get(k, []):
            coord, ext = c
            col = 0
            for axis in range(d):
                if ext[axis] == 0:
                    continue
                new_ext = ext[:axis] + (0,) + ext[axis + 1:]
                for side in (0, 1):
                    new_coord = coord[:axis] + (coord[axis] + side,) + coord[axis + 1:]
                    f = (new_coord, new_ext)
                    if f in rows:
                        col ^= 1 << rows[f]
            cols.append(col)
        return cols

    maxdim = max(by_dim) if by_dim else 0
    ranks = {k: rank_sparse(boundary_cols(k)) for k in range(1, maxdim + 1)}
    betti = []
    for k in range(0, maxdim + 1):
        nk = len(by_dim.get(k, []))
        betti.append(nk - ranks.get(k, 0) - ranks.get(k + 1, 0))
    while betti and betti[-1] == 0:
        betti.pop()
    return tuple(betti)


def grid_conley_index(rhs, box, resolution, tau: float | None = None,
                      mask=None, wall_axes: tuple[int, ...] = (),
                      inflate: int = 0) -> dict:
    """Reduced F2 homology of a combinatorial index pair.

    `rhs` is the flow right-hand side dx/dt = rhs(x) on the chart.  A
    cubical outer approximation of the time-tau map is pruned to the
    maximal invariant set S, the exit set is grown to an absorbing
    collar L, and the relative homology of (S + L, L) is returned.
    `mask(points) -> bool` excludes cells from N (e.g. to build shells);
    `wall_axes` mark box faces that are true boundary walls of the phase
    space, where touching is allowed because the flow cannot exit.
    """
    grid = CubicalGrid(np.asarray(box), resolution)
    d = grid.d
    cubes = [c for c in grid.all_cubes()]
    if mask is not None:
        centers = np.array([grid.center(c) for c in cubes])
        keep = ~np.asarray(mask(centers), dtype=bool)
        cubes = [c for c, k in zip(cubes, keep) if k]
    N = set(cubes)

    centers = np.array([grid.center(c) for c in cubes])
    speeds = np.linalg.norm(rhs(centers), axis=1)
    if tau is None:
        scale = float(np.median(speeds[speeds > 1e-12])) if (speeds > 1e-12).any() else 1.0
        tau = 1.5 * float(grid.width.max()) / scale
        tau = min(max(tau, 1e-3), 50.0)

    samples = np.stack([grid.samples(c) for c in cubes])
    flat = samples.reshape(-1, d)
    images = _rk4_map(rhs, flat, tau).reshape(len(cubes), -1, d)

    succ: dict[tuple, set] = {}
    for c, img in zip(cubes, images):
        hit = set(map(tuple, grid.cube_of(img)))
        out = set()
        for hcube in hit:
            out.add(hcube)
            if inflate:
                out.update(grid.neighbors(hcube))
        succ[c] = out

    # maximal invariant part: every cube needs successors and predecessors in S
    S = set(N)
    changed = True
    while changed:
        changed = False
        pred: dict[tuple, set] = {c: set() for c in S}
        for c in S:
            for t in succ[c]:
                if t in pred:
                    pred[t].add(c)
        drop = {c for c in S if not (succ[c] & S) or not pred[c]}
        if drop:
            S -= drop
            changed = True
    if not S:
        return {"betti": (), "n_invariant": 0, "n_pair": (0, 0), "tau": tau}

    # isolation: S may not touch the frontier of N (walls excluded)
    frontier = set()
    for c in N:
        for nb in grid.neighbors(c):
            if nb in N:
                continue
            off_axes = [i for i in range(d) if not (0 <= nb[i] < grid.resolution[i])]
            if off_axes and all(i in wall_axes for i in off_axes):
                continue
            frontier.add(c)
            break
    if S & frontier:
        raise NotIsolating("invariant set touches the frontier of N on the grid")

    # exit collar
    A: set = set()
    new = {t for c in S for t in succ[c] if t in N and t not in S}
    while new:
        A |= new
        new = {t for c in new for t in succ[c] if t in N and t not in S and t not in A}

    betti = _cubical_pair_betti(S | A, A, d)
    return {"betti": betti, "n_invariant": len(S), "n_pair": (len(S | A), len(A)),
            "tau": tau}


# -- cellular homology ---------------------------------------------------------


def cellular_homology(cell_counts: list[int], boundaries: list) -> tuple[int, ...]:
    """Betti numbers of a finite CW complex with mod-2 boundary matrices.

    `boundaries[k]` maps k-cells to (k-1)-cells, given as a list of rows
    or a numpy array; `boundaries[0]` is ignored.
    """
    mats = []
    for k in range(len(cell_counts)):
        if k == 0 or cell_counts[k] == 0 or cell_counts[k - 1] == 0:
            mats.append(None)
            continue
        mats.append(F2Matrix.from_array(np.asarray(boundaries[k])))
    for k in range(1, len(mats)):
        if mats[k] is not None and mats[k - 1] is not None:
            if not (mats[k - 1] @ mats[k]).is_zero():
                raise DSquaredNonzero(f"cellular d^2 != 0 between dims {k} and {k-2}")
    betti = []
    for k, nk in enumerate(cell_counts):
        r_in = mats[k].rank() if k < len(mats) and mats[k] is not None else 0
        r_out = (mats[k + 1].rank()
                 if k + 1 < len(mats) and mats[k + 1] is not None else 0)
        betti.append(nk - r_in - r_out)
    while betti and betti[-1] == 0:
        betti.pop()
    return tuple(betti)


# -- simplicial complexes with cup/cap products --------------------------------


class SimplicialComplex:
    """Finite simplicial complex over F2 with Alexander-Whitney products."""

    def __init__(self, top_simplices: list[tuple]):
        faces: set[tuple] = set()
        for s in top_simplices:
            vs = tuple(sorted(set(s)))
            for k in range(1, len(vs) + 1):
                faces.update(combinations(vs, k))
        self.by_dim: dict[int, list[tuple]] = {}
        for f in sorted(faces):
            self.by_dim.setdefault(len(f) - 1, []).append(f)
        self.dim = max(self.by_dim) if self.by_dim else 0
        self.index = {k: {s: i for i, s in enumerate(v)} for k, v in self.by_dim.items()}
        self._homology: dict[int, "HomologyBasis"] = {}

    def n_cells(self, k: int) -> int:
        return len(self.by_dim.get(k, []))

    def boundary_columns(self, k: int) -> list[int]:
        rows = self.index.get(k - 1, {})
        cols = []
        for s in self.by_dim.get(k, []):
            col = 0
            for i in range(len(s)):
                f = s[:i] + s[i + 1:]
                col ^= 1 << rows[f]
            cols.append(col)
        return cols

    def boundary_matrix(self, k: int) -> F2Matrix:
        cols = self.boundary_columns(k)
        rows = [0] * self.n_cells(k - 1)
        for j, col in enumerate(cols):
            for i in vec_indices(col):
                rows[i] |= 1 << j
        return F2Matrix(rows, len(cols))

    def betti(self) -> tuple[int, ...]:
        ranks = {k: rank_sparse(self.boundary_columns(k))
                 for k in range(1, self.dim + 1)}
        out = [self.n_cells(k) - ranks.get(k, 0) - ranks.get(k + 1, 0)
               for k in range(self.dim + 1)]
        while out and out[-1] == 0:
            out.pop()
        return tuple(out)

    def homology(self, k: int) -> "HomologyBasis":
        if k not in self._homology:
            if self.n_cells(k) == 0:
                self._homology[k] = HomologyBasis([], [], 0)
            else:
                dk = self.boundary_matrix(k) if k >= 1 else F2Matrix.zeros(1, self.n_cells(0))
                kernel = dk.kernel_basis()
                image = []
                if self.n_cells(k + 1):
                    up = self.boundary_matrix(k + 1)
                    image = [r for r in up.transpose().rows if r]
                self._homology[k] = HomologyBasis.build(kernel, image, self.n_cells(k))
        return self._homology[k]

    # Alexander-Whitney cup and cap (signs are moot over F2)

    def cup(self, c1: dict, p: int, c2: dict, q: int) -> dict:
        out: dict[tuple, int] = {}
        for s in self.by_dim.get(p + q, []):
            front, back = s[: p + 1], s[p:]
            if c1.get(front, 0) & c2.get(back, 0):
                out[s] = out.get(s, 0) ^ 1
        return {k: v for k, v in out.items() if v}

    def cap(self, c: dict, p: int, chain: int, k: int) -> int:
        """Cap a p-cochain with a k-chain (bitmask), landing in dim k - p."""
        rows = self.index.get(k - p, {})
        out = 0
        for j in vec_indices(chain):
            s = self.by_dim[k][j]
            front, back = s[: k - p + 1], s[k - p:]
            if c.get(back, 0):
                out ^= 1 << rows[front]
        return out

    def is_cocycle(self, c: dict, p: int) -> bool:
        for s in self.by_dim.get(p + 1, []):
            acc = 0
            for i in range(len(s)):
               acc ^= c.get(s[:i] + s[i + 1:], 0)
            if acc:
                return False
        return True

    def cap_action_on_homology(self, c: dict, p: int, k: int) -> F2Matrix:
        """Matrix of [z] -> [c cap z]: H_k -> H_{k-p} in homology bases."""
        src, dst = self.homology(k), self.homology(k - p)
        mat = F2Matrix.zeros(len(dst.reps), max(len(src.reps), 1))
        for j, z in enumerate(src.reps):
            w = self.cap(c, p, z, k)
            coords = dst.coords(w)
            for i in vec_indices(coords):
                mat[i, j] = 1
        mat.ncols = len(src.reps)
        return mat


@dataclass
class HomologyBasis:
    reps: list[int]
    image_basis: list[int]
    n_cells: int

    @classmethod
    def build(cls, kernel: list[int], image: list[int], n_cells: int) -> "HomologyBasis":
        red = F2Matrix(list(image), n_cells)
        basis_rows = [r for r in red.rref()[0].rows if r]
        image_rref = list(basis_rows)
        reps = []
        for vec in kernel:
            probe = vec
            for r in basis_rows:
                low = r & -r
                if probe & low:
                    probe ^= r
            if probe:
                basis_rows.append(probe)
                reps.append(vec)
        return cls(reps, image_rref, n_cells)

    def coords(self, vec: int) -> int:
        """Express a cycle in the homology basis (mod boundaries)."""
        cols = self.reps + self.image_basis
        if not cols:
            return 0
        rows = [0] * self.n_cells
        for j, c in enumerate(cols):
            for i in vec_indices(c):
                rows[i] |= 1 << j
        sol = F2Matrix(rows, len(cols)).solve(vec)
        if sol is None:
            raise ValueError("vector is not a cycle modulo boundaries")
        return sol & ((1 << len(self.reps)) - 1)


def simplicial_product(K1: SimplicialComplex, K2: SimplicialComplex) -> tuple:
    """Staircase triangulation of |K1| x |K2| and the two projections."""
    tops = []
    tops1 = [s for k, v in K1.by_dim.items() for s in v
             if k == K1.dim or not _has_coface(K1, s)]
    tops2 = [s for k, v in K2.by_dim.items() for s in v
             if k == K2.dim or not _has_coface(K2, s)]
    for s1 in tops1:
        for s2 in tops2:
            p, q = len(s1) - 1, len(s2) - 1
            for path in _staircases(p, q):
                tops.append(tuple((s1[i], s2[j]) for i, j in path))
    prod = SimplicialComplex(tops)
    return prod, (lambda v: v[0]), (lambda v: v[1])


def _has_coface(K: SimplicialComplex, s: tuple) -> bool:
    k = len(s) - 1
    ss = set(s)
    for t in K.by_dim.get(k + 1, []):
        if ss <= set(t):
            return True
    return False


def _staircases(p: int, q: int):
    """Monotone lattice paths from (0,0) to (p,q); each is a (p+q)-simplex."""
    if p == 0 and q == 0:
        yield [(0, 0)]
        return
    for path in _staircase_rec((0, 0), (p, q)):
        yield path


def _staircase_rec(start, end):
    if start == end:
        yield [end]
        return
    i, j = start
    p, q = end
    if i < p:
        for rest in _staircase_rec((i + 1, j), end):
            yield [start] + rest
    if j < q:
        for rest in _staircase_rec((i, j + 1), end):
            yield [start] + rest


def pullback_cocycle(prod: SimplicialComplex, proj, c: dict, p: int) -> dict:
    """Pull a p-cochain back along a simplicial projection."""
    out = {}
    for s in prod.by_dim.get(p, []):
        base = tuple(proj(v) for v in s)
        if len(set(base)) != p + 1:
            continue
        key = tuple(sorted(set(base)))
        if c.get(key, 0):
            out[s] = 1
    return out


# -- concrete models ------------------------------------------------------------


_PHI = (1 + np.sqrt(5)) / 2


def icosahedron() -> tuple[np.ndarray, list[tuple]]:
    """Vertex coordinates and faces of the icosahedron boundary."""
    verts = []
    for a, b in [(1, _PHI), (-1, _PHI), (1, -_PHI), (-1, -_PHI)]:
        verts += [(0, a, b), (a, b, 0), (b, 0, a)]
    verts = np.array(verts, dtype=float)
    d2 = ((verts[:, None, :] - verts[None, :, :]) ** 2).sum(-1)
    edge2 = np.sort(np.unique(np.round(d2, 6)))[1]
    adj = (np.abs(d2 - edge2) < 1e-6)
    faces = []
    n = len(verts)
    for i, j, k in combinations(range(n), 3):
        if adj[i, j] and adj[j, k] and adj[i, k]:
            faces.append((i, j, k))
    return verts, faces


@dataclass
class QuotientModel:
    """Simplicial quotient of a free involution, with its w1 cocycle."""

    complex: SimplicialComplex
    w1: dict
    name: str = "quotient"


def rp2_model() -> QuotientModel:
    """RP^2 as the antipodal quotient of the icosahedron, w1 from the cover.

    Each base vertex keeps a preferred lift; an edge's w1 value is 1
    exactly when joining the preferred lifts is not an edge upstairs,
    i.e. when the lift switches sheets.
    """
    verts, faces = icosahedron()
    n = len(verts)
    antipode = {}
    for i in range(n):
        j = int(np.argmin(np.linalg.norm(verts + verts[i], axis=1)))
        antipode[i] = j
    reps = sorted({min(i, antipode[i]) for i in range(n)})
    label = {v: reps.index(min(v, antipode[v])) for v in range(n)}

    base_faces = {tuple(sorted(label[v] for v in f)) for f in faces}
    K = SimplicialComplex(sorted(base_faces))

    edge_set = {tuple(sorted((a, b))) for f in faces for a, b in combinations(f, 2)}
    w1 = {}
    for e in K.by_dim[1]:
        lift_a, lift_b = reps[e[0]], reps[e[1]]
        w1[e] = 0 if tuple(sorted((lift_a, lift_b))) in edge_set else 1
    if not K.is_cocycle(w1, 1):
        raise ValueError("w1 construction failed: not a cocycle")
    # must not be a coboundary: check it pairs nontrivially with some cycle
    H1 = K.homology(1)
    pairing = [sum(w1.get(K.by_dim[1][j], 0) for j in vec_indices(z)) % 2
               for z in H1.reps]
    if not any(pairing):
        raise ValueError("w1 construction failed: cocycle is a coboundary")
    return QuotientModel(K, w1, name="rp2")


def point_model() -> QuotientModel:
    return QuotientModel(SimplicialComplex([(0,)]), {}, name="point")


# -- Borel homology --------------------------------------------------------------


@dataclass
class BorelModule:
    betti: tuple[int, ...]
    q_action: dict[int, list[list[int]]]
    v_action: dict[int, list[list[int]]]
    relations: dict[str, bool]
    degree_cap: int

    def report(self) -> dict:
        return {
            "betti": list(self.betti),
            "q_action": {str(k): v for k, v in self.q_action.items()},
            "v_action": {str(k): v for k, v in self.v_action.items()},
            "relations": self.relations,
            "degree_cap": self.degree_cap,
        }


def borel_homology(model: QuotientModel, v_cocycle: dict | None = None,
                   join_stage: int = 4) -> BorelModule:
    """Truncated Borel homology of a free Pin(2)-space from its quotient model.

    For a free action the Borel construction deformation-retracts to the
    quotient; the join stage of the classifying-space model only caps
    the trustworthy degree range (stage n is reliable below degree n-1).
    Q acts by cap product with w1 of the S^1-quotient double cover; V by
    cap with the declared 4-cocycle of the quaternionic line bundle.
    """
    K = model.complex
    cap_degree = join_stage - 1
    if cap_degree < K.dim:
        raise TruncationTooLow(
            f"join stage {join_stage} resolves degrees < {cap_degree + 1} "
            f"but the quotient has dimension {K.dim}")
    betti = K.betti()

    q_act, v_act = {}, {}
    for k in range(1, K.dim + 1):
        q_act[k] = K.cap_action_on_homology(model.w1, 1, k).to_array().tolist()
    if v_cocycle is not None:
        if not K.is_cocycle(v_cocycle, 4):
            raise ValueError("declared V-cocycle is not closed")
        for k in range(4, K.dim + 1):
            v_act[k] = K.cap_action_on_homology(v_cocycle, 4, k).to_array().tolist()

    # ring relations on homology
    q3_zero = True
    for k in range(3, K.dim + 1):
        m1 = K.cap_action_on_homology(model.w1, 1, k)
        m2 = K.cap_action_on_homology(model.w1, 1, k - 1)
        m3 = K.cap_action_on_homology(model.w1, 1, k - 2)
        if not (m3 @ (m2 @ m1)).is_zero():
            q3_zero = False
    qv_commute = True
    if v_cocycle is not None:
        for k in range(5, K.dim + 1):
            qv = K.cap_action_on_homology(model.w1, 1, k - 4) @ \
                K.cap_action_on_homology(v_cocycle, 4, k)
            vq = K.cap_action_on_homology(v_cocycle, 4, k - 1) @ \
                K.cap_action_on_homology(model.w1, 1, k)
            if not (qv + vq).is_zero():
                qv_commute = False
    return BorelModule(betti, q_act, v_act,
                       {"Q3_zero": q3_zero, "QV_commute": qv_commute},
                       degree_cap=cap_degree)
