"""Level-set manifolds with boundary, and real-oriented blowups.

A manifold is the common zero set of scalar constraints inside a
declared bounding box, with an optional boundary inequality rho <= 0.
All geometry (projectors, retraction, sampling) is derived from the
constraint Jacobian, so every property is testable at sampled points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowhom.config import Tolerances, stream, tol_profile
from flowhom.errors import (EmptyManifold, EpsTooLarge, FixedLocusNotSubmanifold,
                            OffManifold, RankDeficient)
from flowhom.expressions import ScalarField


@dataclass
class ManifoldModel:
    """Common zero set of `constraints`, intersected with {boundary_fn <= 0}."""

    ambient_dim: int
    constraints: list[ScalarField]
    boundary_fn: ScalarField | None
    box: np.ndarray                      # (2, ambient_dim) lower/upper sampling bounds
    dim: int = field(init=False)
    tols: Tolerances = field(default_factory=tol_profile)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(2, self.ambient_dim)
        self.dim = self.ambient_dim - len(self.constraints)
        if self.dim < 0:
            raise RankDeficient("more constraints than ambient dimensions")

    # -- constraint evaluation -----------------------------------------

    def constraint_values(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        if not self.constraints:
            return np.zeros((pts.shape[0], 0))
        return np.column_stack([g.value(pts) for g in self.constraints])

    def constraint_jacobian(self, points) -> np.ndarray:
        """(N, k, d) stack of constraint gradients."""
        pts = np.atleast_2d(points)
        if not self.constraints:
            return np.zeros((pts.shape[0], 0, self.ambient_dim))
        return np.stack([g.gradient(pts) for g in self.constraints], axis=1)

    def boundary_values(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self.boundary_fn is None:
            return np.full(pts.shape[0], -np.inf)
        return self.boundary_fn.value(pts)

    def distance(self, points) -> np.ndarray:
        """Max constraint residual per point (box and boundary not included)."""
        vals = self.constraint_values(points)
        if vals.shape[1] == 0:
            return np.zeros(vals.shape[0])
        return np.abs(vals).max(axis=1)

    def contains(self, points, tol: float | None = None) -> np.ndarray:
        tol = self.tols.on_manifold if tol is None else tol
        ok = self.distance(points) <= tol
        if self.boundary_fn is not None:
            ok &= self.boundary_values(points) <= np.sqrt(tol)
        return ok

    def in_box(self, points, margin: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(points)
        lo, hi = self.box[0] - margin, self.box[1] + margin
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    # -- projection and retraction ---------------------------------------

    def retract(self, points, extra: ScalarField | None = None,
                max_iter: int = 8) -> np.ndarray:
        """Newton projection onto the zero set (optionally with one extra constraint)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        fields = list(self.constraints) + ([extra] if extra is not None else [])
        if not fields:
            return pts
        k = len(fields)
        ridge = 1e-14 * np.eye(k)
        for _ in range(max_iter):
            vals = np.column_stack([g.value(pts) for g in fields])
            if np.abs(vals).max() < self.tols.newton:
                break
            J = np.stack([g.gradient(pts) for g in fields], axis=1)
            JJt = np.einsum("nkd,nld->nkl", J, J) + ridge
            lam = np.linalg.solve(JJt, vals[..., None])[..., 0]
            step = np.einsum("nkd,nk->nd", J, lam)
            step = np.nan_to_num(step, nan=0.0, posinf=0.0, neginf=0.0)
            pts -= step
        return np.nan_to_num(pts, nan=np.inf, posinf=np.inf, neginf=-np.inf)

    def tangent_projector(self, x) -> np.ndarray:
        """Orthogonal projector onto ker of the constraint Jacobian at x."""
        x = np.asarray(x, dtype=float)
        if self.distance(x[None, :])[0] > 100 * self.tols.on_manifold:
            raise OffManifold(f"point at distance {self.distance(x[None, :])[0]:.3e}")
        if not self.constraints:
            return np.eye(self.ambient_dim)
        J = self.constraint_jacobian(x[None, :])[0]
        Q, _ = np.linalg.qr(J.T)
        return np.eye(self.ambient_dim) - Q @ Q.T

    def project_tangent(self, points, vectors) -> np.ndarray:
        """Batch tangent projection of vectors attached at points."""
        pts = np.atleast_2d(points)
        vec = np.atleast_2d(vectors).copy()
        if not self.constraints:
            return vec
        J = self.constraint_jacobian(pts)
        JJt = np.einsum("nkd,nld->nkl", J, J)
        rhs = np.einsum("nkd,nd->nk", J, vec)
        lam = np.linalg.solve(JJt, rhs[..., None])[..., 0]
        return vec - np.einsum("nkd,nk->nd", J, lam)

    def tangent_basis(self, x) -> np.ndarray:
        """(ambient_dim, dim) orthonormal basis of the tangent space at x."""
        P = self.tangent_projector(x)
        w, V = np.linalg.eigh(P)
        return V[:, w > 0.5]

    # -- sampling ----------------------------------------------------------

    def random_points(self, n: int, seed: int = 0, name: str = "manifold-samples",
                      interior_only: bool = False) -> np.ndarray:
        rng = stream(seed, name)
        out = []
        attempts = 0
        while sum(len(o) for o in out) < n and attempts < 200:
            raw = rng.uniform(self.box[0], self.box[1], size=(4 * n, self.ambient_dim))
            cand = self.retract(raw)
            keep = self.distance(cand) <= self.tols.on_manifold
            keep &= self.in_box(cand, margin=1e-9)
            if self.boundary_fn is not None:
                b = self.boundary_values(cand)
                keep &= b <= (-(1e-3) if interior_only else 1e-9)
            out.append(cand[keep])
            attempts += 1
        pts = np.concatenate(out) if out else np.zeros((0, self.ambient_dim))
        if len(pts) < n:
            raise EmptyManifold(f"found only {len(pts)} of {n} requested sample points")
        return pts[:n]

    def grid_points(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(self.box[0, i], self.box[1, i], per_axis)
                for i in range(self.ambient_dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        raw = mesh.reshape(-1, self.ambient_dim)
        cand = self.retract(raw)
        keep = self.distance(cand) <= self.tols.on_manifold
        keep &= self.in_box(cand, margin=0.5)
        if self.boundary_fn is not None:
            keep &= self.boundary_values(cand) <= 1e-9
        return cand[keep]

    def boundary_points(self, n: int, seed: int = 0) -> np.ndarray:
        if self.boundary_fn is None:
            return np.zeros((0, self.ambient_dim))
        rng = stream(seed, "boundary-samples")
        raw = rng.uniform(self.box[0], self.box[1], size=(20 * n, self.ambient_dim))
        cand = self.retract(raw, extra=self.boundary_fn, max_iter=20)
        good = self.distance(cand) <= self.tols.on_manifold
        good &= np.abs(self.boundary_values(cand)) <= self.tols.on_manifold
        good &= self.in_box(cand, margin=1e-9)
        pts = cand[good]
        if len(pts) == 0:
            raise EmptyManifold("no boundary points found")
        return pts[:n]


def make_level_set_manifold(constraints: list[str], boundary_fn: str | None,
                            ambient_dim: int, box=None,
                            var_names: list[str] | None = None,
                            tols: Tolerances | None = None) -> ManifoldModel:
    """Build and validate a manifold from expression strings.

    Validation runs a regular-value test at retracted grid samples: the
    constraint Jacobian must have full rank k (singular values relative
    to the largest above `tols.rank_rel`), and grad rho must stay out of
    the constraint row span at sampled boundary points.
    """
    from flowhom.expressions import default_vars

    tols = tols or tol_profile()
    var_names = var_names or default_vars(ambient_dim)
    if len(var_names) != ambient_dim:
        raise ValueError("var_names length must equal ambient_dim")
    if box is None:
        box = np.array([[-1.5] * ambient_dim, [1.5] * ambient_dim])
    gs = [ScalarField.parse(c, var_names) for c in constraints]
    rho = ScalarField.parse(boundary_fn, var_names) if boundary_fn else None
    M = ManifoldModel(ambient_dim, gs, rho, box, tols=tols)

    per_axis = max(3, int(round(12 ** (2.0 / max(ambient_dim, 2)))))
    samples = M.grid_points(per_axis)
    if len(samples) == 0:
        raise EmptyManifold("no zero-set points found on the sampling grid")
    k = len(gs)
    if k > 0:
        J = M.constraint_jacobian(samples)
        sv = np.linalg.svd(J, compute_uv=False)
        bad = sv[:, -1] < tols.rank_rel * sv[:, 0]
        if np.any(bad):
            raise RankDeficient(
                f"constraint Jacobian rank-deficient at {int(bad.sum())} sample points")
    if rho is not None:
        try:
            bpts = M.boundary_points(32)
        except EmptyManifold:
            bpts = np.zeros((0, ambient_dim))
        for p in bpts:
            grho = rho.gradient(p[None, :])[0]
            if np.linalg.norm(grho) < tols.rank_rel:
                raise RankDeficient("grad rho vanishes at a boundary sample")
            tangential = M.project_tangent(p[None, :], grho[None, :])[0]
            if np.linalg.norm(tangential) < tols.rank_rel * np.linalg.norm(grho):
                raise RankDeficient("grad rho lies in the constraint row span")
    return M


# -- real-oriented blowup ----------------------------------------------


@dataclass
class FixedLocus:
    """Fixed locus data: a finite point set or one parametrized 2-sphere."""

    kind: str                      # "points" | "sphere2"
    points: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None


@dataclass
class BlowupChart:
    """Collar chart N^1(p) x [0, eps) at one blown-up point."""

    center: np.ndarray
    frame: np.ndarray              # (ambient_dim, m) orthonormal tangent basis at p

    def to_ambient(self, unit_coords, t, manifold: ManifoldModel) -> np.ndarray:
        u = np.atleast_2d(unit_coords)
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        t = np.broadcast_to(np.asarray(t, dtype=float), (u.shape[0],))
        raw = self.center[None, :] + t[:, None] * (u @ self.frame.T)
        return manifold.retract(raw)


@dataclass
class BlowupModel:
    """X^sigma: the base with each fixed point replaced by its unit normal collar."""

    base: ManifoldModel
    fixed_locus: FixedLocus
    collar_eps: float
    charts: list[BlowupChart]

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def boundary_component_dim(self) -> int:
        return self.base.dim - 1

    def blow_down(self, chart_index: int, unit_coords, t) -> np.ndarray:
        return self.charts[chart_index].to_ambient(unit_coords, t, self.base)


def real_oriented_blowup(M: ManifoldModel, locus: FixedLocus,
                         eps: float | None = None) -> BlowupModel:
    """Replace the fixed locus by its unit normal collar.

    Requires a closed base (the construction is applied to closed X) and
    point fixed loci; the chart frame at each point is an orthonormal
    tangent basis computed from the constraint Jacobian.
    """
    if M.boundary_fn is not None:
        raise FixedLocusNotSubmanifold("blowup requires a closed base manifold")
    if locus.kind != "points":
        raise FixedLocusNotSubmanifold(
            "blowup charts are implemented for finite point loci only")
    pts = np.atleast_2d(locus.points)
    if not np.all(M.contains(pts)):
        raise FixedLocusNotSubmanifold("fixed points do not lie on the manifold")

    if eps is None:
        sep = np.inf
        if len(pts) > 1:
            diffs = pts[:, None, :] - pts[None, :, :]
            norms = np.linalg.norm(diffs, axis=-1)
            sep = norms[norms > 0].min()
        curvature_scale = min(np.ptp(M.box, axis=0).min(), sep)
        eps = 0.1 * curvature_scale  # default: 0.1 of the injectivity estimate

    charts = [BlowupChart(p, M.tangent_basis(p)) for p in pts]
    model = BlowupModel(M, locus, float(eps), charts)

    # collar self-overlap test: distinct chart rays must stay distinct
    rng = stream(0, "blowup-injectivity")
    for chart in charts:
        m = chart.frame.shape[1]
        u = rng.normal(size=(64, m))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        img = chart.to_ambient(u, eps * 0.99, M)
        d_img = np.linalg.norm(img[:, None, :] - img[None, :, :], axis=-1)
        d_dir = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=-1)
        clash = (d_img < 1e-8) & (d_dir > 1e-3)
        if np.any(clash):
            raise EpsTooLarge("collar overlaps itself at the sampled radius")
    if len(charts) > 1:
        centers = np.stack([c.center for c in charts])
        gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        if gaps[gaps > 0].min() < 2 * eps:
            raise EpsTooLarge("collars of distinct fixed points overlap")
    return model
