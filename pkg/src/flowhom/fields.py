"""Quasi-gradient fields, stationary manifolds, and spectral checks.

Trajectories follow d(gamma)/dt + v(gamma) = 0 throughout the engine, so
the Morse index of a stationary manifold (the number of eigenvalues of
dv with negative real part in the normal directions) equals its unstable
dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from flowhom.config import Tolerances, stream, tol_profile
from flowhom.errors import (DegenerateLinearization, EigenpairMismatch, NotSelfAdjoint,
                            UnrecognizedLocusShape, ZeroDiagonalEntry)
from flowhom.expressions import ScalarField
from flowhom.geometry import ManifoldModel

INTERIOR = "interior"
BOUNDARY_STABLE = "boundary-stable"
BOUNDARY_UNSTABLE = "boundary-unstable"


@dataclass
class QuasiGradientField:
    """A vector field tangent to the boundary, tamed by a scalar f."""

    manifold: ManifoldModel
    v: object                       # SymbolicVectorField or NumericVectorField
    f: ScalarField | object
    boundary_tangent_tol: float = 1e-6
    name: str = "field"

    @property
    def tols(self) -> Tolerances:
        return self.manifold.tols

    def velocity(self, points) -> np.ndarray:
        """Tangent-projected field values on a batch of points."""
        raw = self.v.value(points)
        return self.manifold.project_tangent(points, raw)

    def speed(self, points) -> np.ndarray:
        return np.linalg.norm(self.velocity(points), axis=1)

    def f_value(self, points) -> np.ndarray:
        return self.f.value(points)

    def df_v(self, points) -> np.ndarray:
        """Directional derivative df(v) at a batch of points."""
        return np.einsum("nd,nd->n", self.f.gradient(points), self.velocity(points))

    def tangent_linearization(self, x, basis=None) -> tuple[np.ndarray, np.ndarray]:
        """Matrix of dv restricted to the tangent space at x, and the basis used."""
        Q = self.manifold.tangent_basis(x) if basis is None else basis
        J = self.v.jacobian_at(x)
        return Q.T @ J @ Q, Q


@dataclass
class Sphere2Model:
    center: np.ndarray
    radius: float
    span: np.ndarray                # (ambient_dim, 3) orthonormal affine span basis

    def project(self, x) -> np.ndarray:
        rel = self.span.T @ (np.asarray(x, dtype=float) - self.center)
        nrm = np.linalg.norm(rel)
        if nrm == 0.0:
            rel = np.array([1.0, 0.0, 0.0])
            nrm = 1.0
        return self.center + self.span @ (self.radius * rel / nrm)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = stream(seed, "sphere2-sample")
        u = rng.normal(size=(n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center[None, :] + self.radius * (u @ self.span.T)


@dataclass
class StationaryManifold:
    """One connected stationary locus with type, index and fitted model."""

    name: str
    kind: str                        # interior | boundary-stable | boundary-unstable
    index: int
    dim: int                         # 0 or 2
    representative_points: np.ndarray
    f_value: float
    model: Sphere2Model | None = None   # None for point loci
    normal_eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def base_point(self) -> np.ndarray:
        return self.representative_points[0]

    @property
    def cells(self) -> list[int]:
        """Cell dimensions of this locus's cellular model."""
        return [0] if self.dim == 0 else [0, 2]

    def nearest_point(self, x) -> np.ndarray:
        if self.model is not None:
            return self.model.project(x)
        return self.base_point

    def distance(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x) - self.nearest_point(x)))


@dataclass
class Certificate:
    """Per-axiom verdicts of the quasi-gradient test, with witnesses."""

    axioms: dict
    loci: list[StationaryManifold]

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.axioms.values())

    def report(self) -> dict:
        return {
            "passed": self.passed,
            "axioms": {k: {kk: vv for kk, vv in a.items()} for k, a in self.axioms.items()},
            "loci": [locus_summary(b) for b in self.loci],
        }


def locus_summary(b: StationaryManifold) -> dict:
    return {
        "name": b.name,
        "kind": b.kind,
        "index": b.index,
        "dim": b.dim,
        "f_value": round(float(b.f_value), 10),
        "point": [round(float(c), 8) for c in b.base_point],
    }


# -- stationary locus detection ------------------------------------------


def _newton_zeros(F: QuasiGradientField, seeds: np.ndarray, max_iter: int = 30) -> np.ndarray:
    M = F.manifold
    pts = np.array(seeds, dtype=float)
    if len(pts) == 0:
        return pts
    for _ in range(max_iter):
        vals = F.v.value(pts)
        gvals = M.constraint_values(pts)
        res = np.concatenate([vals, gvals], axis=1)
        if np.abs(res).max() < M.tols.newton:
            break
        Jv = F.v.jacobian_batch(pts)
        Jg = M.constraint_jacobian(pts)
        J = np.concatenate([Jv, Jg], axis=1)
        step = np.einsum("ndk,nk->nd", np.linalg.pinv(J), res)
        step = np.nan_to_num(step, nan=0.0, posinf=0.0, neginf=0.0)
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        step = np.where(norm > 0.25, step * 0.25 / np.maximum(norm, 1e-300), step)
        pts = pts - step
    speed = np.linalg.norm(F.v.value(pts), axis=1)
    ok = (speed < F.tols.stationary) & (M.distance(pts) < F.tols.on_manifold)
    ok &= M.in_box(pts, margin=1e-6)
    if M.boundary_fn is not None:
        ok &= M.boundary_values(pts) <= np.sqrt(F.tols.on_manifold)
    return pts[ok]


def _single_linkage(points: np.ndarray, radius: float) -> list[np.ndarray]:
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] < radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [points[idx] for idx in groups.values()]


def _fit_sphere2(points: np.ndarray, tol: float) -> Sphere2Model | None:
    """Least-squares 2-sphere: affine span by PCA, then the in-span fit."""
    if len(points) < 8:
        return None
    mean = points.mean(axis=0)
    rel0 = points - mean
    _, sv, Vt = np.linalg.svd(rel0, full_matrices=False)
    rank = int((sv > max(1e-6, 1e-3 * sv[0])).sum())
    if rank != 3:
        return None
    U = Vt[:3].T
    off_span = np.abs(rel0 - (rel0 @ U) @ U.T).max()
    if off_span > 1e3 * tol:
        return None
    y = rel0 @ U
    A = np.column_stack([2.0 * y, np.ones(len(y))])
    b = np.einsum("nd,nd->n", y, y)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cy = sol[:-1]
    r2 = sol[-1] + cy @ cy
    if r2 <= tol:
        return None
    radius = float(np.sqrt(r2))
    center = mean + U @ cy
    model = Sphere2Model(center, radius, U)
    worst = max(float(np.linalg.norm(p - model.project(p))) for p in points)
    if worst > 1e3 * tol:
        return None
    return model


def _locus_linearization(F: QuasiGradientField, x: np.ndarray, locus_dim: int,
                         gap: float) -> tuple[np.ndarray, int]:
    """Normal eigenvalues of dv at x and the Morse index.

    Eigenvalues within the spectral gap of the imaginary axis must match
    the locus dimension (those are the along-locus directions); anything
    else raises DegenerateLinearization.
    """
    A, _ = F.tangent_linearization(x)
    eigs = np.linalg.eigvals(A)
    order = np.argsort(np.abs(eigs.real))
    eigs = eigs[order]
    near_zero = int((np.abs(eigs.real) <= gap).sum())
    if near_zero != locus_dim:
        raise DegenerateLinearization(
            f"{near_zero} near-axis eigenvalues at a dim-{locus_dim} locus "
            f"(spectrum {np.round(eigs, 6)})")
    normal = eigs[locus_dim:]
    index = int((normal.real < -gap).sum())
    return normal, index


def classify_boundary_kind(F: QuasiGradientField, point: np.ndarray) -> str:
    """Type of a boundary stationary point from the inward-normal eigenvalue.

    Since v is tangent to the boundary, dv block-triangularizes over
    T(dX) + span(n), so the normal eigenvalue is n . dv n exactly.
    """
    M = F.manifold
    if M.boundary_fn is None or M.boundary_values(point[None, :])[0] < -np.sqrt(M.tols.on_manifold):
        return INTERIOR
    grho = M.boundary_fn.gradient(point[None, :])[0]
    n = M.project_tangent(point[None, :], -grho[None, :])[0]
    n = n / np.linalg.norm(n)
    lam = float(n @ F.v.jacobian_at(point) @ n)
    if abs(lam) <= M.tols.spectral_gap:
        raise DegenerateLinearization(f"normal eigenvalue {lam:.3e} within the gap")
    # flow is -v: dv-eigenvalue > 0 means the inward normal is attracted
    return BOUNDARY_STABLE if lam > 0 else BOUNDARY_UNSTABLE


def find_stationary_loci(F: QuasiGradientField, grid_density: int = 8, seed: int = 0,
                         cluster_radius: float = 0.1) -> list[StationaryManifold]:
    """Detect, fit and classify all stationary loci.

    Newton refinement from grid plus random seeds, single-linkage
    clustering, then a point or 2-sphere fit per cluster.  The fit
    validates the clustering: a cluster matching neither model raises
    UnrecognizedLocusShape.
    """
    M = F.manifold
    seeds = [M.grid_points(grid_density)]
    seeds.append(M.random_points(max(64, grid_density ** 2), seed=seed, name="loci-seeds"))
    if M.boundary_fn is not None:
        try:
            seeds.append(M.boundary_points(32, seed=seed))
        except Exception:
            pass
    zeros = _newton_zeros(F, np.concatenate(seeds))
    if len(zeros) == 0:
        return []

    # sphere loci need well-spread zeros for the fit: densify any cluster
    # that is neither a tight point nor yet sphere-fittable
    rng = stream(seed, "loci-densify")
    for _ in range(3):
        clusters = _single_linkage(zeros, cluster_radius)
        retry = []
        for cluster in clusters:
            diam = 0.0
            if len(cluster) > 1:
                diam = float(np.linalg.norm(
                    cluster[:, None, :] - cluster[None, :, :], axis=-1).max())
            if diam <= 1e-6:
                # a tight cluster with along-locus eigenvalues is a sphere
                # fragment that needs more zeros around it
                A, _ = F.tangent_linearization(cluster[0])
                near0 = int((np.abs(np.linalg.eigvals(A).real)
                             <= F.tols.spectral_gap).sum())
                if near0 > 0:
                    retry.append(cluster)
            elif (_fit_sphere2(cluster, F.tols.sphere_fit) is None
                  or len(cluster) < 24):
                retry.append(cluster)
        if not retry:
            break
        extra = []
        for cluster in retry:
            picks = cluster[rng.integers(0, len(cluster), size=64)]
            noise = rng.normal(size=picks.shape)
            extra.append(picks + 0.5 * max(cluster_radius, 0.2) * noise)
        new_zeros = _newton_zeros(F, M.retract(np.concatenate(extra)))
        if len(new_zeros) == 0:
            break
        zeros = np.concatenate([zeros, new_zeros])

    loci: list[StationaryManifold] = []
    clusters = _single_linkage(zeros, cluster_radius)
    clusters.sort(key=lambda c: tuple(np.round(c.mean(axis=0), 6)))
    for ci, cluster in enumerate(clusters):
        diam = 0.0
        if len(cluster) > 1:
            diam = float(np.linalg.norm(cluster[:, None, :] - cluster[None, :, :], axis=-1).max())
        fvals = F.f_value(cluster)
        if fvals.max() - fvals.min() > 1e-8 + 1e-6 * max(1.0, abs(fvals.mean())):
            raise UnrecognizedLocusShape(
                f"taming function not constant on cluster {ci} "
                f"(spread {fvals.max() - fvals.min():.2e})")
        model = None
        if diam < 1e-6:
            rep = cluster[:1]
            dim = 0
        else:
            model = _fit_sphere2(cluster, F.tols.sphere_fit)
            if model is None:
                raise UnrecognizedLocusShape(
                    f"cluster {ci} (diameter {diam:.3e}) fits neither point nor 2-sphere")
            rep = model.sample(12, seed=seed)
            rep = M.retract(rep)
            dim = 2
        kind = classify_boundary_kind(F, rep[0])
        normal_eigs, index = _locus_linearization(F, rep[0], dim, F.tols.spectral_gap)
        loci.append(StationaryManifold(
            name=f"B{ci}", kind=kind, index=index, dim=dim,
            representative_points=rep, f_value=float(fvals.mean()),
            model=model, normal_eigenvalues=normal_eigs))
    loci.sort(key=lambda b: (b.f_value, b.name))
    for i, b in enumerate(loci):
        b.name = f"B{i}"
    return loci


def verify_quasi_gradient(F: QuasiGradientField, n_samples: int = 400,
                          seed: int = 0) -> Certificate:
    """Check the four quasi-gradient axioms on samples; failures carry witnesses."""
    M = F.manifold
    axioms: dict[str, dict] = {}

    pts = M.random_points(n_samples, seed=seed, name="verify-samples")

    # (i) boundary tangency
    if M.boundary_fn is None:
        axioms["i_boundary_tangency"] = {"passed": True, "detail": "no boundary"}
    else:
        bpts = M.boundary_points(max(32, n_samples // 8), seed=seed)
        vvals = F.velocity(bpts)
        grho = M.boundary_fn.gradient(bpts)
        grho_t = M.project_tangent(bpts, grho)
        speeds = np.linalg.norm(vvals, axis=1)
        normal_part = np.abs(np.einsum("nd,nd->n", vvals, grho_t))
        denom = np.maximum(speeds, F.tols.stationary) * np.maximum(
            np.linalg.norm(grho_t, axis=1), 1e-12)
        ratio = normal_part / denom
        moving = speeds > F.tols.stationary
        bad = moving & (ratio > F.boundary_tangent_tol)
        axioms["i_boundary_tangency"] = {
            "passed": not bool(bad.any()),
            "max_ratio": float(ratio[moving].max()) if moving.any() else 0.0,
            "witness": bpts[bad][0].tolist() if bad.any() else None,
        }

    # (iv) taming inequality, strict away from the stationary set
    dfv = F.df_v(pts)
    speeds = F.speed(pts)
    nonneg_bad = dfv < -F.tols.taming
    moving = speeds > np.sqrt(F.tols.stationary)
    strict_bad = moving & (dfv <= 0.0)
    bad = nonneg_bad | strict_bad
    axioms["iv_taming"] = {
        "passed": not bool(bad.any()),
        "min_df_v": float(dfv.min()),
        "witness": pts[bad][0].tolist() if bad.any() else None,
    }

    loci: list[StationaryManifold] = []
    detect_error = None
    try:
        loci = find_stationary_loci(F, seed=seed)
    except Exception as e:  # detection failures become axiom data
        detect_error = str(e)

    # (ii) stationary set in or away from the boundary, locus by locus
    if detect_error is not None:
        axioms["ii_stationary_manifolds"] = {"passed": False, "detail": detect_error}
    else:
        straddle = None
        for b in loci:
            if M.boundary_fn is None or b.dim == 0:
                continue
            bv = M.boundary_values(b.representative_points)
            on = np.abs(bv) < np.sqrt(M.tols.on_manifold)
            if 0 < int(on.sum()) < len(bv):
                straddle = b.name
        axioms["ii_stationary_manifolds"] = {
            "passed": straddle is None,
            "n_loci": len(loci),
            "witness": straddle,
        }

    # (iii) normal hyperbolicity at every detected locus
    if detect_error is not None:
        axioms["iii_normal_hyperbolicity"] = {"passed": False, "detail": detect_error}
    else:
        worst = np.inf
        bad_locus = None
        for b in loci:
            gap = float(np.abs(b.normal_eigenvalues.real).min()) if len(b.normal_eigenvalues) else np.inf
            if gap < worst:
                worst, bad_locus = gap, b.name
        ok = worst > F.tols.spectral_gap
        axioms["iii_normal_hyperbolicity"] = {
            "passed": bool(ok),
            "min_normal_re": None if np.isinf(worst) else float(worst),
            "witness": None if ok else bad_locus,
        }

    return Certificate(axioms=axioms, loci=loci)


def reverse_field(F: QuasiGradientField) -> QuasiGradientField:
    """Time-reversed field: -v tamed by -f; stable and unstable data swap."""
    from flowhom.expressions import (NumericScalarField, NumericVectorField,
                                     SymbolicVectorField)
    if isinstance(F.v, SymbolicVectorField):
        v_rev = SymbolicVectorField([-e for e in F.v.exprs], F.v.symbols)
    else:
        v_rev = NumericVectorField(F.v.dim, lambda p: -F.v.value(p),
                                   jac_fn=lambda p: -F.v.jacobian_at(p))
    if isinstance(F.f, ScalarField):
        f_rev = ScalarField(-F.f.expr, F.f.symbols)
    else:
        f_rev = NumericScalarField(F.manifold.ambient_dim,
                                   lambda p: -F.f.value(p))
    return QuasiGradientField(F.manifold, v_rev, f_rev,
                              F.boundary_tangent_tol, name=f"rev({F.name})")


def reversed_locus(b: StationaryManifold) -> StationaryManifold:
    """The same locus viewed in the reversed flow (boundary kinds swap)."""
    kind = {INTERIOR: INTERIOR,
            BOUNDARY_STABLE: BOUNDARY_UNSTABLE,
            BOUNDARY_UNSTABLE: BOUNDARY_STABLE}[b.kind]
    return StationaryManifold(b.name, kind, b.index, b.dim,
                              b.representative_points, -b.f_value, b.model,
                              -b.normal_eigenvalues)


# -- equivariant fields ----------------------------------------------------


def quaternion_left_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left multiplication by i, j, k on H in the basis (1, i, j, k)."""
    I4 = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    J4 = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    K4 = I4 @ J4
    return I4, J4, K4


@dataclass
class Pin2Action:
    """Semifree Pin(2)-action: an S^1 rotation generator and the j involution."""

    generator: np.ndarray           # K with rot(theta) = expm(theta K)
    j_matrix: np.ndarray

    def rotation(self, theta: float) -> np.ndarray:
        return scipy.linalg.expm(theta * self.generator)

    @classmethod
    def quaternionic(cls, n_quaternionic: int, extra_fixed: int = 0) -> "Pin2Action":
        """Left multiplication on H^n + a trivial R^extra factor."""
        I4, J4, _ = quaternion_left_matrices()
        d = 4 * n_quaternionic + extra_fixed
        K = np.zeros((d, d))
        J = np.eye(d)
        for q in range(n_quaternionic):
            sl = slice(4 * q, 4 * q + 4)
            K[sl, sl] = I4
            J[sl, sl] = J4
        return cls(K, J)


@dataclass
class EquivariantField:
    """A Pin(2)-equivariant quasi-gradient with its fixed locus."""

    base_field: QuasiGradientField
    action: Pin2Action
    fixed_points: np.ndarray        # (r, ambient_dim); may be empty

    def equivariance_residual(self, n_samples: int = 64, seed: int = 0) -> float:
        pts = self.base_field.manifold.random_points(n_samples, seed=seed,
                                                     name="equivariance")
        rng = stream(seed, "equivariance-angles")
        worst = 0.0
        mats = [self.action.rotation(t) for t in rng.uniform(0, 2 * np.pi, size=4)]
        mats.append(self.action.j_matrix)
        for g in mats:
            gv = self.base_field.v.value(pts) @ g.T
            vg = self.base_field.v.value(pts @ g.T)
            worst = max(worst, float(np.abs(gv - vg).max()))
        return worst

    def normal_linearization(self, r: np.ndarray) -> np.ndarray:
        """L_r: the derivative of v on the normal space to the fixed locus at r."""
        M = self.base_field.manifold
        Q = M.tangent_basis(r)
        A = Q.T @ self.base_field.v.jacobian_at(r) @ Q
        return A, Q

    def check_quaternionic_structure(self, r: np.ndarray, tol: float = 1e-8) -> dict:
        """Verify L_r is H-linear with real, distinct, nonzero eigenvalues."""
        A, Q = self.normal_linearization(r)
        d = A.shape[0]
        if d % 4 != 0:
            raise DegenerateLinearization("normal space dimension is not a multiple of 4")
        n = d // 4
        I_amb = Q.T @ self.action.generator @ Q
        J_amb = Q.T @ self.action.j_matrix @ Q
        comm_i = float(np.abs(A @ I_amb - I_amb @ A).max())
        comm_j = float(np.abs(A @ J_amb - J_amb @ A).max())
        eigs = np.sort_complex(np.linalg.eigvals(A))
        groups = np.round(eigs.real, 6)
        distinct = sorted(set(groups))
        ok = (comm_i < tol and comm_j < tol
              and float(np.abs(eigs.imag).max()) < tol
              and len(distinct) == n
              and min(abs(g) for g in distinct) > tol)
        return {"passed": bool(ok), "commutator_i": comm_i, "commutator_j": comm_j,
                "eigenvalues": [float(g) for g in distinct], "matrix": A}


def blowup_linearization(L_r: np.ndarray, lam: float, phi: np.ndarray,
                         A_R: np.ndarray | None = None,
                         action: Pin2Action | None = None,
                         gap: float = 1e-4) -> tuple[np.ndarray, bool]:
    """Linearization of the blown-up field at (r, [phi]).

    Returns the block lower-triangular matrix with diagonal blocks
    (dv|_R, L_r - lam on the complement of H.phi, lam) and a verdict:
    hyperbolic iff dv|_R is hyperbolic, lam != 0 and lam has quaternionic
    multiplicity one.
    """
    L_r = np.asarray(L_r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    phi = phi / np.linalg.norm(phi)
    if np.linalg.norm(L_r @ phi - lam * phi) > 1e-8 * max(1.0, abs(lam)):
        raise EigenpairMismatch("(lam, phi) is not an eigenpair of L_r to 1e-8")
    d = L_r.shape[0]
    if action is None:
        action = Pin2Action.quaternionic(d // 4)
    I_m, J_m = action.generator[:d, :d], action.j_matrix[:d, :d]
    K_m = I_m @ J_m
    line = np.stack([phi, I_m @ phi, J_m @ phi, K_m @ phi], axis=1)
    Qline, _ = np.linalg.qr(line)
    full = np.eye(d) - Qline @ Qline.T
    w, V = np.linalg.eigh(full)
    comp = V[:, w > 0.5]                      # complement of the quaternionic line
    middle = comp.T @ L_r @ comp - lam * np.eye(comp.shape[1])

    blocks = []
    if A_R is not None and np.asarray(A_R).size:
        blocks.append(np.atleast_2d(np.asarray(A_R, dtype=float)))
    blocks.append(middle)
    blocks.append(np.array([[lam]]))
    mat = scipy.linalg.block_diag(*blocks)
    # lower off-diagonal coupling (the * block) does not move the spectrum
    eigs = np.linalg.eigvals(mat)
    hyperbolic = bool(np.abs(eigs.real).min() > gap)
    return mat, hyperbolic


# -- real spectrum of D + PL ----------------------------------------------


def weighted_spectral_projection(D: np.ndarray, beta, cutoffs=None) -> np.ndarray:
    """P = sum_i beta_i P_i with P_i the spectral projection onto |eig| < cutoff_i."""
    w, V = np.linalg.eigh(D)
    beta = np.asarray(beta, dtype=float)
    m = len(beta)
    absw = np.abs(w)
    if cutoffs is None:
        top = absw.max()
        cutoffs = [top * (i + 1) / m + 1e-12 for i in range(m)]
        cutoffs[-1] = top + 1.0
    diag = np.zeros(len(w))
    for b, c in zip(beta, cutoffs):
        diag += b * (absw < c)
    return (V * diag) @ V.T, np.asarray(cutoffs, dtype=float)


def real_spectrum_check(D: np.ndarray, beta, L: np.ndarray, cutoffs=None,
                        tol: float = 1e-10) -> float:
    """Max |Im eigenvalue| of D + PL; the conjugation trick forces this to ~0.

    D, L must be self-adjoint; beta nonnegative convex weights with the
    last weight nonzero.  The conjugation P^{-1/2}(D + PL)P^{1/2}
    = D + P^{1/2} L P^{1/2} is self-adjoint on the top window, and the
    operator is upper block triangular with D on the complement.
    """
    D = np.asarray(D, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.abs(D - D.T).max() > tol:
        raise NotSelfAdjoint("D is not self-adjoint to 1e-10")
    if np.abs(L - L.T).max() > tol:
        raise NotSelfAdjoint("L is not self-adjoint to 1e-10")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0) or abs(beta.sum() - 1.0) > 1e-12:
        raise ValueError("beta must be nonnegative and sum to 1")
    if beta[-1] == 0.0:
        raise ZeroDiagonalEntry("last weight vanishes, so P^{-1/2} is undefined")
    P, _ = weighted_spectral_projection(D, beta, cutoffs)
    eigs = np.linalg.eigvals(D + P @ L)
    return float(np.abs(eigs.imag).max())
