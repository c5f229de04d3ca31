"""Trajectory integration and moduli spaces of connecting orbits.

The integrator advances dx/dt = rhs(x) with a Dormand-Prince 5(4) pair,
one adaptive step size per trajectory in the batch, and a Newton
retraction onto the constraint set after every accepted step.  Moduli
spaces are built by shooting from unstable spheres; zero-dimensional
counts come from basin-boundary bisection, which is the numerically
stable way to locate isolated connecting orbits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from flowhom.config import Tolerances, stream
from flowhom.errors import (DimensionMismatch, FrameBlowup, NoConvergence,
                            NonTransverseSection, SliceMissed, StepUnderflow,
                            UnresolvedBreaking, ZeroUnstableDim)
from flowhom.fields import (BOUNDARY_STABLE, BOUNDARY_UNSTABLE, INTERIOR,
                            QuasiGradientField, StationaryManifold)

# Dormand-Prince coefficients
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


class GradientFlowSystem:
    """Flow of a quasi-gradient field: dx/dt = -v(x), retracted to the manifold."""

    def __init__(self, F: QuasiGradientField, direction: int = +1,
                 stick_to_boundary: bool = False):
        self.F = F
        self.direction = direction
        self.stick = stick_to_boundary and F.manifold.boundary_fn is not None
        self.dim = F.manifold.ambient_dim

    def rhs(self, points) -> np.ndarray:
        return -self.direction * self.F.velocity(points)

    def retract(self, points) -> np.ndarray:
        M = self.F.manifold
        extra = M.boundary_fn if self.stick else None
        return M.retract(points, extra=extra)

    def in_domain(self, points) -> np.ndarray:
        return self.F.manifold.in_box(points, margin=0.5)

    def speed(self, points) -> np.ndarray:
        return np.linalg.norm(self.rhs(points), axis=1)


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    status: str                     # stationary | diverged | budget | underflow
    f_profile: np.ndarray | None = None
    alpha_locus: str | None = None
    omega_locus: str | None = None

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def flight_time(self) -> float:
        return float(self.times[-1] - self.times[0])


def integrate_batch(system, x0, t_max: float, tols: Tolerances,
                    stop_speed: float | None = None, calm_window: int = 6,
                    h0: float = 1e-3, h_min: float = 1e-12,
                    max_steps: int = 20000) -> list[Trajectory]:
    """Adaptive batch integration; each trajectory stops independently."""
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    n, d = x.shape
    t = np.zeros(n)
    h = np.full(n, h0)
    active = np.ones(n, dtype=bool)
    status = np.array(["budget"] * n, dtype=object)
    calm = np.zeros(n, dtype=int)
    stop_speed = tols.stationary if stop_speed is None else stop_speed

    paths = [[x[i].copy()] for i in range(n)]
    times = [[0.0] for _ in range(n)]

    steps = 0
    while active.any() and steps < max_steps:
        steps += 1
        idx = np.flatnonzero(active)
        xa, ha = x[idx], h[idx]
        k = np.zeros((7, len(idx), d))
        k[0] = system.rhs(xa)
        for s in range(1, 7):
            xs = xa + ha[:, None] * sum(a * k[j] for j, a in enumerate(_DP_A[s]))
            k[s] = system.rhs(xs)
        x5 = xa + ha[:, None] * np.einsum("s,snd->nd", _DP_B5, k)
        x4 = xa + ha[:, None] * np.einsum("s,snd->nd", _DP_B4, k)
        scale = tols.atol + tols.rtol * np.maximum(np.abs(xa), np.abs(x5)).max(axis=1)
        err = np.linalg.norm(x5 - x4, axis=1) / scale
        err = np.maximum(err, 1e-16)
        accept = err <= 1.0

        if accept.any():
            acc = idx[accept]
            newx = system.retract(x5[accept])
            disp = np.linalg.norm(newx - xa[accept], axis=1)
            x[acc] = newx
            t[acc] += ha[accept]
            for row, i in enumerate(acc):
                paths[i].append(newx[row].copy())
                times[i].append(t[i])
            sp = system.speed(newx)
            # a step whose displacement is at the error-control floor has
            # converged even if the residual speed sits above stop_speed
            still = (sp < stop_speed) | (disp < 100.0 * scale[accept])
            calm[acc] = np.where(still, calm[acc] + 1, 0)
            done = calm[acc] >= calm_window
            if done.any():
                stopped = acc[done]
                active[stopped] = False
                status[stopped] = "stationary"
            inside = system.in_domain(newx)
            if not inside.all():
                out = acc[~inside]
                active[out] = False
                status[out] = "diverged"
            over = t[acc] >= t_max
            if over.any():
                ended = acc[over]
                active[ended] = False
                status[ended] = "budget"

        # step-size control
        fac = 0.9 * err ** (-0.2)
        h[idx] = ha * np.clip(fac, 0.2, 5.0)
        too_small = active[idx] & (h[idx] < h_min)
        if too_small.any():
            dead = idx[too_small]
            active[dead] = False
            status[dead] = "underflow"

    return [Trajectory(np.asarray(times[i]), np.asarray(paths[i]), str(status[i]))
            for i in range(n)]


# -- limits ------------------------------------------------------------------


def resolve_limit(point, loci: list[StationaryManifold], radius: float) -> StationaryManifold | None:
    best, dist = None, np.inf
    for b in loci:
        d = b.distance(point)
        if d < dist:
            best, dist = b, d
    return best if dist < radius else None


def forward_limit(F: QuasiGradientField, x0, loci: list[StationaryManifold],
                  t_max: float = 400.0, backward: bool = False):
    """Integrate to the omega (or alpha) limit and resolve it onto a locus."""
    system = GradientFlowSystem(F, direction=-1 if backward else +1)
    traj = integrate_batch(system, np.atleast_2d(x0), t_max, F.tols)[0]
    if traj.status != "stationary":
        raise NoConvergence(
            f"trajectory status {traj.status!r} with speed "
            f"{float(system.speed(traj.end[None, :])[0]):.3e}")
    locus = resolve_limit(traj.end, loci, max(F.tols.landing_radius, 1e-3))
    if locus is None:
        raise NoConvergence("stationary limit does not match any detected locus")
    return locus, locus.nearest_point(traj.end), traj


def backward_limit(F, x0, loci, t_max: float = 400.0):
    return forward_limit(F, x0, loci, t_max=t_max, backward=True)


# -- unstable spheres --------------------------------------------------------


def _invariant_subspace(A: np.ndarray, select) -> np.ndarray:
    """Orthonormal basis of the invariant subspace for selected eigenvalues."""
    T, Z, sdim = scipy.linalg.schur(A, output="real", sort=select)
    return Z[:, :sdim]


def unstable_frame(F: QuasiGradientField, B: StationaryManifold, x,
                   within_boundary: bool = False) -> np.ndarray:
    """Ambient basis of the unstable normal directions at x (flow -v)."""
    M = F.manifold
    Q = M.tangent_basis(x)
    if within_boundary and M.boundary_fn is not None:
        grho = M.boundary_fn.gradient(np.atleast_2d(x))[0]
        n = M.project_tangent(np.atleast_2d(x), grho[None, :])[0]
        n /= np.linalg.norm(n)
        # restrict the tangent basis to T(dX)
        comp = Q - np.outer(n, n @ Q)
        u, s, _ = np.linalg.svd(comp, full_matrices=False)
        Q = u[:, s > 1e-8]
    A = Q.T @ F.v.jacobian_at(x) @ Q
    gap = F.tols.spectral_gap
    W = _invariant_subspace(A, lambda re, im: re < -gap)
    return Q @ W


def sample_unstable(F: QuasiGradientField, B: StationaryManifold, radius: float,
                    count: int, seed: int = 0,
                    within_boundary: bool = False) -> tuple[np.ndarray, list[dict]]:
    """Seeds x = b + radius * u on the unstable sphere of B.

    Returns the seed array and per-seed metadata (base point, direction).
    For boundary loci the seeds are restricted to the closed half-space
    of the inward normal.
    """
    M = F.manifold
    if B.dim == 0:
        bases = B.representative_points[:1]
    else:
        per = max(count // 8, 12)
        bases = B.model.sample(per, seed=seed)
        bases = M.retract(bases)

    inward = None
    if B.kind != INTERIOR and not within_boundary:
        grho = M.boundary_fn.gradient(bases[:1])[0]
        inward = -M.project_tangent(bases[:1], grho[None, :])[0]
        inward /= np.linalg.norm(inward)

    seeds, meta = [], []
    rng = stream(seed, f"unstable-{B.name}")
    for b in bases:
        U = unstable_frame(F, B, b, within_boundary=within_boundary)
        r = U.shape[1]
        if r == 0:
            continue
        if r == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif r == 2:
            ang = 2 * np.pi * np.arange(count) / count
            dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            dirs = rng.normal(size=(count, r))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for c in dirs:
            u = U @ c
            if inward is not None and float(u @ inward) < -1e-10:
                continue  # seed would leave the manifold through the boundary
            seeds.append(b + radius * u)
            meta.append({"base": b, "direction": u})
    if not seeds:
        raise ZeroUnstableDim(f"locus {B.name} has no unstable directions")
    seeds = M.retract(np.asarray(seeds))
    return seeds, meta


# -- trajectory bookkeeping ---------------------------------------------------


def f_slice_point(F: QuasiGradientField, traj: Trajectory, level: float) -> np.ndarray:
    """Point where the trajectory crosses the f-level, secant-refined.

    The crossing is re-integrated from the bracketing sample so the
    returned point is accurate to ~1e-12, which the finite-difference
    rank estimate needs.
    """
    fvals = F.f_value(traj.points)
    below = np.flatnonzero(fvals <= level)
    if len(below) == 0 or below[0] == 0:
        raise SliceMissed(
            f"trajectory f-range [{fvals.min():.6f}, {fvals.max():.6f}] "
            f"misses level {level:.6f}")
    j = below[0]
    a = traj.points[j - 1]
    dt_hi = float(traj.times[j] - traj.times[j - 1])
    M = F.manifold

    def advance(x0: np.ndarray, dt: float, substeps: int = 6) -> np.ndarray:
        x = x0.copy()
        h = dt / substeps
        for _ in range(substeps):
            k1 = -F.velocity(x[None, :])[0]
            k2 = -F.velocity((x + 0.5 * h * k1)[None, :])[0]
            k3 = -F.velocity((x + 0.5 * h * k2)[None, :])[0]
            k4 = -F.velocity((x + h * k3)[None, :])[0]
            x = M.retract((x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4))[None, :])[0]
        return x

    t0, t1 = 0.0, dt_hi
    f0 = float(fvals[j - 1]) - level
    f1 = float(fvals[j]) - level
    t, x = t1, traj.points[j]
    for _ in range(12):
        if f0 == f1:
            break
        t = t0 - f0 * (t1 - t0) / (f1 - f0)
        t = min(max(t, 0.0), dt_hi)
        x = advance(a, t)
        ft = float(F.f_value(x[None, :])[0]) - level
        if abs(ft) < 1e-13 * max(1.0, abs(level)):
            break
        if (ft > 0) == (f0 > 0):
            t0, f0 = t, ft
        else:
            t1, f1 = t, ft
    return x


def f_slice_points_batch(F: QuasiGradientField, trajs: list[Trajectory],
                         level: float) -> np.ndarray:
    """Vectorized secant-refined slice points for many trajectories."""
    M = F.manifold
    n = len(trajs)
    a = np.empty((n, F.manifold.ambient_dim))
    dt_hi = np.empty(n)
    f0 = np.empty(n)
    f1 = np.empty(n)
    for i, tr in enumerate(trajs):
        fvals = F.f_value(tr.points)
        below = np.flatnonzero(fvals <= level)
        if len(below) == 0 or below[0] == 0:
            raise SliceMissed(f"trajectory {i} misses level {level:.6f}")
        j = below[0]
        a[i] = tr.points[j - 1]
        dt_hi[i] = tr.times[j] - tr.times[j - 1]
        f0[i] = fvals[j - 1] - level
        f1[i] = fvals[j] - level

    def advance(x0: np.ndarray, dt: np.ndarray, substeps: int = 6) -> np.ndarray:
        x = x0.copy()
        h = (dt / substeps)[:, None]
        for _ in range(substeps):
            k1 = -F.velocity(x)
            k2 = -F.velocity(x + 0.5 * h * k1)
            k3 = -F.velocity(x + 0.5 * h * k2)
            k4 = -F.velocity(x + h * k3)
            x = M.retract(x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4))
        return x

    t0 = np.zeros(n)
    t1 = dt_hi.copy()
    x = a.copy()
    for _ in range(12):
        denom = np.where(f1 != f0, f1 - f0, 1.0)
        t = np.clip(t0 - f0 * (t1 - t0) / denom, 0.0, dt_hi)
        x = advance(a, t)
        ft = F.f_value(x) - level
        done = np.abs(ft) < 1e-13 * max(1.0, abs(level))
        if done.all():
            break
        same = (ft > 0) == (f0 > 0)
        t0 = np.where(same, t, t0)
        f0 = np.where(same, ft, f0)
        t1 = np.where(same, t1, t)
        f1 = np.where(same, f1, ft)
    return x


def visited_loci(traj: Trajectory, loci: list[StationaryManifold],
                 radius: float = 0.05, skip: StationaryManifold | None = None,
                 min_dwell: float = 0.75) -> list[tuple]:
    """(first-visit time index, locus) pairs along the path, earliest first.

    A visit must dwell near the locus for at least `min_dwell` time
    units; hyperbolic passages linger, spatial fly-bys do not.
    """
    visits = []
    dts = np.diff(traj.times, append=traj.times[-1])
    for b in loci:
        if skip is not None and b.name == skip.name:
            continue
        if b.dim == 0:
            dist = np.linalg.norm(traj.points - b.base_point[None, :], axis=1)
        else:
            dist = np.array([b.distance(p) for p in traj.points])
        close = dist < radius
        if close.any() and float(dts[close].sum()) >= min_dwell:
            visits.append((int(np.flatnonzero(close)[0]), b))
    visits.sort(key=lambda iv: iv[0])
    return visits


def first_visit(traj, loci, src: StationaryManifold, radius: float = 0.05):
    vis = visited_loci(traj, loci, radius=radius, skip=src)
    return vis[0][1] if vis else None


# -- moduli spaces -------------------------------------------------------------


@dataclass
class TrajectoryClass:
    slice_point: np.ndarray
    ev_minus: np.ndarray
    ev_plus: np.ndarray
    seed: np.ndarray
    flight_time: float
    trajectory: Trajectory


@dataclass
class ModuliSpace:
    source: StationaryManifold
    target: StationaryManifold
    classes: list[TrajectoryClass]
    expected_dim: int
    est_dim: int
    boundary_obstructed: bool
    accepted: bool
    broken_records: list = field(default_factory=list)
    count_mod2: int | None = None   # set for zero-dimensional moduli

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def summary(self) -> dict:
        return {
            "source": self.source.name,
            "target": self.target.name,
            "expected_dim": self.expected_dim,
            "est_dim": self.est_dim,
            "boundary_obstructed": self.boundary_obstructed,
            "n_classes": self.n_classes,
            "count_mod2": self.count_mod2,
            "accepted": self.accepted,
            "n_broken": len(self.broken_records),
        }


def expected_moduli_dim(B: StationaryManifold, Bp: StationaryManifold) -> tuple[int, bool]:
    obstructed = B.kind == BOUNDARY_STABLE and Bp.kind == BOUNDARY_UNSTABLE
    d = B.index - Bp.index + B.dim - 1
    return (d + 1 if obstructed else d), obstructed


def _dedup_slice(points: np.ndarray, radius: float) -> list[int]:
    """Deterministic representatives: lexicographic order, greedy radius dedup."""
    order = np.lexsort(points.T[::-1])
    reps: list[int] = []
    for i in order:
        if all(np.linalg.norm(points[i] - points[j]) > radius for j in reps):
            reps.append(int(i))
    return reps


def _est_dim_rank(F: QuasiGradientField, B: StationaryManifold, rep: TrajectoryClass,
                  system, level: float, t_max: float) -> int:
    """Rank of the seed-perturbation -> slice-point map at one trajectory class."""
    M = F.manifold
    tols = F.tols
    b, u = rep.ev_minus, rep.seed - rep.ev_minus
    radius = np.linalg.norm(u)
    u = u / radius
    # seed-space chart: locus directions at b and the unstable sphere at u
    dirs = []
    if B.dim > 0:
        Tb = B.model.span
        for k in range(Tb.shape[1]):
            d_loc = Tb[:, k] - (Tb[:, k] @ (b - B.model.center)) * (b - B.model.center) / (B.model.radius ** 2)
            if np.linalg.norm(d_loc) > 1e-8:
                dirs.append(("base", d_loc / np.linalg.norm(d_loc)))
    U = unstable_frame(F, B, b, within_boundary=False)
    for k in range(U.shape[1]):
        d_sph = U[:, k] - (U[:, k] @ u) * u
        if np.linalg.norm(d_sph) > 1e-6:
            dirs.append(("dir", d_sph / np.linalg.norm(d_sph)))
    if not dirs:
        return 0
    h = tols.fd_step
    cols = []
    for kind, d_vec in dirs:
        pair = []
        for sgn in (+1.0, -1.0):
            if kind == "base":
                b2 = M.retract((b + sgn * h * d_vec)[None, :])[0]
                if B.model is not None:
                    b2 = M.retract(B.model.project(b2)[None, :])[0]
                seed2 = b2 + radius * u
            else:
                u2 = u + sgn * h * d_vec
                u2 /= np.linalg.norm(u2)
                seed2 = b + radius * u2
            seed2 = M.retract(seed2[None, :])[0]
            traj = integrate_batch(system, seed2[None, :], t_max, tols)[0]
            pair.append(f_slice_point(F, traj, level))
        cols.append((pair[0] - pair[1]) / (2 * h))
    Jac = np.stack(cols, axis=1)
    sv = np.linalg.svd(Jac, compute_uv=False)
    return int((sv > tols.sv_abs).sum())


def build_moduli(F: QuasiGradientField, loci: list[StationaryManifold],
                 B: StationaryManifold, Bp: StationaryManifold,
                 budget: int = 64, seed: int = 0, t_max: float = 400.0,
                 radius: float = 1e-3) -> ModuliSpace:
    """Shoot from the unstable sphere of B and keep trajectories landing on Bp."""
    expected, obstructed = expected_moduli_dim(B, Bp)
    if expected < 0:
        return ModuliSpace(B, Bp, [], expected, expected, obstructed,
                           accepted=True, count_mod2=0)
    if expected == 0:
        count, classes = count_connections(F, loci, B, Bp, seed=seed, t_max=t_max,
                                           radius=radius, budget=budget)
        ms = ModuliSpace(B, Bp, classes, 0, 0, obstructed, accepted=True,
                         count_mod2=count % 2)
        return ms

    within = obstructed or (B.kind != INTERIOR and Bp.kind != INTERIOR
                            and B.kind == BOUNDARY_STABLE)
    system = GradientFlowSystem(F, stick_to_boundary=within)
    seeds, meta = sample_unstable(F, B, radius, budget, seed=seed,
                                  within_boundary=within)
    trajs = integrate_batch(system, seeds, t_max, F.tols)
    level = 0.5 * (B.f_value + Bp.f_value)

    matched = []
    for tr, mt in zip(trajs, meta):
        if tr.status != "stationary":
            continue
        locus = resolve_limit(tr.end, loci, max(F.tols.landing_radius, 1e-3))
        if locus is None or locus.name != Bp.name:
            continue
        matched.append((tr, mt))
    if not matched:
        return ModuliSpace(B, Bp, [], expected, -1, obstructed, accepted=False)
    slice_pts = f_slice_points_batch(F, [tr for tr, _ in matched], level)
    kept: list[TrajectoryClass] = []
    flights = []
    for (tr, mt), sp in zip(matched, slice_pts):
        kept.append(TrajectoryClass(
            slice_point=sp, ev_minus=mt["base"],
            ev_plus=Bp.nearest_point(tr.end), seed=tr.start,
            flight_time=tr.flight_time, trajectory=tr))
        flights.append(tr.flight_time)

    pts = np.stack([c.slice_point for c in kept])
    reps = _dedup_slice(pts, F.tols.dedup_radius)
    classes = [kept[i] for i in reps]

    # rank-estimate at the most central class: short flight time keeps the
    # trajectory away from broken limits where slicing degenerates
    central = min(classes, key=lambda c: c.flight_time)
    est = _est_dim_rank(F, B, central, system, level, t_max)
    ms = ModuliSpace(B, Bp, classes, expected, est, obstructed,
                     accepted=(est == expected))

    med = float(np.median(flights))
    slow = [c for c in classes if c.flight_time > F.tols.breaking_factor * max(med, 1e-9)]
    if slow:
        ms.broken_records = detect_breaking(F, loci, [c.trajectory for c in slow], B)
    return ms


def _first_visit_name(tr: Trajectory, loci, src, radius: float) -> str | None:
    tgt = first_visit(tr, loci, src, radius=radius)
    return tgt.name if tgt is not None else None


def _omega_name(tr: Trajectory, loci, landing_radius: float) -> str | None:
    if tr.status != "stationary":
        return None
    locus = resolve_limit(tr.end, loci, landing_radius)
    return locus.name if locus is not None else None


def _source_scan(F: QuasiGradientField, loci: list[StationaryManifold],
                 B: StationaryManifold, seed: int, t_max: float, radius: float,
                 fan_size: int, within: bool) -> list[tuple[str, Trajectory]]:
    """All outgoing connecting orbits of a locus, labelled by first visit.

    Unstable rank 1: both directions are integrated directly.  Rank 2:
    a fan of directions is classified by landing basin, and each basin
    boundary is bisected; the boundary orbit's first visited locus names
    the connection.  Results are cached on the field object.
    """
    cache = getattr(F, "_scan_cache", None)
    if cache is None:
        cache = {}
        F._scan_cache = cache
    key = (B.name, seed, within, fan_size)
    if key in cache:
        return cache[key]

    system = GradientFlowSystem(F, stick_to_boundary=within)
    tols = F.tols
    visit_radius = 0.05
    b = B.base_point
    U = unstable_frame(F, B, b, within_boundary=within)
    rank = U.shape[1]
    if rank == 0:
        raise ZeroUnstableDim(f"locus {B.name} has no unstable directions")
    if rank > 2:
        raise ZeroUnstableDim(
            f"direct scans support unstable rank <= 2, got {rank}")

    inward = None
    if B.kind != INTERIOR and not within and F.manifold.boundary_fn is not None:
        grho = F.manifold.boundary_fn.gradient(b[None, :])[0]
        inward = -F.manifold.project_tangent(b[None, :], grho[None, :])[0]
        inward /= np.linalg.norm(inward)

    def run_dirs(dirs: np.ndarray) -> list[Trajectory]:
        seeds = F.manifold.retract(b[None, :] + radius * dirs)
        return integrate_batch(system, seeds, t_max, tols)

    out: list[tuple[str, Trajectory]] = []
    if rank == 1:
        dirs = [U[:, 0], -U[:, 0]]
        if inward is not None:
            dirs = [d for d in dirs if float(d @ inward) >= -1e-10]
        if dirs:
            trajs = run_dirs(np.stack(dirs))
            for tr in trajs:
                name = _first_visit_name(tr, loci, B, visit_radius)
                if name is not None:
                    out.append((name, tr))
        cache[key] = out
        return out

    # fan classified by basin (omega-limit); separatrices are the boundaries
    landing_radius = max(tols.landing_radius, 1e-3)
    phase = 2 * np.pi * 0.3819660112501051 / fan_size  # avoid dead-on separatrix hits
    angles = 2 * np.pi * np.arange(fan_size) / fan_size + phase
    dirs = np.outer(np.cos(angles), U[:, 0]) + np.outer(np.sin(angles), U[:, 1])
    trajs = run_dirs(dirs)
    landings = [_omega_name(tr, loci, landing_radius) for tr in trajs]

    # a fan orbit resolving onto a non-attracting locus sits on a separatrix:
    # record it once and drop the two flanking basin changes
    index_of = {x.name: x.index for x in loci}
    direct = [i for i, name in enumerate(landings)
              if name is not None and index_of.get(name, 0) >= 1]
    consumed = set()
    for i in direct:
        if i in consumed:
            continue
        run = [i]
        j = (i + 1) % fan_size
        while landings[j] == landings[i] and len(run) < fan_size:
            run.append(j)
            j = (j + 1) % fan_size
        consumed.update(run)
        tr = trajs[run[len(run) // 2]]
        name = _first_visit_name(tr, loci, B, visit_radius)
        if name is not None:
            out.append((name, tr))

    # bisect every remaining basin boundary in lockstep
    intervals = []
    for i in range(fan_size):
        j = (i + 1) % fan_size
        if landings[i] == landings[j] or i in consumed or j in consumed:
            continue
        intervals.append({"lo": angles[i], "hi": angles[i] + 2 * np.pi / fan_size,
                          "name_lo": landings[i]})
    for _ in range(30):
        if not intervals:
            break
        mids = np.array([0.5 * (iv["lo"] + iv["hi"]) for iv in intervals])
        dirs = np.outer(np.cos(mids), U[:, 0]) + np.outer(np.sin(mids), U[:, 1])
        trajs = run_dirs(dirs)
        for iv, mid, tr in zip(intervals, mids, trajs):
            if _omega_name(tr, loci, landing_radius) == iv["name_lo"]:
                iv["lo"] = mid
            else:
                iv["hi"] = mid
    for iv in intervals:
        mid = 0.5 * (iv["lo"] + iv["hi"])
        d_vec = np.cos(mid) * U[:, 0] + np.sin(mid) * U[:, 1]
        tr = run_dirs(d_vec[None, :])[0]
        name = _first_visit_name(tr, loci, B, visit_radius)
        if name is not None:
            out.append((name, tr))
    cache[key] = out
    return out


def count_connections(F: QuasiGradientField, loci: list[StationaryManifold],
                      B: StationaryManifold, Bp: StationaryManifold,
                      seed: int = 0, t_max: float = 400.0, radius: float = 1e-3,
                      budget: int = 64, fan_size: int = 48,
                      allow_reverse: bool = True) -> tuple[int, list[TrajectoryClass]]:
    """Count zero-dimensional moduli mod 2.

    With a one-dimensional unstable sphere the orbits are enumerated
    directly; with a two-dimensional one the isolated connecting orbits
    are basin boundaries in the seed fan, found by bisection.  When the
    unstable sphere is bigger the count runs in the time-reversed flow
    from the target instead.
    """
    obstructed = B.kind == BOUNDARY_STABLE and Bp.kind == BOUNDARY_UNSTABLE
    within = obstructed
    b = B.base_point
    U = unstable_frame(F, B, b, within_boundary=within)
    rank = U.shape[1]
    if rank == 0:
        raise ZeroUnstableDim(f"locus {B.name} has no unstable directions")
    if rank > 2 and allow_reverse:
        from flowhom.fields import reverse_field, reversed_locus
        F_rev = getattr(F, "_reversed", None)
        if F_rev is None:
            F_rev = reverse_field(F)
            F._reversed = F_rev
            F_rev._loci_rev = {x.name: reversed_locus(x) for x in loci}
        by_name = F_rev._loci_rev
        count, classes = count_connections(
            F_rev, list(by_name.values()), by_name[Bp.name], by_name[B.name],
            seed=seed, t_max=t_max, radius=radius, budget=budget,
            fan_size=fan_size, allow_reverse=False)
        flipped = [TrajectoryClass(c.slice_point, c.ev_plus, c.ev_minus, c.seed,
                                   c.flight_time, c.trajectory) for c in classes]
        return count, flipped
    if rank > 2:
        raise ZeroUnstableDim(
            f"count_connections supports unstable rank <= 2, got {rank}")

    level = 0.5 * (B.f_value + Bp.f_value)
    scan = _source_scan(F, loci, B, seed, t_max, radius, fan_size, within)
    classes: list[TrajectoryClass] = []
    for name, tr in scan:
        if name != Bp.name:
            continue
        try:
            sp = f_slice_point(F, tr, level)
        except SliceMissed:
            sp = tr.points[len(tr.points) // 2]
        classes.append(TrajectoryClass(
            slice_point=sp, ev_minus=b, ev_plus=Bp.nearest_point(tr.end),
            seed=tr.start, flight_time=tr.flight_time, trajectory=tr))
    return len(classes), classes


# -- transversality -----------------------------------------------------------


def _propagate_frame(F: QuasiGradientField, traj: Trajectory, frame: np.ndarray,
                     direction: int = +1, substeps: int = 4) -> np.ndarray:
    """Carry a tangent frame along the linearized flow dw/dt = -Dv w."""
    M = F.manifold
    pts = traj.points if direction > 0 else traj.points[::-1]
    ts = traj.times if direction > 0 else traj.times[::-1]
    W = frame.copy()
    for i in range(len(pts) - 1):
        dt = abs(float(ts[i + 1] - ts[i]))
        if dt == 0.0:
            continue
        h = dt / substeps
        x0, x1 = pts[i], pts[i + 1]
        for s in range(substeps):
            xm = x0 + (s + 0.5) / substeps * (x1 - x0)
            J = -direction * F.v.jacobian_at(xm)
            # RK2 midpoint on the frame
            W = W + h * (J @ (W + 0.5 * h * (J @ W)))
        nrm = np.linalg.norm(W, axis=0).max()
        if not np.isfinite(nrm) or nrm > 1e12:
            raise FrameBlowup("linearized propagation overflow; shrink the interval")
        W = M.tangent_projector(x1) @ W
        W, _ = np.linalg.qr(W)
    return W


def smale_check(F: QuasiGradientField, loci: list[StationaryManifold],
                B: StationaryManifold, Bp: StationaryManifold,
                traj: Trajectory) -> dict:
    """Geometric transversality of W^u(B) and W^s(Bp) along a trajectory.

    The unstable/stable eigenframes are propagated along the linearized
    flow to the trajectory midpoint; the defect is the codimension of
    their span (inside the boundary for boundary-obstructed pairs).
    """
    M = F.manifold
    obstructed = B.kind == BOUNDARY_STABLE and Bp.kind == BOUNDARY_UNSTABLE
    within = obstructed

    mid = len(traj.points) // 2
    fwd = Trajectory(traj.times[: mid + 1], traj.points[: mid + 1], traj.status)
    bwd = Trajectory(traj.times[mid:], traj.points[mid:], traj.status)

    start, end = traj.points[0], traj.points[-1]
    Uu = unstable_frame(F, B, B.nearest_point(start), within_boundary=within)
    if B.dim > 0:
        Tb = _locus_tangent(B, B.nearest_point(start))
        Uu = np.column_stack([Uu, Tb])
    Uu = M.tangent_projector(fwd.points[0]) @ Uu
    Uu, _ = np.linalg.qr(Uu)
    Wu = _propagate_frame(F, fwd, Uu, direction=+1)

    Qs = M.tangent_basis(Bp.nearest_point(end))
    A = Qs.T @ F.v.jacobian_at(Bp.nearest_point(end)) @ Qs
    gap = F.tols.spectral_gap
    S = _invariant_subspace(A, lambda re, im: re > gap)
    Us = Qs @ S
    if Bp.dim > 0:
        Us = np.column_stack([Us, _locus_tangent(Bp, Bp.nearest_point(end))])
    if within and M.boundary_fn is not None:
        Us = _restrict_to_boundary(M, Bp.nearest_point(end), Us)
    Us = M.tangent_projector(bwd.points[-1]) @ Us
    Us, _ = np.linalg.qr(Us)
    Ws = _propagate_frame(F, bwd, Us, direction=-1)

    span = np.column_stack([Wu, Ws])
    sv = np.linalg.svd(span, compute_uv=False)
    rank = int((sv > 1e-6).sum())
    ambient = M.dim - (1 if within else 0)
    defect = max(ambient - rank, 0)
    return {"transverse": defect == 0, "defect": defect,
            "dim_span": rank, "dim_needed": ambient}


def _locus_tangent(B: StationaryManifold, x) -> np.ndarray:
    rel = x - B.model.center
    U = B.model.span
    rel_in = U.T @ rel
    # tangent to the sphere inside its affine span
    basis = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        v = e - (e @ rel_in) * rel_in / (rel_in @ rel_in)
        if np.linalg.norm(v) > 1e-8:
            basis.append(U @ (v / np.linalg.norm(v)))
    Q, _ = np.linalg.qr(np.stack(basis, axis=1))
    return Q[:, :2]


def _restrict_to_boundary(M, x, frame) -> np.ndarray:
    grho = M.boundary_fn.gradient(np.atleast_2d(x))[0]
    n = M.project_tangent(np.atleast_2d(x), grho[None, :])[0]
    n /= np.linalg.norm(n)
    out = frame - np.outer(n, n @ frame)
    u, s, _ = np.linalg.svd(out, full_matrices=False)
    return u[:, s > 1e-8]


# -- breaking ------------------------------------------------------------------


def detect_breaking(F: QuasiGradientField, loci: list[StationaryManifold],
                    trajectories: list[Trajectory], source: StationaryManifold,
                    visit_radius: float = 0.05) -> list[dict]:
    """Split near-broken trajectories at stationary-neighborhood excursions."""
    records = []
    for tr in trajectories:
        dists = {}
        for b in loci:
            if b.name == source.name:
                continue
            if b.dim == 0:
                dists[b.name] = np.linalg.norm(tr.points - b.base_point[None, :], axis=1)
            else:
                dists[b.name] = np.array([b.distance(p) for p in tr.points])
        speeds = F.speed(tr.points)
        visits = []
        for name, dist in dists.items():
            inside = (dist < visit_radius) & (speeds < 10 * np.sqrt(F.tols.stationary))
            if inside.any():
                idx = np.flatnonzero(inside)
                visits.append({"locus": name, "enter": int(idx[0]), "exit": int(idx[-1])})
        visits.sort(key=lambda v: v["enter"])
        final = resolve_limit(tr.end, loci, max(F.tols.landing_radius, 1e-3))
        if final is not None and visits and visits[-1]["locus"] == final.name:
            visits = visits[:-1]
        if not visits:
            continue
        components = []
        start_idx = 0
        chain = [source.name]
        for v in visits:
            components.append((start_idx, v["enter"]))
            chain.append(v["locus"])
            start_idx = v["exit"]
        components.append((start_idx, len(tr.points) - 1))
        if final is not None:
            chain.append(final.name)
        ev_gaps = []
        for (a0, a1), v in zip(components[:-1], visits):
            lk = next(b for b in loci if b.name == v["locus"])
            ev_plus = lk.nearest_point(tr.points[a1])
            ev_minus_next = lk.nearest_point(tr.points[v["exit"]])
            ev_gaps.append(float(np.linalg.norm(ev_plus - ev_minus_next)))
        if any(g > 1e-2 for g in ev_gaps):
            raise UnresolvedBreaking(f"ev matching failed with gaps {ev_gaps}")
        records.append({"chain": chain, "components": components, "ev_gaps": ev_gaps})
    return records


# -- cut-down moduli ------------------------------------------------------------


@dataclass
class CutDownModuli:
    base: ModuliSpace
    section_rank: int
    est_dim: int
    elements: list[tuple[int, int]]      # (class index, crossing parity contribution)
    count_mod2: int

    def summary(self) -> dict:
        return {"source": self.base.source.name, "target": self.base.target.name,
                "rank": self.section_rank, "est_dim": self.est_dim,
                "count_mod2": self.count_mod2, "n_elements": len(self.elements)}


def cut_down_moduli(F: QuasiGradientField, moduli: ModuliSpace, section,
                    rank: int) -> CutDownModuli:
    """Cut a moduli space by the zero set of a section along trajectories.

    Elements are (trajectory, crossing) pairs: the section is evaluated
    along each trajectory path, and sign changes are the transverse
    crossings of the zero set.  The dimension drops by the section rank.
    Only rank-1 (real line) sections have a numeric crossing count; a
    rank-4 cut of anything below dimension 4 is empty.
    """
    est = moduli.est_dim - rank
    elements: list[tuple[int, int]] = []
    if rank >= 4 and moduli.est_dim < 4:
        return CutDownModuli(moduli, rank, est, [], 0)
    if rank != 1:
        raise NonTransverseSection("numeric cuts support rank-1 sections only")
    total = 0
    for ci, cls in enumerate(moduli.classes):
        vals = np.asarray(section(cls.trajectory.points), dtype=float).ravel()
        v0, v1 = vals[0], vals[-1]
        if abs(v0) < 1e-9 or abs(v1) < 1e-9:
            raise NonTransverseSection("section vanishes at a trajectory endpoint")
        crossings = int(np.sign(v0) != np.sign(v1))
        # interior double-crossings cancel mod 2; parity is endpoint signs
        if crossings:
            elements.append((ci, 1))
            total ^= 1
    return CutDownModuli(moduli, rank, est, elements, total)
