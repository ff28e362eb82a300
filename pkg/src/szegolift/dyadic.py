"""Dyadic cube systems on the truncated surface sample cloud.

The carrier for the measure is a finite weighted cloud (stratified
jittered grid with exact cell masses), which makes every cube property a
finite, decidable check: partitioning, nesting, unique ancestors, bounded
child counts, the inner/outer ball sandwich, ball nesting, center
separation and covering, and the parent/child mass ratio. Construction
follows the net-based scheme: nested maximal separated sets per level
(coarse nets extend into finer ones, optionally pinned to a distinguished
center), nearest-center parentage with index tie-breaks, finest-level
assignment, and upward propagation of membership.

Adjacent systems are independently seeded builds; their collective
ball-coverage quality is verified empirically. Haar functions are
martingale differences over the children of each cube, orthonormalised
with exact cloud masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .szego import quasi_metric_arrays, szego_kernel_arrays


class TooManyPoints(ValueError):
    pass


class SeparationFailure(RuntimeError):
    pass


class CoveringFailure(RuntimeError):
    pass


class NestingFailure(RuntimeError):
    pass


class AdjacencyDeficit(RuntimeError):
    pass


class DegenerateCube(RuntimeError):
    pass


class LevelOutOfRange(IndexError):
    pass


class EmptyCube(ValueError):
    pass


class NoPartnerFound(RuntimeError):
    def __init__(self, message, best=None, sign_violation=None):
        super().__init__(message)
        self.best = best
        self.sign_violation = sign_violation


@dataclass
class SampleCloud:
    k: int
    L: float
    T: float
    resolution: int
    seed: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.points)

    def spec(self) -> dict:
        return {"k": self.k, "L": self.L, "T": self.T,
                "resolution": self.resolution, "seed": self.seed}


def build_cloud(k: int, L: float, T: float, resolution: int, seed: int = 0) -> SampleCloud:
    """Stratified jittered grid over [-L,L]^2 x [-T,T] with exact cell masses."""
    if L <= 0 or T <= 0:
        raise ValueError("region half-widths must be positive")
    n = resolution ** 3
    if n > 1_000_000:
        raise TooManyPoints(f"resolution {resolution} would produce {n} points")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC10D]))
    edges = np.linspace(0.0, 1.0, resolution + 1)[:-1]
    ix, iy, iz = np.meshgrid(edges, edges, edges, indexing="ij")
    base = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
    jitter = rng.uniform(0.0, 1.0 / resolution, size=base.shape)
    unit = base + jitter
    pts = np.empty_like(unit)
    pts[:, 0] = -L + 2 * L * unit[:, 0]
    pts[:, 1] = -L + 2 * L * unit[:, 1]
    pts[:, 2] = -T + 2 * T * unit[:, 2]
    cell_mass = (2 * L) * (2 * L) * (2 * T) / n
    return SampleCloud(k=k, L=L, T=T, resolution=resolution, seed=seed,
                       points=pts, weights=np.full(n, cell_mass))


def dvec(k: int, points: np.ndarray, center: np.ndarray) -> np.ndarray:
    _, _, _, d = quasi_metric_arrays(k, points, center[None, :])
    return d


def measure_quasi_triangle(cloud: SampleCloud, n_triples: int = 50_000, seed: int = 0) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7121]))
    n = len(cloud)
    i, j, l = (rng.integers(0, n, n_triples) for _ in range(3))
    P, Q, R = cloud.points[i], cloud.points[j], cloud.points[l]
    _, _, _, dpr = quasi_metric_arrays(cloud.k, P, R)
    _, _, _, dpq = quasi_metric_arrays(cloud.k, P, Q)
    _, _, _, dqr = quasi_metric_arrays(cloud.k, Q, R)
    denom = dpq + dqr
    ok = denom > 0
    return float((dpr[ok] / denom[ok]).max())


class _BoxIndex:
    """Coordinate-box prefilter: any pair with d < r lands in neighbouring
    cells for cell sizes derived from the conservative ball box."""

    def __init__(self, points: np.ndarray, rz: float, bt: float):
        self.points = points
        self.rz = max(rz, 1e-12)
        self.bt = max(bt, 1e-12)
        self.cells: dict = {}

    def key(self, p) -> tuple:
        return (int(math.floor(p[0] / self.rz)),
                int(math.floor(p[1] / self.rz)),
                int(math.floor(p[2] / self.bt)))

    def insert(self, idx: int, p) -> None:
        self.cells.setdefault(self.key(p), []).append(idx)

    def neighbors(self, p) -> list:
        kx, ky, kz = self.key(p)
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    out.extend(self.cells.get((kx + dx, ky + dy, kz + dz), ()))
        return out


def ball_box_bounds(k: int, r: float, az: float) -> tuple[float, float]:
    """Half-widths of a coordinate box containing every q with d(p, q) < r
    for any p with |z_p| <= az (same derivation as the ball sampler)."""
    rz = r ** (1.0 / (2 * k + 2))
    sig = math.sqrt(r) * (2 * az + rz) ** (k - 1) + 1e-300
    for _ in range(60):
        sig = math.sqrt(r) * (2 * az + rz + sig ** (1.0 / (2 * k))) ** (k - 1)
    sig *= 1.05
    wind = k * az ** k * (az + rz) ** (k - 1) * rz if az > 0 else 0.0
    return rz, sig + wind


@dataclass
class DyadicSystem:
    cloud: SampleCloud
    delta: float
    levels: list            # kappa values, coarse to fine
    centers: dict           # kappa -> array of cloud point indices
    parent: dict            # kappa -> array mapping cube -> parent cube index (coarser level)
    membership: dict        # kappa -> array mapping cloud point -> cube index
    masses: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)
    cd_hat: float = 0.0
    a1: float = 0.0
    A1: float = 0.0
    max_children: int = 0
    cmu0: float = 0.0
    covering_witness: dict = field(default_factory=dict)

    def n_cubes(self, kappa: int) -> int:
        return len(self.centers[kappa])

    def scale(self, kappa: int) -> float:
        return self.delta ** kappa

    def center_point(self, kappa: int, q: int) -> np.ndarray:
        return self.cloud.points[self.centers[kappa][q]]

    def cube_points(self, kappa: int, q: int) -> np.ndarray:
        return np.nonzero(self.membership[kappa] == q)[0]

    def cube_mass(self, kappa: int, q: int) -> float:
        return float(self.masses[kappa][q])

    def finalize(self) -> None:
        """Derive masses, children, and the measured geometric constants."""
        w = self.cloud.weights
        for kappa in self.levels:
            counts = np.bincount(self.membership[kappa], weights=w, minlength=self.n_cubes(kappa))
            self.masses[kappa] = counts
        self.children = {}
        for prev, kappa in zip(self.levels, self.levels[1:]):
            buckets = [[] for _ in range(self.n_cubes(prev))]
            for q, par in enumerate(self.parent[kappa]):
                buckets[par].append(q)
            self.children[prev] = [np.asarray(b, dtype=int) for b in buckets]
        self.max_children = max(
            (len(b) for kappa in self.children for b in self.children[kappa]), default=1
        )
        ratios = []
        for prev in self.children:
            for q, kids in enumerate(self.children[prev]):
                pm = self.masses[prev][q]
                for c in kids:
                    ratios.append(pm / self.masses[self.levels[self.levels.index(prev) + 1]][c])
        self.cmu0 = float(max(ratios)) if ratios else 1.0

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "cloud": self.cloud.spec(),
            "delta": self.delta,
            "levels": list(map(int, self.levels)),
            "cd_hat": self.cd_hat,
            "centers": {str(k): [int(i) for i in v] for k, v in self.centers.items()},
            "parents": {str(k): [int(i) for i in v] for k, v in self.parent.items()},
            "finest_membership": [int(i) for i in self.membership[self.levels[-1]]],
            "a1": self.a1,
            "A1": self.A1,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "DyadicSystem":
        cloud = build_cloud(**data["cloud"])
        levels = list(data["levels"])
        centers = {int(k): np.asarray(v, dtype=int) for k, v in data["centers"].items()}
        parent = {int(k): np.asarray(v, dtype=int) for k, v in data["parents"].items()}
        membership = {levels[-1]: np.asarray(data["finest_membership"], dtype=int)}
        for prev, kappa in zip(reversed(levels[:-1]), reversed(levels[1:])):
            membership[prev] = parent[kappa][membership[kappa]]
        system = DyadicSystem(cloud=cloud, delta=data["delta"], levels=levels,
                              centers=centers, parent=parent, membership=membership,
                              cd_hat=data["cd_hat"], a1=data["a1"], A1=data["A1"])
        system.finalize()
        return system


def _greedy_net(cloud: SampleCloud, radius: float, seeds: Sequence[int],
                order: np.ndarray) -> tuple[list, np.ndarray]:
    """Maximal radius-separated subset; returns (centers, covering witness).

    ``seeds`` are forced in first (nesting across levels / distinguished
    center); every non-center records a center within ``radius``.
    """
    pts = cloud.points
    az = math.sqrt(2.0) * cloud.L
    rz, bt = ball_box_bounds(cloud.k, radius, az)
    index = _BoxIndex(pts, rz, bt)
    centers: list = []
    witness = np.full(len(pts), -1, dtype=int)

    def try_add(i: int) -> None:
        p = pts[i]
        cand = index.neighbors(p)
        if cand:
            idx = np.asarray([centers[c] for c in cand])
            d = dvec(cloud.k, pts[idx], p)
            pos = int(np.argmin(d))
            if d[pos] < radius:
                witness[i] = cand[pos]
                return
        witness[i] = len(centers)
        index.insert(len(centers), p)
        centers.append(i)

    for s in seeds:
        try_add(int(s))
    for i in order:
        if witness[i] == -1:
            try_add(int(i))
    return centers, witness


def build_system(cloud: SampleCloud, delta: float | None = None, levels: int = 5,
                 seed: int = 0, fixed_center: int | None = None,
                 cd_hat: float | None = None, kappa_start: int | None = None) -> DyadicSystem:
    """Construct and finalize a dyadic forest over the cloud.

    ``delta`` defaults to the sufficient bound (12 cd_hat^3)^{-1} with the
    empirically measured quasi-triangle constant; larger explicit values
    are accepted and validated by :func:`check_system` (the machine checks
    are the actual gate, the formula is only sufficient).
    """
    if cd_hat is None:
        cd_hat = measure_quasi_triangle(cloud, seed=seed)
    if delta is None:
        delta = 1.0 / (12.0 * cd_hat ** 3)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1AD]))
    if kappa_start is None:
        n = len(cloud)
        i, j = rng.integers(0, n, 4096), rng.integers(0, n, 4096)
        _, _, _, d = quasi_metric_arrays(cloud.k, cloud.points[i], cloud.points[j])
        d95 = float(np.quantile(d[d > 0], 0.95))
        kappa_start = int(math.floor(math.log(d95) / math.log(delta)))
    level_list = [kappa_start + j for j in range(levels)]

    order = rng.permutation(len(cloud))
    centers: dict = {}
    witness: dict = {}
    prev: list = [] if fixed_center is None else [fixed_center]
    for kappa in level_list:
        radius = delta ** kappa
        seeds = prev if prev else ([] if fixed_center is None else [fixed_center])
        c, wts = _greedy_net(cloud, radius, seeds, order)
        centers[kappa] = np.asarray(c, dtype=int)
        witness[kappa] = wts
        prev = c

    # parentage: nearest coarser-level center, ties by smallest index
    parent: dict = {}
    for prevk, kappa in zip(level_list, level_list[1:]):
        coarse_idx = centers[prevk]
        coarse_pts = cloud.points[coarse_idx]
        az = math.sqrt(2.0) * cloud.L
        rz, bt = ball_box_bounds(cloud.k, delta ** prevk, az)
        index = _BoxIndex(coarse_pts, rz, bt)
        for ci, p in enumerate(coarse_pts):
            index.insert(ci, p)
        par = np.empty(len(centers[kappa]), dtype=int)
        for q, i in enumerate(centers[kappa]):
            p = cloud.points[i]
            cand = index.neighbors(p)
            if not cand:
                cand = list(range(len(coarse_idx)))
            cand = np.asarray(sorted(set(cand)), dtype=int)
            d = dvec(cloud.k, coarse_pts[cand], p)
            best = d.min()
            par[q] = int(cand[np.nonzero(d == best)[0][0]])
        parent[kappa] = par

    # membership: nearest finest center, then upward propagation
    finest = level_list[-1]
    fidx = centers[finest]
    fpts = cloud.points[fidx]
    az = math.sqrt(2.0) * cloud.L
    rz, bt = ball_box_bounds(cloud.k, delta ** finest, az)
    index = _BoxIndex(fpts, rz, bt)
    for ci, p in enumerate(fpts):
        index.insert(ci, p)
    member = np.empty(len(cloud), dtype=int)
    for i, p in enumerate(cloud.points):
        cand = index.neighbors(p)
        if not cand:
            cand = [int(witness[finest][i])]
        cand = np.asarray(sorted(set(cand)), dtype=int)
        d = dvec(cloud.k, fpts[cand], p)
        best = d.min()
        member[i] = int(cand[np.nonzero(d == best)[0][0]])
    membership = {finest: member}
    for prevk, kappa in zip(reversed(level_list[:-1]), reversed(level_list[1:])):
        membership[prevk] = parent[kappa][membership[kappa]]

    system = DyadicSystem(cloud=cloud, delta=delta, levels=level_list, centers=centers,
                          parent=parent, membership=membership, cd_hat=cd_hat,
                          covering_witness=witness)
    system.finalize()
    _measure_ball_constants(system)
    return system


def _measure_ball_constants(system: DyadicSystem) -> None:
    """Record the verified inner/outer ball constants of the built forest."""
    cloud = system.cloud
    az = math.sqrt(2.0) * cloud.L
    a1 = math.inf
    A1 = 0.0
    for kappa in system.levels:
        radius = system.scale(kappa)
        member = system.membership[kappa]
        groups = _group_by_cube(member, system.n_cubes(kappa))
        for q in range(system.n_cubes(kappa)):
            cpt = system.center_point(kappa, q)
            mine = groups[q]
            if mine.size:
                d = dvec(cloud.k, cloud.points[mine], cpt)
                A1 = max(A1, float(d.max()) / radius)
            # nearest non-member via an expanding conservative box
            probe = radius
            nearest = math.inf
            for _ in range(60):
                rz, bt = ball_box_bounds(cloud.k, probe, az)
                sel = (np.abs(cloud.points[:, 0] - cpt[0]) <= rz) \
                    & (np.abs(cloud.points[:, 1] - cpt[1]) <= rz) \
                    & (np.abs(cloud.points[:, 2] - cpt[2]) <= bt) \
                    & (member != q)
                if sel.any():
                    d = dvec(cloud.k, cloud.points[sel], cpt)
                    close = d[d < probe]
                    if close.size:
                        nearest = float(close.min())
                        break
                if sel.sum() == (member != q).sum():
                    d = dvec(cloud.k, cloud.points[member != q], cpt)
                    nearest = float(d.min()) if d.size else math.inf
                    break
                probe *= 4.0
            if math.isfinite(nearest):
                a1 = min(a1, nearest / radius)
    system.a1 = 0.999 * a1 if math.isfinite(a1) else 1.0
    system.A1 = _calibrate_outer_constant(system, 1.001 * max(A1, 1e-12))


def _calibrate_outer_constant(system: DyadicSystem, A1_outer: float) -> float:
    """Smallest outer constant satisfying the ball-nesting axiom.

    For each refining cube the map A1 -> (needed parent constant) is
    evaluated from sorted child-distances with a prefix max of parent
    distances, and the shared constant is the fixed point of the pointwise
    maximum. Diverging iteration means delta is too large for this cloud.
    """
    cloud = system.cloud
    az = math.sqrt(2.0) * cloud.L
    cap = 4096.0 * A1_outer
    tables = []
    for prevk, kappa in zip(system.levels, system.levels[1:]):
        rc_cap = cap * system.scale(kappa)
        rz, bt = ball_box_bounds(cloud.k, rc_cap, az)
        for q in range(system.n_cubes(kappa)):
            cpt = system.center_point(kappa, q)
            ppt = system.center_point(prevk, int(system.parent[kappa][q]))
            sel = (np.abs(cloud.points[:, 0] - cpt[0]) <= rz) \
                & (np.abs(cloud.points[:, 1] - cpt[1]) <= rz) \
                & (np.abs(cloud.points[:, 2] - cpt[2]) <= bt)
            pts = cloud.points[sel]
            if not len(pts):
                continue
            d_child = dvec(cloud.k, pts, cpt) / system.scale(kappa)
            d_par = dvec(cloud.k, pts, ppt) / system.scale(prevk)
            order = np.argsort(d_child, kind="stable")
            tables.append((d_child[order], np.maximum.accumulate(d_par[order])))

    A1 = A1_outer
    for _ in range(200):
        need = A1_outer
        for d_child, par_prefix in tables:
            pos = int(np.searchsorted(d_child, A1, side="left")) - 1
            if pos >= 0:
                need = max(need, float(par_prefix[pos]))
        if need <= A1 * (1.0 + 1e-12):
            return A1
        if need > cap:
            raise NestingFailure(
                "ball-nesting constant diverges; delta is too large for this cloud")
        A1 = need * (1.0 + 1e-9)
    raise NestingFailure("ball-nesting calibration did not converge")


def check_system(system: DyadicSystem) -> dict:
    """Re-verify every dyadic axiom on the cloud; raises on violation."""
    cloud = system.cloud
    w = cloud.weights
    report: dict = {"levels": list(system.levels), "delta": system.delta}

    # (i) partition with exact mass accounting
    for kappa in system.levels:
        m = system.membership[kappa]
        if m.min() < 0 or m.max() >= system.n_cubes(kappa):
            raise NestingFailure(f"membership out of range at level {kappa}")
        if not math.isclose(system.masses[kappa].sum(), cloud.total_mass, rel_tol=1e-12):
            raise NestingFailure(f"masses do not sum to the cloud mass at level {kappa}")

    # (ii)/(iii) nesting: the finer cube chain refines the coarser one
    for prevk, kappa in zip(system.levels, system.levels[1:]):
        if not np.array_equal(system.membership[prevk], system.parent[kappa][system.membership[kappa]]):
            raise NestingFailure(f"membership at {prevk} is not the parent image of {kappa}")

    # (iv) bounded, complete children
    for prevk in system.children:
        sizes = [len(b) for b in system.children[prevk]]
        if min(sizes, default=1) < 1:
            raise NestingFailure(f"empty cube at level {prevk}")
    report["max_children"] = system.max_children
    report["cmu0"] = system.cmu0

    # separation and covering for the net centers
    az = math.sqrt(2.0) * cloud.L
    for kappa in system.levels:
        radius = system.scale(kappa)
        idx = system.centers[kappa]
        pts = cloud.points[idx]
        rz, bt = ball_box_bounds(cloud.k, radius, az)
        index = _BoxIndex(pts, rz, bt)
        for ci, p in enumerate(pts):
            cand = index.neighbors(p)
            if cand:
                arr = np.asarray(cand, dtype=int)
                d = dvec(cloud.k, pts[arr], p)
                if bool((d < radius).any()):
                    other = arr[d < radius][0]
                    raise SeparationFailure(
                        f"centers {ci} and {other} at level {kappa} are {d.min():.3e} < {radius:.3e} apart")
            index.insert(ci, p)
        for i, p in enumerate(cloud.points):
            cand = index.neighbors(p)
            if not cand:
                raise CoveringFailure(f"point {i} has no candidate center at level {kappa}")
            d = dvec(cloud.k, pts[np.asarray(cand, dtype=int)], p)
            if float(d.min()) >= radius:
                raise CoveringFailure(
                    f"point {i} is {d.min():.3e} >= {radius:.3e} from every center at level {kappa}")
    report["covering_ok"] = True

    # (v) ball sandwich with the recorded constants
    for kappa in system.levels:
        radius = system.scale(kappa)
        member = system.membership[kappa]
        by_cube = _group_by_cube(member, system.n_cubes(kappa))
        inner = system.a1 * radius
        rz, bt = ball_box_bounds(cloud.k, inner, az)
        index = _BoxIndex(cloud.points, rz, bt)
        for i, p in enumerate(cloud.points):
            index.insert(i, p)
        for q in range(system.n_cubes(kappa)):
            cpt = system.center_point(kappa, q)
            mine = by_cube[q]
            if mine.size:
                d = dvec(cloud.k, cloud.points[mine], cpt)
                if float(d.max()) > system.A1 * radius:
                    raise NestingFailure(f"outer ball violated at level {kappa} cube {q}")
            cand = np.asarray(index.neighbors(cpt), dtype=int)
            if cand.size:
                d = dvec(cloud.k, cloud.points[cand], cpt)
                close = cand[d < inner]
                if close.size and bool((member[close] != q).any()):
                    raise NestingFailure(f"inner ball violated at level {kappa} cube {q}")

    # (vi) ball nesting along ancestor chains
    for prevk, kappa in zip(system.levels, system.levels[1:]):
        rc = system.A1 * system.scale(kappa)
        rp = system.A1 * system.scale(prevk)
        rz, bt = ball_box_bounds(cloud.k, rc, az)
        index = _BoxIndex(cloud.points, rz, bt)
        for i, p in enumerate(cloud.points):
            index.insert(i, p)
        for q in range(system.n_cubes(kappa)):
            cpt = system.center_point(kappa, q)
            ppt = system.center_point(prevk, int(system.parent[kappa][q]))
            cand = np.asarray(index.neighbors(cpt), dtype=int)
            if not cand.size:
                continue
            d_child = dvec(cloud.k, cloud.points[cand], cpt)
            inside = cand[d_child < rc]
            if inside.size:
                d_par = dvec(cloud.k, cloud.points[inside], ppt)
                if float(d_par.max()) >= rp:
                    raise NestingFailure(f"ball nesting violated: child {q} at level {kappa}")
    report["a1"] = system.a1
    report["A1"] = system.A1
    return report


def _group_by_cube(member: np.ndarray, n_cubes: int) -> list:
    order = np.argsort(member, kind="stable")
    sorted_m = member[order]
    bounds = np.searchsorted(sorted_m, np.arange(n_cubes + 1))
    return [order[bounds[q]:bounds[q + 1]] for q in range(n_cubes)]


# -- adjacent systems -------------------------------------------------------


def build_adjacent_systems(cloud: SampleCloud, t_count: int, delta: float, levels: int = 5,
                           seed: int = 0, cd_hat: float | None = None,
                           kappa_start: int | None = None) -> list:
    """Independently seeded systems over one cloud, sharing delta and levels."""
    if t_count < 1:
        raise ValueError("need at least one system")
    if cd_hat is None:
        cd_hat = measure_quasi_triangle(cloud, seed=seed)
    return [
        build_system(cloud, delta=delta, levels=levels, seed=seed + 1000 * (t + 1),
                     cd_hat=cd_hat, kappa_start=kappa_start)
        for t in range(t_count)
    ]


def adjacency_report(systems: list, n_balls: int = 400, seed: int = 0,
                     max_fail_rate: float = 0.01, strict: bool = False) -> dict:
    """Empirical ball coverage: for each test ball, some system owns a cube
    sandwiching it. Reports the failure rate and the outer constant."""
    cloud = systems[0].cloud
    delta = systems[0].delta
    levels = systems[0].levels
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD7A]))
    # match radii to cubes two or three generations coarser, per the
    # adjacency convention; only levels with that much headroom qualify
    usable = levels[:-3] if len(levels) > 3 else levels[:1]
    hits = 0
    total = 0
    outer_c = 0.0
    for _ in range(n_balls):
        kappa = int(rng.choice(usable))
        r = float(rng.uniform(delta ** (kappa + 3), delta ** (kappa + 2)))
        x = cloud.points[int(rng.integers(0, len(cloud)))]
        d_all = dvec(cloud.k, cloud.points, x)
        ball = np.nonzero(d_all < r)[0]
        if ball.size == 0:
            continue
        total += 1
        found = False
        for system in systems:
            member = system.membership[kappa]
            owner = member[ball[0]]
            if bool((member[ball] == owner).all()):
                cube_pts = system.cube_points(kappa, int(owner))
                reach = float(dvec(cloud.k, cloud.points[cube_pts], x).max())
                outer_c = max(outer_c, reach / r)
                found = True
                break
        hits += found
    rate = 1.0 - hits / max(total, 1)
    report = {"tested": total, "fail_rate": rate, "outer_constant": outer_c,
              "systems": len(systems)}
    if strict and rate > max_fail_rate:
        raise AdjacencyDeficit(
            f"ball coverage failure rate {rate:.3f} exceeds {max_fail_rate} with {len(systems)} systems")
    return report


# -- Haar functions ---------------------------------------------------------


@dataclass(frozen=True)
class HaarFunction:
    level: int
    cube: int
    index: int           # 1..M_Q-1
    child_cubes: tuple   # child cube ids at level+1... (next level value)
    values: tuple        # one value per child, constant there

    def evaluate(self, system: DyadicSystem, points_member_next: np.ndarray) -> np.ndarray:
        out = np.zeros(len(points_member_next))
        for c, v in zip(self.child_cubes, self.values):
            out[points_member_next == c] = v
        return out


def haar_basis(system: DyadicSystem) -> dict:
    """Martingale-difference functions for every refining cube.

    For a cube with children masses m_1..m_M, Gram-Schmidt over the child
    indicators against the constants yields M-1 orthonormal mean-zero
    functions in the fixed child order.
    """
    out: dict = {}
    for prevk, kappa in zip(system.levels, system.levels[1:]):
        child_masses = system.masses[kappa]
        for q, kids in enumerate(system.children[prevk]):
            kids = [int(c) for c in kids]
            masses = np.asarray([child_masses[c] for c in kids], dtype=float)
            live = [i for i, m in enumerate(masses) if m > 0]
            if len(live) < len(kids):
                # zero-mass children cannot occur on a cloud build, but the
                # contract is to fold them into a sibling and continue
                raise DegenerateCube(f"cube {q} at level {prevk} has a massless child")
            if len(kids) < 2:
                out[(prevk, q)] = []
                continue
            funcs = []
            basis_rows = []
            for eps in range(len(kids) - 1):
                vec = np.zeros(len(kids))
                vec[eps] = 1.0
                # orthogonalise against constants and previous rows, twice
                for _ in range(2):
                    vec = vec - np.dot(masses, vec) / masses.sum()
                    for row in basis_rows:
                        vec = vec - np.dot(masses * row, vec) * row
                norm = math.sqrt(float(np.dot(masses, vec * vec)))
                vec = vec / norm
                basis_rows.append(vec)
                funcs.append(HaarFunction(level=prevk, cube=q, index=eps + 1,
                                          child_cubes=tuple(kids), values=tuple(vec)))
            out[(prevk, q)] = funcs
    return out


def haar_coefficient(system: DyadicSystem, h: HaarFunction, f_values: np.ndarray) -> float:
    """<f, h> in L^2(mu), via child sums."""
    next_level = system.levels[system.levels.index(h.level) + 1]
    member = system.membership[next_level]
    w = system.cloud.weights
    acc = 0.0
    for c, v in zip(h.child_cubes, h.values):
        sel = member == c
        acc += v * float(np.dot(w[sel], f_values[sel]))
    return acc


def conditional_expectation(system: DyadicSystem, f_values: np.ndarray, kappa: int) -> np.ndarray:
    """Cube-wise mu-averages at one level, broadcast back to the cloud."""
    if kappa not in system.levels:
        raise LevelOutOfRange(f"level {kappa} not in {system.levels}")
    member = system.membership[kappa]
    w = system.cloud.weights
    sums = np.bincount(member, weights=w * f_values, minlength=system.n_cubes(kappa))
    means = sums / system.masses[kappa]
    return means[member]


def median(values: np.ndarray, masses: np.ndarray) -> tuple:
    """Weighted lower median m with mu{f<m} <= half and mu{f>m} <= half.

    Returns (m, mass_below, mass_above) for the strict sub/super level sets.
    """
    total = float(masses.sum())
    if total <= 0:
        raise EmptyCube("median of a massless cube")
    order = np.argsort(values, kind="stable")
    v = values[order]
    m = masses[order]
    cum = np.cumsum(m)
    pos = int(np.searchsorted(cum, 0.5 * total))
    med = float(v[pos])
    below = float(m[v < med].sum())
    above = float(m[v > med].sum())
    return med, below, above


def cube_median(system: DyadicSystem, f_values: np.ndarray, kappa: int, q: int) -> tuple:
    pts = system.cube_points(kappa, q)
    if pts.size == 0:
        raise EmptyCube(f"cube {q} at level {kappa} is empty")
    return median(f_values[pts], system.cloud.weights[pts])


@dataclass
class PartnerResult:
    level: int
    cube: int
    partner: int
    component: str        # "re" or "im"
    sign: float
    lower_constant: float  # min |component| * |Q|
    center_distance: float
    mass_ratio: float


def find_partner_cube(system: DyadicSystem, kappa: int, q: int,
                      a3: float = 2.0, a4: float = 16.0,
                      sample_cap: int = 120, seed: int = 0,
                      require_half_mass: bool = False) -> PartnerResult:
    """Search same-generation cubes in the annulus [a3 cd δ^κ, a4 cd δ^κ]
    for one where Re S or Im S keeps a single sign on sampled pairs.

    Candidates are scanned by increasing center distance; the first cube
    whose kernel component is sign-constant with a positive mass-normalised
    floor wins. ``require_half_mass`` additionally demands the partner mass
    not exceed twice the cube mass (used by the NWO frames).
    """
    cloud = system.cloud
    if kappa not in system.levels:
        raise LevelOutOfRange(f"level {kappa} not in {system.levels}")
    cd = system.cd_hat
    radius = system.scale(kappa)
    lo, hi = a3 * cd * radius, a4 * cd * radius
    centers = cloud.points[system.centers[kappa]]
    cpt = system.center_point(kappa, q)
    d = dvec(cloud.k, centers, cpt)
    window = np.nonzero((d > lo) & (d < hi))[0]
    window = window[np.argsort(d[window], kind="stable")]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9A47]))

    my_pts = system.cube_points(kappa, q)
    if my_pts.size > sample_cap:
        my_pts = my_pts[rng.choice(len(my_pts), sample_cap, replace=False)]
    mass_q = system.cube_mass(kappa, q)

    best = None
    best_violation = 1.0
    for cand in window:
        cand = int(cand)
        if cand == q:
            continue
        other_pts = system.cube_points(kappa, cand)
        if other_pts.size == 0:
            continue
        mass_ratio = system.cube_mass(kappa, cand) / mass_q
        if require_half_mass and mass_ratio > 2.0:
            continue
        sub = other_pts
        if sub.size > sample_cap:
            sub = sub[rng.choice(len(sub), sample_cap, replace=False)]
        P = np.repeat(cloud.points[my_pts], len(sub), axis=0)
        Q = np.tile(cloud.points[sub], (len(my_pts), 1))
        _, _, S = szego_kernel_arrays(cloud.k, P, Q)
        for name, comp in (("re", S.real), ("im", S.imag)):
            pos = float((comp > 0).mean())
            if pos == 1.0 or pos == 0.0:
                sign = 1.0 if pos == 1.0 else -1.0
                floor = float(np.abs(comp).min()) * mass_q
                if floor > 0:
                    return PartnerResult(level=kappa, cube=q, partner=cand,
                                         component=name, sign=sign,
                                         lower_constant=floor,
                                         center_distance=float(d[cand]),
                                         mass_ratio=mass_ratio)
            violation = min(pos, 1 - pos)
            if violation < best_violation:
                best_violation = violation
                best = cand
    raise NoPartnerFound(
        f"no sign-constant partner for cube {q} at level {kappa} in window [{lo:.3g}, {hi:.3g}]",
        best=best, sign_violation=best_violation)
