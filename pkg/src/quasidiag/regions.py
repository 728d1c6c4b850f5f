"""Shrinking phase intervals, resonance levels and the regions where rotations act."""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import RegionOverlap, ResonantFrequency
from .model import circle_dist, frac, l1_sphere_points, resonance_tolerance


def beta_s(beta, s):
    """beta ** (s / log(s + 1)), with the value 1 at s = 0."""
    if s == 0:
        return 1.0
    return beta ** (s / math.log(s + 1))


@dataclass(frozen=True)
class TorusInterval:
    """Open arc (center - radius, center + radius) on the circle R/Z."""

    center: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", frac(self.center))

    def contains(self, y):
        return circle_dist(np.asarray(y, dtype=float) - self.center) < self.radius

    def length(self):
        return min(2 * self.radius, 1.0)

    def grid(self, size):
        """Midpoint grid of `size` phases strictly inside the arc."""
        r = min(self.radius, 0.5)
        t = (np.arange(size) + 0.5) / size
        return self.center + r * (2 * t - 1)


def make_intervals(x0, beta, s_max):
    """[I_0, I_1, ..., I_s_max]; I_0 is the whole circle."""
    return [TorusInterval(x0, beta_s(beta, s)) for s in range(s_max + 1)]


def level(n, freq, beta):
    """Largest l with 2 |n.omega| <= beta_s(beta, l)."""
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if not np.any(n):
        raise ValueError("level is undefined at n = 0")
    dist = circle_dist(float(n @ freq.vector))
    if dist <= resonance_tolerance(np.abs(n).sum()):
        raise ResonantFrequency(n, dist)
    ell = 0
    while 2 * dist <= beta_s(beta, ell + 1):
        ell += 1
    return ell


def ball(center, radius):
    """l1 ball of lattice points as a frozenset of tuples."""
    c = np.atleast_1d(np.asarray(center, dtype=int))
    pts = l1_sphere_points(len(c), radius) if radius > 0 else np.zeros((0, len(c)), int)
    return frozenset([tuple(c.tolist())] + [tuple(p) for p in (pts + c).tolist()])


def basic_region(n, s, x, intervals, freq):
    """The ball of radius s around n when x + n.omega lies in I_s, else empty."""
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if intervals[s].contains(x + float(n @ freq.vector)):
        return ball(n, s)
    return frozenset()


@dataclass
class RegionFamily:
    step: int
    kind: str
    regions: dict
    clipped: bool = False

    def sites(self):
        out = set()
        for r in self.regions.values():
            out |= r
        return out

    def to_json(self):
        rows = [{"step": self.step, "center": list(c), "sites": sorted(list(p) for p in r)}
                for c, r in sorted(self.regions.items())]
        return json.dumps({"kind": self.kind, "clipped": self.clipped, "regions": rows})


def l1_diameter(region):
    if len(region) < 2:
        return 0
    a = np.array(sorted(region))
    return int(np.abs(a[:, None, :] - a[None, :, :]).sum(axis=2).max())


def active_centers(s, x, intervals, freq, ambient):
    ph = x + ambient.sites @ freq.vector
    mask = intervals[s].contains(ph)
    return [tuple(p) for p in ambient.sites[mask].tolist()]


def _check_disjoint(step, regions):
    owner = {}
    for c, r in regions.items():
        for p in r:
            other = owner.get(p)
            if other is not None and other != c:
                raise RegionOverlap(step, other, c)
            owner[p] = c


class RegionBuilder:
    """Extended regions for one (phase, interval sequence) pair.

    Results are memoised per (step, center) for the lifetime of the builder,
    which is meant to be a single scheme run.
    """

    def __init__(self, x, intervals, freq, ambient):
        self.x = x
        self.intervals = intervals
        self.freq = freq
        self.ambient = ambient
        self._families = {}
        self.clipped = False

    def basic(self, s):
        regs = {c: ball(c, s) for c in active_centers(s, self.x, self.intervals,
                                                      self.freq, self.ambient)}
        _check_disjoint(s, regs)
        return regs

    def extended(self, s):
        if s in self._families:
            return self._families[s]
        regs = {}
        for c, r in self.basic(s).items():
            grown = set(r)
            for ell in range(1, s):
                for lower in self.extended(ell).values():
                    if lower & r:
                        grown |= lower
            regs[c] = frozenset(grown)
        _check_disjoint(s, regs)
        for r in regs.values():
            if any(p not in self.ambient for p in r):
                self.clipped = True
        self._families[s] = regs
        return regs

    def maximal(self, s):
        """For each center, its extended region at the largest active step <= s."""
        best = {}
        for ell in range(1, s + 1):
            for c, r in self.extended(ell).items():
                best[c] = (ell, r)
        return best


def extended_regions(s, x, intervals, freq, ambient):
    """Step-s extended regions as a RegionFamily; raises RegionOverlap."""
    if s < 1:
        raise ValueError("s must be >= 1")
    b = RegionBuilder(x, intervals, freq, ambient)
    regs = b.extended(s)
    return RegionFamily(s, "extended", dict(regs), b.clipped)


def basic_regions(s, x, intervals, freq, ambient):
    b = RegionBuilder(x, intervals, freq, ambient)
    regs = b.basic(s)
    clipped = any(p not in ambient for r in regs.values() for p in r)
    return RegionFamily(s, "basic", regs, clipped)


def union_region(n, s, intervals, freq, ambient, grid_size=64):
    """Union of the step-s extended region at n over a phase grid of I_s."""
    n = tuple(int(v) for v in np.atleast_1d(n))
    out = set()
    for x in intervals[s].grid(grid_size):
        out |= RegionBuilder(x, intervals, freq, ambient).extended(s).get(n, frozenset())
    return frozenset(out)


def compose_supports(family_a, family_b):
    """Support components of a product of operators supported on two families.

    Sets from either family are linked when they intersect; each connected
    component contributes the union of its sets.
    """
    sets = [frozenset(a) for a in family_a if a] + [frozenset(b) for b in family_b if b]
    parent = list(range(len(sets)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, st in enumerate(sets):
        for p in st:
            j = owner.setdefault(p, i)
            if j != i:
                parent[find(i)] = find(j)
    groups = {}
    for i, st in enumerate(sets):
        groups.setdefault(find(i), set()).update(st)
    return sorted((frozenset(g) for g in groups.values()), key=lambda g: sorted(g))


def ball_distance(n, s, m, ell):
    """l1 distance between balls of radius s at n and radius ell at m."""
    gap = int(np.abs(np.asarray(n) - np.asarray(m)).sum())
    return max(gap - s - ell, 0)


@dataclass
class SeparationReport:
    ok: bool
    collisions: int
    violations: list


def separation_scan(freq, beta, mu, n_max, s_max):
    """Check the separation of basic regions over every phase at once.

    Basic regions at (n, s) and (m, l) can both be non-empty for a common
    phase exactly when |(n - m).omega| < beta_s(s) + beta_s(l), so the scan
    is over pairs of centres rather than over a phase grid.
    """
    rng = range(-2 * n_max, 2 * n_max + 1)
    keys = np.array([k for k in itertools.product(rng, repeat=freq.dim) if any(k)])
    sep = circle_dist(keys @ freq.vector)
    norm = np.abs(keys).sum(axis=1)
    radii = [beta_s(beta, s) for s in range(s_max + 1)]
    collisions = 0
    violations = []
    for s in range(1, s_max + 1):
        for ell in range(1, s + 1):
            both = sep < radii[s] + radii[ell]
            near = np.maximum(norm - s - ell, 0) <= 10 * s
            hit = np.nonzero(both & near)[0]
            collisions += int(hit.size)
            need = math.log(1 / beta) * ell ** (1 + mu / 2)
            if hit.size and s < need:
                for k in hit:
                    violations.append({"s": s, "l": ell, "diff": keys[k].tolist(),
                                       "distance": float(sep[k]), "needed_s": need})
    return SeparationReport(not violations, collisions, violations)
