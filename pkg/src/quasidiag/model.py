"""Sampling functions, frequencies, lattice boxes and finite-volume operators."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import MonotonicityViolation, ResonantFrequency

KINDS = ("sawtooth-power", "maryland-tan", "table")


def frac(x):
    """Fractional part in [0, 1); values that round up to 1.0 are sent to 0."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x)
    r = np.where(r >= 1.0, 0.0, r)
    return r if r.ndim else float(r)


def circle_dist(x):
    """Distance to the nearest integer."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x - np.round(x))
    return r if r.ndim else float(r)


@dataclass(frozen=True)
class PotentialSpec:
    """A 1-periodic monotone sampling function.

    ``sawtooth-power`` is {x}**power.  ``maryland-tan`` is tan(pi (x - 1/2))
    with the value -inf at x = 0.  ``table`` is right-continuous: on
    [x_j, x_{j+1}) it equals f_j + slope * (x - x_j), so a jump between
    consecutive rows is expressed without repeating an abscissa.
    """

    kind: str
    alpha: float = 1.0
    power: float = 1.0
    table_x: tuple = ()
    table_f: tuple = ()
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.kind == "table":
            _validate_table(self.table_x, self.table_f, self.slope)

    def __call__(self, x):
        return sample_potential(self, x)

    @property
    def allows_infinite(self):
        return self.kind == "maryland-tan"

    def value_at_zero(self):
        return float(sample_potential(self, 0.0))

    def left_limit_at_one(self):
        """f(1 - 0), the limit from the left at the end of the period."""
        if self.kind == "sawtooth-power":
            return 1.0
        if self.kind == "maryland-tan":
            return np.inf
        return float(self.table_f[-1] + self.slope * (1.0 - self.table_x[-1]))


def _validate_table(xs, fs, slope):
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 1:
        raise ValueError("table needs matching non-empty x and f columns")
    if xs[0] < 0 or xs[-1] >= 1 or np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing in [0, 1)")
    if slope < 0:
        raise MonotonicityViolation(f"negative table slope {slope}")
    if not np.all(np.isfinite(fs)):
        raise MonotonicityViolation("table values must be finite")
    # value reached just before the next breakpoint must not exceed the next value
    reach = fs[:-1] + slope * np.diff(xs)
    bad = np.nonzero(fs[1:] < reach)[0]
    if bad.size:
        j = int(bad[0])
        raise MonotonicityViolation(
            f"table decreases between x={xs[j]:.17g} and x={xs[j + 1]:.17g}")


def sample_potential(spec, x):
    """Evaluate f({x}); accepts scalars or arrays."""
    y = np.asarray(frac(x), dtype=float)
    if spec.kind == "sawtooth-power":
        out = y ** spec.power
    elif spec.kind == "maryland-tan":
        with np.errstate(divide="ignore"):
            out = np.tan(np.pi * (y - 0.5))
        out = np.where(y == 0.0, -np.inf, out)
    else:
        xs = np.asarray(spec.table_x, dtype=float)
        fs = np.asarray(spec.table_f, dtype=float)
        _validate_table(xs, fs, spec.slope)
        j = np.searchsorted(xs, y, side="right") - 1
        jj = np.maximum(j, 0)
        inside = fs[jj] + spec.slope * (y - xs[jj])
        # left of the first breakpoint the first piece is continued backwards
        out = np.where(j < 0, fs[0] - spec.slope * (xs[0] - y), inside)
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


@dataclass
class HolderReport:
    ok: bool
    worst_pair: tuple
    worst_margin: float


def check_holder_monotone(spec, alpha, grid_size, tol=1e-12):
    """Check f(y) - f(x) >= (y - x)**alpha over all pairs of a uniform grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    grid = np.arange(grid_size) / grid_size
    vals = sample_potential(spec, grid)
    i, j = np.triu_indices(grid_size, k=1)
    with np.errstate(invalid="ignore"):
        margin = vals[j] - vals[i] - (grid[j] - grid[i]) ** alpha
    margin = np.where(np.isnan(margin), np.inf, margin)
    k = int(np.argmin(margin))
    worst = float(margin[k])
    return HolderReport(worst >= -tol, (float(grid[i[k]]), float(grid[j[k]])), worst)


@dataclass(frozen=True)
class Frequency:
    omega: tuple
    rho: float
    mu: float

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        object.__setattr__(self, "omega", om)
        if self.rho <= 0 or self.mu <= 0:
            raise ValueError("rho and mu must be positive")

    @property
    def dim(self):
        return len(self.omega)

    @property
    def vector(self):
        return np.asarray(self.omega, dtype=float)


def l1_sphere_points(d, N):
    """All integer points with 0 < |n|_1 <= N, lexicographically ordered."""
    pts = [p for p in itertools.product(range(-N, N + 1), repeat=d)
           if 0 < sum(abs(c) for c in p) <= N]
    return np.array(pts, dtype=int).reshape(-1, d)


def resonance_tolerance(norm):
    return 64 * np.finfo(float).eps * np.maximum(norm, 1)


@dataclass
class DiophantineReport:
    ok: bool
    worst_n: tuple
    worst_margin: float
    checked: int


def check_diophantine(freq, N):
    """Scan |n.omega| >= exp(-rho |n|^(1/(1+mu))) over 0 < |n| <= N.

    ``worst_margin`` is the smallest log-ratio between the left and right
    sides; the check passes when it is non-negative.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    pts = l1_sphere_points(freq.dim, N)
    norms = np.abs(pts).sum(axis=1)
    dist = circle_dist(pts @ freq.vector)
    hit = np.nonzero(dist <= resonance_tolerance(norms))[0]
    if hit.size:
        k = hit[np.argmin(norms[hit])]
        raise ResonantFrequency(pts[k], float(dist[k]))
    margin = np.log(dist) + freq.rho * norms ** (1.0 / (1.0 + freq.mu))
    k = int(np.argmin(margin))
    return DiophantineReport(bool(margin[k] >= 0), tuple(int(v) for v in pts[k]),
                             float(margin[k]), len(pts))


@dataclass(frozen=True, eq=False)
class LatticeBox:
    """Finite set of lattice sites, kept in lexicographic order."""

    sites: np.ndarray
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=int)
        if s.ndim == 1:
            s = s[:, None]
        order = np.lexsort(s.T[::-1])
        s = s[order]
        if len(s) > 1 and np.any(np.all(s[1:] == s[:-1], axis=1)):
            raise ValueError("duplicate sites")
        s.setflags(write=False)
        object.__setattr__(self, "sites", s)
        object.__setattr__(self, "index", {tuple(p): i for i, p in enumerate(s.tolist())})

    @classmethod
    def cube(cls, d, radius, center=None):
        c = np.zeros(d, dtype=int) if center is None else np.asarray(center, dtype=int)
        rng = range(-radius, radius + 1)
        return cls(np.array(list(itertools.product(rng, repeat=d))) + c)

    @classmethod
    def interval(cls, lo, hi):
        return cls(np.arange(lo, hi + 1)[:, None])

    @classmethod
    def ball(cls, d, radius, center=None):
        pts = l1_sphere_points(d, radius) if radius > 0 else np.zeros((0, d), int)
        pts = np.vstack([np.zeros((1, d), int), pts])
        if center is not None:
            pts = pts + np.asarray(center, dtype=int)
        return cls(pts)

    @property
    def dim(self):
        return self.sites.shape[1]

    def __len__(self):
        return len(self.sites)

    def __contains__(self, p):
        return tuple(int(v) for v in np.atleast_1d(p)) in self.index

    def translate(self, n):
        return LatticeBox(self.sites + np.asarray(n, dtype=int))

    def position(self, p):
        return self.index[tuple(int(v) for v in np.atleast_1d(p))]

    def same_as(self, other):
        return self.sites.shape == other.sites.shape and np.array_equal(self.sites, other.sites)


@dataclass(frozen=True, eq=False)
class SymOperator:
    """Real symmetric operator on a lattice box.

    The diagonal may contain -inf.  Off-diagonal entries are held in a dense
    symmetric array with a zero diagonal so that structural zeros stay exact.
    """

    box: LatticeBox
    diag: np.ndarray
    off: np.ndarray
    eps: float = 0.0
    x: float = 0.0
    omega: tuple = ()

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).copy()
        o = np.asarray(self.off, dtype=float).copy()
        if o.shape != (len(d), len(d)):
            raise ValueError("off-diagonal block has the wrong shape")
        if not np.array_equal(o, o.T):
            raise ValueError("operator is not symmetric")
        if np.any(np.isposinf(d)) or np.count_nonzero(np.isneginf(d)) > 1:
            raise ValueError("at most one diagonal entry may be -inf")
        d.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", o)

    def __len__(self):
        return len(self.diag)

    @property
    def infinite_site(self):
        k = np.nonzero(np.isneginf(self.diag))[0]
        return int(k[0]) if k.size else None

    def dense(self):
        """Full matrix; only valid when every diagonal entry is finite."""
        return self.off + np.diag(self.diag)

    def entry(self, m, n):
        i, j = self.box.position(m), self.box.position(n)
        return self.diag[i] if i == j else self.off[i, j]

    def norm(self):
        """Max-row-sum norm over the finite part."""
        keep = np.isfinite(self.diag)
        a = np.abs(self.off[np.ix_(keep, keep)]).sum(axis=1) + np.abs(self.diag[keep])
        return float(a.max()) if a.size else 0.0


def laplacian_pattern(box):
    """Adjacency matrix of nearest neighbours inside the box."""
    n = len(box)
    adj = np.zeros((n, n))
    sites = box.sites
    # sites are sorted lexicographically, so a neighbour lookup is a row search
    keys = np.ascontiguousarray(sites).view([("", sites.dtype)] * box.dim).ravel()
    for axis in range(box.dim):
        q = sites.copy()
        q[:, axis] += 1
        qk = np.ascontiguousarray(q).view([("", sites.dtype)] * box.dim).ravel()
        j = np.searchsorted(keys, qk)
        jc = np.minimum(j, n - 1)
        hit = (j < n) & np.all(sites[jc] == q, axis=1)
        i = np.nonzero(hit)[0]
        adj[i, jc[hit]] = adj[jc[hit], i] = 1.0
    return adj


def phases(freq, x, box):
    return frac(x + box.sites @ freq.vector)


def assemble_operator(spec, eps, freq, x, box):
    """eps * Laplacian + f(x + omega.n) restricted to the box."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if box.dim != freq.dim:
        raise ValueError("box and frequency dimensions differ")
    diag = sample_potential(spec, phases(freq, x, box))
    return SymOperator(box, np.atleast_1d(diag), eps * laplacian_pattern(box),
                       eps=float(eps), x=float(x), omega=freq.omega)


def shift_phase(op, n):
    """Operator at phase x + n.omega on the box translated by -n."""
    n = np.asarray(n, dtype=int).reshape(-1)
    x_new = op.x + float(n @ np.asarray(op.omega))
    return SymOperator(op.box.translate(-n), op.diag, op.off, eps=op.eps,
                       x=x_new, omega=op.omega)
