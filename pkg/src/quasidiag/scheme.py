"""Iterative partial diagonalisation by covariant Jacobi rotations.

At step s + 1, every site n whose phase x + n.omega falls in the interval
I_{s+1} gets a block of two-site rotations that eliminates the entries
H(n, n + m), 0 < |m| <= s + 1.  The rotations of one block are all computed
from the current operator and then multiplied in lexicographic order of m.
The accumulated orthogonal matrix W satisfies H^(s) = W^T H W, so the
approximate eigenvector at the origin is the column W e_0.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DominanceViolation, InvalidAbsorptionQuery, NoConvergence, ToleranceBreach
from .model import Frequency, PotentialSpec, assemble_operator, l1_sphere_points
from .regions import (RegionBuilder, ball, compose_supports, level, make_intervals)


@dataclass(frozen=True)
class SchemeParams:
    potential: PotentialSpec
    freq: Frequency
    eps: float
    delta: float
    beta: float
    M: float
    s_max: int = 5
    dominance_margin: float = 1e-3
    residual_target: float = 1e-12
    strict_conv3: bool = False
    order_grid: int = 64

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.M > 1:
            raise ValueError("M must exceed 1")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")

    @property
    def alpha(self):
        return self.potential.alpha

    @property
    def rho(self):
        return self.freq.rho

    @property
    def mu(self):
        return self.freq.mu

    @property
    def gamma(self):
        return (1 + 2 / self.mu) * self.alpha


# magnitude bookkeeping -------------------------------------------------------

def _k_over_log(k):
    # k / log(k + 1) tends to 1 as k -> 0
    return 1.0 if k == 0 else k / math.log(k + 1)


def log_magn(k, M, beta, gamma):
    """Natural log of M^(k - 1/2) beta^(12 gamma k / log(k + 1))."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return (k - 0.5) * math.log(M) + 12 * gamma * _k_over_log(k) * math.log(beta)


def magn(k, M, beta, gamma):
    """The magnitude function; may under- or overflow, use log_magn for checks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp(log_magn(k, M, beta, gamma)))


def submult_exponent(k1, k2):
    """m(k1, k2) with magn(k1) magn(k2) = M^(-1/2) beta^(12 gamma m) magn(k1 + k2)."""
    return _k_over_log(k1) + _k_over_log(k2) - _k_over_log(k1 + k2)


@dataclass
class AbsorptionResult:
    holds: bool
    lhs_log: float
    rhs_log: float

    @property
    def margin(self):
        return self.rhs_log - self.lhs_log


def absorption_check(k1, k2, n, freq, params):
    """Small-denominator absorption: magn(k1) magn(k2) / |n.omega|^(2 alpha) against
    M^(-1/2) beta^(gamma k1 / log^2(k1 + 1)) magn(k1 + k2), compared in log space."""
    n = np.atleast_1d(np.asarray(n, dtype=int))
    norm = int(np.abs(n).sum())
    if norm == 0 or norm != k2:
        raise InvalidAbsorptionQuery(f"|n| = {norm} must equal k2 = {k2} and be non-zero")
    lev = level(n, freq, params.beta)
    if not (k2 >= k1 >= max(lev, 1)):
        raise InvalidAbsorptionQuery(f"need k2 >= k1 >= level(n) = {lev} and k1 >= 1, got k1 = {k1}")
    M, beta, gamma, alpha = params.M, params.beta, params.gamma, params.alpha
    dist = abs(float(n @ freq.vector) - round(float(n @ freq.vector)))
    lhs = log_magn(k1, M, beta, gamma) + log_magn(k2, M, beta, gamma) - 2 * alpha * math.log(dist)
    rhs = (-0.5 * math.log(M) + gamma * k1 * math.log(beta) / math.log(k1 + 1) ** 2
           + log_magn(k1 + k2, M, beta, gamma))
    return AbsorptionResult(lhs <= rhs, lhs, rhs)


def worst_level_log(k1, k2, eps, params):
    """Log of eps^(k1+k2) M^(-1/2) beta^(gamma k1 / log^2(k1+1)) magn(k1+k2)."""
    M, beta, gamma = params.M, params.beta, params.gamma
    return ((k1 + k2) * math.log(eps) - 0.5 * math.log(M)
            + gamma * k1 * math.log(beta) / math.log(k1 + 1) ** 2
            + log_magn(k1 + k2, M, beta, gamma))


# two-site rotations ----------------------------------------------------------

def rotation_angle(a, b, h, margin=1e-3):
    """Angle of the exact rotation diagonalising [[a, h], [h, b]] on the branch
    that is the identity at h = 0; raises DominanceViolation outside the
    dominance regime |h| <= (1 - margin) |b - a|."""
    if h == 0 or np.isneginf(a) or np.isneginf(b):
        return 0.0
    gap = b - a
    if not abs(h) <= (1 - margin) * abs(gap) or gap == 0:
        raise DominanceViolation(a, b, h)
    return 0.5 * math.atan(2 * h / gap)


def jacobi_rotation_2x2(a, b, h, margin=1e-3):
    """Orthogonal U = [[c, s], [-s, c]] with U^T [[a, h], [h, b]] U diagonal."""
    t = rotation_angle(a, b, h, margin)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class Rotation:
    i: int
    j: int
    c: float
    s: float


def apply_rotation(A, W, rot):
    """A <- G^T A G and W <- W G for the embedded rotation G, in place."""
    i, j, c, s = rot.i, rot.j, rot.c, rot.s
    ci, cj = A[:, i].copy(), A[:, j].copy()
    A[:, i] = c * ci - s * cj
    A[:, j] = s * ci + c * cj
    ri, rj = A[i, :].copy(), A[j, :].copy()
    A[i, :] = c * ri - s * rj
    A[j, :] = s * ri + c * rj
    off = 0.5 * (A[i, j] + A[j, i])
    A[i, j] = A[j, i] = off
    if W is not None:
        wi, wj = W[:, i].copy(), W[:, j].copy()
        W[:, i] = c * wi - s * wj
        W[:, j] = s * wi + c * wj


def rotations_matrix(size, rotations):
    U = np.eye(size)
    for r in rotations:
        ui, uj = U[:, r.i].copy(), U[:, r.j].copy()
        U[:, r.i] = r.c * ui - r.s * uj
        U[:, r.j] = r.s * ui + r.c * uj
    return U


def block_rotations(A, box, center, s1, margin, phase=None):
    """Rotations eliminating A(center, center + m), 0 < |m| <= s1, in lexicographic
    order of m, all read from the same operator A."""
    c = np.asarray(center, dtype=int)
    i = box.position(c)
    out = []
    for m in l1_sphere_points(box.dim, s1):
        q = tuple((c + m).tolist())
        j = box.index.get(q)
        if j is None:
            continue
        try:
            t = rotation_angle(A[i, i], A[j, j], A[i, j], margin)
        except DominanceViolation as err:
            raise DominanceViolation(err.a, err.b, err.h, tuple(m.tolist()), phase) from None
        if t != 0.0:
            out.append(Rotation(i, j, math.cos(t), math.sin(t)))
    return out


# scheme state ----------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    centers: list
    rotations: int
    u_norm: float
    conv3_bound: float
    conv3_ok: bool
    min_dominance_margin: float
    row0_residual: float
    diag0: float


@dataclass
class SchemeState:
    s: int
    x: float
    x0: float
    intervals: list
    box: object
    H0: object
    A: np.ndarray
    W: np.ndarray
    supports: list = field(default_factory=list)
    history: list = field(default_factory=list)
    diag0_history: list = field(default_factory=list)

    @property
    def origin(self):
        return self.box.position(np.zeros(self.box.dim, dtype=int))

    def row0_residual(self):
        i = self.origin
        if np.isneginf(self.A[i, i]):
            return 0.0
        row = self.A[i].copy()
        row[i] = 0.0
        row[np.isneginf(np.diag(self.A))] = 0.0
        # the 2-norm bounds both the largest entry and |H psi - E psi|
        return float(np.linalg.norm(row))


def initial_state(params, x0, ambient, x=None):
    x = x0 if x is None else x
    op = assemble_operator(params.potential, params.eps, params.freq, x, ambient)
    A = op.off.copy()
    A[np.diag_indices_from(A)] = op.diag
    st = SchemeState(0, float(x), float(x0), make_intervals(x0, params.beta, params.s_max + 1),
                     ambient, op, A, np.eye(len(ambient)))
    st.diag0_history.append(float(A[st.origin, st.origin]))
    return st


def _copy(state):
    return replace(state, A=state.A.copy(), W=state.W.copy(), supports=list(state.supports),
                   history=list(state.history), diag0_history=list(state.diag0_history))


def build_U0(state, params, s1=None):
    """Block at the origin for step s1 (default s + 1) as a dense matrix on the box."""
    s1 = state.s + 1 if s1 is None else s1
    rots = block_rotations(state.A, state.box, np.zeros(state.box.dim, int), s1,
                           params.dominance_margin, state.x)
    return rotations_matrix(len(state.box), rots)


def extend_covariant(state, params, s1=None):
    """Rotations for every active site at step s1 and the regions they act on.

    The block at an active site n is the origin block of the operator at
    phase x + n.omega, read off the current operator around n.
    """
    s1 = state.s + 1 if s1 is None else s1
    builder = RegionBuilder(state.x, state.intervals, params.freq, state.box)
    regions = builder.basic(s1)
    rots = []
    for center in sorted(regions):
        phase = state.x + float(np.asarray(center) @ params.freq.vector)
        rots.extend(block_rotations(state.A, state.box, center, s1,
                                    params.dominance_margin, phase))
    return rots, regions


def step(state, params):
    """One step: conjugate by U^(s+1) and accumulate it into W."""
    s1 = state.s + 1
    if s1 >= len(state.intervals):
        state = replace(state, intervals=make_intervals(state.x0, params.beta, s1 + 1))
    rots, regions = extend_covariant(state, params, s1)
    new = _copy(state)
    margins = []
    for r in rots:
        # dominance is judged on the operator the rotations were read from
        gap = abs(state.A[r.j, r.j] - state.A[r.i, r.i])
        margins.append(1 - abs(state.A[r.i, r.j]) / gap)
        apply_rotation(new.A, new.W, r)
    touched = sorted({r.i for r in rots} | {r.j for r in rots})
    if touched:
        U = rotations_matrix(len(state.box), rots)[np.ix_(touched, touched)]
        u_norm = float(np.linalg.norm(U - np.eye(len(touched)), 2))
    else:
        u_norm = 0.0
    bound = params.eps ** (s1 * (1 - params.delta / 10)) if params.eps > 0 else 0.0
    ok = u_norm <= bound
    if not ok and params.strict_conv3:
        raise ToleranceBreach(f"|U^({s1}) - 1| = {u_norm:.3g} exceeds {bound:.3g}")
    sites = [frozenset(r) for _, r in sorted(regions.items())]
    new.supports = compose_supports(state.supports, sites)
    new.s = s1
    new.diag0_history.append(float(new.A[new.origin, new.origin]))
    new.history.append(StepRecord(s1, sorted(regions), len(rots), u_norm, bound, ok,
                                  min(margins) if margins else 1.0, new.row0_residual(),
                                  new.diag0_history[-1]))
    return new


# running the scheme ------------------------------------------------------------

@dataclass
class SchemeResult:
    E: float
    psi: np.ndarray
    state: SchemeState
    residual: float
    stop_reason: str
    diagnostics: dict


def original_residual(state, E, psi):
    """|H psi - E psi| against the untransformed operator, -inf site deflated."""
    if np.isneginf(E):
        return 0.0
    op = state.H0
    keep = np.isfinite(op.diag)
    H = op.off[np.ix_(keep, keep)] + np.diag(op.diag[keep])
    v = psi[keep]
    return float(np.linalg.norm(H @ v - E * v))


def check_box(params, ambient):
    need = 3 * params.s_max + 2
    if not all(p in ambient for p in ball(np.zeros(ambient.dim, int), need)):
        raise ValueError(f"ambient box must contain the l1 ball of radius {need} around 0")


def run_scheme(params, x0, ambient, x=None, stop_at_target=True, require_residual=True):
    """Iterate the scheme at phase x (default x0) with intervals centred at x0."""
    check_box(params, ambient)
    state = initial_state(params, x0, ambient, x)
    reason = "s_max"
    if stop_at_target and state.row0_residual() < params.residual_target:
        reason = "residual"
    else:
        for _ in range(params.s_max):
            state = step(state, params)
            if stop_at_target and state.row0_residual() < params.residual_target:
                reason = "residual"
                break
    i = state.origin
    E = float(state.A[i, i])
    psi = state.W[:, i].copy()
    psi /= np.linalg.norm(psi)
    res = original_residual(state, E, psi)
    if require_residual and res > params.residual_target:
        raise NoConvergence(f"residual {res:.3g} above target {params.residual_target:.3g} "
                            f"after {state.s} steps")
    return SchemeResult(E, psi, state, res, reason, decay_report(params, state, psi))


def decay_report(params, state, psi):
    eps, delta = params.eps, params.delta
    i = state.origin
    norms = np.abs(state.box.sites).sum(axis=1)
    head = abs(psi[i] - 1.0)
    out = {"psi0_deviation": float(head),
           "psi0_ok": bool(eps == 0 or head < eps ** (1 - delta)), "decay_ok": True,
           "worst_decay_ratio": 0.0}
    if eps > 0:
        mask = norms > 0
        with np.errstate(divide="ignore"):
            logratio = np.log(np.abs(psi[mask])) - (1 - delta) * norms[mask] * math.log(eps)
        worst = float(np.max(logratio)) if logratio.size else -np.inf
        out["worst_decay_ratio"] = worst
        out["decay_ok"] = bool(worst <= 0)
    return out


def eigen_family(params, x0, ambient, sites):
    """Eigenpairs of the box operator at x0 labelled by site, via translates."""
    out = {}
    for n in sites:
        n = np.atleast_1d(np.asarray(n, dtype=int))
        # at phase x0 + n.omega the box shifted by -n carries the same operator,
        # with the ambient site n sitting at the origin
        shifted = ambient.translate(-n)
        res = run_scheme(params, x0 + float(n @ params.freq.vector), shifted)
        psi = np.zeros(len(ambient))
        for k, p in enumerate(shifted.sites):
            psi[ambient.position(p + n)] = res.psi[k]
        out[tuple(n.tolist())] = (res.E, psi)
    return out


@dataclass
class EigenvalueTable:
    x: np.ndarray
    E: np.ndarray
    violations: int
    worst_slope: float
    lipschitz_ok: bool


def eigenvalue_function(params, phase_grid, ambient, eta=0.05, tol=1e-10, runner=map):
    """E(x) = f^(s)(x, x) on a sorted phase grid, with monotonicity checks.

    ``worst_slope`` is the smallest difference quotient over all grid pairs;
    for alpha = 1 it must stay above 1 - eta.
    """
    xs = np.sort(np.asarray(phase_grid, dtype=float))
    E = np.array(list(runner(_energy_at, [(params, float(x), ambient) for x in xs])))
    viol = int(np.count_nonzero(np.diff(E) < -tol))
    fin = np.isfinite(E)
    ex, xx = E[fin], xs[fin]
    i, j = np.triu_indices(len(ex), k=1)
    slopes = (ex[j] - ex[i]) / (xx[j] - xx[i]) if len(i) else np.array([np.inf])
    worst = float(slopes.min())
    lip = bool(params.alpha != 1 or worst >= 1 - eta)
    return EigenvalueTable(xs, E, viol, worst, lip)


def _energy_at(args):
    params, x, ambient = args
    return run_scheme(params, x, ambient).E


# monitors ------------------------------------------------------------------------

def order_bound_log(dist, r, s, eps, params):
    """Log of the order-r bound for an entry at lattice distance `dist` after s steps."""
    if dist <= s:
        coef = math.log((s + 1) / (s + 2))
    else:
        coef = -math.log(dist - s)
    return coef + log_magn(r, params.M, params.beta, params.gamma) + r * math.log(eps)


@dataclass
class OrderReport:
    ind1_worst: float
    ind2_worst: float
    ind1_failures: int
    ind2_failures: int
    checked: int
    beyond_range: int

    @property
    def ok(self):
        return self.ind1_failures == 0 and self.ind2_failures == 0


def declared_orders(state, params):
    """Declared order per entry: |m - n|, raised to k + 1 when a phase of m or n lies in I_k."""
    sites = state.box.sites
    ph = state.x + sites @ params.freq.vector
    deepest = np.zeros(len(sites), dtype=int)
    for k in range(1, state.s + 1):
        deepest[state.intervals[k].contains(ph)] = k
    dist = np.abs(sites[:, None, :] - sites[None, :, :]).sum(axis=2)
    ind2 = np.maximum(deepest[:, None], deepest[None, :]) + 1
    ind2[np.maximum(deepest[:, None], deepest[None, :]) == 0] = 0
    return dist, ind2


def check_orders(state, params):
    """Worst log-margins of |H(m, n)| against the order bounds (report only)."""
    s, eps = state.s, params.eps
    dist, ind2 = declared_orders(state, params)
    A = state.A
    finite = np.isfinite(np.diag(A))
    iu, ju = np.triu_indices(len(A), k=1)
    keep = finite[iu] & finite[ju]
    iu, ju = iu[keep], ju[keep]
    mags = np.abs(A[iu, ju])
    w1 = w2 = np.inf
    f1 = f2 = 0
    beyond = 0
    limit = s * (1 + params.delta / 10)
    for a, b, v in zip(iu, ju, mags):
        if v == 0:
            continue
        dd = int(dist[a, b])
        if dd > limit:
            beyond += 1
        if eps == 0:
            w1, f1 = -np.inf, f1 + 1
            continue
        m1 = order_bound_log(dd, dd, s, eps, params) - math.log(v)
        w1 = min(w1, m1)
        f1 += m1 < 0
        r2 = int(ind2[a, b])
        if r2 > dd:
            m2 = order_bound_log(dd, r2, s, eps, params) - math.log(v)
            w2 = min(w2, m2)
            f2 += m2 < 0
    return OrderReport(float(w1), float(w2), int(f1), int(f2), int(len(mags)), beyond)


@dataclass
class DriftReport:
    ok: bool
    drifts: list
    bounds_log: list


def check_diag_drift(state, params):
    """|f^(s) - f^(s-1)| <= eps^(2s-1) magn(2s-1) along the recorded history."""
    h = state.diag0_history
    drifts, bounds, ok = [], [], True
    for s in range(1, len(h)):
        d = abs(h[s] - h[s - 1]) if np.isfinite(h[s]) else 0.0
        b = ((2 * s - 1) * math.log(params.eps) + log_magn(2 * s - 1, params.M, params.beta,
                                                              params.gamma)
             if params.eps > 0 else -np.inf)
        drifts.append(d)
        bounds.append(b)
        if d > 0 and math.log(d) > b:
            ok = False
    return DriftReport(ok, drifts, bounds)


def diagonal_trace(params, x, x0, ambient, steps):
    """f^(0..steps)(x, x0): diagonal entry at the origin after each step."""
    p = params if params.s_max >= steps else replace(params, s_max=steps)
    st = initial_state(p, x0, ambient, x)
    for _ in range(steps):
        st = step(st, p)
    return st


@dataclass
class MonotoneReport:
    ok: bool
    pairs: int
    worst_margin: float
    denominator_ok: bool
    worst_denominator: float


def check_approx_monotone(params, x0, ambient, s, phase_pairs):
    """Approximate monotonicity of f^(s)(., x0) on the given (x, y, k) triples,
    plus the lower bound on the normalised denominators at the pair phases."""
    alpha, eps, d = params.alpha, params.eps, ambient.dim
    cache = {}

    def state_at(x):
        key = float(x)
        if key not in cache:
            cache[key] = diagonal_trace(params, key, x0, ambient, s)
        return cache[key]

    worst = np.inf
    for x, y, k in phase_pairs:
        fx = state_at(x).diag0_history[s]
        fy = state_at(y).diag0_history[s]
        u, v = x - math.floor(x), y - math.floor(y)
        if u > v:
            u, v, fx, fy = v, u, fy, fx
        if u == v:
            continue
        slack = 0.0
        if eps > 0:
            slack = 4 ** d * (1 - 1 / (s - k + 2)) * math.exp(
                k * math.log(eps) + log_magn(k, params.M, params.beta, params.gamma))
        margin = (fy - fx) - (2 ** (1 - alpha) * (v - u) ** alpha - slack)
        worst = min(worst, margin)
    dworst = np.inf
    iv = make_intervals(x0, params.beta, s)[s]
    for key, st in cache.items():
        if not iv.contains(key):
            continue
        dworst = min(dworst, denominator_ratio(st, params, s, iv))
    return MonotoneReport(bool(worst >= -1e-12), len(phase_pairs), float(worst),
                          bool(dworst >= 2 ** (-alpha)), float(dworst))


def denominator_ratio(state, params, s, interval):
    """Smallest normalised difference of diagonal entries between the origin and
    sites 0 < |n| <= 10 s that are far from resonant."""
    alpha = params.alpha
    x = state.x
    i = state.origin
    f0 = state.A[i, i]
    best = np.inf
    for k, n in enumerate(state.box.sites):
        norm = int(np.abs(n).sum())
        if norm == 0 or norm > 10 * s:
            continue
        shift = float(n @ params.freq.vector)
        if abs(shift - round(shift)) < 10 * interval.length():
            continue
        fn = state.A[k, k]
        u = x - math.floor(x)
        w = (x + shift) - math.floor(x + shift)
        if not (np.isfinite(f0) and np.isfinite(fn)) or u == w:
            continue
        ratio = (f0 - fn) / (math.copysign(1.0, u - w) * abs(u - w) ** alpha)
        best = min(best, ratio)
    return best
