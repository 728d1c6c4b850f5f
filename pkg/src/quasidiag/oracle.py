"""Brute-force ground truth: dense eigensolver, branch labelling, IDS, gaps, rank-one sweeps.

Nothing here imports the rotation scheme; the two routes are compared only
in tests and in the command-line runner.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import CardinalityMismatch, DomainConditionViolated, NoConvergence
from .model import (LatticeBox, SymOperator, assemble_operator, frac, phases,
                    sample_potential)


# dense symmetric eigensolver ------------------------------------------------------

def _round_robin(n):
    """Pairings covering every (p, q) once per sweep, n/2 disjoint pairs per round."""
    m = n + (n % 2)
    ring = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(ring[k], ring[m - 1 - k]) for k in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        ring = [ring[0]] + [ring[-1]] + ring[1:-1]
    return rounds


def _jacobi(A, tol, max_sweeps):
    """Cyclic Jacobi sweeps with threshold pivoting.

    Small matrices use the row-by-row cyclic order; larger ones use the
    round-robin order, where each round rotates disjoint pairs at once.
    """
    A = np.array(A, dtype=float)
    n = len(A)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0:
        return np.diag(A).copy(), V
    if n <= 16:
        return _jacobi_rowwise(A, V, scale, tol, max_sweeps)
    rounds = _round_robin(n)
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            return np.diag(A).copy(), V
        # early sweeps skip small pivots, later sweeps rotate everything non-zero
        thresh = 0.2 * off / n ** 2 if sweep < 3 else 0.0
        for P, Q in rounds:
            apq = A[P, Q]
            app, aqq = A[P, P], A[Q, Q]
            if sweep > 3:
                g = 100.0 * np.abs(apq)
                tiny = (np.abs(app) + g == np.abs(app)) & (np.abs(aqq) + g == np.abs(aqq))
                A[P[tiny], Q[tiny]] = A[Q[tiny], P[tiny]] = 0.0
                apq = np.where(tiny, 0.0, apq)
            act = (apq != 0.0) & (np.abs(apq) > thresh)
            if not act.any():
                continue
            P, Q, apq, app, aqq = P[act], Q[act], apq[act], app[act], aqq[act]
            theta = (aqq - app) / (2.0 * apq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * ap - s * aq
            A[:, Q] = s * ap + c * aq
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            A[P, Q] = A[Q, P] = 0.0
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
    raise NoConvergence(f"cyclic Jacobi did not converge in {max_sweeps} sweeps")


def _jacobi_rowwise(A, V, scale, tol, max_sweeps):
    n = len(A)
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            return np.diag(A).copy(), V
        thresh = 0.2 * off / n ** 2 if sweep < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0 or abs(apq) <= thresh:
                    continue
                app, aqq = A[p, p], A[q, q]
                g = 100.0 * abs(apq)
                if sweep > 3 and abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    A[p, q] = A[q, p] = 0.0
                    continue
                with np.errstate(over="ignore"):
                    # a subnormal coupling sends theta to inf and t to 0
                    theta = (aqq - app) / (2.0 * apq)
                # hypot avoids overflow of theta^2 for tiny couplings
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise NoConvergence(f"cyclic Jacobi did not converge in {max_sweeps} sweeps")


def _fix_signs(V):
    k = np.argmax(np.abs(V), axis=0)
    sign = np.sign(V[k, np.arange(V.shape[1])])
    sign[sign == 0] = 1
    return V * sign


def dense_eig(A, tol=1e-15, max_sweeps=50):
    """Eigenvalues (ascending) and orthonormal eigenvectors by cyclic Jacobi sweeps.

    ``A`` is a SymOperator or a square array.  A single -inf diagonal entry is
    deflated: its site carries the eigenvalue -inf with a unit eigenvector.
    """
    if isinstance(A, SymOperator):
        diag, off = A.diag, A.off
    else:
        A = np.asarray(A, dtype=float)
        if not np.array_equal(A, A.T):
            raise ValueError("matrix is not symmetric")
        diag = np.diag(A).copy()
        off = A - np.diag(np.where(np.isfinite(diag), diag, 0.0))
        off[np.diag_indices_from(off)] = 0.0
    n = len(diag)
    keep = np.isfinite(diag)
    sub = off[np.ix_(keep, keep)] + np.diag(diag[keep])
    w, v = _jacobi(sub, tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    w, v = w[order], _fix_signs(v[:, order])
    vals = np.full(n, -np.inf)
    vecs = np.zeros((n, n))
    drop = np.nonzero(~keep)[0]
    for col, site in enumerate(drop):
        vecs[site, col] = 1.0
    vals[len(drop):] = w
    vecs[np.ix_(keep, np.arange(len(drop), n))] = v
    return vals, vecs


def lapack_eigvals(op):
    """Eigenvalues only, through LAPACK; used for large spectral sweeps."""
    keep = np.isfinite(op.diag)
    d = op.diag[keep]
    off = op.off[np.ix_(keep, keep)]
    lower = np.diag(off, -1)
    if op.box.dim == 1 and np.count_nonzero(np.triu(off, 2)) == 0:
        w = eigvalsh_tridiagonal(d, lower, lapack_driver="stev") if len(d) > 1 else d.copy()
    else:
        w = np.linalg.eigvalsh(off + np.diag(d))
    return np.concatenate([np.full(int((~keep).sum()), -np.inf), np.sort(w)])


# branch labelling ---------------------------------------------------------------------

@dataclass
class BranchTable:
    box: LatticeBox
    x: float
    energies: np.ndarray
    vectors: np.ndarray
    near_ties: int = 0

    def energy(self, site):
        return float(self.energies[self.box.position(site)])

    def vector(self, site):
        return self.vectors[:, self.box.position(site)]


def label_branches(spec, eps, freq, x, box, tol=1e-15):
    """Pair ascending eigenvalues with sites ordered by their phase {x + n.omega}."""
    op = assemble_operator(spec, eps, freq, x, box)
    vals, vecs = dense_eig(op, tol)
    ph = phases(freq, x, box)
    order = np.argsort(ph, kind="stable")
    energies = np.empty(len(box))
    vectors = np.empty_like(vecs)
    energies[order] = vals
    vectors[:, order] = vecs
    gaps = np.diff(np.sort(ph))
    ties = int(np.count_nonzero(gaps < 1e-12))
    return BranchTable(box, float(x), energies, vectors, ties)


def multiset_distance(a, b):
    """max |a_j - b_j| after sorting both collections."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.shape != b.shape:
        raise CardinalityMismatch(f"{a.size} values against {b.size}")
    if a.size == 0:
        return 0.0
    same = (a == b)
    with np.errstate(invalid="ignore"):
        diff = np.where(same, 0.0, np.abs(a - b))
    return float(np.max(diff))


@dataclass
class BranchDistance:
    distance: float
    bound: float
    tolerance: float
    ok: bool
    domain_size: int


def check_domain(domain, inner, others, freq, interval_length):
    """Domain conditions for comparing a diagonal entry with a box eigenvalue."""
    dom = set(domain)
    if not set(inner) <= dom:
        raise DomainConditionViolated("domain does not contain the central region")
    for reg in others:
        if dom & set(reg):
            raise DomainConditionViolated("domain meets a region centred elsewhere")
    for p in dom:
        if not any(p):
            continue
        dist = abs(float(np.asarray(p) @ freq.vector) - round(float(np.asarray(p) @ freq.vector)))
        if dist < 10 * interval_length:
            raise DomainConditionViolated(f"site {p} is too resonant for the domain")


def branch_distance_check(f_value, spec, eps, freq, x, domain, bound, floor=1e-10):
    """Compare a scheme diagonal entry with the branch E_0 of the operator on `domain`."""
    box = LatticeBox(np.array(sorted(domain)))
    table = label_branches(spec, eps, freq, x, box)
    E0 = table.energy(np.zeros(box.dim, dtype=int))
    dist = abs(f_value - E0) if np.isfinite(f_value) or np.isfinite(E0) else 0.0
    tol = max(bound, floor)
    return BranchDistance(float(dist), float(bound), float(tol), bool(dist <= tol), len(box))


# spectral statistics -------------------------------------------------------------------

def phase_grid(n):
    return (np.arange(n) + 0.5) / n


def centered_box(d, size):
    """Box of `size` sites per axis, as centred on the origin as possible."""
    lo = -(size // 2)
    if d == 1:
        return LatticeBox.interval(lo, lo + size - 1)
    rng = range(lo, lo + size)
    return LatticeBox(np.array(list(itertools.product(rng, repeat=d))))


def spectra(spec, eps, freq, size, n_phases):
    """Eigenvalues of the box operator for each phase of a uniform grid."""
    box = centered_box(freq.dim, size)
    if freq.dim == 1 and size > 1:
        # nearest-neighbour coupling in one dimension is tridiagonal; skip assembly
        off = np.full(size - 1, float(eps))
        out = []
        for x in phase_grid(n_phases):
            d = np.asarray(sample_potential(spec, phases(freq, x, box)), dtype=float)
            keep = np.isfinite(d)
            if keep.all():
                out.append(eigvalsh_tridiagonal(d, off, lapack_driver="stev"))
            else:
                out.append(lapack_eigvals(assemble_operator(spec, eps, freq, x, box)))
        return np.array(out)
    return np.array([lapack_eigvals(assemble_operator(spec, eps, freq, x, box))
                     for x in phase_grid(n_phases)])


@dataclass
class IDSTable:
    energies: np.ndarray
    counts: dict = field(default_factory=dict)


def ids(spec, eps, freq, box_sizes, E_grid, n_phases=None):
    """Phase-averaged fraction of eigenvalues <= E for each box size."""
    sizes = list(box_sizes)
    if sizes != sorted(sizes):
        raise ValueError("box sizes must be increasing")
    E = np.asarray(E_grid, dtype=float)
    out = IDSTable(E)
    for L in sizes:
        P = n_phases or L
        ev = spectra(spec, eps, freq, L, P)
        total = ev.shape[1]
        cnt = np.zeros_like(E)
        for row in ev:
            cnt += np.searchsorted(row, E, side="right")
        out.counts[L] = cnt / (P * total)
    return out


@dataclass
class SpectrumReport:
    eigenvalues: dict
    gaps: list
    candidate_gaps: dict
    box_sizes: list

    def min_spacing(self, size):
        ev = np.sort(self.eigenvalues[size])
        ev = ev[np.isfinite(ev)]
        return float(np.min(np.diff(ev))) if ev.size > 1 else np.inf


def find_gaps(values, min_width):
    ev = np.sort(np.asarray(values, dtype=float).ravel())
    ev = ev[np.isfinite(ev)]
    d = np.diff(ev)
    idx = np.nonzero(d >= min_width)[0]
    return [(float(ev[k]), float(ev[k + 1])) for k in idx]


def _gap(lo, hi):
    return {"left": lo, "right": hi, "width": hi - lo, "center": 0.5 * (lo + hi)}


def gap_detect(spec, eps, freq, box_sizes, min_width, n_phases=256, stability=1e-3):
    """Eigenvalue-free intervals of the phase-union spectrum, kept when they
    persist between the two largest boxes with endpoints within `stability`."""
    sizes = sorted(box_sizes)
    eig = {L: spectra(spec, eps, freq, L, n_phases).ravel() for L in sizes}
    cand = {L: find_gaps(eig[L], min_width) for L in sizes}
    stable = []
    if len(sizes) >= 2:
        small = np.array(cand[sizes[-2]]).reshape(-1, 2)
        for lo, hi in cand[sizes[-1]]:
            # candidates are sorted, so only neighbours of lo can match
            k = np.searchsorted(small[:, 0], lo)
            near = small[max(k - 1, 0):k + 1]
            if np.any((np.abs(near[:, 0] - lo) <= stability)
                      & (np.abs(near[:, 1] - hi) <= stability)):
                stable.append(_gap(lo, hi))
    else:
        stable = [_gap(lo, hi) for lo, hi in cand[sizes[0]]]
    return SpectrumReport(eig, stable, cand, sizes)


# rank-one coupling at the origin --------------------------------------------------------

def coupling_set_contains(spec, t):
    """Whether t lies in the closure of the extended line minus (f(0), f(1 - 0))."""
    lo, hi = spec.value_at_zero(), spec.left_limit_at_one()
    return bool(np.isinf(t) or t <= lo or t >= hi)


def coupling_grid(spec, count):
    """`count` couplings traversing the admissible set in increasing order:
    from f(1 - 0) up to +inf, then from -inf up to f(0)."""
    lo, hi = spec.value_at_zero(), spec.left_limit_at_one()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("couplings need a bounded sampling function")
    out = []
    for phi in np.linspace(0.0, 1.0, count):
        if phi < 0.5:
            out.append(hi + math.tan(math.pi * phi))
        elif phi == 0.5:
            out.append(np.inf)
        else:
            out.append(lo - math.tan(math.pi * (1.0 - phi)))
    return np.array(out)


@dataclass
class RankOneTrace:
    t_grid: np.ndarray
    eigenvalues: np.ndarray
    monotone: bool
    witnesses: list


def rank_one_spectrum(spec, eps, freq, box, t):
    op = assemble_operator(spec, eps, freq, 0.0, box)
    i = box.position(np.zeros(box.dim, dtype=int))
    diag = op.diag.copy()
    if np.isinf(t):
        keep = np.ones(len(box), bool)
        keep[i] = False
        sub = SymOperator(LatticeBox(box.sites[keep]), diag[keep],
                          op.off[np.ix_(keep, keep)], eps=eps)
        return np.concatenate([lapack_eigvals(sub), [np.inf]])
    diag[i] = t
    return lapack_eigvals(SymOperator(box, diag, op.off, eps=eps, omega=freq.omega))


def rank_one_sweep(spec, eps, freq, box, t_grid, gaps=(), clearance=1e-9):
    """Spectra of the operator at phase 0 with f(0) replaced by t.

    ``t_grid`` must traverse the admissible couplings in increasing order
    around the circle R u {inf}.  Eigenvalue trajectories are tracked by
    rank within each of the two real segments, where they must be
    non-decreasing.  A witness is a coupling with an eigenvalue strictly
    inside one of the supplied gaps, at least `clearance` from both ends;
    eigenvalues sitting on a gap edge are part of the spectrum that bounds it.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    bad = [t for t in t_grid if not coupling_set_contains(spec, t)]
    if bad:
        raise ValueError(f"couplings outside the admissible set: {bad[:3]}")
    ev = np.array([rank_one_spectrum(spec, eps, freq, box, t) for t in t_grid])
    # finite runs of increasing t; a run ends at t = inf or where t wraps to -inf
    runs, current = [], []
    for k, t in enumerate(t_grid):
        if np.isinf(t) or (current and t < t_grid[current[-1]]):
            runs.append(current)
            current = []
        if np.isfinite(t):
            current.append(k)
    runs.append(current)
    monotone = all(_segment_monotone(ev[r]) for r in runs if r)
    witnesses = []
    for g in gaps:
        lo, hi = g["left"], g["right"]
        for k, t in enumerate(t_grid):
            inside = ev[k][(ev[k] > lo + clearance) & (ev[k] < hi - clearance)]
            if inside.size:
                witnesses.append({"gap": [lo, hi], "t": float(t), "E": float(inside[0]),
                                  "rank": int(np.searchsorted(ev[k], inside[0]))})
                break
    return RankOneTrace(t_grid, ev, bool(monotone), witnesses)


def _segment_monotone(rows, tol=1e-12):
    if len(rows) < 2:
        return True
    rows = np.asarray(rows)
    fin = np.all(np.isfinite(rows), axis=0)
    d = np.diff(rows[:, fin], axis=0)
    return bool(np.all(d >= -tol))
