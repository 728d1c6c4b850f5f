"""Checks that compare the rotation scheme with the brute-force oracle.

This is the only module that imports both routes.  Every function returns
plain data (dicts and lists) so results can go straight into JSON.
"""

import math

import numpy as np

from .errors import CardinalityMismatch, InvalidAbsorptionQuery, RegionOverlap
from .model import Frequency, LatticeBox, PotentialSpec, assemble_operator, l1_sphere_points
from .oracle import (branch_distance_check, check_domain, dense_eig, label_branches,
                     lapack_eigvals, multiset_distance)
from .regions import (RegionBuilder, l1_diameter, level, make_intervals, separation_scan,
                      union_region)
from .scheme import absorption_check, diagonal_trace, initial_state, log_magn, run_scheme, step


def oracle_agreement(params, x, ambient):
    """Scheme eigenpair at phase x against the oracle eigenpair with the largest
    weight at the origin."""
    res = run_scheme(params, x, ambient)
    op = res.state.H0
    vals, vecs = dense_eig(op)
    i = res.state.origin
    k = int(np.argmax(np.abs(vecs[i])))
    return {"x": float(x), "E": res.E, "E_oracle": float(vals[k]),
            "dE": float(abs(res.E - vals[k])) if np.isfinite(res.E) else 0.0,
            "alignment": float(1 - abs(res.psi @ vecs[:, k])),
            "residual": res.residual, "decay": res.diagnostics,
            "steps": [_record(r) for r in res.state.history]}


def _record(r):
    return {"step": r.step, "u_norm": r.u_norm, "conv3_bound": r.conv3_bound,
            "conv3_ok": r.conv3_ok, "rotations": r.rotations,
            "min_dominance_margin": r.min_dominance_margin,
            "row0_residual": r.row0_residual, "diag0": r.diag0}


def spectrum_preservation(params, x, ambient, steps=None):
    """Multiset distance between the spectra of H^(s) and H^(0), relative to |H|."""
    steps = params.s_max if steps is None else steps
    st = initial_state(params, x, ambient)
    base, _ = dense_eig(st.H0)
    scale = max(st.H0.norm(), 1.0)
    out = []
    for _ in range(steps):
        st = step(st, params)
        A = st.A.copy()
        fin = np.isfinite(np.diag(A))
        vals, _ = dense_eig(A[np.ix_(fin, fin)])
        vals = np.concatenate([np.full(int((~fin).sum()), -np.inf), vals])
        out.append(multiset_distance(vals, base) / scale)
    return out


def branch_distance(params, x0, s, ambient, n_phases=32, floor=1e-10):
    """|f^(s+1)(x, x0) - E_0(x)| on a phase grid of I_{s+1}, with the oracle run
    on the union of the origin's step-s regions over I_s."""
    freq, d = params.freq, ambient.dim
    intervals = make_intervals(x0, params.beta, s + 1)
    domain = union_region(np.zeros(d, int), s, intervals, freq, ambient)
    bound = math.exp(d * math.log(3) + (s + 2) * math.log(params.eps)
                     + log_magn(s + 2, params.M, params.beta, params.gamma))
    rows = []
    for x in intervals[s + 1].grid(n_phases):
        builder = RegionBuilder(x, intervals, freq, ambient)
        inner = builder.extended(s).get(tuple([0] * d), frozenset())
        others = [r for ell in range(1, s + 1) for c, r in builder.extended(ell).items()
                  if any(c) and not (r & inner)]
        check_domain(domain, inner, others, freq, intervals[s].length())
        f = diagonal_trace(params, x, x0, ambient, s + 1).diag0_history[s + 1]
        rep = branch_distance_check(f, params.potential, params.eps, freq, x, domain,
                                    bound, floor)
        rows.append({"x": float(x), "distance": rep.distance, "tolerance": rep.tolerance,
                     "ok": rep.ok, "domain_size": rep.domain_size})
    return rows


def region_scan(freq, beta, n_max, s_max, x_grid=16):
    """Disjointness, diameter and separation of regions on the box |n| <= n_max.

    Separation is exact over all phases.  Disjointness and diameters are
    checked on extended regions for x on a grid and every x0 equal to the
    phase of a box site, which keeps that site active at every step.
    """
    d = freq.dim
    ambient = LatticeBox.cube(d, n_max)
    sep = separation_scan(freq, beta, freq.mu, n_max, s_max)
    worst_diam = 0.0
    overlaps = []
    families = 0
    for x in (np.arange(x_grid) + 0.5) / x_grid:
        for x0 in np.unique(np.round((x + ambient.sites @ freq.vector) % 1.0, 15)):
            intervals = make_intervals(x0, beta, s_max)
            builder = RegionBuilder(x, intervals, freq, ambient)
            for s in range(1, s_max + 1):
                try:
                    fam = builder.extended(s)
                except RegionOverlap as err:
                    overlaps.append({"x": float(x), "x0": float(x0), "step": err.step})
                    break
                families += 1
                for r in fam.values():
                    worst_diam = max(worst_diam, l1_diameter(r) / (3 * s))
        if d > 1:
            break
    return {"separation_ok": sep.ok, "collisions": sep.collisions,
            "separation_violations": sep.violations[:20],
            "disjoint": not overlaps, "overlaps": overlaps[:20],
            "worst_diameter_ratio": worst_diam, "diameter_ok": worst_diam <= 1.0,
            "families": families}


def absorption_sweep(params, k_max):
    """Every admissible (k1, n) with |n| = k2 <= k_max; margins are log-space."""
    worst, checked, failures = np.inf, 0, []
    for k2 in range(1, k_max + 1):
        pts = l1_sphere_points(params.freq.dim, k2)
        pts = pts[np.abs(pts).sum(axis=1) == k2]
        for n in pts:
            lev = level(n, params.freq, params.beta)
            for k1 in range(max(lev, 1), k2 + 1):
                try:
                    r = absorption_check(k1, k2, n, params.freq, params)
                except InvalidAbsorptionQuery:
                    continue
                checked += 1
                worst = min(worst, r.margin)
                if not r.margin > 0:
                    failures.append({"k1": k1, "k2": k2, "n": n.tolist(), "margin": r.margin})
    return {"ok": not failures and checked > 0, "worst_margin": float(worst),
            "checked": checked, "failures": failures[:20]}


def _random_table(rng):
    k = int(rng.integers(2, 6))
    xs = np.sort(rng.choice(np.arange(1, 100), size=k - 1, replace=False) / 100.0)
    xs = np.concatenate([[0.0], xs])
    jumps = rng.uniform(0.0, 0.5, size=k)
    slope = 1.0
    fs = np.cumsum(jumps) + slope * xs
    return PotentialSpec("table", alpha=1.0, table_x=tuple(xs), table_f=tuple(fs), slope=slope)


def branch_labeling_trials(seed, count=200, grid=32):
    """Random small instances: the phase-ordered pairing and branch monotonicity."""
    rng = np.random.default_rng(seed)
    freqs = {1: Frequency(((math.sqrt(5) - 1) / 2,), 2.0, 1.0),
             2: Frequency((math.sqrt(2) - 1, math.sqrt(3) - 1), 3.0, 1.0)}
    order_failures, mono_failures, worst_drop = 0, 0, 0.0
    for t in range(count):
        d = 1 if t % 2 == 0 else 2
        freq = freqs[d]
        spec = _random_table(rng)
        if d == 1:
            size = int(rng.integers(2, 13))
            box = LatticeBox.interval(0, size - 1)
        else:
            a, b = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            box = LatticeBox(np.array([(i, j) for i in range(a) for j in range(b)]))
        x = float(rng.uniform())
        ph = (x + box.sites @ freq.vector) % 1.0
        vals = np.sort(spec(ph))
        spacing = float(np.min(np.diff(vals)))
        eps = 0.05 * spacing
        table = label_branches(spec, eps, freq, x, box)
        ref = lapack_eigvals(assemble_operator(spec, eps, freq, x, box))
        if not _pairing_ok(table.energies, ph) or multiset_distance(table.energies, ref) > 1e-12:
            order_failures += 1
        # one shared grid; branch n is read in the order of its own phase,
        # which runs once through its continuity interval
        grid_x = (np.arange(grid) + 0.5) / grid
        tables = [label_branches(spec, eps, freq, y, box) for y in grid_x]
        for n in box.sites:
            order = np.argsort((grid_x + float(n @ freq.vector)) % 1.0, kind="stable")
            En = np.array([tables[k].energy(n) for k in order])
            drop = float(np.max(-np.diff(En), initial=0.0))
            worst_drop = max(worst_drop, drop)
            if drop > 1e-12:
                mono_failures += 1
    return {"instances": count, "order_failures": order_failures,
            "monotone_failures": mono_failures, "worst_drop": worst_drop,
            "ok": order_failures == 0 and mono_failures == 0}


def _pairing_ok(energies, ph):
    """E_m <= E_n exactly when the phase of m is <= the phase of n."""
    le_E = energies[:, None] <= energies[None, :]
    le_x = ph[:, None] <= ph[None, :]
    return bool(np.array_equal(le_E, le_x))


def ids_identity(ids_table, phases):
    """sup over the phase grid of |N(E(x)) - x| for each box size."""
    xs = np.asarray(phases, dtype=float)
    out = {}
    for L, counts in ids_table.counts.items():
        if counts.shape != xs.shape:
            raise CardinalityMismatch("IDS table and phase grid differ in length")
        out[int(L)] = float(np.max(np.abs(counts - xs)))
    return out
