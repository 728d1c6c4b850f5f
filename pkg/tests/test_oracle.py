import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from quasidiag.errors import CardinalityMismatch, DomainConditionViolated
from quasidiag.model import Frequency, LatticeBox, PotentialSpec, assemble_operator
from quasidiag.oracle import (branch_distance_check, centered_box, check_domain,
                              coupling_grid, coupling_set_contains, dense_eig, find_gaps,
                              gap_detect, ids, label_branches, lapack_eigvals,
                              multiset_distance, phase_grid, rank_one_spectrum, rank_one_sweep,
                              spectra)

GOLDEN = (math.sqrt(5) - 1) / 2
SAW = PotentialSpec("sawtooth-power")
TAN = PotentialSpec("maryland-tan")
TWO = PotentialSpec("table", table_x=(0.0, 0.5), table_f=(0.4, 0.6))
FREQ = Frequency((GOLDEN,), 2.0, 1.0)
FREQ2 = Frequency((math.sqrt(2) - 1, math.sqrt(3) - 1), 3.0, 1.0)


# dense eigensolver -------------------------------------------------------------------

def test_dense_eig_diagonal():
    vals, vecs = dense_eig(np.diag([3.0, -1.0, 2.0]))
    np.testing.assert_array_equal(vals, [-1.0, 2.0, 3.0])
    np.testing.assert_array_equal(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])


def test_dense_eig_swap():
    vals, vecs = dense_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(vals, [-1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(np.abs(vecs), np.full((2, 2), 1 / math.sqrt(2)), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (8, 8), elements=st.floats(-1, 1)))
def test_dense_eig_matches_lapack(B):
    A = B + B.T
    vals, vecs = dense_eig(A)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-12)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(8), atol=1e-12)
    np.testing.assert_allclose(A @ vecs, vecs * vals, atol=1e-12)


def test_dense_eig_large_path():
    rng = np.random.default_rng(11)
    B = rng.normal(size=(40, 40))
    A = B + B.T
    vals, vecs = dense_eig(A)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-12)
    assert np.abs(A @ vecs - vecs * vals).max() <= 1e-12


def test_dense_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        dense_eig(np.array([[0.0, 1.0], [0.5, 0.0]]))


def test_dense_eig_deflates_infinite_site():
    box = LatticeBox.interval(-5, 5)
    op = assemble_operator(TAN, 0.1, FREQ, 0.0, box)
    vals, vecs = dense_eig(op)
    assert vals[0] == -np.inf and np.all(np.isfinite(vals[1:]))
    np.testing.assert_array_equal(vecs[:, 0], np.eye(len(box))[box.position(0)])
    assert np.all(vecs[box.position(0), 1:] == 0)


def test_lapack_agrees_in_two_dimensions():
    box = LatticeBox.cube(2, 3)
    op = assemble_operator(SAW, 0.05, FREQ2, 0.3, box)
    assert multiset_distance(lapack_eigvals(op), dense_eig(op)[0]) <= 1e-13


# branch labels ---------------------------------------------------------------------------

def test_labels_without_hopping():
    box = LatticeBox.interval(-6, 6)
    table = label_branches(SAW, 0.0, FREQ, 0.37, box)
    np.testing.assert_array_equal(table.energies, SAW(0.37 + box.sites[:, 0] * GOLDEN))


def test_labels_follow_phase_order():
    box = LatticeBox.interval(-6, 6)
    table = label_branches(SAW, 1e-3, FREQ, 0.37, box)
    ph = (0.37 + box.sites[:, 0] * GOLDEN) % 1
    assert np.all(np.argsort(table.energies) == np.argsort(ph))
    assert table.energy(0) == pytest.approx(0.37, abs=1e-5)
    v = table.vector(0)
    assert abs(v[box.position(0)]) > 0.99


# multiset distance ------------------------------------------------------------------------

def test_multiset_examples():
    assert multiset_distance([1, 2, 3], [3, 1, 2.5]) == 0.5
    assert multiset_distance([], []) == 0.0
    assert multiset_distance([-np.inf, 1.0], [1.0, -np.inf]) == 0.0
    with pytest.raises(CardinalityMismatch):
        multiset_distance([1, 2], [1])


@settings(max_examples=60, deadline=None)
@given(arrays(float, (6, 6), elements=st.floats(-1, 1)),
       arrays(float, (6, 6), elements=st.floats(-0.1, 0.1)))
def test_weyl_bound(A, B):
    A, B = A + A.T, B + B.T
    d = multiset_distance(dense_eig(A + B)[0], dense_eig(A)[0])
    assert d <= np.linalg.norm(B, 2) + 1e-12


# domain conditions ------------------------------------------------------------------------

def test_branch_distance_without_hopping():
    dom = [(n,) for n in range(-3, 4)]
    rep = branch_distance_check(SAW(0.37), SAW, 0.0, FREQ, 0.37, dom, 0.0)
    assert rep.distance == 0.0 and rep.ok and rep.domain_size == 7


def test_domain_conditions():
    inner = {(n,) for n in range(-2, 3)}
    check_domain(inner, inner, [], FREQ, 1e-4)
    with pytest.raises(DomainConditionViolated):
        check_domain({(n,) for n in range(-1, 2)}, inner, [], FREQ, 1e-4)
    with pytest.raises(DomainConditionViolated):
        check_domain(inner, inner, [{(2,), (3,)}], FREQ, 1e-4)
    # |2 omega| ~ 0.236 is too close once intervals are wide
    with pytest.raises(DomainConditionViolated):
        check_domain(inner, inner, [], FREQ, 0.03)


# spectra, IDS, gaps -------------------------------------------------------------------------

def test_centered_box():
    assert len(centered_box(1, 5)) == 5 and (0,) in centered_box(1, 5)
    b = centered_box(2, 4)
    assert len(b) == 16 and (0, 0) in b


def test_spectra_without_hopping_are_phases():
    ev = spectra(SAW, 0.0, FREQ, 20, 4)
    box = centered_box(1, 20)
    for x, row in zip(phase_grid(4), ev):
        np.testing.assert_allclose(row, np.sort((x + box.sites[:, 0] * GOLDEN) % 1), atol=1e-13)


def test_ids_without_hopping():
    E = np.linspace(-0.5, 1.5, 81)
    tab = ids(SAW, 0.0, FREQ, [50, 100], E)
    for L, N in tab.counts.items():
        assert np.all(np.diff(N) >= 0)
        assert N[0] == 0 and N[-1] == 1
        inside = (E >= 0) & (E <= 1)
        assert np.max(np.abs(N[inside] - E[inside])) <= 4 / L


def test_ids_rejects_unsorted_sizes():
    with pytest.raises(ValueError):
        ids(SAW, 0.0, FREQ, [100, 50], [0.5])


def test_find_gaps():
    assert find_gaps([0.0, 0.1, 0.5, 0.52, np.nan], 0.2) == [(0.1, 0.5)]
    assert find_gaps([0.0, -np.inf, 0.1], 0.2) == []


def test_no_gaps_without_hopping():
    rep = gap_detect(SAW, 0.0, FREQ, [50, 100], 1e-3, n_phases=64)
    assert rep.gaps == []


def test_two_step_gap():
    rep = gap_detect(TWO, 0.0, FREQ, [50, 100], 1e-3, n_phases=16)
    assert len(rep.gaps) == 1
    g = rep.gaps[0]
    assert (g["left"], g["right"]) == (0.4, 0.6)
    assert g["width"] == pytest.approx(0.2)


def test_two_step_gap_with_hopping_shrinks():
    rep = gap_detect(TWO, 1e-3, FREQ, [100, 200], 1e-3, n_phases=16)
    g = rep.gaps[0]
    assert 0.4 < g["left"] < 0.402 and 0.598 < g["right"] < 0.6


# rank-one couplings ----------------------------------------------------------------------------

def test_coupling_set():
    assert coupling_set_contains(SAW, 0.0) and coupling_set_contains(SAW, 1.0)
    assert not coupling_set_contains(SAW, 0.5)
    assert coupling_set_contains(SAW, np.inf)
    assert not coupling_set_contains(TWO, 0.5) and coupling_set_contains(TWO, 0.4)
    with pytest.raises(ValueError):
        coupling_grid(TAN, 10)


def test_coupling_grid_goes_round_once():
    t = coupling_grid(SAW, 101)
    assert t[0] == 1.0 and t[50] == np.inf and t[-1] == 0.0
    assert np.all(np.diff(t[:50]) > 0) and np.all(np.diff(t[51:]) > 0)
    assert all(coupling_set_contains(SAW, x) for x in t)


def test_rank_one_reproduces_operator():
    box = LatticeBox.interval(-20, 20)
    ev = rank_one_spectrum(SAW, 1e-3, FREQ, box, SAW(0.0))
    ref = lapack_eigvals(assemble_operator(SAW, 1e-3, FREQ, 0.0, box))
    np.testing.assert_array_equal(ev, ref)
    inf = rank_one_spectrum(SAW, 1e-3, FREQ, box, np.inf)
    assert inf[-1] == np.inf and len(inf) == len(box)


def test_rank_one_sweep_monotone():
    box = LatticeBox.interval(-30, 30)
    tr = rank_one_sweep(SAW, 1e-3, FREQ, box, coupling_grid(SAW, 41))
    assert tr.monotone
    assert tr.eigenvalues.shape == (41, len(box))
    with pytest.raises(ValueError):
        rank_one_sweep(SAW, 1e-3, FREQ, box, [0.5])


def test_rank_one_witness_logic():
    box = LatticeBox.interval(-10, 10)
    t = coupling_grid(SAW, 201)
    # with no hopping the coupled eigenvalue is t, which never enters (0, 1);
    # the other eigenvalues are the phases n omega, n != 0
    others = np.sort((box.sites[:, 0] * GOLDEN) % 1)[1:]
    k = int(np.argmax(np.diff(others)))
    inner = {"left": float(others[k]), "right": float(others[k + 1])}
    assert rank_one_sweep(SAW, 0.0, FREQ, box, t, [inner]).witnesses == []
    outer = {"left": 1.5, "right": 2.0}
    tr = rank_one_sweep(SAW, 0.0, FREQ, box, t, [outer, inner])
    assert len(tr.witnesses) == 1
    w = tr.witnesses[0]
    assert w["E"] == w["t"] and 1.5 < w["E"] < 2.0 and w["rank"] == len(box) - 1


def test_two_step_couplings_stay_out_of_the_gap():
    # the admissible couplings exclude (0.4, 0.6), and the coupled eigenvalue
    # follows t, so it never lands strictly inside the gap
    box = LatticeBox.interval(-50, 50)
    gap = {"left": 0.401, "right": 0.599}
    t = np.concatenate([coupling_grid(TWO, 201), [0.4, 0.6]])
    t = np.concatenate([t[t >= 0.6][np.argsort(t[t >= 0.6])], [np.inf],
                        np.sort(t[t <= 0.4])])
    tr = rank_one_sweep(TWO, 1e-3, FREQ, box, t, [gap])
    assert tr.monotone
    assert tr.witnesses == []
