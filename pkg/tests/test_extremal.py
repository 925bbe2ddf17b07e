import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martonlab.errors import DegeneracyError, InfeasibleError, InputError
from martonlab.extremal import (and_pattern_detect, certify_local_max, eq5_sides, fiber_sums,
                                hessian_form, induced_joints, lemma2_all, lemma2_check,
                                lemma2_check_columns, quadratic_expectation_form, reduce_map,
                                second_difference, stationarity_residuals, theorem2_perturbation)
from martonlab.probcore import BroadcastChannel, mutual_information, random_channel
from martonlab.tmax import CouplingWithMap, objective_J, tmax_eval

from conftest import AND_MAP, dense_channel, random_and_coupling, stationary_and_coupling


def random_fiber_direction(rng, f, x_size):
    I = rng.normal(size=f.shape)
    for x in range(x_size):
        sel = f == x
        if sel.any():
            I[sel] -= I[sel].mean()
    return I


def coupling(p, f, x_size=2):
    return CouplingWithMap(np.asarray(p, dtype=float), np.asarray(f), x_size)


# --- stationarity ---------------------------------------------------------------------------

def test_residual_zero_without_freedom(rng):
    ch = random_channel(rng, 2)
    c = coupling([[0.3], [0.7]], [[0], [1]])
    assert stationarity_residuals(c, ch, [0.3, 0.7]) == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_residual_nonnegative(seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, 2)
    c = coupling(random_and_coupling(rng), AND_MAP)
    assert stationarity_residuals(c, ch, c.x_marginal()) >= 0


def test_residual_small_at_root_and_large_elsewhere():
    rng = np.random.default_rng(3)
    p = None
    while p is None:
        ch = dense_channel(rng)
        p = stationary_and_coupling(ch, rng)
    c = coupling(p, AND_MAP)
    assert stationarity_residuals(c, ch, c.x_marginal()) < 1e-8
    q = coupling([[0.5, 0.05], [0.15, 0.3]], AND_MAP)
    assert stationarity_residuals(q, ch, q.x_marginal()) > 1e-3


def test_residual_empty_fiber():
    ch = random_channel(np.random.default_rng(0), 3)
    c = coupling([[0.5, 0.5]], [[0, 1]], 3)
    with pytest.raises(InputError):
        stationarity_residuals(c, ch, [0.5, 0.5, 0.0 + 1e-3])


def test_residual_infeasible_fiber():
    c = CouplingWithMap(np.array([[0.5, 0.5]]), np.array([[0, 1]]), 3)
    with pytest.raises(InfeasibleError):
        from martonlab.extremal import _fiber_check
        _fiber_check(c, np.array([0.4, 0.4, 0.2]))


# --- first-derivative inequality -----------------------------------------------------------------

def derivative_slack_by_loops(c, ch, u1, u2, v):
    x = c.f[u1, v]
    puy, _ = induced_joints(c, ch)
    lhs = 0.0
    for y in range(ch.y_size):
        lhs += ch.y_given_x[x, y] ** 2 / puy[u2, y]
    return lhs - c.p_uv[u1, v] / (c.p_uv[u2, v] * c.p_uv[u1].sum())


def test_derivative_inequality_matches_direct_sum(rng):
    for _ in range(10):
        ch = dense_channel(rng)
        c = coupling(random_and_coupling(rng), AND_MAP)
        # rows 0 and 1 agree at column 0
        r = lemma2_check(c, ch, 0, 1, 0)
        assert r.slack == pytest.approx(derivative_slack_by_loops(c, ch, 0, 1, 0), abs=1e-12)


def test_derivative_inequality_equality_case():
    # Y independent of X and U independent of V: slack is exactly zero
    ch = BroadcastChannel([[0.3, 0.7], [0.3, 0.7]], [[0.9, 0.1], [0.2, 0.8]])
    p = np.outer([0.4, 0.6], [0.25, 0.75])
    c = coupling(p, [[0, 1], [0, 0]])
    r = lemma2_check(c, ch, 0, 1, 0)
    assert r.slack == pytest.approx(0.0, abs=1e-12)
    assert r.equality and r.holds


def test_derivative_inequality_precondition(rng):
    ch = dense_channel(rng)
    c = coupling(random_and_coupling(rng), AND_MAP)
    with pytest.raises(InputError):
        lemma2_check(c, ch, 0, 1, 1)
    with pytest.raises(InputError):
        lemma2_check_columns(c, ch, 0, 1, 1)


def test_derivative_inequality_invariant_under_v_relabeling(rng):
    ch = dense_channel(rng)
    p = random_and_coupling(rng)
    c = coupling(p, AND_MAP)
    swapped = coupling(p[:, ::-1], AND_MAP[:, ::-1])
    assert lemma2_check(c, ch, 0, 1, 0).slack == pytest.approx(
        lemma2_check(swapped, ch, 0, 1, 1).slack, abs=1e-12)


def test_derivative_inequality_holds_at_search_witness():
    rng = np.random.default_rng(11)
    for _ in range(5):
        ch = dense_channel(rng, 3, 2, 2)
        px = rng.dirichlet(np.ones(3)) * 0.7 + 0.1
        w = tmax_eval(ch, px, restarts=16).witness
        try:
            slacks = lemma2_all(w, ch)
        except DegeneracyError:
            continue
        # the ascent stops near, not at, a stationary point
        tol = 1e-6 + 10 * stationarity_residuals(w, ch, px)
        assert all(s[-1] >= -tol for s in slacks)


# --- row/column perturbation ---------------------------------------------------------------------

def test_and_pattern_detect_examples():
    assert and_pattern_detect([[0, 0], [0, 1]]) == [(0, 0, 0)]
    assert and_pattern_detect([[0, 1], [1, 0]]) == []
    assert and_pattern_detect([[0, 0], [1, 1]]) == []
    assert and_pattern_detect([[0, 1], [0, 0]]) == [(0, 1, 0)]


@given(st.integers(0, 2**32 - 1), st.integers(0, 1), st.integers(0, 1))
def test_perturbation_preserves_fibers(seed, u0, v0):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(6)).reshape(2, 3) * 0.9 + 0.1 / 6
    f = rng.integers(0, 3, size=(2, 3))
    f[u0, :] = 1
    f[:, v0] = 1
    c = coupling(p, f, 3)
    I = theorem2_perturbation(c, u0, v0)
    assert np.abs(fiber_sums(I, f, 3)).max() < 1e-14


def test_perturbation_formula():
    p = np.full((2, 2), 0.25)
    c = coupling(p, AND_MAP)
    I = theorem2_perturbation(c, 0, 0)
    # p(u0) = p(v0) = 1/2: corner entry vanishes, row and column entries match in size
    assert I[0, 0] == 0.0
    assert I[0, 1] == pytest.approx(0.125)
    assert I[1, 0] == pytest.approx(-0.125)
    assert I[1, 1] == 0.0


def test_perturbation_needs_positive_row():
    c = coupling([[0.5, 0.0], [0.25, 0.25]], AND_MAP)
    with pytest.raises(DegeneracyError):
        theorem2_perturbation(c, 0, 0)


# --- quadratic form ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_hessian_three_way(seed):
    rng = np.random.default_rng(seed)
    x_size = 2 + seed % 2
    ch = dense_channel(rng, x_size)
    f = np.array([[0, 1], [1, 0]]) if x_size == 2 else np.array([[0, 1, 2], [1, 2, 0]])
    p = rng.dirichlet(np.ones(f.size)).reshape(f.shape) * 0.8 + 0.2 / f.size
    c = coupling(p, f, x_size)
    hf = hessian_form(c, ch, c.x_marginal())
    assert np.abs(hf.q_matrix - hf.q_matrix.T).max() < 1e-12
    for _ in range(3):
        I = random_fiber_direction(rng, f, x_size)
        q = hf.quad(I)
        assert q == pytest.approx(quadratic_expectation_form(c, ch, I), abs=1e-10 * max(1, abs(q)))
        fd = second_difference(c, ch, I)
        assert abs(q - fd) <= 1e-3 * abs(fd)


def test_coefficients_definition(rng):
    ch = dense_channel(rng)
    c = coupling(random_and_coupling(rng), AND_MAP)
    hf = hessian_form(c, ch, c.x_marginal())
    puy, _ = induced_joints(c, ch)
    for x1 in range(2):
        for x2 in range(2):
            for u in range(2):
                direct = sum(ch.y_given_x[x1, y] * ch.y_given_x[x2, y] / puy[u, y]
                             for y in range(ch.y_size))
                assert hf.t_u[x1, x2, u] == pytest.approx(direct, rel=1e-12)


def test_split_sides_reproduce_quadratic_form(rng):
    for _ in range(5):
        ch = dense_channel(rng)
        c = coupling(random_and_coupling(rng), AND_MAP)
        lhs, rhs, I = eq5_sides(c, ch, c.x_marginal(), 0, 0)
        hf = hessian_form(c, ch, c.x_marginal())
        assert hf.quad(I) == pytest.approx(lhs - rhs, abs=1e-10)


def test_hessian_needs_dense_joints():
    ch = BroadcastChannel([[1, 0], [0, 1]], [[0.5, 0.5], [0.2, 0.8]])
    c = coupling(random_and_coupling(np.random.default_rng(0)), AND_MAP)
    with pytest.raises(DegeneracyError):
        hessian_form(c, ch, c.x_marginal())


# --- certificate ------------------------------------------------------------------------------

def test_certified_degenerate_witness(rng):
    for _ in range(5):
        ch = dense_channel(rng)
        px = rng.dirichlet([2, 2])
        iy, iz = ch.mi_pair(px)
        if iy > iz:
            c = coupling(px.reshape(2, 1), [[0], [1]])
        else:
            c = coupling(px.reshape(1, 2), [[0, 1]])
        rep = certify_local_max(c, ch, px)
        assert rep.verdict == "certified_local_max"
        assert objective_J(c, ch, px) == pytest.approx(tmax_eval(ch, px).value, abs=1e-9)


def test_and_coupling_refuted_with_witness(rng):
    checked = 0
    while checked < 10:
        ch = dense_channel(rng)
        c = coupling(random_and_coupling(rng), AND_MAP)
        puy, pvz = induced_joints(c, ch)
        if min(mutual_information(puy), mutual_information(pvz)) < 1e-3:
            continue
        rep = certify_local_max(c, ch, c.x_marginal())
        assert rep.verdict == "refuted"
        assert rep.witnesses and rep.reasons
        checked += 1


def test_stationary_and_couplings_refuted():
    rng = np.random.default_rng(7)
    found = 0
    for _ in range(20):
        ch = dense_channel(rng)
        p = stationary_and_coupling(ch, rng)
        if p is None:
            continue
        found += 1
        c = coupling(p, AND_MAP)
        rep = certify_local_max(c, ch, c.x_marginal())
        assert rep.verdict == "refuted"
        kinds = {w["kind"] for w in rep.witnesses}
        assert "row_column_perturbation" in kinds
    assert found >= 5


def test_certificate_json_and_inconclusive():
    ch = BroadcastChannel([[1, 0], [0, 1]], [[0.5, 0.5], [0.2, 0.8]])
    c = coupling([[0.3, 0.2], [0.1, 0.4]], AND_MAP)
    rep = certify_local_max(c, ch, c.x_marginal())
    assert rep.verdict == "inconclusive"
    d = json.loads(rep.to_json())
    assert d["verdict"] == "inconclusive" and d["reasons"]


def test_certificate_marginal_mismatch(rng):
    ch = dense_channel(rng)
    c = coupling(random_and_coupling(rng), AND_MAP)
    with pytest.raises(InputError):
        certify_local_max(c, ch, [0.5, 0.5])


# --- map reduction ---------------------------------------------------------------------------

def test_reduce_rows_never_decreases(rng):
    for _ in range(10):
        ch = random_channel(rng, 2)
        p = rng.dirichlet(np.ones(6)).reshape(3, 2)
        f = np.array([[0, 1], [0, 1], [1, 1]])
        c = coupling(p, f)
        r = reduce_map(c)
        assert r.u_size == 2
        px = c.x_marginal()
        assert objective_J(r, ch, px) >= objective_J(c, ch, px) - 1e-12


def test_reduce_columns_mirror_rows(rng):
    for _ in range(5):
        ch = random_channel(rng, 2)
        p = rng.dirichlet(np.ones(6)).reshape(3, 2)
        f = np.array([[0, 1], [0, 1], [1, 1]])
        rows = reduce_map(coupling(p, f))
        cols = reduce_map(coupling(p.T, f.T))
        assert np.allclose(cols.p_uv, rows.p_uv.T)
        swapped = ch.swapped()
        px = rows.x_marginal()
        # transposing U and V while swapping Y and Z leaves the objective unchanged
        assert objective_J(cols, swapped, px) == pytest.approx(objective_J(rows, ch, px), abs=1e-12)


def test_reduce_fixed_point(rng):
    c = coupling(random_and_coupling(rng), AND_MAP)
    r = reduce_map(c)
    assert np.array_equal(r.p_uv, c.p_uv) and np.array_equal(r.f, c.f)
