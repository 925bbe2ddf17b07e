import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martonlab.envelope import (binary_capacity, concave_envelope_eval, envelope_trace, factor_rhs,
                                marton_sum_rate_binary, max_mi, rate_objective, upper_hull,
                                weighted_rate_support, write_trace_csv)
from martonlab.errors import InputError, SizeError
from martonlab.probcore import BroadcastChannel, bssc, entropy, io_mutual_information, random_channel

from conftest import binary_entropy, grid_oracle


def check_atoms(res, p):
    w = np.array([a[0] for a in res.atoms])
    q = np.array([a[1] for a in res.atoms])
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9
    assert np.abs(w @ q - p).max() < 1e-9
    assert len(res.atoms) <= len(p)
    assert res.value >= res.base_value - 1e-9


# --- envelopes ---------------------------------------------------------------------------

def test_upper_hull_simple():
    xs = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    ys = np.array([0.0, 1.0, 0.5, 1.0, 0.0])
    assert upper_hull(xs, ys).tolist() == [0, 1, 3, 4]


@pytest.mark.parametrize("t", [0.1, 0.37, 0.5, 0.93])
def test_concave_function_is_its_own_envelope(t):
    p = np.array([1 - t, t])
    res = concave_envelope_eval(entropy, p)
    assert res.value == pytest.approx(entropy(p), abs=1e-12)
    assert len(res.atoms) == 1
    check_atoms(res, p)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.8])
def test_convex_function_gives_endpoint_chord(t):
    p = np.array([1 - t, t])
    res = concave_envelope_eval(lambda q: (q[1] - 0.5) ** 2, p)
    # chord between the endpoints, both at height 1/4
    assert res.value == pytest.approx(0.25, abs=1e-12)
    check_atoms(res, p)


def test_bssc_min_mi_dominance():
    ch = bssc(0.5)

    def g(q):
        return min(ch.mi_pair(q))

    p = np.array([0.5, 0.5])
    res = concave_envelope_eval(g, p)
    assert res.value >= g(p) - 1e-12
    check_atoms(res, p)


def test_ternary_envelopes():
    p = np.array([0.2, 0.3, 0.5])
    res = concave_envelope_eval(entropy, p)
    assert res.value == pytest.approx(entropy(p), abs=1e-9)
    check_atoms(res, p)
    # convex: the vertices carry everything
    res = concave_envelope_eval(lambda q: float(q @ q), p)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    check_atoms(res, p)


def test_ternary_min_of_informations():
    ch = BroadcastChannel([[1, 0], [1, 0], [0, 1]], [[1, 0], [0, 1], [0, 1]])

    def g(q):
        return min(ch.mi_pair(q))

    p = np.full(3, 1 / 3)
    res = concave_envelope_eval(g, p, grid=60)
    assert res.value >= g(p) - 1e-12
    check_atoms(res, p)


def test_envelope_size_cap():
    with pytest.raises(SizeError):
        concave_envelope_eval(entropy, np.full(4, 0.25))


def wiggle(q):
    x = q[..., 1]
    return np.sin(9 * x) * x + 0.3 * x ** 2


@given(st.floats(0.01, 0.99))
@settings(max_examples=25)
def test_dominance(t):
    p = np.array([1 - t, t])
    res = concave_envelope_eval(wiggle, p, grid=801, vectorized=True)
    assert res.value >= float(wiggle(p)) - 1e-9
    check_atoms(res, p)


def test_idempotence_and_concavity():
    rows = envelope_trace(wiggle, points=101, grid=2001, vectorized=True)
    ts, env = rows[:, 0], rows[:, 2]
    # midpoint concavity on the trace grid
    mid = env[1:-1] - 0.5 * (env[:-2] + env[2:])
    assert mid.min() >= -1e-9

    def env_fn(q):
        return np.interp(q[..., 1], ts, env)

    for t in (0.2, 0.55, 0.9):
        p = np.array([1 - t, t])
        once = concave_envelope_eval(env_fn, p, vectorized=True, polish=False).value
        assert once == pytest.approx(float(env_fn(p)), abs=1e-9)


def test_trace_csv(tmp_path):
    rows = envelope_trace(entropy, points=11)
    path = tmp_path / "trace.csv"
    write_trace_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "p,g,envelope"
    assert len(lines) == 12


# --- rate formulas -------------------------------------------------------------------------

def bsc(d):
    return [[1 - d, d], [d, 1 - d]]


def test_binary_capacity_closed_form():
    cap, a = binary_capacity(bsc(0.11))
    assert cap == pytest.approx(1 - float(binary_entropy(0.11)), abs=1e-10)
    assert a == pytest.approx(0.5, abs=1e-5)


def test_sum_rate_identical_components():
    ch = BroadcastChannel(bsc(0.2), bsc(0.2))
    assert marton_sum_rate_binary(ch).value == pytest.approx(binary_capacity(bsc(0.2))[0], abs=1e-9)


def test_sum_rate_constant_z():
    w = [[0.9, 0.1], [0.3, 0.7]]
    ch = BroadcastChannel(w, [[1, 0], [1, 0]])
    assert marton_sum_rate_binary(ch).value == pytest.approx(binary_capacity(w)[0], abs=1e-9)


def test_bssc_sum_rate_against_fine_grid():
    ch = bssc(0.5)
    res = marton_sum_rate_binary(ch)
    oracle = grid_oracle(ch, 1.0, 400)
    assert res.value == pytest.approx(oracle, abs=2e-3)
    assert res.value >= oracle - 1e-9
    # frozen from the 1/400 grid oracle
    assert res.value == pytest.approx(0.36164, abs=1e-4)
    assert rate_objective(ch, res.witness) == pytest.approx(res.value, abs=1e-12)


def test_weighted_rate_alpha_one_is_sum_rate(rng):
    for _ in range(3):
        ch = random_channel(rng, 2)
        a, _ = weighted_rate_support(ch, 1.0)
        assert a.value == marton_sum_rate_binary(ch).value


def test_weighted_rate_large_alpha_limit():
    ch = bssc(0.5)
    res, swapped = weighted_rate_support(ch, 64.0)
    cap_y = binary_capacity(ch.y_given_x)[0]
    assert res.value / 64 == pytest.approx(cap_y, abs=1e-2)
    assert res.value >= 64 * cap_y - 1e-9
    assert swapped.value >= 64 * binary_capacity(ch.z_given_x)[0] - 1e-9


def test_weighted_rate_guards():
    with pytest.raises(InputError):
        weighted_rate_support(bssc(0.5), 0.5)
    with pytest.raises(SizeError):
        marton_sum_rate_binary(BroadcastChannel(np.eye(3), np.eye(3)))


@pytest.mark.parametrize("alpha", [1.0, 2.0, 3.5])
def test_weighted_rate_against_grid(alpha, rng):
    ch = random_channel(rng, 2)
    res, _ = weighted_rate_support(ch, alpha)
    assert res.value >= grid_oracle(ch, alpha, 100) - 1e-9


# --- composite functional -------------------------------------------------------------------

def test_factor_rhs_exact_and_dominant(rng):
    for _ in range(3):
        ch = random_channel(rng, 2)
        t = rng.uniform(0.1, 0.9)
        p = np.array([1 - t, t])
        env, lb = factor_rhs(ch, p, 1.0, 1.0, max_mi(ch, 1.0), grid=401)
        assert not lb
        point = -entropy(p @ ch.y_given_x) + max_mi(ch)(p)
        assert env.value >= point - 1e-9
        check_atoms(env, p)


def test_factor_rhs_concave_case():
    # Y = X with lambda = alpha = 1: the composite is max(0, I(X;Z) - H(X)) = 0
    ch = BroadcastChannel(np.eye(2), bsc(0.3))
    p = np.array([0.4, 0.6])
    env, _ = factor_rhs(ch, p, 1.0, 1.0, max_mi(ch, 1.0), grid=401)
    assert env.value == pytest.approx(0.0, abs=1e-9)


def test_factor_rhs_lower_bound_flag():
    class Fake:
        value = 0.0
        is_lower_bound = True

    env, lb = factor_rhs(bssc(0.5), [0.5, 0.5], 0.5, 1.0, lambda q: Fake(), grid=51)
    assert lb
    with pytest.raises(InputError):
        factor_rhs(bssc(0.5), [0.5, 0.5], 1.5, 1.0, lambda q: 0.0)


def test_rate_objective_matches_direct_mi():
    ch = bssc(0.5)
    p_wx = np.array([[0.2, 0.1], [0.3, 0.4]])
    pw = p_wx.sum(1)
    iwy = io_mutual_information(pw, (p_wx / pw[:, None]) @ ch.y_given_x)
    iwz = io_mutual_information(pw, (p_wx / pw[:, None]) @ ch.z_given_x)
    ixy0 = io_mutual_information(p_wx[0] / pw[0], ch.y_given_x)
    ixz1 = io_mutual_information(p_wx[1] / pw[1], ch.z_given_x)
    expected = min(iwy, iwz) + pw[0] * ixy0 + pw[1] * ixz1
    assert rate_objective(ch, p_wx) == pytest.approx(expected, abs=1e-12)
