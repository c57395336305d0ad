import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfrlab.dynamics import (IntegratorCfg, RegularizationCfg, Trajectory, cutoff_convergence,
                             nonlinear_direct, nonlinear_fft, rhs, rhs_direct, solve,
                             solve_regularized, state_norm, uniqueness_gap, weak_limit_experiment)
from nfrlab.lattice import SeqState, TruncatedLattice, random_state
from nfrlab.model import EQUATIONS, registry

from conftest import philox


def get(name):
    return registry(name, alpha=0.75) if name == "fnls" else registry(name)


def data(eq, N, norm, seed=1, s=0.0):
    lat = TruncatedLattice(eq.d, N)
    return random_state(lat, philox(seed), norm, s=s, components=eq.components,
                        conjugate_pair=eq.components == 2, mean_zero=eq.name == "kdv")


def test_zero_state():
    eq = registry("cnls1d")
    z = SeqState.zeros(TruncatedLattice(1, 4), 2)
    assert not np.any(rhs(eq, z, 0.4).data)
    tr = solve(eq, z, 0.1, IntegratorCfg(0.01))
    assert not np.any(tr.states)


def test_kdv_two_deltas():
    lat = TruncatedLattice(1, 4)
    st_ = SeqState(lat, SeqState.delta(lat, 1).data + SeqState.delta(lat, 2).data)
    t = 0.37
    r = rhs(registry("kdv"), st_, t).flat(0)
    assert r[lat.flat_index(np.array([3]))] == pytest.approx(2 * 3j * np.exp(18j * t), abs=1e-13)


@pytest.mark.parametrize("name", EQUATIONS)
def test_fft_matches_direct(name):
    eq = get(name)
    N = 8 if eq.d == 1 else 4
    st_ = data(eq, N, 0.7, seed=5)
    for t in (0.0, 0.61):
        a = rhs(eq, st_, t).data
        b = rhs_direct(eq, st_, t).data
        assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(b)
        a = nonlinear_fft(eq, st_, t)
        b = nonlinear_direct(eq, st_, t)
        assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(b)


def test_integrator_cfg_validation():
    with pytest.raises(ValueError):
        IntegratorCfg(0.0)
    with pytest.raises(ValueError):
        IntegratorCfg(0.1, store_every=0)
    with pytest.raises(ValueError):
        IntegratorCfg(0.3).steps(1.0)
    with pytest.raises(ValueError):
        IntegratorCfg(0.1, store_every=3).steps(1.0)
    assert IntegratorCfg(1e-3).steps(0.1) == 100


def test_mass_conservation_small():
    eq = registry("cnls1d")
    st_ = data(eq, 16, 1.0)
    tr = solve(eq, st_, 0.5, IntegratorCfg(1e-3, 50))
    m = np.array([np.sum(np.abs(x[0]) ** 2) for x in tr.states])
    assert np.abs(m - m[0]).max() <= 1e-8


@pytest.mark.parametrize("name,N,norm", [("cnls1d", 4, 1.0), ("kdv", 4, 1.0)])
def test_rk4_order(name, N, norm):
    eq = registry(name)
    st_ = data(eq, N, norm)
    T = 0.5
    ends = [solve(eq, st_, T, IntegratorCfg(dt, int(round(T / dt)))).states[-1]
            for dt in (0.02, 0.01, 0.005)]
    rate = np.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    assert 3.7 <= rate <= 4.3


def test_deterministic():
    eq = registry("cnls1d")
    st_ = data(eq, 8, 0.5)
    a = solve(eq, st_, 0.05, IntegratorCfg(1e-3))
    b = solve(eq, st_, 0.05, IntegratorCfg(1e-3))
    assert np.array_equal(a.states, b.states)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_aborts():
    eq = registry("cnls1d")
    st_ = data(eq, 4, 1.0)
    with pytest.raises(FloatingPointError, match="t="):
        solve_regularized(eq, st_, 0.1, RegularizationCfg(0.0, 1.0), IntegratorCfg(0.01),
                          rhs_fn=lambda u, t: np.full_like(u, np.inf))


def test_component_mismatch():
    with pytest.raises(ValueError):
        solve(registry("cnls1d"), SeqState.zeros(TruncatedLattice(1, 3), 1), 0.1, IntegratorCfg(0.01))


def test_regularized_eps_zero_equals_solve():
    eq = registry("cnls1d")
    st_ = data(eq, 8, 0.5)
    cfg = IntegratorCfg(1e-3, 10)
    a = solve(eq, st_, 0.05, cfg)
    b = solve_regularized(eq, st_, 0.05, RegularizationCfg(0.0, 1.0), cfg)
    assert np.array_equal(a.states, b.states)


def test_regularized_linear_closed_form():
    eq = registry("cnls1d")
    st_ = data(eq, 8, 1.0)
    lat = st_.lattice
    eps, alpha, T = 0.01, 1.0, 0.5
    tr = solve_regularized(eq, st_, T, RegularizationCfg(eps, alpha), IntegratorCfg(0.01, 10),
                           rhs_fn=lambda u, t: np.zeros_like(u))
    for t, x in zip(tr.times, tr.states):
        want = np.exp(-eps * lat.brackets ** (2 * alpha) * t).reshape(lat.shape) * st_.data
        np.testing.assert_allclose(x, want, rtol=1e-12, atol=1e-15)


def test_regularized_apriori():
    eq = registry("cnls1d")
    st_ = data(eq, 16, 0.05)
    tr = solve_regularized(eq, st_, 0.1, RegularizationCfg(1e-2, 1.0), IntegratorCfg(1e-3, 10))
    lat = st_.lattice
    assert max(state_norm(x, lat) for x in tr.states) <= 6 * state_norm(st_.data, lat)


def test_reg_cfg_validation():
    with pytest.raises(ValueError):
        RegularizationCfg(1.5, 1.0)
    with pytest.raises(ValueError):
        RegularizationCfg(0.1, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 0.9), st.floats(0.05, 2.0), st.floats(0, 5),
       st.floats(-1, 2))
def test_semigroup_contracts(seed, eps, alpha, t, s):
    lat = TruncatedLattice(1, 10)
    x = random_state(lat, philox(seed), 1.0, decay=0.3)
    y = x.flat(0) * np.exp(-eps * lat.brackets ** (2 * alpha) * t)
    assert state_norm(y, lat, s) <= state_norm(x.data, lat, s)


def test_uniqueness_identical():
    eq = registry("cnls1d")
    st_ = data(eq, 8, 0.5)
    g = uniqueness_gap(eq, st_, st_, 0.01, IntegratorCfg(1e-3))
    assert g["supRatio"] is None and g["absoluteGap"] <= 1e-10


def test_uniqueness_short_time():
    eq = registry("cnls1d")
    st_ = data(eq, 16, 0.5)
    pert = data(eq, 16, 1e-3, seed=2)
    g = uniqueness_gap(eq, st_, st_ + pert, 1e-3, IntegratorCfg(1e-4))
    assert 1.0 - 1e-6 <= g["supRatio"] <= 1.1


def test_weak_limit_same_eps():
    eq = registry("cnls1d")
    st_ = data(eq, 8, 0.05)
    rep = weak_limit_experiment(eq, st_, 0.0, 1.0, [1e-2, 1e-2], 0.02, IntegratorCfg(1e-3))
    assert rep["pairs"][0]["distance"] == 0.0
    assert rep["passed"]


def test_weak_limit_order_check():
    eq = registry("cnls1d")
    st_ = data(eq, 4, 0.05)
    with pytest.raises(ValueError):
        weak_limit_experiment(eq, st_, 0.0, 1.0, [1e-3, 1e-2], 0.01, IntegratorCfg(1e-3))


def test_weak_limit_cutoff_noop():
    # data supported in <n> <= N_eps for every eps: only the damping differs
    eq = registry("cnls1d")
    st_ = data(eq, 4, 0.05)
    rep = weak_limit_experiment(eq, st_, 0.0, 0.2, [1e-2, 1e-3], 0.02, IntegratorCfg(1e-3))
    p = rep["pairs"][0]
    a, b = rep["runs"]
    assert a["N_eps"] > 4 and a["init_s"] == b["init_s"]
    assert 0 < p["distance"] <= a["eps"] * a["sup_hi"] + b["eps"] * b["sup_hi"]


def test_trajectory_roundtrip():
    eq = registry("cnls1d")
    tr = solve(eq, data(eq, 4, 0.3), 0.01, IntegratorCfg(1e-3, 5))
    back = Trajectory.from_json(tr.to_json())
    assert np.array_equal(back.states, tr.states) and np.array_equal(back.times, tr.times)
    blob = tr.to_binary()
    back = Trajectory.from_binary(blob)
    assert np.array_equal(back.states, tr.states)
    assert len(blob) == 32 + 8 * len(tr) + 16 * tr.states.size


def test_cutoff_convergence():
    eq = registry("cnls1d")
    N = 6
    tr = solve(eq, data(eq, N, 0.5), 0.02, IntegratorCfg(1e-3, 2))
    lat = tr.lattice
    phi = data(eq, N, 1.0, seed=3).flat()
    one = cutoff_convergence(eq, tr, [np.ones(lat.size)], phi)
    assert one["values"] == [0.0]
    full = cutoff_convergence(eq, tr, [(np.abs(lat.freqs[:, 0]) <= N).astype(float)], phi)
    assert full["values"] == [0.0]
    rep = cutoff_convergence(eq, tr, [(np.abs(lat.freqs[:, 0]) <= k).astype(float)
                                      for k in range(0, N + 1)], phi)
    v = rep["values"]
    assert v[-1] == 0.0 and v[0] > 0
    assert rep["nonincreasing"]
