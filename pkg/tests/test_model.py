import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfrlab.lattice import SeqState, TruncatedLattice, norm_l2s, random_state
from nfrlab.model import (EQUATIONS, GaugeState, advance_gauge, dnls_phase, fnls_gamma_n,
                          gauge_forward, registry, remainder_eval, term_tuples, zakharov_phase)

from conftest import philox

GOLDEN = Path(__file__).parent / "golden"


def get(name):
    return registry(name, alpha=0.75) if name == "fnls" else registry(name)


def test_kdv_phase_example():
    eq = registry("kdv")
    t = eq.terms[0][0]
    n, ns = np.array([[3]]), [np.array([[1]]), np.array([[2]])]
    assert t.phase(n, ns)[0] == 18 == 27 - 1 - 8
    assert eq.separable_phase(0, 0, n, ns)[0] == 18
    assert t.multiplier(n, ns)[0] == 3j


def test_dnls_phase_example():
    assert dnls_phase(3, 1, 2) == 4 == 16 - 9 + 1 - 4


def test_zakharov_phase_example():
    assert zakharov_phase(2, 1, 1, 1) == pytest.approx(3 + math.sqrt(2), abs=1e-15)


def test_dnls_factorization_exhaustive():
    r = np.arange(-50, 51)
    n1, n2, n3 = np.meshgrid(r, r, r, indexing="ij")
    n = n1 - n2 + n3
    assert np.array_equal(n * n - n1 * n1 + n2 * n2 - n3 * n3, dnls_phase(n1, n2, n3))


@pytest.mark.parametrize("name", EQUATIONS)
def test_phase_separability(name):
    eq = get(name)
    lat = TruncatedLattice(eq.d, 6 if eq.d == 1 else 3)
    g = philox(3)
    for c in range(eq.components):
        for k, term in enumerate(eq.terms[c]):
            out, ch, _, _ = term_tuples(eq, c, k, lat)
            pick = g.choice(out.size, size=min(10 ** 4, out.size), replace=False)
            n_out = lat.freqs[out[pick]]
            ns = [lat.freqs[ch[pick, j]] for j in range(term.degree)]
            closed = np.asarray(term.phase(n_out, ns), dtype=float)
            np.testing.assert_allclose(eq.separable_phase(c, k, n_out, ns), closed, atol=1e-9)


def test_dispersion_conventions():
    n = np.arange(-5, 6)[:, None]
    assert np.array_equal(registry("kdv").disp(0, n), n[:, 0] ** 3)
    cn = registry("cnls1d")
    assert np.array_equal(cn.disp(0, n), n[:, 0] ** 2)
    assert np.array_equal(cn.disp(1, n), -n[:, 0] ** 2)
    fn = registry("fnls", alpha=0.75)
    np.testing.assert_allclose(np.abs(fn.disp(0, n)), np.abs(n[:, 0]) ** 1.5)
    z = registry("zakharov")
    np.testing.assert_allclose(z.disp(2, n), np.sqrt(1 + n[:, 0] ** 2))


def test_cnls_relabeling():
    eq = registry("cnls1d")
    t = eq.terms[0][0]
    n1, n2, n3 = np.array([[2]]), np.array([[-1]]), np.array([[3]])
    n = n1 + n2 + n3
    assert t.phase(n, [n1, n2, n3])[0] == 16 - 4 + 1 - 9


def test_fnls_partition():
    alpha = 0.75
    eq = registry("fnls", alpha=alpha)
    for N in (5, 12, 20):
        lat = TruncatedLattice(1, N)
        full = term_tuples(eq, 0, 0, lat)[0].size
        kept = term_tuples(eq, 0, 0, lat, which="kept")[0].size
        excl = term_tuples(eq, 0, 0, lat, which="excluded")[0].size
        assert kept + excl == full
    r = np.arange(-20, 21)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    main = fnls_gamma_n(a, b, c, alpha)
    rest = (np.abs(b - a) <= np.abs(b) ** 0.25) | (np.abs(b - c) <= np.abs(b) ** 0.25)
    assert np.array_equal(main, ~rest)


def test_fnls_alpha_range():
    with pytest.raises(ValueError):
        registry("fnls", alpha=0.5)
    with pytest.raises(ValueError):
        registry("fnls", alpha=1.0)
    with pytest.raises(ValueError):
        registry("heat")


def test_zakharov_factorization_ratio():
    r = np.arange(-200, 201)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    n0 = n1 - n2
    lo, hi = np.inf, 0.0
    for sign in (1, -1):
        phi = zakharov_phase(n1, n2, n0, sign)
        ok = (n0 != 0) & (n1 + n2 + sign * np.sign(n0) != 0)
        ratio = np.sqrt(1 + phi ** 2) / (np.sqrt(1 + n0 ** 2.0) * np.sqrt(1 + (n1 + n2) ** 2.0))
        lo, hi = min(lo, ratio[ok].min()), max(hi, ratio[ok].max())
    assert 1 / 64 <= lo <= hi <= 64


def test_metadata_golden():
    want = json.loads((GOLDEN / "model_metadata.json").read_text())
    for name in EQUATIONS:
        got = json.loads(get(name).metadata_json(10))
        assert got == want[name]


def test_kdv_remainder_zero(rng):
    lat = TruncatedLattice(1, 5)
    st_ = random_state(lat, rng)
    assert not np.any(remainder_eval(registry("kdv"), st_, 0.3).data)


def test_zakharov_remainder_example():
    lat = TruncatedLattice(1, 3)
    st_ = SeqState.delta(lat, 0, 1.0, components=4, component=2)
    R = remainder_eval(registry("zakharov"), st_, 0.0)
    i0 = lat.flat_index(np.array([0]))
    assert R.flat(3)[i0] == pytest.approx(-0.5j)
    assert R.flat(2)[i0] == pytest.approx(0.5j)
    assert not np.any(R.flat(0)) and not np.any(R.flat(1))


def _pair(lat, data0):
    neg = lat.negation_index()
    return SeqState(lat, np.stack([data0, np.conj(data0[neg])]))


def test_dnls_remainder_delta():
    lat = TruncatedLattice(1, 4)
    a = 0.7 - 0.2j
    d = np.zeros(lat.size, complex)
    d[lat.flat_index(np.array([1]))] = a
    st_ = _pair(lat, d)
    eq = registry("dnls")
    for direct in (False, True):
        R = remainder_eval(eq, st_, 0.0, direct=direct).flat(0)
        want = np.zeros(lat.size, complex)
        want[lat.flat_index(np.array([1]))] = -1j * abs(a) ** 2 * a
        np.testing.assert_allclose(R, want, atol=1e-14)


def test_dnls_remainder_fft_matches_direct(rng):
    lat = TruncatedLattice(1, 6)
    st_ = random_state(lat, rng, 0.8, components=2, conjugate_pair=True)
    eq = registry("dnls")
    a = remainder_eval(eq, st_, 0.37).data
    b = remainder_eval(eq, st_, 0.37, direct=True).data
    np.testing.assert_allclose(a, b, atol=1e-13 * np.abs(b).max())


def test_dnls_remainder_lipschitz_degree():
    # difference quotient grows at most like the fourth power of the size
    lat = TruncatedLattice(1, 6)
    eq = registry("dnls")
    g = philox(9)
    base = random_state(lat, g, 1.0, components=2, conjugate_pair=True)
    pert = random_state(lat, g, 1.0, components=2, conjugate_pair=True)
    rs = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    q = []
    for r in rs:
        x = base.scale(r)
        y = x + pert.scale(1e-6 * r)
        dR = remainder_eval(eq, x, 0.1).data - remainder_eval(eq, y, 0.1).data
        q.append(np.linalg.norm(dR) / np.linalg.norm(x.data - y.data))
    slope = np.polyfit(np.log(rs[-3:]), np.log(q[-3:]), 1)[0]
    assert slope <= 4.2


def test_gauge_constant_unchanged():
    lat = TruncatedLattice(1, 4)
    u = SeqState.delta(lat, 0, 0.8 + 0.3j)
    w, mu = gauge_forward(u, GaugeState(0.7, 0.0))
    np.testing.assert_allclose(w.data, u.data, atol=1e-15)
    assert mu == pytest.approx(abs(0.8 + 0.3j) ** 2)


def test_gauge_plane_wave():
    lat = TruncatedLattice(1, 4)
    u = SeqState.delta(lat, 1, 1.0)
    t = 0.3
    w, mu = gauge_forward(u, GaugeState(mu_integral=t, mu=1.0))
    assert mu == pytest.approx(1.0)
    assert w.flat(0)[lat.flat_index(np.array([1]))] == pytest.approx(np.exp(-2j * t), abs=1e-14)


def test_gauge_advance():
    g = GaugeState()
    assert g.mu_integral == 0.0
    g = advance_gauge(GaugeState(0.0, 1.0), 3.0, 0.5)
    assert g.mu_integral == 1.0 and g.mu == 3.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-2, 2))
def test_gauge_isometry(seed, mu_int):
    lat = TruncatedLattice(1, 7)
    u = random_state(lat, philox(seed), 1.3, decay=0.5)
    w, _ = gauge_forward(u, GaugeState(mu_int, 0.0))
    assert norm_l2s(w) == pytest.approx(norm_l2s(u), rel=1e-10)
