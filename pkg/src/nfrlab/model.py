"""Equation registry in Fourier variables.

Every equation is written as a system

    d/dt w^c_n = sum_k sum_{n = n_1 + ... + n_q} e^{i t phi} m w^{c_1}_{n_1} ... w^{c_q}_{n_q}
                 + R^c[w]_n

in interaction-picture variables.  Conjugated unknowns are separate
components (``psi_n = conj(w_{-n})``), so no term ever conjugates a state.
All phases are separable:

    phi = disp_c(n) - sum_j disp_{c_j}(n_j),

which is what lets :mod:`nfrlab.dynamics` evaluate terms by FFT.  Each term
also carries its phase written in closed form, used only to cross-check the
dispersion table.

Multipliers factor as ``coef * out_factor(n) * prod_j child_factor_j(n_j)``.
A term may carry a constraint mask; the excluded tuples belong to the
remainder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import SeqState, TruncatedLattice, bracket
from .trees import expand_node, root_tree

__all__ = [
    "TermSpec",
    "EquationSpec",
    "GaugeState",
    "registry",
    "EQUATIONS",
    "remainder_eval",
    "gauge_forward",
    "advance_gauge",
    "dnls_phase",
    "zakharov_phase",
    "fnls_gamma_n",
    "term_tuples",
]

EQUATIONS = ("kdv", "cnls1d", "cnls2d", "fnls", "dnls", "zakharov")


def _sq(n):
    """Exact ``|n|^2`` for integer arrays of shape ``(..., d)``."""
    n = np.asarray(n, dtype=np.int64)
    out = n[..., 0] * n[..., 0]
    for k in range(1, n.shape[-1]):
        out += n[..., k] * n[..., k]
    return out


@dataclass(frozen=True)
class TermSpec:
    children: tuple                      # component of each ordered child
    coef: complex
    phase: Callable                      # closed form phase(n_out, ns)
    out_factor: Callable | None = None   # f(n_out) -> array
    child_factors: tuple = ()            # per child g(n_j) or None
    constraint: Callable | None = None   # mask(n_out, ns) -> bool, True = kept
    name: str = ""

    @property
    def degree(self) -> int:
        return len(self.children)

    def multiplier(self, n_out, ns) -> np.ndarray:
        """Multiplier on tuples; excluded tuples (constraint) get 0."""
        n_out = np.asarray(n_out)
        m = np.full(n_out.shape[:-1], self.coef, dtype=np.complex128)
        if self.out_factor is not None:
            m = m * self.out_factor(n_out)
        for g, nj in zip(self.child_factors, ns):
            if g is not None:
                m = m * g(np.asarray(nj))
        if self.constraint is not None:
            m = np.where(self.constraint(n_out, ns), m, 0.0)
        return m

    def kept(self, n_out, ns) -> np.ndarray:
        n_out = np.asarray(n_out)
        if self.constraint is None:
            return np.ones(n_out.shape[:-1], dtype=bool)
        return np.asarray(self.constraint(n_out, ns), dtype=bool)


class EquationSpec:
    """One registered equation.  Treated as immutable after construction."""

    def __init__(self, name, d, terms, dispersion, remainder=None, params=None,
                 conj_of=None, remainder_direct=None):
        self.name = name
        self.d = d
        self.terms = tuple(tuple(t) for t in terms)
        self.dispersion = tuple(dispersion)
        self._remainder = remainder
        self._remainder_direct = remainder_direct
        self.params = dict(params or {})
        self.conj_of = conj_of
        self._cache = {}

    @property
    def components(self) -> int:
        return len(self.terms)

    @property
    def degrees(self) -> list:
        return [[t.degree for t in tl] for tl in self.terms]

    @property
    def max_degree(self) -> int:
        return max(t.degree for tl in self.terms for t in tl)

    def term_children(self) -> list:
        return [[t.children for t in tl] for tl in self.terms]

    def disp(self, c: int, n) -> np.ndarray:
        return self.dispersion[c](np.asarray(n))

    def disp_table(self, lattice: TruncatedLattice) -> np.ndarray:
        """Dispersion of each component over the flat box, shape ``(c, size)``."""
        key = ("disp", lattice)
        if key not in self._cache:
            tab = np.stack([np.asarray(f(lattice.freqs), dtype=np.float64) * np.ones(lattice.size)
                            for f in self.dispersion])
            tab.setflags(write=False)
            self._cache[key] = tab
        return self._cache[key]

    def separable_phase(self, c: int, k: int, n_out, ns) -> np.ndarray:
        t = self.terms[c][k]
        val = self.disp(c, n_out).astype(np.float64)
        for cj, nj in zip(t.children, ns):
            val = val - self.disp(cj, nj)
        return val

    def has_remainder(self) -> bool:
        return self._remainder is not None

    def metadata(self, radius: int = 10) -> dict:
        """Name, dimension, components, degrees and the dispersion table."""
        lat = TruncatedLattice(self.d, radius)
        return {
            "name": self.name,
            "d": self.d,
            "components": self.components,
            "degrees": self.degrees,
            "params": self.params,
            "frequencies": lat.freqs.tolist(),
            "dispersion": [np.asarray(f(lat.freqs), dtype=float).tolist() for f in self.dispersion],
        }

    def metadata_json(self, radius: int = 10) -> str:
        return json.dumps(self.metadata(radius))

    def __repr__(self):
        return f"EquationSpec({self.name!r}, d={self.d}, components={self.components})"


# ---------------------------------------------------------------------------
# tuple tables on a lattice

def term_tuples(eq: EquationSpec, c: int, k: int, lattice: TruncatedLattice,
                roots=None, which: str = "all", closed_phase: bool = False):
    """Child tuples of term ``(c, k)`` with output and children in the box.

    Returns ``(out_idx, child_idx, phase, mult)`` as flat-index arrays.
    ``which`` is ``"all"``, ``"kept"`` (constraint holds) or ``"excluded"``.
    ``roots`` optionally restricts the output frequencies (flat indices).
    ``closed_phase`` uses the term's closed-form phase instead of the
    dispersion table.
    """
    term = eq.terms[c][k]
    q = term.degree
    tree = root_tree(q, c, k, term.children)
    if roots is None:
        roots = np.arange(lattice.size)
    roots = np.asarray(roots)
    F = np.zeros((roots.size, q + 1, lattice.d), dtype=np.int64)
    F[:, 0] = lattice.freqs[roots]
    F, _ = expand_node(F, tree, 1, [lattice.N] * (q + 1))
    n_out = F[:, 0]
    ns = [F[:, j + 1] for j in range(q)]
    if which != "all":
        keep = term.kept(n_out, ns)
        if which == "excluded":
            keep = ~keep
        F = F[keep]
        n_out = F[:, 0]
        ns = [F[:, j + 1] for j in range(q)]
    if closed_phase:
        phase = np.asarray(term.phase(n_out, ns), dtype=np.float64)
    else:
        phase = eq.separable_phase(c, k, n_out, ns)
    mult = term.multiplier(n_out, ns) if which != "excluded" else _raw_multiplier(term, n_out, ns)
    idx = lattice.flat_index(F)
    return idx[:, 0], idx[:, 1:], phase, mult


def _raw_multiplier(term: TermSpec, n_out, ns):
    m = np.full(np.asarray(n_out).shape[:-1], term.coef, dtype=np.complex128)
    if term.out_factor is not None:
        m = m * term.out_factor(n_out)
    for g, nj in zip(term.child_factors, ns):
        if g is not None:
            m = m * g(nj)
    return m


def excluded_table(eq: EquationSpec, c: int, k: int, lattice: TruncatedLattice):
    """Cached :func:`term_tuples` restricted to constraint-excluded tuples."""
    key = ("excluded", c, k, lattice)
    if key not in eq._cache:
        eq._cache[key] = term_tuples(eq, c, k, lattice, which="excluded")
    return eq._cache[key]


def sum_tuples(state: SeqState, t: float, children, table, out_size: int) -> np.ndarray:
    """``sum e^{i t phase} mult prod w`` over a tuple table, flat output."""
    out_idx, child_idx, phase, mult = table
    if out_idx.size == 0:
        return np.zeros(out_size, dtype=np.complex128)
    flat = state.flat()
    val = mult * np.exp(1j * t * phase)
    for j, cj in enumerate(children):
        val = val * flat[cj][child_idx[:, j]]
    return (np.bincount(out_idx, weights=val.real, minlength=out_size)
            + 1j * np.bincount(out_idx, weights=val.imag, minlength=out_size))


# ---------------------------------------------------------------------------
# closed-form phases

def dnls_phase(n1, n2, n3):
    """Phase in the original labelling ``n = n1 - n2 + n3``: ``2 (n2-n1)(n2-n3)``."""
    n1, n2, n3 = (np.asarray(x, dtype=np.int64) for x in (n1, n2, n3))
    return 2 * (n2 - n1) * (n2 - n3)


def zakharov_phase(n1, n2, n0, sign: int):
    """``Phi_pm = n1^2 - n2^2 pm <n0>``."""
    n1, n2, n0 = (np.asarray(x, dtype=np.int64) for x in (n1, n2, n0))
    return (n1 * n1 - n2 * n2) + sign * bracket(n0 * n0)


def fnls_gamma_n(n1, n2, n3, alpha: float):
    """Membership in the main set, original labelling ``n = n1 - n2 + n3``."""
    n1, n2, n3 = (np.asarray(x, dtype=np.int64) for x in (n1, n2, n3))
    r = np.abs(n2).astype(float) ** (1.0 - alpha)
    return (np.abs(n2 - n1) > r) & (np.abs(n2 - n3) > r)


# ---------------------------------------------------------------------------
# registry entries

def _first(n):
    return np.asarray(n)[..., 0]


def _kdv():
    def phase(n, ns):
        return 3 * _first(n) * _first(ns[0]) * _first(ns[1])

    term = TermSpec((0, 0), 1j, phase, out_factor=lambda n: _first(n).astype(float), name="u u_x")
    disp = [lambda n: _first(n).astype(np.int64) ** 3]
    return EquationSpec("kdv", 1, [[term]], disp, params={})


def _cnls(d: int, sign: str):
    c = -1j if sign == "+" else 1j

    def big_phi(n, ns):
        return _sq(n) - _sq(ns[0]) + _sq(ns[1]) - _sq(ns[2])

    t_w = TermSpec((0, 1, 0), c, big_phi, name="w psi w")
    t_p = TermSpec((1, 0, 1), np.conj(c), lambda n, ns: -big_phi(n, ns), name="psi w psi")
    disp = [lambda n: _sq(n), lambda n: -_sq(n)]
    return EquationSpec(f"cnls{d}d", d, [[t_w], [t_p]], disp,
                        params={"sign": sign, "c": [c.real, c.imag]}, conj_of=(1, 0))


def _fnls(alpha: float, sign: str):
    if not 0.5 < alpha < 1.0:
        raise ValueError(f"fnls needs 1/2 < alpha < 1, got {alpha}")
    c = -1j if sign == "+" else 1j

    def pw(n):
        return np.abs(_first(n)).astype(float) ** (2 * alpha)

    def big_phi(n, ns):
        # original labelling n2 = -n2'
        return pw(n) - pw(ns[0]) + pw(ns[1]) - pw(ns[2])

    def keep(n, ns):
        return fnls_gamma_n(_first(ns[0]), -_first(ns[1]), _first(ns[2]), alpha)

    t_w = TermSpec((0, 1, 0), c, lambda n, ns: -big_phi(n, ns), constraint=keep, name="w psi w")
    t_p = TermSpec((1, 0, 1), np.conj(c), big_phi, constraint=keep, name="psi w psi")
    disp = [lambda n: -pw(n), lambda n: pw(n)]
    eq = EquationSpec("fnls", 1, [[t_w], [t_p]], disp, params={"alpha": alpha, "sign": sign},
                      conj_of=(1, 0))
    eq._remainder = _fnls_remainder
    eq._remainder_direct = _fnls_remainder
    return eq


def _fnls_remainder(eq, state, t, lattice):
    out = np.zeros((eq.components, lattice.size), dtype=np.complex128)
    for c, tl in enumerate(eq.terms):
        for k, term in enumerate(tl):
            tab = excluded_table(eq, c, k, lattice)
            out[c] += sum_tuples(state, t, term.children, tab, lattice.size)
    return out


def _dnls(sign: str):
    if sign != "+":
        raise ValueError("only the '+' variant of the gauged DNLS is implemented")

    def mid(n):
        return _first(n).astype(float)

    def keep(n, ns):
        a, b, cc = (_first(x) for x in ns)
        return (a + b != 0) & (b + cc != 0)

    def ph_w(n, ns):
        a, b, cc = (_first(x) for x in ns)
        return 2 * (a + b) * (b + cc)

    t_w = TermSpec((0, 1, 0), -1j, ph_w, child_factors=(None, mid, None), constraint=keep,
                   name="i n2 w conj(w) w")
    t_p = TermSpec((1, 0, 1), -1j, lambda n, ns: -ph_w(n, ns), child_factors=(None, mid, None),
                   constraint=keep, name="conjugate")
    disp = [lambda n: _sq(n), lambda n: -_sq(n)]
    eq = EquationSpec("dnls", 1, [[t_w], [t_p]], disp, params={"sign": sign}, conj_of=(1, 0))
    eq._remainder = lambda eq_, st, t, lat: _dnls_remainder(st, t, lat, direct=False)
    eq._remainder_direct = lambda eq_, st, t, lat: _dnls_remainder(st, t, lat, direct=True)
    return eq


def _zakharov():
    def jb(n):
        return bracket(_sq(n))

    def w_factor(n):
        return _sq(n) / jb(n)

    # components: 0 psi+, 1 psi-, 2 w+, 3 w-; children ordered (w, psi) or (psi, psi)
    def ph(sign_out, sign_phi):
        def f(n, ns):
            return sign_out * zakharov_phase(_first(n), _first(ns[1]), _first(ns[0]), sign_phi)
        return f

    def ph_w(sign_out):
        def f(n, ns):
            # out n0, children (psi at n1, psi at n2); Phi_+ with the psi^{-/+} child first
            return sign_out * zakharov_phase(_first(ns[0]), _first(ns[1]), _first(n), 1)
        return f

    terms = [
        [TermSpec((2, 0), -0.5j, ph(1, -1), name="w+ psi+"),
         TermSpec((3, 0), -0.5j, ph(1, 1), name="w- psi+")],
        [TermSpec((3, 1), 0.5j, ph(-1, -1), name="w- psi-"),
         TermSpec((2, 1), 0.5j, ph(-1, 1), name="w+ psi-")],
        [TermSpec((1, 0), -1j, ph_w(1), out_factor=w_factor, name="psi- psi+")],
        [TermSpec((0, 1), 1j, ph_w(-1), out_factor=w_factor, name="psi+ psi-")],
    ]
    disp = [lambda n: _sq(n), lambda n: -_sq(n), jb, lambda n: -jb(n)]
    eq = EquationSpec("zakharov", 1, terms, disp, params={})
    eq._remainder = _zakharov_remainder
    eq._remainder_direct = _zakharov_remainder
    return eq


def _zakharov_remainder(eq, state, t, lattice):
    out = np.zeros((4, lattice.size), dtype=np.complex128)
    jb = lattice.brackets
    wp, wm = state.flat(2), state.flat(3)
    out[2] = 1j * (wp + np.exp(2j * jb * t) * wm) / (2 * jb)
    out[3] = -1j * (wm + np.exp(-2j * jb * t) * wp) / (2 * jb)
    return out


def registry(name: str, **params) -> EquationSpec:
    """Look up an equation by name.

    ``cnls1d``/``cnls2d`` (or ``cnls`` with ``d``) and ``fnls`` take ``sign``;
    ``fnls`` needs ``alpha`` in (1/2, 1).
    """
    sign = params.get("sign", "+")
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    if name == "kdv":
        return _kdv()
    if name in ("cnls1d", "cnls2d", "cnls"):
        d = params.get("d", 2 if name == "cnls2d" else 1)
        return _cnls(int(d), sign)
    if name == "fnls":
        return _fnls(float(params.get("alpha", 0.75)), sign)
    if name == "dnls":
        return _dnls(sign)
    if name == "zakharov":
        return _zakharov()
    raise ValueError(f"unknown equation {name!r}; known: {', '.join(EQUATIONS)}")


# ---------------------------------------------------------------------------
# remainder

def remainder_eval(eq: EquationSpec, state: SeqState, t: float, direct: bool = False) -> SeqState:
    """Remainder ``R[w](t)`` on the truncated lattice (zero if absent).

    ``direct`` selects the convolution oracle instead of FFT where the two
    differ (DNLS).
    """
    lat = state.lattice
    fn = eq._remainder_direct if direct else eq._remainder
    if fn is None:
        return SeqState.zeros(lat, state.components)
    return SeqState(lat, fn(eq, state, t, lat))


def _grid_len(N: int, deg: int) -> int:
    """Smallest grid with no aliasing into ``|n| <= N`` for degree ``deg``."""
    return (deg + 1) * N + 1


def _to_grid(coef: np.ndarray, N: int, L: int) -> np.ndarray:
    g = np.zeros(L, dtype=np.complex128)
    g[np.arange(-N, N + 1) % L] = coef
    return np.fft.ifft(g) * L


def _from_grid(vals: np.ndarray, N: int) -> np.ndarray:
    L = vals.size
    return (np.fft.fft(vals) / L)[np.arange(-N, N + 1) % L]


def _conv_trunc(seqs: Sequence[np.ndarray], N: int) -> np.ndarray:
    """Exact linear convolution of box sequences, output truncated to the box."""
    acc = seqs[0]
    for s in seqs[1:]:
        acc = np.convolve(acc, s)
    q = len(seqs)
    centre = q * N
    return acc[centre - N: centre + N + 1]


def _dnls_quintic_terms(w_hat: np.ndarray, N: int, direct: bool) -> np.ndarray:
    """Fourier coefficients of ``N[w]`` on the box."""
    mu = float(np.sum(np.abs(w_hat) ** 2))
    if direct:
        wc = np.conj(w_hat[::-1])                      # coefficients of conj(w)
        quint = _conv_trunc([w_hat, w_hat, w_hat, wc, wc], N)
        cub = _conv_trunc([w_hat, w_hat, wc], N)
        full4 = np.convolve(np.convolve(w_hat, w_hat), np.convolve(wc, wc))
        pc4 = float(full4[4 * N].real)
    else:
        L = _grid_len(N, 5)
        w = _to_grid(w_hat, N, L)
        a2 = np.abs(w) ** 2
        quint = _from_grid(a2 * a2 * w, N)
        cub = _from_grid(a2 * w, N)
        pc4 = float(np.mean(a2 * a2))
    return 0.5j * quint - 1j * mu * cub + 1j * (mu * mu - 0.5 * pc4) * w_hat


def _dnls_remainder_single(w: np.ndarray, t: float, lattice: TruncatedLattice, direct: bool):
    n = lattice.freqs[:, 0].astype(float)
    n2 = lattice.norm_sq.astype(float)
    w_hat = np.exp(-1j * t * n2) * w
    R = -1j * n * np.abs(w) ** 2 * w
    R = R + np.exp(1j * t * n2) * _dnls_quintic_terms(w_hat, lattice.N, direct)
    return R


def _dnls_remainder(state: SeqState, t, lattice, direct):
    if lattice.d != 1:
        raise ValueError("dnls is one-dimensional")
    neg = lattice.negation_index()
    out = np.empty((2, lattice.size), dtype=np.complex128)
    out[0] = _dnls_remainder_single(state.flat(0), t, lattice, direct)
    w_from_psi = np.conj(state.flat(1)[neg])
    out[1] = np.conj(_dnls_remainder_single(w_from_psi, t, lattice, direct)[neg])
    return out


# ---------------------------------------------------------------------------
# gauge transform

@dataclass(frozen=True)
class GaugeState:
    mu_integral: float = 0.0
    mu: float = 0.0


def advance_gauge(gauge: GaugeState, mu_new: float, dt: float) -> GaugeState:
    """Trapezoidal update of ``int_0^t mu``."""
    return GaugeState(gauge.mu_integral + 0.5 * dt * (gauge.mu + mu_new), mu_new)


def gauge_forward(u: SeqState, gauge: GaugeState, component: int = 0):
    """``w = tau_{2 mu} (e^{-i J(u)} u)`` on the collocation grid of the box.

    ``J(f) = d_x^{-1} P_{!=c} |f|^2``.  The pointwise product is taken on the
    ``2N+1`` point grid, which is unitary, so the l^2 norm is preserved
    exactly up to rounding.  Returns ``(w, mu)`` where ``mu`` is the mean of
    ``|v|^2`` (equal to the mean of ``|u|^2``).
    """
    lat = u.lattice
    if lat.d != 1:
        raise ValueError("the gauge transform is one-dimensional")
    N, L = lat.N, lat.side
    k = np.arange(-N, N + 1)
    pos = k % L
    g = np.zeros(L, dtype=np.complex128)
    g[pos] = u.flat(component)
    ux = np.fft.ifft(g) * L
    dens = np.fft.fft(np.abs(ux) ** 2) / L
    mu = float(dens[0].real)
    jhat = np.zeros(L, dtype=np.complex128)
    nz = pos[k != 0]
    jhat[nz] = dens[nz] / (1j * k[k != 0])
    Jx = np.fft.ifft(jhat).real * L
    vx = np.exp(-1j * Jx) * ux
    v_hat = (np.fft.fft(vx) / L)[pos]
    w_hat = np.exp(-2j * k * gauge.mu_integral) * v_hat
    data = np.array(u.flat(), copy=True)
    data[component] = w_hat
    return SeqState(lat, data), mu
