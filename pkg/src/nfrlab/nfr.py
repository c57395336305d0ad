"""Normal form reduction on a truncated lattice.

Generation ``j`` terms are sums over system trees with ``j`` nodes and over
index functions whose elements all lie in the box.  For one tree and one
assignment write ``phi^k`` for the phase at node ``k``, ``Phi^k`` for the
cumulative sum ``phi^1 + ... + phi^k`` and ``m`` for the product of the node
multipliers.  With ``P`` the product of the leaf factors and ``E`` the
factor ``exp(i t Phi^j)``, the kinds are

    top   (-1)^{j-1} E m P / prod_{k<j} (i Phi^k)     prefix non-resonant
    R     (-1)^{j-1} E m P / prod_{k<j} (i Phi^k)     last step resonant
    N0    (-1)^{j-1} E m P / prod_{k<=j} (i Phi^k)    last step non-resonant
    Rj    (-1)^j     E m P' / prod_{k<=j} (i Phi^k)   last step non-resonant

where ``P'`` sums over leaves with that leaf's factor replaced by the
remainder.  ``Pj`` is ``(-1)^j`` times the ``N0`` summand weighted by
``sum_a <n_a>^{2 alpha}`` over the leaves.

Every element of an assignment lies in the box.  The truncated system
defines ``w_n`` only for ``n`` in the box, so substituting the equation at a
leaf develops that leaf only over box frequencies; with this convention the
generation equations are exact identities for the truncated flow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .dynamics import Trajectory, nonlinear_fft
from .lattice import SeqState, TruncatedLattice
from .model import EquationSpec, remainder_eval
from .trees import DEFAULT_CAP, Tree, enumerate_system_trees, expand_node

__all__ = [
    "ResonanceRule",
    "PhaseChain",
    "GenTerm",
    "ResourceCapError",
    "classify",
    "Generation",
    "build_generation",
    "eval_term",
    "generation_equation",
    "limit_equation_tail",
    "expand_structure",
    "KINDS",
]

KINDS = ("NR", "N0", "Rj", "NJ", "Pj")
ASSIGNMENT_CAP = 10 ** 8


class ResourceCapError(RuntimeError):
    """The requested hierarchy exceeds the assignment cap."""


@dataclass(frozen=True)
class ResonanceRule:
    variant: str      # "A" or "B"
    M: float

    def __post_init__(self):
        if self.variant not in ("A", "B"):
            raise ValueError(f"variant must be 'A' or 'B', got {self.variant!r}")
        if not self.M >= 1:
            raise ValueError(f"M must be >= 1, got {self.M}")

    def step_nr(self, k: int, cur, prev):
        """Non-resonance at step ``k`` given ``Phi^k`` and ``Phi^{k-1}``."""
        cur = np.abs(np.asarray(cur, dtype=np.float64))
        if self.variant == "A":
            if k == 1:
                return cur > 16.0 * self.M
            return cur > 16.0 * np.abs(np.asarray(prev, dtype=np.float64))
        return cur > (2.0 ** k) * self.M

    def prefix_floor(self, k: int) -> float:
        """Lower bound for ``|Phi^k|`` along a non-resonant prefix."""
        if self.variant == "A":
            return 16.0 * self.M * 16.0 ** (k - 1)
        return (2.0 ** k) * self.M


@dataclass(frozen=True)
class PhaseChain:
    phis: tuple

    @property
    def cumulative(self) -> tuple:
        out, acc = [], 0.0
        for p in self.phis:
            acc = acc + p
            out.append(acc)
        return tuple(out)

    @property
    def J(self) -> int:
        return len(self.phis)


def classify(rule: ResonanceRule, chain: PhaseChain) -> str:
    """``"Resonant"``, ``"NonResonant"`` or ``"Neither"``."""
    if chain.J < 1:
        raise ValueError("chain must have length >= 1")
    cum = (0.0,) + chain.cumulative
    for k in range(1, chain.J):
        if not rule.step_nr(k, cum[k], cum[k - 1]):
            return "Neither"
    return "NonResonant" if rule.step_nr(chain.J, cum[chain.J], cum[chain.J - 1]) else "Resonant"


@dataclass(frozen=True)
class GenTerm:
    kind: str
    J: int
    tree: Tree | None = None
    substituted_leaf: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.J < 1:
            raise ValueError("J must be >= 1")

    @property
    def sign(self) -> int:
        odd = self.kind in ("Rj", "Pj")
        return (-1) ** self.J if odd else (-1) ** (self.J - 1)

    @property
    def denominators(self) -> int:
        return self.J - 1 if self.kind in ("NR", "NJ") else self.J


# ---------------------------------------------------------------------------
# per-tree tables

@dataclass
class _Block:
    tree: Tree
    root: np.ndarray        # flat root index per row
    leaf_idx: np.ndarray    # (rows, leaves) flat indices
    leaf_comp: tuple
    phit: np.ndarray        # Phi^J
    base: np.ndarray        # sign-free m / prod_{k<J} (i Phi^k)
    resonant: np.ndarray    # last step resonant


@dataclass
class Generation:
    """All assignments of generation ``J`` with a non-resonant prefix."""

    eq: EquationSpec
    lattice: TruncatedLattice
    rule: ResonanceRule
    J: int
    component: int
    blocks: list = field(default_factory=list)

    @property
    def rows(self) -> int:
        return sum(b.root.size for b in self.blocks)

    @property
    def trees(self) -> list:
        return [b.tree for b in self.blocks]

    def evaluate(self, flat: np.ndarray, t: float, kinds=("NJ",), remainder=None,
                 alpha: float | None = None, trees=None, phase_factor=None) -> dict:
        """Per-root values over the flat box for each requested kind.

        ``flat`` has shape ``(c, size)``; ``remainder`` likewise (kind Rj).
        ``phase_factor(Phi)`` replaces ``exp(i t Phi)`` (quadrature weights).
        """
        size = self.lattice.size
        J = self.J
        out = {k: np.zeros(size, dtype=np.complex128) for k in kinds}
        if "Rj" in kinds and remainder is None:
            raise ValueError("kind Rj needs the remainder state")
        if "Pj" in kinds and alpha is None:
            raise ValueError("kind Pj needs alpha")
        s_top = (-1) ** (J - 1)
        for b in self.blocks:
            if trees is not None and b.tree not in trees:
                continue
            if b.root.size == 0:
                continue
            factors = [flat[c][b.leaf_idx[:, a]] for a, c in enumerate(b.leaf_comp)]
            P = _product(factors)
            g = b.base * (np.exp(1j * t * b.phit) if phase_factor is None
                          else phase_factor(b.phit))
            nr = ~b.resonant
            for kind in kinds:
                if kind == "NJ":
                    vals, rows = s_top * g * P, b.root
                elif kind == "NR":
                    vals, rows = s_top * (g * P)[b.resonant], b.root[b.resonant]
                elif kind == "N0":
                    vals = s_top * g[nr] * P[nr] / (1j * b.phit[nr])
                    rows = b.root[nr]
                elif kind == "Pj":
                    w = np.zeros(b.root.size)
                    for a in range(len(b.leaf_comp)):
                        w += self.lattice.brackets[b.leaf_idx[:, a]] ** (2 * alpha)
                    vals = -s_top * g[nr] * P[nr] * w[nr] / (1j * b.phit[nr])
                    rows = b.root[nr]
                else:  # Rj
                    subs = [remainder[c][b.leaf_idx[nr, a]] for a, c in enumerate(b.leaf_comp)]
                    Ps = _substituted_sum([f[nr] for f in factors], subs)
                    vals = -s_top * g[nr] * Ps / (1j * b.phit[nr])
                    rows = b.root[nr]
                out[kind] += np.bincount(rows, weights=vals.real, minlength=size)
                out[kind] += 1j * np.bincount(rows, weights=vals.imag, minlength=size)
        return out


def _product(factors):
    P = np.ones(factors[0].shape, dtype=np.complex128)
    for f in factors:
        P = P * f
    return P


def _substituted_sum(factors, subs):
    """``sum_a subs[a] prod_{b != a} factors[b]`` via prefix/suffix products."""
    L = len(factors)
    pre = [np.ones(factors[0].shape, dtype=np.complex128)]
    for f in factors[:-1]:
        pre.append(pre[-1] * f)
    out = np.zeros(factors[0].shape, dtype=np.complex128)
    suf = np.ones(factors[0].shape, dtype=np.complex128)
    for a in range(L - 1, -1, -1):
        out += pre[a] * subs[a] * suf
        suf = suf * factors[a]
    return out


def _build_block(eq, lat, rule, tree, roots, disp):
    J = tree.J
    N = lat.N
    radii = [N] * tree.n_elements
    F = np.zeros((roots.size, tree.n_elements, lat.d), dtype=np.int64)
    F[:, 0] = lat.freqs[roots]
    phit = np.zeros(roots.size)
    prev = np.zeros(roots.size)
    base = np.ones(roots.size, dtype=np.complex128)
    for k in range(1, J + 1):
        F, pr = expand_node(F, tree, k, radii)
        phit, base = phit[pr], base[pr]
        e = tree.nodes[k - 1]
        ch = list(tree.children[e])
        c = tree.iota[e]
        term = eq.terms[c][tree.kappa[k - 1]]
        idx = lat.flat_index(F[:, [e] + ch])
        phi = disp[c][idx[:, 0]].copy()
        for j, cj in enumerate(ch):
            phi -= disp[tree.iota[cj]][idx[:, j + 1]]
        m = term.multiplier(F[:, e], [F[:, cj] for cj in ch])
        prev = phit
        phit = phit + phi
        keep = m != 0
        if k < J:
            keep &= rule.step_nr(k, phit, prev)
            if np.any(keep):
                floor = np.min(np.abs(phit[keep]))
                assert floor > 0, "zero denominator on a non-resonant prefix"
                if rule.variant == "A":
                    assert floor > rule.prefix_floor(k), "prefix bound violated"
            base = np.where(keep, base * m / np.where(keep, 1j * phit, 1.0), 0)
        else:
            base = base * m
        F, phit, prev, base = F[keep], phit[keep], prev[keep], base[keep]
    res = ~rule.step_nr(J, phit, prev)
    if np.any(~res):
        assert np.min(np.abs(phit[~res])) > 0, "zero denominator in a non-resonant chain"
    leaves = tree.leaves
    idx = lat.flat_index(F[:, [0] + leaves]).astype(np.int64)
    return idx[:, 0], idx[:, 1:].astype(np.int32), phit, base, res


_CACHE: dict = {}


def build_generation(eq: EquationSpec, lattice: TruncatedLattice, rule: ResonanceRule, J: int,
                     component: int = 0, roots=None, cap: int = ASSIGNMENT_CAP,
                     tree_cap: int = DEFAULT_CAP) -> Generation:
    """Tables of every generation ``J`` assignment with a non-resonant prefix."""
    if J < 1:
        raise ValueError("J must be >= 1")
    key = (id(eq), eq.name, lattice, rule, J, component,
           None if roots is None else tuple(np.asarray(roots).tolist()))
    if key in _CACHE:
        return _CACHE[key]
    # worst case count before pruning: per node one free choice per extra child
    worst = 0
    trees = enumerate_system_trees(eq.term_children(), component, J, tree_cap)
    for tr in trees:
        free = sum(len(tr.children[e]) - 1 for e in tr.nodes)
        worst += lattice.size ** (free + 1)
    if worst > cap:
        raise ResourceCapError(f"generation {J} needs up to {worst} assignments, cap is {cap}")
    roots = np.arange(lattice.size) if roots is None else np.asarray(roots)
    disp = eq.disp_table(lattice)
    gen = Generation(eq, lattice, rule, J, component)
    for tr in trees:
        parts = [_build_block(eq, lattice, rule, tr, np.atleast_1d(r), disp) for r in roots]
        cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
        comps = tuple(tr.iota[a] for a in tr.leaves)
        gen.blocks.append(_Block(tr, cat[0], cat[1], comps, cat[2], cat[3], cat[4]))
    _CACHE[key] = gen
    return gen


# ---------------------------------------------------------------------------
# single evaluations

def eval_term(term: GenTerm | str, eq: EquationSpec, state: SeqState, t: float,
              rule: ResonanceRule, root=None, J: int | None = None, component: int = 0,
              remainder: SeqState | None = None, alpha: float | None = None):
    """Value of one kind of generation ``J`` term.

    ``term`` is a :class:`GenTerm` (its tree, if set, restricts the sum) or
    a kind name together with ``J``.  Returns the value at ``root``, or the
    whole flat array when ``root`` is ``None``.  For kind Rj the remainder
    is computed from ``state`` unless given.
    """
    if isinstance(term, str):
        if J is None:
            raise ValueError("J is required with a kind name")
        term = GenTerm(term, J)
    lat = state.lattice
    gen = build_generation(eq, lat, rule, term.J, component)
    flat = state.flat()
    rem = None
    if term.kind == "Rj":
        rem = (remainder if remainder is not None else remainder_eval(eq, state, t)).flat()
    trees = None if term.tree is None else [term.tree]
    val = gen.evaluate(flat, t, (term.kind,), rem, alpha, trees)[term.kind]
    if root is None:
        return val
    return complex(val[int(lat.flat_index(np.atleast_1d(root)))])


# ---------------------------------------------------------------------------
# generation and limit equations

def _filon_ab(theta):
    """``int_0^1 e^{i theta s} (1-s) ds`` and ``int_0^1 e^{i theta s} s ds``."""
    theta = np.asarray(theta, dtype=np.float64)
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    B = e / (1j * th) + (e - 1) / th ** 2
    A = (e - 1) / (1j * th) - B
    t2 = theta * theta
    A = np.where(small, 0.5 + 1j * theta / 6 - t2 / 24, A)
    B = np.where(small, 0.5 + 1j * theta / 3 - t2 / 8, B)
    return A, B


def _filon_factor(times, k):
    """Phase factor giving the piecewise-linear Filon weight of sample ``k``."""
    K = times.size - 1
    h = float(times[1] - times[0])
    tk = float(times[k])

    def factor(phit):
        A, B = _filon_ab(phit * h)
        w = np.zeros(phit.shape, dtype=np.complex128)
        if k < K:
            w += A
        if k > 0:
            w += np.exp(-1j * phit * h) * B
        return h * np.exp(1j * tk * phit) * w
    return factor


def _simpson_weights(times):
    K = times.size
    eye = np.eye(K)
    return simpson(eye, x=times, axis=0)


def _sample_pieces(eq, traj, i, gens, component, kinds, phase_factor=None):
    flat = traj.flat[i]
    t = float(traj.times[i])
    rem = remainder_eval(eq, traj.state(i), t).flat() if eq.has_remainder() else None
    out = {}
    for j, gen in enumerate(gens, start=1):
        kd = tuple(k for k in kinds if k != "Rj" or rem is not None)
        out[j] = gen.evaluate(flat, t, kd, rem, phase_factor=phase_factor)
    return out, (None if rem is None else rem[component])


def _integrals(eq, traj: Trajectory, rule, J, component, upto, method="simpson"):
    """Time integrals over ``[0, t_upto]`` of every piece up to generation ``J``.

    Returns ``(ints, errs, ends)``: ``ints[kind]`` and ``errs[kind]`` have
    shape ``(J+1, size)`` (row 0 of ``Rj`` is the remainder itself), and
    ``ends`` holds the N0 values at the first and last sample.  The error is
    the difference to the same rule on every other sample, or to the
    trapezoid rule when halving is impossible.
    """
    if upto < 2:
        raise ValueError("quadrature needs at least 3 samples")
    if method not in ("simpson", "filon"):
        raise ValueError(f"unknown quadrature {method!r}")
    lat = traj.lattice
    size = lat.size
    times = traj.times[: upto + 1]
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("quadrature needs a uniform time grid")
    gens = [build_generation(eq, lat, rule, j, component) for j in range(1, J + 1)]
    kinds = ("NR", "NJ", "Rj")
    halvable = upto % 2 == 0 and upto >= 4
    coarse = times[::2]

    def zeros():
        return {k: np.zeros((J + 1, size), dtype=np.complex128) for k in kinds}

    ints, alt = zeros(), zeros()
    ends = np.zeros((J + 1, 2, size), dtype=np.complex128)
    trap = np.trapezoid(np.eye(upto + 1), x=times, axis=0)
    trap2 = np.trapezoid(np.eye(coarse.size), x=coarse, axis=0)
    if method == "simpson":
        w = _simpson_weights(times)
        w2 = _simpson_weights(coarse) if halvable else trap
    for i in range(upto + 1):
        if method == "simpson":
            vals, rem = _sample_pieces(eq, traj, i, gens, component, kinds + ("N0",))
            wi = w[i]
            wa = (w2[i // 2] if i % 2 == 0 else 0.0) if halvable else w2[i]
            for j in range(1, J + 1):
                for k in kinds:
                    if k in vals[j]:
                        ints[k][j] += wi * vals[j][k]
                        alt[k][j] += wa * vals[j][k]
        else:
            vals, rem = _sample_pieces(eq, traj, i, gens, component, kinds,
                                       _filon_factor(times, i))
            if halvable and i % 2 == 0:
                vals2, _ = _sample_pieces(eq, traj, i, gens, component, kinds,
                                          _filon_factor(coarse, i // 2))
            else:
                vals2 = None
            for j in range(1, J + 1):
                for k in kinds:
                    if k in vals[j]:
                        ints[k][j] += vals[j][k]
                        if vals2 is not None:
                            alt[k][j] += vals2[j][k]
            # the remainder carries no row phase: trapezoid rule
            wi = trap[i]
            wa = (trap2[i // 2] if i % 2 == 0 else 0.0) if halvable else trap[i]
            if i in (0, upto):
                t = float(times[i])
                for j, gen in enumerate(gens, start=1):
                    ends[j, 0 if i == 0 else 1] = gen.evaluate(traj.flat[i], t, ("N0",))["N0"]
        if method == "simpson" and i in (0, upto):
            for j in range(1, J + 1):
                ends[j, 0 if i == 0 else 1] = vals[j]["N0"]
        if rem is not None:
            ints["Rj"][0] += wi * rem
            alt["Rj"][0] += wa * rem
    if method == "filon" and not halvable:
        alt = ints
    errs = {k: np.abs(ints[k] - alt[k]) for k in kinds}
    return ints, errs, ends


def generation_equation(eq: EquationSpec, rule: ResonanceRule, J: int, trajectory: Trajectory,
                        t_index: int = -1, root=None, component: int = 0,
                        quadrature: str = "simpson") -> dict:
    """Both sides of the generation ``J`` equation at sample ``t_index``.

    Returns ``lhs``, ``boundary``, ``integral``, ``residual`` and
    ``quad_err`` (flat arrays, or scalars at ``root``) plus ``t``.
    """
    traj = trajectory
    if len(traj) < 3:
        raise ValueError("Simpson quadrature needs at least 3 samples")
    upto = t_index % len(traj)
    ints, errs, ends = _integrals(eq, traj, rule, J, component, upto, quadrature)
    flats = traj.flat
    lhs = flats[upto, component] - flats[0, component]
    boundary = np.zeros_like(lhs)
    integral = ints["Rj"][0].copy()
    err = errs["Rj"][0].copy()
    for j in range(1, J):
        boundary += ends[j, 1] - ends[j, 0]
        integral += ints["NR"][j] + ints["Rj"][j]
        err += errs["NR"][j] + errs["Rj"][j]
    integral += ints["NJ"][J]
    err += errs["NJ"][J]
    residual = lhs - boundary - integral
    res = {"t": float(traj.times[upto]), "lhs": lhs, "boundary": boundary, "integral": integral,
           "residual": residual, "quad_err": err}
    if root is not None:
        i = int(traj.lattice.flat_index(np.atleast_1d(root)))
        res = {k: (v if k == "t" else float(v[i]) if k == "quad_err" else complex(v[i]))
               for k, v in res.items()}
    return res


def _l2s(v, lat, s):
    return float(np.sqrt(np.sum(lat.brackets ** (2 * s) * np.abs(v) ** 2)))


def limit_equation_tail(eq: EquationSpec, rule: ResonanceRule, Jmax: int, trajectory: Trajectory,
                        t_index: int = -1, component: int = 0, s: float = 0.0,
                        x_norm=None, quadrature: str = "simpson") -> list:
    """Per-generation contributions to the limit equation at sample ``t_index``.

    For ``j = 1..Jmax`` reports the ``l^2_s`` norms of the boundary term at
    ``t``, of the time integrals of the resonant and remainder-substituted
    terms, and the ``x_norm`` of the integrated top term.  ``x_norm``
    defaults to the sup norm.
    """
    traj = trajectory
    lat = traj.lattice
    upto = t_index % len(traj)
    if x_norm is None:
        x_norm = lambda v: float(np.max(np.abs(v)))  # noqa: E731
    ints, errs, ends = _integrals(eq, traj, rule, Jmax, component, upto, quadrature)
    rows = []
    for j in range(1, Jmax + 1):
        rows.append({"j": j, "N0": _l2s(ends[j, 1], lat, s),
                     "NR_int": _l2s(ints["NR"][j], lat, s),
                     "R_prev_int": _l2s(ints["Rj"][j - 1], lat, s),
                     "NJ_int": x_norm(ints["NJ"][j]),
                     "NJ_quad_err": x_norm(errs["NJ"][j])})
    return rows


def expand_structure(eq: EquationSpec, J: int, component: int = 0,
                     cap: int = DEFAULT_CAP) -> dict:
    """Symbolic content of the generation ``J`` equation: trees with the
    kinds, signs and denominator counts of every term."""
    kinds_lower = ("NR", "N0", "Rj")
    terms = []
    for j in range(1, J + 1):
        for tr in enumerate_system_trees(eq.term_children(), component, j, cap):
            kinds = kinds_lower if j < J else ("NJ",)
            for kd in kinds:
                g = GenTerm(kd, j, tr)
                terms.append({"generation": j, "kind": kd, "sign": g.sign,
                              "denominators": g.denominators,
                              "leaves": len(tr.leaves), "tree": tr.dump(system=True)})
    return {"equation": eq.name, "J": J, "component": component,
            "remainder": eq.has_remainder(), "terms": terms}


def expand_json(eq: EquationSpec, J: int, component: int = 0) -> str:
    return json.dumps(expand_structure(eq, J, component), indent=1)


def nonlinearity(eq: EquationSpec, state: SeqState, t: float) -> np.ndarray:
    """Full main nonlinearity via the solver's FFT path, shape ``(c, size)``."""
    return nonlinear_fft(eq, state, t)
