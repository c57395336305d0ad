"""Brute-force checks of the multilinear estimates and lattice point counts.

Every counting operation has two independently coded paths selected by a
``path`` argument; tests assert that they agree exactly.  Boundedness claims
are measured as growth across a geometric sweep of lattice sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum, isqrt

import numpy as np

from .lattice import TruncatedLattice, bracket
from .model import EquationSpec, term_tuples
from .trees import _box

__all__ = [
    "EstimateParams",
    "SupReport",
    "sup_weight_A1",
    "sup_weight_sweep",
    "circle_count",
    "max_circle_counts",
    "fit_exponent",
    "fnls_count",
    "fnls_max_count",
    "dnls_case_sums",
    "zakharov_weights",
    "zakharov_weight_check",
    "cnls_block_counts",
    "growth",
]


@dataclass(frozen=True)
class EstimateParams:
    s: float
    s1: float | None = None
    s2: float | None = None
    delta: float = 0.5
    mu: int | None = None

    def __post_init__(self):
        if not 0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 1/2]")
        if self.s1 is not None and self.s2 is not None and not self.s1 < self.s < self.s2:
            raise ValueError("need s1 < s < s2")


@dataclass
class SupReport:
    N: int
    sup_value: float
    argmax: tuple
    per_block: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"N": self.N, "supValue": self.sup_value, "argmax": list(self.argmax),
                "perDyadicBlock": {str(k): v for k, v in self.per_block.items()}}


def growth(values) -> float:
    """Relative increase between the last two entries."""
    a, b = float(values[-2]), float(values[-1])
    if a == 0:
        return 0.0 if b == 0 else float("inf")
    return b / a - 1.0


def fit_exponent(xs, ys) -> float:
    """Least squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# sup weights

def _a1_values(lat, out_idx, ns_idx, phase, mult, s):
    br = lat.brackets
    w = np.abs(mult) ** 2 * br[out_idx] ** (2 * s) / bracket(phase ** 2)
    for j in range(ns_idx.shape[1]):
        w = w / br[ns_idx[:, j]] ** (2 * s)
    return w


def sup_weight_A1(eq: EquationSpec, s: float, N: int, component: int = 0, term: int = 0,
                  order: str = "root", chunk: int = 16) -> SupReport:
    """``sup_n sum |m|^2 <n>^{2s} / (<phi> prod <n_j>^{2s})`` over the box.

    ``order="root"`` loops over output frequencies; ``order="leaf"`` loops
    over the first child and scatters into the outputs.
    """
    lat = TruncatedLattice(eq.d, N)
    tot = np.zeros(lat.size)
    if order == "root":
        for start in range(0, lat.size, chunk):
            roots = np.arange(start, min(start + chunk, lat.size))
            out, ch, ph, m = term_tuples(eq, component, term, lat, roots, "kept", closed_phase=True)
            tot += np.bincount(out, weights=_a1_values(lat, out, ch, ph, m, s), minlength=lat.size)
    elif order == "leaf":
        tspec = eq.terms[component][term]
        q = tspec.degree
        rest = _box(N, eq.d)
        if q > 2:
            grids = np.meshgrid(*([np.arange(lat.size)] * (q - 1)), indexing="ij")
            rest_idx = np.stack([g.ravel() for g in grids], axis=1)
        else:
            rest_idx = np.arange(lat.size)[:, None]
        rest_f = [lat.freqs[rest_idx[:, j]] for j in range(q - 1)]
        rest_sum = sum(rest_f)
        for i1 in range(lat.size):
            n1 = lat.freqs[i1]
            n = rest_sum + n1
            ok = lat.contains(n)
            if not np.any(ok):
                continue
            n_ok = n[ok]
            ns = [np.broadcast_to(n1, n_ok.shape)] + [f[ok] for f in rest_f]
            m = tspec.multiplier(n_ok, ns)
            ph = eq.separable_phase(component, term, n_ok, ns)
            out = lat.flat_index(n_ok)
            ch = np.column_stack([np.full(out.size, i1)] + [rest_idx[ok, j] for j in range(q - 1)])
            tot += np.bincount(out, weights=_a1_values(lat, out, ch, ph, m, s), minlength=lat.size)
        del rest
    else:
        raise ValueError(f"unknown order {order!r}")
    i = int(np.argmax(tot))
    blocks = {}
    kb = np.floor(np.log2(lat.brackets)).astype(int)
    for k in np.unique(kb):
        blocks[int(k)] = float(tot[kb == k].max())
    return SupReport(N, float(tot[i]), tuple(int(x) for x in lat.freqs[i]), blocks)


def sup_weight_sweep(eq: EquationSpec, s: float, Ns, **kw) -> list:
    return [sup_weight_A1(eq, s, N, **kw) for N in Ns]


# ---------------------------------------------------------------------------
# circles

def circle_count(center, mu: int, R: float, ball_center=(0, 0), path: str = "scan") -> int:
    """``#{n in Z^2 : |n - center|^2 = mu, |n - ball_center| <= R}``."""
    cx, cy = (int(v) for v in center)
    bx, by = (int(v) for v in ball_center)
    mu = int(mu)
    if mu < 0:
        return 0
    R2 = R * R
    if path == "scan":
        count = 0
        lo, hi = int(np.ceil(bx - R)), int(np.floor(bx + R))
        for x in range(lo, hi + 1):
            r = mu - (x - cx) ** 2
            if r < 0:
                continue
            y0 = isqrt(r)
            if y0 * y0 != r:
                continue
            for y in {cy + y0, cy - y0}:
                if (x - bx) ** 2 + (y - by) ** 2 <= R2:
                    count += 1
        return count
    if path == "grid":
        r = int(np.ceil(R))
        ys, xs = np.mgrid[by - r: by + r + 1, bx - r: bx + r + 1]
        on = (xs - cx) ** 2 + (ys - cy) ** 2 == mu
        inside = (xs - bx) ** 2 + (ys - by) ** 2 <= R2
        return int(np.count_nonzero(on & inside))
    raise ValueError(f"unknown path {path!r}")


def max_circle_counts(Rs) -> list:
    """For each ``R``: ``max_{mu <= R^2}`` of the centred circle count in the
    ball of radius ``R`` and the maximizing ``mu``."""
    out = []
    for R in Rs:
        r = int(np.floor(R))
        ys, xs = np.mgrid[-r: r + 1, -r: r + 1]
        sq = (xs * xs + ys * ys).ravel()
        sq = sq[sq <= R * R]
        hist = np.bincount(sq)
        mu = int(np.argmax(hist))
        out.append({"R": R, "max": int(hist[mu]), "mu": mu})
    return out


# ---------------------------------------------------------------------------
# fractional NLS pair counts

def _fnls_values(K, k_star, alpha, sign):
    k = np.arange(-K, K + 1)
    ell = k_star - k if sign > 0 else k - k_star
    ok = np.abs(k) <= np.abs(ell)
    k, ell = k[ok], ell[ok]
    a = 2 * alpha
    return np.abs(k) ** a + sign * np.abs(ell).astype(float) ** a


def fnls_count(K: int, mu_star: float, k_star: int, alpha: float, sign: int = 1,
               path: str = "vector") -> int:
    """Pairs ``(k, l)`` with ``k + sign*l = k_star``, ``|k| <= |l|``,
    ``|k| <= K`` and ``|k|^{2a} + sign |l|^{2a}`` in ``[mu_star - 1/2, mu_star + 1/2)``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    lo, hi = mu_star - 0.5, mu_star + 0.5
    if path == "vector":
        v = _fnls_values(K, k_star, alpha, sign)
        return int(np.count_nonzero((v >= lo) & (v < hi)))
    if path == "loops":
        a = 2 * alpha
        L = K + abs(k_star)
        count = 0
        for ell in range(-L, L + 1):
            for k in range(-K, K + 1):
                if k + sign * ell != k_star or abs(k) > abs(ell):
                    continue
                v = abs(k) ** a + sign * abs(ell) ** a
                if lo <= v < hi:
                    count += 1
        return count
    raise ValueError(f"unknown path {path!r}")


def _max_window(v) -> int:
    if v.size == 0:
        return 0
    v = np.sort(v)
    return int(np.max(np.searchsorted(v, v + 1.0, side="left") - np.arange(v.size)))


def fnls_max_count(K: int, alpha: float, sign: int = 1, k_range=None) -> dict:
    """Max over ``k_star`` and width-1 windows of :func:`fnls_count`.

    For ``sign=-1`` only ``k_star >= K^{1-alpha}`` enters.  The optimal
    half-open window starts at one of the values, so a sorted sweep is exact.
    """
    if k_range is None:
        k_range = range(0, 3 * K + 1)
    best, arg = 0, None
    floor = K ** (1 - alpha)
    for ks in k_range:
        if sign < 0 and ks < floor:
            continue
        c = _max_window(_fnls_values(K, ks, alpha, sign))
        if c > best:
            best, arg = c, ks
    return {"K": K, "max": best, "k_star": arg, "scaled": best / K ** (1 - alpha)}


# ---------------------------------------------------------------------------
# derivative NLS case sums

def _dnls_terms(s, kind, n, n1, n2, n3):
    b = lambda x: bracket(np.asarray(x, dtype=np.int64) ** 2)  # noqa: E731
    num = (n2.astype(float) ** 2) * b(n) ** (2 * s)
    d1 = np.abs(n2 - n1).astype(float)
    d3 = np.abs(n2 - n3).astype(float)
    den = b(n1) ** (2 * s) * b(n2) ** (2 * s) * b(n3) ** (2 * s)
    if kind == "A":
        return num / (d1 * d3 * den)
    eps = (s - 0.5) / 2
    nmax = np.maximum(np.maximum(np.abs(n1), np.abs(n2)), np.abs(n3))
    return num / (d1 ** 2 * d3 ** 2 * den) * b(nmax) ** 2 / b(n) ** (2 - 2 * eps)


def dnls_case_sums(s: float, kind: str, n: int, N: int, path: str = "n1") -> float:
    """``A_n`` or ``C_n`` over ``n = n1 - n2 + n3``, ``n2 != n1, n3``, all in the box.

    The sum is exactly rounded, so the result does not depend on the loop
    order (``path``) and is exactly even in ``n``.
    """
    if kind not in ("A", "C"):
        raise ValueError("kind must be 'A' or 'C'")
    if not 0.5 < s < 1:
        raise ValueError("need 1/2 < s < 1")
    r = np.arange(-N, N + 1)
    vals = []
    if path == "n1":
        for n1 in r:
            n2 = r
            n3 = n - n1 + n2
            ok = (np.abs(n3) <= N) & (n2 != n1) & (n2 != n3)
            if np.any(ok):
                vals.append(_dnls_terms(s, kind, n, np.full(ok.sum(), n1), n2[ok], n3[ok]))
    elif path == "n3":
        for n3 in r:
            n1 = r
            n2 = n1 + n3 - n
            ok = (np.abs(n2) <= N) & (n2 != n1) & (n2 != n3)
            if np.any(ok):
                vals.append(_dnls_terms(s, kind, n, n1[ok], n2[ok], np.full(ok.sum(), n3)))
    else:
        raise ValueError(f"unknown path {path!r}")
    return fsum(np.concatenate(vals)) if vals else 0.0


# ---------------------------------------------------------------------------
# Zakharov weights

def zakharov_weights(n1, n2, sign: int, s: float = 0.5, l: float = 0.0, eps: float = 0.5):
    """``(W1, W2, W3, W4, Phi)`` at ``n0 = n1 - n2`` for ``Phi_sign``."""
    n1 = np.asarray(n1, dtype=np.int64)
    n2 = np.asarray(n2, dtype=np.int64)
    n0 = n1 - n2
    b0, b1, b2 = bracket(n0 ** 2), bracket(n1 ** 2), bracket(n2 ** 2)
    phi = (n1 ** 2 - n2 ** 2).astype(float) + sign * b0
    bp = bracket(phi ** 2)
    a0 = np.abs(n0).astype(float)
    W1 = b1 ** s / (bp ** 0.5 * b0 ** l * b2 ** s)
    W2 = b0 ** l * a0 / (bp ** 0.5 * b1 ** s * b2 ** s)
    W3 = b1 ** (s - 1) * (b0 + b2) / (bp ** (1 - eps) * b0 ** l * b2 ** s)
    W4 = b0 ** (l - 1) * a0 * (b1 + b2) / (bp ** (1 - eps) * b1 ** s * b2 ** s)
    return W1, W2, W3, W4, phi


def _dominating(n1, n2, ratio=4.0):
    n1 = np.asarray(n1, dtype=np.int64)
    n2 = np.asarray(n2, dtype=np.int64)
    b0 = bracket((n1 - n2) ** 2)
    b1, b2 = bracket(n1 ** 2), bracket(n2 ** 2)
    bs = bracket((n1 + n2) ** 2)
    big = b1 >= ratio * b2
    small = b2 >= ratio * b1
    mid = ~(big | small)
    return (big / np.sqrt(b0 * b2) + mid / np.sqrt(b0 * bs) + small / np.sqrt(b0 * b1))


def zakharov_weight_check(s: float = 0.5, l: float = 0.0, eps: float = 0.5, N: int = 50,
                          path: str = "vector") -> dict:
    """Constants of the pointwise weight inequalities over ``|n0|,|n1|,|n2| <= N``.

    ``C0``: max of every ``W_j`` on ``n0 = 0`` and on the exceptional line
    ``n1 + n2 + sign*sgn(n0) = 0``.  Elsewhere ``C1 = max (W1+W2)/(W3+W4)``
    and ``C2 = max (W3+W4)/D`` with ``D`` the three-case dominating
    expression.  Both signs of the phase are included.
    """
    if path == "vector":
        r = np.arange(-N, N + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        n1, n2 = n1.ravel(), n2.ravel()
        keep = np.abs(n1 - n2) <= N
        n1, n2 = n1[keep], n2[keep]
        return _zakharov_constants(n1, n2, s, l, eps)
    if path == "loops":
        rows1, rows2 = [], []
        for a in range(-N, N + 1):
            for b in range(max(-N, a - N), min(N, a + N) + 1):
                rows1.append(a)
                rows2.append(b)
        return _zakharov_constants(np.array(rows1), np.array(rows2), s, l, eps)
    raise ValueError(f"unknown path {path!r}")


def _zakharov_constants(n1, n2, s, l, eps):
    n0 = n1 - n2
    out = {"C0": 0.0, "C1": 0.0, "C2": 0.0, "worst": {}, "line": {}}
    D = _dominating(n1, n2)
    for sign in (1, -1):
        W1, W2, W3, W4, phi = zakharov_weights(n1, n2, sign, s, l, eps)
        W = np.stack([W1, W2, W3, W4])
        special = (n0 == 0) | (n1 + n2 + sign * np.sign(n0) == 0)
        if np.any(special):
            c0 = float(W[:, special].max())
            if c0 > out["C0"]:
                j, i = np.unravel_index(np.argmax(W[:, special]), W[:, special].shape)
                out["C0"] = c0
                out["worst"]["C0"] = (int(n0[special][i]), int(n1[special][i]), int(n2[special][i]), sign)
        line = (n0 != 0) & (n1 + n2 + sign * np.sign(n0) == 0) & (np.abs(n1) >= 8)
        if np.any(line):
            key = "+" if sign > 0 else "-"
            out["line"][key] = (float(W[:, line].min()), float(W[:, line].max()))
        gen = ~special
        r1 = (W1 + W2)[gen] / (W3 + W4)[gen]
        r2 = (W3 + W4)[gen] / D[gen]
        for name, r in (("C1", r1), ("C2", r2)):
            if r.size and float(r.max()) > out[name]:
                i = int(np.argmax(r))
                out[name] = float(r[i])
                out["worst"][name] = (int(n0[gen][i]), int(n1[gen][i]), int(n2[gen][i]), sign)
    # factorization ratio <Phi> / (<n0><n1+n2>) off the special sets
    ratios = []
    for sign in (1, -1):
        phi = (n1 ** 2 - n2 ** 2).astype(float) + sign * bracket(n0 ** 2)
        ok = (n0 != 0) & (n1 + n2 + sign * np.sign(n0) != 0)
        rr = bracket(phi[ok] ** 2) / (bracket(n0[ok] ** 2) * bracket((n1 + n2)[ok] ** 2))
        ratios.append((rr.min(), rr.max()))
    out["factorization"] = (float(min(a for a, _ in ratios)), float(max(b for _, b in ratios)))
    return out


# ---------------------------------------------------------------------------
# cubic NLS block counts in two dimensions

def _shell(lat, Nj):
    br = lat.brackets
    return np.flatnonzero((br >= Nj) & (br < 2 * Nj))


def _cube_label(f, side):
    return np.floor_divide(f, side)


def cnls_block_counts(mu: int, dyads, N: int, cube: bool | None = None,
                      path: str = "hist") -> dict:
    """Maxima of ``A_mu(n, n2)`` and ``B_mu(n1, n3)`` over a dyadic block.

    ``dyads = (N1, N2, N3)``; frequencies lie in the box ``|n_i| <= N`` of
    ``Z^2`` with ``n = n1 - n2 + n3`` and
    ``Phi = |n|^2 - |n1|^2 + |n2|^2 - |n3|^2 = mu``.  With ``cube`` (default:
    when ``N2`` is the maximum and at least 4 times the median) ``n`` and
    ``n2`` are restricted to origin-aligned cubes of side ``N_med`` and
    ``B`` is maximized over the cube pair as well.
    """
    if N > 64:
        raise ValueError(f"box radius {N} exceeds the cap 64")
    lat = TruncatedLattice(2, N)
    N1, N2, N3 = dyads
    srt = sorted(dyads)
    nmin, nmed = srt[0], srt[1]
    if cube is None:
        cube = N2 == srt[2] and N2 >= 4 * nmed
    side = max(int(nmed), 1)
    S1, S2, S3 = (_shell(lat, x) for x in dyads)
    if path == "hist":
        A = _count_A_hist(lat, mu, S1, S2, S3)
        B = _count_B_hist(lat, mu, S1, S2, S3, side if cube else None)
    elif path == "brute":
        A = _count_A_brute(lat, mu, S1, S2, S3)
        B = _count_B_brute(lat, mu, S1, S2, S3, side if cube else None)
    else:
        raise ValueError(f"unknown path {path!r}")
    bound = (nmed * nmin) ** 0.5
    return {"A_mu_max": A, "B_mu_max": B, "product": A * B, "bound": bound,
            "ratio": A * B / bound, "cube": bool(cube)}


def _phi(n, n1, n2, n3):
    sq = lambda v: (v * v).sum(axis=-1)  # noqa: E731
    return sq(n) - sq(n1) + sq(n2) - sq(n3)


def _count_A_hist(lat, mu, S1, S2, S3):
    # with a = n + n2: n3 = a - n1 and |2 n1 - a|^2 = |a - 2 n2|^2 - 2 mu
    F = lat.freqs
    in3 = np.zeros(lat.size, dtype=bool)
    in3[S3] = True
    f1, f2 = F[S1], F[S2]
    best = 0
    for a in _box(2 * lat.N, 2):
        n3 = a - f1
        ok = lat.contains(n3)
        ok[ok] = in3[lat.flat_index(n3[ok])]
        if not np.any(ok):
            continue
        hist = np.bincount(((2 * f1[ok] - a) ** 2).sum(axis=1))
        n = a - f2
        pair = lat.contains(n)
        rho = ((a - 2 * f2[pair]) ** 2).sum(axis=1) - 2 * mu
        rho = rho[(rho >= 0) & (rho < hist.size)]
        if rho.size:
            best = max(best, int(hist[rho].max()))
    return best


def _count_A_brute(lat, mu, S1, S2, S3):
    F = lat.freqs
    set3 = set(S3.tolist())
    best = 0
    for n_idx in range(lat.size):
        n = F[n_idx]
        for i2 in S2:
            c = 0
            for i1 in S1:
                n3 = n - F[i1] + F[i2]
                if np.any(np.abs(n3) > lat.N):
                    continue
                j3 = int(lat.flat_index(n3))
                if j3 in set3 and _phi(n, F[i1], F[i2], n3) == mu:
                    c += 1
            best = max(best, c)
    return best


def _count_B_hist(lat, mu, S1, S2, S3, side):
    # with c = n1 + n3: n = c - n2 and |2 n2 - c|^2 = |2 n1 - c|^2 + 2 mu
    F = lat.freqs
    in3 = np.zeros(lat.size, dtype=bool)
    in3[S3] = True
    f1, f2 = F[S1], F[S2]
    best = 0
    for c in _box(2 * lat.N, 2):
        n3 = c - f1
        ok = lat.contains(n3)
        ok[ok] = in3[lat.flat_index(n3[ok])]
        if not np.any(ok):
            continue
        rho = ((2 * f1[ok] - c) ** 2).sum(axis=1) + 2 * mu
        rho = np.unique(rho[rho >= 0])
        n = c - f2
        inbox = lat.contains(n)
        if not np.any(inbox):
            continue
        q = ((2 * f2[inbox] - c) ** 2).sum(axis=1)
        hit = np.isin(q, rho)
        if not np.any(hit):
            continue
        if side is None:
            cnt = int(np.bincount(q[hit]).max())
        else:
            lab = np.column_stack([q[hit], _cube_label(n[inbox][hit], side),
                                   _cube_label(f2[inbox][hit], side)])
            _, counts = np.unique(lab, axis=0, return_counts=True)
            cnt = int(counts.max())
        best = max(best, cnt)
    return best


def _count_B_brute(lat, mu, S1, S2, S3, side):
    F = lat.freqs
    best = 0
    for i1 in S1:
        for i3 in S3:
            n1, n3 = F[i1], F[i3]
            groups: dict = {}
            for i2 in S2:
                n2 = F[i2]
                n = n1 - n2 + n3
                if np.any(np.abs(n) > lat.N) or _phi(n, n1, n2, n3) != mu:
                    continue
                key = () if side is None else tuple(np.floor_divide(n, side)) + tuple(np.floor_divide(n2, side))
                groups[key] = groups.get(key, 0) + 1
            if groups:
                best = max(best, max(groups.values()))
    return best
