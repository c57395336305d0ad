"""Time integration of truncated systems and the experiment drivers.

The right-hand side is evaluated in the interaction picture: each factor is
rotated back by its dispersion, transformed to physical space on a
zero-padded grid, multiplied pointwise and transformed back.  The padded
grid has ``(q+1)N+1`` points per axis for a degree ``q`` term, which is the
smallest size for which no product mode aliases into the box, so the ODE
integrated is exactly the Galerkin-truncated system.

Integration is classical fixed-step RK4.  The regularized problem uses the
Lawson (integrating factor) form of RK4 with the exact factor
``exp(-eps <n>^{2 alpha} h)``; for ``eps = 0`` every factor is 1.0 and the
arithmetic is bitwise that of plain RK4.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .lattice import SeqState, TruncatedLattice, apply_cutoff
from .model import EquationSpec, excluded_table, remainder_eval, sum_tuples, term_tuples

__all__ = [
    "IntegratorCfg",
    "RegularizationCfg",
    "Trajectory",
    "nonlinear_fft",
    "nonlinear_direct",
    "rhs",
    "rhs_direct",
    "solve",
    "solve_regularized",
    "state_norm",
    "uniqueness_gap",
    "weak_limit_experiment",
    "cutoff_convergence",
    "data_cutoff_radius",
]


@dataclass(frozen=True)
class IntegratorCfg:
    dt: float
    store_every: int = 1
    method: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if self.method != "rk4":
            raise ValueError(f"unknown method {self.method!r}")

    def steps(self, T: float) -> int:
        n = int(round(T / self.dt))
        if n < 1 or abs(n * self.dt - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"T={T} is not an integer multiple of dt={self.dt}")
        if n % self.store_every:
            raise ValueError(f"{n} steps not divisible by store_every={self.store_every}")
        return n


@dataclass(frozen=True)
class RegularizationCfg:
    epsilon: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class Trajectory:
    times: np.ndarray          # shape (K,)
    states: np.ndarray         # shape (K, c) + box
    lattice: TruncatedLattice
    eq_name: str = ""

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> SeqState:
        return SeqState(self.lattice, self.states[i])

    @property
    def flat(self) -> np.ndarray:
        """States as ``(K, c, size)``."""
        return self.states.reshape(self.times.size, self.states.shape[1], -1)

    def subsample(self, stride: int) -> "Trajectory":
        return Trajectory(self.times[::stride], self.states[::stride], self.lattice, self.eq_name)

    def to_json(self) -> str:
        return json.dumps({
            "eq": self.eq_name,
            "times": self.times.tolist(),
            "states": [json.loads(self.state(i).to_json()) for i in range(len(self))],
        })

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        p = json.loads(text)
        states = [SeqState.from_json(json.dumps(s)) for s in p["states"]]
        lat = states[0].lattice
        return cls(np.asarray(p["times"], dtype=float), np.stack([s.data for s in states]), lat,
                   p.get("eq", ""))

    def to_binary(self) -> bytes:
        """Header ``d, N, c, steps`` as little-endian int64, then times and
        the states as little-endian float64 (re, im) pairs."""
        c = self.states.shape[1]
        head = struct.pack("<4q", self.lattice.d, self.lattice.N, c, self.times.size)
        body = self.times.astype("<f8").tobytes() + self.states.astype("<c16").tobytes()
        return head + body

    @classmethod
    def from_binary(cls, blob: bytes, eq_name: str = "") -> "Trajectory":
        d, N, c, K = struct.unpack("<4q", blob[:32])
        lat = TruncatedLattice(d, N)
        times = np.frombuffer(blob, dtype="<f8", count=K, offset=32).copy()
        states = np.frombuffer(blob, dtype="<c16", offset=32 + 8 * K)
        return cls(times, states.reshape((K, c) + lat.shape).copy(), lat, eq_name)


# ---------------------------------------------------------------------------
# right-hand side

def _grid_positions(lat: TruncatedLattice, L: int):
    pos = np.arange(-lat.N, lat.N + 1) % L
    return np.ix_(*([pos] * lat.d))


def _term_fft(eq: EquationSpec, c: int, k: int, state: SeqState, t: float) -> np.ndarray:
    lat = state.lattice
    term = eq.terms[c][k]
    q = term.degree
    L = (q + 1) * lat.N + 1
    scale = float(L) ** lat.d
    ix = _grid_positions(lat, L)
    disp = eq.disp_table(lat)
    freqs = lat.freqs
    prod = None
    for j, cj in enumerate(term.children):
        coef = state.flat(cj) * np.exp(-1j * t * disp[cj])
        g = term.child_factors[j] if j < len(term.child_factors) else None
        if g is not None:
            coef = coef * g(freqs)
        grid = np.zeros((L,) * lat.d, dtype=np.complex128)
        grid[ix] = coef.reshape(lat.shape)
        u = np.fft.ifftn(grid) * scale
        prod = u if prod is None else prod * u
    P = (np.fft.fftn(prod) / scale)[ix].reshape(-1)
    out = term.coef * np.exp(1j * t * disp[c]) * P
    if term.out_factor is not None:
        out = out * term.out_factor(freqs)
    if term.constraint is not None:
        tab = excluded_table(eq, c, k, lat)
        out = out - sum_tuples(state, t, term.children, tab, lat.size)
    return out


def nonlinear_fft(eq: EquationSpec, state: SeqState, t: float) -> np.ndarray:
    """All main terms, shape ``(c, size)``, via the interaction picture."""
    out = np.zeros((eq.components, state.lattice.size), dtype=np.complex128)
    for c, tl in enumerate(eq.terms):
        for k in range(len(tl)):
            out[c] += _term_fft(eq, c, k, state, t)
    return out


def nonlinear_direct(eq: EquationSpec, state: SeqState, t: float, chunk: int = 64) -> np.ndarray:
    """All main terms by direct summation over child tuples."""
    lat = state.lattice
    out = np.zeros((eq.components, lat.size), dtype=np.complex128)
    for c, tl in enumerate(eq.terms):
        for k, term in enumerate(tl):
            for start in range(0, lat.size, chunk):
                roots = np.arange(start, min(start + chunk, lat.size))
                tab = term_tuples(eq, c, k, lat, roots=roots, which="kept", closed_phase=True)
                out[c] += sum_tuples(state, t, term.children, tab, lat.size)
    return out


def rhs(eq: EquationSpec, state: SeqState, t: float) -> SeqState:
    """``N[w](t) + R[w](t)``."""
    out = nonlinear_fft(eq, state, t)
    if eq.has_remainder():
        out += remainder_eval(eq, state, t).flat()
    return SeqState(state.lattice, out.reshape(state.data.shape))


def rhs_direct(eq: EquationSpec, state: SeqState, t: float) -> SeqState:
    """Oracle for :func:`rhs`: direct sums and convolution remainders."""
    out = nonlinear_direct(eq, state, t)
    if eq.has_remainder():
        out += remainder_eval(eq, state, t, direct=True).flat()
    return SeqState(state.lattice, out.reshape(state.data.shape))


def _rhs_array(eq, lat, u, t):
    return rhs(eq, SeqState(lat, u), t).data


# ---------------------------------------------------------------------------
# integrators

def solve_regularized(eq: EquationSpec, initial: SeqState, T: float, reg: RegularizationCfg,
                      cfg: IntegratorCfg, rhs_fn=None) -> Trajectory:
    """Lawson RK4 for ``w' = -eps <n>^{2 alpha} w + N[w] + R[w]``."""
    lat = initial.lattice
    if initial.components != eq.components:
        raise ValueError(f"{eq.name} has {eq.components} components, state has {initial.components}")
    f = rhs_fn or (lambda u, t: _rhs_array(eq, lat, u, t))
    steps = cfg.steps(T)
    h = cfg.dt
    lam = (reg.epsilon * lat.brackets ** (2 * reg.alpha)).reshape(lat.shape)
    E1 = np.exp(-lam * h)
    E2 = np.exp(-lam * (h / 2))
    u = np.array(initial.data)
    times = [0.0]
    states = [u.copy()]
    for i in range(steps):
        t = i * h
        k1 = f(u, t)
        k2 = f(E2 * (u + (h / 2) * k1), t + h / 2)
        k3 = f(E2 * u + (h / 2) * k2, t + h / 2)
        k4 = f(E1 * u + h * (E2 * k3), t + h)
        u = E1 * u + (h / 6) * (E1 * k1 + 2 * (E2 * (k2 + k3)) + k4)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"non-finite state at t={(i + 1) * h:.6g}")
        if (i + 1) % cfg.store_every == 0:
            times.append((i + 1) * h)
            states.append(u.copy())
    return Trajectory(np.asarray(times), np.stack(states), lat, eq.name)


def solve(eq: EquationSpec, initial: SeqState, T: float, cfg: IntegratorCfg) -> Trajectory:
    """Fixed-step RK4 trajectory of the truncated system."""
    return solve_regularized(eq, initial, T, RegularizationCfg(0.0, 1.0), cfg)


# ---------------------------------------------------------------------------
# experiments

def state_norm(data, lat: TruncatedLattice, s: float = 0.0) -> float:
    """l^2_s norm over all components of a state array."""
    w = lat.brackets ** (2 * s)
    flat = np.asarray(data).reshape(-1, lat.size)
    return float(np.sqrt(np.sum(w[None, :] * np.abs(flat) ** 2)))


def uniqueness_gap(eq: EquationSpec, w0: SeqState, w0t: SeqState, T: float, cfg: IntegratorCfg,
                   s: float = 0.0) -> dict:
    """``sup_t |w - w~|_{l^2_s} / |w(0) - w~(0)|_{l^2_s}`` and the time series."""
    lat = w0.lattice
    a = solve(eq, w0, T, cfg)
    b = solve(eq, w0t, T, cfg)
    gaps = np.array([state_norm(a.states[i] - b.states[i], lat, s) for i in range(len(a))])
    g0 = state_norm(w0.data - w0t.data, lat, s)
    if g0 == 0.0:
        return {"supRatio": None, "absoluteGap": float(gaps.max()), "times": a.times, "gap": gaps}
    ratio = gaps / g0
    return {"supRatio": float(ratio.max()), "times": a.times, "gap": gaps, "ratio": ratio}


def data_cutoff_radius(eps: float, alpha: float) -> float:
    """``N_eps = eps^{-1/(4 alpha)}``."""
    return eps ** (-1.0 / (4.0 * alpha))


def weak_limit_experiment(eq: EquationSpec, initial: SeqState, s: float, alpha: float,
                          eps_list, T: float, cfg: IntegratorCfg) -> dict:
    """Regularized solutions for each eps and the pairwise Cauchy bounds.

    For each eps the data is cut to ``<n> <= N_eps`` and evolved with
    ``-eps <n>^{2 alpha}`` damping.  Checks
    ``sup_t |w^eps|_s <= 6 |w^eps(0)|_s`` and, for each pair,
    ``sup_t |w1 - w2|_s <= 6 |w1(0) - w2(0)|_s + eps1 sup_t |w1|_{s+2a} + eps2 sup_t |w2|_{s+2a}``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be non-increasing")
    lat = initial.lattice
    runs = []
    for eps in eps_list:
        Ne = data_cutoff_radius(eps, alpha)
        w0 = apply_cutoff(initial, (lat.brackets <= Ne).astype(float))
        traj = solve_regularized(eq, w0, T, RegularizationCfg(eps, alpha), cfg)
        sup_s = max(state_norm(x, lat, s) for x in traj.states)
        sup_hi = max(state_norm(x, lat, s + 2 * alpha) for x in traj.states)
        n0 = state_norm(w0.data, lat, s)
        runs.append({"eps": eps, "N_eps": Ne, "traj": traj, "sup_s": sup_s, "sup_hi": sup_hi,
                     "init_s": n0, "apriori_ok": bool(sup_s <= 6 * n0 + 1e-15)})
    pairs = []
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            a, b = runs[i], runs[j]
            dist = max(state_norm(x - y, lat, s) for x, y in zip(a["traj"].states, b["traj"].states))
            init = state_norm(a["traj"].states[0] - b["traj"].states[0], lat, s)
            bound = 6 * init + a["eps"] * a["sup_hi"] + b["eps"] * b["sup_hi"]
            pairs.append({"eps1": a["eps"], "eps2": b["eps"], "distance": dist, "bound": bound,
                          "ok": bool(dist <= bound)})
    table = [{k: v for k, v in r.items() if k != "traj"} for r in runs]
    passed = all(r["apriori_ok"] for r in runs) and all(p["ok"] for p in pairs)
    return {"runs": table, "pairs": pairs, "passed": passed}


def cutoff_convergence(eq: EquationSpec, traj: Trajectory, cutoffs, test_function) -> dict:
    """``|int_0^T <N[m_k w] - N[w], phi> dt|`` for each cutoff ``m_k``.

    ``test_function`` has shape ``(c, size)``; cutoff symbols are flat box
    arrays or callables as in :func:`nfrlab.lattice.apply_cutoff`.
    """
    lat = traj.lattice
    phi = np.asarray(test_function, dtype=np.complex128).reshape(eq.components, lat.size)
    base = [nonlinear_fft(eq, traj.state(i), t) for i, t in enumerate(traj.times)]
    values = []
    for m in cutoffs:
        integrand = []
        for i, t in enumerate(traj.times):
            cut = nonlinear_fft(eq, apply_cutoff(traj.state(i), m), t)
            integrand.append(np.sum((cut - base[i]) * np.conj(phi)))
        integrand = np.asarray(integrand)
        if len(integrand) >= 3:
            val = simpson(integrand, x=traj.times)
        else:
            val = np.trapezoid(integrand, x=traj.times)
        values.append(float(abs(val)))
    vals = np.asarray(values)
    return {"values": values,
            "nonincreasing": bool(np.all(np.diff(vals) <= 1e-15 * max(vals.max(initial=0), 1))),
            "final": values[-1] if values else None}
