"""Truncated frequency lattices and sequence states.

A lattice is the sup-norm box ``|n_i| <= N`` in ``Z^d``.  Points are stored
in row-major order of the box with every coordinate running from ``-N`` to
``N``.  A :class:`SeqState` holds one complex array per component, shaped as
the box, so that index ``n + N`` (per axis) addresses frequency ``n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "TruncatedLattice",
    "SeqState",
    "bracket",
    "norm_l2s",
    "norm_weighted_sup",
    "apply_cutoff",
    "random_state",
]


def bracket(sq):
    """Japanese bracket from an exact squared norm: ``sqrt(1 + |n|^2)``."""
    return np.sqrt(1.0 + np.asarray(sq, dtype=np.float64))


@dataclass(frozen=True)
class TruncatedLattice:
    """Sup-norm box ``{n in Z^d : |n_i| <= N}``."""

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.N < 0:
            raise ValueError(f"radius must be >= 0, got {self.N}")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def size(self) -> int:
        return self.side ** self.d

    @cached_property
    def freqs(self) -> np.ndarray:
        """Integer coordinates of all points, shape ``(size, d)``, row-major."""
        axes = [np.arange(-self.N, self.N + 1, dtype=np.int64)] * self.d
        grid = np.meshgrid(*axes, indexing="ij")
        out = np.stack([g.ravel() for g in grid], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """Exact ``|n|^2`` per point, flat."""
        out = (self.freqs ** 2).sum(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def brackets(self) -> np.ndarray:
        out = bracket(self.norm_sq)
        out.setflags(write=False)
        return out

    def contains(self, n) -> np.ndarray:
        """Membership test; ``n`` has shape ``(..., d)``."""
        n = np.asarray(n)
        return np.all(np.abs(n) <= self.N, axis=-1)

    def flat_index(self, n) -> np.ndarray:
        """Row-major flat index of frequencies ``n`` of shape ``(..., d)``.

        No bounds check; callers mask with :meth:`contains` first.
        """
        n = np.asarray(n, dtype=np.int64)
        idx = np.zeros(n.shape[:-1], dtype=np.int64)
        for k in range(self.d):
            idx = idx * self.side + (n[..., k] + self.N)
        return idx

    def negation_index(self) -> np.ndarray:
        """Flat index map ``n -> -n``."""
        return self.flat_index(-self.freqs)


class SeqState:
    """Complex amplitudes on a truncated lattice, one array per component.

    The data array has shape ``(c,) + lattice.shape`` and is read-only.
    """

    __slots__ = ("lattice", "data")

    def __init__(self, lattice: TruncatedLattice, data):
        data = np.array(data, dtype=np.complex128)
        if data.shape == lattice.shape or data.shape == (lattice.size,):
            data = data.reshape((1,) + lattice.shape)
        elif data.shape[1:] != lattice.shape:
            data = data.reshape((data.shape[0],) + lattice.shape)
        if data.shape[0] < 1:
            raise ValueError("a state needs at least one component")
        if not np.all(np.isfinite(data)):
            raise ValueError("state contains NaN or Inf")
        data.setflags(write=False)
        self.lattice = lattice
        self.data = data

    @classmethod
    def zeros(cls, lattice: TruncatedLattice, components: int = 1) -> "SeqState":
        return cls(lattice, np.zeros((components,) + lattice.shape, dtype=np.complex128))

    @classmethod
    def delta(cls, lattice, n, amplitude=1.0, components=1, component=0) -> "SeqState":
        data = np.zeros((components,) + lattice.shape, dtype=np.complex128)
        data[(component,) + tuple(int(x) + lattice.N for x in np.atleast_1d(n))] = amplitude
        return cls(lattice, data)

    @property
    def components(self) -> int:
        return self.data.shape[0]

    def flat(self, component: int | None = None) -> np.ndarray:
        """Flat view, shape ``(c, size)`` or ``(size,)`` for one component."""
        if component is None:
            return self.data.reshape(self.components, -1)
        return self.data[component].reshape(-1)

    def __add__(self, other: "SeqState") -> "SeqState":
        return SeqState(self.lattice, self.data + other.data)

    def __sub__(self, other: "SeqState") -> "SeqState":
        return SeqState(self.lattice, self.data - other.data)

    def scale(self, a) -> "SeqState":
        return SeqState(self.lattice, a * self.data)

    def __repr__(self):
        return f"SeqState(d={self.lattice.d}, N={self.lattice.N}, components={self.components})"

    def to_json(self) -> str:
        """Serialize as ``{d, N, components, data}`` with ``[re, im]`` pairs.

        ``data`` is a list per component in row-major box order.  Python's
        float repr round-trips exactly.
        """
        flat = self.flat()
        payload = {
            "d": self.lattice.d,
            "N": self.lattice.N,
            "components": self.components,
            "data": [[[float(z.real), float(z.imag)] for z in row] for row in flat],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "SeqState":
        payload = json.loads(text)
        lattice = TruncatedLattice(int(payload["d"]), int(payload["N"]))
        arr = np.asarray(payload["data"], dtype=np.float64)
        if arr.shape != (payload["components"], lattice.size, 2):
            raise ValueError(f"data shape {arr.shape} does not match header")
        return cls(lattice, arr[..., 0] + 1j * arr[..., 1])


def _weights(lattice: TruncatedLattice, s: float) -> np.ndarray:
    return lattice.brackets ** s


def norm_l2s(state: SeqState, s: float = 0.0, component: int = 0) -> float:
    """``(sum_n <n>^{2s} |w_n|^2)^{1/2}`` over the box.

    numpy's ``sum`` uses pairwise summation on contiguous data.
    """
    v = state.flat(component)
    w = _weights(state.lattice, 2.0 * s)
    return float(np.sqrt(np.sum(w * (v.real ** 2 + v.imag ** 2))))


def norm_weighted_sup(state: SeqState, s: float = 0.0, component: int = 0) -> float:
    """``sup_n <n>^s |w_n|``."""
    v = state.flat(component)
    return float(np.max(_weights(state.lattice, s) * np.abs(v)))


def apply_cutoff(state: SeqState, symbol) -> SeqState:
    """Pointwise Fourier multiplier ``w_n -> symbol(n) w_n``.

    ``symbol`` is either an array broadcastable to the flat box or a callable
    taking one integer vector ``n`` of length ``d``.
    """
    lat = state.lattice
    if callable(symbol):
        vals = np.array([symbol(n) for n in lat.freqs], dtype=np.complex128)
    else:
        vals = np.broadcast_to(np.asarray(symbol, dtype=np.complex128), (lat.size,))
    if not np.all(np.isfinite(vals)):
        raise ValueError("cutoff symbol is not finite on the box")
    data = state.flat() * vals[None, :]
    return SeqState(lat, data.reshape(state.data.shape))


def random_state(lattice: TruncatedLattice, rng: np.random.Generator, norm: float = 1.0,
                 s: float = 0.0, decay: float = 2.0, components: int = 1,
                 conjugate_pair: bool = False, mean_zero: bool = False) -> SeqState:
    """Smooth random data normalized to ``norm`` in ``l^2_s``.

    Amplitudes are complex Gaussian times ``<n>^{-decay}``.  With
    ``conjugate_pair`` a two-component state ``(w_n, conj(w_{-n}))`` is
    returned, the layout used for conjugate systems.
    """
    shape = (components, lattice.size)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z *= lattice.brackets[None, :] ** (-decay)
    if mean_zero:
        z[:, lattice.norm_sq == 0] = 0.0
    nrm = np.sqrt(np.sum(lattice.brackets[None, :] ** (2 * s) * np.abs(z) ** 2, axis=1))
    z *= np.where(nrm > 0, norm / np.where(nrm > 0, nrm, 1.0), 0.0)[:, None]
    if conjugate_pair:
        z = np.stack([z[0], np.conj(z[0][lattice.negation_index()])])
    return SeqState(lattice, z)
