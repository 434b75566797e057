"""Dyadic geometry, the Haar system and piecewise-constant signals on [0,1)^n.

Every function here lives at a fixed dyadic resolution ``J``: a signal is an
array of ``2**J`` cells per axis, so averages over dyadic cubes of level at
most ``J`` are exact finite sums.

The array kernels (names starting with an underscore) accept arbitrary
leading batch axes; the trailing ``dim`` axes are the spatial grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping

import numpy as np


class ResolutionError(ValueError):
    """A cube, level or signal does not fit the requested resolution."""


@dataclass(frozen=True, order=True)
class DyadicCube:
    """The cube ``prod_i 2**-level * [index[i], index[i] + 1)``."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise ResolutionError(f"negative level {self.level}")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        side = 1 << self.level
        if any(i < 0 or i >= side for i in self.index):
            raise ResolutionError(f"index {self.index} out of range at level {self.level}")

    @classmethod
    def root(cls, dim: int = 1) -> "DyadicCube":
        return cls(0, (0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.level * self.dim)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ResolutionError("the root cube has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def children(self) -> list["DyadicCube"]:
        return [
            DyadicCube(self.level + 1, tuple(2 * i + e for i, e in zip(self.index, bits)))
            for bits in itertools.product((0, 1), repeat=self.dim)
        ]

    def contains(self, other: "DyadicCube") -> bool:
        """Non-strict inclusion ``other ⊆ self``."""
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def ancestor(self, level: int) -> "DyadicCube":
        if level > self.level:
            raise ResolutionError("ancestor level finer than the cube")
        shift = self.level - level
        return DyadicCube(level, tuple(i >> shift for i in self.index))

    def slices(self, resolution: int) -> tuple[slice, ...]:
        """Grid slices selecting the cells of this cube at ``resolution``."""
        if self.level > resolution:
            raise ResolutionError(f"cube level {self.level} finer than resolution {resolution}")
        w = 1 << (resolution - self.level)
        return tuple(slice(i * w, (i + 1) * w) for i in self.index)

    def to_json(self) -> dict:
        return {"level": self.level, "index": list(self.index)}

    @classmethod
    def from_json(cls, d: Mapping) -> "DyadicCube":
        return cls(int(d["level"]), tuple(d["index"]))


@lru_cache(maxsize=None)
def orientations(dim: int) -> tuple[tuple[int, ...], ...]:
    """Nonzero bit vectors in lexicographic order: (1,) or (0,1), (1,0), (1,1)."""
    return tuple(itertools.product((0, 1), repeat=dim))[1:]


def check_orientation(bits, dim: int) -> tuple[int, ...]:
    bits = tuple(int(b) for b in bits)
    if len(bits) != dim or any(b not in (0, 1) for b in bits) or not any(bits):
        raise ValueError(f"invalid orientation {bits} for dimension {dim}")
    return bits


@lru_cache(maxsize=None)
def _sign_table(dim: int) -> np.ndarray:
    """signs[o, e] = (-1)**(i_o . e) for orientation i_o and child position e."""
    pos = np.array(list(itertools.product((0, 1), repeat=dim)))
    ors = np.array(orientations(dim))
    return (-1.0) ** ((ors @ pos.T) % 2)


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def _block_means(v: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Averages of ``v`` over all dyadic cubes of ``level`` (trailing dim axes)."""
    J = int(round(math.log2(v.shape[-1])))
    if level > J:
        raise ResolutionError(f"level {level} finer than resolution {J}")
    if level == J:
        return v
    lead = v.shape[: v.ndim - dim]
    w = 1 << (J - level)
    shape = lead + tuple(x for _ in range(dim) for x in (1 << level, w))
    axes = tuple(len(lead) + 2 * a + 1 for a in range(dim))
    return v.reshape(shape).mean(axis=axes)


def _upsample(a: np.ndarray, dim: int, resolution: int) -> np.ndarray:
    """Piecewise-constant extension of per-cube values to the fine grid."""
    level = int(round(math.log2(a.shape[-1])))
    w = 1 << (resolution - level)
    if w == 1:
        return a
    for ax in range(a.ndim - dim, a.ndim):
        a = np.repeat(a, w, axis=ax)
    return a


def _split_children(a: np.ndarray, dim: int) -> np.ndarray:
    """(..., 2^{k+1} per axis) -> (..., 2^dim child slots, 2^k per axis)."""
    lead = a.shape[: a.ndim - dim]
    half = a.shape[-1] // 2
    b = a.reshape(lead + tuple(x for _ in range(dim) for x in (half, 2)))
    nl = len(lead)
    perm = tuple(range(nl)) + tuple(nl + 2 * i + 1 for i in range(dim)) + tuple(nl + 2 * i for i in range(dim))
    b = b.transpose(perm)
    return b.reshape(lead + (1 << dim,) + (half,) * dim)


def _merge_children(b: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`_split_children`."""
    lead = b.shape[: b.ndim - dim - 1]
    half = b.shape[-1]
    nl = len(lead)
    b = b.reshape(lead + (2,) * dim + (half,) * dim)
    perm = list(range(nl))
    for i in range(dim):
        perm += [nl + dim + i, nl + i]
    return b.transpose(perm).reshape(lead + (2 * half,) * dim)


def _haar_analysis(v: np.ndarray, dim: int, J: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Haar coefficients per level and the root mean of ``v``."""
    signs = _sign_table(dim)
    details: list[np.ndarray] = [None] * J  # type: ignore[list-item]
    a = v
    for k in range(J - 1, -1, -1):
        ch = _split_children(a, dim)  # (..., 2^n, cubes)
        scale = 2.0 ** (-dim * k / 2.0) / (1 << dim)
        d = np.tensordot(signs, ch, axes=([1], [ch.ndim - dim - 1]))  # (n_or, ..., cubes)
        d = np.moveaxis(d, 0, ch.ndim - dim - 1) * scale
        details[k] = d
        a = ch.mean(axis=ch.ndim - dim - 1)
    mean = a.reshape(a.shape[: a.ndim - dim])
    return details, mean


def _haar_synthesis(details, mean, dim: int, J: int) -> np.ndarray:
    signs = _sign_table(dim)
    mean = np.asarray(mean, dtype=float)
    a = mean.reshape(mean.shape + (1,) * dim)
    for k in range(J):
        d = details[k]  # (..., n_or, cubes)
        ax = d.ndim - dim - 1
        contrib = np.tensordot(signs.T, d, axes=([1], [ax]))  # (2^n, ..., cubes)
        contrib = np.moveaxis(contrib, 0, ax) * 2.0 ** (dim * k / 2.0)
        ch = np.expand_dims(a, ax) + contrib
        a = _merge_children(ch, dim)
    return a


def _square_sq(details, dim: int, J: int) -> np.ndarray:
    """Per-cell value of S_d(g)^2 at resolution J."""
    out = None
    for k, d in enumerate(details):
        e = (d ** 2).sum(axis=d.ndim - dim - 1) * 2.0 ** (dim * k)
        e = _upsample(e, dim, J)
        out = e if out is None else out + e
    return out


def _pyramid(v: np.ndarray, dim: int, J: int) -> list:
    """Block means at every level 0..J, built by pairwise coarsening."""
    out = [v]
    for k in range(J - 1, -1, -1):
        out.append(_block_means(out[-1], dim, k))
    return out[::-1]


def _maximal(v: np.ndarray, dim: int, J: int) -> np.ndarray:
    """max over dyadic cubes Q containing x (inside the root) of |<v>_Q|."""
    means = _pyramid(v, dim, J)
    out = np.abs(means[0])
    for k in range(1, J + 1):
        out = np.maximum(_upsample(out, dim, k), np.abs(means[k]))
    return out


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Signal:
    """Piecewise-constant real function on [0,1)^dim at resolution J.

    ``values[i_0, ..., i_{dim-1}]`` is the value on the resolution-J cell whose
    lower corner is ``2**-J * (i_0, ..., i_{dim-1})``.
    """

    dim: int
    resolution: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        side = 1 << self.resolution
        if v.shape != (side,) * self.dim:
            if v.size == side ** self.dim:
                v = v.reshape((side,) * self.dim)
            else:
                raise ResolutionError(f"values of shape {v.shape} do not match dim={self.dim}, J={self.resolution}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant(cls, c: float, dim: int = 1, resolution: int = 0) -> "Signal":
        return cls(dim, resolution, np.full((1 << resolution,) * dim, float(c)))

    @classmethod
    def indicator(cls, Q: DyadicCube, resolution: int, scale: float = 1.0) -> "Signal":
        v = np.zeros((1 << resolution,) * Q.dim)
        v[Q.slices(resolution)] = scale
        return cls(Q.dim, resolution, v)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.dim * self.resolution)

    def refine(self, resolution: int) -> "Signal":
        if resolution < self.resolution:
            raise ResolutionError("cannot refine to a coarser resolution")
        return Signal(self.dim, resolution, _upsample(self.values, self.dim, resolution))

    def restrict(self, Q: DyadicCube) -> np.ndarray:
        return self.values[Q.slices(self.resolution)]

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_measure)

    def inner(self, other: "Signal") -> float:
        J = max(self.resolution, other.resolution)
        a, b = self.refine(J), other.refine(J)
        return float((a.values * b.values).sum() * a.cell_measure)

    def __add__(self, other: "Signal") -> "Signal":
        J = max(self.resolution, other.resolution)
        return Signal(self.dim, J, self.refine(J).values + other.refine(J).values)

    def __sub__(self, other: "Signal") -> "Signal":
        return self + other * -1.0

    def __mul__(self, c: float) -> "Signal":
        return Signal(self.dim, self.resolution, self.values * float(c))

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {"dim": self.dim, "resolution": self.resolution, "values": self.values.tolist()}

    @classmethod
    def from_json(cls, d: Mapping) -> "Signal":
        return cls(int(d["dim"]), int(d["resolution"]), np.array(d["values"], dtype=float))


@dataclass(frozen=True, eq=False)
class HaarSpectrum:
    """Finitely supported Haar coefficients of a dyadic distribution.

    Stored densely: ``details[k]`` has shape ``(2**dim - 1,) + (2**k,)*dim`` and
    holds the coefficients of every level-k cube, orientations in the order of
    :func:`orientations`. ``mean`` is the root average (0 for a genuine
    dyadic distribution).
    """

    dim: int
    max_level: int
    details: tuple[np.ndarray, ...]
    mean: float = 0.0

    def __post_init__(self):
        if len(self.details) != self.max_level:
            raise ResolutionError("need one coefficient array per level below max_level")
        n_or = (1 << self.dim) - 1
        frozen = []
        for k, d in enumerate(self.details):
            d = np.asarray(d, dtype=float)
            if d.shape != (n_or,) + (1 << k,) * self.dim:
                raise ResolutionError(f"level {k}: bad coefficient shape {d.shape}")
            frozen.append(_frozen(d))
        object.__setattr__(self, "details", tuple(frozen))
        object.__setattr__(self, "mean", float(self.mean))

    @classmethod
    def zeros(cls, dim: int, max_level: int) -> "HaarSpectrum":
        n_or = (1 << dim) - 1
        return cls(dim, max_level, tuple(np.zeros((n_or,) + (1 << k,) * dim) for k in range(max_level)))

    @classmethod
    def from_coeffs(cls, dim: int, max_level: int, coeffs: Mapping, mean: float = 0.0) -> "HaarSpectrum":
        n_or = (1 << dim) - 1
        arrs = [np.zeros((n_or,) + (1 << k,) * dim) for k in range(max_level)]
        ors = orientations(dim)
        for (Q, i), c in coeffs.items():
            i = check_orientation(i, dim)
            if Q.level >= max_level:
                raise ResolutionError(f"cube level {Q.level} not below max_level {max_level}")
            arrs[Q.level][(ors.index(i),) + Q.index] = c
        return cls(dim, max_level, tuple(arrs), mean)

    def coeff(self, Q: DyadicCube, i) -> float:
        i = check_orientation(i, self.dim)
        if Q.level >= self.max_level:
            return 0.0
        return float(self.details[Q.level][(orientations(self.dim).index(i),) + Q.index])

    def items(self) -> Iterator[tuple[tuple[DyadicCube, tuple[int, ...]], float]]:
        """Nonzero coefficients ordered by (level, index, orientation)."""
        ors = orientations(self.dim)
        for k, d in enumerate(self.details):
            for idx in itertools.product(range(1 << k), repeat=self.dim):
                for o, i in enumerate(ors):
                    c = d[(o,) + idx]
                    if c != 0.0:
                        yield (DyadicCube(k, idx), i), float(c)

    @property
    def coeffs(self) -> dict:
        return dict(self.items())

    def with_mean(self, mean: float) -> "HaarSpectrum":
        return HaarSpectrum(self.dim, self.max_level, self.details, mean)

    def extend(self, max_level: int) -> "HaarSpectrum":
        """Same distribution viewed with zero coefficients down to ``max_level``."""
        if max_level < self.max_level:
            raise ResolutionError("cannot shrink a spectrum")
        n_or = (1 << self.dim) - 1
        extra = tuple(np.zeros((n_or,) + (1 << k,) * self.dim) for k in range(self.max_level, max_level))
        return HaarSpectrum(self.dim, max_level, self.details + extra, self.mean)

    def energy(self) -> float:
        return float(sum((d ** 2).sum() for d in self.details))

    def inner(self, other: "HaarSpectrum") -> float:
        L = min(self.max_level, other.max_level)
        return float(sum((self.details[k] * other.details[k]).sum() for k in range(L)))

    def __add__(self, other: "HaarSpectrum") -> "HaarSpectrum":
        L = max(self.max_level, other.max_level)
        a, b = self.extend(L), other.extend(L)
        return HaarSpectrum(self.dim, L, tuple(x + y for x, y in zip(a.details, b.details)), a.mean + b.mean)

    def __mul__(self, c: float) -> "HaarSpectrum":
        return HaarSpectrum(self.dim, self.max_level, tuple(d * c for d in self.details), self.mean * c)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "max_level": self.max_level,
            "coeffs": [
                {"level": Q.level, "index": list(Q.index), "orientation": list(i), "value": c}
                for (Q, i), c in self.items()
            ],
            "mean": self.mean,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "HaarSpectrum":
        dim = int(d["dim"])
        coeffs = {
            (DyadicCube(int(e["level"]), tuple(e["index"])), tuple(e["orientation"])): float(e["value"])
            for e in d["coeffs"]
        }
        return cls.from_coeffs(dim, int(d["max_level"]), coeffs, float(d.get("mean", 0.0)))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def haar_function(Q: DyadicCube, i, resolution: int) -> Signal:
    """L2-normalised tensor Haar function h^i_Q sampled at ``resolution``."""
    i = check_orientation(i, Q.dim)
    if Q.level >= resolution:
        raise ResolutionError(f"h_Q needs resolution > {Q.level}, got {resolution}")
    w = 1 << (resolution - Q.level)
    factors = []
    for bit in i:
        f = np.ones(w)
        if bit:
            f[w // 2:] = -1.0
        factors.append(f)
    block = factors[0]
    for f in factors[1:]:
        block = np.multiply.outer(block, f)
    v = np.zeros((1 << resolution,) * Q.dim)
    v[Q.slices(resolution)] = block * Q.measure ** -0.5
    return Signal(Q.dim, resolution, v)


def analyze(f: Signal) -> HaarSpectrum:
    details, mean = _haar_analysis(f.values, f.dim, f.resolution)
    return HaarSpectrum(f.dim, f.resolution, tuple(details), float(mean))


def synthesize(s: HaarSpectrum, include_mean: bool = True) -> Signal:
    """Signal at resolution ``s.max_level``; drops the root mean if asked."""
    mean = s.mean if include_mean else 0.0
    v = _haar_synthesis(s.details, mean, s.dim, s.max_level)
    return Signal(s.dim, s.max_level, v)


def average(f: Signal, Q: DyadicCube) -> float:
    return float(f.restrict(Q).mean())


def level_averages(f: Signal, level: int) -> np.ndarray:
    """Averages over every cube of ``level`` as a (2**level,)*dim array."""
    return _block_means(f.values, f.dim, level)


def decreasing_rearrangement(values, t: float, cell_measure: float) -> float:
    """f*(t) = inf{s : |{|f| > s}| <= t} for a step function with equal cells.

    The infimum is attained (right-continuous choice), so at a jump the lower
    value is returned.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    a = np.sort(np.abs(np.ravel(values)))[::-1]
    m = math.floor(t / cell_measure * (1 + 1e-12))
    return float(a[m]) if m < a.size else 0.0


def rearrangement(f: Signal, t: float) -> float:
    if not 0 < t <= 1:
        raise ValueError(f"t={t} outside (0, 1]")
    return decreasing_rearrangement(f.values, t, f.cell_measure)


def oscillation(f: Signal, Q: DyadicCube, p: float = 1.0) -> float:
    """osc_p(f, Q); ``p=math.inf`` gives the pointwise oscillation max - min."""
    v = f.restrict(Q)
    if math.isinf(p):
        return float(v.max() - v.min())
    if p <= 0:
        raise ValueError("p must be positive")
    return float((np.abs(v - v.mean()) ** p).mean() ** (1.0 / p))


def level_oscillations(v: np.ndarray, dim: int, level: int, p: float) -> np.ndarray:
    """osc_p over every cube of ``level`` (trailing axes of ``v`` are the grid)."""
    J = int(round(math.log2(v.shape[-1])))
    lead = v.shape[: v.ndim - dim]
    w = 1 << (J - level)
    shape = lead + tuple(x for _ in range(dim) for x in (1 << level, w))
    axes = tuple(len(lead) + 2 * a + 1 for a in range(dim))
    b = v.reshape(shape)
    if math.isinf(p):
        return b.max(axis=axes) - b.min(axis=axes)
    dev = np.abs(b - b.mean(axis=axes, keepdims=True))
    if p == 1:
        return dev.mean(axis=axes)
    if p == 2:
        return np.sqrt((dev ** 2).mean(axis=axes))
    return (dev ** p).mean(axis=axes) ** (1.0 / p)


def cubes_at_level(dim: int, level: int) -> Iterator[DyadicCube]:
    for idx in itertools.product(range(1 << level), repeat=dim):
        yield DyadicCube(level, idx)


def all_cubes(dim: int, max_level: int) -> Iterator[DyadicCube]:
    for k in range(max_level + 1):
        yield from cubes_at_level(dim, k)
