"""Exact dyadic (quasi-)norms: L^p, H^p_d, dotH^p_d, Lipschitz and BMO."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dyadic import DyadicCube, HaarSpectrum, Signal, _maximal, level_oscillations, synthesize
from .operators import square_function

KINDS = ("Lp", "Hp_d", "dotHp_d", "Lambda_d", "BMO_d")


@dataclass(frozen=True)
class NormReport:
    kind: str
    exponents: dict
    value: float
    witness: Optional[DyadicCube] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not self.value >= 0:
            raise ValueError(f"norm value must be nonnegative, got {self.value}")

    def __float__(self) -> float:
        return self.value

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "exponents": dict(sorted(self.exponents.items())),
            "value": self.value,
            "witness": None if self.witness is None else self.witness.to_json(),
        }


def _lp(values: np.ndarray, p: float, axes) -> np.ndarray:
    a = np.abs(values)
    if math.isinf(p):
        return a.max(axis=axes)
    if p == 2:
        return np.sqrt((a * a).mean(axis=axes))
    if p == 1:
        return a.mean(axis=axes)
    return (a ** p).mean(axis=axes) ** (1.0 / p)


def lp_norm(f: Signal, p: float) -> float:
    if not p > 0:
        raise ValueError("p must be positive")
    return float(_lp(f.values, p, None))


def hp_d_norm(f: Signal, p: float) -> NormReport:
    v = float(_lp(_maximal(f.values, f.dim, f.resolution), p, None))
    return NormReport("Hp_d", {"p": p}, v)


def dot_hp_d_norm(g: HaarSpectrum, p: float) -> NormReport:
    return NormReport("dotHp_d", {"p": p}, lp_norm(square_function(g), p))


def lambda_d_norm(f: Signal, alpha: float, p: float = 1.0) -> NormReport:
    """sup_Q l(Q)^-alpha osc_p(f, Q); alpha = 0 reports as BMO_d."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    best, arg = 0.0, DyadicCube.root(f.dim)
    for k in range(f.resolution):
        osc = level_oscillations(f.values, f.dim, k, p) * 2.0 ** (k * alpha)
        i = int(np.argmax(osc))
        if osc.flat[i] > best:
            best = float(osc.flat[i])
            arg = DyadicCube(k, np.unravel_index(i, osc.shape))
    kind = "BMO_d" if alpha == 0 else "Lambda_d"
    return NormReport(kind, {"alpha": alpha, "p": p}, best, arg)


def bmo_d_norm(f: Signal, p: float = 1.0) -> NormReport:
    return lambda_d_norm(f, 0.0, p)


def _hp_shifted(values: np.ndarray, cs: np.ndarray, dim: int, J: int, p: float) -> np.ndarray:
    shifted = values[None] - cs.reshape((-1,) + (1,) * dim)
    m = _maximal(shifted, dim, J)
    return _lp(m, p, tuple(range(1, dim + 1)))


def hp_d_modulo_constants(f: Signal, p: float, tol: float = 1e-10, scan: int = 257) -> tuple[float, float]:
    """(inf_c |f - c|_{H^p_d}, argmin c) by dense scan then golden section."""
    v = f.values
    lo, hi = float(v.min()), float(v.max())
    if hi - lo == 0:
        return 0.0, lo
    cs = np.linspace(lo, hi, scan)
    vals = _hp_shifted(v, cs, f.dim, f.resolution, p)
    i = int(np.argmin(vals))
    a, b = cs[max(i - 1, 0)], cs[min(i + 1, scan - 1)]
    ratio = (math.sqrt(5) - 1) / 2
    best_c, best = float(cs[i]), float(vals[i])
    while b - a > tol * max(1.0, abs(best_c)):
        x1 = b - ratio * (b - a)
        x2 = a + ratio * (b - a)
        y1, y2 = _hp_shifted(v, np.array([x1, x2]), f.dim, f.resolution, p)
        if y1 <= y2:
            b = x2
            if y1 < best:
                best, best_c = float(y1), float(x1)
        else:
            a = x1
            if y2 < best:
                best, best_c = float(y2), float(x2)
    return best, best_c


def maximal_vs_square_equivalence(g: HaarSpectrum, p: float) -> float:
    """|g|_{dotH^p_d} / inf_c |g - c|_{H^p_d}; 1 for the zero symbol."""
    if g.mean != 0:
        raise ValueError("symbol must have zero root mean")
    num = dot_hp_d_norm(g, p).value
    den, _ = hp_d_modulo_constants(synthesize(g), p)
    if num == 0 and den == 0:
        return 1.0
    if den == 0:
        raise ZeroDivisionError("degenerate symbol")
    return num / den


def duality_ratio(f: Signal, b: Signal, p: float) -> float:
    """|<f, b>| / (|f|_{H^p_d} |b|_{Lambda^{n(1/p-1)}_d}) for 0 < p <= 1.

    ``f`` should have zero mean: constants have zero Lipschitz norm.
    """
    if not 0 < p <= 1:
        raise ValueError("duality pairing needs 0 < p <= 1")
    num = abs(f.inner(b))
    den = hp_d_norm(f, p).value * lambda_d_norm(b, f.dim * (1.0 / p - 1.0)).value
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den
