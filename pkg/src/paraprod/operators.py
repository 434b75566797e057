"""Square function, maximal function and the dyadic paraproduct."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dyadic import (
    HaarSpectrum,
    ResolutionError,
    Signal,
    _block_means,
    _haar_analysis,
    _maximal,
    _square_sq,
    _upsample,
    synthesize,
)

_REL = 1e-12


@dataclass(frozen=True)
class ExponentTriple:
    """Exponents of a paraproduct bound.

    ``q`` and ``r`` pair with ``p`` through 1/q = 1/p + 1/r (``r = inf`` is the
    BMO endpoint q = p); ``alpha`` fixes p* through 1/p* = 1/p - alpha/n.
    Either group may be left unset.
    """

    p: float
    q: Optional[float] = None
    r: Optional[float] = None
    alpha: Optional[float] = None
    n: int = 1

    def __post_init__(self):
        for name in ("p", "q", "r"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if not math.isfinite(self.p):
            raise ValueError("p must be finite")
        if self.q is not None and self.r is None:
            inv = 1.0 / self.q - 1.0 / self.p
            if inv < -_REL:
                raise ValueError(f"q={self.q} exceeds p={self.p}")
            object.__setattr__(self, "r", math.inf if abs(inv) <= _REL else 1.0 / inv)
        if self.r is not None and self.q is None:
            object.__setattr__(self, "q", 1.0 / (1.0 / self.p + 1.0 / self.r))
        if self.q is not None:
            gap = 1.0 / self.q - 1.0 / self.p - 1.0 / self.r
            if abs(gap) > _REL * (1.0 / self.q):
                raise ValueError(f"1/q = 1/p + 1/r violated for p={self.p}, q={self.q}, r={self.r}")
        if self.alpha is not None:
            if self.alpha < 0:
                raise ValueError("alpha must be nonnegative")
            if not self.alpha * self.p < self.n:
                raise ValueError(f"need alpha*p < n, got alpha={self.alpha}, p={self.p}, n={self.n}")

    @property
    def p_star(self) -> float:
        if self.alpha is None:
            raise ValueError("p* needs alpha")
        return 1.0 / (1.0 / self.p - self.alpha / self.n)

    def to_json(self) -> dict:
        d = {"p": self.p, "q": self.q, "r": self.r, "alpha": self.alpha, "n": self.n}
        if self.alpha is not None:
            d["p_star"] = self.p_star
        return d


def square_function(g: HaarSpectrum) -> Signal:
    """S_d(g) at resolution ``g.max_level``."""
    J = g.max_level
    if J == 0:
        return Signal.constant(0.0, g.dim, 0)
    return Signal(g.dim, J, np.sqrt(_square_sq(g.details, g.dim, J)))


def maximal_function(f: Signal) -> Signal:
    """M_d(f) over dyadic cubes inside the root."""
    return Signal(f.dim, f.resolution, _maximal(f.values, f.dim, f.resolution))


def _check_resolution(g: HaarSpectrum, f: Signal):
    if f.dim != g.dim:
        raise ResolutionError(f"dimension mismatch: symbol {g.dim}, function {f.dim}")
    if f.resolution < g.max_level:
        raise ResolutionError(f"function resolution {f.resolution} below symbol level {g.max_level}")


def paraproduct(g: HaarSpectrum, f: Signal) -> HaarSpectrum:
    """pi_g(f): Haar coefficients <f>_Q <g, h^i_Q>."""
    _check_resolution(g, f)
    out = []
    for k, d in enumerate(g.details):
        out.append(d * _block_means(f.values, f.dim, k)[None])
    return HaarSpectrum(g.dim, g.max_level, tuple(out), 0.0)


def adjoint_paraproduct(g: HaarSpectrum, f: Signal) -> Signal:
    """pi_g^t(f) = sum <f, h^i_Q><g, h^i_Q> chi_Q / |Q| at resolution ``g.max_level``."""
    _check_resolution(g, f)
    J = g.max_level
    if J == 0:
        return Signal.constant(0.0, g.dim, 0)
    fd, _ = _haar_analysis(f.values, f.dim, f.resolution)
    acc = np.zeros((1 << J,) * g.dim)
    for k, d in enumerate(g.details):
        w = (d * fd[k]).sum(axis=0) * 2.0 ** (g.dim * k)
        acc += _upsample(w, g.dim, J)
    return Signal(g.dim, J, acc)


def pointwise_bound_slack(g: HaarSpectrum, f: Signal) -> np.ndarray:
    """M_d(f) S_d(g) - S_d(pi_g f) per cell at the resolution of ``f``."""
    _check_resolution(g, f)
    lhs = square_function(paraproduct(g, f)).refine(f.resolution).values
    rhs = maximal_function(f).values * square_function(g).refine(f.resolution).values
    return rhs - lhs


def hedberg_ratio(g: HaarSpectrum, f: Signal, triple: ExponentTriple) -> Signal:
    """Per-cell S_d(pi_g f) / (|g|_Lambda^alpha |f|_{H^p_d}^{alpha p/n} M_d f^{p/p*}).

    Cells where the denominator vanishes get 0; a nonzero numerator there
    raises, since the bound would be violated outright.
    """
    from .norms import hp_d_norm, lambda_d_norm

    if triple.alpha is None or not 0 < triple.alpha * triple.p < triple.n:
        raise ValueError("Hedberg bound needs 0 < alpha*p < n")
    if triple.n != g.dim:
        raise ValueError("exponent dimension does not match the symbol")
    _check_resolution(g, f)
    if not np.any(f.values):
        raise ValueError("f must not vanish identically")
    num = square_function(paraproduct(g, f)).refine(f.resolution).values
    lam = lambda_d_norm(synthesize_detail(g), triple.alpha).value
    hp = hp_d_norm(f, triple.p).value
    md = maximal_function(f).values
    den = lam * hp ** (triple.alpha * triple.p / triple.n) * md ** (triple.p / triple.p_star)
    bad = (den <= 0) & (num > 0)
    if np.any(bad):
        cells = [tuple(int(i) for i in c) for c in np.argwhere(bad)[:5]]
        raise ArithmeticError(f"zero denominator with nonzero numerator at cells {cells}")
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return Signal(f.dim, f.resolution, ratio)


def synthesize_detail(g: HaarSpectrum) -> Signal:
    """The function sum <g,h> h (root mean dropped)."""
    return synthesize(g, include_mean=False)
