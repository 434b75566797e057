"""Stopping-time sparse domination with post-hoc certification.

The engine never trusts its own selection rule.  Every family it returns
carries a :class:`Certificate` whose checks are recomputed from scratch on
the grid: disjoint witness sets, the witness measure bound, pointwise
domination with the achieved constant, and the level-set measure bound.

This module also builds the explicit test functions used to bound the
symbol of a paraproduct from below (the "Case 1" sparse construction and
the "Case 2" level-set construction) together with the operator
``T(f) = sum_R |<f>_R|^s g_R chi_R`` they are fed to.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from .dyadic import (
    DyadicCube,
    ResolutionError,
    Signal,
    _block_means,
    _maximal,
    _pyramid,
    _upsample,
    decreasing_rearrangement,
    orientations,
)


def _block_reduce(v: np.ndarray, dim: int, level: int, op) -> np.ndarray:
    J = int(round(math.log2(v.shape[-1])))
    w = 1 << (J - level)
    shape = tuple(x for _ in range(dim) for x in (1 << level, w))
    return op(v.reshape(shape), axis=tuple(2 * a + 1 for a in range(dim)))


def ceil_log2(x: float) -> int:
    """Exact ceil(log2 x) for x > 0, so 2**(l-1) < x <= 2**l."""
    m, e = math.frexp(x)
    return e - 1 if m == 0.5 else e


# ---------------------------------------------------------------------------
# nonnegative cube weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CubeWeights:
    """Nonnegative numbers g_Q on every dyadic cube of level 0..J.

    ``levels[k]`` has shape ``(2**k,)*dim``.
    """

    dim: int
    levels: tuple

    def __post_init__(self):
        arrs = []
        for k, a in enumerate(self.levels):
            a = np.array(a, dtype=float)
            if a.shape != (1 << k,) * self.dim:
                raise ResolutionError(f"level {k}: bad weight shape {a.shape}")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError("cube weights must be finite and nonnegative")
            a.setflags(write=False)
            arrs.append(a)
        if not arrs:
            raise ValueError("need at least the root level")
        object.__setattr__(self, "levels", tuple(arrs))

    @property
    def resolution(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def zeros(cls, dim: int, resolution: int) -> "CubeWeights":
        return cls(dim, tuple(np.zeros((1 << k,) * dim) for k in range(resolution + 1)))

    @classmethod
    def from_dict(cls, dim: int, resolution: int, gq: Mapping[DyadicCube, float]) -> "CubeWeights":
        arrs = [np.zeros((1 << k,) * dim) for k in range(resolution + 1)]
        for Q, v in gq.items():
            if Q.level > resolution:
                raise ResolutionError(f"cube {Q} finer than resolution {resolution}")
            arrs[Q.level][Q.index] = v
        return cls(dim, tuple(arrs))

    def __getitem__(self, Q: DyadicCube) -> float:
        if Q.level > self.resolution:
            return 0.0
        return float(self.levels[Q.level][Q.index])

    def items(self):
        for k, a in enumerate(self.levels):
            for idx in zip(*np.nonzero(a)):
                yield DyadicCube(k, tuple(int(i) for i in idx)), float(a[idx])

    def partial_sums(self) -> np.ndarray:
        """F[k] = sum over levels >= k of g_R chi_R, shape (J+2, grid)."""
        J = self.resolution
        out = np.zeros((J + 2,) + (1 << J,) * self.dim)
        for k in range(J, -1, -1):
            out[k] = out[k + 1] + _upsample(self.levels[k], self.dim, J)
        return out

    def total(self) -> Signal:
        """G = sum_R g_R chi_R."""
        return Signal(self.dim, self.resolution, self.partial_sums()[0])

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "resolution": self.resolution,
            "weights": [{"level": Q.level, "index": list(Q.index), "value": v} for Q, v in self.items()],
        }


def random_cube_weights(rng: np.random.Generator, dim: int, resolution: int, density: float = 0.3,
                        support: Optional[DyadicCube] = None) -> CubeWeights:
    """Exponential weights on a random subset of cubes, optionally inside ``support``."""
    arrs = []
    for k in range(resolution + 1):
        shape = (1 << k,) * dim
        a = rng.exponential(size=shape) * (rng.random(shape) < density)
        if support is not None:
            mask = np.zeros(shape, dtype=bool)
            if k >= support.level:
                mask[support.slices(k)] = True
            a = a * mask
        arrs.append(a)
    return CubeWeights(dim, tuple(arrs))


# ---------------------------------------------------------------------------
# localizations
# ---------------------------------------------------------------------------


class Localization:
    """A family f_Q with differences f_{P,Q}, sampled on a resolution-J grid.

    Subclasses implement :meth:`fq` and :meth:`fpq`.  The maximal sharp
    function falls back to a brute-force sweep; subclasses with more structure
    override :meth:`sharp`.
    """

    name = "generic"
    sharp_vanishes = False

    def __init__(self, dim: int, resolution: int):
        self.dim = dim
        self.resolution = resolution

    def fq(self, Q: DyadicCube) -> np.ndarray:
        raise NotImplementedError

    def fpq(self, P: DyadicCube, Q: DyadicCube) -> np.ndarray:
        raise NotImplementedError

    def sharp(self, Q: DyadicCube) -> np.ndarray:
        """m^#_Q(x) = max over P with x in P inside Q of osc(f_{P,Q}, P)."""
        J = self.resolution
        out = np.zeros((1 << (J - Q.level),) * self.dim)
        for level in range(Q.level, J + 1):
            w = 1 << (J - level)
            for P in _subcubes(Q, level):
                v = self.fpq(P, Q)
                osc = float(v.max() - v.min())
                if osc > 0:
                    sl = tuple(slice((i - (q << (level - Q.level))) * w, (i - (q << (level - Q.level)) + 1) * w)
                               for i, q in zip(P.index, Q.index))
                    np.maximum(out[sl], osc, out=out[sl])
        return out

    def check_condition(self, pairs: Iterable[tuple[DyadicCube, DyadicCube]], rtol: float = 1e-12) -> bool:
        """|f_{P,Q}| <= |f_P| + |f_Q| on P for every given pair."""
        for P, Q in pairs:
            lhs = np.abs(self.fpq(P, Q))
            rhs = np.abs(self.fq(P)) + np.abs(_restrict(self.fq(Q), Q, P, self.resolution))
            if np.any(lhs > rhs * (1 + rtol) + 1e-300):
                return False
        return True


class CallableLocalization(Localization):
    """Localization from two plain callables returning arrays on Q and on P."""

    def __init__(self, dim: int, resolution: int, fq: Callable, fpq: Callable, name: str = "callable"):
        super().__init__(dim, resolution)
        self._fq, self._fpq, self.name = fq, fpq, name

    def fq(self, Q):
        return np.asarray(self._fq(Q), dtype=float)

    def fpq(self, P, Q):
        return np.asarray(self._fpq(P, Q), dtype=float)


class DyadicSumLocalization(Localization):
    """f_Q = (g|Q) = sum_{R in Q} g_R chi_R and f_{P,Q} = f_Q - f_P."""

    name = "dyadic-sum"
    sharp_vanishes = True

    def __init__(self, gq: CubeWeights):
        super().__init__(gq.dim, gq.resolution)
        self.weights = gq
        self._F = gq.partial_sums()

    def fq(self, Q):
        return self._F[Q.level][Q.slices(self.resolution)]

    def fpq(self, P, Q):
        if not Q.contains(P):
            raise ValueError(f"{P} is not inside {Q}")
        sl = P.slices(self.resolution)
        return self._F[Q.level][sl] - self._F[P.level][sl]

    def sharp(self, Q):
        return np.zeros((1 << (self.resolution - Q.level),) * self.dim)


def lemma33_localization(gq) -> DyadicSumLocalization:
    """Localization (g|Q) for nonnegative weights (CubeWeights or a cube dict plus shape)."""
    if not isinstance(gq, CubeWeights):
        raise TypeError("pass CubeWeights; use CubeWeights.from_dict for a mapping")
    return DyadicSumLocalization(gq)


def _subcubes(Q: DyadicCube, level: int):
    shift = level - Q.level
    base = [i << shift for i in Q.index]
    for off in itertools.product(range(1 << shift), repeat=Q.dim):
        yield DyadicCube(level, tuple(b + o for b, o in zip(base, off)))


def _restrict(vQ: np.ndarray, Q: DyadicCube, P: DyadicCube, J: int) -> np.ndarray:
    """Values of an array living on Q restricted to the subcube P."""
    w = 1 << (J - P.level)
    shift = P.level - Q.level
    sl = tuple(slice((p - (q << shift)) * w, (p - (q << shift) + 1) * w) for p, q in zip(P.index, Q.index))
    return vQ[sl]


# ---------------------------------------------------------------------------
# sparse families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseConfig:
    """eta for the stopping time; s, p, r for the test-function builders."""

    eta: float = 0.5
    dim: int = 1
    s: float = 1.0
    p: Optional[float] = None
    r: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        for name in ("s", "p", "r"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def eta_prime(self) -> float:
        return (1.0 - self.eta) / 2 ** (self.dim + 2)

    @property
    def sp(self) -> float:
        if self.p is None:
            raise ValueError("config has no p")
        return self.s * self.p

    @property
    def t(self) -> float:
        if self.r is None:
            raise ValueError("config has no r")
        return self.r / self.sp


@dataclass(frozen=True, eq=False)
class SparseEntry:
    cube: DyadicCube
    lam: Optional[int]  # None encodes lambda = -inf
    witness: np.ndarray  # boolean mask on the cells of ``cube``
    gamma: float = 0.0

    @property
    def contributes(self) -> bool:
        return self.lam is not None


@dataclass(frozen=True, eq=False)
class SparseFamily:
    eta: float
    dim: int
    resolution: int
    entries: tuple

    def contributing(self):
        return [e for e in self.entries if e.contributes]

    def cubes(self):
        return [e.cube for e in self.entries]

    def dominator(self, use_gamma: bool = False) -> np.ndarray:
        J = self.resolution
        out = np.zeros((1 << J,) * self.dim)
        for e in self.entries:
            if e.contributes:
                out[e.cube.slices(J)] += e.gamma if use_gamma else 2.0 ** e.lam
        return out

    def witness_grid(self) -> np.ndarray:
        """Number of witness sets covering each cell."""
        J = self.resolution
        cnt = np.zeros((1 << J,) * self.dim, dtype=int)
        for e in self.entries:
            cnt[e.cube.slices(J)] += e.witness
        return cnt

    def verify(self) -> dict:
        """Exact sparseness checks: disjoint witnesses and |E_Q| >= eta |Q|."""
        disjoint = bool(self.witness_grid().max(initial=0) <= 1)
        ratios = [e.witness.mean() for e in self.entries]
        worst = float(min(ratios)) if ratios else 1.0
        return {"disjoint": disjoint, "witness_measure": worst >= self.eta, "min_witness_ratio": worst}

    def to_json(self) -> dict:
        J = self.resolution
        entries = []
        for e in self.entries:
            origin = [i << (J - e.cube.level) for i in e.cube.index]
            cells = [[int(o + c) for o, c in zip(origin, idx)] for idx in np.argwhere(e.witness)]
            entries.append({"cube": e.cube.to_json(), "lambda": e.lam, "gamma": e.gamma, "witness_cells": cells})
        return {"eta": self.eta, "dim": self.dim, "resolution": J, "entries": entries}


@dataclass
class Certificate:
    checks: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values() if v is not None)

    def record(self, name: str, ok: Optional[bool], detail: str = ""):
        self.checks[name] = ok
        if ok is False:
            self.failures.append(f"{name}: {detail}" if detail else name)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(sorted(self.checks.items())),
            "constants": dict(sorted(self.constants.items())),
            "failures": list(self.failures),
        }


class CertificationError(RuntimeError):
    def __init__(self, cert: Certificate):
        super().__init__("; ".join(cert.failures))
        self.certificate = cert


def _select_children(bad: np.ndarray, Q: DyadicCube, J: int) -> list[DyadicCube]:
    """Maximal P strictly inside Q with |E cap P| > |P| / 2^(n+1)."""
    dim = Q.dim
    thresh = 1.0 / (1 << (dim + 1))
    chosen: list[DyadicCube] = []
    covered = np.zeros(bad.shape, dtype=bool)
    for level in range(Q.level + 1, J + 1):
        rel = level - Q.level
        dens = _block_reduce(bad.astype(float), dim, rel, np.mean) if rel < J - Q.level else bad.astype(float)
        cov = _block_reduce(covered, dim, rel, np.any) if rel < J - Q.level else covered
        hits = (dens > thresh) & ~cov
        if not np.any(hits):
            continue
        w = 1 << (J - level)
        for idx in np.argwhere(hits):
            P = DyadicCube(level, tuple(int(q << rel) + int(i) for q, i in zip(Q.index, idx)))
            chosen.append(P)
            covered[tuple(slice(int(i) * w, (int(i) + 1) * w) for i in idx)] = True
    return chosen


def llo_dominate(loc: Localization, Q0: DyadicCube, cfg: SparseConfig, strict: bool = False):
    """Stopping-time family for ``loc`` inside ``Q0`` with its certificate.

    Returns ``(family, certificate)``.  With ``strict=True`` a failed check
    raises :class:`CertificationError` instead of being reported.
    """
    J = loc.resolution
    if Q0.level > J:
        raise ResolutionError("Q0 finer than the localization grid")
    if cfg.dim != loc.dim:
        raise ValueError("config dimension does not match the localization")
    h = 2.0 ** (-loc.dim * J)
    ep = cfg.eta_prime
    entries: list[SparseEntry] = []
    measure_ratios: list[float] = []
    cond_ok = True
    stack = [Q0]
    while stack:
        Q = stack.pop()
        v = np.abs(loc.fq(Q))
        ms = loc.sharp(Q)
        t = ep * Q.measure
        g1 = decreasing_rearrangement(v, t, h)
        g2 = decreasing_rearrangement(ms, t, h) if np.any(ms) else 0.0
        gamma = g1 + g2
        bad = (v > g1) | (ms > g2)
        kids = _select_children(bad, Q, J)
        witness = np.ones(v.shape, dtype=bool)
        for P in kids:
            witness[_local_slices(P, Q, J)] = False
        lam = ceil_log2(gamma) if gamma > 0 else None
        if lam is not None and loc.sharp_vanishes:
            above = float((v > 2.0 ** (lam - 1)).sum()) * h
            measure_ratios.append(above / (ep * Q.measure))
        entries.append(SparseEntry(Q, lam, witness, gamma))
        for P in kids:
            if not loc.check_condition([(P, Q)]):
                cond_ok = False
        stack.extend(reversed(kids))
    entries.sort(key=lambda e: (e.cube.level, e.cube.index))
    fam = SparseFamily(cfg.eta, loc.dim, J, tuple(entries))
    cert = certify(fam, loc, Q0)
    cert.record("localization_condition", cond_ok, "|f_PQ| > |f_P| + |f_Q| on a selected pair")
    if loc.sharp_vanishes:
        worst = min(measure_ratios) if measure_ratios else math.inf
        cert.constants["min_measure_ratio"] = worst
        cert.record("measure_bound", worst > 1.0, f"eta'|Q| >= |{{f_Q > 2^(lambda-1)}}|, ratio {worst}")
    else:
        cert.record("measure_bound", None)
    if strict and not cert.passed:
        raise CertificationError(cert)
    return fam, cert


def _local_slices(P: DyadicCube, Q: DyadicCube, J: int):
    w = 1 << (J - P.level)
    shift = P.level - Q.level
    return tuple(slice((p - (q << shift)) * w, (p - (q << shift) + 1) * w) for p, q in zip(P.index, Q.index))


def certify(fam: SparseFamily, loc: Localization, Q0: DyadicCube) -> Certificate:
    cert = Certificate()
    basic = fam.verify()
    cert.constants["min_witness_ratio"] = basic["min_witness_ratio"]
    cert.record("disjoint_witnesses", basic["disjoint"], "two witness sets overlap")
    cert.record("witness_measure", basic["witness_measure"], f"min |E_Q|/|Q| = {basic['min_witness_ratio']}")
    inside = all(Q0.contains(e.cube) for e in fam.entries)
    cert.record("cubes_inside_root", inside, "a cube leaves Q0")
    J = fam.resolution
    target = np.abs(loc.fq(Q0))
    sl = Q0.slices(J)
    for key, use_gamma in (("C", False), ("C_gamma", True)):
        dom = fam.dominator(use_gamma)[sl]
        if np.any((dom <= 0) & (target > 0)):
            c = math.inf
        else:
            c = float(np.max(np.divide(target, dom, out=np.zeros_like(target), where=dom > 0), initial=0.0))
        cert.constants[key] = c
    cert.record("domination", math.isfinite(cert.constants["C"]), "f_Q0 not dominated on some cell")
    return cert


def sparse_lp_bounds(fam: SparseFamily, a: Mapping[DyadicCube, float], p: float,
                     cert: Optional[Certificate] = None) -> dict:
    """Both sides of the sparse L^p sandwich for coefficients ``a`` on ``fam``."""
    if cert is not None and not cert.passed:
        raise ValueError("family failed certification")
    if not fam.verify()["disjoint"] or not fam.verify()["witness_measure"]:
        raise ValueError("family is not sparse")
    J = fam.resolution
    grid = np.zeros((1 << J,) * fam.dim)
    mass = 0.0
    for e in fam.entries:
        c = float(a.get(e.cube, 0.0))
        if c < 0:
            raise ValueError("coefficients must be nonnegative")
        grid[e.cube.slices(J)] += c
        mass += c ** p * e.cube.measure
    middle = float((grid ** p).mean() ** (1.0 / p))
    base = mass ** (1.0 / p)
    lower = fam.eta ** (1.0 / p) * base
    upper = base / fam.eta
    return {
        "lower": lower,
        "middle": middle,
        "upper": upper,
        "lower_constant": lower / middle if middle > 0 else 0.0,
        "upper_constant": middle / upper if upper > 0 else 0.0,
    }


# ---------------------------------------------------------------------------
# level sets and the T operator
# ---------------------------------------------------------------------------


def level_set_maximal_cubes(G: Signal, k: int) -> list[DyadicCube]:
    """Maximal dyadic cubes inside {G > 2^k}, ordered by (level, index)."""
    thr = 2.0 ** k
    J, dim = G.resolution, G.dim
    covered = np.zeros(G.values.shape, dtype=bool)
    out = []
    for level in range(J + 1):
        mins = _block_reduce(G.values, dim, level, np.min) if level < J else G.values
        cov = _block_reduce(covered, dim, level, np.any) if level < J else covered
        hits = (mins > thr) & ~cov
        w = 1 << (J - level)
        for idx in np.argwhere(hits):
            out.append(DyadicCube(level, tuple(int(i) for i in idx)))
            covered[tuple(slice(int(i) * w, (int(i) + 1) * w) for i in idx)] = True
    return out


def level_range(G: Signal) -> tuple[Optional[int], Optional[int]]:
    """(k0, kmax): {G > 2^k} equals supp G for k <= k0 and is empty for k > kmax."""
    pos = G.values[G.values > 0]
    if pos.size == 0:
        return None, None
    return ceil_log2(float(pos.min())) - 1, ceil_log2(float(pos.max())) - 1


def layer_cake(G: Signal, r: float) -> dict:
    """Both sides of ||G||_r^r ~ sum_k 2^{rk} |{G > 2^k}|, tail summed in closed form."""
    k0, kmax = level_range(G)
    lhs = float((np.abs(G.values) ** r).mean())
    if k0 is None:
        return {"norm_r": lhs, "sum": 0.0, "via_cubes": 0.0}
    h = G.cell_measure
    total = cubes = 0.0
    for k in range(k0, kmax + 1):
        meas = float((G.values > 2.0 ** k).sum()) * h
        cmeas = sum(Q.measure for Q in level_set_maximal_cubes(G, k))
        wk = 2.0 ** (r * k) / (1 - 2.0 ** -r) if k == k0 else 2.0 ** (r * k)
        total += wk * meas
        cubes += wk * cmeas
    return {"norm_r": lhs, "sum": total, "via_cubes": cubes}


def apply_T(gq: CubeWeights, f: Signal, s: float) -> Signal:
    """T(f) = sum_R |<f>_R|^s g_R chi_R at the resolution of ``gq``."""
    J = gq.resolution
    if f.resolution < J:
        raise ResolutionError("f is coarser than the weights")
    out = np.zeros((1 << J,) * gq.dim)
    for k, w in enumerate(gq.levels):
        if not np.any(w):
            continue
        avg = np.abs(_block_means(f.values, f.dim, k)) ** s
        out += _upsample(avg * w, gq.dim, J)
    return Signal(gq.dim, J, out)


def apply_T_batch(levels, fvals: np.ndarray, dim: int, s: float) -> np.ndarray:
    """Vectorised T over a leading batch axis of ``fvals``."""
    J = len(levels) - 1
    means = _pyramid(fvals, dim, J)
    out = np.abs(means[0]) ** s * levels[0][None]
    for k in range(1, J + 1):
        out = _upsample(out, dim, k)
        if np.any(levels[k]):
            out = out + np.abs(means[k]) ** s * levels[k][None]
    return out


# ---------------------------------------------------------------------------
# explicit test functions
# ---------------------------------------------------------------------------


def build_case1_testfn(fam: SparseFamily, cfg: SparseConfig):
    """f = sum 2^{t lambda_Q} chi_Q over the contributing cubes (needs sp > 1).

    Returns ``(f, report)`` with the minimal ratio <f>_R / 2^{t lambda_Q}
    over R inside Q and the sparse L^{sp} sandwich constants.
    """
    if not cfg.sp > 1:
        raise ValueError(f"sparse test function needs sp > 1, got {cfg.sp}")
    J, dim, t = fam.resolution, fam.dim, cfg.t
    vals = np.zeros((1 << J,) * dim)
    coeffs = {}
    for e in fam.contributing():
        coeffs[e.cube] = 2.0 ** (t * e.lam)
        vals[e.cube.slices(J)] += coeffs[e.cube]
    f = Signal(dim, J, vals)
    worst = math.inf
    for e in fam.contributing():
        local = vals[e.cube.slices(J)]
        for rel in range(J - e.cube.level + 1):
            m = _block_reduce(local, dim, rel, np.mean) if rel < J - e.cube.level else local
            worst = min(worst, float(m.min()) / coeffs[e.cube])
    report = {"min_average_ratio": worst if coeffs else 1.0, "averages_ok": (not coeffs) or worst >= 1 - 1e-12}
    if coeffs:
        report["sandwich"] = sparse_lp_bounds(fam, coeffs, cfg.sp)
    return f, report


@dataclass(frozen=True)
class LevelSets:
    """Maximal cubes C_k of {G > 2^k} for k0 <= k <= kmax.

    For k <= k0 the level set is supp G, so C_k = C_{k0}.
    """

    dim: int
    resolution: int
    k0: Optional[int]
    kmax: Optional[int]
    cubes: dict

    @classmethod
    def from_signal(cls, G: Signal) -> "LevelSets":
        if np.any(G.values < 0):
            raise ValueError("level sets are taken of a nonnegative function")
        k0, kmax = level_range(G)
        cubes = {} if k0 is None else {k: level_set_maximal_cubes(G, k) for k in range(k0, kmax + 1)}
        return cls(G.dim, G.resolution, k0, kmax, cubes)

    def weight(self, k: int, x: float) -> float:
        """Coefficient of level k in a sum over all k with the tail folded into k0."""
        return 2.0 ** (x * k) / (1 - 2.0 ** -x) if k == self.k0 else 2.0 ** (x * k)

    def top_level(self) -> np.ndarray:
        """Per cell, the largest k with the cell inside a cube of C_k (-inf off the support)."""
        J = self.resolution
        top = np.full((1 << J,) * self.dim, -np.inf)
        for k, cs in self.cubes.items():
            for Q in cs:
                top[Q.slices(J)] = k
        return top

    def layer_sum(self, r: float) -> float:
        """sum_k 2^{rk} sum_{Q in C_k} |Q| including the tail below k0."""
        return sum(self.weight(k, r) * sum(Q.measure for Q in cs) for k, cs in self.cubes.items())


class ParentOverflow(ResolutionError):
    """A level-set cube is the root, so its parent is outside the model."""


def maximal_parents(cubes: list[DyadicCube]) -> list[DyadicCube]:
    parents = set()
    for Q in cubes:
        if Q.level == 0:
            raise ParentOverflow("a level-set cube is the root; shrink the symbol's support")
        parents.add(Q.parent())
    out = [P for P in parents if not any(R != P and R.contains(P) for R in parents)]
    return sorted(out)


def _tilde_chi(Qp: DyadicCube, J: int) -> tuple:
    """Slices and +-1 pattern of |Q'|^{1/2} h^i_{Q'} with i the first orientation."""
    i = orientations(Qp.dim)[0]
    w = 1 << (J - Qp.level)
    factors = []
    for bit in i:
        v = np.ones(w)
        if bit:
            v[w // 2:] = -1.0
        factors.append(v)
    block = factors[0]
    for v in factors[1:]:
        block = np.multiply.outer(block, v)
    return Qp.slices(J), block


def build_case2_testfn(levels: LevelSets, cfg: SparseConfig):
    """f = sum_k 2^{kt} sum_{Q' in hat C_k} chi~_{Q'} (needs 0 < sp <= 1).

    Returns ``(f, report)``; the report holds the H^{sp}_d bound ratio, the
    average constant c with |<f>_R| >= c 2^{kt}, and the exact checks that
    the tail over strictly larger parents is constant on every R.
    """
    if not 0 < cfg.sp <= 1:
        raise ValueError(f"level-set test function needs 0 < sp <= 1, got {cfg.sp}")
    J, dim, t = levels.resolution, levels.dim, cfg.t
    by_level = np.zeros((J + 1,) + (1 << J,) * dim)
    for k, cs in levels.cubes.items():
        c = levels.weight(k, t)
        for Qp in maximal_parents(cs):
            sl, block = _tilde_chi(Qp, J)
            by_level[(Qp.level,) + sl] += c * block
    vals = by_level.sum(axis=0)
    f = Signal(dim, J, vals)
    report = {}
    from .norms import hp_d_norm

    hsp = hp_d_norm(f, cfg.sp).value ** cfg.sp if np.any(vals) else 0.0
    bound = (1 << dim) * levels.layer_sum(cfg.r) if levels.k0 is not None else 0.0
    report["hsp_norm_power"] = hsp
    report["hsp_bound"] = bound
    report["hsp_ok"] = hsp <= bound * (1 + 1e-12)
    # tail constancy and cancellation of the local part, level by level
    tail_const, local_mean = True, 0.0
    tail = np.zeros_like(vals)
    for m in range(J + 1):
        local = vals - tail
        if m < J:
            spread = _block_reduce(tail, dim, m, np.max) - _block_reduce(tail, dim, m, np.min)
            tail_const &= bool(np.all(spread == 0))
            local_mean = max(local_mean, float(np.abs(_block_reduce(local, dim, m, np.mean)).max()))
        tail = tail + by_level[m]
    report["tail_constant"] = tail_const
    report["local_mean_max"] = local_mean
    c_avg = math.inf
    if levels.k0 is not None:
        top = levels.top_level()
        for m in range(J + 1):
            kr = _block_reduce(top, dim, m, np.min) if m < J else top
            avg = _block_reduce(vals, dim, m, np.mean) if m < J else vals
            ok = np.isfinite(kr)
            if np.any(ok):
                c_avg = min(c_avg, float((np.abs(avg[ok]) / np.exp2(kr[ok] * t)).min()))
    report["average_constant"] = c_avg if math.isfinite(c_avg) else 1.0
    return f, report


def case2_T_claim(gq: CubeWeights, f: Signal, cfg: SparseConfig) -> dict:
    """Check Q in C_k lies in {T f >= c 2^{(st+1)k}} and record c.

    Also checks the pointwise split used to get there: on Q in C_k, the sum
    of g_R over x in R inside the C_{k-1} cube containing Q exceeds 2^{k-1}.
    """
    G = gq.total().values
    J, dim = gq.resolution, gq.dim
    T = apply_T(gq, f, cfg.s).values
    st1 = cfg.s * cfg.t + 1
    pos = G > 0
    if not np.any(pos):
        return {"T_constant": 1.0, "split_ok": True}
    kx = np.zeros(G.shape, dtype=int)
    for idx in np.argwhere(pos):
        kx[tuple(idx)] = ceil_log2(float(G[tuple(idx)])) - 1
    ratios = T[pos] / np.exp2(st1 * kx[pos])
    # coarsest level L whose cube around x lies in {G > 2^{k_x - 1}}
    F = gq.partial_sums()
    split_ok = True
    thr = np.exp2(kx - 1.0)
    coarsest = np.full(G.shape, J + 1)
    for L in range(J, -1, -1):
        mins = _upsample(_block_reduce(G, dim, L, np.min), dim, J) if L < J else G
        coarsest = np.where(mins > thr, L, coarsest)
    inner = np.take_along_axis(F, coarsest[None], axis=0)[0]
    split_ok = bool(np.all(inner[pos] > thr[pos]))
    return {"T_constant": float(ratios.min()), "split_ok": split_ok}


def case1_T_inclusion(gq: CubeWeights, fam: SparseFamily, f: Signal, cfg: SparseConfig) -> bool:
    """{(g|Q) > 2^{lambda-1}} is inside {T f > 2^{(st+1)lambda - 1}} for every Q."""
    loc = DyadicSumLocalization(gq)
    T = apply_T(gq, f, cfg.s).values
    st1 = cfg.s * cfg.t + 1
    for e in fam.contributing():
        sl = e.cube.slices(gq.resolution)
        lhs = loc.fq(e.cube) > 2.0 ** (e.lam - 1)
        if np.any(lhs & ~(T[sl] > 2.0 ** (st1 * e.lam - 1))):
            return False
    return True


def sparse_s_average_bound(fam: SparseFamily, h: Signal, s: float, r: float) -> float:
    """|| sum_Q <|h|^s>_Q^{1/s} chi_Q ||_r / ||h||_r."""
    if not 0 < s < r:
        raise ValueError("need 0 < s < r")
    if not np.any(h.values):
        raise ValueError("h vanishes identically")
    J = fam.resolution
    hv = h.refine(J).values if h.resolution < J else h.values
    if h.resolution > J:
        raise ResolutionError("h is finer than the family grid")
    acc = np.zeros_like(hv)
    for e in fam.entries:
        sl = e.cube.slices(J)
        acc[sl] += float((np.abs(hv[sl]) ** s).mean() ** (1.0 / s))
    return float((acc ** r).mean() ** (1.0 / r) / (np.abs(hv) ** r).mean() ** (1.0 / r))


def _canonical_witnesses(dim: int, J: int) -> np.ndarray:
    """Indicators of every cube and chi~ of every cube above the grid floor."""
    rows = []
    for level in range(J + 1):
        w = 1 << (J - level)
        for idx in itertools.product(range(1 << level), repeat=dim):
            Q = DyadicCube(level, idx)
            v = np.zeros((1 << J,) * dim)
            v[Q.slices(J)] = 1.0
            rows.append(v)
            if w > 1:
                sl, block = _tilde_chi(Q, J)
                v = np.zeros((1 << J,) * dim)
                v[sl] = block
                rows.append(v)
    return np.stack(rows)


def assumption_ratios(gq: CubeWeights, fvals: np.ndarray, s: float, p: float, q: float) -> np.ndarray:
    """||T f||_q / ||f||_{H^{sp}_d}^s for a batch of functions on the grid."""
    dim, J = gq.dim, gq.resolution
    axes = tuple(range(1, dim + 1))
    T = apply_T_batch(gq.levels, fvals, dim, s)
    num = (T ** q).mean(axis=axes) ** (1.0 / q)
    den = ((_maximal(fvals, dim, J) ** (s * p)).mean(axis=axes)) ** (1.0 / p)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def t_assumption_trial(gq: CubeWeights, s: float, p: float, q: float, r: float,
                    canonical: bool = True) -> dict:
    """Empirical constant A of the T-assumption against ||sum g_Q chi_Q||_r.

    The witness set is the explicit test function of the matching case, plus
    (with ``canonical``) cube indicators and chi~ atoms.
    """
    if abs(1 / q - 1 / p - 1 / r) > 1e-12 * (1 / q):
        raise ValueError("need 1/q = 1/p + 1/r")
    cfg = SparseConfig(eta=0.5, dim=gq.dim, s=s, p=p, r=r)
    G = gq.total()
    gnorm = float((G.values ** r).mean() ** (1.0 / r))
    out = {"case": 1 if cfg.sp > 1 else 2, "G_norm": gnorm}
    if not np.any(G.values):
        out.update(A_emp=0.0, ratio=1.0, constructed_ratio=1.0, checks={})
        return out
    if cfg.sp > 1:
        fam, cert = llo_dominate(DyadicSumLocalization(gq), DyadicCube.root(gq.dim), cfg)
        f, rep = build_case1_testfn(fam, cfg)
        checks = {
            "certificate": cert.passed,
            "averages": rep["averages_ok"],
            "T_inclusion": case1_T_inclusion(gq, fam, f, cfg),
        }
        out["sandwich"] = rep.get("sandwich")
    else:
        levels = LevelSets.from_signal(G)
        f, rep = build_case2_testfn(levels, cfg)
        claim = case2_T_claim(gq, f, cfg)
        checks = {
            "hsp_bound": rep["hsp_ok"],
            "tail_constant": rep["tail_constant"],
            "split": claim["split_ok"],
        }
        out["average_constant"] = rep["average_constant"]
        out["T_constant"] = claim["T_constant"]
    built = assumption_ratios(gq, f.values[None], s, p, q)[0]
    a = built
    if canonical:
        a = max(a, float(assumption_ratios(gq, _canonical_witnesses(gq.dim, gq.resolution), s, p, q).max()))
    out.update(A_emp=float(a), ratio=gnorm / a if a > 0 else math.inf,
               constructed_ratio=gnorm / built if built > 0 else math.inf, checks=checks)
    return out
