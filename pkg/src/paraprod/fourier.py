"""Littlewood-Paley calculus on the torus [0, 1) with N = 2**J samples.

All convolutions are DFT multipliers, so every identity that telescopes
(partition of unity, reconstruction, residue-class separation) holds to
rounding.  Frequencies are integers k with |k| <= N/2; a multiplier with
profile m acts by ``fft(f) * m(k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dyadic import DyadicCube, ResolutionError, decreasing_rearrangement
from .sparse import Localization, SparseConfig, _block_reduce, _local_slices, llo_dominate


# ---------------------------------------------------------------------------
# smooth cutoffs
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _step_table(n: int = 1 << 16):
    s = np.linspace(-1.0, 1.0, n + 1)
    inner = s[1:-1]
    bump = np.zeros_like(s)
    bump[1:-1] = np.exp(-1.0 / (1.0 - inner * inner))
    cum = np.concatenate([[0.0], np.cumsum((bump[1:] + bump[:-1]) * 0.5)])
    cum /= cum[-1]
    x = (s + 1.0) / 2.0
    return x, cum


def smooth_step(x) -> np.ndarray:
    """0 for x <= 0, 1 for x >= 1; the normalised integral of exp(-1/(1-s^2)) in between."""
    xs, cum = _step_table()
    return np.interp(np.asarray(x, dtype=float), xs, cum, left=0.0, right=1.0)


def cutoff(xi, inner: float, outer: float) -> np.ndarray:
    """1 on |xi| <= inner, 0 on |xi| >= outer, smooth in between."""
    return 1.0 - smooth_step((np.abs(xi) - inner) / (outer - inner))


# ---------------------------------------------------------------------------
# signals and the multiplier bank
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicSignal:
    """Complex samples f(i/N), i = 0..N-1, N a power of two."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).ravel()
        n = v.size
        if n == 0 or n & (n - 1):
            raise ResolutionError(f"size {n} is not a power of two")
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def resolution(self) -> int:
        return self.size.bit_length() - 1

    def spectrum(self) -> np.ndarray:
        """Fourier coefficients hat f(k) in numpy FFT order."""
        return np.fft.fft(self.values) / self.size

    @classmethod
    def from_spectrum(cls, spec: np.ndarray) -> "PeriodicSignal":
        return cls(np.fft.ifft(spec) * spec.size)

    @classmethod
    def exponential(cls, k: int, N: int, amplitude: complex = 1.0) -> "PeriodicSignal":
        x = np.arange(N) / N
        return cls(amplitude * np.exp(2j * np.pi * k * x))

    @classmethod
    def constant(cls, c: complex, N: int) -> "PeriodicSignal":
        return cls(np.full(N, c, dtype=complex))

    def multiply(self, m: np.ndarray) -> "PeriodicSignal":
        return PeriodicSignal(np.fft.ifft(np.fft.fft(self.values) * m))

    def real(self) -> np.ndarray:
        return self.values.real.copy()

    def to_json(self) -> dict:
        return {"size": self.size, "real": self.values.real.tolist(), "imag": self.values.imag.tolist()}


def frequencies(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, 1.0 / N)


@dataclass(frozen=True, eq=False)
class LPFamily:
    """Multiplier bank psi_j, the low-pass phi and the widened theta annuli.

    ``Phi`` is 1 on |xi| <= 2a and 0 on |xi| >= b, so psi_j(k) =
    Phi(2^-j k) - Phi(2^-j+1 k) lives on a 2^j <= |k| <= b 2^j.  ``phi`` is 1
    on |xi| <= c and 0 on |xi| >= a'.
    """

    resolution: int
    jmin: int
    jmax: int
    a: float
    b: float
    a_prime: float
    c: float
    m: int
    certificate: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return 1 << self.resolution

    @property
    def scales(self) -> range:
        return range(self.jmin, self.jmax + 1)

    @property
    def k(self) -> np.ndarray:
        return frequencies(self.size)

    def Phi_hat(self, j: int) -> np.ndarray:
        return cutoff(self.k * 2.0 ** -j, 2 * self.a, self.b)

    def psi_hat(self, j: int) -> np.ndarray:
        return self.Phi_hat(j) - self.Phi_hat(j - 1)

    def phi_hat(self, j: int) -> np.ndarray:
        return cutoff(self.k * 2.0 ** -j, self.c, self.a_prime)

    def theta_hat(self, j: int) -> np.ndarray:
        ak = np.abs(self.k)
        return ((ak >= (self.a - self.a_prime) * 2.0 ** j) & (ak <= (self.b + self.a_prime) * 2.0 ** j)).astype(float)

    def band(self) -> tuple[float, float]:
        """|k| range on which sum_j psi_j = 1."""
        return self.b * 2.0 ** (self.jmin - 1), 2 * self.a * 2.0 ** self.jmax

    def to_json(self) -> dict:
        return {
            "resolution": self.resolution,
            "jmin": self.jmin,
            "jmax": self.jmax,
            "a": self.a,
            "b": self.b,
            "a_prime": self.a_prime,
            "c": self.c,
            "m": self.m,
            "frequencies": self.k.tolist(),
            "psi_hat": {str(j): self.psi_hat(j).tolist() for j in self.scales},
            "phi_hat": {str(j): self.phi_hat(j).tolist() for j in self.scales},
            "certificate": dict(sorted(self.certificate.items())),
        }


def default_m(a: float, b: float, a_prime: float) -> int:
    base = math.ceil(math.log2(b / a)) + 2
    sep = 1
    while 2 ** sep <= (b + a_prime) / (a - a_prime):
        sep += 1
    return max(base, sep)


def build_lp_family(J: int, a: float = 0.5, b: float = 2.0, a_prime: float = 0.25, c: Optional[float] = None,
                    jmin: int = 0, jmax: Optional[int] = None, m: Optional[int] = None) -> LPFamily:
    if not 0 < a_prime < a < b:
        raise ValueError("need 0 < a' < a < b")
    if not b > 2 * a:
        raise ValueError("need b > 2a so the cutoff has room to decay")
    c = a_prime / 2 if c is None else c
    if not 0 < c < a_prime:
        raise ValueError("need 0 < c < a'")
    N = 1 << J
    if jmax is None:
        jmax = math.floor(math.log2((N / 2) / (b + a_prime)))
    if (b + a_prime) * 2.0 ** jmax > N / 2:
        raise ValueError(f"scale {jmax} aliases on a grid of {N} samples")
    if jmax < jmin:
        raise ValueError(f"no admissible scales on a grid of {N} samples")
    m = default_m(a, b, a_prime) if m is None else m
    fam = LPFamily(J, jmin, jmax, a, b, a_prime, c, m)
    ak = np.abs(fam.k)
    lo, hi = fam.band()
    total = sum(fam.psi_hat(j) for j in fam.scales)
    inband = (ak >= lo) & (ak <= hi)
    resid = float(np.abs(1.0 - total[inband]).max()) if np.any(inband) else 0.0
    support_ok = all(
        not np.any(fam.psi_hat(j)[(ak < a * 2.0 ** j) | (ak > b * 2.0 ** j)]) for j in fam.scales
    )
    low = fam.Phi_hat(jmin - 1)
    telescope = float(np.abs(total + low - fam.Phi_hat(jmax)).max())
    fam.certificate.update(
        partition_residual=resid,
        partition_ok=resid <= 1e-12,
        support_ok=support_ok,
        telescope_residual=telescope,
        band=[lo, hi],
        separation_ok=all(residue_separation(fam, i) for i in range(m)),
    )
    return fam


def _support(mask: np.ndarray) -> np.ndarray:
    return np.flatnonzero(mask)


def _minkowski(a: np.ndarray, b: np.ndarray, N: int) -> np.ndarray:
    """Boolean mask of (A + B) mod N for index masks A, B."""
    out = np.zeros(N, dtype=bool)
    for x in np.flatnonzero(a):
        out |= np.roll(b, x)
    return out


def term_support(fam: LPFamily, j: int) -> np.ndarray:
    """Frequencies reachable by (phi_{2^-j} * f) Delta_j g for any f, g."""
    return _minkowski(fam.phi_hat(j) != 0, fam.psi_hat(j) != 0, fam.size)


def residue_separation(fam: LPFamily, i: int) -> bool:
    """Terms j = i mod m have pairwise disjoint frequency supports, without wrap-around."""
    N = fam.size
    used = np.zeros(N, dtype=bool)
    k = np.abs(fam.k)
    for j in fam.scales:
        if (j - i) % fam.m:
            continue
        s = term_support(fam, j)
        if np.any(s & used):
            return False
        # wrap-around would put mass outside the widened annulus
        if np.any(s & ((k < (fam.a - fam.a_prime) * 2.0 ** j) | (k > (fam.b + fam.a_prime) * 2.0 ** j))):
            return False
        used |= s
    return True


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def _check(fam: LPFamily, *fs: PeriodicSignal):
    for f in fs:
        if f.size != fam.size:
            raise ResolutionError(f"signal of size {f.size} on a bank of size {fam.size}")


def lp_pieces(f: PeriodicSignal, fam: LPFamily) -> dict:
    _check(fam, f)
    F = np.fft.fft(f.values)
    return {j: PeriodicSignal(np.fft.ifft(F * fam.psi_hat(j))) for j in fam.scales}


def lp_square(f: PeriodicSignal, fam: LPFamily) -> np.ndarray:
    """S_psi(f) per sample."""
    return np.sqrt(sum(np.abs(p.values) ** 2 for p in lp_pieces(f, fam).values()))


def low_pass(f: PeriodicSignal, fam: LPFamily, j: int) -> PeriodicSignal:
    return f.multiply(fam.phi_hat(j))


def _terms(g: PeriodicSignal, f: PeriodicSignal, fam: LPFamily, residue=None) -> dict:
    _check(fam, f, g)
    G, F = np.fft.fft(g.values), np.fft.fft(f.values)
    out = {}
    for j in fam.scales:
        if residue is not None and (j - residue) % fam.m:
            continue
        out[j] = np.fft.ifft(F * fam.phi_hat(j)) * np.fft.ifft(G * fam.psi_hat(j))
    return out


def fourier_paraproduct(g: PeriodicSignal, f: PeriodicSignal, fam: LPFamily, residue: Optional[int] = None):
    """sum_j (phi_{2^-j} * f) Delta_j g, over one residue class mod m or all scales.

    Returns ``(Pi, separated)``; ``separated`` is the exact disjointness of the
    term spectra (None when summing all scales).
    """
    terms = _terms(g, f, fam, residue)
    total = sum(terms.values()) if terms else np.zeros(fam.size, dtype=complex)
    sep = None if residue is None else residue_separation(fam, residue)
    return PeriodicSignal(total), sep


def theta_square(h: PeriodicSignal, fam: LPFamily, residue: int) -> np.ndarray:
    """S_theta restricted to scales j = residue mod m."""
    H = np.fft.fft(h.values)
    acc = np.zeros(fam.size)
    for j in fam.scales:
        if (j - residue) % fam.m == 0:
            acc += np.abs(np.fft.ifft(H * fam.theta_hat(j))) ** 2
    return np.sqrt(acc)


def sublinear_square(g: PeriodicSignal, f: PeriodicSignal, fam: LPFamily, residue: Optional[int] = None) -> np.ndarray:
    """S_{g,phi}(f) = (sum_j |phi_{2^-j} * f Delta_j g|^2)^(1/2) per sample."""
    terms = _terms(g, f, fam, residue)
    return np.sqrt(sum(np.abs(t) ** 2 for t in terms.values())) if terms else np.zeros(fam.size)


# ---------------------------------------------------------------------------
# norms on the torus
# ---------------------------------------------------------------------------


def lp_norm(v: np.ndarray, p: float) -> float:
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max())
    return float((a ** p).mean() ** (1.0 / p))


def maximal_smooth(f: PeriodicSignal, fam: LPFamily) -> np.ndarray:
    """max over j = -1..J of |Phi_{2^-j} * f| (dyadic radial maximal function)."""
    F = np.fft.fft(f.values)
    out = np.zeros(fam.size)
    for j in range(-1, fam.resolution + 1):
        out = np.maximum(out, np.abs(np.fft.ifft(F * fam.Phi_hat(j))))
    return out


def hp_norm(f: PeriodicSignal, fam: LPFamily, p: float) -> float:
    return lp_norm(maximal_smooth(f, fam), p)


def hp_norm_batch(F: np.ndarray, fam: LPFamily, p: float) -> np.ndarray:
    """H^p norms for a batch of spectra (rows of raw FFTs)."""
    out = np.zeros(F.shape)
    for j in range(-1, fam.resolution + 1):
        out = np.maximum(out, np.abs(np.fft.ifft(F * fam.Phi_hat(j)[None], axis=1)))
    return (out ** p).mean(axis=1) ** (1.0 / p)


def dot_hr_norm(g: PeriodicSignal, fam: LPFamily, r: float) -> float:
    return lp_norm(lp_square(g, fam), r)


def lipschitz_norm(g: PeriodicSignal, fam: LPFamily, alpha: float) -> float:
    """sup_j 2^{j alpha} ||Delta_j g||_inf."""
    return max(2.0 ** (j * alpha) * float(np.abs(p.values).max()) for j, p in lp_pieces(g, fam).items())


def bmo_norm(g: PeriodicSignal, p: float = 1.0, real: bool = True) -> float:
    """sup of osc_p over cyclic windows of 2^m samples, m = 0..J."""
    v = g.values.real if real else g.values
    N = v.size
    best = 0.0
    ext = np.concatenate([v, v])
    for m in range(1, N.bit_length()):
        L = 1 << m
        win = sliding_window_view(ext[: N + L - 1], L)
        dev = np.abs(win - win.mean(axis=1, keepdims=True))
        osc = dev.mean(axis=1) if p == 1 else (dev ** p).mean(axis=1) ** (1.0 / p)
        best = max(best, float(osc.max()))
    return best


# ---------------------------------------------------------------------------
# verification helpers
# ---------------------------------------------------------------------------


def random_band_signal(rng: np.random.Generator, fam: LPFamily, density: float = 0.5,
                       decay: float = 0.0) -> PeriodicSignal:
    """Real signal with Gaussian spectrum on the covered band, thinned and weighted by |k|^-decay."""
    N = fam.size
    lo, hi = fam.band()
    k = np.arange(1, N // 2)
    keep = (k >= lo) & (k <= hi) & (rng.random(k.size) < density)
    coef = (rng.normal(size=k.size) + 1j * rng.normal(size=k.size)) * keep * k ** -decay
    spec = np.zeros(N, dtype=complex)
    spec[1: N // 2] = coef
    spec[-1: -N // 2: -1] = np.conj(coef)
    return PeriodicSignal(np.fft.ifft(spec).real * N)


def bump_profile(N: int, center_band: tuple[float, float], shift: float = 0.0) -> PeriodicSignal:
    """Real bump with spectrum inside lo < |k| < hi and value 1 at ``shift``."""
    lo, hi = center_band
    k = frequencies(N)
    w = np.where((np.abs(k) > lo) & (np.abs(k) < hi),
                 np.sin(np.pi * (np.abs(k) - lo) / (hi - lo)) ** 2, 0.0)
    if not np.any(w):
        raise ValueError(f"no integer frequency strictly inside ({lo}, {hi})")
    spec = w * np.exp(-2j * np.pi * k * shift)
    v = np.fft.ifft(spec) * N
    return PeriodicSignal(v / w.sum())


def modulated_bump(fam: LPFamily, j: int, x0: float) -> PeriodicSignal:
    """f_{j,x0}: spectrum in c 2^{j-1} < |k| < c 2^j, equal to 1 at x0."""
    return bump_profile(fam.size, (fam.c * 2.0 ** (j - 1), fam.c * 2.0 ** j), x0)


def bump_scales(fam: LPFamily) -> list[int]:
    """Scales j with an integer frequency strictly inside (c 2^{j-1}, c 2^j)."""
    out = []
    for j in fam.scales:
        lo, hi = fam.c * 2.0 ** (j - 1), fam.c * 2.0 ** j
        if math.floor(hi - 1e-12) > lo:
            out.append(j)
    return out


def modulated_bump_test(g: PeriodicSignal, fam: LPFamily, p: float, p_star: float, trials: int,
                        rng: Optional[np.random.Generator] = None, alpha: Optional[float] = None) -> dict:
    """Lower bound A_emp from modulated bumps and sup_j 2^{j alpha}|Delta_j g|_inf / A_emp."""
    _check(fam, g)
    if alpha is None:
        alpha = 1.0 / p - 1.0 / p_star
    scales = bump_scales(fam)
    if not scales:
        raise ValueError("no scale supports a modulated bump on this grid")
    rng = rng or np.random.default_rng(0)
    pieces = lp_pieces(g, fam)
    a_emp, best = 0.0, None
    per_scale = {}
    ppn = 0.0
    for j in scales:
        d = pieces[j].values
        # centres: where |Delta_j g| peaks plus random points
        xs = [float(np.argmax(np.abs(d))) / fam.size] + list(rng.random(max(trials - 1, 0)))
        top = 0.0
        for x0 in xs:
            f = modulated_bump(fam, j, x0)
            prod = f.values * d
            num = lp_norm(prod, p_star)
            val = num / hp_norm(f, fam, p)
            if num > 0:
                ppn = max(ppn, lp_norm(prod, math.inf) / (2.0 ** (j / p_star) * num))
            top = max(top, val)
            if val > a_emp:
                a_emp, best = val, (j, x0)
        per_scale[j] = top
    lam = max(2.0 ** (j * alpha) * float(np.abs(pieces[j].values).max()) for j in scales)
    return {
        "A_emp": a_emp,
        "witness": {"j": best[0], "x0": best[1]} if best else None,
        "lipschitz": lam,
        "ratio": lam / a_emp if a_emp > 0 else math.inf,
        "per_scale": per_scale,
        "ppn_constant": ppn,
    }


def ppn_check(f: PeriodicSignal, t: float, p: float, q: float, c: float = 0.5) -> dict:
    """|f|_q / (t^{1/p - 1/q} |f|_p) and the lattice-sampling ratio at spacing h <= c/t."""
    if p > q:
        raise ValueError("need p <= q")
    spec = f.spectrum()
    k = frequencies(f.size)
    if np.any(np.abs(spec[np.abs(k) > t]) > 1e-10 * max(1.0, np.abs(spec).max())):
        raise ValueError("spectrum exceeds the stated bandwidth")
    v = f.values
    ratio = lp_norm(v, q) / (t ** (1.0 / p - 1.0 / q) * lp_norm(v, p))
    M = 1
    while M < t / c:
        M *= 2
    M = min(M, f.size)
    samples = v[:: f.size // M]
    if math.isinf(p):
        sampled = float(np.abs(samples).max())
    else:
        sampled = float(((np.abs(samples) ** p).sum() / M) ** (1.0 / p))
    return {"ratio": ratio, "sampling_ratio": sampled / lp_norm(v, p), "spacing": 1.0 / M}


def gaussian_multiplier(N: int, t: float) -> np.ndarray:
    """Fourier multiplier of the periodised Gaussian phi_t, phi(x) = exp(-pi x^2)."""
    k = frequencies(N)
    return np.exp(-np.pi * (t * k) ** 2)


def bmo_convolution_bound(g: PeriodicSignal, start: int, length: int, t: float, bmo: Optional[float] = None) -> float:
    """sup_{x in Q} |phi_t * (g - <g>_Q)| / ((1 + |log(t/l(Q))|) |g|_BMO), Q = cells [start, start+length)."""
    N = g.size
    lQ = length / N
    if not t > lQ:
        raise ValueError("need t > l(Q)")
    idx = (start + np.arange(length)) % N
    v = g.values.real
    bmo = bmo_norm(g) if bmo is None else bmo
    if bmo == 0:
        return 0.0
    conv = np.fft.ifft(np.fft.fft(v - v[idx].mean()) * gaussian_multiplier(N, t)).real
    return float(np.abs(conv[idx]).max() / ((1 + abs(math.log(t / lQ))) * bmo))


# ---------------------------------------------------------------------------
# operator-norm estimation for S_{g,phi}
# ---------------------------------------------------------------------------


def _ratios(g: PeriodicSignal, fam: LPFamily, Fs: np.ndarray, p: float, q: float) -> np.ndarray:
    """|S_{g,phi} f|_q / |f|_{H^p} for a batch of raw spectra."""
    G = np.fft.fft(g.values)
    acc = np.zeros(Fs.shape)
    for j in fam.scales:
        dg = np.fft.ifft(G * fam.psi_hat(j))
        lf = np.fft.ifft(Fs * fam.phi_hat(j)[None], axis=1)
        acc += np.abs(lf * dg[None]) ** 2
    num = (np.sqrt(acc) ** q).mean(axis=1) ** (1.0 / q)
    den = hp_norm_batch(Fs, fam, p)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def estimate_sublinear_norm(g: PeriodicSignal, fam: LPFamily, p: float, q: float, r: Optional[float] = None,
                            budget: int = 64, rng: Optional[np.random.Generator] = None) -> dict:
    """Lower bound for |S_{g,phi}|_{H^p -> L^q} from structured and random candidates."""
    rng = rng or np.random.default_rng(0)
    N = fam.size
    cands = [np.ones(N)]
    w = lp_square(g, fam)
    expo = [1.0] if r is None else [r / p, 1.0]
    for e in expo:
        if np.any(w):
            cands.append(w ** e)
            for j in fam.scales:
                cands.append(np.fft.ifft(np.fft.fft(w ** e) * fam.Phi_hat(j)).real)
    pieces = lp_pieces(g, fam)
    for j in bump_scales(fam):
        x0 = float(np.argmax(np.abs(pieces[j].values))) / N
        cands.append(modulated_bump(fam, j, x0).values)
    for _ in range(budget):
        v = rng.normal(size=N)
        v = np.fft.ifft(np.fft.fft(v) * fam.Phi_hat(int(rng.integers(fam.jmin, fam.jmax + 1)))).real
        cands.append(np.abs(v) + rng.random() * np.abs(v).mean())
    Fs = np.fft.fft(np.array(cands, dtype=complex), axis=1)
    vals = _ratios(g, fam, Fs, p, q)
    i = int(np.argmax(vals))
    best, bestF = float(vals[i]), Fs[i]
    # multiplicative hill climb on the best candidate
    for _ in range(budget // 4):
        trial = np.fft.ifft(bestF).real * np.exp(0.3 * rng.normal(size=N))
        trial = np.fft.ifft(np.fft.fft(trial) * fam.Phi_hat(fam.jmax)).real
        tF = np.fft.fft(trial)[None]
        val = float(_ratios(g, fam, tF, p, q)[0])
        if val > best:
            best, bestF = val, tF[0]
    return {"lower_bound": best, "candidates_tried": len(cands) + budget // 4, "witness": np.fft.ifft(bestF)}


# ---------------------------------------------------------------------------
# sparse domination of the continuous square function
# ---------------------------------------------------------------------------


class ScaleWindowLocalization(Localization):
    """f_Q = S_alpha(g|Q) and f_{P,Q} the scale window alpha l(P) < 2^-j <= alpha l(Q).

    Samples of the torus signal are identified with the cells of the
    resolution-J dyadic grid of [0, 1).
    """

    name = "scale-window"

    def __init__(self, g: PeriodicSignal, fam: LPFamily, alpha: float):
        super().__init__(1, fam.resolution)
        if not alpha > 1:
            raise ValueError("need alpha > sqrt(n) = 1")
        self.alpha = alpha
        self.fam = fam
        pieces = lp_pieces(g, fam)
        self.energy = {j: np.abs(p.values) ** 2 for j, p in pieces.items()}

    def _window(self, lo_level: Optional[int], hi_level: int) -> np.ndarray:
        """sum of |Delta_j g|^2 over alpha 2^-lo < 2^-j <= alpha 2^-hi (lo None: no lower cut)."""
        acc = np.zeros(self.fam.size)
        la = math.log2(self.alpha)
        for j, e in self.energy.items():
            if j >= hi_level - la - 1e-12 and (lo_level is None or j < lo_level - la - 1e-12):
                acc = acc + e
        return acc

    def fq(self, Q):
        return np.sqrt(self._window(None, Q.level))[Q.slices(self.resolution)]

    def fpq(self, P, Q):
        return np.sqrt(self._window(P.level, Q.level))[Q.slices(self.resolution)][_local_slices(P, Q, self.resolution)]

    def sharp(self, Q):
        J = self.resolution
        sl = Q.slices(J)
        out = np.zeros(sl[0].stop - sl[0].start)
        for L in range(Q.level, J + 1):
            v = np.sqrt(self._window(L, Q.level))[sl]
            rel = L - Q.level
            if rel < J - Q.level:
                osc = _block_reduce(v, 1, rel, np.max) - _block_reduce(v, 1, rel, np.min)
                out = np.maximum(out, np.repeat(osc, 1 << (J - L)))
        return out


def nontangential_gradient_max(g: PeriodicSignal, fam: LPFamily) -> np.ndarray:
    """M*_{grad psi}(g): sup over scales of |(psi')_{2^-j} * g| within distance 2^-j."""
    N = fam.size
    G = np.fft.fft(g.values)
    k = fam.k
    out = np.zeros(N)
    for j in fam.scales:
        # (psi')_{2^-j} * g = 2^-j (psi_{2^-j} * g)'
        d = np.abs(np.fft.ifft(G * fam.psi_hat(j) * (2j * np.pi * k) * 2.0 ** -j))
        rad = max(int(N * 2.0 ** -j), 0)
        ext = np.concatenate([d[-rad:], d, d[:rad]]) if rad else d
        out = np.maximum(out, sliding_window_view(ext, 2 * rad + 1).max(axis=1))
    return out


def continuous_sparse_square(g: PeriodicSignal, fam: LPFamily, alpha: float, R: DyadicCube, s: float = 1.0,
                             eta: float = 0.5):
    """Sparse family for S_alpha(g|R) with the gradient remainder certified.

    Returns ``(family, certificate)``.  The certificate adds the achieved
    constants in S_alpha(g|R) <= C (sum 2^lambda chi_Q + alpha^-1 sum
    <M*^s>_Q^{1/s} chi_Q) and in (m^#_Q)^*(eta'|Q|) <= C' alpha^-1 <M*^s>_Q^{1/s}.
    """
    _check(fam, g)
    if R.dim != 1:
        raise ValueError("the torus model is one-dimensional")
    if alpha * R.side < 2.0 ** -fam.jmax:
        raise ValueError("scale range does not reach alpha l(R)")
    loc = ScaleWindowLocalization(g, fam, alpha)
    cfg = SparseConfig(eta=eta, dim=1)
    famC, cert = llo_dominate(loc, R, cfg)
    J = fam.resolution
    mstar = nontangential_gradient_max(g, fam)
    h = 2.0 ** -J
    rem = np.zeros(fam.size)
    main = np.zeros(fam.size)
    sharp_const = 0.0
    for e in famC.entries:
        sl = e.cube.slices(J)
        avg = float((mstar[sl] ** s).mean() ** (1.0 / s))
        rem[sl] += avg / alpha
        if e.contributes:
            main[sl] += 2.0 ** e.lam
        ms = loc.sharp(e.cube)
        g2 = decreasing_rearrangement(ms, cfg.eta_prime * e.cube.measure, h)
        if g2 > 0:
            sharp_const = max(sharp_const, g2 * alpha / avg if avg > 0 else math.inf)
    target = loc.fq(R)
    dom = (main + rem)[R.slices(J)]
    C = float(np.max(np.divide(target, dom, out=np.zeros_like(target), where=dom > 0), initial=0.0))
    if np.any((dom <= 0) & (target > 0)):
        C = math.inf
    cert.constants["C_remainder"] = C
    cert.constants["sharp_constant"] = sharp_const
    cert.constants["remainder_mass"] = float(rem[R.slices(J)].mean())
    cert.record("remainder_domination", math.isfinite(C), "S_alpha(g|R) not dominated")
    return famC, cert


