"""Compactly supported test function with vanishing moments and a mollified lower bound.

chi~ = chi_[-alpha M, alpha M] + P chi_B', with B' = [2D - 1, 2D + 1] and P of
degree N chosen so chi~ kills every polynomial of degree <= N.  Only the
real line is supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import ndtr

D_CAP = 2.0 ** 20
_DPS = 50


class ConvergenceError(RuntimeError):
    """The far ball never got far enough; the profile decays too slowly."""


@dataclass(frozen=True)
class Profile:
    """A real mollifier with integral 1.  ``cdf`` is optional and speeds up the big-ball term."""

    name: str
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def mass_between(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        if self.cdf is not None:
            return self.cdf(hi) - self.cdf(lo)
        return np.array([self._quad(a, b) for a, b in zip(np.ravel(lo), np.ravel(hi))]).reshape(np.shape(lo))

    def _quad(self, a: float, b: float) -> float:
        # split at the origin: on a wide interval adaptive quadrature can step over the peak
        f = lambda x: float(self.pdf(np.array([x]))[0])  # noqa: E731
        if a < 0 < b:
            return integrate.quad(f, a, 0.0, limit=200)[0] + integrate.quad(f, 0.0, b, limit=200)[0]
        return integrate.quad(f, a, b, limit=200)[0]

    def tail(self, M: float) -> float:
        """integral of |phi| over |x| >= M."""
        f = lambda x: abs(float(self.pdf(np.array([x]))[0]))  # noqa: E731
        return integrate.quad(f, M, np.inf)[0] + integrate.quad(f, -np.inf, -M)[0]


_S = math.sqrt(2 * math.pi)

GAUSSIAN = Profile("gaussian", lambda x: np.exp(-np.pi * np.asarray(x) ** 2), lambda x: ndtr(_S * np.asarray(x)))


def real_part(pdf: Callable, name: str = "real-part") -> Profile:
    """Profile from a possibly complex phi with integral 1: its real part also integrates to 1."""
    return Profile(name, lambda x: np.real(pdf(x)))


@dataclass(frozen=True)
class Atom:
    big_radius: float
    far_center_distance: float
    poly_degree: int
    poly_coeffs: tuple  # P(x) = sum c_b x^b as decimal strings
    local_coeffs: tuple  # P(2D + u) = sum a_b u^b as decimal strings
    dim: int
    alpha: float
    p: float
    profile: str
    certificate: dict = field(default_factory=dict)

    @property
    def far_center(self) -> float:
        return 2.0 * self.far_center_distance

    def poly(self, x) -> np.ndarray:
        u = np.asarray(x, dtype=float) - self.far_center
        return np.polynomial.polynomial.polyval(u, [float(c) for c in self.local_coeffs])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        big = (np.abs(x) <= self.big_radius).astype(float)
        far = np.abs(x - self.far_center) <= 1.0
        return big + np.where(far, self.poly(x), 0.0)

    def moments(self) -> list[float]:
        return exact_moments(self.big_radius, self.far_center, self.local_coeffs, self.poly_degree)

    def to_json(self) -> dict:
        return {
            "big_radius": self.big_radius,
            "far_center_distance": self.far_center_distance,
            "poly_degree": self.poly_degree,
            "poly_coeffs": list(self.poly_coeffs),
            "local_coeffs": list(self.local_coeffs),
            "dim": self.dim,
            "alpha": self.alpha,
            "p": self.p,
            "profile": self.profile,
            "certificate": dict(sorted(self.certificate.items())),
        }


def _poly_integral(coeffs, lo, hi):
    """integral over [lo, hi] of sum coeffs[b] x^b, in mpmath."""
    return sum(c * (mpmath.mpf(hi) ** (b + 1) - mpmath.mpf(lo) ** (b + 1)) / (b + 1) for b, c in enumerate(coeffs))


def _shift(coeffs, s):
    """Coefficients of q(x - s) from those of q(u)."""
    out = [mpmath.mpf(0)] * len(coeffs)
    for b, c in enumerate(coeffs):
        for k in range(b + 1):
            out[k] += c * mpmath.binomial(b, k) * (-s) ** (b - k)
    return out


def exact_moments(R: float, center: float, local: tuple, N: int) -> list[float]:
    """integral of chi~ x^beta for beta = 0..N, evaluated in extended precision."""
    with mpmath.workdps(_DPS):
        c = mpmath.mpf(center)
        out = []
        for beta in range(N + 1):
            big = _poly_integral([0] * beta + [1], -R, R)
            # (u + c)^beta P(u) over u in [-1, 1]
            xb = [mpmath.binomial(beta, k) * c ** (beta - k) for k in range(beta + 1)]
            prod = [mpmath.mpf(0)] * (beta + len(local))
            for i, a in enumerate(xb):
                for j, b in enumerate(local):
                    prod[i + j] += a * mpmath.mpf(b)
            out.append(float(big + _poly_integral(prod, -1, 1)))
        return out


def orthonormal_basis(N: int) -> list:
    """Rows: monomial coefficients of an L^2([-1,1])-orthonormal basis of degree <= N.

    The Gram matrix of monomials is exact (the (N+1)-node Gauss rule
    integrates degree 2N exactly), and is factored at extended precision:
    with a float basis the moment residuals stall near 1e-9.
    """
    with mpmath.workdps(_DPS):
        G = mpmath.matrix(N + 1, N + 1)
        for i in range(N + 1):
            for j in range(N + 1):
                k = i + j
                G[i, j] = mpmath.mpf(2) / (k + 1) if k % 2 == 0 else 0
        Linv = mpmath.inverse(mpmath.cholesky(G))
        return [[Linv[i, j] for j in range(N + 1)] for i in range(N + 1)]


def choose_M(profile: Profile, alpha: float, step: float = 1.0 / 16) -> float:
    M = step
    while profile.tail(M) > 1.0 / 3:
        M += step
    while not M > alpha / 2:
        M += step
    return M


def solve_polynomial(R: float, D: float, N: int) -> tuple[list, list]:
    """Local and global coefficients of P with <P, Q'_b>' = -int_{B_R} Q'_b."""
    B = orthonormal_basis(N)
    with mpmath.workdps(_DPS):
        c = 2 * mpmath.mpf(D)
        local = [mpmath.mpf(0)] * (N + 1)
        for row in B:
            q = list(row)
            rhs = -_poly_integral(_shift(q, c), -R, R)
            for k in range(N + 1):
                local[k] += rhs * q[k]
        glob = _shift(local, c)
        fmt = lambda v: mpmath.nstr(v, 40, min_fixed=-mpmath.inf, max_fixed=mpmath.inf)  # noqa: E731
        return [fmt(v) for v in local], [fmt(v) for v in glob]


def _far_part(profile: Profile, local, center: float, xs: np.ndarray, t: float, nodes: int = 256) -> np.ndarray:
    u, w = np.polynomial.legendre.leggauss(nodes)
    Pu = np.polynomial.polynomial.polyval(u, [float(c) for c in local])
    diff = (xs[:, None] - center - u[None]) / t
    return (profile.pdf(diff) * (w * Pu)[None]).sum(axis=1) / t


def _big_part(profile: Profile, R: float, xs: np.ndarray, t: float) -> np.ndarray:
    return profile.mass_between((xs - R) / t, (xs + R) / t)


def sample_scales(alpha: float, count: int = 11) -> list[float]:
    return [alpha * 2.0 ** -i for i in range(count)]


def build_atom(profile: Profile = GAUSSIAN, alpha: float = 2.0, p: float = 1.0, n: int = 1,
               samples: int = 201, scales: Optional[list] = None) -> Atom:
    if n != 1:
        raise NotImplementedError("the atom builder is implemented on the line only")
    if alpha < 2:
        raise ValueError("need alpha >= 2")
    if not 0 < p < math.inf:
        raise ValueError("need 0 < p < inf")
    M = choose_M(profile, alpha)
    R = alpha * M
    N = max(math.floor(n * (1.0 / p - 1.0)) + 1, 0)
    ts = scales or sample_scales(alpha)
    xs = np.linspace(-1.0, 1.0, samples)
    D = R
    while True:
        local, glob = solve_polynomial(R, D, N)
        far = max(float(np.abs(_far_part(profile, local, 2 * D, xs, t)).max()) for t in ts)
        if far <= 1.0 / 3:
            break
        D *= 2
        if D > D_CAP:
            raise ConvergenceError(f"far ball beyond {D_CAP} without |phi_t * P chi_B'| <= 1/3")
    big = min(float(_big_part(profile, R, xs, t).min()) for t in ts)
    total = min(float(np.abs(_big_part(profile, R, xs, t) + _far_part(profile, local, 2 * D, xs, t)).min())
                for t in ts)
    atom = Atom(R, D, N, tuple(glob), tuple(local), n, alpha, p, profile.name)
    moments = atom.moments()
    atom.certificate.update(
        moments=moments,
        moment_max=max(abs(m) for m in moments),
        moments_ok=max(abs(m) for m in moments) <= 1e-10,
        big_part_min=big,
        far_part_max=far,
        lower_bound_min=total,
        lower_bound_ok=total >= 1.0 / 3,
        scales=list(ts),
        tail_M=M,
    )
    return atom
