import json
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtri

from paraprod import atom as atom_mod
from paraprod.atom import GAUSSIAN, ConvergenceError, Profile, build_atom, choose_M, orthonormal_basis, real_part

CAUCHY = Profile("cauchy", lambda x: 1 / (np.pi * (1 + np.asarray(x) ** 2)),
                 lambda x: 0.5 + np.arctan(np.asarray(x)) / np.pi)


@pytest.fixture(scope="module")
def atom_half():
    return build_atom(GAUSSIAN, alpha=2.0, p=0.5, samples=101)


def quad_moments(a, digits=60):
    """Moments by numerical quadrature of the piecewise polynomial, at high precision."""
    with mpmath.workdps(digits):
        c = mpmath.mpf(a.far_center)
        P = [mpmath.mpf(s) for s in a.local_coeffs]
        out = []
        for beta in range(a.poly_degree + 1):
            big = mpmath.quad(lambda x: x ** beta, [-a.big_radius, 0, a.big_radius])
            far = mpmath.quad(lambda u: (u + c) ** beta * mpmath.polyval(P[::-1], u), [-1, 0, 1])
            out.append(big + far)
        return out


def test_moments_vanish_by_quadrature(atom_half):
    assert atom_half.poly_degree == 2
    for m in quad_moments(atom_half):
        assert abs(m) < 1e-30
    assert atom_half.certificate["moments_ok"]


def test_global_and_local_coefficients_agree(atom_half):
    x = atom_half.far_center + np.linspace(-1, 1, 7)
    glob = np.polynomial.polynomial.polyval(x, [float(c) for c in atom_half.poly_coeffs])
    assert np.allclose(glob, atom_half.poly(x), rtol=1e-6)


def test_lower_bound_by_direct_convolution(atom_half):
    a = atom_half
    assert a.certificate["lower_bound_ok"] and a.certificate["lower_bound_min"] >= 1 / 3
    for t in (2.0, 0.25, 0.002):
        for x in (-1.0, 0.0, 0.6):
            phi = lambda y: math.exp(-math.pi * ((x - y) / t) ** 2) / t
            big = integrate.quad(phi, -a.big_radius, a.big_radius, points=[x])[0]
            far = integrate.quad(lambda y: phi(y) * float(a.poly(y)), a.far_center - 1, a.far_center + 1)[0]
            assert big + far >= 1 / 3


def test_atom_values_and_json(atom_half):
    a = atom_half
    assert a(0.0) == 1.0 and a(a.big_radius + 0.5) == 0.0
    d = json.loads(json.dumps(a.to_json()))
    assert d["poly_degree"] == 2 and len(d["local_coeffs"]) == 3
    assert all(isinstance(c, str) for c in d["poly_coeffs"])


def test_orthonormal_basis():
    B = orthonormal_basis(3)
    with mpmath.workdps(50):
        for i in range(4):
            for j in range(4):
                ip = mpmath.quad(lambda x: mpmath.polyval(B[i][::-1], x) * mpmath.polyval(B[j][::-1], x), [-1, 1])
                assert abs(ip - (1 if i == j else 0)) < 1e-40


def test_choose_M():
    # Gaussian tail beyond M is 2(1 - ndtr(sqrt(2 pi) M)), so M >= ndtri(5/6) / sqrt(2 pi)
    m0 = ndtri(5 / 6) / math.sqrt(2 * math.pi)
    assert choose_M(GAUSSIAN, 0.2) == math.ceil(m0 * 16) / 16
    assert choose_M(GAUSSIAN, 2.0) == pytest.approx(1.0625)


def test_real_part_profile_matches_gaussian():
    rp = real_part(lambda x: np.exp(-np.pi * np.asarray(x) ** 2) * (1 + 1j * np.asarray(x)))
    a = build_atom(rp, alpha=2.0, p=1.0, samples=21)
    b = build_atom(GAUSSIAN, alpha=2.0, p=1.0, samples=21)
    assert a.big_radius == b.big_radius and a.far_center_distance == b.far_center_distance
    assert a.certificate["lower_bound_min"] == pytest.approx(b.certificate["lower_bound_min"], rel=1e-7)


def test_heavy_tail_doubles_then_hits_cap(monkeypatch):
    a = build_atom(CAUCHY, alpha=2.0, p=0.5, samples=41)
    assert a.far_center_distance > a.big_radius and a.certificate["moments_ok"]
    monkeypatch.setattr(atom_mod, "D_CAP", a.big_radius)
    with pytest.raises(ConvergenceError):
        build_atom(CAUCHY, alpha=2.0, p=0.5, samples=41)


def test_input_validation():
    with pytest.raises(NotImplementedError):
        build_atom(n=2)
    with pytest.raises(ValueError):
        build_atom(alpha=1.5)
    with pytest.raises(ValueError):
        build_atom(p=0.0)
