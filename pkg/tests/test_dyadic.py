import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from paraprod.dyadic import (
    DyadicCube,
    HaarSpectrum,
    ResolutionError,
    Signal,
    all_cubes,
    analyze,
    average,
    cubes_at_level,
    decreasing_rearrangement,
    haar_function,
    level_averages,
    oscillation,
    orientations,
    rearrangement,
    synthesize,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def signals(draw, max_dim=2, max_res=5):
    dim = draw(st.integers(1, max_dim))
    J = draw(st.integers(0, max_res if dim == 1 else 3))
    vals = draw(arrays(float, (1 << J,) * dim, elements=finite))
    return Signal(dim, J, vals)


@st.composite
def cubes(draw, dim=None, max_level=6):
    dim = dim or draw(st.integers(1, 3))
    k = draw(st.integers(0, max_level))
    idx = tuple(draw(st.integers(0, (1 << k) - 1)) for _ in range(dim))
    return DyadicCube(k, idx)


# cubes ----------------------------------------------------------------------


def test_root_and_measure():
    Q = DyadicCube.root(2)
    assert Q.measure == 1.0 and Q.side == 1.0 and Q.dim == 2
    assert DyadicCube(3, (1, 2)).measure == 2.0 ** -6


def test_rejects_bad_cubes():
    with pytest.raises(ResolutionError):
        DyadicCube(1, (2,))
    with pytest.raises(ResolutionError):
        DyadicCube(-1, (0,))
    with pytest.raises(ResolutionError):
        DyadicCube.root().parent()


@given(cubes())
def test_children_partition_parent(Q):
    kids = Q.children()
    assert len(kids) == 2 ** Q.dim
    assert all(K.parent() == Q and Q.contains(K) for K in kids)
    assert sum(K.measure for K in kids) == Q.measure


@given(cubes(), st.integers(0, 6))
def test_ancestor_contains(Q, level):
    if level > Q.level:
        with pytest.raises(ResolutionError):
            Q.ancestor(level)
    else:
        A = Q.ancestor(level)
        assert A.contains(Q) and A.level == level
        assert Q.contains(A) == (A == Q)


@given(cubes())
def test_cube_json_roundtrip(Q):
    assert DyadicCube.from_json(json.loads(json.dumps(Q.to_json()))) == Q


def test_cube_enumeration():
    assert len(list(cubes_at_level(2, 2))) == 16
    assert len(list(all_cubes(1, 3))) == 1 + 2 + 4 + 8


# Haar system ------------------------------------------------------------------


def test_orientations_order():
    assert orientations(1) == ((1,),)
    assert orientations(2) == ((0, 1), (1, 0), (1, 1))


def test_haar_sign_pattern_on_unit_square():
    h = haar_function(DyadicCube.root(2), (0, 1), 1).values
    assert np.array_equal(h, [[1.0, -1.0], [1.0, -1.0]])
    h = haar_function(DyadicCube.root(2), (1, 1), 1).values
    assert np.array_equal(h, [[1.0, -1.0], [-1.0, 1.0]])


def test_haar_function_normalised_and_mean_zero():
    for Q, i in [(DyadicCube(2, (1,)), (1,)), (DyadicCube(1, (1, 0)), (1, 1))]:
        h = haar_function(Q, i, 4)
        assert abs(h.inner(h) - 1.0) < 1e-14
        assert abs(h.integral()) < 1e-14


def test_haar_function_needs_finer_grid():
    with pytest.raises(ResolutionError):
        haar_function(DyadicCube(3, (0,)), (1,), 3)
    with pytest.raises(ValueError):
        haar_function(DyadicCube.root(2), (0, 0), 2)


@given(signals())
def test_analysis_roundtrip(f):
    back = synthesize(analyze(f))
    assert np.allclose(back.values, f.values, rtol=0, atol=1e-12 * max(1.0, np.abs(f.values).max()))


@given(signals())
def test_parseval(f):
    s = analyze(f)
    lhs = f.inner(f)
    assert abs(lhs - (s.energy() + s.mean ** 2)) <= 1e-12 * max(1.0, lhs)


def test_coefficient_matches_inner_product():
    rng = np.random.default_rng(3)
    f = Signal(2, 3, rng.normal(size=(8, 8)))
    s = analyze(f)
    for Q in all_cubes(2, 2):
        for i in orientations(2):
            assert abs(s.coeff(Q, i) - f.inner(haar_function(Q, i, 3))) < 1e-12


def test_spectrum_from_coeffs_and_json():
    Q = DyadicCube(1, (1,))
    s = HaarSpectrum.from_coeffs(1, 3, {(Q, (1,)): 2.5}, mean=0.5)
    assert s.coeff(Q, (1,)) == 2.5 and s.coeffs == {(Q, (1,)): 2.5}
    t = HaarSpectrum.from_json(json.loads(json.dumps(s.to_json())))
    assert t.coeffs == s.coeffs and t.mean == 0.5
    with pytest.raises(ResolutionError):
        HaarSpectrum.from_coeffs(1, 1, {(Q, (1,)): 1.0})


def test_spectrum_arithmetic():
    a = HaarSpectrum.from_coeffs(1, 2, {(DyadicCube.root(), (1,)): 1.0})
    b = HaarSpectrum.from_coeffs(1, 3, {(DyadicCube(2, (3,)), (1,)): 2.0})
    c = a + 2 * b
    assert c.max_level == 3 and c.energy() == 1.0 + 16.0
    assert c.inner(b) == 8.0


def test_synthesis_drops_mean_on_request():
    s = HaarSpectrum.zeros(1, 2).with_mean(3.0)
    assert np.all(synthesize(s).values == 3.0)
    assert np.all(synthesize(s, include_mean=False).values == 0.0)


# signals ---------------------------------------------------------------------


def test_signal_rejects_nonfinite_and_bad_shape():
    with pytest.raises(ValueError):
        Signal(1, 1, [1.0, np.inf])
    with pytest.raises(ResolutionError):
        Signal(1, 2, [1.0, 2.0])


def test_signal_refine_and_restrict():
    f = Signal(1, 1, [1.0, 2.0]).refine(3)
    assert np.array_equal(f.values, [1, 1, 1, 1, 2, 2, 2, 2])
    assert np.array_equal(f.restrict(DyadicCube(2, (1,))), [1, 1])
    assert average(f, DyadicCube.root()) == 1.5
    assert np.array_equal(level_averages(f, 1), [1.0, 2.0])


@given(signals())
def test_signal_json_roundtrip(f):
    g = Signal.from_json(json.loads(json.dumps(f.to_json())))
    assert np.array_equal(g.values, f.values)


def test_indicator_signal():
    f = Signal.indicator(DyadicCube(1, (1, 0)), 2, scale=3.0)
    assert f.integral() == pytest.approx(0.75)


# rearrangement and oscillation -------------------------------------------------


def test_rearrangement_oracle():
    assert decreasing_rearrangement([3.0, 1.0, 2.0], 0.5, 1 / 3) == 2.0
    # right-continuity at a jump: exactly one cell above
    assert decreasing_rearrangement([3.0, 1.0, 2.0], 1 / 3, 1 / 3) == 2.0
    assert decreasing_rearrangement([3.0, 1.0, 2.0], 1.0, 1 / 3) == 0.0


@given(signals(max_dim=1), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_rearrangement_nonincreasing(f, s, t):
    lo, hi = sorted((s, t))
    assert rearrangement(f, hi) <= rearrangement(f, lo)


@given(signals(max_dim=1), st.floats(0.01, 1.0))
def test_rearrangement_distribution(f, t):
    """|{|f| > f*(t)}| <= t."""
    v = rearrangement(f, t)
    assert (np.abs(f.values) > v).sum() * f.cell_measure <= t * (1 + 1e-12)


def test_oscillation_values():
    f = Signal(1, 2, [0.0, 2.0, 5.0, 5.0])
    assert oscillation(f, DyadicCube(1, (0,))) == 1.0
    assert oscillation(f, DyadicCube(1, (1,))) == 0.0
    assert oscillation(f, DyadicCube.root(), p=np.inf) == 5.0
    assert oscillation(f, DyadicCube(1, (0,)), p=2) == 1.0


def test_oscillation_invariant_under_constants():
    rng = np.random.default_rng(0)
    f = Signal(2, 3, rng.normal(size=(8, 8)))
    for Q in itertools.islice(all_cubes(2, 2), 10):
        assert oscillation(f + Signal.constant(7.0, 2, 3), Q) == pytest.approx(oscillation(f, Q), abs=1e-12)
