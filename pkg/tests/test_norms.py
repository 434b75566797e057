import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paraprod.dyadic import DyadicCube, HaarSpectrum, Signal, analyze, haar_function
from paraprod.norms import (
    NormReport,
    bmo_d_norm,
    dot_hp_d_norm,
    duality_ratio,
    hp_d_modulo_constants,
    hp_d_norm,
    lambda_d_norm,
    lp_norm,
    maximal_vs_square_equivalence,
)

seeds = st.integers(0, 2**32 - 1)
exps = st.sampled_from([0.25, 0.5, 1.0, 1.5, 2.0, 4.0])


def rand_signal(seed, dim=1, J=4):
    return Signal(dim, J, np.random.default_rng(seed).normal(size=(1 << J,) * dim))


def test_hp_oracle():
    f = Signal(1, 2, [2.0, 0.0, 0.0, 0.0])
    assert hp_d_norm(f, 2).value ** 2 == pytest.approx(1.375, rel=1e-15)
    assert hp_d_norm(f, 1).value == pytest.approx((2 + 1 + 0.5 + 0.5) / 4)


def test_lp_values():
    f = Signal(1, 2, [1.0, -1.0, 2.0, 0.0])
    assert lp_norm(f, 1) == 1.0
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(1.5))
    assert lp_norm(f, math.inf) == 2.0
    assert lp_norm(f, 0.5) == pytest.approx(((1 + 1 + math.sqrt(2)) / 4) ** 2)
    with pytest.raises(ValueError):
        lp_norm(f, 0)


@given(seeds, exps, st.integers(1, 2))
def test_hp_dominates_lp(seed, p, dim):
    f = rand_signal(seed, dim, 4 if dim == 1 else 3)
    assert hp_d_norm(f, p).value >= lp_norm(f, p) * (1 - 1e-14)


@given(seeds, exps, st.floats(-50, 50).filter(lambda t: abs(t) > 1e-3))
def test_homogeneity(seed, p, t):
    f = rand_signal(seed)
    g = analyze(f).with_mean(0.0)
    assert hp_d_norm(t * f, p).value == pytest.approx(abs(t) * hp_d_norm(f, p).value, rel=1e-12)
    assert dot_hp_d_norm(t * g, p).value == pytest.approx(abs(t) * dot_hp_d_norm(g, p).value, rel=1e-12)
    assert lambda_d_norm(t * f, 0.5).value == pytest.approx(abs(t) * lambda_d_norm(f, 0.5).value, rel=1e-12)


@given(seeds, st.floats(-10, 10))
def test_lipschitz_and_bmo_ignore_constants(seed, c):
    f = rand_signal(seed)
    shifted = f + Signal.constant(c, 1, 4)
    assert bmo_d_norm(shifted).value == pytest.approx(bmo_d_norm(f).value, rel=1e-12)
    assert lambda_d_norm(shifted, 0.75).value == pytest.approx(lambda_d_norm(f, 0.75).value, rel=1e-12)
    assert bmo_d_norm(Signal.constant(c, 1, 4)).value == 0.0


def test_lambda_witness_and_kind():
    Q = DyadicCube(2, (1,))
    h = haar_function(Q, (1,), 4)
    r = lambda_d_norm(h, 1.0)
    assert r.kind == "Lambda_d" and r.witness == Q
    # osc_1 on Q is |Q|^{-1/2}, scaled by l(Q)^{-1}
    assert r.value == pytest.approx(2.0 * 4.0)
    assert bmo_d_norm(h).kind == "BMO_d"


@given(seeds, exps)
def test_modulo_constants_below_mean_shift(seed, p):
    f = rand_signal(seed)
    best, c = hp_d_modulo_constants(f, p)
    centred = f - Signal.constant(f.integral(), 1, 4)
    assert best <= hp_d_norm(centred, p).value * (1 + 1e-12)
    assert best == pytest.approx(hp_d_norm(f - Signal.constant(c, 1, 4), p).value, rel=1e-12)


def test_equivalence_root_haar():
    g = HaarSpectrum.from_coeffs(1, 3, {(DyadicCube.root(), (1,)): 1.0})
    assert maximal_vs_square_equivalence(g, 2.0) == pytest.approx(1.0, rel=1e-9)
    assert maximal_vs_square_equivalence(HaarSpectrum.zeros(1, 3), 1.0) == 1.0
    with pytest.raises(ValueError):
        maximal_vs_square_equivalence(g.with_mean(1.0), 1.0)


def test_duality_root_haar():
    h = haar_function(DyadicCube.root(), (1,), 3)
    assert duality_ratio(h, h, 1.0) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        duality_ratio(h, h, 2.0)


@given(seeds, st.sampled_from([0.5, 0.75, 1.0]), st.floats(0.1, 10))
def test_duality_scale_invariant(seed, p, t):
    f = rand_signal(seed)
    f = f - Signal.constant(f.integral(), 1, 4)
    b = rand_signal(seed + 1)
    assert duality_ratio(t * f, (1 / t) * b, p) == pytest.approx(duality_ratio(f, b, p), rel=1e-10)


def test_norm_report_validation_and_json():
    with pytest.raises(ValueError):
        NormReport("nope", {}, 1.0)
    with pytest.raises(ValueError):
        NormReport("Lp", {}, -1.0)
    with pytest.raises(ValueError):
        NormReport("Lp", {}, math.nan)
    r = NormReport("BMO_d", {"p": 1, "alpha": 0}, 2.0, DyadicCube(1, (1,)))
    d = json.loads(json.dumps(r.to_json()))
    assert list(d["exponents"]) == ["alpha", "p"] and float(r) == 2.0
