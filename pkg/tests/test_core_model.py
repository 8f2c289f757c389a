import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blowup_lab.core_model import (DomainError, DomainSpec, InvalidParameter, Nonlinearity,
                                   SimilarityFrame, from_similarity, refined_scale,
                                   to_similarity)

EXP = Nonlinearity.exponential()


def test_to_similarity_examples():
    assert to_similarity(0.0, 0.0, 1.0, 3.0, EXP) == (0.0, 0.0, 3.0)
    y, s, w = to_similarity(0.5, 0.75, 1.0, 0.0, EXP)
    assert y == pytest.approx(1.0, rel=1e-15)
    assert s == pytest.approx(math.log(4.0), rel=1e-15)
    assert w == pytest.approx(-math.log(4.0), rel=1e-15)
    _, _, w = to_similarity(0.0, None, 1.0, 10.0, Nonlinearity.power(2.0), tau=0.01)
    assert w == pytest.approx(0.1, rel=1e-15)


def test_from_similarity_examples():
    r, t, u = from_similarity(0.0, 0.0, 3.0, 1.0, EXP)
    assert (r, t, u) == (0.0, 0.0, 3.0)
    r, t, u = from_similarity(2.0, 2.0, 0.0, 1.0, EXP)
    assert r == pytest.approx(2 * math.exp(-1.0), rel=1e-15)
    assert t == pytest.approx(1 - math.exp(-2.0), rel=1e-15)
    assert u == pytest.approx(2.0, rel=1e-15)


def test_similarity_errors():
    with pytest.raises(DomainError, match="post-blow-up"):
        to_similarity(0.1, 1.0, 1.0, 0.0, EXP)
    with pytest.raises(InvalidParameter):
        to_similarity(0.1, 0.0, 0.0, 0.0, EXP)
    with pytest.raises(DomainError):
        from_similarity(np.nan, 0.0, 0.0, 1.0, EXP)


@given(r=st.floats(0.0, 10.0), tau=st.floats(1e-10, 0.9), u=st.floats(-50, 50),
       p=st.sampled_from([None, 1.5, 2.0, 3.0, 7.0]))
def test_similarity_roundtrip(r, tau, u, p):
    nl = EXP if p is None else Nonlinearity.power(p)
    T = 1.0
    y, s, w = to_similarity(r, None, T, u, nl, tau=tau)
    r2, t2, u2 = from_similarity(y, s, w, T, nl)
    assert abs(r2 - r) <= 1e-14 * max(1.0, abs(r))
    assert abs(t2 - (T - tau)) <= 1e-14
    assert abs(u2 - u) <= 1e-14 * max(1.0, abs(u))


def test_similarity_monotone():
    taus = np.geomspace(0.5, 1e-9, 30)
    s = [SimilarityFrame(1.0, tau).s for tau in taus]
    assert np.all(np.diff(s) > 0)
    y = SimilarityFrame(1.0, 1e-3).y(np.linspace(0, 1, 11))
    assert np.all(np.diff(y) > 0)


def test_refined_scale():
    assert refined_scale(None, 1.0, 2, tau=math.exp(-4)) == pytest.approx(4 * math.exp(-2))
    assert refined_scale(None, 1.0, 3, tau=1e-6) == pytest.approx(1e-2, rel=1e-14)
    taus = 10.0 ** -np.arange(2, 9)
    ratio = refined_scale(None, 1.0, 2, tau=taus) / np.sqrt(taus)
    assert np.all(np.diff(ratio) > 0)
    with pytest.raises(InvalidParameter):
        refined_scale(0.5, 1.0, 1)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
def test_kappa_identity(p):
    k = Nonlinearity.power(p).kappa()
    assert abs(k ** (p - 1) * (p - 1) - 1) <= 1e-12


def test_kappa_values():
    assert Nonlinearity.power(2.0).kappa() == 1.0
    assert abs(Nonlinearity.power(3.0).kappa() - 0.707106781) <= 1e-9


def test_singular_constants():
    assert EXP.singular_constant(3) == pytest.approx(math.log(2))
    assert EXP.singular_constant(9) == pytest.approx(math.log(14))
    assert Nonlinearity.power(3.0).singular_constant(5) == pytest.approx(math.sqrt(2))
    with pytest.raises(InvalidParameter):
        EXP.singular_constant(2)


def test_nonlinearity_validation():
    with pytest.raises(InvalidParameter):
        Nonlinearity.power(1.0)
    with pytest.raises(InvalidParameter):
        Nonlinearity("Exponential", 2.0)
    nl = Nonlinearity.power(3.0)
    assert Nonlinearity.from_dict(nl.to_dict()) == nl
    with pytest.raises(InvalidParameter):
        DomainSpec(0)
    with pytest.raises(InvalidParameter):
        DomainSpec(3, -1.0)
