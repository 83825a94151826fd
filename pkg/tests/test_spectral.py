import math

import pytest
from hypothesis import given, settings, strategies as st

from oracles import bessel_imprint_h1
from nlsctl.spectral import (CutoffExceeded, ShapeMismatch, SpectralField, imprint_phase,
                             plane_wave, sobolev_norm)
from nlsctl.trig import TrigPolynomial


def test_plane_wave_is_normalized():
    for l in [(0,), (3,), (1, -2), (0, 1, 1)]:
        f = plane_wave(l, 4)
        assert f.l2_norm() == pytest.approx(1.0, abs=1e-14)
        assert sobolev_norm(f, 1.0) == pytest.approx(math.sqrt(1 + sum(c * c for c in l)))


def test_sobolev_weights():
    f = SpectralField.from_modes(1, 8, {(2,): 1.0, (-1,): 2.0})
    assert sobolev_norm(f, 2.0) == pytest.approx(math.sqrt(25 + 4 * 4))


@pytest.mark.parametrize("lam", [0.5, 2.0, 8.0])
def test_imprint_norm_closed_form(lam):
    # |exp(i lam cos x) phi_0|_{H1}^2 = 1 + lam^2 / 2
    f = imprint_phase(plane_wave((0,), 64), lam, TrigPolynomial.cos((1,)))
    assert sobolev_norm(f, 1.0) == pytest.approx(bessel_imprint_h1(lam), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_imprints_compose(a, b):
    psi = SpectralField.from_modes(1, 48, {(0,): 1.0, (1,): 0.4j}).normalized()
    phi = TrigPolynomial.cos((1,)) + TrigPolynomial.sin((2,), 0.5)
    two = imprint_phase(imprint_phase(psi, a, phi), b, phi)
    one = imprint_phase(psi, a + b, phi)
    assert (two - one).l2_norm() < 1e-9


def test_imprint_preserves_l2():
    psi = SpectralField.from_modes(2, 16, {(0, 0): 1.0, (1, -1): 0.3}).normalized()
    out = imprint_phase(psi, 0.7, TrigPolynomial.cos((1, 1)))
    assert out.l2_norm() == pytest.approx(1.0, abs=1e-12)


def test_cutoff_round_trip_reports_loss():
    f = SpectralField.from_modes(1, 8, {(0,): 1.0, (6,): 0.5})
    g = f.with_cutoff(4)
    assert g.truncation_loss == pytest.approx(0.25)
    assert g.with_cutoff(8).allclose(SpectralField.from_modes(1, 8, {(0,): 1.0}))


def test_json_round_trip():
    f = SpectralField.from_modes(2, 3, {(1, 0): 1 + 2j, (-2, 3): 0.5})
    assert SpectralField.from_json(f.to_json()).allclose(f, atol=0.0)


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        plane_wave((0,), 4) - plane_wave((0,), 5)
    with pytest.raises((CutoffExceeded, ValueError)):
        SpectralField.from_modes(1, 2, {(5,): 1.0})
