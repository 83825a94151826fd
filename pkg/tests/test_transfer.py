import math

import numpy as np
import pytest

from nlsctl.config import control_fields
from nlsctl.saturation import FrequencySet
from nlsctl.solver import ControlSchedule, SimParams, evolve
from nlsctl.spectral import plane_wave
from nlsctl.transfer import (PreconditionViolated, TransferFailed, cut_width, eigenstate_transfer,
                             lift_mismatch, padding_control, transfer_fidelity)
from nlsctl.trig import TrigPolynomial

Q1 = control_fields(FrequencySet(1, [[1]]))


def params(kappa=1.0, N=16, **kw):
    return SimParams(V=kw.pop("V", TrigPolynomial.zero(1)), Q=Q1, kappa=kappa, p=1, N=N, **kw)


@pytest.mark.parametrize("kappa,l", [(1.0, 0), (-1.0, 2), (0.5, -3)])
def test_padding_is_stationary(kappa, l):
    p = params(kappa)
    u0 = padding_control((l,), p)
    out = evolve(plane_wave((l,), 16), ControlSchedule.constant(2.0, u0), p).final
    assert (out - plane_wave((l,), 16)).l2_norm() < 1e-10


def test_same_eigenstate_needs_only_padding():
    res = eigenstate_transfer((1,), (1,), TrigPolynomial.zero(1), 1.0, 1e-6, params())
    assert res.error < 1e-6 and res.T1 == 0.0 and res.padding == pytest.approx(1.0)


def test_phase_lift_same_eigenstate_imprints_phase():
    p = params(N=64)
    res = eigenstate_transfer((0,), (0,), TrigPolynomial.cos((2,), 0.3), 1.0, 5e-2, p,
                              route="phase-lift")
    assert res.error < 5e-2 and res.padding_drift < 1e-6


def test_phase_lift_between_distinct_eigenstates_is_refused():
    with pytest.raises(TransferFailed):
        eigenstate_transfer((0,), (1,), TrigPolynomial.zero(1), 1.0, 5e-2, params(),
                            route="phase-lift")


def test_preconditions():
    with pytest.raises(PreconditionViolated):
        eigenstate_transfer((0,), (1,), TrigPolynomial.zero(1), 1.0, 5e-2,
                            params(V=TrigPolynomial.cos((1,))))
    with pytest.raises(PreconditionViolated):
        eigenstate_transfer((0,), (1,), TrigPolynomial.zero(1), -1.0, 5e-2, params())
    no_constant = SimParams(V=TrigPolynomial.zero(1), Q=Q1[1:], kappa=1.0, p=1, N=16)
    with pytest.raises(PreconditionViolated):
        padding_control((0,), no_constant)


def test_adjoint_gradient_matches_finite_differences():
    p = params(kappa=1.0, N=8, dt=0.02)
    rng = np.random.default_rng(1)
    X = rng.normal(size=(3, 3))
    start, target = plane_wave((0,), 8), plane_wave((1,), 8)
    J, G, _ = transfer_fidelity(X, start, target, p, 0.1, 5, penalty=1e-3)
    h = 1e-6
    for idx in [(0, 0), (1, 2), (2, 1)]:
        E = np.zeros_like(X)
        E[idx] = h
        Jp = transfer_fidelity(X + E, start, target, p, 0.1, 5, penalty=1e-3)[0]
        Jm = transfer_fidelity(X - E, start, target, p, 0.1, 5, penalty=1e-3)[0]
        assert G[idx] == pytest.approx((Jp - Jm) / (2 * h), rel=1e-5, abs=1e-9)


def test_fidelity_agrees_with_solver():
    p = params(kappa=-1.0, N=8, dt=0.02)
    X = np.random.default_rng(2).normal(size=(2, 3))
    start, target = plane_wave((0,), 8), plane_wave((1,), 8)
    _, _, overlap = transfer_fidelity(X, start, target, p, 0.1, 5)
    sched = ControlSchedule(tuple((0.1, u) for u in X))
    final = evolve(start, sched, p, substeps=[5, 5]).final
    assert overlap == pytest.approx(np.vdot(target.coeffs, final.coeffs), abs=1e-12)


def numeric_lift_mismatch(w, n=200_000):
    """L2 distance by quadrature: the phase error ramps from 0 to 2 pi inside the window."""
    t = np.linspace(-math.pi, math.pi, n, endpoint=False)
    edge = math.pi - w / 2
    err = np.zeros_like(t)
    inside = np.abs(t) > edge
    # position within the window, 0 at its left end
    pos = np.where(t > 0, t - edge, t + 2 * math.pi - edge)
    err[inside] = 2 * math.pi * pos[inside] / w
    dens = np.abs(np.exp(1j * err) - 1) ** 2 / (2 * math.pi)
    return math.sqrt(np.sum(dens) * (2 * math.pi / n))


@pytest.mark.parametrize("w", [0.05, 0.3, 1.0])
def test_lift_mismatch_closed_form(w):
    assert lift_mismatch(w) == pytest.approx(numeric_lift_mismatch(w), rel=1e-3)


def test_lift_mismatch_scales_with_square_root_of_width():
    for w in [0.01, 0.1, 1.0]:
        assert lift_mismatch(w) / lift_mismatch(w / 2) == pytest.approx(math.sqrt(2))
    assert lift_mismatch(cut_width(0.05)) <= 0.05 + 1e-12


def test_optimized_transfer_focusing():
    p = params(kappa=-1.0, N=32, dt=2.5e-3)
    res = eigenstate_transfer((0,), (1,), TrigPolynomial.zero(1), 1.0, 5e-2, p)
    assert res.error < 5e-2 and res.padding_drift < 1e-6
