from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgolab.errors import ImaginaryRootViolation, ScheduleInfeasible
from cgolab.frames import (admissible, build_frame, cdot, discrete_dispersion, grid_adapted_frame, schedule,
                           zero_frequency_frame)

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite, finite), st.floats(1, 40), st.floats(0, 3))
def test_frame_certificates(xi, k, extra):
    xi = np.array(xi)
    x2 = float(xi @ xi)
    if x2 < 1e-4:
        return
    tau = math.sqrt(max(k * k / x2 - 0.25, 0.0)) + extra
    fr = build_frame(xi, k, tau)
    assert max(fr.check().values()) < 1e-10
    # the identities written out explicitly
    for z in fr.vectors().values():
        assert cdot(z, z) == pytest.approx(k * k, rel=1e-9, abs=1e-9)
    np.testing.assert_allclose(fr.zeta1 + fr.zeta2, -xi, atol=1e-9 * max(1, math.sqrt(x2)))
    assert fr.im_norm == pytest.approx(math.sqrt(max(x2 * (0.25 + tau**2) - k * k, 0.0)), rel=1e-9, abs=1e-6)


def test_reflected_frequency():
    fr = build_frame(np.array([1.0, 2.0, 0.5]), 1.0, 0.8)
    xp = math.hypot(1.0, 2.0)
    np.testing.assert_allclose(fr.reflected_plus, [1.0, 2.0, 2 * 0.8 * xp], atol=1e-12)
    # xi' = 0 collapses the reflected frequency to the origin
    np.testing.assert_allclose(build_frame(np.array([0.0, 0.0, 3.0]), 1.0, 0.7).reflected_plus, 0.0, atol=1e-12)


def test_zero_frequency_limit():
    fr = zero_frequency_frame(2.0, 9.0)
    assert max(fr.check().values()) < 1e-14
    np.testing.assert_allclose(fr.reflected_plus, [0.0, 0.0, 6.0], atol=1e-14)
    assert fr.im_norm == pytest.approx(math.sqrt(5.0))


def test_imaginary_root_violation():
    with pytest.raises(ImaginaryRootViolation):
        build_frame(np.array([1.0, 0.0, 0.0]), 5.0, 0.1)
    with pytest.raises(ImaginaryRootViolation):
        zero_frequency_frame(3.0, 4.0)


def test_admissibility():
    fr = build_frame(np.array([4.0, 0.0, 0.0]), 1.0, 1.0)
    assert admissible(fr, 0.5 * fr.im_norm)
    assert not admissible(fr, fr.im_norm)


def test_schedule_values():
    # dist = 1e-3, k = 2, R = 1: E = 3 log 10, kappa = 2 + E/5
    s = schedule(1e-3, 2.0, 1.0, 0.0, 1.0, 0.9, 0.45)
    assert s.E == pytest.approx(6.907755278982137, rel=1e-14)
    assert s.kappa == pytest.approx(3.3815510557964275, rel=1e-14)
    assert s.epsilon == pytest.approx(0.5438035339186194, rel=1e-14)
    assert s.rho == pytest.approx(1.2005144514579114, rel=1e-14)
    assert s.target_re_sq == pytest.approx(9.908683319772223, rel=1e-14)
    assert s.alpha_tilde == pytest.approx(0.3)
    assert s.feasible
    fr = s.frame(np.array([1.0, 1.0, 1.0]))
    assert fr.im_norm == pytest.approx(math.sqrt(4.0 + (s.E / 5) ** 2), rel=1e-12)


def test_schedule_infeasible():
    s = schedule(0.5, 1.0, 1.0, 1.0, 10.0, 0.9)
    assert not s.feasible and s.delta_exceeded
    with pytest.raises(ScheduleInfeasible):
        schedule(0.5, 1.0, 1.0, 1.0, 10.0, 0.9, strict=True)
    with pytest.raises(ValueError):
        schedule(1.5, 1.0, 1.0, 0.0, 1.0, 0.9)
    with pytest.raises(ValueError):
        schedule(0.1, 1.0, 1.0, 0.0, 1.0, 0.5, 0.6)


def test_xi_max_keeps_tau():
    s = schedule(1e-3, 3.0, 1.0, 0.0, 1.0, 0.9, rho_scale=8.0, tau_min=0.375)
    xi = np.array([s.xi_max, 0.0, 0.0])
    assert s.tau_for(xi) == pytest.approx(0.375, rel=1e-12)


@pytest.mark.parametrize("xi", [[0.0, 0.0, 0.0], [31.4, 0.0, 3.1], [0.0, 0.0, 9.4]])
def test_grid_adapted_frame(xi):
    spacing = (0.2 / 32, 0.2 / 32, 1 / 32)
    s = schedule(1e-3, 4.0, 1.01, 0.0, 1.0, 0.9)
    fr = grid_adapted_frame(s.frame(np.array(xi)), spacing)
    for z in fr.vectors().values():
        assert discrete_dispersion(z, spacing) == pytest.approx(16.0, abs=1e-10)
    np.testing.assert_allclose(fr.zeta1 + fr.zeta2, -np.array(xi), atol=1e-10)
