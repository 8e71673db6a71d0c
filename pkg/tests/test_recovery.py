from __future__ import annotations


import numpy as np
import pytest
import scipy.fft

from cgolab.cgo import PeriodicCell, reflected_pair
from cgolab.errors import NonHermitian, SpanDeficient
from cgolab.forward import face_mode_dictionary, measure_cauchy
from cgolab.frames import build_frame, grid_adapted_frame, schedule
from cgolab.grid import DomainSpec, GaussianBump, ScalarField, extend_even, sobolev_norm
from cgolab.recovery import (FrozenConstants, ModeEstimate, decomposition, direct_transform, exact_modes,
                             green_identity_lhs, hminus1_estimate, interpolation_exponents, invert_lowpass,
                             lattice_step, mode_array, mode_from_data, recovery_lattice, reflected_correction,
                             rhs_bound)

from conftest import gaussian, potential


def q0_of(q1, q2):
    return ScalarField(q1.domain, q2.values - q1.values, "potential")


def band_limited(dom, seed=0):
    # random even field with the Nyquist planes removed
    rng = np.random.default_rng(seed)
    e = extend_even(ScalarField(dom, rng.normal(size=dom.shape), "potential"))
    G = scipy.fft.fftn(e.values)
    for a, m in enumerate(G.shape):
        idx = [slice(None)] * 3
        idx[a] = m // 2
        G[tuple(idx)] = 0.0
    vals = scipy.fft.ifftn(G).real
    return ScalarField(dom, np.ascontiguousarray(vals[:, :, : dom.n]), "potential")


@pytest.mark.parametrize("xi,k,tau", [([2.0, 1.0, 0.5], 1.0, 5.0), ([0.0, 3.0, 4.0], 2.0, 1.0)])
def test_decomposition_closes(cube_pair, xi, k, tau):
    q1, q2 = cube_pair
    q0 = q0_of(q1, q2)
    fr = build_frame(np.array(xi), k, tau)
    pair = reflected_pair(fr, q1, q2, tol=1e-12)
    m = decomposition(q0, fr, pair.solutions, pair=pair)
    assert m.budget["closure"] <= 1e-10
    # the estimate is the principal term, which is the transform of the even extension
    assert m.fq0_hat == pytest.approx(m.terms["principal"], rel=1e-9)
    assert m.terms["principal"] == pytest.approx(direct_transform(q0, xi), rel=1e-12)


def test_direct_transform_of_interior_gaussian():
    dom = DomainSpec(0.5, 1.0, 1.3, 32)
    g = gaussian(1.0, (0.0, 0.0, -0.5), 0.08)
    q = potential(dom, g)
    bump = GaussianBump(1.0, (0.0, 0.0, -0.5), 0.08)
    for xi in ([0.0, 0.0, 0.0], [3.0, -2.0, 5.0]):
        xs = [xi[0], xi[1], -xi[2]]
        ref = bump.fourier(np.array(xi))[0] + bump.fourier(np.array(xs))[0]
        assert direct_transform(q, xi) == pytest.approx(ref, rel=1e-6)


def test_lowpass_inversion_is_exact_for_band_limited_fields(cube16):
    q = band_limited(cube16)
    modes = exact_modes(q, recovery_lattice(cube16, 1e6))
    rec = invert_lowpass(modes, cube16)
    np.testing.assert_allclose(rec.values, q.values, atol=1e-10)
    # Parseval: with every mode present and no tail the H^-1 estimate is the grid norm
    h = hminus1_estimate(modes, 1e6, 0.0, cube16)
    assert h.value == pytest.approx(sobolev_norm(q, -1.0), rel=1e-10)
    with pytest.raises(ValueError):
        hminus1_estimate(modes, 0.0, 1.0, cube16)


def test_lattice_covers_orbits(cube16):
    xs = recovery_lattice(cube16, 20.0)
    step = lattice_step(cube16)
    keys = {tuple(np.round(x / step).astype(int)) for x in xs}
    assert (0, 0, 0) in keys
    for j in keys:
        # no point appears together with its negative or mirror image
        assert j == (0, 0, 0) or (-j[0], -j[1], -j[2]) not in keys
        assert j[2] >= 0


def test_non_hermitian_modes_are_rejected(cube16):
    step = lattice_step(cube16)
    xi = np.array([1, 0, 1]) * step
    good = [ModeEstimate(xi, 1 + 1j, 0j, {}, True, "oracle"),
            ModeEstimate(-xi, 1 - 1j, 0j, {}, True, "oracle")]
    G = mode_array(good, cube16)
    assert np.count_nonzero(G) == 4
    bad = [good[0], ModeEstimate(-xi, 2.0 + 0j, 0j, {}, True, "oracle")]
    with pytest.raises(NonHermitian):
        mode_array(bad, cube16)


def test_interpolation_exponents():
    eta, p = interpolation_exponents(2.5)
    assert eta == pytest.approx(0.5) and p == pytest.approx(3 / 3.5)
    with pytest.raises(ValueError):
        interpolation_exponents(1.5)


def test_rhs_bound_behaviour():
    c = FrozenConstants(C=2.0, trivial=17.0)
    vals = [rhs_bound(2.0, d, schedule(d, 2.0, 1.01, 0.0, 1.0, 0.9, 0.45), s=2.5, constants=c)
            for d in (1e-8, 1e-6, 1e-4)]
    assert vals[0] < vals[1] < vals[2]
    bad = schedule(0.5, 1.0, 1.0, 1.0, 10.0, 0.9)
    assert not bad.feasible
    assert rhs_bound(1.0, 0.5, bad, s=2.5, constants=c) == 17.0


@pytest.fixture(scope="module")
def thin_setup():
    dom = DomainSpec(0.1, 1.0, 1.01, 16)
    q1 = potential(dom, gaussian(1.0, (0.0, 0.0, -0.5), 0.2))
    q2 = potential(dom, gaussian(1.0, (0.0, 0.0, -0.5), 0.2), gaussian(0.8, (0.0, 0.0, -0.4), 0.15))
    cell = PeriodicCell.for_domain(dom, stencil="fd7")
    k = 2.0
    fr = grid_adapted_frame(build_frame(np.array([0.0, 0.0, np.pi]), k, 2.0), dom.spacing)
    pair = reflected_pair(fr, q1, q2, cell=cell)
    return dom, q1, q2, k, fr, pair


def test_mode_from_data_matches_volume_pairing(thin_setup):
    dom, q1, q2, k, fr, pair = thin_setup
    A = measure_cauchy(q1, k, [pair.f1], "A")
    B = measure_cauchy(q2, k, [pair.f2], "B")
    m = mode_from_data(A, B, fr, pair)
    vol = green_identity_lhs(q0_of(q1, q2), pair)
    assert m.lhs == pytest.approx(vol, rel=1e-8)
    assert m.budget["span_residual"] < 1e-12 and m.route == "data"
    corr = mode_from_data(A, B, fr, pair, correction={"coupling": 1.0, "reflected": 0.5})
    assert corr.fq0_hat == pytest.approx(m.lhs - 0.5)


def test_span_deficient(thin_setup):
    dom, q1, q2, k, fr, pair = thin_setup
    fs = face_mode_dictionary(dom, 2)
    with pytest.raises(SpanDeficient):
        mode_from_data(measure_cauchy(q1, k, fs), measure_cauchy(q2, k, fs), fr, pair, span_tol=1e-3)


def test_reflected_correction(cube16):
    step = lattice_step(cube16)
    zero = ModeEstimate(np.zeros(3), 5.0 + 0j, 0j, {}, True, "data")
    # xi' = 0 sends the reflected frequency to the origin
    xi = np.array([0.0, 0.0, step[2]])
    fr = build_frame(xi, 0.5, 1.0)
    a = ModeEstimate(xi, 1.0 + 0j, 0j, {}, True, "data", frame=fr)
    # reflected frequency equal to a mirror image of xi itself is left alone
    xs = np.array([step[0], 0.0, 2 * step[2]])
    tau = xs[2] / (2 * xs[0])
    fs = build_frame(xs, 0.5, tau)
    np.testing.assert_allclose(fs.reflected_plus, xs, atol=1e-9)
    b = ModeEstimate(xs, 2.0 + 0j, 0j, {}, True, "data", frame=fs)
    out = reflected_correction([zero, a, b], cube16)
    assert out[0].fq0_hat == 5.0 and out[0].route == "data"
    assert out[1].fq0_hat == 6.0 and out[1].route == "data+reflected"
    assert out[2].fq0_hat == 2.0 and out[2].route == "data"
