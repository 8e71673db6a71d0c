from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cgolab.errors import BadExponents, SobolevBoundViolated
from cgolab.grid import (DomainSpec, GaussianBump, PotentialDescriptor, ScalarField, extend_even,
                         interpolation_check, l2_norm, load_field, periodic_sobolev_norm, sample_potential,
                         save_field, sobolev_norm)

from conftest import gaussian


def test_domain_geometry():
    d = DomainSpec(0.5, 1.0, 1.3, 16)
    assert d.spacing == pytest.approx((1 / 16, 1 / 16, 1 / 16))
    assert d.shape == (16, 16, 16)
    assert d.doubled_shape == (16, 16, 32)
    x1, _, x3 = d.axes()
    assert x1[0] == pytest.approx(-0.5 + 1 / 32)
    assert np.all(x3 < 0)
    assert d.to_dict() == {"L": 0.5, "H": 1.0, "R": 1.3, "n": 16}


@pytest.mark.parametrize("args", [(0.5, 1.0, 1.0, 16), (0.5, 1.0, 1.3, 15), (0.5, 1.0, 1.3, 6), (0, 1, 2, 16)])
def test_domain_rejects(args):
    with pytest.raises(ValueError):
        DomainSpec(*args)


def test_gaussian_fourier_matches_quadrature():
    g = GaussianBump(1.3, (0.1, -0.2, 0.05), 0.3)
    x = np.linspace(-3, 3, 97)
    h = x[1] - x[0]
    X = np.meshgrid(x, x, x, indexing="ij")
    vals = g(*X)
    for xi in ([0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [3.0, 0.0, 4.0]):
        quad = np.sum(vals * np.exp(-1j * (xi[0] * X[0] + xi[1] * X[1] + xi[2] * X[2]))) * h**3
        assert g.fourier(np.array(xi))[0] == pytest.approx(quad, rel=1e-8, abs=1e-12)


def test_single_mode_sobolev_norm():
    shape, spacing = (8, 8, 16), (0.1, 0.1, 0.05)
    m = np.array([2, -1, 3]) * 2 * np.pi / (np.array(shape) * spacing)
    g = np.meshgrid(*[np.arange(s) * h for s, h in zip(shape, spacing)], indexing="ij")
    v = np.exp(1j * (m[0] * g[0] + m[1] * g[1] + m[2] * g[2]))
    vol = np.prod(np.array(shape) * spacing)
    for t in (-1.0, 0.0, 1.5, 2.5):
        assert periodic_sobolev_norm(v, spacing, t) == pytest.approx((1 + m @ m) ** (t / 2) * np.sqrt(vol), rel=1e-12)


def test_sobolev_l2_consistency(cube16):
    q = sample_potential(PotentialDescriptor.from_dict({"terms": [gaussian(1, (0, 0, -0.5), 0.2)]}), cube16)
    assert sobolev_norm(q, 0.0) == pytest.approx(l2_norm(q), rel=1e-12)
    assert sobolev_norm(q, -1.0) < sobolev_norm(q, 0.0) < sobolev_norm(q, 2.5)


def test_sample_potential_enforces_bound(cube16):
    d = PotentialDescriptor.from_dict({"terms": [gaussian(1, (0, 0, -0.5), 0.2)], "N": 1e-3})
    with pytest.raises(SobolevBoundViolated):
        sample_potential(d, cube16)


def test_descriptor_roundtrip_and_validation():
    d = {"terms": [gaussian(1.0, (0.0, 0.0, -0.5), 0.2),
                   {"type": "layer", "amplitude": 0.5, "center": 0.0, "width": 0.1},
                   {"type": "cosine", "amplitude": 0.2, "wavevector": [1.0, 0.0, 2.0], "phase": 0.3}],
         "s": 2.5, "N": 100.0, "alpha": 0.8}
    desc = PotentialDescriptor.from_dict(d)
    assert PotentialDescriptor.from_dict(desc.to_dict()) == desc
    assert desc.scaled(2.0)(0.0, 0.0, -0.5) == pytest.approx(2 * desc(0.0, 0.0, -0.5))
    with pytest.raises(ValueError):
        PotentialDescriptor.from_dict({"terms": [{"type": "spline"}]})
    with pytest.raises(ValueError):
        PotentialDescriptor.from_dict({"terms": [], "s": 1.2})
    with pytest.raises(ValueError):
        PotentialDescriptor.from_dict({"terms": [gaussian(np.nan, (0, 0, 0), 1.0)]})


def test_extend_even_and_restrict(cube16):
    rng = np.random.default_rng(0)
    q = ScalarField(cube16, rng.normal(size=cube16.shape), "potential")
    e = extend_even(q)
    assert e.values.shape == cube16.doubled_shape
    np.testing.assert_array_equal(e.values[:, :, :16], e.values[:, :, 16:][:, :, ::-1])
    np.testing.assert_array_equal(e.restrict().values, q.values)


def test_field_roundtrip(tmp_path, cube16):
    rng = np.random.default_rng(1)
    f = ScalarField(cube16, rng.normal(size=cube16.shape) + 1j * rng.normal(size=cube16.shape), "solution")
    save_field(f, tmp_path / "u")
    g = load_field(tmp_path / "u")
    np.testing.assert_array_equal(f.values, g.values)
    assert g.kind == "solution" and g.domain == cube16


def test_interpolation_rejects_bad_exponents(cube16):
    f = ScalarField(cube16, np.ones(cube16.shape), "potential")
    with pytest.raises(BadExponents):
        interpolation_check(f, -1.0, 2.0, 2.5, 0.5)
    with pytest.raises(BadExponents):
        interpolation_check(f, 2.5, 2.0, -1.0, 0.5)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (8, 8, 8), elements=st.floats(-10, 10)),
       st.floats(0.05, 0.95))
def test_interpolation_inequality_holds(vals, p):
    dom = DomainSpec(0.5, 1.0, 1.3, 8)
    if not np.any(vals):
        return
    f = ScalarField(dom, vals, "potential")
    t0, t1 = -1.0, 2.5
    rep = interpolation_check(f, t0, (1 - p) * t0 + p * t1, t1, p)
    assert rep.holds
