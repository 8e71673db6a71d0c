from __future__ import annotations

import json

import numpy as np
import pytest

from cgolab.grid import ScalarField
from cgolab.recovery import direct_transform
from cgolab.rl import (fourier_decay_check, rl_bound, shift_path, transform_even, translation_modulus,
                       write_decay_csv, write_modulus_csv, write_summary)

from conftest import gaussian, potential


@pytest.fixture(scope="module")
def bump(cube16):
    return potential(cube16, gaussian(1.0, (0.0, 0.0, -0.5), 0.15))


def test_lipschitz_field_has_unit_exponent(bump, cube16):
    h = min(cube16.spacing)
    for d in ((1, 0, 0), (0, 0, 1), (1, 1, 1)):
        rep = translation_modulus(bump, shift_path(d, h, cap=cube16.half_width / 4), alpha=0.9)
        assert 0.9 <= rep.exponent <= 1.1
        assert rep.exponent_ok
        assert np.all(rep.moduli <= rep.C0 * rep.shift_norms**0.9 * (1 + 1e-12))


def test_shift_range_is_enforced(bump, cube16):
    h = min(cube16.spacing)
    with pytest.raises(ValueError):
        translation_modulus(bump, [[h / 8, 0, 0]])
    with pytest.raises(ValueError):
        translation_modulus(bump, [[17 * h, 0, 0]])
    with pytest.raises(ValueError):
        translation_modulus(bump, [[2 * h, 0, 0]], delta_tilde=h)


def test_shift_path_cap():
    p = shift_path((0, 3, 4), 0.1, count=5, cap=0.5)
    np.testing.assert_allclose(np.linalg.norm(p, axis=1)[[0, -1]], [0.025, 0.495])
    np.testing.assert_allclose(p[0] / np.linalg.norm(p[0]), [0, 0.6, 0.8])


def test_zero_field_is_degenerate(cube16):
    z = ScalarField(cube16, np.zeros(cube16.shape), "potential")
    rep = translation_modulus(z, shift_path((1, 0, 0), min(cube16.spacing), cap=cube16.half_width / 4))
    assert rep.C0 == 0.0 and rep.exponent == np.inf
    dec = fourier_decay_check(z, [0.5], [[1.0, 0.0, 0.0]])
    assert dec.degenerate and dec.C_min == 0.0 and dec.fraction_satisfied(0.0) == 1.0


def test_transform_matches_direct_quadrature(bump):
    xi = np.array([[0.0, 0.0, 0.0], [2.0, -1.0, 3.0]])
    for x, v in zip(xi, transform_even(bump, xi)):
        assert v == pytest.approx(direct_transform(bump, x), rel=1e-12)


def test_decay_check_constant(bump, tmp_path):
    xi = [[0, 0, 0], [5, 0, 0], [0, 5, 10], [20, 20, 20]]
    rep = fourier_decay_check(bump, [0.2, 0.5, 0.9], xi, alpha=0.9)
    assert rep.fraction_satisfied(rep.C_min) == 1.0
    assert rep.fraction_satisfied(0.5 * rep.C_min) < 1.0
    slack = [r[2] for r in rep.rows()]
    assert min(slack) == pytest.approx(0.0, abs=1e-12) and max(slack) < 1.0
    assert rep.ratios[0, 0] == pytest.approx(abs(transform_even(bump, np.zeros((1, 3)))[0]) / rl_bound(0.2, 0, 0.9))
    with pytest.raises(ValueError):
        fourier_decay_check(bump, [0.0], xi)
    mod = translation_modulus(bump, shift_path((1, 0, 0), 1 / 16, cap=0.125))
    write_modulus_csv(mod, tmp_path / "m.csv")
    write_decay_csv(rep, tmp_path / "d.csv")
    out = json.loads(write_summary(tmp_path / "s.json", mod, rep, C_frozen=rep.C_min).read_text())
    assert float(out["decay"]["fraction_satisfied"]) == 1.0
    assert (tmp_path / "d.csv").read_text().count("\n") == 1 + 3 * 4
