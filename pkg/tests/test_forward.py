from __future__ import annotations

import math

import numpy as np
import pytest

from cgolab.errors import EmptySet, NearResonance
from cgolab.forward import (CauchyDataSet, CauchyPair, HelmholtzSolver, alessandrini_pairing, cauchy_distance,
                            face_mode, face_mode_dictionary, face_norm, load_cauchy, measure_cauchy,
                            neumann_trace, perturb, save_cauchy, solve_dirichlet, zero_boundary)
from cgolab.grid import GAMMA0, GAMMA_FACES, DomainSpec, ScalarField

from conftest import gaussian, potential

K = 1.0
C = math.sqrt(math.pi**2 - K**2)


def exact(x1, x2, x3):
    # (Lap + k^2) u = 0 with u = 0 on x3 = 0
    return np.exp(1j * math.pi * x1) * np.sinh(C * x3)


def exact_dn(face, x1, x2, x3):
    d = {0: -1j * math.pi * exact(x1, x2, x3), 1: 1j * math.pi * exact(x1, x2, x3),
         2: 0 * x1, 3: 0 * x1,
         4: -C * np.exp(1j * math.pi * x1) * np.cosh(C * x3)}
    return d[face]


def boundary_data(dom):
    f = zero_boundary(dom)
    for face in GAMMA_FACES:
        f[face] = exact(*dom.face_points(face))
    return f


def zero_q(dom):
    return ScalarField(dom, np.zeros(dom.shape), "potential")


def test_dirichlet_solve_second_order():
    errs = []
    for n in (8, 16, 32):
        dom = DomainSpec(0.5, 1.0, 1.3, n)
        u = solve_dirichlet(zero_q(dom), K, boundary_data(dom))
        errs.append(np.abs(u.values - exact(*dom.mesh())).max())
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.5


def test_neumann_trace_converges():
    # u carries an O(h^2) error next to the boundary, so the trace is first order
    errs = []
    for n in (16, 32):
        dom = DomainSpec(0.5, 1.0, 1.3, n)
        f = boundary_data(dom)
        g = neumann_trace(solve_dirichlet(zero_q(dom), K, f), f)
        errs.append(max(np.abs(g[face] - exact_dn(face, *dom.face_points(face))).max() for face in GAMMA_FACES))
    assert errs[0] / errs[1] > 1.6


def test_dirichlet_rejects_top_data(cube16):
    f = zero_boundary(cube16)
    f[GAMMA0] = 1.0
    with pytest.raises(ValueError):
        solve_dirichlet(zero_q(cube16), 1.0, f)


def test_alessandrini_identity(cube_pair):
    q1, q2 = cube_pair
    dom = q1.domain
    f1, f2 = face_mode(dom, 0, 1, 1), face_mode(dom, 4, 2, 1)
    s1, s2 = HelmholtzSolver(q1, 2.0), HelmholtzSolver(q2, 2.0)
    bnd = alessandrini_pairing(q1, q2, 2.0, f1, f2, solvers=(s1, s2))
    vol = np.sum((q2.values - q1.values) * s1.solve(f1).values * s2.solve(f2).values) * dom.cell_volume
    assert abs(bnd - vol) <= 1e-8 * abs(vol)


def test_near_resonance(cube16):
    with pytest.raises(NearResonance):
        HelmholtzSolver(zero_q(cube16), 1.0, cond_threshold=1.0)


def test_face_norm_of_sine_mode(cube16):
    dom = cube16
    for face, j1, j2 in ((0, 1, 1), (4, 3, 2), (2, 2, 5)):
        m = face_mode(dom, face, j1, j2)
        la, lb = dom.face_lengths(face)
        ha, hb = dom.face_spacing(face)
        l2 = math.sqrt(np.sum(np.abs(m[face]) ** 2) * ha * hb)
        w = 1 + (j1 * math.pi / la) ** 2 + (j2 * math.pi / lb) ** 2
        for t in (-0.5, 0.0, 0.5):
            assert face_norm(dom, m, t) == pytest.approx(w ** (t / 2) * l2, rel=1e-12)


def test_cauchy_distance_properties(cube_pair):
    q1, q2 = cube_pair
    fs = face_mode_dictionary(q1.domain, 10)
    A = measure_cauchy(q1, 1.5, fs)
    B = measure_cauchy(q2, 1.5, fs)
    assert cauchy_distance(A, A) < 1e-12
    d = cauchy_distance(A, B)
    assert 0 < d < 1 and d == pytest.approx(cauchy_distance(B, A), rel=1e-12)
    # the distance only sees the span
    rng = np.random.default_rng(3)
    mix = rng.normal(size=(10, 10))
    comb = [CauchyPair(A.domain, sum(mix[i, j] * A.pairs[j].f for j in range(10)),
                       sum(mix[i, j] * A.pairs[j].g for j in range(10))) for i in range(10)]
    assert cauchy_distance(A, CauchyDataSet("mix", 1.5, tuple(comb))) < 1e-10
    empty = CauchyDataSet("z", 1.5, (CauchyPair(A.domain, zero_boundary(A.domain), zero_boundary(A.domain)),))
    with pytest.raises(EmptySet):
        cauchy_distance(A, empty)


def test_perturb_level_and_determinism(cube_pair):
    q1, _ = cube_pair
    A = measure_cauchy(q1, 1.0, face_mode_dictionary(q1.domain, 4))
    P = perturb(A, 1e-2, seed=5)
    for p, r in zip(A.pairs, P.pairs):
        d = CauchyPair(p.domain, r.f - p.f, r.g - p.g)
        assert d.norm_h / p.norm_h == pytest.approx(1e-2, rel=1e-10)
    Q = perturb(A, 1e-2, seed=5)
    assert all(np.array_equal(a.f, b.f) and np.array_equal(a.g, b.g) for a, b in zip(P.pairs, Q.pairs))
    assert perturb(A, 0.0, seed=1) is A
    with pytest.raises(ValueError):
        perturb(A, -1.0, seed=1)


def test_cauchy_roundtrip(tmp_path, cube16):
    q = potential(cube16, gaussian(1.0, (0.0, 0.0, -0.5), 0.2))
    A = measure_cauchy(q, 2.0, face_mode_dictionary(cube16, 3), tag="A")
    save_cauchy(A, tmp_path / "A")
    B = load_cauchy(tmp_path / "A")
    assert B.k == A.k and B.tag == "A"
    for a, b in zip(A.pairs, B.pairs):
        np.testing.assert_array_equal(a.f, b.f)
        np.testing.assert_array_equal(a.g, b.g)


def test_cauchy_pair_validation(cube16):
    f = zero_boundary(cube16)
    f[GAMMA0] = 1.0
    with pytest.raises(ValueError):
        CauchyPair(cube16, f, zero_boundary(cube16))
