"""Dirichlet forward solver, boundary traces, Cauchy data and its distance.

Discretisation: cell-centred seven-point Laplacian on the box, Dirichlet data
imposed on the face-cell centres through linear ghost values
``u_ghost = 2 f - u_near``.  The discrete Dirichlet-to-Neumann map returns the
flux ``2 (f - u_near) / h`` that is conservative for this scheme, so that the
discrete Green identity

    sum_Gamma dA (Lambda_1 f_1 * f_2 - f_1 * Lambda_2 f_2) = sum_Omega dV (q2 - q1) u1 u2

holds to solver precision.  Boundary arrays have shape ``(6, n, n)`` in the
face order of :data:`cgolab.grid.FACES`; the Gamma_0 entry (``x3 = 0``) is
always zero for Dirichlet data.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EmptySet, NearResonance
from .grid import FACES, GAMMA0, GAMMA_FACES, DomainSpec, ScalarField

logger = logging.getLogger(__name__)

COND_THRESHOLD = 1e8


def _second_difference(n: int, h: float) -> sp.spmatrix:
    main = -2.0 * np.ones(n)
    main[0] = main[-1] = -3.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]) / h**2


def laplacian_matrix(domain: DomainSpec) -> sp.csc_matrix:
    """Cell-centred Dirichlet Laplacian (homogeneous ghost closure)."""
    n = domain.n
    h1, h2, h3 = domain.spacing
    eye = sp.identity(n, format="csr")
    lap = (sp.kron(sp.kron(_second_difference(n, h1), eye), eye)
           + sp.kron(sp.kron(eye, _second_difference(n, h2)), eye)
           + sp.kron(sp.kron(eye, eye), _second_difference(n, h3)))
    return lap.tocsc()


def _face_index(face: int, n: int):
    """Index expression selecting the cells adjacent to ``face``."""
    axis, side = divmod(face, 2)
    idx = [slice(None)] * 3
    idx[axis] = n - 1 if side else 0
    return tuple(idx), axis


def _next_index(face: int, n: int):
    axis, side = divmod(face, 2)
    idx = [slice(None)] * 3
    idx[axis] = n - 2 if side else 1
    return tuple(idx)


def _face_h(domain: DomainSpec, face: int) -> float:
    return domain.spacing[face // 2]


def boundary_source(domain: DomainSpec, f: np.ndarray) -> np.ndarray:
    """Right-hand side contribution ``-2 f / h^2`` of Dirichlet data ``f``."""
    n = domain.n
    rhs = np.zeros(domain.shape, dtype=complex)
    for face in range(6):
        idx, _ = _face_index(face, n)
        rhs[idx] -= 2.0 * f[face] / _face_h(domain, face) ** 2
    return rhs


def zero_boundary(domain: DomainSpec) -> np.ndarray:
    return np.zeros((6, domain.n, domain.n), dtype=complex)


class HelmholtzSolver:
    """Factorised ``Lap_h + k^2 + q`` with Dirichlet data on the whole boundary.

    One instance per ``(q, k)``; the factorisation is reused for every solve.

    Raises
    ------
    NearResonance
        If the factorisation fails or the estimated 1-norm condition number
        exceeds ``cond_threshold``.
    """

    def __init__(self, q: ScalarField, k: float, cond_threshold: float = COND_THRESHOLD,
                 check_condition: bool = True):
        self.domain = q.domain
        self.q = q
        self.k = float(k)
        A = laplacian_matrix(self.domain) + sp.diags(self.k**2 + q.values.ravel())
        self.matrix = A.astype(complex).tocsc()
        try:
            self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A",
                                 options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise NearResonance(f"singular Helmholtz operator at k = {k}: {exc}") from exc
        self.condition = self._estimate_condition() if check_condition else float("nan")
        if check_condition and not self.condition < cond_threshold:
            raise NearResonance(f"condition estimate {self.condition:.3g} exceeds {cond_threshold:.3g} at k = {k}")

    def _estimate_condition(self) -> float:
        N = self.matrix.shape[0]
        lu = self._lu
        inv = spla.LinearOperator((N, N), matvec=lu.solve, rmatvec=lambda b: lu.solve(b, trans="H"),
                                  dtype=complex)
        with np.errstate(all="ignore"):
            inv_norm = spla.onenormest(inv)
        return float(spla.norm(self.matrix, 1) * inv_norm)

    def solve(self, f: np.ndarray) -> ScalarField:
        rhs = boundary_source(self.domain, np.asarray(f))
        u = self._lu.solve(rhs.ravel())
        if not np.all(np.isfinite(u)):
            raise NearResonance("non-finite solution")
        return ScalarField(self.domain, u.reshape(self.domain.shape), "solution")

    def dtn(self, f: np.ndarray) -> np.ndarray:
        """Discrete Dirichlet-to-Neumann map (conservative outward flux on Gamma)."""
        g = neumann_trace(self.solve(f), f, scheme="conservative")
        g[GAMMA0] = 0.0
        return g


def solve_dirichlet(q: ScalarField, k: float, f: np.ndarray, **kw) -> ScalarField:
    """Solve ``(Lap + k^2 + q) u = 0`` with ``u = f`` on Gamma and ``u = 0`` on Gamma_0."""
    f = np.array(f, dtype=complex)
    if np.any(f[GAMMA0]):
        raise ValueError("Dirichlet data must vanish on Gamma_0")
    return HelmholtzSolver(q, k, **kw).solve(f)


def neumann_trace(u: ScalarField, f: np.ndarray, scheme: str = "second_order") -> np.ndarray:
    """Outward normal derivative on every face.

    ``scheme='second_order'`` fits a quadratic through the face value and the
    two nearest cell centres: ``(8 f - 9 u_1 + u_2) / (3 h)``.
    ``scheme='conservative'`` returns ``2 (f - u_1) / h``, the flux that makes
    the discrete Green identity exact.
    """
    n = u.domain.n
    g = np.zeros((6, n, n), dtype=complex)
    for face in range(6):
        idx, _ = _face_index(face, n)
        h = _face_h(u.domain, face)
        u1 = u.values[idx]
        if scheme == "second_order":
            u2 = u.values[_next_index(face, n)]
            g[face] = (8 * f[face] - 9 * u1 + u2) / (3 * h)
        elif scheme == "conservative":
            g[face] = 2 * (f[face] - u1) / h
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return g


def dtn_apply(q: ScalarField, k: float, f: np.ndarray, **kw) -> np.ndarray:
    return HelmholtzSolver(q, k, **kw).dtn(np.asarray(f, dtype=complex))


def boundary_integral(domain: DomainSpec, a: np.ndarray, b: np.ndarray, faces=GAMMA_FACES) -> complex:
    """``sum_faces dA a b`` (bilinear, no conjugation)."""
    tot = 0j
    for face in faces:
        ha, hb = domain.face_spacing(face)
        tot += complex(np.sum(a[face] * b[face])) * ha * hb
    return tot


def alessandrini_pairing(q1: ScalarField, q2: ScalarField, k: float, f1: np.ndarray, f2: np.ndarray,
                         *, solvers: tuple | None = None) -> complex:
    """Boundary pairing equal to ``int (q2 - q1) u1 u2`` for the discrete solutions.

    ``u1`` solves with ``q1`` and data ``f1``; ``u2`` with ``q2`` and ``f2``.
    """
    s1, s2 = solvers or (HelmholtzSolver(q1, k), HelmholtzSolver(q2, k))
    g1, g2 = s1.dtn(f1), s2.dtn(f2)
    return pairing_from_data(q1.domain, f1, g1, f2, g2)


def pairing_from_data(domain: DomainSpec, f1, g1, f2, g2) -> complex:
    return boundary_integral(domain, g1, f2) - boundary_integral(domain, f1, g2)


# -- fractional boundary norms ----------------------------------------------

def _face_weights(domain: DomainSpec, face: int, t: float) -> np.ndarray:
    la, lb = domain.face_lengths(face)
    n = domain.n
    mu_a = np.pi * np.arange(1, n + 1) / la
    mu_b = np.pi * np.arange(1, n + 1) / lb
    return (1.0 + mu_a[:, None] ** 2 + mu_b[None, :] ** 2) ** t


def face_coefficients(domain: DomainSpec, a: np.ndarray, t: float) -> np.ndarray:
    """Weighted sine coefficients on Gamma, flattened; ``||.||_2`` gives the H^t norm."""
    parts = []
    for face in GAMMA_FACES:
        ha, hb = domain.face_spacing(face)
        c = scipy.fft.dstn(a[face], type=2, norm="ortho")
        parts.append((np.sqrt(_face_weights(domain, face, t) * ha * hb) * c).ravel())
    return np.concatenate(parts)


def face_norm(domain: DomainSpec, a: np.ndarray, t: float) -> float:
    return float(np.linalg.norm(face_coefficients(domain, a, t)))


@dataclass(frozen=True)
class CauchyPair:
    """Dirichlet trace ``f`` and outward Neumann trace ``g`` on Gamma."""

    domain: DomainSpec
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for a in (self.f, self.g):
            if a.shape != (6, self.domain.n, self.domain.n):
                raise ValueError("boundary fields must have shape (6, n, n)")
            if np.any(a[GAMMA0]):
                raise ValueError("Cauchy pairs are supported on Gamma only")

    @property
    def norm_h(self) -> float:
        h, m = boundary_norms(self)
        return float(np.hypot(h, m))

    def coefficients(self) -> np.ndarray:
        """Coordinates in which the Euclidean norm is the H^1/2 + H^-1/2 norm."""
        return np.concatenate([face_coefficients(self.domain, self.f, 0.5),
                               face_coefficients(self.domain, self.g, -0.5)])


def boundary_norms(pair: CauchyPair) -> tuple[float, float]:
    """``(||f||_{H^1/2(Gamma)}, ||g||_{H^-1/2(Gamma)})`` from per-face sine transforms."""
    return face_norm(pair.domain, pair.f, 0.5), face_norm(pair.domain, pair.g, -0.5)


@dataclass(frozen=True)
class CauchyDataSet:
    tag: str
    k: float
    pairs: tuple[CauchyPair, ...]
    meta: dict = field(default_factory=dict)

    @property
    def domain(self) -> DomainSpec:
        return self.pairs[0].domain

    def matrix(self) -> np.ndarray:
        """Columns are the weighted coordinates of the nonzero pairs."""
        cols = [p.coefficients() for p in self.pairs]
        return np.stack(cols, axis=1)

    def gram_condition(self) -> float:
        return float(np.linalg.cond(self.matrix()))

    def dirichlet_matrix(self) -> np.ndarray:
        return np.stack([face_coefficients(self.domain, p.f, 0.5) for p in self.pairs], axis=1)


def face_mode(domain: DomainSpec, face: int, j1: int, j2: int) -> np.ndarray:
    """Sine mode ``sin(j1 pi s/la) sin(j2 pi t/lb)`` on one face (zero elsewhere)."""
    a, b = domain.face_axes(face)
    la, lb = domain.face_lengths(face)
    a0, b0 = a[0] - 0.5 * (a[1] - a[0]), b[0] - 0.5 * (b[1] - b[0])
    out = zero_boundary(domain)
    out[face] = np.outer(np.sin(j1 * np.pi * (a - a0) / la), np.sin(j2 * np.pi * (b - b0) / lb))
    return out


def face_mode_dictionary(domain: DomainSpec, size: int = 24) -> list[np.ndarray]:
    """Low-order face modes on Gamma, cycling over faces by increasing order."""
    orders = sorted(((j1, j2) for j1 in range(1, 6) for j2 in range(1, 6)), key=lambda p: (p[0] + p[1], p))
    out = []
    for j1, j2 in orders:
        for face in GAMMA_FACES:
            out.append(face_mode(domain, face, j1, j2))
            if len(out) == size:
                return out
    return out


def measure_cauchy(q: ScalarField, k: float, inputs: Sequence[np.ndarray], tag: str = "",
                   solver: HelmholtzSolver | None = None) -> CauchyDataSet:
    """Noiseless Cauchy data ``(f, Lambda_q f)`` for each Dirichlet input."""
    solver = solver or HelmholtzSolver(q, k)
    pairs = []
    for f in inputs:
        f = np.array(f, dtype=complex)
        f[GAMMA0] = 0.0
        pairs.append(CauchyPair(q.domain, f, solver.dtn(f)))
    return CauchyDataSet(tag, float(k), tuple(pairs))


def _one_sided(A: np.ndarray, B: np.ndarray) -> float:
    Q, _ = np.linalg.qr(B)
    worst = 0.0
    for j in range(A.shape[1]):
        a = A[:, j]
        na = np.linalg.norm(a)
        if na == 0:
            continue
        r = a - Q @ (Q.conj().T @ a)
        worst = max(worst, float(np.linalg.norm(r) / na))
    return worst


def cauchy_distance(A: CauchyDataSet, B: CauchyDataSet) -> float:
    """Symmetrised max-min relative distance, minima over the span of the other set."""
    MA, MB = A.matrix(), B.matrix()
    MA = MA[:, np.linalg.norm(MA, axis=0) > 0]
    MB = MB[:, np.linalg.norm(MB, axis=0) > 0]
    if MA.shape[1] == 0 or MB.shape[1] == 0:
        raise EmptySet("Cauchy data set has no nonzero pairs")
    return max(_one_sided(MA, MB), _one_sided(MB, MA))


def _band_noise(domain: DomainSpec, rng: np.random.Generator, band: int) -> np.ndarray:
    out = zero_boundary(domain)
    n = domain.n
    for face in GAMMA_FACES:
        c = np.zeros((n, n), dtype=complex)
        c[:band, :band] = rng.standard_normal((band, band)) + 1j * rng.standard_normal((band, band))
        out[face] = scipy.fft.idstn(c, type=2, norm="ortho")
    return out


def perturb(data: CauchyDataSet, level: float, seed: int, band: int = 8) -> CauchyDataSet:
    """Add band-limited noise of relative combined norm ``level`` to every pair."""
    if level < 0:
        raise ValueError("level must be >= 0")
    if level == 0:
        return data
    rng = np.random.default_rng(seed)
    out = []
    for p in data.pairs:
        df, dg = _band_noise(p.domain, rng, band), _band_noise(p.domain, rng, band)
        scale = level * p.norm_h / CauchyPair(p.domain, df, dg).norm_h
        out.append(CauchyPair(p.domain, p.f + scale * df, p.g + scale * dg))
    meta = dict(data.meta, noise_level=level, noise_seed=seed)
    return CauchyDataSet(data.tag, data.k, tuple(out), meta)


def save_cauchy(data: CauchyDataSet, directory: str | Path) -> Path:
    """JSON manifest plus one little-endian complex128 file per pair, and a CSV of norms."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dom = data.domain
    entries = []
    for i, p in enumerate(data.pairs):
        name = f"pair_{i:03d}.bin"
        (d / name).write_bytes(np.ascontiguousarray(np.stack([p.f, p.g]), dtype="<c16").tobytes())
        h, m = boundary_norms(p)
        entries.append({"file": name, "h_half": repr(h), "h_minus_half": repr(m)})
    manifest = {"tag": data.tag, "k": repr(data.k), "domain": dom.to_dict(), "faces": list(FACES),
                "layout": "[f, g] x face x a x b, <c16", "pairs": entries, "meta": data.meta}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with (d / "norms.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "h_half", "h_minus_half", "combined"])
        for i, e in enumerate(entries):
            w.writerow([i, e["h_half"], e["h_minus_half"], repr(float(np.hypot(float(e["h_half"]), float(e["h_minus_half"]))))])
    return d / "manifest.json"


def load_cauchy(directory: str | Path) -> CauchyDataSet:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    dm = man["domain"]
    dom = DomainSpec(dm["L"], dm["H"], dm["R"], dm["n"])
    pairs = []
    for e in man["pairs"]:
        arr = np.frombuffer((d / e["file"]).read_bytes(), dtype="<c16").reshape(2, 6, dom.n, dom.n)
        pairs.append(CauchyPair(dom, arr[0].copy(), arr[1].copy()))
    return CauchyDataSet(man["tag"], float(man["k"]), tuple(pairs), man.get("meta", {}))
