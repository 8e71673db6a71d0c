"""Complex geometrical optics solutions and reflected pairs.

A CGO solution is ``exp(i zeta.x) (1 + w)`` with ``zeta.zeta = k^2``.  The
remainder satisfies ``Lap w + 2i zeta.grad w = -q (1 + w)`` and is computed by
Picard iteration with the symbol ``1 / (|kappa|^2 + 2 zeta.kappa)`` on a
quasi-periodic cell: the doubled box padded by a margin on every side, with
the frequency lattice shifted by a fraction of a cell to keep the symbol away
from its zero set.

With ``stencil='fd7'`` the continuous symbol is replaced by that of the
seven-point Laplacian, ``sigma_h(zeta + kappa) - sigma_h(zeta)``.  For a frame
on the discrete dispersion surface (see
:func:`cgolab.frames.grid_adapted_frame`) the resulting CGO solution solves
the finite-difference equation exactly, and its Dirichlet trace is the face
average of the two adjacent cells, as in the forward solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ExponentGuard, NoConvergence, SymbolSingularity, TraceNotVanishing
from .frames import ZetaFrame, cdot, discrete_dispersion
from .grid import GAMMA0, DomainSpec, ScalarField, extend_even, periodic_sobolev_norm

logger = logging.getLogger(__name__)

EXPONENT_GUARD = 700.0


@dataclass(frozen=True)
class PeriodicCell:
    """Doubled box padded by ``pad`` cells horizontally and ``pad3`` vertically.

    ``stencil`` selects the Laplacian symbol: ``'spectral'`` (continuum) or
    ``'fd7'`` (seven-point finite differences).
    """

    domain: DomainSpec
    pad: int
    pad3: int
    stencil: str = "spectral"

    def __post_init__(self):
        if self.stencil not in ("spectral", "fd7"):
            raise ValueError(f"unknown stencil {self.stencil!r}")
        if min(self.pad, self.pad3) < 1:
            raise ValueError("the periodic cell needs at least one padding cell")

    @classmethod
    def for_domain(cls, domain: DomainSpec, pad_fraction: float = 0.25, stencil: str = "spectral") -> "PeriodicCell":
        p = max(int(round(pad_fraction * domain.n)), 1)
        return cls(domain, p, p, stencil)

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.domain.n
        return (n + 2 * self.pad, n + 2 * self.pad, 2 * n + 2 * self.pad3)

    @property
    def spacing(self):
        return self.domain.spacing

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h1, h2, h3 = self.spacing
        L, H = self.domain.half_width, self.domain.depth
        n1, n2, n3 = self.shape
        x1 = -L - self.pad * h1 + (np.arange(n1) + 0.5) * h1
        x2 = -L - self.pad * h2 + (np.arange(n2) + 0.5) * h2
        x3 = -H - self.pad3 * h3 + (np.arange(n3) + 0.5) * h3
        return x1, x2, x3

    def box_slices(self, doubled: bool = False) -> tuple[slice, slice, slice]:
        n = self.domain.n
        s = slice(self.pad, self.pad + n)
        return s, s, slice(self.pad3, self.pad3 + (2 * n if doubled else n))

    def embed(self, q_doubled: ScalarField) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.box_slices(doubled=True)] = q_doubled.values
        return out

    def max_radius(self) -> float:
        return float(np.sqrt(sum(np.max(np.abs(a)) ** 2 for a in self.axes())))

    def frequencies(self, shift: Sequence[float]) -> list[np.ndarray]:
        return [2 * np.pi * np.fft.fftfreq(m, d=h) + shift[a]
                for a, (m, h) in enumerate(zip(self.shape, self.spacing))]

    def symbol(self, zeta: np.ndarray, shift: Sequence[float]) -> np.ndarray:
        """``|kappa|^2 + 2 zeta.kappa`` (or its seven-point analogue) on the shifted lattice."""
        parts = []
        for f, z, h in zip(self.frequencies(shift), zeta, self.spacing):
            if self.stencil == "spectral":
                parts.append(f**2 + 2 * z * f)
            else:
                parts.append(4 * (np.sin((z + f) * h / 2) ** 2 - np.sin(z * h / 2) ** 2) / h**2)
        return parts[0][:, None, None] + parts[1][None, :, None] + parts[2][None, None, :]

    def best_shift(self, zeta: np.ndarray) -> tuple[np.ndarray, float]:
        """Lattice shift (a fraction of the lattice spacing per axis) maximising min |symbol|."""
        steps = [2 * np.pi / (m * h) for m, h in zip(self.shape, self.spacing)]
        best, best_val = None, -1.0
        for frac in product((0.5, 0.25, 0.0), repeat=3):
            shift = np.array([f * st for f, st in zip(frac, steps)])
            val = float(np.min(np.abs(self.symbol(zeta, shift))))
            if val > best_val:
                best, best_val = shift, val
        return best, best_val

    def eval_matrix(self, axis: int, targets: np.ndarray, shift: float) -> np.ndarray:
        """Trigonometric interpolation from grid nodes to ``targets`` along one axis.

        Interpolates ``exp(i shift x)`` times a periodic function; the Nyquist
        mode is split symmetrically so the result is reflection-consistent.
        """
        nodes = self.axes()[axis]
        m, h = self.shape[axis], self.spacing[axis]
        mu = 2 * np.pi * np.fft.fftfreq(m, d=h)
        weights = np.ones(m)
        if m % 2 == 0:
            nyq = m // 2
            mu = np.append(mu, -mu[nyq])
            weights = np.append(weights, 0.5)
            weights[nyq] = 0.5
        d = np.asarray(targets, dtype=float)[:, None] - nodes[None, :]
        phase = np.exp(1j * (mu[None, None, :] + shift) * d[:, :, None])
        return np.tensordot(phase, weights, axes=([2], [0])) / m


@dataclass(frozen=True)
class CGOSolution:
    """Remainder ``w`` for one complex frequency ``zeta``.

    ``w_cell`` holds the remainder on the whole padded cell; ``w`` is its
    restriction to the doubled box.
    """

    zeta: np.ndarray
    which: str
    cell: PeriodicCell
    w_cell: np.ndarray
    shift: np.ndarray
    residual_norm: float
    hs_norm_w: float
    iterations: int
    sobolev_order: float

    @property
    def w(self) -> ScalarField:
        vals = self.w_cell[self.cell.box_slices(doubled=True)]
        return ScalarField(self.cell.domain, vals.copy(), "remainder", "doubled")

    @property
    def im_norm(self) -> float:
        return float(np.linalg.norm(np.imag(self.zeta)))

    def on_box(self) -> np.ndarray:
        return self.w_cell[self.cell.box_slices()]

    def on_face(self, face: int) -> np.ndarray:
        """Remainder at the face-cell centres of ``face`` (shape ``(n, n)``)."""
        dom = self.cell.domain
        L, H = dom.half_width, dom.depth
        b1, b2, b3 = self.cell.box_slices()
        if face in (0, 1):
            E = self.cell.eval_matrix(0, np.array([-L if face == 0 else L]), self.shift[0])
            return np.tensordot(E, self.w_cell[:, b2, b3], axes=([1], [0]))[0]
        if face in (2, 3):
            E = self.cell.eval_matrix(1, np.array([-L if face == 2 else L]), self.shift[1])
            return np.tensordot(E, self.w_cell[b1, :, b3], axes=([1], [1]))[0]
        E = self.cell.eval_matrix(2, np.array([-H if face == 4 else 0.0]), self.shift[2])
        return np.tensordot(self.w_cell[b1, b2, :], E, axes=([2], [1]))[:, :, 0]

    def mirrored(self, zeta_star: np.ndarray, which: str) -> "CGOSolution":
        """Remainder for the reflected frequency: ``w*(x', x3) = w(x', -x3)``."""
        sh = self.shift * np.array([1.0, 1.0, -1.0])
        return CGOSolution(np.asarray(zeta_star), which, self.cell, self.w_cell[:, :, ::-1].copy(), sh,
                           self.residual_norm, self.hs_norm_w, self.iterations, self.sobolev_order)


def _phase(cell: PeriodicCell, shift) -> np.ndarray:
    x1, x2, x3 = cell.axes()
    return (np.exp(1j * shift[0] * x1)[:, None, None] * np.exp(1j * shift[1] * x2)[None, :, None]
            * np.exp(1j * shift[2] * x3)[None, None, :])


def solve_remainder(q_ext: ScalarField, zeta, tol: float = 1e-8, max_iter: int = 200, *,
                    cell: PeriodicCell | None = None, sobolev_order: float = 2.5,
                    which: str = "zeta1") -> CGOSolution:
    """Picard iteration for ``Lap w + 2i zeta.grad w = -q (1 + w)``.

    Raises
    ------
    SymbolSingularity
        If the shifted symbol has magnitude below 1e-12 somewhere.
    NoConvergence
        If the relative update does not fall below ``tol`` within ``max_iter``.
    ExponentGuard
        If ``|Im zeta| |x|`` exceeds 700 on the cell.
    """
    zeta = np.asarray(zeta, dtype=complex)
    q_ext = extend_even(q_ext)
    cell = cell or PeriodicCell.for_domain(q_ext.domain)
    growth = float(np.linalg.norm(zeta.imag)) * cell.max_radius()
    if growth > EXPONENT_GUARD:
        raise ExponentGuard(f"|Im zeta| |x| = {growth:.4g} exceeds {EXPONENT_GUARD}")
    k2 = cdot(zeta, zeta) if cell.stencil == "spectral" else discrete_dispersion(zeta, cell.spacing)
    if abs(k2.imag) > 1e-10 * max(abs(k2), 1.0):
        raise ValueError("zeta.zeta must be real")

    shift, smin = cell.best_shift(zeta)
    if smin < 1e-12:
        raise SymbolSingularity(f"min |symbol| = {smin:.3g}")
    sym = cell.symbol(zeta, shift)
    ph = _phase(cell, shift)
    q = cell.embed(q_ext)

    def apply_inverse(g):
        return np.fft.ifftn(np.fft.fftn(g / ph) / sym) * ph

    w = np.zeros(cell.shape, dtype=complex)
    it = 0
    if np.any(q):
        for it in range(1, max_iter + 1):
            w_new = apply_inverse(q * (1 + w))
            upd = np.linalg.norm(w_new - w)
            nrm = np.linalg.norm(w_new)
            w = w_new
            if not np.isfinite(nrm) or nrm > 1e12:
                raise NoConvergence(f"iteration diverged at step {it} (|w| = {nrm:.3g})")
            if upd <= tol * nrm:
                break
        else:
            raise NoConvergence(f"no convergence in {max_iter} iterations (last update {upd / nrm:.3g})")
        lw = np.fft.ifftn(np.fft.fftn(w / ph) * (-sym)) * ph
        src = q * (1 + w)
        residual = float(np.linalg.norm(lw + src) / np.linalg.norm(src))
    else:
        it, residual = 1, 0.0
    hs = periodic_sobolev_norm(w, cell.spacing, sobolev_order, shift=shift) if np.any(w) else 0.0
    return CGOSolution(zeta, which, cell, w, shift, residual, hs, it, sobolev_order)


@dataclass(frozen=True)
class ReflectedPair:
    """``u_j = exp(i zeta_j.x)(1 + w_j) - exp(i zeta_j*.x)(1 + w_j*)`` on the box.

    ``f1``/``f2`` are boundary traces with shape ``(6, n, n)`` (face order of
    :data:`cgolab.grid.FACES`); the Gamma_0 entry is set to zero after the
    vanishing check and the measured values are kept in ``gamma0_max``.
    """

    frame: ZetaFrame
    u1: ScalarField
    u2: ScalarField
    f1: np.ndarray
    f2: np.ndarray
    gamma0_max: tuple[float, float]
    solutions: tuple = field(repr=False, default=())


def _plane_wave(zeta, x1, x2, x3):
    return np.exp(1j * (zeta[0] * x1 + zeta[1] * x2 + zeta[2] * x3))


def _assemble_one(domain, zeta, zeta_s, w, ws):
    x1, x2, x3 = domain.mesh()
    u = _plane_wave(zeta, x1, x2, x3) * (1 + w.on_box()) - _plane_wave(zeta_s, x1, x2, x3) * (1 + ws.on_box())
    trace = np.zeros((6, domain.n, domain.n), dtype=complex)
    for face in range(6):
        p1, p2, p3 = domain.face_points(face)
        trace[face] = (_plane_wave(zeta, p1, p2, p3) * (1 + w.on_face(face))
                       - _plane_wave(zeta_s, p1, p2, p3) * (1 + ws.on_face(face)))
    return u, trace


def _assemble_one_fd(domain, zeta, zeta_s, w, ws):
    """Cell values on the padded cell; traces are averages across each face."""
    cell = w.cell
    x1, x2, x3 = np.meshgrid(*cell.axes(), indexing="ij")
    U = _plane_wave(zeta, x1, x2, x3) * (1 + w.w_cell) - _plane_wave(zeta_s, x1, x2, x3) * (1 + ws.w_cell)
    b1, b2, b3 = cell.box_slices()
    u = U[b1, b2, b3]
    p, p3, n = cell.pad, cell.pad3, domain.n
    trace = np.zeros((6, n, n), dtype=complex)
    trace[0] = (U[p, b2, b3] + U[p - 1, b2, b3]) / 2
    trace[1] = (U[p + n - 1, b2, b3] + U[p + n, b2, b3]) / 2
    trace[2] = (U[b1, p, b3] + U[b1, p - 1, b3]) / 2
    trace[3] = (U[b1, p + n - 1, b3] + U[b1, p + n, b3]) / 2
    trace[4] = (U[b1, b2, p3] + U[b1, b2, p3 - 1]) / 2
    trace[5] = (U[b1, b2, p3 + n - 1] + U[b1, b2, p3 + n]) / 2
    return u, trace


def assemble_pair(frame: ZetaFrame, w1: CGOSolution, w1s: CGOSolution, w2: CGOSolution,
                  w2s: CGOSolution, tol: float = 1e-12) -> ReflectedPair:
    """Build ``u_1, u_2`` on the box and their boundary traces.

    Raises
    ------
    TraceNotVanishing
        If ``max |u_j|`` on ``x3 = 0`` exceeds ``tol`` times the field maximum.
    """
    domain = w1.cell.domain
    assemble = _assemble_one_fd if w1.cell.stencil == "fd7" else _assemble_one
    u1, t1 = assemble(domain, frame.zeta1, frame.zeta1s, w1, w1s)
    u2, t2 = assemble(domain, frame.zeta2, frame.zeta2s, w2, w2s)
    g0 = []
    for u, t in ((u1, t1), (u2, t2)):
        scale = max(np.max(np.abs(u)), np.max(np.abs(t[:GAMMA0])))
        rel = float(np.max(np.abs(t[GAMMA0])) / scale) if scale > 0 else 0.0
        if rel > tol:
            raise TraceNotVanishing(f"trace on x3 = 0 is {rel:.3g} of the field maximum")
        g0.append(rel)
        t[GAMMA0] = 0.0
    return ReflectedPair(frame, ScalarField(domain, u1, "solution"), ScalarField(domain, u2, "solution"),
                         t1, t2, (g0[0], g0[1]), (w1, w1s, w2, w2s))


def frame_remainders(frame: ZetaFrame, q1: ScalarField, q2: ScalarField, *, mode: str = "mirror",
                     tol: float = 1e-8, max_iter: int = 200, cell: PeriodicCell | None = None,
                     sobolev_order: float = 2.5) -> tuple[CGOSolution, ...]:
    """The four remainders ``(w1, w1*, w2, w2*)`` of a frame.

    ``mode='mirror'`` obtains the starred remainders by reflecting in x3 (exact
    for even potentials); ``mode='independent'`` solves for them directly.
    """
    q1e, q2e = extend_even(q1), extend_even(q2)
    cell = cell or PeriodicCell.for_domain(q1.domain)
    kw = dict(tol=tol, max_iter=max_iter, cell=cell, sobolev_order=sobolev_order)
    w1 = solve_remainder(q1e, frame.zeta1, which="zeta1", **kw)
    w2 = solve_remainder(q2e, frame.zeta2, which="zeta2", **kw)
    if mode == "mirror":
        return w1, w1.mirrored(frame.zeta1s, "zeta1s"), w2, w2.mirrored(frame.zeta2s, "zeta2s")
    if mode != "independent":
        raise ValueError(f"unknown mode {mode!r}")
    w1s = solve_remainder(q1e, frame.zeta1s, which="zeta1s", **kw)
    w2s = solve_remainder(q2e, frame.zeta2s, which="zeta2s", **kw)
    return w1, w1s, w2, w2s


def reflected_pair(frame: ZetaFrame, q1: ScalarField, q2: ScalarField, **kw) -> ReflectedPair:
    return assemble_pair(frame, *frame_remainders(frame, q1, q2, **kw))


@dataclass(frozen=True)
class DecayReport:
    im_norms: np.ndarray
    hs_norms: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    slope_ci: tuple[float, float]
    C_cal: float
    trivial: bool


def decay_study(q: ScalarField, frames: Sequence[ZetaFrame], *, sobolev_order: float = 2.5,
                tol: float = 1e-10, cell: PeriodicCell | None = None) -> DecayReport:
    """Fit ``log ||w||_{H^s}`` against ``log |Im zeta|`` along a path of frames."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    from .grid import sobolev_norm

    qn = sobolev_norm(q, sobolev_order)
    ims, hs = [], []
    for fr in frames:
        sol = solve_remainder(q, fr.zeta1, tol=tol, cell=cell, sobolev_order=sobolev_order)
        ims.append(sol.im_norm)
        hs.append(sol.hs_norm_w)
    ims, hs = np.array(ims), np.array(hs)
    if qn == 0.0 or not np.all(hs > 0):
        return DecayReport(ims, hs, math.nan, math.nan, math.nan, (math.nan, math.nan), 0.0, True)
    fit = stats.linregress(np.log(ims), np.log(hs))
    dof = len(ims) - 2
    half = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else math.inf
    c_cal = float(np.max(hs * ims / qn))
    return DecayReport(ims, hs, float(fit.slope), float(fit.intercept), float(fit.stderr),
                       (float(fit.slope) - half, float(fit.slope) + half), c_cal, False)


def laplacian_7pt(u: np.ndarray, spacing) -> np.ndarray:
    """Seven-point Laplacian on interior nodes (shape reduced by 2 per axis)."""
    h1, h2, h3 = spacing
    c = u[1:-1, 1:-1, 1:-1]
    return ((u[2:, 1:-1, 1:-1] - 2 * c + u[:-2, 1:-1, 1:-1]) / h1**2
            + (u[1:-1, 2:, 1:-1] - 2 * c + u[1:-1, :-2, 1:-1]) / h2**2
            + (u[1:-1, 1:-1, 2:] - 2 * c + u[1:-1, 1:-1, :-2]) / h3**2)


def pde_residual(u: ScalarField, q: ScalarField, k: float) -> float:
    """Relative L^2 norm of ``(Lap_h + k^2 + q) u`` over interior nodes."""
    c = u.values[1:-1, 1:-1, 1:-1]
    denom = np.linalg.norm(c)
    if denom == 0.0:
        return 0.0
    r = laplacian_7pt(u.values, u.domain.spacing) + (k**2 + q.values[1:-1, 1:-1, 1:-1]) * c
    return float(np.linalg.norm(r) / denom)
