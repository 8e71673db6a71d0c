"""Quantitative Riemann-Lebesgue checks for Hölder potentials.

Two pieces: the L^1 translation modulus of the zero-extended field,
``||f(. - y) - f||_1 <= C0 |y|^alpha``, and the mollified decay bound
``|F f(xi)| <= C (exp(-eps^2 |xi|^2 / 4 pi) + eps^alpha)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage, stats

from .grid import ScalarField, extend_even


@dataclass(frozen=True)
class ModulusReport:
    """Sampled translation modulus and its power-law fit.

    ``exponent`` is the least-squares slope of log modulus against log |y|;
    ``C0`` is the smallest constant with ``modulus <= C0 |y|^alpha`` on the
    samples.
    """

    shift_norms: np.ndarray
    moduli: np.ndarray
    exponent: float
    C0: float
    alpha: float
    delta_tilde: float

    @property
    def exponent_ok(self) -> bool:
        return bool(self.exponent >= self.alpha - 1e-9)

    def to_dict(self) -> dict:
        return {"exponent": repr(self.exponent), "C0": repr(self.C0), "alpha": repr(self.alpha),
                "delta_tilde": repr(self.delta_tilde), "exponent_ok": self.exponent_ok,
                "samples": [[repr(float(a)), repr(float(b))] for a, b in zip(self.shift_norms, self.moduli)]}


def _shifted_difference_l1(vals: np.ndarray, shift_cells: np.ndarray, pad: int, dv: float) -> float:
    padded = np.pad(vals, pad)
    moved = ndimage.shift(padded, shift_cells, order=1, mode="constant", cval=0.0)
    return float(np.sum(np.abs(moved - padded)) * dv)


def translation_modulus(f: ScalarField, shifts: Sequence[Sequence[float]], *, alpha: float = 0.9,
                        delta_tilde: float | None = None) -> ModulusReport:
    """L^1 modulus of the zero-extended even extension of ``f`` over the doubled box.

    Off-grid shifts use trilinear interpolation.  Every shift must satisfy
    ``h/4 <= |y| <= 16 h`` (``h`` the smallest spacing) and ``|y| < delta_tilde``
    (default: a quarter of the half width).
    """
    dom = f.domain
    vals = extend_even(f).values if f.region == "box" else f.values
    h = np.asarray(dom.spacing)
    hmin = float(h.min())
    delta_tilde = dom.half_width / 4 if delta_tilde is None else delta_tilde
    ys = np.atleast_2d(np.asarray(shifts, dtype=float))
    norms = np.linalg.norm(ys, axis=1)
    if np.any(norms < hmin / 4 * (1 - 1e-12)) or np.any(norms > 16 * hmin * (1 + 1e-12)):
        raise ValueError("shift magnitudes must lie in [h/4, 16 h]")
    if np.any(norms >= delta_tilde):
        raise ValueError(f"shift magnitudes must stay below delta_tilde = {delta_tilde:.4g}")
    pad = int(np.ceil(np.max(np.abs(ys) / h))) + 2
    moduli = np.array([_shifted_difference_l1(np.real(vals), y / h, pad, dom.cell_volume) for y in ys])
    good = moduli > 0
    if np.count_nonzero(good) >= 2 and np.ptp(np.log(norms[good])) > 0:
        exponent = float(stats.linregress(np.log(norms[good]), np.log(moduli[good])).slope)
    else:
        exponent = math.inf
    C0 = float(np.max(moduli / norms**alpha)) if len(norms) else 0.0
    return ModulusReport(norms, moduli, exponent, C0, alpha, delta_tilde)


def shift_path(direction: Sequence[float], spacing: float, count: int = 8,
               lo: float = 0.25, hi: float = 16.0, cap: float | None = None) -> np.ndarray:
    """Geometric ladder of shifts along ``direction`` from ``lo*h`` to ``hi*h``.

    ``cap`` (typically delta_tilde) bounds the top rung at ``0.99 * cap``.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    top = hi * spacing if cap is None else min(hi * spacing, 0.99 * cap)
    return np.outer(np.geomspace(lo * spacing, top, count), d)


@dataclass(frozen=True)
class DecayCheckReport:
    """Mollified Fourier-decay check over an ``(eps, xi)`` grid.

    ``ratios[i, j] = |F f(xi_j)| / (exp(-eps_i^2 |xi_j|^2 / 4 pi) + eps_i^alpha)``;
    ``C_min`` is their maximum, the smallest constant certifying every pair.
    """

    eps: np.ndarray
    xi: np.ndarray
    transform_abs: np.ndarray
    ratios: np.ndarray
    alpha: float

    @property
    def C_min(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    @property
    def degenerate(self) -> bool:
        return bool(not np.any(self.transform_abs))

    def fraction_satisfied(self, C: float) -> float:
        if not self.ratios.size:
            return 1.0
        return float(np.mean(self.ratios <= C * (1 + 1e-12)))

    def rows(self) -> Iterable[tuple[float, float, float]]:
        """``(eps, |xi|, slack)`` with slack = 1 - ratio / C_min."""
        c = self.C_min or 1.0
        xn = np.linalg.norm(self.xi, axis=1)
        for i, e in enumerate(self.eps):
            for j, x in enumerate(xn):
                yield float(e), float(x), float(1 - self.ratios[i, j] / c)


def rl_bound(eps: float, xi_norm: float, alpha: float) -> float:
    return math.exp(-eps**2 * xi_norm**2 / (4 * math.pi)) + eps**alpha


def transform_even(f: ScalarField, xi: np.ndarray) -> np.ndarray:
    """``F(f_even)(xi)`` over the doubled box for each row of ``xi``."""
    dom = f.domain
    x1, x2, x3 = dom.mesh()
    vals = np.real(f.values)
    out = np.empty(len(xi), dtype=complex)
    for j, x in enumerate(np.atleast_2d(xi)):
        ph = np.exp(-1j * (x[0] * x1 + x[1] * x2)) * 2 * np.cos(x[2] * x3)
        out[j] = np.sum(vals * ph) * dom.cell_volume
    return out


def fourier_decay_check(f: ScalarField, eps_grid: Sequence[float], xi_samples: Sequence[Sequence[float]],
                        alpha: float = 0.9) -> DecayCheckReport:
    """Check the mollified Riemann-Lebesgue bound and report the minimal constant."""
    eps = np.asarray(eps_grid, dtype=float)
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    fa = np.abs(transform_even(f, xi))
    xn = np.linalg.norm(xi, axis=1)
    bounds = np.array([[rl_bound(e, x, alpha) for x in xn] for e in eps])
    return DecayCheckReport(eps, xi, fa, fa[None, :] / bounds, alpha)


def write_modulus_csv(rep: ModulusReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shift_norm", "modulus"])
        for a, b in zip(rep.shift_norms, rep.moduli):
            w.writerow([repr(float(a)), repr(float(b))])
    return path


def write_decay_csv(rep: DecayCheckReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "xi_norm", "slack"])
        for row in rep.rows():
            w.writerow([repr(v) for v in row])
    return path


def write_summary(path: str | Path, modulus: ModulusReport | None, decay: DecayCheckReport | None,
                  C_frozen: float | None = None) -> Path:
    path = Path(path)
    out: dict = {}
    if modulus is not None:
        out["modulus"] = modulus.to_dict()
    if decay is not None:
        out["decay"] = {"C_min": repr(decay.C_min), "alpha": repr(decay.alpha), "degenerate": decay.degenerate}
        if C_frozen is not None:
            out["decay"]["C_frozen"] = repr(float(C_frozen))
            out["decay"]["fraction_satisfied"] = repr(decay.fraction_satisfied(C_frozen))
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return path
