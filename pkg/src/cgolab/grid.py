"""Discrete geometry, grid fields and Fourier-weighted norms.

The computational domain is the box ``(-L, L)^2 x (-H, 0)`` sampled at cell
centres with ``n`` points per axis.  Its top face ``x3 = 0`` is the
inaccessible flat part of the boundary; the remaining five faces form the
accessible part.  Potentials are extended evenly across ``x3 = 0`` onto the
doubled box ``(-L, L)^2 x (-H, H)``, which is treated as periodic when Sobolev
norms are evaluated through the DFT.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadExponents, SobolevBoundViolated

# Face order used for every boundary array in the package.  The last face is
# the flat top x3 = 0 (Gamma_0); the first five make up Gamma.
FACES = ("x1-", "x1+", "x2-", "x2+", "x3-", "x3+")
GAMMA0 = 5
GAMMA_FACES = (0, 1, 2, 3, 4)

FIELD_KINDS = ("potential", "solution", "remainder")


@dataclass(frozen=True)
class DomainSpec:
    """Box ``(-L, L)^2 x (-H, 0)`` inside the ball ``B(0, R)``.

    Parameters
    ----------
    half_width : float
        Horizontal half width ``L``.
    depth : float
        Depth ``H``.
    radius : float
        Enclosing radius ``R``; must satisfy ``sqrt(2 L^2 + H^2) <= R``.
    n : int
        Grid points per axis (even, at least 8).
    """

    half_width: float
    depth: float
    radius: float
    n: int

    def __post_init__(self):
        if self.half_width <= 0 or self.depth <= 0:
            raise ValueError("box dimensions must be positive")
        if np.sqrt(2 * self.half_width**2 + self.depth**2) > self.radius * (1 + 1e-12):
            raise ValueError(
                f"box does not fit in B(0, {self.radius}): needs R >= "
                f"{np.sqrt(2 * self.half_width**2 + self.depth**2):.6g}"
            )
        if self.n < 8 or self.n % 2:
            raise ValueError("n must be even and >= 8")

    @property
    def spacing(self) -> tuple[float, float, float]:
        h = 2 * self.half_width / self.n
        return (h, h, self.depth / self.n)

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def doubled_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, 2 * self.n)

    @property
    def periods(self) -> tuple[float, float, float]:
        """Periods of the doubled box used for the DFT lattice."""
        return (2 * self.half_width, 2 * self.half_width, 2 * self.depth)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell-centre coordinates of the box along each axis."""
        h1, _, h3 = self.spacing
        x = -self.half_width + (np.arange(self.n) + 0.5) * h1
        z = -self.depth + (np.arange(self.n) + 0.5) * h3
        return x, x.copy(), z

    def doubled_axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x1, x2, z = self.axes()
        return x1, x2, np.concatenate([z, -z[::-1]])

    def mesh(self, doubled: bool = False) -> tuple[np.ndarray, ...]:
        ax = self.doubled_axes() if doubled else self.axes()
        return np.meshgrid(*ax, indexing="ij")

    def lattice(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Angular frequencies of the doubled-box DFT, in FFT order."""
        h = self.spacing
        shp = self.doubled_shape
        return tuple(2 * np.pi * np.fft.fftfreq(shp[a], d=h[a]) for a in range(3))

    def face_axes(self, face: int) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates of the two in-plane axes of ``face``."""
        x1, x2, x3 = self.axes()
        if face in (0, 1):
            return x2, x3
        if face in (2, 3):
            return x1, x3
        return x1, x2

    def face_spacing(self, face: int) -> tuple[float, float]:
        h1, h2, h3 = self.spacing
        if face in (0, 1):
            return h2, h3
        if face in (2, 3):
            return h1, h3
        return h1, h2

    def face_lengths(self, face: int) -> tuple[float, float]:
        two_l, depth = 2 * self.half_width, self.depth
        return (two_l, two_l) if face in (4, 5) else (two_l, depth)

    def face_points(self, face: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical coordinates (x1, x2, x3) of the face-cell centres."""
        a, b = np.meshgrid(*self.face_axes(face), indexing="ij")
        L, H = self.half_width, self.depth
        const = np.full_like(a, [-L, L, -L, L, -H, 0.0][face])
        if face in (0, 1):
            return const, a, b
        if face in (2, 3):
            return a, const, b
        return a, b, const

    def to_dict(self) -> dict:
        return {"L": self.half_width, "H": self.depth, "R": self.radius, "n": self.n}


@dataclass(frozen=True)
class ScalarField:
    """Real or complex samples on the box (``region='box'``) or the doubled box."""

    domain: DomainSpec
    values: np.ndarray
    kind: str = "solution"
    region: str = "box"

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        expected = self.domain.shape if self.region == "box" else self.domain.doubled_shape
        if self.region not in ("box", "doubled"):
            raise ValueError(f"unknown region {self.region!r}")
        if self.values.shape != expected:
            raise ValueError(f"values have shape {self.values.shape}, expected {expected}")
        if self.kind == "potential" and np.iscomplexobj(self.values):
            if np.any(self.values.imag != 0):
                raise ValueError("potential fields must be real")
            object.__setattr__(self, "values", self.values.real.copy())

    def restrict(self) -> "ScalarField":
        """Restriction of a doubled-box field to the physical box x3 < 0."""
        if self.region == "box":
            return self
        n = self.domain.n
        return ScalarField(self.domain, self.values[:, :, :n].copy(), self.kind, "box")

    def flat(self) -> np.ndarray:
        """Row-major (x1, x2, x3) sample vector."""
        return self.values.ravel(order="C")


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float
    center: tuple[float, float, float]
    width: float

    def __call__(self, x1, x2, x3):
        c = self.center
        r2 = (x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2
        return self.amplitude * np.exp(-r2 / (2 * self.width**2))

    def fourier(self, xi: np.ndarray) -> np.ndarray:
        """Transform over all of R^3, convention int f(x) exp(-i xi.x) dx."""
        xi = np.atleast_2d(xi)
        w2 = self.width**2
        phase = np.exp(-1j * xi @ np.asarray(self.center, dtype=float))
        return self.amplitude * (2 * np.pi * w2) ** 1.5 * np.exp(-0.5 * w2 * np.sum(xi**2, axis=-1)) * phase


@dataclass(frozen=True)
class CosineMode:
    amplitude: float
    wavevector: tuple[float, float, float]
    phase: float = 0.0

    def __call__(self, x1, x2, x3):
        k = self.wavevector
        return self.amplitude * np.cos(k[0] * x1 + k[1] * x2 + k[2] * x3 + self.phase)


@dataclass(frozen=True)
class GaussianLayer:
    """Horizontally uniform layer ``a exp(-(x3 - c)^2 / (2 w^2))``."""

    amplitude: float
    center: float
    width: float

    def __call__(self, x1, x2, x3):
        return self.amplitude * np.exp(-((x3 - self.center) ** 2) / (2 * self.width**2)) + 0 * (x1 + x2)


def term_from_dict(d: dict):
    kind = d.get("type")
    if kind == "gaussian":
        return GaussianBump(float(d["amplitude"]), tuple(float(c) for c in d["center"]), float(d["width"]))
    if kind == "cosine":
        return CosineMode(float(d["amplitude"]), tuple(float(c) for c in d["wavevector"]), float(d.get("phase", 0.0)))
    if kind == "layer":
        return GaussianLayer(float(d["amplitude"]), float(d["center"]), float(d["width"]))
    raise ValueError(f"unknown potential term type {kind!r}")


def term_to_dict(term) -> dict:
    if isinstance(term, GaussianBump):
        return {"type": "gaussian", "amplitude": term.amplitude, "center": list(term.center), "width": term.width}
    if isinstance(term, GaussianLayer):
        return {"type": "layer", "amplitude": term.amplitude, "center": term.center, "width": term.width}
    return {"type": "cosine", "amplitude": term.amplitude, "wavevector": list(term.wavevector), "phase": term.phase}


@dataclass(frozen=True)
class PotentialDescriptor:
    """Closed-form potential: a finite sum of Gaussian bumps, layers and cosine modes.

    ``holder_exponent`` defaults to ``min(0.9, s - 3/2)``.
    """

    terms: tuple = ()
    sobolev_order: float = 2.5
    sobolev_bound: float = 1e3
    holder_exponent: float | None = None

    def __post_init__(self):
        s = self.sobolev_order
        if s <= 1.5:
            raise ValueError("sobolev_order must exceed 3/2")
        if self.holder_exponent is None:
            object.__setattr__(self, "holder_exponent", min(0.9, s - 1.5))
        a = self.holder_exponent
        if not (0 < a < 1) or a > s - 1.5 + 1e-15:
            raise ValueError(f"holder exponent {a} must lie in (0, 1) and be <= s - 3/2")
        for t in self.terms:
            vals = np.concatenate([np.ravel(np.asarray(x, dtype=float)) for x in vars(t).values()])
            if not np.all(np.isfinite(vals)):
                raise ValueError("descriptor coefficients must be finite")

    def __call__(self, x1, x2, x3):
        out = np.zeros(np.broadcast(x1, x2, x3).shape)
        for t in self.terms:
            out = out + t(x1, x2, x3)
        return out

    def scaled(self, factor: float) -> "PotentialDescriptor":
        terms = [replace(t, amplitude=t.amplitude * factor) for t in self.terms]
        return PotentialDescriptor(tuple(terms), self.sobolev_order, self.sobolev_bound, self.holder_exponent)

    def to_dict(self) -> dict:
        return {
            "terms": [term_to_dict(t) for t in self.terms],
            "s": self.sobolev_order,
            "N": self.sobolev_bound,
            "alpha": self.holder_exponent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialDescriptor":
        return cls(
            tuple(term_from_dict(t) for t in d.get("terms", [])),
            float(d.get("s", 2.5)),
            float(d.get("N", 1e3)),
            d.get("alpha"),
        )


def periodic_sobolev_norm(values: np.ndarray, spacing: Sequence[float], t: float,
                          shift: Sequence[float] = (0.0, 0.0, 0.0)) -> float:
    """Discrete ``H^t`` norm of a periodic (or quasi-periodic) grid function.

    ``values`` is ``exp(i shift.x)`` times a periodic function on the grid; the
    norm is ``(dV/N sum_m (1 + |m + shift|^2)^t |DFT(v)_m|^2)^(1/2)`` which at
    ``t = 0`` is the plain grid L^2 norm.
    """
    shape = values.shape
    shift = np.asarray(shift, dtype=float)
    if np.any(shift):
        grids = np.meshgrid(*[np.arange(s) * h for s, h in zip(shape, spacing)], indexing="ij")
        values = values * np.exp(-1j * sum(shift[a] * grids[a] for a in range(3)))
    spec = np.fft.fftn(values)
    freqs = [2 * np.pi * np.fft.fftfreq(s, d=h) + shift[a] for a, (s, h) in enumerate(zip(shape, spacing))]
    k2 = freqs[0][:, None, None] ** 2 + freqs[1][None, :, None] ** 2 + freqs[2][None, None, :] ** 2
    dv = float(np.prod(spacing))
    total = np.sum((1.0 + k2) ** t * np.abs(spec) ** 2)
    return float(np.sqrt(dv / values.size * total))


def sample_potential(desc: PotentialDescriptor, spec: DomainSpec) -> ScalarField:
    """Sample ``desc`` at cell centres and enforce the class bound ``N``.

    Raises
    ------
    SobolevBoundViolated
        If the discrete ``H^s`` norm of the samples exceeds ``desc.sobolev_bound``.
    """
    x1, x2, x3 = spec.mesh()
    field_ = ScalarField(spec, np.asarray(desc(x1, x2, x3), dtype=float), "potential")
    norm = sobolev_norm(field_, desc.sobolev_order)
    if norm > desc.sobolev_bound:
        raise SobolevBoundViolated(
            f"discrete H^{desc.sobolev_order} norm {norm:.6g} exceeds N = {desc.sobolev_bound:.6g}"
        )
    return field_


def potential_hs_norm(desc: PotentialDescriptor, spec: DomainSpec) -> float:
    x1, x2, x3 = spec.mesh()
    return sobolev_norm(ScalarField(spec, np.asarray(desc(x1, x2, x3), dtype=float), "potential"),
                        desc.sobolev_order)


def extend_even(q: ScalarField) -> ScalarField:
    """Even extension across ``x3 = 0`` onto the doubled box."""
    if q.region == "doubled":
        return q
    vals = np.concatenate([q.values, q.values[:, :, ::-1]], axis=2)
    return ScalarField(q.domain, vals, q.kind, "doubled")


def sobolev_norm(f: ScalarField, t: float) -> float:
    """Discrete ``H^t(Omega)`` norm through the DFT of the even extension.

    Box fields are extended evenly and the doubled-box sum is halved, so that
    ``t = 0`` reproduces the grid L^2 norm over the box.  Doubled-box fields
    are measured over the doubled box as given.
    """
    spec = f.domain
    if f.region == "box":
        vals = extend_even(f).values
        return periodic_sobolev_norm(vals, spec.spacing, t) / np.sqrt(2.0)
    return periodic_sobolev_norm(f.values, spec.spacing, t)


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.domain.cell_volume))


@dataclass(frozen=True)
class InterpolationReport:
    t0: float
    t: float
    t1: float
    p: float
    norm_t: float
    product: float
    holds: bool


def interpolation_check(f: ScalarField, t0: float, t: float, t1: float, p: float) -> InterpolationReport:
    """Compare ``||f||_{H^t}`` with ``||f||_{H^t0}^(1-p) ||f||_{H^t1}^p``."""
    if not (t0 < t1 and 0 < p < 1):
        raise BadExponents("need t0 < t1 and p in (0, 1)")
    if abs(t - ((1 - p) * t0 + p * t1)) > 1e-12:
        raise BadExponents(f"t = {t} is not (1-p) t0 + p t1 = {(1 - p) * t0 + p * t1}")
    nt = sobolev_norm(f, t)
    prod = sobolev_norm(f, t0) ** (1 - p) * sobolev_norm(f, t1) ** p
    return InterpolationReport(t0, t, t1, p, nt, prod, bool(nt <= prod * (1 + 1e-10)))


# -- field dump format -----------------------------------------------------

def save_field(f: ScalarField, stem: str | Path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``stem.json`` (header) and ``stem.bin`` (little-endian payload)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    cplx = np.iscomplexobj(f.values)
    header = {
        "n": f.domain.n,
        "L": f.domain.half_width,
        "H": f.domain.depth,
        "R": f.domain.radius,
        "kind": f.kind,
        "region": f.region,
        "shape": list(f.values.shape),
        "dtype": "c128" if cplx else "f64",
        "order": "row-major x1,x2,x3",
    }
    if extra:
        header.update(extra)
    json_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    dt = "<c16" if cplx else "<f8"
    bin_path.write_bytes(np.ascontiguousarray(f.values, dtype=dt).tobytes(order="C"))
    return json_path, bin_path


def load_field(stem: str | Path) -> ScalarField:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    dt = "<c16" if header["dtype"] == "c128" else "<f8"
    vals = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=dt).reshape(header["shape"]).copy()
    spec = DomainSpec(header["L"], header["H"], header["R"], header["n"])
    return ScalarField(spec, vals, header["kind"], header.get("region", "box"))


def export_slice_csv(f: ScalarField, path: str | Path, axis: int, index: tuple[int, int]) -> Path:
    """CSV of a 1D line through the field along ``axis``; ``index`` fixes the other two."""
    ax = (f.domain.axes() if f.region == "box" else f.domain.doubled_axes())[axis]
    sl = [index[0], index[1]]
    sl.insert(axis, slice(None))
    line = f.values[tuple(sl)]
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coord", "real", "imag"])
        for x, v in zip(ax, line):
            w.writerow([repr(float(x)), repr(float(np.real(v))), repr(float(np.imag(v)))])
    return path
