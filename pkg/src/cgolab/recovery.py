"""Fourier-mode recovery of ``q0 = q2 - q1`` from reflected CGO pairs.

Expanding ``u1 u2`` for a reflected pair gives four exponentials.  With
``xi* = (xi', -xi3)`` and ``eta = -Re(zeta1 + zeta2*) = (xi', 2 tau |xi'|)``,

    int_Omega q0 u1 u2 = P(xi) + coupling - reflected

where ``P(xi) = int_Omega q0 (e^{-i xi.x} + e^{-i xi*.x})`` is the transform
of the even extension of ``q0`` over the doubled box (so no extra factor of 2
is needed), ``reflected = F(q0_even)(eta)``, and the coupling collects every
term that carries a remainder ``w``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.fft

from .cgo import CGOSolution, ReflectedPair, assemble_pair
from .errors import InadmissibleFrame, NonHermitian, SpanDeficient
from .forward import CauchyDataSet, face_coefficients, pairing_from_data
from .frames import ParamSchedule, ZetaFrame, admissible
from .grid import GAMMA0, DomainSpec, ScalarField, save_field


@dataclass(frozen=True)
class FrozenConstants:
    """Calibrated stand-ins for the unnamed constants of the stability estimate.

    ``C`` multiplies the final bound; ``C_star`` sets ``M = C_star N``;
    ``C_cal`` is the CGO remainder constant; ``C_int`` the interpolation and
    embedding constant; ``C_tail`` the high-frequency tail constant (``None``
    means use the squared L^2 bound of ``q0``); ``C_coupling``,
    ``C_reflected`` and ``C_data`` scale the per-mode budget bounds; ``C_rl``
    is the Riemann-Lebesgue constant; ``trivial`` is the a-priori L^inf bound
    used when the schedule is infeasible.
    """

    C: float = 1.0
    C_star: float = 0.0
    C_cal: float = 1.0
    C_int: float = 1.0
    C_tail: float | None = None
    C_coupling: float = 1.0
    C_reflected: float = 1.0
    C_data: float = 1.0
    C_rl: float = 1.0
    trivial: float = math.inf

    def to_dict(self) -> dict:
        return {k: (None if v is None else repr(float(v))) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FrozenConstants":
        return cls(**{k: (None if v is None else float(v)) for k, v in d.items()})


@dataclass(frozen=True)
class ModeEstimate:
    """Recovered ``F q0(xi)`` plus its error budget.

    ``terms`` holds the complex decomposition terms when they are known
    (oracle route); ``budget`` holds magnitudes and their theoretical bounds.
    """

    xi: np.ndarray
    fq0_hat: complex
    lhs: complex
    budget: dict
    admissible: bool
    route: str
    terms: dict = field(default_factory=dict)
    frame: ZetaFrame | None = field(default=None, repr=False, compare=False)

    def to_row(self) -> dict:
        row = {"xi1": self.xi[0], "xi2": self.xi[1], "xi3": self.xi[2],
               "re": self.fq0_hat.real, "im": self.fq0_hat.imag, "admissible": int(self.admissible),
               "route": self.route}
        row.update(self.budget)
        return row


def _quad(domain: DomainSpec, a: np.ndarray) -> complex:
    return complex(np.sum(a)) * domain.cell_volume


def _exp(domain: DomainSpec, v) -> np.ndarray:
    x1, x2, x3 = domain.mesh()
    return np.exp(1j * (v[0] * x1 + v[1] * x2 + v[2] * x3))


def green_identity_lhs(q0: ScalarField, pair: ReflectedPair) -> complex:
    """Midpoint quadrature of ``int_Omega q0 u1 u2``."""
    return _quad(q0.domain, q0.values * pair.u1.values * pair.u2.values)


def direct_transform(q0: ScalarField, xi) -> complex:
    """``F(q0_even)(xi)`` over the doubled box by direct quadrature."""
    xi = np.asarray(xi, dtype=float)
    xs = np.array([xi[0], xi[1], -xi[2]])
    dom = q0.domain
    return _quad(dom, q0.values * (_exp(dom, -xi) + _exp(dom, -xs)))


def decomposition_terms(q0: ScalarField, frame: ZetaFrame,
                        remainders: Sequence[CGOSolution]) -> dict[str, complex]:
    """Principal, coupling and reflected terms by direct quadrature."""
    dom = q0.domain
    w1, w1s, w2, w2s = (r.on_box() for r in remainders)
    z1, z2, z1s, z2s = frame.zeta1, frame.zeta2, frame.zeta1s, frame.zeta2s
    e_main, e_star = _exp(dom, z1 + z2), _exp(dom, z1s + z2s)
    e_pm, e_mp = _exp(dom, z1 + z2s), _exp(dom, z1s + z2)
    q = q0.values
    principal = _quad(dom, q * (e_main + e_star))
    reflected = _quad(dom, q * (e_pm + e_mp))
    coupling = _quad(dom, q * (e_main * (w1 + w2 + w1 * w2) + e_star * (w1s + w2s + w1s * w2s)
                               - e_pm * (w1 + w2s + w1 * w2s) - e_mp * (w1s + w2 + w1s * w2)))
    return {"principal": principal, "coupling": coupling, "reflected": reflected}


def _bounds(frame: ZetaFrame, sched: ParamSchedule | None, const: FrozenConstants) -> dict[str, float]:
    out = {"coupling_bound": const.C_coupling / max(frame.im_norm, 1e-300)}
    if sched is not None:
        eps = sched.epsilon
        xi_p2 = float(frame.xi[0] ** 2 + frame.xi[1] ** 2)
        tau2 = frame.tau**2 if math.isfinite(frame.tau) else math.inf
        arg = eps**2 * (xi_p2 + 4 * tau2 * xi_p2) / (4 * math.pi) if xi_p2 > 0 else 0.0
        out["reflected_bound"] = const.C_reflected * (math.exp(-arg) + eps**sched.alpha)
        log_db = (math.log(const.C_data) + 4 * math.log(sched.k)
                  + 2 * sched.R * math.sqrt(sched.k**2 + (sched.E / (5 * sched.R)) ** 2)
                  + math.log(sched.dist))
        out["data_bound"] = math.exp(min(log_db, 700.0))
    return out


def decomposition(q0: ScalarField, frame: ZetaFrame, remainders: Sequence[CGOSolution], *,
                  M: float = 0.0, schedule: ParamSchedule | None = None,
                  constants: FrozenConstants = FrozenConstants(),
                  pair: ReflectedPair | None = None) -> ModeEstimate:
    """Oracle-side decomposition of the volume pairing at one frame.

    ``fq0_hat = lhs - coupling + reflected``, which equals the principal term
    (the transform of ``q0_even``) up to rounding.

    Raises
    ------
    InadmissibleFrame
        If ``|Im zeta| <= M``.
    """
    if not admissible(frame, M):
        raise InadmissibleFrame(f"|Im zeta| = {frame.im_norm:.6g} <= M = {M:.6g}")
    pair = pair or assemble_pair(frame, *remainders)
    lhs = green_identity_lhs(q0, pair)
    terms = decomposition_terms(q0, frame, remainders)
    terms["lhs"] = lhs
    budget = {"principal": abs(terms["principal"]), "coupling": abs(terms["coupling"]),
              "reflected": abs(terms["reflected"]),
              "closure": abs(terms["principal"] + terms["coupling"] - terms["reflected"] - lhs)
              / max(abs(lhs), abs(terms["principal"]), 1e-300)}
    budget.update(_bounds(frame, schedule, constants))
    return ModeEstimate(np.asarray(frame.xi, float), lhs - terms["coupling"] + terms["reflected"], lhs,
                        budget, True, "decomposition", terms, frame)


def _project(data: CauchyDataSet, f: np.ndarray, span_tol: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares fit of ``f`` by the dictionary inputs in H^1/2 coordinates."""
    dom = data.domain
    A = data.dirichlet_matrix()
    b = face_coefficients(dom, f, 0.5)
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.linalg.norm(A @ c - b) / max(np.linalg.norm(b), 1e-300))
    if resid > span_tol:
        raise SpanDeficient(f"trace projection loses {resid:.3g} of its norm (tolerance {span_tol:.3g})")
    f_hat = sum(ci * p.f for ci, p in zip(c, data.pairs))
    g_hat = sum(ci * p.g for ci, p in zip(c, data.pairs))
    return f_hat, g_hat, resid


def mode_from_data(dataA: CauchyDataSet, dataB: CauchyDataSet, frame: ZetaFrame, pair: ReflectedPair, *,
                   M: float = 0.0, schedule: ParamSchedule | None = None,
                   constants: FrozenConstants = FrozenConstants(), span_tol: float = 0.05,
                   correction: Mapping[str, complex] | None = None) -> ModeEstimate:
    """Data-side estimate of ``F q0(xi)`` from two measured Cauchy data sets.

    The volume pairing is replaced by the boundary pairing of the projected
    traces.  ``correction`` (optional) supplies known ``coupling`` and
    ``reflected`` values to subtract; without it the estimate is the raw
    boundary pairing.

    Raises
    ------
    SpanDeficient
        If a CGO trace is not represented by the dictionary to ``span_tol``.
    InadmissibleFrame
        If ``|Im zeta| <= M``.
    """
    if not admissible(frame, M):
        raise InadmissibleFrame(f"|Im zeta| = {frame.im_norm:.6g} <= M = {M:.6g}")
    f1 = pair.f1.copy()
    f2 = pair.f2.copy()
    f1[GAMMA0] = f2[GAMMA0] = 0.0
    f1h, g1h, r1 = _project(dataA, f1, span_tol)
    f2h, g2h, r2 = _project(dataB, f2, span_tol)
    lhs = pairing_from_data(dataA.domain, f1h, g1h, f2h, g2h)
    est = lhs
    terms = {"lhs": lhs}
    if correction:
        est = lhs - correction.get("coupling", 0.0) + correction.get("reflected", 0.0)
        terms.update(correction)
    budget = {"lhs": abs(lhs), "span_residual": max(r1, r2)}
    budget.update(_bounds(frame, schedule, constants))
    return ModeEstimate(np.asarray(frame.xi, float), est, lhs, budget, True, "data", terms, frame)


# -- lattice bookkeeping ------------------------------------------------------

def lattice_step(domain: DomainSpec) -> np.ndarray:
    return 2 * np.pi / np.asarray(domain.periods)


def in_box(xi, rho: float) -> bool:
    """Membership in ``Z_rho = {|xi'| < rho, |xi3| < rho}``."""
    return bool(math.hypot(xi[0], xi[1]) < rho and abs(xi[2]) < rho)


def recovery_lattice(domain: DomainSpec, rho: float) -> list[np.ndarray]:
    """Fundamental lattice points of ``Z_rho`` up to ``xi -> -xi`` and ``xi3 -> -xi3``.

    The remaining points follow from Hermitian symmetry (real ``q0``) and the
    evenness of the extension in ``x3``.  Points at or beyond the Nyquist
    index are dropped.
    """
    step = lattice_step(domain)
    shp = domain.doubled_shape
    m = [min(int(math.ceil(rho / s)), shp[a] // 2 - 1) for a, s in enumerate(step)]
    out = []
    for j3 in range(0, m[2] + 1):
        for j1 in range(-m[0], m[0] + 1):
            for j2 in range(-m[1], m[1] + 1):
                if (j1, j2) < (0, 0) and j3 >= 0:
                    continue
                xi = np.array([j1, j2, j3]) * step
                if in_box(xi, rho):
                    out.append(xi)
    return out


def _index(domain: DomainSpec, xi) -> tuple[int, int, int]:
    step = lattice_step(domain)
    shp = domain.doubled_shape
    return tuple(int(round(xi[a] / step[a])) % shp[a] for a in range(3))


def _orbit(xi) -> list[tuple[np.ndarray, bool]]:
    """Symmetry images of ``xi`` and whether each carries a conjugate."""
    x = np.asarray(xi, float)
    s = np.array([x[0], x[1], -x[2]])
    return [(x, False), (s, False), (-x, True), (-s, True)]


def mode_array(modes: Iterable[ModeEstimate], domain: DomainSpec, tol: float = 1e-6) -> np.ndarray:
    """Doubled-box spectrum from a set of modes, completed by symmetry.

    Raises
    ------
    NonHermitian
        If two supplied modes that should be conjugate (or mirror) images of
        each other disagree by more than ``tol`` relative to the largest mode.
        Self-images (for instance the imaginary part of the zero mode) are
        averaged away rather than checked.
    """
    modes = list(modes)
    G = np.zeros(domain.doubled_shape, dtype=complex)
    count = np.zeros(domain.doubled_shape, dtype=int)
    direct = {}
    for i, m in enumerate(modes):
        direct[_index(domain, m.xi)] = (i, m.fq0_hat)
    scale = max((abs(v) for _, v in direct.values()), default=0.0)
    for i, m in enumerate(modes):
        for img, conj in _orbit(m.xi):
            idx = _index(domain, img)
            val = np.conj(m.fq0_hat) if conj else m.fq0_hat
            if idx in direct and direct[idx][0] != i and abs(direct[idx][1] - val) > tol * max(scale, 1e-300):
                raise NonHermitian(f"mode at {img} disagrees with its symmetry image by "
                                   f"{abs(direct[idx][1] - val):.3g}")
            G[idx] += val
            count[idx] += 1
    nz = count > 0
    G[nz] /= count[nz]
    return G


def invert_lowpass(modes: Iterable[ModeEstimate], domain: DomainSpec, tol: float = 1e-6) -> ScalarField:
    """Real band-limited field whose doubled-box transform is the given modes."""
    G = mode_array(modes, domain, tol)
    x0 = np.array([ax[0] for ax in domain.doubled_axes()])
    freqs = domain.lattice()
    phase = np.exp(1j * (freqs[0][:, None, None] * x0[0] + freqs[1][None, :, None] * x0[1]
                         + freqs[2][None, None, :] * x0[2]))
    vol = float(np.prod(domain.periods))
    vals = scipy.fft.ifftn(G * phase) * (G.size / vol)
    dbl = ScalarField(domain, np.ascontiguousarray(vals.real), "potential", "doubled")
    return dbl.restrict()


def exact_modes(q0: ScalarField, xis: Iterable) -> list[ModeEstimate]:
    """Modes computed by direct quadrature (the oracle)."""
    return [ModeEstimate(np.asarray(x, float), direct_transform(q0, x), 0j, {}, True, "oracle") for x in xis]


class HMinus1(NamedTuple):
    value: float
    low_sq: float
    tail_sq: float


def hminus1_estimate(modes: Iterable[ModeEstimate], rho: float, q_norm_bound: float,
                     domain: DomainSpec) -> HMinus1:
    """``||q0||_{H^-1(Omega)}`` from the modes in ``Z_rho`` plus a ``1/rho^2`` tail.

    The low part is the Parseval sum over the symmetry-completed lattice
    (halved, since the doubled box holds two copies of ``Omega``); the tail is
    ``q_norm_bound^2 / rho^2``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    G = mode_array(modes, domain)
    f = domain.lattice()
    k2 = f[0][:, None, None] ** 2 + f[1][None, :, None] ** 2 + f[2][None, None, :] ** 2
    inside = (np.sqrt(f[0][:, None, None] ** 2 + f[1][None, :, None] ** 2) < rho) & (np.abs(f[2])[None, None, :] < rho)
    vol = float(np.prod(domain.periods))
    low = float(np.sum(np.abs(G[inside]) ** 2 / (1 + k2[inside]))) / (2 * vol)
    tail = q_norm_bound**2 / rho**2
    return HMinus1(math.sqrt(low + tail), low, tail)


def interpolation_exponents(s: float) -> tuple[float, float]:
    """``(eta, p)`` with ``s = 3/2 + 2 eta`` and ``3/2 + eta = (1 - p)(-1) + p s``."""
    if s <= 1.5:
        raise ValueError("need s > 3/2")
    eta = (s - 1.5) / 2
    return eta, (2.5 + eta) / (1 + s)


def linf_estimate(hminus1: float, s: float, N: float, C_int: float = 1.0) -> float:
    """``C_int (2N)^p hminus1^(eta/(1+s))`` from interpolation and the embedding into L^inf."""
    eta, p = interpolation_exponents(s)
    if hminus1 <= 0:
        return 0.0
    return C_int * (2 * N) ** p * hminus1 ** (eta / (1 + s))


def rhs_bound(k: float, dist: float, sched: ParamSchedule, *, s: float,
              constants: FrozenConstants = FrozenConstants()) -> float:
    """``C (e^{6Rk} dist + kappa^{-alpha~})^{eta/(2(1+s))}``, evaluated in log space.

    Returns ``constants.trivial`` when the schedule is infeasible.
    """
    if not sched.feasible:
        return constants.trivial
    eta, _ = interpolation_exponents(s)
    a = 6 * sched.R * k + math.log(dist)
    b = -sched.alpha_tilde * math.log(sched.kappa)
    log_sum = max(a, b) + math.log1p(math.exp(-abs(a - b)))
    return constants.C * math.exp(eta / (2 * (1 + s)) * log_sum)


@dataclass(frozen=True)
class RecoveryReport:
    modes: tuple[ModeEstimate, ...]
    rho: float
    epsilon: float
    E: float
    k: float
    R: float
    hminus1_est: float
    linf_est: float
    rhs_bound_value: float
    q0_reconstruction: ScalarField

    def scalars(self) -> dict:
        return {name: repr(float(getattr(self, name))) for name in
                ("rho", "epsilon", "E", "k", "R", "hminus1_est", "linf_est", "rhs_bound_value")}

    def save(self, directory: str | Path, stem: str = "recovery") -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_field(self.q0_reconstruction, d / f"{stem}_q0")
        write_budgets(self.modes, d / f"{stem}_budgets.csv")
        out = d / f"{stem}.json"
        out.write_text(json.dumps({"scalars": self.scalars(), "n_modes": len(self.modes)},
                                  indent=2, sort_keys=True) + "\n")
        return out


BUDGET_COLUMNS = ("xi1", "xi2", "xi3", "re", "im", "admissible", "route", "lhs", "principal", "coupling",
                  "reflected", "closure", "lhs_exact", "mode_error", "span_residual", "coupling_bound",
                  "reflected_bound", "data_bound")


def write_budgets(modes: Iterable[ModeEstimate], path: str | Path, extra: Mapping | None = None) -> Path:
    path = Path(path)
    cols = tuple(extra or ()) + BUDGET_COLUMNS
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for m in modes:
            row = {c: "" for c in cols}
            row.update(extra or {})
            row.update({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in m.to_row().items()})
            w.writerow(row)
    return path


# -- driver --------------------------------------------------------------------

CORRECTIONS = ("blind", "oracle", "none")


def recovery_frequencies(domain: DomainSpec, sched: ParamSchedule) -> list[np.ndarray]:
    """Fundamental lattice points of ``Z_rho`` that admit a real ``tau``, sorted by ``|xi|``."""
    lim = sched.xi_max * (1 + 1e-12)
    xs = [x for x in recovery_lattice(domain, sched.rho) if np.linalg.norm(x) <= lim]
    return sorted(xs, key=lambda x: (round(float(np.linalg.norm(x)), 10), tuple(np.round(x, 10))))


def _lookup(table: Mapping[tuple, complex], domain: DomainSpec, eta, tol: float) -> complex | None:
    step = lattice_step(domain)
    j = np.asarray(eta, float) / step
    if np.max(np.abs(j - np.round(j))) > tol:
        return None
    for img, conj in _orbit(np.round(j) * step):
        v = table.get(_index(domain, img))
        if v is not None:
            return np.conj(v) if conj else v
    return None


def reflected_correction(modes: Sequence[ModeEstimate], domain: DomainSpec, tol: float = 1e-6) -> list[ModeEstimate]:
    """Add back reflected terms whose frequency is an already recovered mode.

    Modes are visited in the given order (``recovery_frequencies`` sorts by
    ``|xi|``, so the zero mode comes first).  When the reflected frequency of a
    frame is a lattice point, distinct from ``xi`` itself, whose estimate is
    already known, that estimate is added; otherwise the reflected term stays
    in the error budget.
    """
    known: dict[tuple, complex] = {}
    out = []
    for m in modes:
        est, route = m.fq0_hat, m.route
        if m.frame is not None:
            eta = m.frame.reflected_plus
            self_idx = {_index(domain, img) for img, _ in _orbit(m.xi)}
            j = np.round(np.asarray(eta, float) / lattice_step(domain))
            hit = None if _index(domain, j * lattice_step(domain)) in self_idx else _lookup(known, domain, eta, tol)
            if hit is not None:
                est = est + hit
                route = route + "+reflected"
        known[_index(domain, m.xi)] = est
        out.append(ModeEstimate(m.xi, est, m.lhs, dict(m.budget), m.admissible, route, dict(m.terms), m.frame))
    return out


def build_report(modes: Sequence[ModeEstimate], domain: DomainSpec, sched: ParamSchedule, *,
                 s: float, N: float, constants: FrozenConstants = FrozenConstants(),
                 q_norm_bound: float | None = None) -> RecoveryReport:
    """Low-pass reconstruction plus the H^-1, L^inf and right-hand-side estimates.

    The H^-1 tail uses ``sqrt(C_tail)`` when calibrated, else ``q_norm_bound``,
    else the a-priori ``2 N``.
    """
    rec = invert_lowpass(modes, domain)
    if constants.C_tail is not None:
        tail = math.sqrt(constants.C_tail)
    else:
        tail = 2 * N if q_norm_bound is None else q_norm_bound
    h = hminus1_estimate(modes, sched.rho, tail, domain)
    linf = linf_estimate(h.value, s, N, constants.C_int)
    rhs = rhs_bound(sched.k, sched.dist, sched, s=s, constants=constants)
    return RecoveryReport(tuple(modes), sched.rho, sched.epsilon, sched.E, sched.k, sched.R,
                          h.value, linf, rhs, rec)
