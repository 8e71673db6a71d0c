"""Complex frequency frames (zeta_1, zeta_2 and their reflections) and the
parameter schedule tying tau, epsilon and rho to the measured distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrequency, ImaginaryRootViolation, ScheduleInfeasible


def cdot(a: np.ndarray, b: np.ndarray) -> complex:
    """Bilinear (unconjugated) dot product."""
    return complex(np.sum(np.asarray(a) * np.asarray(b)))


def rotate_to_tilde(xi) -> tuple[np.ndarray, np.ndarray]:
    """Rotation about the x3 axis taking ``xi`` to ``(|xi'|, 0, xi3)``.

    Returns ``(rotation, xi_tilde)`` with ``xi_tilde = rotation @ xi``.  When
    ``xi' = 0`` the identity is returned.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise DegenerateFrequency("xi = 0 has no tilde frame")
    rho = math.hypot(xi[0], xi[1])
    if rho == 0.0:
        rot = np.eye(3)
    else:
        # rescale first so subnormal components still give a unit vector
        m = max(abs(xi[0]), abs(xi[1]))
        c, s = xi[0] / m, xi[1] / m
        r = math.hypot(c, s)
        c, s = c / r, s / r
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    xt = rot @ xi
    xt[1] = 0.0
    return rot, xt


@dataclass(frozen=True)
class ZetaFrame:
    """One admissible quadruple ``(zeta1, zeta2, zeta1*, zeta2*)``.

    ``re_sq`` is ``|Re zeta_j|^2``, equal to ``|xi|^2 (1/4 + tau^2)`` for
    regular frames.  The ``xi = 0`` frame is the limit ``xi -> 0`` along
    ``x1`` at fixed ``re_sq`` and carries ``tau = inf``.
    """

    xi: np.ndarray
    k: float
    tau: float
    re_sq: float
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta1s: np.ndarray
    zeta2s: np.ndarray
    rotation: np.ndarray

    @property
    def im_norm(self) -> float:
        return math.sqrt(max(self.re_sq - self.k**2, 0.0))

    @property
    def xi_star(self) -> np.ndarray:
        return np.array([self.xi[0], self.xi[1], -self.xi[2]])

    @property
    def reflected_plus(self) -> np.ndarray:
        """Frequency eta with exp(i (zeta1 + zeta2*).x) = exp(-i eta.x)."""
        return -np.real(self.zeta1 + self.zeta2s)

    @property
    def reflected_minus(self) -> np.ndarray:
        return -np.real(self.zeta1s + self.zeta2)

    def vectors(self) -> dict[str, np.ndarray]:
        return {"zeta1": self.zeta1, "zeta2": self.zeta2, "zeta1s": self.zeta1s, "zeta2s": self.zeta2s}

    def check(self) -> dict[str, float]:
        """Residuals of the algebraic certificates (all should be ~0)."""
        k2 = self.k**2
        out = {}
        out["dot_k2"] = max(abs(cdot(z, z) - k2) for z in self.vectors().values()) / max(k2, 1.0)
        scale = max(self.re_sq, 1.0)
        out["re_sq"] = max(abs(np.sum(z.real**2) - self.re_sq) for z in self.vectors().values()) / scale
        out["im_sq"] = max(abs(np.sum(z.imag**2) - (self.re_sq - k2)) for z in self.vectors().values()) / scale
        out["re_im_orth"] = max(abs(np.dot(z.real, z.imag)) for z in self.vectors().values()) / scale
        out["sum_xi"] = float(np.max(np.abs(self.zeta1 + self.zeta2 + self.xi))) / math.sqrt(scale)
        out["cross_real"] = max(
            float(np.max(np.abs(np.imag(a + b))))
            for a, b in ((self.zeta1, self.zeta2s), (self.zeta1s, self.zeta2), (self.zeta1s, self.zeta2s))
        ) / math.sqrt(scale)
        return out

    def to_dict(self) -> dict:
        def cv(z):
            return [[repr(float(c.real)), repr(float(c.imag))] for c in z]

        return {
            "xi": [repr(float(x)) for x in self.xi],
            "k": repr(float(self.k)),
            "tau": repr(float(self.tau)),
            "re_sq": repr(float(self.re_sq)),
            **{name: cv(z) for name, z in self.vectors().items()},
            "rotation": [[repr(float(x)) for x in row] for row in self.rotation],
        }


def _frame_from_tilde(xi, k, tau, re_sq, rot, z1t, z2t) -> ZetaFrame:
    z1st = z1t * np.array([1, 1, -1])
    z2st = z2t * np.array([1, 1, -1])
    back = rot.T
    return ZetaFrame(np.asarray(xi, dtype=float), float(k), float(tau), float(re_sq),
                     back @ z1t, back @ z2t, back @ z1st, back @ z2st, rot)


def build_frame(xi, k: float, tau: float) -> ZetaFrame:
    """Frame for frequency ``xi``, wave number ``k`` and parameter ``tau``.

    Raises
    ------
    ImaginaryRootViolation
        If ``|xi|^2 (1/4 + tau^2) < k^2``.
    """
    rot, xt = rotate_to_tilde(xi)
    xi = np.asarray(xi, dtype=float)
    re_sq = float(np.dot(xi, xi)) * (0.25 + tau**2)
    if re_sq < k**2 * (1 - 1e-12):
        raise ImaginaryRootViolation(f"|xi|^2 (1/4 + tau^2) = {re_sq:.6g} < k^2 = {k**2:.6g}")
    r = math.sqrt(max(re_sq - k**2, 0.0))
    a, c = xt[0], xt[2]
    z1t = np.array([-a / 2 + tau * c, -1j * r, -c / 2 - tau * a], dtype=complex)
    z2t = np.array([-a / 2 - tau * c, 1j * r, -c / 2 + tau * a], dtype=complex)
    return _frame_from_tilde(xi, k, tau, re_sq, rot, z1t, z2t)


def zero_frequency_frame(k: float, re_sq: float) -> ZetaFrame:
    """Limit of the frames as ``xi -> 0`` along ``x1`` with ``re_sq`` fixed."""
    if re_sq < k**2:
        raise ImaginaryRootViolation(f"re_sq = {re_sq:.6g} < k^2 = {k**2:.6g}")
    a, r = math.sqrt(re_sq), math.sqrt(re_sq - k**2)
    z1t = np.array([0.0, -1j * r, -a], dtype=complex)
    return _frame_from_tilde(np.zeros(3), k, math.inf, re_sq, np.eye(3), z1t, -z1t)


def admissible(frame: ZetaFrame, M: float) -> bool:
    """``|xi|^2 (1/4 + tau^2) > M^2 + k^2``, i.e. ``|Im zeta| > M``."""
    return bool(frame.re_sq > M**2 + frame.k**2)


@dataclass(frozen=True)
class ParamSchedule:
    """Parameter choices driven by ``E = |log dist|``.

    ``rho = rho_scale * (k + E/5R)^(beta/3)``; with the default
    ``rho_scale = 1`` this is ``rho^3 = (k + E/5R)^beta``.
    """

    dist: float
    E: float
    R: float
    M: float
    C_star: float
    N: float
    k: float
    alpha: float
    beta: float
    epsilon: float
    rho: float
    feasible: bool
    eps0: float = math.inf
    rho_scale: float = 1.0
    tau_min: float = 0.0

    @property
    def kappa(self) -> float:
        """k + E / (5R)."""
        return self.k + self.E / (5 * self.R)

    @property
    def target_re_sq(self) -> float:
        """Scheduled |xi|^2 (1/4 + tau^2) = 2k^2 + (E/5R)^2."""
        return 2 * self.k**2 + (self.E / (5 * self.R)) ** 2

    @property
    def xi_max(self) -> float:
        """Largest |xi| whose scheduled tau is at least ``tau_min``."""
        return math.sqrt(self.target_re_sq / (0.25 + self.tau_min**2))

    @property
    def delta_exceeded(self) -> bool:
        return not self.feasible

    @property
    def eps_exceeds_eps0(self) -> bool:
        return self.epsilon >= self.eps0

    @property
    def alpha_tilde(self) -> float:
        return min(self.alpha - self.beta, 2 - self.beta, 2 * self.beta / 3)

    def tau_for(self, xi) -> float:
        """Scheduled tau at ``xi``; clipped to 0 when the schedule asks for tau^2 < 0."""
        x2 = float(np.dot(xi, xi))
        if x2 == 0.0:
            return math.inf
        return math.sqrt(max(self.target_re_sq / x2 - 0.25, 0.0))

    def frame(self, xi) -> ZetaFrame:
        xi = np.asarray(xi, dtype=float)
        if not np.any(xi):
            return zero_frequency_frame(self.k, self.target_re_sq)
        return build_frame(xi, self.k, self.tau_for(xi))

    def to_dict(self) -> dict:
        d = {f: repr(float(getattr(self, f))) for f in (
            "dist", "E", "R", "M", "C_star", "N", "k", "alpha", "beta", "epsilon", "rho", "eps0", "rho_scale",
        "tau_min")}
        d["feasible"] = self.feasible
        d["alpha_tilde"] = repr(float(self.alpha_tilde))
        d["kappa"] = repr(float(self.kappa))
        d["xi_max"] = repr(float(self.xi_max))
        return d


def schedule(dist: float, k: float, R: float, C_star: float, N: float, alpha: float,
             beta: float | None = None, *, eps0: float = math.inf, rho_scale: float = 1.0,
             tau_min: float = 0.0, strict: bool = False) -> ParamSchedule:
    """Evaluate ``E, M, epsilon, rho`` from a measured Cauchy distance.

    ``beta`` defaults to ``alpha / 2``.  An infeasible schedule
    (``(E/5R)^2 <= M^2``) is returned flagged, or raised with ``strict=True``.
    ``tau_min`` only sets :attr:`ParamSchedule.xi_max`, the frequency radius
    inside which every scheduled frame keeps ``tau >= tau_min``.
    """
    if not 0 < dist < 1:
        raise ValueError("dist must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    if beta is None:
        beta = alpha / 2
    if not 0 < beta < alpha < 1:
        raise ValueError("need 0 < beta < alpha < 1")
    E = abs(math.log(dist))
    M = C_star * N
    kappa = k + E / (5 * R)
    feasible = (E / (5 * R)) ** 2 > M**2
    sched = ParamSchedule(dist, E, R, M, C_star, N, k, alpha, beta,
                          epsilon=1 / math.sqrt(kappa), rho=rho_scale * kappa ** (beta / 3),
                          feasible=feasible, eps0=eps0, rho_scale=rho_scale, tau_min=tau_min)
    if strict and not feasible:
        raise ScheduleInfeasible(f"(E/5R)^2 = {(E / (5 * R)) ** 2:.6g} <= M^2 = {M**2:.6g}")
    return sched


def discrete_dispersion(z, spacing) -> complex:
    """Symbol of minus the seven-point Laplacian at ``exp(i z.x)``: ``sum 4 sin^2(z_j h_j / 2) / h_j^2``."""
    z = np.asarray(z, dtype=complex)
    h = np.asarray(spacing, dtype=float)
    return complex(np.sum(4 * np.sin(z * h / 2) ** 2 / h**2))


def grid_adapted_frame(frame: ZetaFrame, spacing, tol: float = 1e-14, max_iter: int = 50) -> ZetaFrame:
    """Move a frame onto the dispersion surface of the seven-point Laplacian.

    Writing ``zeta_{1,2} = -xi/2 +- v``, the vector ``v`` is corrected by
    minimum-norm Gauss-Newton steps until both ``zeta_j`` satisfy
    ``discrete_dispersion(zeta_j) = k^2``.  ``zeta1 + zeta2 = -xi`` stays exact
    and ``Im v`` stays horizontal, so the cross sums remain real.  The nominal
    ``tau`` and ``re_sq`` are kept.
    """
    h = np.asarray(spacing, dtype=float)
    half = -np.asarray(frame.xi, dtype=float) / 2
    v = frame.zeta1 - half
    k2 = frame.k**2

    def resid(v):
        return np.array([discrete_dispersion(half + v, h) - k2, discrete_dispersion(half - v, h) - k2])

    for _ in range(max_iter):
        r = resid(v)
        if np.max(np.abs(r)) <= tol * max(k2, 1.0, frame.re_sq):
            break
        dp = 2 * np.sin((half + v) * h) / h
        dm = -2 * np.sin((half - v) * h) / h
        # columns: Re v1, Re v2, Re v3, Im v1, Im v2
        cols = [np.array([dp[j], dm[j]]) for j in range(3)] + [1j * np.array([dp[j], dm[j]]) for j in range(2)]
        J = np.stack(cols, axis=1)
        Jr = np.vstack([J.real, J.imag])
        step, *_ = np.linalg.lstsq(Jr, -np.concatenate([r.real, r.imag]), rcond=None)
        v = v + np.array([step[0] + 1j * step[3], step[1] + 1j * step[4], step[2]])
    else:
        raise ValueError("grid adaptation of the frame did not converge")
    z1, z2 = half + v, half - v
    flip = np.array([1, 1, -1])
    return ZetaFrame(frame.xi, frame.k, frame.tau, frame.re_sq, z1, z2, z1 * flip, z2 * flip, frame.rotation)
