"""Experiment configuration and runners.

A run is described by a TOML file whose tables map one-to-one onto the
frozen dataclasses below; unknown keys are rejected.  Every runner writes its
artifacts into an output directory and returns a small summary dict.  Wall
clock times go to ``timing.json`` only, so all other CSV/JSON outputs are
byte-identical across runs with the same seed and thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import tomli
from scipy import stats

from . import __version__
from .cgo import PeriodicCell, decay_study, frame_remainders, reflected_pair
from .errors import CGOLabError, ConfigError
from .forward import (HelmholtzSolver, alessandrini_pairing, cauchy_distance, face_mode, face_mode_dictionary,
                      measure_cauchy, perturb)
from .frames import build_frame, grid_adapted_frame, schedule, zero_frequency_frame
from .grid import (DomainSpec, PotentialDescriptor, ScalarField, l2_norm, sample_potential, save_field,
                   sobolev_norm)
from .recovery import (FrozenConstants, ModeEstimate, build_report, decomposition, decomposition_terms,
                       interpolation_exponents, invert_lowpass, exact_modes, mode_from_data,
                       recovery_frequencies, reflected_correction, write_budgets, CORRECTIONS)
from .rl import fourier_decay_check, shift_path, translation_modulus

log = logging.getLogger(__name__)


# -- configuration -------------------------------------------------------------

def _gauss(amplitude: float, center: Sequence[float], width: float) -> dict:
    return {"type": "gaussian", "amplitude": amplitude, "center": list(center), "width": width}


def _descriptor(terms: list, N: float = 1000.0) -> dict:
    return {"terms": terms, "s": 2.5, "N": N, "alpha": 0.9}


_BUMP = _gauss(1.0, (0.0, 0.0, -0.5), 0.2)
_LAYER = {"type": "layer", "amplitude": 1.0, "center": 0.0, "width": 0.12}


@dataclass(frozen=True)
class DomainConfig:
    L: float = 0.1
    H: float = 1.0
    R: float = 1.01
    n: int = 32

    def spec(self, n: int | None = None) -> DomainSpec:
        return DomainSpec(self.L, self.H, self.R, int(n or self.n))


@dataclass(frozen=True)
class PotentialsConfig:
    q1: dict = field(default_factory=lambda: _descriptor([_BUMP]))
    q2: dict = field(default_factory=lambda: _descriptor([_BUMP, _LAYER]))


@dataclass(frozen=True)
class ScheduleConfig:
    alpha: float = 0.9
    beta: float = 0.45
    rho_scale: float = 8.0
    tau_min: float = 0.375
    strict: bool = False


@dataclass(frozen=True)
class ForwardConfig:
    dictionary_size: int = 24
    band: int = 8
    stencil: str = "fd7"
    span_tol: float = 0.05
    cond_threshold: float = 1e8
    check_condition: bool = False


@dataclass(frozen=True)
class SweepConfig:
    k: tuple = (1.0, 2.0, 4.0, 8.0)
    noise: tuple = (1e-3,)
    correction: str = "blind"


@dataclass(frozen=True)
class CalibrateConfig:
    """Corpus pairs ``(q1, q1 + a (q2 - q1))`` for each ``a`` in ``amplitudes``."""

    amplitudes: tuple = (0.5, 2.0)
    k: tuple = (1.0, 2.0, 4.0, 8.0)
    noise: float = 1e-3
    seed_offset: int = 1000
    im_ladder: tuple = (0.05, 20.0, 24)
    contraction: float = 0.5
    eps: tuple = (0.2, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class DecayConfig:
    """Cube-like box used for the remainder and coupling decay studies."""

    L: float = 0.5
    H: float = 1.0
    R: float = 1.3
    n: int = 32
    im_min: float = 10.0
    im_max: float = 100.0
    count: int = 6
    xi: tuple = (1.0, 0.5, 0.7)
    potentials: tuple = (
        _descriptor([_gauss(1.0, (0.0, 0.0, -0.5), 0.15)]),
        _descriptor([_gauss(3.0, (0.1, -0.1, -0.4), 0.12)]),
        _descriptor([_gauss(1.0, (-0.15, 0.1, -0.6), 0.1), _gauss(-0.7, (0.15, 0.0, -0.35), 0.12)]),
    )
    coupling_dist: float = 1e-3
    coupling_k: tuple = (10.0, 100.0, 5)
    coupling_pair: tuple = (2, 0)


@dataclass(frozen=True)
class FramesConfig:
    count: int = 1000
    k_max: float = 50.0
    xi_max: float = 100.0


@dataclass(frozen=True)
class ForwardCheckConfig:
    """Cases ``(k, face, j1, j2)``: ``f1`` is that face mode, ``f2`` the same mode on the next face."""

    cases: tuple = ((1.0, 0, 1, 1), (2.0, 2, 2, 1), (3.0, 0, 1, 2), (1.5, 4, 1, 1), (2.5, 1, 2, 3))
    n: int = 32


@dataclass(frozen=True)
class RLConfig:
    shifts: int = 8
    directions: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 1.0, 1.0))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    threads: int = 1
    domain: DomainConfig = DomainConfig()
    potentials: PotentialsConfig = PotentialsConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    forward: ForwardConfig = ForwardConfig()
    sweep: SweepConfig = SweepConfig()
    calibrate: CalibrateConfig = CalibrateConfig()
    decay: DecayConfig = DecayConfig()
    frames: FramesConfig = FramesConfig()
    forward_check: ForwardCheckConfig = ForwardCheckConfig()
    rl: RLConfig = RLConfig()
    constants: dict = field(default_factory=dict)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Replace top-level fields; ``grid_n`` replaces ``domain.n``."""
        n = kw.pop("grid_n", None)
        cfg = dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})
        if n is not None:
            cfg = dataclasses.replace(cfg, domain=dataclasses.replace(cfg.domain, n=int(n)))
        return cfg

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _freeze(x):
    return tuple(_freeze(v) for v in x) if isinstance(x, list) else x


def _build(cls, table: Mapping[str, Any], where: str):
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kw = {}
    for key, val in table.items():
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kw[key] = _build(type(default), val, f"{where}.{key}" if where else key)
        elif isinstance(default, dict):
            if not isinstance(val, Mapping):
                raise ConfigError(f"[{where}] {key} must be a table")
            kw[key] = dict(val)
        elif isinstance(default, tuple):
            if not isinstance(val, list):
                raise ConfigError(f"[{where}] {key} must be an array")
            kw[key] = _freeze(val)
        elif isinstance(default, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"[{where}] {key} must be a boolean")
            kw[key] = val
        elif isinstance(default, (int, float)):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[{where}] {key} must be a number")
            kw[key] = type(default)(val)
        else:
            kw[key] = val
    return cls(**kw)


def config_from_dict(d: Mapping[str, Any]) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, d, "")
    _validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a TOML config; ``None`` gives the built-in headline configuration."""
    if path is None:
        return config_from_dict({})
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return config_from_dict(data)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.sweep.correction not in CORRECTIONS:
        raise ConfigError(f"sweep.correction must be one of {CORRECTIONS}")
    if not cfg.sweep.k or any(k < 1 for k in cfg.sweep.k):
        raise ConfigError("sweep.k must be a non-empty list of wave numbers >= 1")
    if any(not 0 <= e < 1 for e in cfg.sweep.noise):
        raise ConfigError("sweep.noise levels must lie in [0, 1)")
    try:
        cfg.domain.spec()
        for d in (cfg.potentials.q1, cfg.potentials.q2, *cfg.decay.potentials):
            PotentialDescriptor.from_dict(d)
        if cfg.constants:
            FrozenConstants.from_dict(cfg.constants)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- shared helpers --------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_json(path: Path, obj: Any) -> Path:
    def conv(x):
        if isinstance(x, dict):
            return {str(k): conv(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        if isinstance(x, (np.floating, float)):
            return repr(float(x)) if not math.isfinite(x) else float(x)
        if isinstance(x, (np.integer,)):
            return int(x)
        if isinstance(x, np.bool_):
            return bool(x)
        return x

    path.write_text(json.dumps(conv(obj), indent=2, sort_keys=True) + "\n")
    return path


def _outdir(out: str | Path) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


class _Timer:
    """Collects wall-clock timings kept out of the deterministic outputs."""

    def __init__(self):
        self.t: dict[str, float] = {}

    def __call__(self, name: str, t0: float) -> None:
        self.t[name] = round(time.perf_counter() - t0, 3)

    def save(self, out: Path) -> None:
        write_json(out / "timing.json", self.t)


@dataclass(frozen=True)
class Setup:
    """Sampled potentials and derived objects shared by recovery runs."""

    domain: DomainSpec
    q1: ScalarField
    q2: ScalarField
    descriptors: tuple
    cell: PeriodicCell
    dictionary: tuple

    @property
    def q0(self) -> ScalarField:
        return ScalarField(self.domain, self.q2.values - self.q1.values, "potential")

    @property
    def s(self) -> float:
        return self.descriptors[0].sobolev_order

    @property
    def alpha(self) -> float:
        return min(d.holder_exponent for d in self.descriptors)

    @property
    def N(self) -> float:
        return max(d.sobolev_bound for d in self.descriptors)

    def with_amplitude(self, a: float) -> "Setup":
        """Corpus variant with ``q2 -> q1 + a (q2 - q1)``."""
        q2 = ScalarField(self.domain, self.q1.values + a * (self.q2.values - self.q1.values), "potential")
        return dataclasses.replace(self, q2=q2)


def make_setup(cfg: ExperimentConfig) -> Setup:
    dom = cfg.domain.spec()
    d1 = PotentialDescriptor.from_dict(cfg.potentials.q1)
    d2 = PotentialDescriptor.from_dict(cfg.potentials.q2)
    cell = PeriodicCell.for_domain(dom, stencil=cfg.forward.stencil)
    return Setup(dom, sample_potential(d1, dom), sample_potential(d2, dom), (d1, d2), cell,
                 tuple(face_mode_dictionary(dom, cfg.forward.dictionary_size)))


def cell_seeds(seed: int, index: int) -> tuple[int, int, int, int]:
    """Noise seeds for the dictionary data (A, B) and the probe data (A, B) of one cell."""
    return tuple(int(x) for x in np.random.SeedSequence([seed, index]).generate_state(4))


# -- recovery cells --------------------------------------------------------------

SWEEP_COLUMNS = ("cell", "k", "noise", "status", "dist", "E", "M", "epsilon", "rho", "xi_max", "feasible",
                 "n_modes", "n_skipped", "error_linf", "trunc_linf", "max_mode_error", "hminus1_est",
                 "linf_est", "rhs_bound", "within_bound")


@dataclass(frozen=True)
class CellResult:
    index: int
    k: float
    noise: float
    status: str
    message: str = ""
    row: dict = field(default_factory=dict)
    modes: tuple = ()
    reconstruction: ScalarField | None = None


def _solver(setup: Setup, q: ScalarField, k: float, cfg: ExperimentConfig) -> HelmholtzSolver:
    return HelmholtzSolver(q, k, cond_threshold=cfg.forward.cond_threshold,
                           check_condition=cfg.forward.check_condition)


def recover_cell(setup: Setup, cfg: ExperimentConfig, k: float, noise: float, seeds: Sequence[int],
                 constants: FrozenConstants, correction: str = "blind", index: int = 0) -> CellResult:
    """Measure, schedule, recover and score one ``(k, noise)`` cell.

    Library errors are caught and reported through ``status``.
    """
    try:
        return _recover_cell(setup, cfg, float(k), float(noise), seeds, constants, correction, index)
    except CGOLabError as exc:
        log.warning("cell %d (k=%g, noise=%g) failed: %s", index, k, noise, exc)
        return CellResult(index, float(k), float(noise), type(exc).__name__, str(exc),
                          {"cell": index, "k": float(k), "noise": float(noise), "status": type(exc).__name__})


def _recover_cell(setup, cfg, k, noise, seeds, constants, correction, index) -> CellResult:
    from .errors import InadmissibleFrame

    dom, fw, sc = setup.domain, cfg.forward, cfg.schedule
    s1, s2 = _solver(setup, setup.q1, k, cfg), _solver(setup, setup.q2, k, cfg)
    A = perturb(measure_cauchy(setup.q1, k, setup.dictionary, "A", solver=s1), noise, seeds[0], fw.band)
    B = perturb(measure_cauchy(setup.q2, k, setup.dictionary, "B", solver=s2), noise, seeds[1], fw.band)
    dist = cauchy_distance(A, B)
    sch = schedule(dist, k, dom.radius, constants.C_star, setup.N, sc.alpha, sc.beta,
                   rho_scale=sc.rho_scale, tau_min=sc.tau_min, strict=sc.strict)
    q0 = setup.q0
    pairs, skipped = [], 0
    for xi in recovery_frequencies(dom, sch):
        fr = sch.frame(xi)
        if fw.stencil == "fd7":
            fr = grid_adapted_frame(fr, dom.spacing)
        if fr.im_norm <= sch.M:
            skipped += 1
            continue
        pairs.append(reflected_pair(fr, setup.q1, setup.q2, cell=setup.cell))
    if not pairs:
        raise InadmissibleFrame(f"no admissible frame (M = {sch.M:.4g})")
    PA = perturb(measure_cauchy(setup.q1, k, [p.f1 for p in pairs], "probeA", solver=s1), noise, seeds[2], fw.band)
    PB = perturb(measure_cauchy(setup.q2, k, [p.f2 for p in pairs], "probeB", solver=s2), noise, seeds[3], fw.band)
    raw = []
    for p in pairs:
        oracle = decomposition(q0, p.frame, p.solutions, M=sch.M, schedule=sch, constants=constants, pair=p)
        t = oracle.terms
        corr = {"coupling": t["coupling"], "reflected": t["reflected"]} if correction == "oracle" else None
        m = mode_from_data(PA, PB, p.frame, p, M=sch.M, schedule=sch, constants=constants,
                           span_tol=fw.span_tol, correction=corr)
        m.budget.update({"principal": abs(t["principal"]), "coupling": abs(t["coupling"]),
                         "reflected": abs(t["reflected"]), "closure": oracle.budget["closure"],
                         "lhs_exact": abs(t["lhs"]), "_principal": t["principal"], "_lhs_exact": t["lhs"]})
        raw.append(m)
    modes = reflected_correction(raw, dom) if correction == "blind" else raw
    for m in modes:
        m.budget["mode_error"] = abs(m.fq0_hat - m.budget["_principal"])
    rep = build_report(modes, dom, sch, s=setup.s, N=setup.N, constants=constants)
    err = float(np.max(np.abs(rep.q0_reconstruction.values - q0.values)))
    xis = [m.xi for m in modes]
    trunc = float(np.max(np.abs(invert_lowpass(exact_modes(q0, xis), dom).values - q0.values)))
    row = {"cell": index, "k": k, "noise": noise, "status": "ok", "dist": dist, "E": sch.E, "M": sch.M,
           "epsilon": sch.epsilon, "rho": sch.rho, "xi_max": sch.xi_max, "feasible": sch.feasible,
           "n_modes": len(modes), "n_skipped": skipped, "error_linf": err, "trunc_linf": trunc,
           "max_mode_error": max(m.budget["mode_error"] for m in modes), "hminus1_est": rep.hminus1_est,
           "linf_est": rep.linf_est, "rhs_bound": rep.rhs_bound_value, "within_bound": err <= rep.rhs_bound_value}
    return CellResult(index, k, noise, "ok", "", row, tuple(modes), rep.q0_reconstruction)


def _sweep_worker(args) -> CellResult:
    cfg, k, noise, index, consts, correction, seed = args
    logging.getLogger("cgolab").setLevel(logging.WARNING)
    setup = make_setup(cfg)
    return recover_cell(setup, cfg, k, noise, cell_seeds(seed, index), FrozenConstants.from_dict(consts),
                        correction, index)


def _map_cells(tasks: list, threads: int) -> list[CellResult]:
    if threads <= 1 or len(tasks) <= 1:
        return [_sweep_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(_sweep_worker, tasks))


def resolve_constants(cfg: ExperimentConfig, path: str | Path | None = None) -> FrozenConstants | None:
    """Constants from ``path`` (a calibration output), else the ``[constants]`` table, else ``None``."""
    if path is not None:
        data = json.loads(Path(path).read_text())
        return FrozenConstants.from_dict(data.get("constants", data))
    if cfg.constants:
        return FrozenConstants.from_dict(cfg.constants)
    return None


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) < 2:
        return math.nan
    return float(stats.spearmanr(x, y).statistic)


def run_sweep(cfg: ExperimentConfig, out: str | Path, constants: FrozenConstants | None = None) -> dict:
    """Recovery over the ``k x noise`` grid.

    Writes ``manifest.json``, ``sweep.csv``, ``budgets.csv``, ``fields/`` and
    ``timing.json``.  Constants default to a fresh calibration (written to
    ``calibration/``).
    """
    out = _outdir(out)
    timer = _Timer()
    t0 = time.perf_counter()
    if constants is None:
        constants = resolve_constants(cfg)
    if constants is None:
        constants = run_calibrate(cfg, out / "calibration")["constants"]
        timer("calibrate", t0)
    cells = [(float(k), float(e)) for e in cfg.sweep.noise for k in cfg.sweep.k]
    tasks = [(cfg, k, e, i, constants.to_dict(), cfg.sweep.correction, cfg.seed) for i, (k, e) in enumerate(cells)]
    t1 = time.perf_counter()
    results = sorted(_map_cells(tasks, cfg.threads), key=lambda r: r.index)
    timer("cells", t1)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, [[r.row.get(c, "") for c in SWEEP_COLUMNS] for r in results])
    _write_all_budgets(out / "budgets.csv", results)
    fields = out / "fields"
    for r in results:
        if r.reconstruction is not None:
            save_field(r.reconstruction, fields / f"cell_{r.index:02d}_q0", {"k": r.k, "noise": r.noise})
    summary = _sweep_summary(results)
    manifest = {"version": __version__, "config": cfg.to_dict(), "constants": constants.to_dict(),
                "cells": [{"cell": r.index, "k": r.k, "noise": r.noise, "status": r.status, "message": r.message}
                          for r in results],
                "summary": summary,
                "files": ["sweep.csv", "budgets.csv", "fields/"]}
    write_json(out / "manifest.json", manifest)
    timer("total", t0)
    timer.save(out)
    summary["failed"] = sum(r.status != "ok" for r in results)
    summary["constants"] = constants
    summary["results"] = results
    return summary


def _write_all_budgets(path: Path, results: Sequence[CellResult]) -> None:
    from .recovery import BUDGET_COLUMNS

    extra = ("cell", "k", "noise")
    rows = []
    for r in results:
        for m in r.modes:
            row = m.to_row()
            rows.append([r.index, r.k, r.noise] + [row.get(c, "") for c in BUDGET_COLUMNS])
    write_csv(path, extra + BUDGET_COLUMNS, rows)


def _sweep_summary(results: Sequence[CellResult]) -> dict:
    ok = [r for r in results if r.status == "ok"]
    per_noise = {}
    for e in sorted({r.noise for r in ok}):
        rs = sorted((r for r in ok if r.noise == e), key=lambda r: r.k)
        ks = [r.k for r in rs]
        errs = [r.row["error_linf"] for r in rs]
        per_noise[repr(e)] = {"k": ks, "error_linf": errs, "spearman": spearman(ks, errs),
                              "all_within_bound": all(bool(r.row["within_bound"]) for r in rs)}
    return {"n_cells": len(results), "n_ok": len(ok), "per_noise": per_noise}


def run_recover(cfg: ExperimentConfig, out: str | Path, k: float, noise: float,
                constants: FrozenConstants | None = None) -> dict:
    """Single recovery cell with its full report."""
    out = _outdir(out)
    constants = constants or resolve_constants(cfg) or FrozenConstants()
    setup = make_setup(cfg)
    r = recover_cell(setup, cfg, k, noise, cell_seeds(cfg.seed, 0), constants, cfg.sweep.correction)
    write_csv(out / "recover.csv", SWEEP_COLUMNS, [[r.row.get(c, "") for c in SWEEP_COLUMNS]])
    if r.status == "ok":
        write_budgets(r.modes, out / "budgets.csv")
        save_field(r.reconstruction, out / "q0_reconstruction", {"k": r.k, "noise": r.noise})
    write_json(out / "manifest.json", {"version": __version__, "config": cfg.to_dict(),
                                       "constants": constants.to_dict(), "status": r.status,
                                       "message": r.message})
    return {"status": r.status, "row": r.row, "result": r}


# -- calibration ------------------------------------------------------------------

def contraction_threshold(q: ScalarField, cell: PeriodicCell, k: float, ladder: Sequence[float],
                          target: float = 0.5) -> float:
    """Smallest ``|Im zeta|`` on ``ladder`` with ``max|q| / min|symbol| <= target``.

    That ratio bounds the Picard map of the remainder equation in L^2, so the
    iteration contracts at every ladder point above the returned value.
    Returns ``inf`` when no ladder point qualifies.
    """
    qmax = float(np.max(np.abs(q.values)))
    if qmax == 0.0:
        return 0.0
    for m in sorted(ladder):
        fr = zero_frequency_frame(k, k * k + m * m)
        if cell.stencil == "fd7":
            fr = grid_adapted_frame(fr, cell.spacing)
        _, smin = cell.best_shift(fr.zeta1)
        if smin > 0 and qmax / smin <= target:
            return float(m)
    return math.inf


CALIBRATION_COLUMNS = ("amplitude", "k", "status", "error_linf", "base", "ratio_C", "coupling_ratio",
                       "reflected_ratio", "data_ratio", "rl_C")


def run_calibrate(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Fit the frozen constants on the corpus ``(q1, q1 + a (q2 - q1))``.

    Corpus noise uses seeds offset from the sweep seed, so calibration never
    sees the sweep's data.  Writes ``constants.json`` and ``calibration.csv``.
    """
    from .errors import NoConvergence
    from .recovery import rhs_bound

    out = _outdir(out)
    timer = _Timer()
    t0 = time.perf_counter()
    cc = cfg.calibrate
    setup = make_setup(cfg)
    corpus = [setup.with_amplitude(float(a)) for a in cc.amplitudes]
    s, N = setup.s, setup.N
    eta, p = interpolation_exponents(s)

    ladder = np.geomspace(cc.im_ladder[0], cc.im_ladder[1], int(cc.im_ladder[2]))
    m_star = max(contraction_threshold(q, setup.cell, float(k), ladder, cc.contraction)
                 for c in corpus for q in (c.q1, c.q2) for k in cc.k)
    if not math.isfinite(m_star):
        raise NoConvergence("remainder contraction not certified anywhere on the |Im zeta| ladder")
    q0s = [c.q0 for c in corpus]
    C_tail = max(l2_norm(q0) ** 2 for q0 in q0s)
    C_int = max(float(np.max(np.abs(q0.values))) / ((2 * N) ** p * sobolev_norm(q0, -1.0) ** (eta / (1 + s)))
                for q0 in q0s if np.any(q0.values))
    path = [zero_frequency_frame(1.0, 1.0 + m * m) for m in (2.0, 5.0, 10.0)]
    if setup.cell.stencil == "fd7":
        path = [grid_adapted_frame(f, setup.domain.spacing) for f in path]
    C_cal = max(decay_study(q, path, sobolev_order=s, cell=setup.cell).C_cal
                for c in corpus for q in (c.q1, c.q2))
    prelim = FrozenConstants(C=1.0, C_star=m_star / N, C_cal=float(C_cal), C_int=float(C_int), C_tail=C_tail,
                             trivial=2 * N)

    rows, ratios = [], {"C": [], "coupling": [], "reflected": [], "data": [], "rl": []}
    xi_all: dict[tuple, np.ndarray] = {}
    for ai, (a, c) in enumerate(zip(cc.amplitudes, corpus)):
        for ki, k in enumerate(cc.k):
            idx = ai * len(cc.k) + ki
            r = recover_cell(c, cfg, float(k), cc.noise, cell_seeds(cfg.seed + cc.seed_offset, idx), prelim,
                             cfg.sweep.correction, idx)
            if r.status != "ok":
                rows.append([a, k, r.status] + [""] * (len(CALIBRATION_COLUMNS) - 3))
                continue
            sch = schedule(r.row["dist"], float(k), setup.domain.radius, prelim.C_star, N,
                           cfg.schedule.alpha, cfg.schedule.beta, rho_scale=cfg.schedule.rho_scale,
                           tau_min=cfg.schedule.tau_min)
            base = rhs_bound(float(k), r.row["dist"], sch, s=s, constants=prelim)
            b = [m.budget for m in r.modes]
            cr = max(x["coupling"] / x["coupling_bound"] for x in b)
            rr = max(x["reflected"] / x["reflected_bound"] for x in b)
            dr = max(abs(m.lhs - m.budget["_lhs_exact"]) / m.budget["data_bound"] for m in r.modes)
            for m in r.modes:
                xi_all[tuple(np.round(m.xi, 12))] = m.xi
            rl = fourier_decay_check(c.q0, cc.eps, [m.xi for m in r.modes], setup.alpha).C_min
            ratio = r.row["error_linf"] / base
            for key, v in (("C", ratio), ("coupling", cr), ("reflected", rr), ("data", dr), ("rl", rl)):
                ratios[key].append(v)
            rows.append([a, k, "ok", r.row["error_linf"], base, ratio, cr, rr, dr, rl])
    if not ratios["C"]:
        raise NoConvergence("no calibration cell succeeded")
    xis = sorted(xi_all.values(), key=lambda x: tuple(x))
    C_rl = max(fourier_decay_check(c.q0, cc.eps, xis, setup.alpha).C_min for c in corpus)
    constants = dataclasses.replace(prelim, C=max(ratios["C"]), C_coupling=max(ratios["coupling"]),
                                    C_reflected=max(ratios["reflected"]), C_data=max(ratios["data"]),
                                    C_rl=max(C_rl, max(ratios["rl"])))
    write_csv(out / "calibration.csv", CALIBRATION_COLUMNS, rows)
    write_json(out / "constants.json", {"version": __version__, "constants": constants.to_dict(),
                                        "contraction_threshold": m_star, "amplitudes": list(cc.amplitudes),
                                        "k": list(cc.k), "noise": cc.noise})
    timer("calibrate", t0)
    timer.save(out)
    return {"constants": constants, "rows": rows, "contraction_threshold": m_star}


# -- diagnostics --------------------------------------------------------------------

def random_frames(count: int, k_max: float, xi_max: float, seed: int) -> list:
    """Random admissible frames: ``xi`` in a ball, ``k`` in [1, k_max], ``tau`` above the real-root floor."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        xi = rng.normal(size=3)
        xi *= xi_max * rng.uniform(0.01, 1.0) / np.linalg.norm(xi)
        k = rng.uniform(1.0, k_max)
        floor = math.sqrt(max(k * k / float(xi @ xi) - 0.25, 0.0))
        out.append(build_frame(xi, k, floor + rng.uniform(0.0, 2.0)))
    return out


def run_frames(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Build random frames and record the worst algebraic certificate residual of each."""
    out = _outdir(out)
    fc = cfg.frames
    t0 = time.perf_counter()
    frames = random_frames(fc.count, fc.k_max, fc.xi_max, cfg.seed)
    worst = [max(f.check().values()) for f in frames]
    elapsed = time.perf_counter() - t0
    rows = [[i, *f.xi, f.k, f.tau, w] for i, (f, w) in enumerate(zip(frames, worst))]
    write_csv(out / "frames.csv", ("case", "xi1", "xi2", "xi3", "k", "tau", "max_residual"), rows)
    summary = {"count": len(frames), "max_residual": max(worst)}
    write_json(out / "frames.json", summary)
    write_json(out / "timing.json", {"frames": round(elapsed, 3)})
    summary["seconds"] = elapsed
    return summary


def decay_domain(cfg: ExperimentConfig) -> DomainSpec:
    d = cfg.decay
    return DomainSpec(d.L, d.H, d.R, d.n)


def decay_potentials(cfg: ExperimentConfig) -> list[ScalarField]:
    dom = decay_domain(cfg)
    return [sample_potential(PotentialDescriptor.from_dict(p), dom) for p in cfg.decay.potentials]


def run_cgo_decay(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Remainder decay along a one-decade ``|Im zeta|`` path for each decay potential."""
    out = _outdir(out)
    d = cfg.decay
    xi = np.asarray(d.xi, dtype=float)
    x2 = float(xi @ xi)
    ims = np.geomspace(d.im_min, d.im_max, d.count)
    frames = [build_frame(xi, 1.0, math.sqrt((1.0 + m * m) / x2 - 0.25)) for m in ims]
    cell = PeriodicCell.for_domain(decay_domain(cfg))
    rows, fits = [], []
    for i, q in enumerate(decay_potentials(cfg)):
        rep = decay_study(q, frames, sobolev_order=PotentialDescriptor.from_dict(d.potentials[i]).sobolev_order,
                          cell=cell)
        rows += [[i, m, h] for m, h in zip(rep.im_norms, rep.hs_norms)]
        fits.append({"potential": i, "slope": rep.slope, "slope_ci": list(rep.slope_ci), "C_cal": rep.C_cal,
                     "trivial": rep.trivial})
    write_csv(out / "decay.csv", ("potential", "im_norm", "hs_norm_w"), rows)
    write_json(out / "decay.json", {"fits": fits})
    return {"fits": fits}


def coupling_decay(cfg: ExperimentConfig) -> dict:
    """Largest ``|coupling|`` over the scheduled frame set, as ``k`` sweeps a decade.

    Uses the decay box with ``q1 = P[i]`` and ``q2 = P[i] + P[j]`` for
    ``(i, j) = coupling_pair`` and a fixed nominal Cauchy distance.
    """
    d, sc = cfg.decay, cfg.schedule
    dom = decay_domain(cfg)
    P = decay_potentials(cfg)
    i, j = (int(v) for v in d.coupling_pair)
    q1 = P[i]
    q2 = ScalarField(dom, P[i].values + P[j].values, "potential")
    q0 = P[j]
    cell = PeriodicCell.for_domain(dom)
    ims, sup, counts = [], [], []
    for k in np.geomspace(d.coupling_k[0], d.coupling_k[1], int(d.coupling_k[2])):
        sch = schedule(d.coupling_dist, float(k), dom.radius, 0.0, 1.0, sc.alpha, sc.beta,
                       rho_scale=sc.rho_scale, tau_min=sc.tau_min)
        vals = []
        for xi in recovery_frequencies(dom, sch):
            fr = sch.frame(xi)
            vals.append(abs(decomposition_terms(q0, fr, frame_remainders(fr, q1, q2, cell=cell, tol=1e-10))["coupling"]))
        ims.append(math.sqrt(k * k + (sch.E / (5 * dom.radius)) ** 2))
        sup.append(max(vals))
        counts.append(len(vals))
    slope = float(stats.linregress(np.log(ims), np.log(sup)).slope)
    return {"im_norm": ims, "sup_coupling": sup, "n_frames": counts, "slope": slope}


def run_forward_check(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Boundary pairing versus the volume integral of ``(q2 - q1) u1 u2``."""
    from .forward import solve_dirichlet
    from .grid import GAMMA_FACES

    out = _outdir(out)
    cfg = cfg.with_overrides(grid_n=cfg.forward_check.n)
    setup = make_setup(cfg)
    dom, q0 = setup.domain, setup.q0
    rows, worst = [], 0.0
    for k, face, j1, j2 in cfg.forward_check.cases:
        f1 = face_mode(dom, int(face), int(j1), int(j2))
        nxt = GAMMA_FACES[(list(GAMMA_FACES).index(int(face)) + 1) % len(GAMMA_FACES)]
        f2 = face_mode(dom, nxt, int(j1), int(j2))
        s1 = _solver(setup, setup.q1, float(k), cfg)
        s2 = _solver(setup, setup.q2, float(k), cfg)
        bnd = alessandrini_pairing(setup.q1, setup.q2, float(k), f1, f2, solvers=(s1, s2))
        u1, u2 = s1.solve(f1), s2.solve(f2)
        vol = complex(np.sum(q0.values * u1.values * u2.values)) * dom.cell_volume
        rel = abs(bnd - vol) / max(abs(vol), 1e-300)
        worst = max(worst, rel)
        rows.append([k, face, j1, j2, abs(vol), abs(bnd), rel])
    write_csv(out / "forward_check.csv", ("k", "face", "j1", "j2", "volume", "boundary", "rel_error"), rows)
    write_json(out / "forward_check.json", {"max_rel_error": worst, "cases": len(rows)})
    return {"max_rel_error": worst, "rows": rows}


def run_rl_check(cfg: ExperimentConfig, out: str | Path, constants: FrozenConstants | None = None,
                 scheduled: Sequence[tuple[float, Sequence]] | None = None) -> dict:
    """Translation modulus and the frozen-constant Fourier decay check for the corpus differences.

    ``scheduled`` lists ``(epsilon, xis)`` pairs (typically from a sweep); by
    default the schedule is evaluated at the sweep wave numbers with the
    nominal distance ``decay.coupling_dist``.
    """
    out = _outdir(out)
    constants = constants or resolve_constants(cfg) or FrozenConstants()
    setup = make_setup(cfg)
    dom, sc = setup.domain, cfg.schedule
    if scheduled is None:
        scheduled = []
        for k in cfg.sweep.k:
            sch = schedule(cfg.decay.coupling_dist, float(k), dom.radius, constants.C_star, setup.N,
                           sc.alpha, sc.beta, rho_scale=sc.rho_scale, tau_min=sc.tau_min)
            scheduled.append((sch.epsilon, recovery_frequencies(dom, sch)))
    corpus = [setup] + [setup.with_amplitude(float(a)) for a in cfg.calibrate.amplitudes]
    hmin = min(dom.spacing)
    mrows, drows, fits, fractions = [], [], [], []
    for ci, c in enumerate(corpus):
        q0 = c.q0
        for di, direction in enumerate(cfg.rl.directions):
            rep = translation_modulus(q0, shift_path(direction, hmin, cfg.rl.shifts, cap=dom.half_width / 4),
                                      alpha=setup.alpha)
            mrows += [[ci, di, y, m] for y, m in zip(rep.shift_norms, rep.moduli)]
            fits.append({"potential": ci, "direction": di, "exponent": rep.exponent, "C0": rep.C0,
                         "exponent_ok": rep.exponent_ok})
        for eps, xis in scheduled:
            chk = fourier_decay_check(q0, [eps], xis, setup.alpha)
            fractions.append(chk.fraction_satisfied(constants.C_rl))
            drows += [[ci, e, x, 1 - r / constants.C_rl]
                      for (e, x, _), r in zip(chk.rows(), chk.ratios.ravel())]
    write_csv(out / "rl_modulus.csv", ("potential", "direction", "shift_norm", "modulus"), mrows)
    write_csv(out / "rl_decay.csv", ("potential", "eps", "xi_norm", "slack"), drows)
    summary = {"C_rl": constants.C_rl, "min_fraction_satisfied": min(fractions) if fractions else 1.0,
               "min_slack": min((r[-1] for r in drows), default=1.0), "modulus": fits}
    write_json(out / "rl.json", summary)
    return summary
