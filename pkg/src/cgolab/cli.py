"""Command-line entry point.

Exit codes: 0 on success, 2 when some sweep cells failed, 1 on configuration
or other fatal errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import experiment as ex
from .errors import CGOLabError, ConfigError

log = logging.getLogger("cgolab")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config (default: built-in headline run)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default: runs)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker processes for sweeps")
    common.add_argument("--grid-n", type=int, help="override the grid size per axis")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="cgolab", description="CGO-based recovery experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("frames", parents=[common], help="random frame certificates")
    sub.add_parser("cgo-decay", parents=[common], help="remainder and coupling decay studies")
    sub.add_parser("forward-check", parents=[common], help="boundary pairing against the volume integral")
    rl = sub.add_parser("rl-check", parents=[common], help="translation modulus and Fourier decay check")
    rl.add_argument("--constants", type=Path, help="constants.json from a calibration run")
    sub.add_parser("calibrate", parents=[common], help="fit the frozen constants on the corpus")
    rec = sub.add_parser("recover", parents=[common], help="single recovery cell")
    rec.add_argument("--k", type=float, required=True)
    rec.add_argument("--noise", type=float, default=1e-3)
    rec.add_argument("--constants", type=Path)
    sw = sub.add_parser("sweep", parents=[common], help="recovery over the k x noise grid")
    sw.add_argument("--constants", type=Path, help="skip calibration and use these constants")
    return p


def _run(args: argparse.Namespace) -> int:
    cfg = ex.load_config(args.config).with_overrides(seed=args.seed, threads=args.threads, grid_n=args.grid_n)
    ex._validate(cfg)
    out = args.out
    cmd = args.command
    if cmd == "frames":
        r = ex.run_frames(cfg, out)
        log.info("%d frames, max residual %.3g", r["count"], r["max_residual"])
    elif cmd == "cgo-decay":
        r = ex.run_cgo_decay(cfg, out)
        c = ex.coupling_decay(cfg)
        ex.write_json(Path(out) / "coupling.json", c)
        for f in r["fits"]:
            log.info("potential %d: slope %.3f", f["potential"], f["slope"])
        log.info("coupling slope %.3f", c["slope"])
    elif cmd == "forward-check":
        r = ex.run_forward_check(cfg, out)
        log.info("max relative pairing error %.3g", r["max_rel_error"])
    elif cmd == "rl-check":
        r = ex.run_rl_check(cfg, out, ex.resolve_constants(cfg, args.constants))
        log.info("C_rl %.4g, min fraction satisfied %.3f", r["C_rl"], r["min_fraction_satisfied"])
    elif cmd == "calibrate":
        r = ex.run_calibrate(cfg, out)
        log.info("constants written to %s", Path(out) / "constants.json")
    elif cmd == "recover":
        r = ex.run_recover(cfg, out, args.k, args.noise, ex.resolve_constants(cfg, args.constants))
        if r["status"] != "ok":
            log.error("recovery failed: %s", r["status"])
            return 2
        log.info("error %.4g, bound %.4g", r["row"]["error_linf"], r["row"]["rhs_bound"])
    elif cmd == "sweep":
        r = ex.run_sweep(cfg, out, ex.resolve_constants(cfg, args.constants))
        for e, s in r["per_noise"].items():
            log.info("noise %s: errors %s, spearman %.3f", e, ["%.4g" % v for v in s["error_linf"]], s["spearman"])
        if r["failed"]:
            log.error("%d of %d cells failed", r["failed"], r["n_cells"])
            return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose + 1, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except CGOLabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
