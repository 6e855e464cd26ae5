"""Command-line entry point: ``fracbdf {converge,flip,coeffs,cfl,weights}``.

Settings may come from a TOML file (``--config``); command-line flags win.
Keys in the file are the long flag names with dashes or underscores, e.g.::

    case = "a"
    alpha = [0.25, 0.5]
    k = [2, 3, 4]
    N = [50, 100, 200, 400, 800]
    M = 100
    scheme = ["corrected"]
    ref-factor = 16
    format = "csv"

Exit codes: 0 success, 2 configuration error, 3 stability refusal,
4 failed ``--check``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter version
    import tomli as tomllib

from . import correction as corr
from .harness import (
    ExperimentConfig,
    dump_cfl_sweep,
    dump_coeffs,
    dump_weights,
    flip_csv,
    run_convergence,
    run_stability_flip,
)
from .stepper import ConfigurationError, StabilityRefusedError

log = logging.getLogger("fracbdf")

EXIT_OK, EXIT_CONFIG, EXIT_STABILITY, EXIT_CHECK = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2 as well; keep the message format
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


CONVERGE_CSV_HELP = """\
CSV columns: case, scheme, alpha, k, N, error (normalized L2 error at T, 3
significant digits), rate (observed order against the previous N), and
theoretical_rate. Lines starting with '#' carry metadata and warnings.
With --trace, a second CSV (<out>.trace.csv, or appended to stdout) lists
the error at every step: case, scheme, alpha, k, N, n, t, error."""


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracbdf", description="Corrected BDF convolution quadrature for fractional evolution equations.")
    p.add_argument("--config", type=Path, help="TOML file with default settings")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("converge", help="convergence study at the final time",
                       epilog=CONVERGE_CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    c.add_argument("--case", choices=["a", "b", "c", "zero"])
    c.add_argument("--alpha", type=_floats, help="comma list of fractional orders")
    c.add_argument("--k", type=_ints, help="comma list of BDF orders")
    c.add_argument("--N", type=_ints, help="comma list of step counts (increasing)")
    c.add_argument("--M", type=int, help="number of spatial subintervals")
    c.add_argument("--scheme", type=_strs, help="comma list of corrected, uncorrected, L1")
    c.add_argument("--ref-factor", type=int, help="reference uses N_max times this many steps")
    c.add_argument("--T", type=float, help="final time")
    c.add_argument("--format", choices=["csv", "json"])
    c.add_argument("--out", type=Path)
    c.add_argument("--override-stability", action="store_true", default=None)
    c.add_argument("--trace", action="store_true", default=None,
                   help="also dump the error at every time step")
    c.add_argument("--check-reference", action="store_true", default=None,
                   help="recompute the reference at twice the refinement and warn on drift")
    c.add_argument("--dump-weights", type=Path,
                   help="directory receiving the CQ weights used by each (alpha, k) as CSV")
    c.add_argument("--check", action="store_true",
                   help="exit 4 unless every headline rate is within --check-tol of theory")
    c.add_argument("--check-tol", type=float, default=0.1)

    f = sub.add_parser("flip", help="classify runs around the stability threshold",
                       epilog="CSV columns: N, tau, tau0, condition_satisfied, verdict, max_norm, hf_growth.")
    f.add_argument("--case", default="c")
    f.add_argument("--alpha", type=float, default=1.5)
    f.add_argument("--k", type=int, default=5)
    f.add_argument("--M", type=int, default=100)
    f.add_argument("--N", type=_ints, default=[1700, 1800])
    f.add_argument("--T", type=float, default=1.0)
    f.add_argument("--out", type=Path)
    f.add_argument("--profiles", type=Path, help="write final-time nodal profiles as CSV (x, U for each N)")

    k = sub.add_parser("coeffs", help="correction coefficients",
                       epilog="CSV columns: regime, k, name (a, b or c), ell (b only), j, exact, value.")
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--regime", choices=[corr.SUBDIFFUSION, corr.DIFFUSION_WAVE], default=corr.SUBDIFFUSION)
    k.add_argument("--format", choices=["csv", "json"], default="json")
    k.add_argument("--out", type=Path)

    s = sub.add_parser("cfl", help="CFL constants over a grid of alpha",
                       epilog="CSV columns: alpha, k, alpha_star, cfl_constant (empty if unconditional).")
    s.add_argument("--k", type=_ints, default=[3, 4, 5, 6])
    s.add_argument("--alpha", type=_floats, default=None,
                   help="comma list; default 1.01..1.99 in steps of 0.01")
    s.add_argument("--out", type=Path)

    w = sub.add_parser("weights", help="CQ weights b_0..b_{count-1}", epilog="CSV columns: j, weight.")
    w.add_argument("--alpha", type=float, required=True)
    w.add_argument("--k", type=int, required=True)
    w.add_argument("--count", type=int, default=20)
    w.add_argument("--out", type=Path)
    return p


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    return {key.replace("-", "_"): val for key, val in raw.items()}


def _as_list(val, conv):
    if isinstance(val, (list, tuple)):
        return [conv(x) for x in val]
    if isinstance(val, str):
        return [conv(x) for x in val.split(",") if x.strip()]
    return [conv(val)]


_CONFIG_KEYS = {
    "case": str, "alpha": float, "k": int, "N": int, "M": int, "scheme": str,
    "ref_factor": int, "T": float, "format": str, "out": str,
    "override_stability": bool, "trace": bool, "check_reference": bool,
}
_LIST_KEYS = {"alpha", "k", "N", "scheme"}


def experiment_config(args: argparse.Namespace, file_cfg: dict) -> ExperimentConfig:
    values = {}
    for key, val in file_cfg.items():
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        conv = _CONFIG_KEYS[key]
        values[key] = _as_list(val, conv) if key in _LIST_KEYS else conv(val)
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = str(val) if isinstance(val, Path) else val
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _emit(text: str, out: Path | str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _cmd_converge(args, file_cfg) -> int:
    cfg = experiment_config(args, file_cfg)
    report = run_convergence(cfg)
    text = report.to_csv() if cfg.format == "csv" else report.to_json()
    _emit(text, cfg.out)
    if cfg.trace and cfg.format == "csv":
        if cfg.out is None:
            sys.stdout.write("\n" + report.traces_csv())
        else:
            _emit(report.traces_csv(), str(cfg.out) + ".trace.csv")
    if args.dump_weights is not None:
        args.dump_weights.mkdir(parents=True, exist_ok=True)
        for alpha in cfg.alpha:
            for k in cfg.k:
                name = args.dump_weights / f"weights_alpha{alpha}_k{k}.csv"
                _emit(dump_weights(alpha, k, cfg.N[-1] + 1), name)
    if args.check:
        bad = [r for r in report.rows
               if r.headline_rate is None or abs(r.headline_rate - r.theoretical_rate) > args.check_tol]
        for r in bad:
            log.error("rate check failed: %s alpha=%s k=%s observed=%s theory=%s",
                      r.scheme, r.alpha, r.k, r.headline_rate, r.theoretical_rate)
        if bad:
            return EXIT_CHECK
    return EXIT_OK


def _cmd_flip(args, file_cfg) -> int:
    results = run_stability_flip(args.alpha, args.k, args.M, args.N, case=args.case, T=args.T)
    _emit(flip_csv(results), args.out)
    if args.profiles is not None:
        x = np.arange(1, args.M) / args.M
        lines = ["x," + ",".join(f"U_N{r.N}" for r in results)]
        for i, xi in enumerate(x):
            lines.append(repr(float(xi)) + "," + ",".join(repr(float(r.profile[i])) for r in results))
        _emit("\n".join(lines) + "\n", args.profiles)
    return EXIT_OK


def _cmd_coeffs(args, file_cfg) -> int:
    _emit(dump_coeffs(args.k, args.regime, args.format) + ("\n" if args.format == "json" else ""), args.out)
    return EXIT_OK


def _cmd_cfl(args, file_cfg) -> int:
    alphas = args.alpha if args.alpha is not None else [round(1.01 + 0.01 * i, 2) for i in range(99)]
    _emit(dump_cfl_sweep(args.k, alphas), args.out)
    return EXIT_OK


def _cmd_weights(args, file_cfg) -> int:
    _emit(dump_weights(args.alpha, args.k, args.count), args.out)
    return EXIT_OK


_COMMANDS = {"converge": _cmd_converge, "flip": _cmd_flip, "coeffs": _cmd_coeffs,
             "cfl": _cmd_cfl, "weights": _cmd_weights}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        file_cfg = _load_config(args.config)
        return _COMMANDS[args.command](args, file_cfg)
    except StabilityRefusedError as exc:
        log.error("%s", exc)
        return EXIT_STABILITY
    except (ConfigurationError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
