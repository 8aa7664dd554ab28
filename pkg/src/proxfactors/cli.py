"""Command-line entry point: ``proxfactors <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure. Every
subcommand writes ``manifest.json`` next to its outputs. Values from a
``--config`` file override command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_kv
from .errors import InputError, NumericalError
from .evt_bounds import (
    ClusterSizeDist,
    GevSpec,
    constrained_order_stats,
    multi_factor_bound,
    one_factor_bound_curve,
    prop1_lower_bound,
    rotate_threshold_bound,
)
from .factor_core import pca_fit
from .metrics import generalized_correlation, per_factor_r2, variance_explained
from .panel_io import load_csv, load_fred_md, load_groups, standardize, write_matrix, write_table
from .proximate import RotationSpec, choose_m_data_driven, proximate_fit
from .rng import substream
from .simulate import (
    COMPARE_COLUMNS,
    FIGURE_COLUMNS,
    FIGURES,
    apply_overrides,
    compare_config_from,
    run_comparison_experiment,
    run_figure_experiment,
)

OUTDIR_ENV = "PROXFACTORS_OUTDIR"
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("proxfactors")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, args, effective: dict):
        self.out = Path(args.out or os.environ.get(OUTDIR_ENV) or "proxfactors_out")
        self.out.mkdir(parents=True, exist_ok=True)
        self.effective = {k: v for k, v in effective.items() if v is not None}
        self.started = _now()
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self, extra: dict | None = None) -> Path:
        manifest = {
            "command_line": sys.argv[:],
            "config": {k: str(v) for k, v in sorted(self.effective.items())},
            "config_hash": config_hash(self.effective),
            "seed": self.effective.get("seed"),
            "started": self.started,
            "finished": _now(),
            "outputs": sorted(self.files),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        if extra:
            manifest.update(extra)
        p = self.out / "manifest.json"
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def _merge(args, keys) -> dict:
    """Flags first, then the config file on top."""
    eff = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "config", None):
        eff.update(load_kv(args.config))
    return eff


def _ints(text):
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _floats(text):
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _load_panel(eff):
    if not eff.get("input"):
        raise InputError("--input is required")
    if eff.get("K") is None:
        raise InputError("--K is required")
    panel = load_csv(eff["input"], orientation=eff.get("orientation") or "units-in-columns",
                     missing=eff.get("missing") or "drop-unit")
    for line in panel.report:
        log.info(line)
    return standardize(panel, eff.get("standardize") or "none")


# --------------------------------------------------------------------------- subcommands


def cmd_fit(args):
    eff = _merge(args, ["input", "K", "standardize", "orientation", "missing"])
    run = Run(args, eff)
    panel = _load_panel(eff)
    fit = pca_fit(panel, int(eff["K"]))
    for p in fit.save(run.out, list(panel.unit_ids), list(panel.time_ids)):
        run.files.append(p.name)
    run.finish()
    return 0


def cmd_proximate(args):
    eff = _merge(args, ["input", "K", "m", "target_rho", "rotate", "c", "variant", "groups", "standardize",
                        "orientation", "missing"])
    run = Run(args, eff)
    panel = _load_panel(eff)
    K = int(eff["K"])
    fit = pca_fit(panel, K)
    chosen = None
    if eff.get("m") is not None:
        m = int(eff["m"])
    elif eff.get("target_rho") is not None:
        m = chosen = choose_m_data_driven(panel, K, float(eff["target_rho"]), fit=fit)
    else:
        raise InputError("give either --m or --target-rho")
    rotation = None
    rotate = eff.get("rotate") or "none"
    if rotate != "none" or eff.get("c") is not None:
        if eff.get("c") is None:
            raise InputError("rotate-and-threshold needs -c")
        rotation = RotationSpec.build(fit, rotate, float(eff["c"]))
    prox = proximate_fit(panel, fit, m, rotation, variant=eff.get("variant") or "theory")
    units, times = list(panel.unit_ids), list(panel.time_ids)
    prox.weights.save(run.path("weights.csv"), units)
    write_matrix(run.path("proximate_factors.csv"), prox.factors, times, index_name="time")
    write_matrix(run.path("proximate_loadings.csv"), prox.loadings, units, index_name="unit")
    gc = generalized_correlation(fit.factors, prox.factors)
    # uncentered R² suits mean-zero factors; add an intercept when the panel was not demeaned
    r2 = per_factor_r2(fit.factors, prox.factors, intercept=(eff.get("standardize") or "none") == "none")
    rows = [["m", m], ["gen_corr_total", gc.total], ["gen_corr_avg", gc.total / K]]
    rows += [[f"gen_corr_{k + 1}", v] for k, v in enumerate(gc.individual)]
    rows += [[f"r2_factor_{k + 1}", v] for k, v in enumerate(r2)]
    rows += [["var_explained_pca", variance_explained(panel, fit.factors)],
             ["var_explained_proximate", variance_explained(panel, prox.factors)]]
    write_table(run.path("metrics.csv"), ["metric", "value"], rows)
    if eff.get("groups"):
        prox.weights.save_composition(run.path("composition.csv"), units, load_groups(eff["groups"]))
    run.finish({"chosen_m": chosen} if chosen is not None else None)
    return 0


BOUND_KEYS = ["variant", "N", "K", "m", "sigma_f", "sigma_e", "h", "family", "theta", "taus", "rho0",
              "gamma_underbar", "correction_prob", "c", "samples", "seed", "cluster"]


def bound_rows(params: dict) -> list[list]:
    """Rows ``[variant, m, rho0, tau, prob]`` for a bound parameter set."""
    unknown = set(params) - set(BOUND_KEYS)
    if unknown:
        raise InputError(f"unknown bound parameters: {sorted(unknown)}")
    try:
        variant = params.get("variant", "one_factor")
        N = int(params["N"])
        K = int(params.get("K", 1))
        ms = _ints(params.get("m", "1"))
        sigma_f = _floats(params.get("sigma_f", "1.0"))
        sigma_e = float(params.get("sigma_e", 1.0))
        h = float(params.get("h", 0.0))
        theta = float(params.get("theta", 1.0))
        spec = GevSpec.from_family(params.get("family", "folded_normal"), theta=theta)
        cluster = ClusterSizeDist(_floats(params["cluster"])) if "cluster" in params else None
        rho0s = _floats(params.get("rho0", "0.95"))
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed bound parameters: {exc}") from exc
    rows = []
    if variant == "one_factor":
        taus = _floats(params["taus"]) if "taus" in params else list(np.logspace(-2, 2, 41))
        for m in ms:
            for r in one_factor_bound_curve(m, N, spec, sigma_f[0], sigma_e, h, taus, cluster):
                rows.append([variant, m, r.rho0, r.params["tau"], r.prob_lower_bound])
    elif variant == "multi_factor":
        signals = np.broadcast_to(np.square(sigma_f), (K,))
        for m in ms:
            for rho0 in rho0s:
                r = multi_factor_bound(m, N, K, spec, signals, sigma_e, h,
                                       float(params.get("gamma_underbar", 1.0)),
                                       float(params.get("correction_prob", 0.0)), rho0=rho0)
                rows.append([variant, m, r.rho0, r.params["tau"], r.prob_lower_bound])
    elif variant == "prop1":
        for m in ms:
            for rho0 in rho0s:
                rows.append([variant, m, rho0, float("nan"), prop1_lower_bound(rho0, m, N, sigma_f[0], sigma_e, h)])
    elif variant == "rotate_threshold":
        c = float(params.get("c", 0.1))
        n_samples = int(params.get("samples", 1000))
        rng = substream(int(params.get("seed", 0)), 0, "order_stats")
        sf = np.broadcast_to(np.asarray(sigma_f), (K,))
        draws = [rng.standard_normal((N, K)) * sf for _ in range(n_samples)]
        for m in ms:
            samples = np.array([constrained_order_stats(V, m, c) for V in draws])
            for rho0 in rho0s:
                rows.append([variant, m, rho0, float("nan"),
                             rotate_threshold_bound(m, K, sigma_e, h, c, samples, rho0)])
    else:
        raise InputError(f"unknown bound variant {variant!r}")
    return rows


def cmd_bounds(args):
    params = load_kv(args.params)
    run = Run(args, params)
    write_table(run.path("bounds.csv"), ["variant", "m", "rho0", "tau", "prob_lower_bound"], bound_rows(params))
    run.finish()
    return 0


def _overrides(args):
    over = {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    for k in ("reps", "seed"):
        if getattr(args, k, None) is not None:
            over[k] = getattr(args, k)
    if args.config:
        over.update(load_kv(args.config))
    return over


def cmd_simulate(args):
    if args.experiment not in FIGURES:
        raise InputError(f"unknown experiment {args.experiment!r}; expected one of {sorted(FIGURES)}")
    over = _overrides(args)
    run = Run(args, {"experiment": args.experiment, **over})
    rows = run_figure_experiment(args.experiment, over, workers=args.workers)
    write_table(run.path(f"{args.experiment}.csv"), FIGURE_COLUMNS, rows)
    run.finish({"seed": apply_overrides(FIGURES[args.experiment], over).seed})
    return 0


def cmd_compare(args):
    over = _overrides(args)
    run = Run(args, {"experiment": "compare", **over})
    cc = compare_config_from(over)
    rows = run_comparison_experiment(cc, workers=args.workers)
    write_table(run.path("compare.csv"), COMPARE_COLUMNS, rows)
    run.finish({"seed": cc.seed})
    return 0


def fredmd_rows(panel, K: int, ms) -> list[list]:
    """``[m, r2_1..r2_K, var_explained_pca, var_explained_proximate, gen_corr_avg]`` per m."""
    fit = pca_fit(panel, K)
    ve_pca = variance_explained(panel, fit.factors)
    rows = []
    for m in ms:
        prox = proximate_fit(panel, fit, m)
        r2 = per_factor_r2(fit.factors, prox.factors)
        gc = generalized_correlation(fit.factors, prox.factors).total / K
        rows.append([m, *map(float, r2), ve_pca, variance_explained(panel, prox.factors), gc])
    return rows


def cmd_fredmd(args):
    eff = _merge(args, ["input", "K", "m", "missing"])
    run = Run(args, eff)
    if not eff.get("input"):
        raise InputError("--input is required")
    panel, _ = load_fred_md(eff["input"], missing=eff.get("missing") or "drop-unit")
    for line in panel.report:
        log.info(line)
    K = int(eff["K"])
    rows = fredmd_rows(panel, K, _ints(eff["m"]))
    header = ["m", *[f"r2_{k + 1}" for k in range(K)], "var_explained_pca", "var_explained_proximate",
              "gen_corr_avg"]
    write_table(run.path("fredmd_r2.csv"), header, rows)
    run.finish({"N": panel.N, "T": panel.T})
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxfactors", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or ./proxfactors_out)")
        if config:
            sp.add_argument("--config", help="key = value file; overrides flags")

    def panel_flags(sp):
        sp.add_argument("--input", help="CSV panel")
        sp.add_argument("--K", type=int)
        sp.add_argument("--standardize", choices=["none", "demean", "zscore"], default="none")
        sp.add_argument("--orientation", choices=["units-in-columns", "units-in-rows"], default="units-in-columns")
        sp.add_argument("--missing", choices=["drop-unit", "drop-time", "error"], default="drop-unit")

    sp = sub.add_parser("fit", help="PCA factors, loadings and eigenvalues")
    panel_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("proximate", help="sparse proximate factors")
    panel_flags(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--m", type=int)
    g.add_argument("--target-rho", dest="target_rho", type=float)
    sp.add_argument("--rotate", choices=["none", "varimax"], default="none")
    sp.add_argument("-c", dest="c", type=float)
    sp.add_argument("--variant", choices=["theory", "practical"], default="theory")
    sp.add_argument("--groups", help="CSV mapping unit id to group label")
    common(sp)
    sp.set_defaults(func=cmd_proximate)

    sp = sub.add_parser("bounds", help="probability lower bounds")
    sp.add_argument("params", help="key = value parameter file")
    common(sp, config=False)
    sp.set_defaults(func=cmd_bounds)

    for name, func, help_ in (("simulate", cmd_simulate, "figure experiments"),
                              ("compare", cmd_compare, "comparison with sparse PCA")):
        sp = sub.add_parser(name, help=help_)
        if name == "simulate":
            sp.add_argument("experiment", help=f"one of {', '.join(sorted(FIGURES))}")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("fredmd", help="FRED-MD replication table")
    sp.add_argument("--input", help="FRED-MD CSV (header, transform row, dated rows)")
    sp.add_argument("--K", type=int, default=8)
    sp.add_argument("--m", default="10,15,20,25")
    sp.add_argument("--missing", choices=["drop-unit", "drop-time", "error"], default="drop-unit")
    common(sp)
    sp.set_defaults(func=cmd_fredmd)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
