"""Command-line entry point: ``expectnn {simulate,fit,study,bounds,curve}``.

Every command echoes its resolved configuration (``resolved_config.json``
next to its outputs, and on stdout), so a run can be reproduced exactly
from the echo plus the input files. Failures exit nonzero with a single
``error[CODE]: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import core, io, pipeline
from .models import DEFAULT_Q_HIDDEN
from .optim import OptimOptions
from .pipeline import LAMBDA_GRID, DEFAULT_TAUS, SplitSpec, StudyConfig
from .simgen import SCENARIOS, SIM2_KINDS, SimulationSpec, simulate

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4
EXIT_BOUNDS = 5
EXIT_STUDY = 6

log = logging.getLogger("expectnn")


class CommandError(Exception):
    def __init__(self, code: str, status: int, message: str):
        super().__init__(message)
        self.code = code
        self.status = status


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _words(text):
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _add_sim_flags(p):
    p.add_argument("--scenario", choices=SCENARIOS + SIM2_KINDS, required=False, help="simulation scenario")
    p.add_argument("--n", type=int, default=500, help="number of samples")
    p.add_argument("--p", type=int, default=50, help="number of SNPs (ignored by gene_gene)")
    p.add_argument("--maf-lo", type=float, default=0.05, help="lower bound of the MAF range")
    p.add_argument("--maf-hi", type=float, default=0.5, help="upper bound of the MAF range")
    p.add_argument("--interaction-fraction", type=float, default=0.2, help="fraction of SNPs that interact")
    p.add_argument("--snps-per-gene", type=int, default=4, help="SNPs per gene in the gene_gene scenario")


def _add_model_flags(p):
    p.add_argument("--taus", default=",".join(str(t) for t in DEFAULT_TAUS), help="comma-separated expectile levels")
    p.add_argument("--lambda-grid", default=",".join(str(v) for v in LAMBDA_GRID), help="comma-separated penalty grid")
    p.add_argument("--q-hidden", type=int, default=DEFAULT_Q_HIDDEN, help="hidden nodes of a fully connected ENN")
    p.add_argument("--q-per-gene", type=int, default=2, help="hidden nodes per gene for gene-masked ENNs")
    p.add_argument("--hidden-act", default="relu", choices=("relu", "sigmoid", "tanh", "identity"))
    p.add_argument("--output-act", default="identity", choices=("relu", "sigmoid", "tanh", "identity"))
    p.add_argument("--standardize", action="store_true", default=False, help="standardise inputs using training statistics")
    p.add_argument("--split-ratios", default="3,1,1", help="train,validation,test ratios")
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--rel-obj-tol", type=float, default=1e-9)
    p.add_argument("--n-starts", type=int, default=10)
    p.add_argument("--warmup-iters", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expectnn", description="Expectile regression and expectile neural networks.")
    parser.add_argument("--config", help="JSON file of flag values (keys use snake_case); explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset CSV")
    _add_sim_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=False, help="output CSV path")

    p = sub.add_parser("fit", help="split a dataset, search the penalty and report test MSE per tau")
    p.add_argument("--data", required=False, help="dataset CSV")
    p.add_argument("--gene-map", help="gene sidecar CSV (defaults to <stem>.genes.csv when present)")
    p.add_argument("--method", choices=pipeline.METHODS, default="enn")
    _add_model_flags(p)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="optimiser seed for the U[-1,1] starts")
    p.add_argument("--out", required=False, help="output directory")

    p = sub.add_parser("study", help="Monte Carlo replicate study on a simulated scenario")
    _add_sim_flags(p)
    _add_model_flags(p)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--full-scale", action="store_true", help="use 1000 replicates")
    p.add_argument("--methods", default="er,enn", help="comma-separated subset of " + ",".join(pipeline.METHODS))
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers; output does not depend on it")
    p.add_argument("--out", required=False, help="output directory")

    p = sub.add_parser("bounds", help="run the excess-risk sandwich checks on random instances")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taus", default=",".join(str(t) for t in core.BOUNDS_TAUS))
    p.add_argument("--out", help="optional JSON report path")

    p = sub.add_parser("curve", help="ranked fitted expectiles of a model on a dataset")
    p.add_argument("--model", required=False)
    p.add_argument("--data", required=False)
    p.add_argument("--out", required=False, help="output CSV path")
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise CommandError("E_USAGE", EXIT_USAGE, "missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _sim_spec(args, seed) -> SimulationSpec:
    try:
        return SimulationSpec(args.scenario, args.n, args.p, (args.maf_lo, args.maf_hi), args.interaction_fraction,
                              seed, args.snps_per_gene)
    except ValueError as exc:
        raise CommandError("E_SPEC", EXIT_USAGE, str(exc)) from None


def _options(args, seed) -> OptimOptions:
    try:
        return OptimOptions(args.max_iters, args.grad_tol, args.rel_obj_tol, n_starts=args.n_starts,
                            warmup_iters=args.warmup_iters, seed=seed)
    except ValueError as exc:
        raise CommandError("E_SPEC", EXIT_USAGE, str(exc)) from None


def _study_config(args, seed=0) -> StudyConfig:
    ratios = tuple(_floats(args.split_ratios))
    if len(ratios) != 3:
        raise CommandError("E_SPEC", EXIT_USAGE, "--split-ratios needs three values")
    return StudyConfig(args.q_hidden, args.q_per_gene, args.hidden_act, args.output_act, tuple(_floats(args.lambda_grid)),
                       ratios, bool(args.standardize), _options(args, seed))


def _taus(args):
    try:
        return tuple(core.as_level(t).tau for t in _floats(args.taus))
    except ValueError as exc:
        raise CommandError("E_SPEC", EXIT_USAGE, str(exc)) from None


def _resolved(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    return d


def _echo(args, path=None):
    text = io.dumps(_resolved(args))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_simulate(args):
    _require(args, "scenario", "out")
    spec = _sim_spec(args, args.seed)
    data = simulate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_dataset(data, out)
    _echo(args, out.with_name(out.stem + ".config.json"))


def cmd_fit(args):
    _require(args, "data", "out")
    try:
        data = io.read_dataset(args.data, args.gene_map)
    except (OSError, io.DataFormatError) as exc:
        raise CommandError("E_DATA", EXIT_DATA, str(exc)) from None
    taus = _taus(args)
    config = _study_config(args)
    try:
        train, val, test = pipeline.split(data, SplitSpec(config.ratios, args.split_seed))
        arch = pipeline.method_arch(args.method, data, config)
    except ValueError as exc:
        raise CommandError("E_DATA", EXIT_DATA, str(exc)) from None
    kind = "er" if args.method == "er" else "enn"
    reports = []
    for i, tau in enumerate(taus):
        opts = _options(args, pipeline._fit_seed(args.seed, args.method, i))
        try:
            rep = pipeline.fit_with_lambda_search(kind, arch, train, val, tau, config.grid, opts, config.standardize, test)
        except pipeline.FitError as exc:
            raise CommandError("E_FIT", EXIT_FIT, str(exc)) from None
        rep.method = args.method
        reports.append(rep)
        log.info("tau=%g lambda=%g test MSE=%.6g", tau, rep.chosen_lambda, rep.mse_test)
    out = Path(args.out)
    io.write_fit_reports(reports, out, Path(args.data).stem)
    _echo(args, out / "resolved_config.json")


def cmd_study(args):
    _require(args, "scenario", "out")
    if args.full_scale:
        args.replicates = 1000
    spec = _sim_spec(args, 0)
    taus = _taus(args)
    methods = _words(args.methods)
    config = _study_config(args)
    t0 = time.perf_counter()
    try:
        report = pipeline.run_study(spec, args.replicates, taus, methods, args.base_seed, config, args.jobs)
    except pipeline.StudyError as exc:
        raise CommandError("E_STUDY", EXIT_STUDY, str(exc)) from None
    except ValueError as exc:
        raise CommandError("E_SPEC", EXIT_USAGE, str(exc)) from None
    log.info("study finished in %.1fs", time.perf_counter() - t0)
    out = Path(args.out)
    io.write_study(report, out)
    _echo(args, out / "resolved_config.json")


def cmd_bounds(args):
    if args.trials < 1:
        raise CommandError("E_USAGE", EXIT_USAGE, "--trials must be at least 1")
    summary = core.bounds_suite(args.trials, args.seed, _taus(args))
    # the report's own path stays out of it so reruns elsewhere compare equal
    config = {k: v for k, v in _resolved(args).items() if k != "out"}
    doc = io._clean({"config": config, "report": summary})
    if args.out:
        io.write_json(doc, args.out)
    sys.stdout.write(io.dumps(doc))
    if not summary["ok"]:
        raise CommandError("E_BOUNDS", EXIT_BOUNDS,
                           f"sandwich violated: lemma1 {summary['lemma1_passed']}/{args.trials}, "
                           f"theorem1 {summary['theorem1_passed']}/{args.trials}")


def cmd_curve(args):
    _require(args, "model", "data", "out")
    try:
        model = io.load_model(args.model)
        data = io.read_dataset(args.data)
    except (OSError, io.DataFormatError) as exc:
        raise CommandError("E_DATA", EXIT_DATA, str(exc)) from None
    try:
        curve = pipeline.ranked_expectile_curve(model, data)
    except ValueError as exc:
        raise CommandError("E_SHAPE", EXIT_DATA, str(exc)) from None
    io.write_curve(curve, args.out)
    _echo(args, Path(args.out).with_name(Path(args.out).stem + ".config.json"))


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "study": cmd_study, "bounds": cmd_bounds, "curve": cmd_curve}


def _config_defaults(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CommandError("E_CONFIG", EXIT_USAGE, f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise CommandError("E_CONFIG", EXIT_USAGE, "config file must hold a JSON object")
    for key in ("taus", "lambda_grid", "methods", "split_ratios"):
        if isinstance(cfg.get(key), list):
            cfg[key] = ",".join(str(v) for v in cfg[key])
    return cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
        if defaults:
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    sp.set_defaults(**defaults)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except CommandError as exc:
        sys.stderr.write(f"error[{exc.code}]: {exc}\n")
        return exc.status
    return 0


if __name__ == "__main__":
    sys.exit(main())
