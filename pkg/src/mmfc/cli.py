"""Command-line interface: impute, pool, simulate, ppc, validate."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import __version__
from .density import bivariate_cells, marginal_cells
from .gibbs import ChainOptions, run_chain
from .model import Model, ModelConfig
from .pooling import cell_estimates, write_pooled_report
from .ppc import PPCStatistic, imputed_vs_observed, ppc_statistics, replicate_datasets
from .schema import DataValidationError, Dataset, load_dataset, load_schema, write_dataset
from .simstudy import Scenario, mmix_schemas, run_factorial, scenario_grid
from .schema import canonical_order


def _build_parser():
    parser = argparse.ArgumentParser(prog="mmfc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True, config=True):
        if data:
            p.add_argument("--data", required=True, help="input CSV (or directory for pool)")
            p.add_argument("--schema", required=True, help="schema JSON file")
        if config:
            p.add_argument("--config", help="model config JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", required=True, type=int, help="chain seed (no wall-clock default)")

    p_imp = sub.add_parser("impute", help="draw m completed datasets")
    add_common(p_imp)
    p_imp.add_argument("--m", type=int, default=10)
    p_imp.add_argument("--burn-in", type=int, default=20000)
    p_imp.add_argument("--thin", type=int, default=2000)
    p_imp.add_argument("--model", choices=["mmfc", "mmmix"], default="mmfc")

    p_pool = sub.add_parser("pool", help="pool cell estimates across imputations")
    p_pool.add_argument("--data", required=True, help="directory containing imp_<k>.csv files")
    p_pool.add_argument("--schema", required=True)
    p_pool.add_argument("--out", required=True)
    p_pool.add_argument("--seed", required=True, type=int)
    p_pool.add_argument("--level", type=float, default=0.95)

    p_sim = sub.add_parser("simulate", help="run the factorial simulation study")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", required=True, type=int)
    p_sim.add_argument("--scenario", default="high-few-small",
                       help="scenario name like high-few-small, or 'all'")
    p_sim.add_argument("--reps", type=int, default=10)
    p_sim.add_argument("--m", type=int, default=5)
    p_sim.add_argument("--burn-in", type=int, default=2000)
    p_sim.add_argument("--thin", type=int, default=200)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--models", default="mmfc,mmmix")
    p_sim.add_argument("--oracle-draws", type=int, default=1_000_000)

    p_ppc = sub.add_parser("ppc", help="posterior predictive checks")
    add_common(p_ppc)
    p_ppc.add_argument("--m", type=int, default=10)
    p_ppc.add_argument("--burn-in", type=int, default=20000)
    p_ppc.add_argument("--thin", type=int, default=2000)
    p_ppc.add_argument("--replicates", type=int, default=25)
    p_ppc.add_argument("--model", choices=["mmfc", "mmmix"], default="mmfc")

    p_val = sub.add_parser("validate", help="validate schema, config, and data files")
    p_val.add_argument("--schema", required=True)
    p_val.add_argument("--data")
    p_val.add_argument("--config")
    return parser


def _write_manifest(out_dir, args, config):
    manifest = {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "options": {k: v for k, v in vars(args).items() if k != "command"},
        "config": config.to_dict() if config is not None else None,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_model_inputs(args):
    schemas = load_schema(args.schema)
    data = load_dataset(args.data, schemas)
    config = ModelConfig.load(args.config) if args.config else ModelConfig()
    if getattr(args, "model", "mmfc") == "mmmix":
        data = Dataset(mmix_schemas(data.schemas), data.values, data.mask)
        data = data.reordered(canonical_order(data.schemas))
    return data, config


def _cmd_impute(args):
    data, config = _load_model_inputs(args)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args, config)
    options = ChainOptions(burn_in=args.burn_in, thin=args.thin, m=args.m, seed=args.seed)
    record = run_chain(data, Model(data.schemas, config), options)
    for k, d in enumerate(record.imputations, start=1):
        write_dataset(d, os.path.join(args.out, f"imp_{k}.csv"))
    diag = {
        "seed": args.seed,
        "options": {"burn_in": args.burn_in, "thin": args.thin, "m": args.m, "model": args.model},
        "traces": record.diagnostics_dict(),
    }
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(diag, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_pool(args):
    schemas = load_schema(args.schema)
    paths = sorted(
        glob.glob(os.path.join(args.data, "imp_*.csv")),
        key=lambda p: int(os.path.basename(p)[4:-4]),
    )
    if len(paths) < 2:
        raise DataValidationError(f"{args.data}: need at least two imp_<k>.csv files")
    completed = [load_dataset(p, schemas) for p in paths]
    for d in completed:
        if not d.is_complete():
            raise DataValidationError("pool expects completed datasets without missing cells")
    cells = marginal_cells(completed[0].schemas) + bivariate_cells(completed[0].schemas)
    estimates = cell_estimates(completed, cells)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args, None)
    write_pooled_report(os.path.join(args.out, "pooled_estimates.csv"),
                        cells, completed[0].names, estimates, level=args.level)
    return 0


def _cmd_simulate(args):
    if args.scenario == "all":
        scenarios = scenario_grid()
    else:
        scenarios = [Scenario.from_name(args.scenario)]
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    run_factorial(
        scenarios, args.out, args.seed, models=models, reps=args.reps,
        m=args.m, burn_in=args.burn_in, thin=args.thin, threads=args.threads,
        oracle_draws=args.oracle_draws,
    )
    return 0


def _default_ppc_specs(schemas):
    specs = [PPCStatistic(cell=(pair[0],)) for pair in marginal_cells(schemas, nonredundant=False)]
    pairs = [(i, j) for i in range(min(3, len(schemas))) for j in range(i + 1, min(3, len(schemas)))]
    specs += [PPCStatistic(cell=cell) for cell in bivariate_cells(schemas, pairs)]
    return specs


def _cmd_ppc(args):
    data, config = _load_model_inputs(args)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args, config)
    options = ChainOptions(burn_in=args.burn_in, thin=args.thin, m=args.m,
                           seed=args.seed, ppc_snapshots=args.replicates)
    model = Model(data.schemas, config)
    record = run_chain(data, model, options)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 101]))
    reps = replicate_datasets(record, model, data.n, count=args.replicates, rng=rng)
    specs = _default_ppc_specs(data.schemas)
    report = ppc_statistics(reps, record.imputations, specs)
    report.save(os.path.join(args.out, "ppc.json"))
    with open(os.path.join(args.out, "replicate_statistics.csv"), "w") as fh:
        fh.write(",".join(["statistic"] + [f"rep_{k + 1}" for k in range(report.replicate_count)]) + "\n")
        for lab, vals in zip(report.labels, report.replicate_values):
            fh.write(",".join([lab] + [repr(v) for v in vals]) + "\n")
    with open(os.path.join(args.out, "imputed_vs_observed.json"), "w") as fh:
        json.dump(imputed_vs_observed(data, record.imputations), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_validate(args):
    schemas = load_schema(args.schema)
    print(f"schema: {len(schemas)} variables ok")
    config = None
    if args.config:
        config = ModelConfig.load(args.config)
        print("config: parsed ok")
    if args.data:
        data = load_dataset(args.data, schemas)
        print(f"data: {data.n} rows, {int(data.mask.sum())} missing cells ok")
        if config is not None:
            Model(data.schemas, config)
            print("config: consistent with schema ok")
    elif config is not None:
        Model(schemas, config)
        print("config: consistent with schema ok")
    return 0


_COMMANDS = {
    "impute": _cmd_impute,
    "pool": _cmd_pool,
    "simulate": _cmd_simulate,
    "ppc": _cmd_ppc,
    "validate": _cmd_validate,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataValidationError, FileNotFoundError, ValueError, KeyError) as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": "runtime", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
