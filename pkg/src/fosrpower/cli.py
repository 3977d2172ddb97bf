"""Command-line entry point: ``fosrpower <subcommand> [flags]``."""

import os

# Multithreaded BLAS may change summation order; pin it so output files do
# not depend on the machine.  Parallelism comes from --threads (processes).
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import csv  # noqa: E402
import sys  # noqa: E402

import numpy as np  # noqa: E402

from . import config as config_mod  # noqa: E402
from .data import FunctionalDataset  # noqa: E402
from .emit import write_dataset  # noqa: E402
from .exceptions import (  # noqa: E402
    FosrPowerError,
    IdMismatchError,
    IngestError,
    NonNumericError,
    RaggedRowError,
)
from .fpca import EigenSystem  # noqa: E402
from .ingest import DatasetManifest, ingest, read_covariates, unit_grid  # noqa: E402
from .powerlab import (  # noqa: E402
    TABLE_COLUMNS,
    PowerStudyConfig,
    plot_records,
    run_power_study,
    summarize,
)
from .report import (  # noqa: E402
    Report,
    analyze,
    fosr_options,
    fosr_stage,
    fpca_stage,
    reconstruction_stage,
    rpcs_stage,
)
from .synthgen import Tm1Config, Tm2Config, generate  # noqa: E402

COMMANDS = ("simulate", "fpca", "rpcs", "fosr", "power", "analyze")
MAX_SEED = 2**64


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _alpha(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("alpha must be in (0, 1)")
    return v


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="flat TOML configuration file")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory")
    parser.add_argument("--seed", type=_seed, default=d, help="base seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=_positive_int, default=d, help="worker processes")
    parser.add_argument("--alpha", type=_alpha, default=d, help="test level")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fosrpower",
        description="Score regression versus function-on-scalar regression for functional data.",
        epilog="configuration keys:\n" + config_mod.describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "simulate": "draw one synthetic dataset and write it as CSV",
        "fpca": "principal components of a dataset",
        "rpcs": "regress principal component scores on covariates",
        "fosr": "function-on-scalar regression with pointwise and simultaneous bands",
        "power": "Monte Carlo size and power over a (case, d, w) lattice",
        "analyze": "all of fpca, rpcs and fosr plus correlations and reconstructions",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        _global_flags(sp, suppress=True)
    return parser


def _manifest(cfg):
    if not cfg["functional_csv"] or not cfg["covariate_csv"]:
        raise config_mod.ConfigError("functional_csv and covariate_csv must be set")
    return DatasetManifest(cfg["functional_csv"], cfg["covariate_csv"],
                           tuple(cfg["covariates"]), tuple(cfg["binary_covariates"]))


def _generator_config(cfg):
    if cfg["scenario"] == "TM1":
        return Tm1Config(n_subjects=cfg["n_subjects"], n_points=cfg["n_points"], d=cfg["d"], w=cfg["w"],
                         lambda1=cfg["lambda1"], sigma_eps=cfg["sigma_eps"], seed=cfg["seed"])
    return Tm2Config(n_subjects=cfg["n_subjects"], n_points=cfg["n_points"], d=cfg["d"], w=cfg["w"],
                     case_id=cfg["case"], eigenvalues=tuple(cfg["eigenvalues"]),
                     sigma_eps=cfg["sigma_eps"], intercept=cfg["intercept"], seed=cfg["seed"])


def cmd_simulate(report):
    sim = generate(_generator_config(report.cfg))
    ds = sim.dataset
    write_dataset(ds, report.out_dir)
    report.files += ["functional.csv", "covariates.csv"]
    s = ds.grid.points
    cols = [b.values for b in sim.betas] + [f.values for f in sim.eigenfunctions]
    header = ["s"] + [f"beta_{q + 1}" for q in range(len(sim.betas))] + \
        [f"phi_{l + 1}" for l in range(len(sim.eigenfunctions))]
    report.csv("truth_functions.csv", header, ([s[j]] + [c[j] for c in cols] for j in range(s.size)))
    report.csv("truth_scores.csv", ["id"] + [f"xi_{l + 1}" for l in range(sim.scores.shape[1])],
               ([sid] + list(r) for sid, r in zip(ds.ids, sim.scores)))
    report.finish(ds)


def cmd_fpca(report):
    ds = ingest(_manifest(report.cfg))
    fpca_stage(report, ds)
    report.finish(ds)


def _read_matrix(path, first):
    """Numeric CSV with a leading key column named ``first``."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise IngestError(f"cannot read file: {exc.strerror}", path) from exc
    if not rows or rows[0][0].strip().lower() != first:
        raise IngestError(f"first column must be {first!r}", path, 1)
    keys, vals = [], []
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != len(rows[0]):
            raise RaggedRowError(f"expected {len(rows[0])} cells, found {len(r)}", path, line)
        keys.append(r[0].strip())
        try:
            vals.append([float(c) for c in r[1:]])
        except ValueError:
            raise NonNumericError("non-numeric cell", path, line) from None
    return keys, np.array(vals, dtype=float), [h.strip() for h in rows[0][1:]]


def _rpcs_from_scores(report):
    cfg = report.cfg
    if not cfg["covariate_csv"]:
        raise config_mod.ConfigError("covariate_csv must be set")
    sids, scores, _ = _read_matrix(cfg["scores_csv"], "id")
    cids, X, names, enc = read_covariates(cfg["covariate_csv"], tuple(cfg["covariates"]),
                                          tuple(cfg["binary_covariates"]))
    unmatched = sorted(set(sids) ^ set(cids))
    if unmatched:
        raise IdMismatchError(f"id {unmatched[0]!r} is not in both files", cfg["covariate_csv"])
    pos = {k: i for i, k in enumerate(cids)}
    X = X[[pos[k] for k in sids]]
    rfit = rpcs_stage(report, scores, X, names)
    if not cfg["eigenfunctions_csv"] or rfit is None:
        return
    s_keys, table, cols = _read_matrix(cfg["eigenfunctions_csv"], "s")
    phi_cols = [j for j, c in enumerate(cols) if c.startswith("phi_")]
    if len(phi_cols) != scores.shape[1]:
        raise IngestError("eigenfunction and score files disagree on the component count",
                          cfg["eigenfunctions_csv"])
    grid, offset, scale = unit_grid([float(v) for v in s_keys])
    L = len(phi_cols)
    system = EigenSystem(grid, np.zeros(grid.size), table[:, phi_cols], np.ones(L), scores, np.ones(L), 0.0)
    # curves are not needed for reconstructions; the shell carries grid and covariates
    shell = FunctionalDataset(grid, np.zeros((X.shape[0], grid.size)), X, ids=tuple(sids),
                              covariate_names=names, grid_offset=offset, grid_scale=scale,
                              covariate_encodings=enc)
    reconstruction_stage(report, shell, None, rfit, system)


def cmd_rpcs(report):
    if report.cfg["scores_csv"]:
        _rpcs_from_scores(report)
        report.finish()
        return
    ds = ingest(_manifest(report.cfg))
    system = fpca_stage(report, ds)
    rfit = None
    if system is not None:
        rfit = rpcs_stage(report, system.scores, ds.X, ds.covariate_names)
    reconstruction_stage(report, ds, None, rfit, system)
    report.finish(ds)


def cmd_fosr(report):
    ds = ingest(_manifest(report.cfg))
    fosr_stage(report, ds)
    report.finish(ds)


def cmd_analyze(report):
    ds = ingest(_manifest(report.cfg))
    analyze(report, ds)
    report.finish(ds)


def power_config(cfg):
    sel = cfg["rpcs_selection"]
    if sel == "matched":
        nc = None
    elif sel == "pve":
        nc = "pve"
    else:
        if cfg["n_components"] is None:
            raise config_mod.ConfigError("rpcs_selection = 'fixed' needs n_components")
        nc = cfg["n_components"]
    return PowerStudyConfig(
        scenario=cfg["scenario"],
        cases=tuple(cfg["cases"]),
        d_values=tuple(cfg["d_values"]),
        w_values=tuple(cfg["w_values"]),
        n_replicates=cfg["n_replicates"],
        alpha=cfg["alpha"],
        n_subjects=cfg["n_subjects"],
        n_points=cfg["n_points"],
        sigma_eps=cfg["sigma_eps"],
        lambda1=cfg["lambda1"],
        eigenvalues=tuple(cfg["eigenvalues"]),
        methods=tuple(cfg["methods"]),
        base_seed=cfg["seed"],
        n_jobs=cfg["threads"],
        n_components=nc,
        pve=cfg["pve"],
        cma_draws=cfg["cma_draws"],
        fosr_options=fosr_options(cfg),
    )


def cmd_power(report):
    study = power_config(report.cfg)
    table = run_power_study(study)
    report.csv("power_table.csv", TABLE_COLUMNS, ([rec[c] for c in TABLE_COLUMNS] for rec in table.to_records()))
    recs = plot_records(table)
    plot_cols = ("curve", "scenario", "case", "w", "method", "target", "x", "power", "lower", "upper")
    report.csv("power_plot_data.csv", plot_cols, ([r[c] for c in plot_cols] for r in recs))
    summ = summarize(table)
    report.csv("power_summary.csv", ("scenario", "case", "w", "method", "target", "d", "power", "mc_se", "dip"),
               (list(r.key) + [r.power, r.mc_se, r.dip] for r in summ))
    report.extra["failures_per_cell"] = sum(r.failures for r in table)
    report.finish()


HANDLERS = {
    "simulate": cmd_simulate,
    "fpca": cmd_fpca,
    "rpcs": cmd_rpcs,
    "fosr": cmd_fosr,
    "power": cmd_power,
    "analyze": cmd_analyze,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        overrides = {k: getattr(args, k, None) for k in ("out", "seed", "threads", "alpha")}
        cfg = config_mod.load_config(args.config, overrides)
        report = Report(cfg["out"], args.command, cfg)
        HANDLERS[args.command](report)
    except config_mod.ConfigError as exc:
        print(f"fosrpower: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FosrPowerError, OSError) as exc:
        print(f"fosrpower: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
