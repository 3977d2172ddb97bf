"""Analysis stages and their fixed output-file layout.

Each stage writes its files even when it fails: a failed stage leaves
header-only CSVs and a ``failures`` entry in ``run_metadata.json``.
"""

import os
import platform
import warnings
from importlib import metadata as importlib_metadata

import numpy as np
import scipy

from .emit import ensure_dir, safe_name, write_csv, write_json
from .exceptions import DegenerateFunctionError, FosrPowerError
from .fosr import ConvergenceWarning, FoSROptions, cma_band, fit_fosr
from .fpca import fit_fpca
from .fungrid import l2_correlation
from .rpcs import reconstruct_effect, rpcs_joint_test, rpcs_regress

BAND_HEADER = ("s", "estimate", "pw_lo", "pw_hi", "cma_lo", "cma_hi")
RECON_HEADER = ("s", "fosr", "rpcs_all", "rpcs_significant")
RPCS_HEADER = ("component", "term", "slope", "se", "t", "p")
_NOT_ECHOED = ("out", "threads")


def derived_seed(seed, *keys):
    """A 63-bit seed derived from ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def package_version():
    try:
        return importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


class Report:
    """Collects output files and stage failures for one CLI run."""

    def __init__(self, out_dir, command, cfg):
        self.out_dir = ensure_dir(out_dir)
        self.command = command
        self.cfg = cfg
        self.files = []
        self.failures = {}
        self.warnings = {}
        self.extra = {}

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def csv(self, name, header, rows=()):
        return write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        return write_json(self.path(name), obj)

    def fail(self, stage, exc):
        self.failures[stage] = f"{type(exc).__name__}: {exc}"

    def finish(self, dataset=None):
        meta = {
            "command": self.command,
            "config": {k: v for k, v in sorted(self.cfg.items()) if k not in _NOT_ECHOED},
            "seed": self.cfg["seed"],
            "alpha": self.cfg["alpha"],
            "versions": {
                "package": package_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "files": sorted(set(self.files) | {"run_metadata.json"}),
            "failures": self.failures,
        }
        if self.warnings:
            meta["warnings"] = self.warnings
        if dataset is not None:
            meta["dataset"] = {
                "n_subjects": dataset.n_subjects,
                "n_points": dataset.n_points,
                "grid_offset": dataset.grid_offset,
                "grid_scale": dataset.grid_scale,
                "grid_points": dataset.original_points(),
                "covariates": list(dataset.covariate_names),
                "covariate_encodings": dataset.covariate_encodings,
            }
        meta.update(self.extra)
        write_json(os.path.join(self.out_dir, "run_metadata.json"), meta)
        return meta


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def fpca_stage(report, dataset):
    cfg = report.cfg
    s = dataset.original_points()
    try:
        system = fit_fpca(dataset, n_components=cfg["n_components"], pve=cfg["pve"],
                          smoothing=cfg["fpca_smoothing"])
    except (FosrPowerError, np.linalg.LinAlgError) as exc:
        report.fail("fpca", exc)
        report.csv("fpca_eigenvalues.csv", ("component", "eigenvalue", "pve"))
        report.csv("fpca_eigenfunctions.csv", ("s",))
        report.csv("fpca_scores.csv", ("id",))
        return None
    L = system.n_components
    names = [f"phi_{l + 1}" for l in range(L)]
    report.csv("fpca_eigenvalues.csv", ("component", "eigenvalue", "pve"),
               ((l + 1, system.eigenvalues[l], system.pve[l]) for l in range(L)))
    report.csv("fpca_eigenfunctions.csv", ["s", "mean"] + names,
               ([s[j], system.mean[j]] + list(system.eigenfunctions[j]) for j in range(s.size)))
    report.csv("fpca_scores.csv", ["id"] + [f"score_{l + 1}" for l in range(L)],
               ([sid] + list(row) for sid, row in zip(dataset.ids, system.scores)))
    report.extra["fpca"] = {
        "n_components": L,
        "residual_variance": system.residual_variance,
        "smoothing_parameter": system.smoothing_parameter,
    }
    return system


def rpcs_stage(report, scores, X, names):
    """Score regressions and joint tests under both corrections."""
    alpha = report.cfg["alpha"]
    try:
        fit = rpcs_regress(scores, X, names)
    except (FosrPowerError, np.linalg.LinAlgError, ValueError) as exc:
        report.fail("rpcs", exc)
        report.csv("rpcs_fit.csv", RPCS_HEADER)
        report.json("rpcs_joint_tests.json", {})
        return None
    terms = ("intercept",) + tuple(names)
    rows = []
    for l in range(fit.n_components):
        for j, term in enumerate(terms):
            rows.append((l + 1, term, fit.slopes[l, j], fit.standard_errors[l, j],
                         fit.t_statistics[l, j], fit.p_values[l, j]))
    report.csv("rpcs_fit.csv", RPCS_HEADER, rows)
    joint = {}
    for q, name in enumerate(names, start=1):
        joint[name] = {}
        for corr in ("none", "bonferroni"):
            res = rpcs_joint_test(fit, q, alpha, corr)
            joint[name][corr] = {
                "component_p_values": list(res.component_p_values),
                "global_p": res.global_p,
                "reject": res.reject,
            }
    report.json("rpcs_joint_tests.json", {"alpha": alpha, "tests": joint})
    return fit


def fosr_options(cfg):
    return FoSROptions(
        n_basis=cfg["n_basis"],
        n_components=cfg["fosr_n_components"],
        pve=cfg["fosr_pve"],
        fpca_smoothing=cfg["fosr_fpca_smoothing"],
        max_iter=cfg["fosr_max_iter"],
        tol=cfg["fosr_tol"],
        reselect_smoothing=cfg["reselect_smoothing"],
        band_max_points=cfg["band_max_points"],
    )


def fosr_stage(report, dataset):
    """FoSR fit, bands per covariate and the global test summary."""
    cfg = report.cfg
    names = dataset.covariate_names
    fit = None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            fit = fit_fosr(dataset, options=fosr_options(cfg))
        notes = [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]
        if notes:
            report.warnings["fosr"] = notes
    except (FosrPowerError, np.linalg.LinAlgError) as exc:
        report.fail("fosr", exc)
    tests = {}
    bands = {}
    for q, name in enumerate(names, start=1):
        fname = f"fosr_bands_{safe_name(name)}.csv"
        if fit is None:
            report.csv(fname, BAND_HEADER)
            tests[name] = None
            continue
        band = cma_band(fit, q, cfg["alpha"], cfg["cma_draws"], derived_seed(cfg["seed"], q))
        s_orig = dataset.grid_offset + dataset.grid_scale * band.points
        report.csv(fname, BAND_HEADER, zip(s_orig, band.estimate, band.pw_lower, band.pw_upper,
                                           band.cma_lower, band.cma_upper))
        bands[name] = band
        tests[name] = {
            "global_p": band.global_p,
            "reject": bool(band.global_p < cfg["alpha"]),
            "statistic": band.statistic,
            "cma_multiplier": band.cma_multiplier,
            "pointwise_multiplier": band.pointwise_multiplier,
            "band_points": int(band.points.size),
            "subgrid": band.subgrid,
        }
    summary = {"alpha": cfg["alpha"], "cma_draws": cfg["cma_draws"], "tests": tests}
    if fit is not None:
        summary["variance_components"] = fit.variance_components
        summary["convergence"] = {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "deltas": list(fit.deltas),
        }
        summary["smoothing_parameters"] = dict(zip(fit.covariate_names, fit.smoothing_parameters.tolist()))
        summary["gls_smoothing_parameters"] = dict(
            zip(fit.covariate_names, fit.diagnostics["gls_smoothing_parameters"]))
    report.json("fosr_global.json", summary)
    return fit, bands


def correlation_stage(report, fit, system, names):
    L = 0 if system is None else system.n_components
    header = ["covariate"] + [f"PC{l + 1}" for l in range(L)]
    rows = []
    if fit is not None and system is not None:
        for q, name in enumerate(names, start=1):
            row = [name]
            beta = fit.coefficient_functions[q]
            for l in range(L):
                try:
                    row.append(l2_correlation(beta, system.eigenfunction(l + 1)))
                except DegenerateFunctionError:
                    row.append(float("nan"))
            rows.append(row)
    report.csv("correlations.csv", header, rows)
    return rows


def reconstruction_stage(report, dataset, fosr_fit, rfit, system):
    cfg = report.cfg
    s = dataset.original_points()
    P = s.size
    nan = np.full(P, np.nan)
    summary = {}
    for q, name in enumerate(dataset.covariate_names, start=1):
        fosr_vals = nan if fosr_fit is None else fosr_fit.coefficient_functions[q].values
        if rfit is not None and system is not None:
            all_ = reconstruct_effect(rfit, system, q, "all", cfg["alpha"])
            sig = reconstruct_effect(rfit, system, q, "significant", cfg["alpha"],
                                     cfg["reconstruction_correction"])
            all_vals, sig_vals = all_.function.values, sig.function.values
            summary[name] = {"significant_components": list(sig.components),
                             "empty_selection": sig.empty_selection}
        else:
            all_vals = sig_vals = nan
            summary[name] = None
        report.csv(f"reconstruction_{safe_name(name)}.csv", RECON_HEADER,
                   zip(s, fosr_vals, all_vals, sig_vals))
    report.extra["reconstruction"] = summary
    return summary


def analyze(report, dataset):
    """Run every stage on ``dataset``; returns the fitted objects."""
    system = fpca_stage(report, dataset)
    rfit = None
    if system is not None:
        rfit = rpcs_stage(report, system.scores, dataset.X, dataset.covariate_names)
    else:
        rpcs_stage_failed(report)
    fosr_fit, bands = fosr_stage(report, dataset)
    correlation_stage(report, fosr_fit, system, dataset.covariate_names)
    reconstruction_stage(report, dataset, fosr_fit, rfit, system)
    return {"fpca": system, "rpcs": rfit, "fosr": fosr_fit, "bands": bands}


def rpcs_stage_failed(report):
    report.fail("rpcs", FosrPowerError("skipped because the FPCA stage failed"))
    report.csv("rpcs_fit.csv", RPCS_HEADER)
    report.json("rpcs_joint_tests.json", {})
