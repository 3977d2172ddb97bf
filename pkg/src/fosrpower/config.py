"""Flat key-value run configuration.

Configuration files are TOML documents with top-level keys only; every key
must appear in :data:`SCHEMA`.  Command-line flags override file values.
"""

import sys
from dataclasses import dataclass

from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Key:
    kind: str
    default: object
    help: str
    choices: tuple = None


SCHEMA = {
    # run control
    "seed": Key("int", 0, "base seed for simulations and CMA draws"),
    "threads": Key("int", 1, "worker processes for power studies"),
    "alpha": Key("float", 0.05, "test level"),
    "out": Key("str", "out", "output directory"),
    # input data
    "functional_csv": Key("str", None, "wide (id, v_1..v_P) or long (id, s, value) functional CSV"),
    "covariate_csv": Key("str", None, "covariate CSV (id, X_1..X_Q)"),
    "covariates": Key("list_str", [], "covariate columns to use, in order (default all)"),
    "binary_covariates": Key("list_str", [], "columns that must be two-level and are coded 0/1"),
    "scores_csv": Key("str", None, "score CSV (id, score_1..score_L) for the rpcs subcommand"),
    "eigenfunctions_csv": Key("str", None, "eigenfunction CSV (s, phi_1..phi_L) for reconstructions"),
    # simulation
    "scenario": Key("str", "TM1", "data-generating mechanism", ("TM1", "TM2")),
    "n_subjects": Key("int", 300, "curves per dataset"),
    "n_points": Key("int", 101, "equally spaced grid points on [0, 1]"),
    "d": Key("float", 0.0, "effect size"),
    "w": Key("float", 0.0, "weight of the constant part of the effect"),
    "case": Key("int", 1, "TM2 case 1..6"),
    "lambda1": Key("float", 0.5, "TM1 score variance"),
    "sigma_eps": Key("float", 0.5, "measurement-error standard deviation"),
    "eigenvalues": Key("list_float", [1.0, 0.5, 0.25, 0.125], "TM2 score variances"),
    "intercept": Key("float", 0.0, "TM2 intercept"),
    # fpca
    "n_components": Key("int", None, "fixed number of principal components (default: pve rule)"),
    "pve": Key("float", 0.90, "cumulative variance threshold for choosing components"),
    "fpca_smoothing": Key("bool", False, "smooth the covariance before the eigendecomposition"),
    # rpcs
    "reconstruction_correction": Key("str", "none", "p-value filter for the significant-component reconstruction",
                                     ("none", "bonferroni")),
    # fosr
    "n_basis": Key("int", 30, "cubic B-spline basis size"),
    "fosr_max_iter": Key("int", 4, "maximum GLS refits"),
    "fosr_tol": Key("float", 1e-4, "relative coefficient change for convergence"),
    "fosr_pve": Key("float", 0.90, "variance threshold for the residual FPCA"),
    "fosr_n_components": Key("int", None, "fixed residual component count"),
    "fosr_fpca_smoothing": Key("bool", True, "smooth the residual covariance"),
    "reselect_smoothing": Key("bool", True, "re-run REML on the GLS problem at every refit"),
    "cma_draws": Key("int", 10000, "Gaussian draws for the simultaneous band"),
    "band_max_points": Key("int", 300, "bands are computed on at most this many grid points"),
    # power
    "cases": Key("list_int", [1], "TM2 cases in a power study"),
    "d_values": Key("list_float", [0.0, 0.25, 0.5, 0.75, 1.0], "effect sizes in a power study"),
    "w_values": Key("list_float", [0.0, 0.5, 1.0], "weights in a power study"),
    "n_replicates": Key("int", 1000, "datasets per lattice cell"),
    "methods": Key("list_str", ["fosr", "rpcs_none", "rpcs_bonferroni"], "tests in a power study"),
    "rpcs_selection": Key("str", "matched", "score components for power studies: true count, pve rule or n_components",
                          ("matched", "pve", "fixed")),
}


def _check(name, key, value):
    kind = key.kind
    if value is None:
        return None
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        value = float(value)
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true or false, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
    elif kind.startswith("list_"):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        inner = Key(kind[5:], None, "")
        value = [_check(f"{name}[{i}]", inner, v) for i, v in enumerate(value)]
    if key.choices is not None and value not in key.choices:
        raise ConfigError(f"{name}: expected one of {key.choices}, got {value!r}")
    return value


def defaults():
    return {k: (list(v.default) if isinstance(v.default, list) else v.default) for k, v in SCHEMA.items()}


def validate(values):
    """Check names and types; returns a new dict with normalised values."""
    out = {}
    for name, value in values.items():
        if isinstance(value, dict):
            raise ConfigError(f"{name}: nested tables are not allowed; the configuration is flat")
        if name not in SCHEMA:
            raise ConfigError(f"unknown configuration key {name!r}")
        out[name] = _check(name, SCHEMA[name], value)
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (None values skipped)."""
    cfg = defaults()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg.update(validate(data))
    if overrides:
        cfg.update(validate({k: v for k, v in overrides.items() if v is not None}))
    return cfg


def describe():
    """Human-readable schema listing (used by ``--help``)."""
    lines = []
    for name, key in SCHEMA.items():
        extra = f" one of {', '.join(key.choices)};" if key.choices else ""
        lines.append(f"  {name} ({key.kind.replace('_', ' of ')}, default {key.default!r}):{extra} {key.help}")
    return "\n".join(lines)
