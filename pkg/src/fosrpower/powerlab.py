"""Monte Carlo size and power of the score-regression and FoSR tests.

A study sweeps a lattice of (case, d, w) cells.  Every replicate draws its
data from the stream ``(base_seed, cell_key, replicate)`` so results do not
depend on the order or the number of worker processes.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .exceptions import ConfigError, FosrPowerError
from .fosr import FoSROptions, fit_fosr, fosr_global_test
from .fpca import fit_fpca
from .rpcs import rpcs_joint_test, rpcs_regress
from .synthgen import (
    DEFAULT_EIGENVALUES,
    DEFAULT_LAMBDA1,
    DEFAULT_N_POINTS,
    DEFAULT_N_SUBJECTS,
    DEFAULT_SIGMA_EPS,
    TM2_CASES,
    Tm1Config,
    Tm2Config,
    generate,
)

METHODS = ("fosr", "rpcs_none", "rpcs_bonferroni")
SCENARIOS = ("TM1", "TM2")
TABLE_COLUMNS = (
    "scenario", "case", "d", "w", "method", "target", "rejections", "failures",
    "n_replicates", "n_valid", "power", "mc_se",
)


@dataclass(frozen=True)
class PowerStudyConfig:
    """Lattice and settings of a power study.

    ``n_components`` fixes the number of score components used by the
    score-regression pipeline; ``None`` means the true count of the
    scenario (1 for TM1, 4 for TM2).  ``pve`` switches to automatic
    selection when ``n_components`` is ``"pve"``.
    """

    scenario: str = "TM1"
    cases: tuple = (1,)
    d_values: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    w_values: tuple = (0.0, 0.5, 1.0)
    n_replicates: int = 1000
    alpha: float = 0.05
    n_subjects: int = DEFAULT_N_SUBJECTS
    n_points: int = DEFAULT_N_POINTS
    sigma_eps: float = DEFAULT_SIGMA_EPS
    lambda1: float = DEFAULT_LAMBDA1
    eigenvalues: tuple = DEFAULT_EIGENVALUES
    methods: tuple = METHODS
    base_seed: int = 0
    n_jobs: int = 1
    n_components: object = None
    pve: float = 0.90
    cma_draws: int = 10000
    fosr_options: FoSROptions = field(default_factory=FoSROptions)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if int(self.n_replicates) < 1:
            raise ConfigError("n_replicates must be >= 1")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        for name in ("cases", "d_values", "w_values", "methods"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ConfigError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.scenario == "TM2":
            bad = [c for c in self.cases if c not in TM2_CASES]
            if bad:
                raise ConfigError(f"unknown TM2 cases {bad}")
        else:
            object.__setattr__(self, "cases", (0,))
        if int(self.n_jobs) < 1:
            raise ConfigError("n_jobs must be >= 1")
        nc = self.n_components
        if nc is not None and nc != "pve" and int(nc) < 1:
            raise ConfigError("n_components must be a positive integer, 'pve' or unset")

    @property
    def n_targets(self):
        return 1 if self.scenario == "TM1" else 2

    def cells(self):
        """Lattice cells as ``(case, d, w)`` in table order."""
        return [(int(c), float(d), float(w))
                for c, d, w in product(self.cases, self.d_values, self.w_values)]


def _generator_config(cfg, case, d, w):
    if cfg.scenario == "TM1":
        return Tm1Config(n_subjects=cfg.n_subjects, n_points=cfg.n_points, d=d, w=w,
                         lambda1=cfg.lambda1, sigma_eps=cfg.sigma_eps)
    return Tm2Config(n_subjects=cfg.n_subjects, n_points=cfg.n_points, d=d, w=w, case_id=case,
                     eigenvalues=cfg.eigenvalues, sigma_eps=cfg.sigma_eps)


def replicate_stream(base_seed, case, d, w, index):
    """Generator for one replicate of one lattice cell.

    Common random numbers: the stream depends on the case and replicate
    but not on (d, w), so neighbouring cells share covariates, scores and
    noise and their power difference has a small Monte Carlo error.
    """
    del d, w
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(case), int(index)]))


def _rpcs_components(cfg):
    if cfg.n_components == "pve":
        return None
    if cfg.n_components is None:
        return 1 if cfg.scenario == "TM1" else 4
    return int(cfg.n_components)


def run_replicate(cfg, case, d, w, index):
    """Reject flags for one simulated dataset.

    Returns a dict ``{(method, target): True | False | None}`` where
    ``target`` is the 1-based covariate index and ``None`` marks a failed
    or non-converged fit.
    """
    sim = generate(_generator_config(cfg, case, d, w),
                   rng=replicate_stream(cfg.base_seed, case, d, w, index))
    data = sim.dataset
    Q = data.n_covariates
    out = {}
    if "fosr" in cfg.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_fosr(data, options=cfg.fosr_options)
            ok = fit.converged
        except (FosrPowerError, np.linalg.LinAlgError, ValueError):
            ok = False
        for q in range(1, Q + 1):
            if ok:
                seed = int(np.random.SeedSequence([int(cfg.base_seed), int(case), int(index), q])
                           .generate_state(1)[0])
                res = fosr_global_test(fit, q, cfg.alpha, seed=seed, n_draws=cfg.cma_draws)
                out[("fosr", q)] = res.reject
            else:
                out[("fosr", q)] = None
    rpcs_methods = [m for m in cfg.methods if m.startswith("rpcs_")]
    if rpcs_methods:
        try:
            system = fit_fpca(data, n_components=_rpcs_components(cfg), pve=cfg.pve)
            rfit = rpcs_regress(system.scores, data.X)
        except (FosrPowerError, np.linalg.LinAlgError, ValueError):
            rfit = None
        for m in rpcs_methods:
            corr = m.split("_", 1)[1]
            for q in range(1, Q + 1):
                out[(m, q)] = None if rfit is None else rpcs_joint_test(rfit, q, cfg.alpha, corr).reject
    return out


@dataclass(frozen=True)
class PowerRow:
    scenario: str
    case: int
    d: float
    w: float
    method: str
    target: int
    rejections: int
    failures: int
    n_replicates: int

    @property
    def n_valid(self):
        return self.n_replicates - self.failures

    @property
    def power(self):
        return self.rejections / self.n_valid if self.n_valid else float("nan")

    @property
    def mc_se(self):
        p = self.power
        return math.sqrt(p * (1.0 - p) / self.n_valid) if self.n_valid else float("nan")

    def as_dict(self):
        return {c: getattr(self, c) for c in TABLE_COLUMNS}


class PowerTable:
    """Long-format power results, one row per (cell, method, target)."""

    def __init__(self, rows):
        self.rows = tuple(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, PowerTable) and self.rows == other.rows

    def select(self, **criteria):
        keep = []
        for r in self.rows:
            if all(_matches(getattr(r, k), v) for k, v in criteria.items()):
                keep.append(r)
        return PowerTable(keep)

    def one(self, **criteria):
        sub = self.select(**criteria)
        if len(sub) != 1:
            raise KeyError(f"{len(sub)} rows match {criteria}")
        return sub.rows[0]

    def to_records(self):
        return [r.as_dict() for r in self.rows]


def _matches(value, wanted):
    if isinstance(value, float):
        return math.isclose(value, float(wanted), rel_tol=0.0, abs_tol=1e-12)
    return value == wanted


def _run_cell(args):
    cfg, case, d, w = args
    flags = [run_replicate(cfg, case, d, w, i) for i in range(cfg.n_replicates)]
    rows = []
    for m in cfg.methods:
        for q in range(1, cfg.n_targets + 1):
            vals = [f[(m, q)] for f in flags]
            fails = sum(v is None for v in vals)
            rej = sum(v is True for v in vals)
            rows.append(PowerRow(cfg.scenario, case, d, w, m, q, rej, fails, cfg.n_replicates))
    return rows


def run_power_study(cfg, progress=None):
    """Sweep the lattice of ``cfg`` and return a :class:`PowerTable`.

    Cells run in a process pool when ``cfg.n_jobs > 1``; the result is
    identical to the serial run.
    """
    tasks = [(cfg, c, d, w) for c, d, w in cfg.cells()]
    rows = []
    if cfg.n_jobs == 1 or len(tasks) == 1:
        for t in tasks:
            rows.extend(_run_cell(t))
            if progress is not None:
                progress(t[1:])
    else:
        with ProcessPoolExecutor(max_workers=int(cfg.n_jobs)) as pool:
            for t, cell_rows in zip(tasks, pool.map(_run_cell, tasks)):
                rows.extend(cell_rows)
                if progress is not None:
                    progress(t[1:])
    return PowerTable(rows)


GROUP_KEYS = ("scenario", "case", "d", "w", "method", "target")


@dataclass(frozen=True)
class SummaryRow:
    key: tuple
    power: float
    mc_se: float
    n_rows: int
    dip: bool = False


def summarize(table, by=("scenario", "case", "w", "method", "target"), along="d", n_se=2.0):
    """Average power within groups and flag non-monotone runs along ``along``.

    Rows sharing every key in ``by`` and the same ``along`` value are
    pooled.  Within each ``by`` group the pooled powers are ordered by
    ``along``; a step is flagged when power drops by more than ``n_se``
    joint Monte Carlo standard errors.
    """
    by = tuple(by)
    for k in by + (along,):
        if k not in GROUP_KEYS:
            raise KeyError(f"unknown grouping key {k!r}; expected one of {GROUP_KEYS}")
    if len(table) == 0:
        raise ValueError("cannot summarize an empty table")
    if along in by:
        raise ValueError("the monotonicity axis cannot also be a grouping key")
    pooled = {}
    for r in table:
        key = tuple(getattr(r, k) for k in by) + (getattr(r, along),)
        rej, n, count = pooled.get(key, (0, 0, 0))
        pooled[key] = (rej + r.rejections, n + r.n_valid, count + 1)
    out = []
    groups = {}
    for key in sorted(pooled):
        groups.setdefault(key[:-1], []).append(key)
    for gkey, keys in groups.items():
        prev = None
        for key in keys:
            rej, n, count = pooled[key]
            p = rej / n if n else float("nan")
            se = math.sqrt(p * (1 - p) / n) if n else float("nan")
            dip = False
            if prev is not None:
                joint = math.sqrt(prev[1] ** 2 + se**2)
                dip = prev[0] - p > n_se * joint
            out.append(SummaryRow(key, p, se, count, dip))
            prev = (p, se)
    return out


def plot_records(table):
    """Long rows for plotting: one point per (curve, d) with a band."""
    recs = []
    for r in table:
        p, se = r.power, r.mc_se
        recs.append({
            "curve": f"{r.scenario}/case{r.case}/w={r.w!r}/{r.method}/beta{r.target}",
            "scenario": r.scenario, "case": r.case, "w": r.w, "method": r.method,
            "target": r.target, "x": r.d, "power": p,
            "lower": max(0.0, p - 1.96 * se), "upper": min(1.0, p + 1.96 * se),
        })
    return recs

