"""Repeated forgetting experiments and observation-driven diagnostics.

An experiment simulates observation records from a generating model
(which may differ from the filtering model — misspecification is just a
different generator), runs the filter twice from two initial laws on each
record, and summarizes how fast their total variation distance decays.

Rate fits are least-squares slopes of log tv(n) over the second half of
the horizon; steps where tv has underflowed below ``TV_FLOOR`` carry no
rate information and are skipped.

Everything is reproducible from (seed, replication): replication r only
ever touches the streams keyed (seed, r, .), and reductions across
replications happen in a fixed order regardless of the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import (BoundConfig, LDSet, check_conditions, geometric_bound,
                     indicator_K, log_psi_batch, log_upsilon_batch, phi)
from .gridfilter import run_two_filters, transition_kernel
from .grids import GridSpec, InitialDistribution
from .models import FiniteStateModel, simulate

DEFAULT_GRID_M = 400
TV_FLOOR = 1e-14


@dataclass
class ExperimentConfig:
    """Filtering model, generating model, initial laws and run lengths."""

    model: object
    star_model: object
    nu: InitialDistribution
    nu_prime: InitialDistribution
    nu_star: InitialDistribution
    n: int
    replications: int
    seed: int
    grid: GridSpec | None = None
    bound_cfg: BoundConfig | None = None
    ld_set: LDSet | None = None  # contraction set C for the geometric bound
    threads: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("horizon must be >= 1")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.threads < 1:
            raise ValueError("thread count must be >= 1")
        if (self.bound_cfg is None) != (self.ld_set is None):
            raise ValueError("bound_cfg and ld_set must be given together")


def resolve_grid(model, grid: GridSpec | None) -> GridSpec | None:
    if isinstance(model, FiniteStateModel):
        return None
    if grid is not None:
        return grid
    lo, hi = model.domain
    return GridSpec(lo, hi, DEFAULT_GRID_M)


def fit_rate(tv) -> float:
    """Slope of log tv(n) against n over the window [n/2, n].

    Floored steps (tv <= TV_FLOOR) are excluded; if the window retains
    fewer than two informative points the fit falls back to the full range,
    and a record with no informative points at all (identical filters)
    gets the sentinel -inf.
    """
    tv = np.asarray(tv, dtype=float)
    n = len(tv) - 1
    window = np.arange(max(n // 2, 1), n + 1)
    usable = window[tv[window] > TV_FLOOR]
    if len(usable) < 2:
        everything = np.arange(1, n + 1)
        usable = everything[tv[everything] > TV_FLOOR]
    if len(usable) < 2:
        return -np.inf
    slope = np.polyfit(usable, np.log(tv[usable]), 1)[0]
    return float(slope)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tv: np.ndarray                  # (replications, n + 1)
    logZ_nu: np.ndarray
    logZ_nu_prime: np.ndarray
    rates: np.ndarray               # (replications,)
    bound_totals: np.ndarray | None = None
    bound_applies: np.ndarray | None = None
    conditions: list = field(default_factory=list)

    @property
    def median_rate(self) -> float:
        return float(np.median(self.rates))

    @property
    def rate_iqr(self) -> tuple[float, float]:
        q1, q3 = np.percentile(self.rates, [25, 75])
        return float(q1), float(q3)


def _map_ordered(fn, items, threads):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_forgetting(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate, filter twice per record, and fit per-replication rates."""
    grid = resolve_grid(cfg.model, cfg.grid)

    def one(rep):
        traj = simulate(cfg.star_model, cfg.n, cfg.nu_star, cfg.seed, rep)
        records = run_two_filters(cfg.model, grid, cfg.nu, cfg.nu_prime, traj.obs)
        tv = np.array([r[1] for r in records])
        za = np.array([r[2] for r in records])
        zb = np.array([r[3] for r in records])
        extra = None
        if cfg.bound_cfg is not None:
            report = geometric_bound(cfg.model, cfg.nu, cfg.nu_prime, traj.obs,
                                     cfg.bound_cfg, cfg.ld_set, grid=grid)
            cond = check_conditions(traj.obs, cfg.model, cfg.bound_cfg)
            extra = (report.total_clipped, report.applies, cond)
        return tv, za, zb, extra

    results = _map_ordered(one, range(cfg.replications), cfg.threads)
    tv = np.stack([r[0] for r in results])
    logZ_nu = np.stack([r[1] for r in results])
    logZ_nu_prime = np.stack([r[2] for r in results])
    rates = np.array([fit_rate(row) for row in tv])
    out = ExperimentResult(config=cfg, tv=tv, logZ_nu=logZ_nu,
                           logZ_nu_prime=logZ_nu_prime, rates=rates)
    if cfg.bound_cfg is not None:
        out.bound_totals = np.stack([r[3][0] for r in results])
        out.bound_applies = np.stack([r[3][1] for r in results])
        out.conditions = [r[3][2] for r in results]
    return out


def misspecification_study(cfg: ExperimentConfig) -> ExperimentResult:
    """Forgetting run where the generator differs from the filtering model."""
    if cfg.star_model is cfg.model:
        raise ValueError("a misspecification study needs a distinct generating model")
    return run_forgetting(cfg)


# ---------------------------------------------------------------------------
# Empirical tail frequencies of the bound's observation-driven events


@dataclass
class RSequenceResult:
    """Empirical frequencies, over replications, of the four rare events
    controlling the observation-driven bound at each horizon."""

    ns: np.ndarray
    r0_nu: np.ndarray        # initial two-step mass below exp(-M0 n)
    r0_nu_prime: np.ndarray
    r1: np.ndarray           # cumulative log-envelope above M1 n
    r2: np.ndarray           # cumulative log denominator mass below -M2 n
    r3: np.ndarray           # K-visit frequency below (1 + gamma)/2
    thresholds: dict = field(default_factory=dict)


def dyadic_horizons(n_max: int) -> np.ndarray:
    ns = []
    n = 4
    while n <= n_max:
        ns.append(n)
        n *= 2
    if not ns or ns[-1] != n_max:
        ns.append(n_max)
    return np.array(ns)


def estimate_r_sequences(cfg: ExperimentConfig) -> RSequenceResult:
    """Monte Carlo estimates of the four event frequencies on a dyadic grid."""
    if cfg.bound_cfg is None:
        raise ValueError("r-sequence estimation needs a bound configuration")
    b = cfg.bound_cfg
    grid = resolve_grid(cfg.model, cfg.grid)
    kernel = None
    if not isinstance(cfg.model, FiniteStateModel):
        kernel = transition_kernel(cfg.model, grid)
    ns = dyadic_horizons(cfg.n)

    def one(rep):
        traj = simulate(cfg.star_model, cfg.n, cfg.nu_star, cfg.seed, rep)
        obs = traj.obs
        with np.errstate(divide="ignore"):
            lphi = np.log(phi(cfg.model, cfg.nu, b.D, obs[0], obs[1], grid, kernel))
            lphi2 = np.log(phi(cfg.model, cfg.nu_prime, b.D, obs[0], obs[1], grid, kernel))
        cum_ups = np.cumsum(log_upsilon_batch(cfg.model, "all", obs))
        cum_psi = np.cumsum(log_psi_batch(cfg.model, b.D, obs))
        cum_k = np.cumsum(indicator_K(b.K, obs))
        k0 = indicator_K(b.K, obs[:1])[0]
        e0 = lphi <= -b.M0 * ns
        e0p = lphi2 <= -b.M0 * ns
        e1 = cum_ups[ns] >= b.M1 * ns
        e2 = cum_psi[ns] <= -b.M2 * ns
        e3 = (cum_k[ns] - k0) / ns <= (1.0 + b.gamma) / 2.0
        return np.stack([e0, e0p, e1, e2, e3])

    events = _map_ordered(one, range(cfg.replications), cfg.threads)
    freq = np.mean(np.stack(events).astype(float), axis=0)
    return RSequenceResult(
        ns=ns, r0_nu=freq[0], r0_nu_prime=freq[1], r1=freq[2], r2=freq[3],
        r3=freq[4],
        thresholds={"M0": b.M0, "M1": b.M1, "M2": b.M2, "gamma": b.gamma},
    )


# ---------------------------------------------------------------------------
# Report emission


def emit_report(result: ExperimentResult, out_dir: str,
                r_seq: RSequenceResult | None = None) -> None:
    """Write the deterministic CSV/text outputs of an experiment."""
    from . import reports

    reports.ensure_dir(out_dir)
    import os

    reps, steps = result.tv.shape
    rows = [(rep, n, result.tv[rep, n], result.logZ_nu[rep, n],
             result.logZ_nu_prime[rep, n])
            for rep in range(reps) for n in range(steps)]
    reports.write_csv(os.path.join(out_dir, "tv_curves.csv"),
                      ["rep", "n", "tv", "logZ_nu", "logZ_nuprime"], rows)
    reports.write_csv(os.path.join(out_dir, "rates.csv"), ["rep", "rate"],
                      [(rep, result.rates[rep]) for rep in range(reps)])
    if result.bound_totals is not None:
        rows = [(rep, n, result.bound_totals[rep, n], result.bound_applies[rep, n])
                for rep in range(reps) for n in range(steps)]
        reports.write_csv(os.path.join(out_dir, "bound.csv"),
                          ["rep", "n", "total_clipped", "applies"], rows)
        rows = [(rep, c.avg_k_frequency[-1], c.avg_log_upsilon[-1],
                 c.avg_log_psi[-1], c.all_ok)
                for rep, c in enumerate(result.conditions)]
        reports.write_csv(os.path.join(out_dir, "conditions.csv"),
                          ["rep", "avg_k_frequency", "avg_log_upsilon",
                           "avg_log_psi", "all_ok"], rows)
    if r_seq is not None:
        rows = zip(r_seq.ns, r_seq.r0_nu, r_seq.r0_nu_prime, r_seq.r1,
                   r_seq.r2, r_seq.r3)
        reports.write_csv(os.path.join(out_dir, "r_seq.csv"),
                          ["n", "r0_nu", "r0_nuprime", "r1", "r2", "r3"], rows)
    q1, q3 = result.rate_iqr
    cfg = result.config
    lines = [
        f"model: {cfg.model.kind}",
        f"generator: {cfg.star_model.kind}",
        f"horizon: {cfg.n}",
        f"replications: {cfg.replications}",
        f"seed: {cfg.seed}",
        f"median_rate: {reports.fmt(result.median_rate)}",
        f"rate_iqr: [{reports.fmt(q1)}, {reports.fmt(q3)}]",
    ]
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
