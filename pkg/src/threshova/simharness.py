"""Reproduction studies: power curves, unbalanced Tukey comparison, grouped
selection under the quantile universal threshold, and the stool-effort data."""
from __future__ import annotations

import csv
import functools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import rng as _rng
from .anova_tests import TukeySampler, general_anova_test
from .calibration import closed_form_threshold_oneway, monte_carlo_threshold, qut_alpha
from .distributions import std_normal_quantile
from .design import Block, DesignSpec, RescalePolicy, ThresholdMode, encode_factor, factor_levels, pairs
from .errors import IngestionError, ThreshovaError
from .modelspec import read_csv
from .power import TESTS, Alternative, analytic_power, mc_power, power_setup
from .thresholding import SolverConfig
from .variance import SigmaEstimator

POWER_GRID = tuple(np.round(np.arange(0.0, 2.0 + 1e-9, 0.25), 2))
TUKEY_GRID = tuple(np.round(np.arange(0.0, 6.0 + 1e-9, 0.5), 2))
TUKEY_COUNTS = (1, 5, 9, 10, 10)


# -- studentized range oracle ------------------------------------------------

@functools.lru_cache(maxsize=None)
def studentized_range_oracle(T, df, alpha=0.05, draws=1_000_000, seed=0):
    """Upper alpha quantile of ``range(Z_1..Z_T) / sqrt(chi2_df / df)`` by direct simulation."""
    def chunk(gen, size, _i):
        Z = gen.standard_normal((size, T))
        s = np.sqrt(gen.chisquare(df, size) / df)
        return np.ptp(Z, axis=1) / s

    sample = np.concatenate(_rng.map_chunks(chunk, draws, seed, _rng.ORACLE, 1, chunk_size=100_000))
    return float(np.quantile(sample, 1.0 - alpha))


# -- power figure ------------------------------------------------------------

def run_power_figure(T=5, R=10, alpha=0.05, theta_grid=POWER_GRID, reps=2000, seed=0, K=10_000, stage1_K=10_000,
                     threads=None):
    """Rows ``(theta, test, alternative, power, se)``: analytic curves and Monte Carlo dots."""
    rows = []
    lam = {m: closed_form_threshold_oneway(T, R, alpha, m) for m in ("block", "coordinate")}
    setups = {t: power_setup(t, T, R, alpha, None, K, stage1_K, seed, threads) for t in TESTS}
    for kind in ("dense", "sparse"):
        for theta in theta_grid:
            alt = Alternative(kind, float(theta))
            for m in ("block", "coordinate"):
                rows.append((float(theta), f"{m}-analytic", kind, analytic_power(m, alt, T, R, lam[m]), 0.0))
            for t in TESTS:
                p, se = mc_power(t, alt, T, R, alpha, reps, seed, threads=threads, setup=setups[t])
                rows.append((float(theta), t, kind, p, se))
    return rows


# -- unbalanced Tukey comparison ---------------------------------------------

def run_tukey_study(theta_grid=TUKEY_GRID, counts=TUKEY_COUNTS, reps=2000, alpha=0.05, seed=0, K=10_000,
                    oracle_draws=1_000_000, threads=None):
    """Exact thresholding test vs the interval (Tukey-Kramer) test under ``theta (1, 0, ..., 0)``.

    The interval test covers ``mu_t - mu_t'`` by ``ybar_t - ybar_t' +/- q sigma_hat d / sqrt(2)``
    with ``q`` the balanced studentized-range quantile on ``N - T`` degrees of freedom, so a
    pair is declared when ``|ybar_t - ybar_t'| / (d sigma_hat) > q / sqrt(2)``.
    """
    if any(t < 0 or t > 6 for t in theta_grid):
        raise ValueError("theta grid must lie within [0, 6]")
    counts = tuple(int(c) for c in counts)
    sampler = TukeySampler(counts, seed)
    lam = monte_carlo_threshold(sampler, alpha, K, threads).lambda_alpha
    q = studentized_range_oracle(len(counts), sum(counts) - len(counts), alpha, oracle_draws, seed)
    lam_interval = q / math.sqrt(2.0)
    first = np.array([i == 0 for i, _ in pairs(len(counts))])
    group = np.repeat(np.arange(len(counts)), counts)

    rows = []
    for k, theta in enumerate(theta_grid):
        mean = np.where(group == 0, float(theta), 0.0)

        def chunk(gen, size, _i):
            z, s = sampler.parts(mean + gen.standard_normal((size, group.size)))
            t = np.abs(z) / s[:, None]
            return np.stack([t > lam, t > lam_interval])

        hits = np.concatenate(_rng.map_chunks(chunk, reps, seed + k, _rng.STUDY, threads), axis=1)
        power = hits.any(axis=2).mean(axis=1)
        det = hits[:, :, first].sum(axis=2)
        rows.append({
            "theta": float(theta),
            "power_threshold": float(power[0]),
            "se_threshold": _binom_se(power[0], reps),
            "power_interval": float(power[1]),
            "se_interval": _binom_se(power[1], reps),
            "pct_increase": float(100.0 * (power[0] - power[1]) / power[1]) if power[1] > 0 else None,
            "detections_threshold": float(det[0].mean()),
            "se_detections_threshold": float(det[0].std(ddof=1) / math.sqrt(reps)),
            "detections_interval": float(det[1].mean()),
            "se_detections_interval": float(det[1].std(ddof=1) / math.sqrt(reps)),
        })
    return {"lambda": lam, "studentized_range_q": q, "interval_lambda": lam_interval, "rows": rows}


def _binom_se(p, n):
    return float(math.sqrt(p * (1.0 - p) / n))


# -- grouped selection study ---------------------------------------------------

@dataclass(frozen=True)
class YuanLinModel:
    kind: str = "III"
    n: int = 100
    noise_sd: float = 2.0

    def __post_init__(self):
        if self.kind not in ("III", "IV"):
            raise ValueError(f"model must be 'III' or 'IV', got {self.kind!r}")

    @property
    def n_factors(self):
        return 16 if self.kind == "III" else 20

    @property
    def n_continuous(self):
        return 16 if self.kind == "III" else 10


LOW, HIGH = std_normal_quantile(1.0 / 3.0), std_normal_quantile(2.0 / 3.0)


def trichotomize(x):
    """Level 0 below the lower tercile, 1 above the upper tercile, 2 in between."""
    return np.where(x < LOW, 0, np.where(x > HIGH, 1, 2))


def generate_yuanlin(model, gen):
    """Grouped design (list of column blocks), response and true coefficients per group."""
    Q, n = model.n_factors, model.n
    Z = gen.standard_normal((n, Q))
    W = gen.standard_normal((n, 1))
    F = (Z + W) / math.sqrt(2.0)
    groups, theta = [], []
    for i in range(Q):
        x = F[:, i]
        if i < model.n_continuous:
            groups.append(np.column_stack([x, x**2, x**3]))
            theta.append(np.zeros(3))
        else:
            lv = trichotomize(x)
            groups.append(np.column_stack([lv == 0, lv == 1]).astype(float))
            theta.append(np.zeros(2))
    theta[2] = np.array([1.0, 1.0, 1.0])
    theta[5] = np.array([2.0 / 3.0, -1.0, 1.0 / 3.0])
    if model.kind == "IV":
        theta[10] = np.array([2.0, 1.0])
    mu = sum(g @ t for g, t in zip(groups, theta))
    y = mu + model.noise_sd * gen.standard_normal(n)
    return groups, y, theta


@dataclass
class StudyReport:
    model: str
    runs: int
    seed: int
    estimators: dict
    failures: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _summaries(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
    return float(v.mean()), se


def _least_squares(groups, y):
    Xc = np.hstack(groups)
    Xc = Xc - Xc.mean(axis=0)
    coef, *_ = np.linalg.lstsq(np.column_stack([np.ones(len(y)), Xc]), y, rcond=None)
    return np.split(coef[1:], np.cumsum([g.shape[1] for g in groups])[:-1])


def _sbite_qut(groups, y, K, seed):
    Q = len(groups)
    alpha = qut_alpha(Q)
    blocks = [Block(f"X{i + 1}", g - g.mean(axis=0), ThresholdMode.BLOCK) for i, g in enumerate(groups)]
    spec = DesignSpec(np.ones((len(y), 1)), blocks, y)
    P = sum(g.shape[1] for g in groups)
    sigma = SigmaEstimator.mad() if P >= len(y) else SigmaEstimator.unbiased()
    out = general_anova_test(spec, alpha, sigma, K, seed, RescalePolicy.QUANTILE, K, SolverConfig(), threads=1)
    return [out.coefficients[b.name] for b in blocks]


ESTIMATORS = ("LeastSquares", "SbiteQut")


def run_yuanlin_study(model=YuanLinModel(), runs=200, estimators=("LeastSquares", "SbiteQut"), seed=0, K=10_000,
                      threads=None):
    """Average selected-group count and model errors over ``runs`` simulated data sets.

    Model error on theta is ``||theta_hat - theta||^2``; on X theta it is
    ``||X_c (theta_hat - theta)||^2 / n`` with the column-centered design.
    """
    if runs < 10:
        raise ValueError(f"need runs >= 10, got {runs}")
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}; expected {sorted(ESTIMATORS)}")

    def one(gen, r):
        groups, y, theta = generate_yuanlin(model, gen)
        Xc = np.hstack(groups)
        Xc = Xc - Xc.mean(axis=0)
        res = {}
        for name in estimators:
            try:
                est = _least_squares(groups, y) if name == "LeastSquares" else _sbite_qut(groups, y, K, seed)
            except ThreshovaError as exc:
                res[name] = {"error": f"{type(exc).__name__}: {exc}"}
                continue
            diff = np.concatenate(est) - np.concatenate(theta)
            res[name] = {
                "selected": int(sum(bool(np.any(e != 0)) for e in est)),
                "error_theta": float(diff @ diff),
                "error_xtheta": float(np.sum((Xc @ diff) ** 2) / model.n),
            }
        return res

    per_run = _rng.map_items(one, runs, seed, _rng.STUDY, threads)
    summary, failures = {}, []
    for name in estimators:
        ok = [r[name] for r in per_run if "error" not in r[name]]
        failures += [{"run": i, "estimator": name, "error": r[name]["error"]}
                     for i, r in enumerate(per_run) if "error" in r[name]]
        entry = {"completed": len(ok)}
        for key in ("selected", "error_theta", "error_xtheta"):
            entry[key], entry[f"{key}_se"] = _summaries([o[key] for o in ok])
        entry["selected_min"] = min((o["selected"] for o in ok), default=None)
        entry["selected_max"] = max((o["selected"] for o in ok), default=None)
        summary[name] = entry
    return StudyReport(model.kind, runs, seed, summary, failures)


# -- stool-effort data ---------------------------------------------------------

ERGOSTOOL_COLUMNS = ("effort", "Type", "Subject")


def load_ergostool(path=None):
    """Load the 36-row stool-effort table (bundled copy by default)."""
    if path is None:
        with resources.as_file(resources.files("threshova") / "data" / "ergostool.csv") as p:
            table = read_csv(p)
    else:
        table = read_csv(path)
    for c in ERGOSTOOL_COLUMNS:
        table.column(c)
    table.numeric("effort")
    if table.n_rows != 36:
        raise IngestionError(f"{table.path}: expected 36 data rows, got {table.n_rows}")
    return table


def ergostool_design(table):
    types = table.column("Type")
    subjects = table.column("Subject")
    tl, sl = factor_levels(types), factor_levels(subjects)
    blocks = [
        Block("type", encode_factor(types, tl), ThresholdMode.COORDINATE, tuple(f"Type={v}" for v in tl)),
        Block("subject", encode_factor(subjects, sl), ThresholdMode.BLOCK, tuple(f"Subject={v}" for v in sl)),
    ]
    return DesignSpec(np.ones((table.n_rows, 1)), blocks, table.numeric("effort"))


def run_ergostool(path=None, alpha=0.05, K=100_000, seed=0, threads=None):
    """General test on the stool data and its coefficient table ``(effect, term, estimate)``."""
    spec = ergostool_design(load_ergostool(path))
    out = general_anova_test(spec, alpha, SigmaEstimator.unbiased(), K, seed, RescalePolicy.QUANTILE, K,
                             threads=threads)
    rows = [("fixed", "intercept", float(out.nuisance[0]))]
    rows += [("fixed", lbl, float(v)) for lbl, v in zip(out.labels["type"], out.coefficients["type"])]
    rows += [("random", lbl, float(v)) for lbl, v in zip(out.labels["subject"], out.coefficients["subject"])]
    return out, rows


# -- output ------------------------------------------------------------------

def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in (r.values() if isinstance(r, dict) else r)])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
