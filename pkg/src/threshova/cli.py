"""Command-line interface.

Exit codes: 0 success (whatever the test decision), 2 usage, configuration
or input errors, 3 numerical failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anova_tests import general_anova_test, prepare_general, tukey_threshold_test
from .calibration import NullSampler, closed_form_threshold_oneway, monte_carlo_threshold, qut_alpha
from .design import Basis, RescalePolicy, factor_levels, pairs
from . import simharness as sh
from .errors import ConfigurationError, NumericalError, ThreshovaError
from .modelspec import load_model_spec, read_csv

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 2, 3
STUDIES = ("power", "tukey", "yuanlin", "ergostool")


def _dump(payload):
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args):
    spec = load_model_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.reps is not None:
        spec.mc_reps = args.reps
    if args.alpha is not None:
        spec.alpha = args.alpha
    return spec, spec.build()


def _prepare(spec, design, alpha, threads):
    return prepare_general(design, alpha, spec.rescale, spec.rescale_reps or spec.mc_reps, spec.seed, threads,
                           spec.basis)


def cmd_test(args):
    spec, design = _load(args)
    out = general_anova_test(design, spec.alpha, spec.sigma, spec.mc_reps, spec.seed, spec.rescale,
                             spec.rescale_reps or spec.mc_reps, spec.solver, args.threads, spec.basis)
    payload = out.to_dict()
    payload["sigma_estimator"] = spec.sigma.describe()
    _emit(_dump(payload), args.out)


def _closed_form_case(spec, design):
    """``(T, R, mode)`` when the model spec is a balanced one-way layout the closed forms cover."""
    if len(spec.blocks) != 1 or "factor" not in spec.blocks[0]:
        raise ConfigurationError("--closed-form-check needs exactly one factor block")
    if design.A is not None:
        raise ConfigurationError("--closed-form-check needs an empty nuisance list (known mean)")
    if spec.rescale is not RescalePolicy.NONE or spec.basis is not Basis.RAW:
        raise ConfigurationError("--closed-form-check needs \"rescale\": \"none\" and \"basis\": \"raw\"")
    if spec.sigma.kind != "known":
        raise ConfigurationError("--closed-form-check needs a known sigma")
    X = design.blocks[0].X
    counts = X.sum(axis=0)
    if not np.all(counts == counts[0]):
        raise ConfigurationError(f"--closed-form-check needs a balanced factor, got counts {counts.astype(int).tolist()}")
    return X.shape[1], int(counts[0]), design.blocks[0].mode


def cmd_calibrate(args):
    spec, design = _load(args)
    alpha = qut_alpha(len(design.blocks)) if args.qut else spec.alpha
    case = _closed_form_case(spec, design) if args.closed_form_check else None
    prepared = _prepare(spec, design, alpha, args.threads)
    cal = monte_carlo_threshold(NullSampler(prepared, spec.sigma, spec.seed), alpha, spec.mc_reps, args.threads)
    payload = cal.to_dict()
    payload["qut"] = bool(args.qut)
    payload["n_blocks"] = len(design.blocks)
    payload["sigma_estimator"] = spec.sigma.describe()
    payload["scales"] = {b.name: float(b.scale) for b in prepared.blocks}
    if case:
        T, R, mode = case
        # the closed forms use unit noise; the null pivot here is in the same units
        exact = closed_form_threshold_oneway(T, R, alpha, mode)
        payload["closed_form"] = {"T": T, "R": R, "mode": mode.value, "lambda": exact,
                                  "relative_gap": (cal.lambda_alpha - exact) / exact}
    _emit(_dump(payload), args.out)


def cmd_tukey(args):
    table = read_csv(args.data)
    y = table.numeric(args.response)
    groups = table.column(args.group)
    out = tukey_threshold_test(y, groups, args.alpha, args.reps, args.seed, args.threads)
    levels = factor_levels(groups)
    labels = np.array(groups)
    means = [float(y[labels == lv].mean()) for lv in levels]
    rows = [
        {"pair": name, "difference": means[t] - means[u],
         "detected": bool(out.detections["pairs"]["coords"][k]), "estimate": float(out.coefficients["pairs"][k])}
        for k, (name, (t, u)) in enumerate(zip(out.labels["pairs"], pairs(len(levels))))
    ]
    if args.format == "csv":
        lines = ["pair,difference,detected,estimate"]
        lines += [f"{r['pair']},{r['difference']!r},{str(r['detected']).lower()},{r['estimate']!r}" for r in rows]
        _emit("\n".join(lines) + "\n", args.out)
        return
    full = out.to_dict()
    payload = {key: full[key] for key in ("reject", "statistic", "threshold", "p_value", "alpha", "seed", "sigma_hat",
                                          "calibration")}
    payload["pairs"] = rows
    _emit(_dump(payload), args.out)


def cmd_study(args):
    out = Path(args.out or f"study-{args.name}")
    params = {"seed": args.seed}
    with sh.Stopwatch() as sw:
        if args.name == "power":
            params.update(reps=args.reps or 2000, K=args.K or 10_000, T=5, R=10, alpha=args.alpha or 0.05)
            rows = sh.run_power_figure(params["T"], params["R"], params["alpha"], reps=params["reps"],
                                       seed=args.seed, K=params["K"], stage1_K=params["K"], threads=args.threads)
            sh.write_csv(out / "power.csv", ("theta", "test", "alternative", "power", "se"), rows)
            outputs = ["power.csv"]
        elif args.name == "tukey":
            params.update(reps=args.reps or 2000, K=args.K or 10_000, counts=list(sh.TUKEY_COUNTS),
                          alpha=args.alpha or 0.05, oracle_draws=1_000_000)
            res = sh.run_tukey_study(reps=params["reps"], alpha=params["alpha"], seed=args.seed, K=params["K"],
                                     threads=args.threads)
            sh.write_csv(out / "tukey.csv", list(res["rows"][0]), res["rows"])
            params.update(lambda_threshold=res["lambda"], studentized_range_q=res["studentized_range_q"])
            outputs = ["tukey.csv"]
        elif args.name == "yuanlin":
            params.update(model=args.model, runs=args.runs or 200, K=args.K or 10_000, n=100, noise_sd=2.0)
            rep = sh.run_yuanlin_study(sh.YuanLinModel(args.model), params["runs"], seed=args.seed, K=params["K"],
                                       threads=args.threads)
            rows = [[name] + [e[k] for k in _YL_KEYS] for name, e in rep.estimators.items()]
            sh.write_csv(out / "yuanlin.csv", ["estimator"] + list(_YL_KEYS), rows)
            sh.write_json(out / "report.json", rep.to_dict())
            outputs = ["yuanlin.csv", "report.json"]
        else:
            params.update(K=args.K or 100_000, alpha=args.alpha or 0.05)
            res, rows = sh.run_ergostool(args.data, params["alpha"], params["K"], args.seed, args.threads)
            sh.write_csv(out / "ergostool.csv", ("effect", "term", "estimate"), rows)
            sh.write_json(out / "outcome.json", res.to_dict())
            outputs = ["ergostool.csv", "outcome.json"]
    sh.write_json(out / "metadata.json", {"study": args.name, "version": __version__, "parameters": params,
                                          "outputs": outputs})
    sh.write_json(out / "timing.json", {"runtime_seconds": sw.seconds})


_YL_KEYS = ("completed", "selected", "selected_se", "selected_min", "selected_max", "error_theta", "error_theta_se",
            "error_xtheta", "error_xtheta_se")


def _probability(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="threshova", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive, default=None,
                        help="worker threads (default: $THRESHOVA_THREADS or 1); results do not depend on it")
    common.add_argument("--out", help="output file (directory for 'study'); default stdout")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", parents=[common], help="run the thresholding test described by a JSON model spec")
    c = sub.add_parser("calibrate", parents=[common], help="Monte Carlo threshold for a JSON model spec")
    for q in (t, c):
        q.add_argument("spec")
        q.add_argument("--seed", type=_nonneg, default=None, help="overrides the model spec's seed")
        q.add_argument("--reps", type=int, default=None, help="Monte Carlo draws K (overrides mc_reps)")
        q.add_argument("--alpha", type=_probability, default=None)
    c.add_argument("--qut", action="store_true", help="calibrate at the universal level 1/sqrt(pi log Q)")
    c.add_argument("--closed-form-check", action="store_true",
                   help="also report the exact one-way threshold and the relative gap")

    k = sub.add_parser("tukey", parents=[common], help="pairwise comparisons by coordinate thresholding")
    k.add_argument("data")
    k.add_argument("--response", required=True)
    k.add_argument("--group", required=True)
    k.add_argument("--alpha", type=_probability, default=0.05)
    k.add_argument("--seed", type=_nonneg, default=0)
    k.add_argument("--reps", type=int, default=10_000)
    k.add_argument("--format", choices=("json", "csv"), default="json")

    s = sub.add_parser("study", parents=[common], help="reproduction studies writing CSV + JSON to --out")
    s.add_argument("name", choices=STUDIES)
    s.add_argument("--seed", type=_nonneg, default=0)
    s.add_argument("--reps", type=_positive, default=None, help="Monte Carlo replicates per grid point")
    s.add_argument("--runs", type=_positive, default=None, help="simulated data sets (yuanlin)")
    s.add_argument("--model", choices=("III", "IV"), default="III")
    s.add_argument("--K", type=_positive, default=None, help="calibration draws")
    s.add_argument("--alpha", type=_probability, default=None)
    s.add_argument("--data", default=None, help="stool-effort CSV (ergostool; default bundled copy)")
    return p


COMMANDS = {"test": cmd_test, "calibrate": cmd_calibrate, "tukey": cmd_tukey, "study": cmd_study}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"threshova: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ThreshovaError, ValueError) as exc:
        print(f"threshova: error: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
