"""Command-line entry point.

Subcommands: simulate, solve, estimate, impute, regress, validate,
pipeline.  Every stochastic subcommand requires a seed (flag or
ACCELMATCH_SEED); artifacts embed their resolved configuration and are
byte-reproducible for a fixed seed, for any worker count.  Exit codes:
1 validation failure, 2 configuration error, 3 numeric failure.
"""

import argparse
import glob
import json
import os
import sys

import pandas as pd

from . import __version__
from ._util import default_workers, dump_json, load_json, read_csv, write_csv
from .correction import impute_corrections
from .errors import AccelmatchError, ConfigurationError, ValidationFailure
from .estimation import EstimationConfig, FirstStageFit, fit_first_stage
from .matching import solve_stable
from .model import load_market, load_matchings, save_market, save_matchings
from .regression import RegressionSpec, linear_combo_test, run_regression
from .synthdata import SimConfig, generate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _meta(subcommand, config):
    return {
        "tool": "accelmatch",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
    }


def _resolve_seed(args):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("ACCELMATCH_SEED")
    if env:
        return int(env)
    raise ConfigurationError("a seed is required: pass --seed or set ACCELMATCH_SEED")


def _ensure_file_target(path, force):
    if os.path.exists(path) and not force:
        raise ConfigurationError(f"{path} exists; pass --force to overwrite")


def _ensure_dir_target(path, force):
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ConfigurationError(f"{path} is not empty; pass --force to overwrite")
    os.makedirs(path, exist_ok=True)


def _load_data_dir(markets_dir, matchings_path=None):
    sub = os.path.join(markets_dir, "markets")
    pattern = os.path.join(sub if os.path.isdir(sub) else markets_dir, "*.json")
    skip = {"matchings.json", "ground_truth.json", "fit.json", "report.json"}
    paths = sorted(p for p in glob.glob(pattern) if os.path.basename(p) not in skip)
    if not paths:
        raise ConfigurationError(f"no market files found under {markets_dir}")
    markets = [load_market(p) for p in paths]
    if matchings_path is None:
        matchings_path = os.path.join(markets_dir, "matchings.json")
    if not os.path.exists(matchings_path):
        raise ConfigurationError(f"matchings file not found: {matchings_path}")
    by_id = load_matchings(matchings_path)
    matchings = []
    for m in markets:
        if m.id not in by_id:
            raise ValidationFailure(f"no observed matching for market {m.id!r}")
        matchings.append(by_id[m.id])
    return markets, matchings


def _write_simulation(sim, out_dir, meta):
    markets_dir = os.path.join(out_dir, "markets")
    os.makedirs(markets_dir, exist_ok=True)
    for market in sim.markets:
        save_market(market, os.path.join(markets_dir, f"market_{market.id}.json"))
    save_matchings(sim.matchings_by_id, os.path.join(out_dir, "matchings.json"), meta=meta)
    write_csv(sim.outcomes, os.path.join(out_dir, "outcomes.csv"), meta=meta)
    dump_json({"meta": meta, **sim.ground_truth}, os.path.join(out_dir, "ground_truth.json"))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args):
    seed = _resolve_seed(args)
    overrides = {"seed": seed}
    if args.config:
        doc = load_json(args.config)
        doc.update(overrides)
        config = SimConfig.from_dict(doc)
    else:
        if args.n_markets is not None:
            overrides["n_markets"] = args.n_markets
        if args.rho is not None:
            overrides["rho"] = args.rho
        if args.sigma is not None:
            overrides["sigma"] = args.sigma
        if args.quota_low is not None or args.quota_high is not None:
            lo = args.quota_low if args.quota_low is not None else 5
            hi = args.quota_high if args.quota_high is not None else 15
            overrides["quota_range"] = (lo, hi)
        config = SimConfig(**overrides)
    _ensure_dir_target(args.out, args.force)
    sim = generate(config)
    meta = _meta("simulate", config.to_dict())
    _write_simulation(sim, args.out, meta)
    print(f"wrote {len(sim.markets)} markets, {len(sim.outcomes)} outcomes to {args.out}")
    return 0


def _cmd_solve(args):
    market = load_market(args.market)
    table = pd.read_csv(args.utilities, comment="#")
    first = table.columns[0]
    table = table.set_index(first)
    try:
        u = table.loc[list(market.accelerator_ids), list(market.startup_ids)].to_numpy(dtype=float)
    except KeyError as exc:
        raise ConfigurationError(f"utility table does not cover {exc}") from None
    matching = solve_stable(market, u)
    _ensure_file_target(args.out, args.force)
    meta = _meta("solve", {"market": args.market, "utilities": args.utilities})
    dump_json({"meta": meta, "matching": dict(matching.assignment)}, args.out)
    print(f"matched {market.n_startups} startups in market {market.id}")
    return 0


def _cmd_estimate(args):
    seed = _resolve_seed(args)
    markets, matchings = _load_data_dir(args.markets, args.matchings)
    coefficients = tuple(args.coefficients.split(",")) if args.coefficients else ()
    initial_beta = json.loads(args.init_beta) if args.init_beta else {}
    config = EstimationConfig(
        seed=seed,
        n_draws=args.draws,
        coefficients=coefficients,
        initial_beta=initial_beta,
        standardize=not args.no_standardize,
    )
    _ensure_file_target(args.out, args.force)
    fit = fit_first_stage(
        markets, matchings, config, n_boot=args.boot, workers=args.workers
    )
    resolved = {
        "markets": args.markets,
        "n_markets": len(markets),
        "draws": args.draws,
        "boot": args.boot,
        "seed": seed,
        "coefficients": list(fit.coefficient_names),
        "standardize": not args.no_standardize,
    }
    dump_json({"meta": _meta("estimate", resolved), **fit.to_dict()}, args.out)
    print(f"log-likelihood {fit.final_loglik:.6f} at")
    for name in fit.coefficient_names:
        se = fit.se.get(name)
        se_text = f" (se {se:.4f})" if se is not None else ""
        print(f"  {name} = {fit.beta_hat[name]:.4f}{se_text}")
    return 0


def _cmd_impute(args):
    doc = load_json(args.fit)
    fit = FirstStageFit.from_dict(doc)
    markets, matchings = _load_data_dir(args.markets, args.matchings)
    if args.fresh_draws:
        seed = _resolve_seed(args)
        n_draws = args.draws if args.draws is not None else fit.n_draws
    else:
        seed = args.seed if args.seed is not None else fit.seed
        n_draws = args.draws if args.draws is not None else fit.n_draws
    _ensure_file_target(args.out, args.force)
    table = impute_corrections(
        markets, matchings, fit.params(), n_draws=n_draws, seed=seed, workers=args.workers
    )
    resolved = {"fit": args.fit, "draws": n_draws, "seed": seed, "fresh_draws": args.fresh_draws}
    write_csv(table.to_frame(), args.out, meta=_meta("impute", resolved))
    ess = [m.ess for m in table.markets]
    print(f"imputed {sum(len(m.startup_ids) for m in table.markets)} corrections; "
          f"min effective sample size {min(ess):.1f}")
    return 0


def _cmd_regress(args):
    seed = _resolve_seed(args)
    doc = load_json(args.spec)
    spec = RegressionSpec.from_dict(doc)
    outcomes = read_csv(args.outcomes)
    corrections = read_csv(args.corrections) if args.corrections else None
    _ensure_file_target(args.out, args.force)
    fit = run_regression(
        outcomes,
        corrections,
        spec,
        n_boot=args.boot,
        seed=seed,
        cluster_by_market=args.cluster_market,
    )
    rows = [
        {"kind": "coefficient", "term": name, "estimate": est, "boot_se": fit.boot_se[name]}
        for name, est in fit.alpha_hat.items()
    ]
    for test in doc.get("tests", []):
        names, weights = list(test["names"]), list(test["weights"])
        est, se = linear_combo_test(fit, names, weights)
        label = " + ".join(
            (f"{w:g}*{n}" if w != 1 else n) for n, w in zip(names, weights)
        )
        rows.append({"kind": "test", "term": label, "estimate": est, "boot_se": se})
    rows.append({"kind": "summary", "term": "n_obs", "estimate": fit.n_obs, "boot_se": ""})
    rows.append({"kind": "summary", "term": "r_squared", "estimate": fit.r_squared, "boot_se": ""})
    rows.append(
        {"kind": "summary", "term": "boot_skipped", "estimate": fit.n_boot_skipped, "boot_se": ""}
    )
    resolved = {
        "spec": spec.to_dict(),
        "boot": args.boot,
        "seed": seed,
        "cluster_by_market": args.cluster_market,
        "fit": args.fit,
    }
    write_csv(pd.DataFrame(rows), args.out, meta=_meta("regress", resolved))
    print(f"fit {spec.outcome} on {fit.n_obs} observations, R^2 {fit.r_squared:.3f}")
    return 0


def _cmd_validate(args):
    from .validation import run_validation_suite

    seed = _resolve_seed(args)
    report = run_validation_suite(seed=seed, tiny=args.tiny, workers=args.workers)
    if args.out:
        _ensure_file_target(args.out, args.force)
        dump_json({"meta": _meta("validate", {"seed": seed, "tiny": args.tiny}), **report}, args.out)
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}: {check['detail']}")
    if not report["all_passed"]:
        raise ValidationFailure("oracle validation suite failed")
    print("all oracle checks passed")
    return 0


def _cmd_pipeline(args):
    seed = _resolve_seed(args)
    _ensure_dir_target(args.out, args.force)
    sim_config = SimConfig(
        seed=seed,
        n_markets=args.n_markets,
        quota_range=(args.quota_low, args.quota_high),
        rho=args.rho,
        sigma=args.sigma,
    )
    sim = generate(sim_config)
    meta = _meta("pipeline", {"seed": seed, "sim": sim_config.to_dict(),
                              "draws": args.draws, "boot": args.boot})
    _write_simulation(sim, args.out, meta)

    coefficient_names = tuple(sim_config.beta_true)
    est_config = EstimationConfig(seed=seed, n_draws=args.draws, coefficients=coefficient_names)
    fit = fit_first_stage(
        sim.markets, sim.matchings, est_config, n_boot=args.boot, workers=args.workers
    )
    dump_json({"meta": meta, **fit.to_dict()}, os.path.join(args.out, "fit.json"))

    table = impute_corrections(
        sim.markets, sim.matchings, fit.params(),
        n_draws=args.draws, seed=seed, workers=args.workers,
    )
    write_csv(table.to_frame(), os.path.join(args.out, "corrections.csv"), meta=meta)

    spec = RegressionSpec(
        outcome=args.outcome,
        regressors=coefficient_names,
        include_correction=True,
        fixed_effects=("cohort_year", "industry"),
    )
    reg = run_regression(sim.outcomes, table.to_frame(), spec, n_boot=args.boot, seed=seed)
    reg_rows = [
        {"kind": "coefficient", "term": n, "estimate": e, "boot_se": reg.boot_se[n]}
        for n, e in reg.alpha_hat.items()
    ]
    write_csv(pd.DataFrame(reg_rows), os.path.join(args.out, "table.csv"), meta=meta)

    recovery = [
        {
            "coefficient": name,
            "truth": sim_config.beta_true[name],
            "estimate": fit.beta_hat[name],
            "boot_se": fit.se.get(name),
            "abs_error": abs(fit.beta_hat[name] - sim_config.beta_true[name]),
        }
        for name in coefficient_names
    ]
    report = {
        "meta": meta,
        "first_stage": {
            "recovery": recovery,
            "final_loglik": fit.final_loglik,
            "gof_ratio": fit.gof_ratio,
            "pseudo_r2": fit.pseudo_r2,
            "converged": fit.converged,
        },
        "second_stage": {
            "outcome": spec.outcome,
            "correction_slope_truth": sim_config.rho * sim_config.sigma,
            "correction_slope_estimate": reg.alpha_hat.get(spec.correction_name),
            "correction_slope_se": reg.boot_se.get(spec.correction_name),
            "r_squared": reg.r_squared,
        },
    }
    dump_json(report, os.path.join(args.out, "report.json"))

    lines = ["first-stage recovery (truth vs estimate):"]
    for row in recovery:
        se = row["boot_se"]
        lines.append(
            f"  {row['coefficient']:<18} {row['truth']:+8.3f}  {row['estimate']:+8.3f}"
            + (f"  (se {se:.3f})" if se is not None else "")
        )
    lines.append(f"fit ratio {fit.gof_ratio:.3f} -> pseudo R^2 {fit.pseudo_r2:.3f}"
                 if fit.gof_ratio is not None else "fit ratio unavailable")
    lines.append(
        f"correction slope: truth {report['second_stage']['correction_slope_truth']:+.3f}, "
        f"estimate {report['second_stage']['correction_slope_estimate']:+.3f}"
    )
    text = "\n".join(lines)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="accelmatch", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="random seed (or set ACCELMATCH_SEED)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--workers", type=int, default=default_workers(),
                       help="worker processes (results do not depend on this)")

    p = sub.add_parser("simulate", help="generate synthetic markets with known ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="SimConfig JSON file")
    p.add_argument("--n-markets", type=int, default=None)
    p.add_argument("--quota-low", type=int, default=None)
    p.add_argument("--quota-high", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve", help="stable matching for a market and a utility table")
    p.add_argument("--market", required=True, help="market JSON file")
    p.add_argument("--utilities", required=True,
                   help="CSV: first column accelerator id, one column per startup id")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("estimate", help="first-stage simulated maximum likelihood")
    p.add_argument("--markets", required=True, help="data directory")
    p.add_argument("--matchings", default=None, help="matchings JSON (default: <dir>/matchings.json)")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--boot", type=int, default=500)
    p.add_argument("--coefficients", default=None, help="comma-separated covariate names")
    p.add_argument("--init-beta", default=None, help="JSON dict of starting values")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--out", required=True, help="fit JSON path")
    add_common(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("impute", help="correction terms for every matched pair")
    p.add_argument("--markets", required=True)
    p.add_argument("--matchings", default=None)
    p.add_argument("--fit", required=True, help="fit JSON from estimate")
    p.add_argument("--draws", type=int, default=None, help="default: as in the fit")
    p.add_argument("--fresh-draws", action="store_true",
                   help="draw new noise instead of reusing the estimation draws")
    p.add_argument("--out", required=True, help="corrections CSV path")
    add_common(p)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("regress", help="second-stage outcome regression")
    p.add_argument("--outcomes", required=True, help="outcomes CSV")
    p.add_argument("--corrections", default=None, help="corrections CSV")
    p.add_argument("--spec", required=True, help="regression spec JSON")
    p.add_argument("--fit", default=None, help="fit JSON recorded for provenance")
    p.add_argument("--boot", type=int, default=500)
    p.add_argument("--cluster-market", action="store_true",
                   help="resample whole markets instead of observations")
    p.add_argument("--out", required=True, help="result table CSV")
    add_common(p)
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("validate", help="run the brute-force oracle suite")
    p.add_argument("--tiny", action="store_true", help="reduced sizes, a few minutes")
    p.add_argument("--out", default=None, help="optional report JSON")
    add_common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("pipeline", help="simulate, estimate, impute, regress, report")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-markets", type=int, default=37)
    p.add_argument("--quota-low", type=int, default=5)
    p.add_argument("--quota-high", type=int, default=15)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--boot", type=int, default=50)
    p.add_argument("--outcome", default="funded")
    add_common(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except AccelmatchError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ValidationFailure) and exc.violations:
            payload["violations"] = exc.violations
        print(json.dumps(payload), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
